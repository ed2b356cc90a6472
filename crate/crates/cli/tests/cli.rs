use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use trapal_core::checkpoint::Checkpoint;
use trapal_core::features::{write_labels, FeatureTable};
use trapal_core::synthetic::{Mixture, MixtureSpec};
use trapal_core::EmbeddingNet;

const STRATEGIES: [&str; 7] =
    ["random", "confidence", "margin", "entropy", "informative_diverse", "margin_cluster_mean", "k_center"];

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn trapal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trapal")).args(args).output().expect("run trapal")
}

fn ok(args: &[&str]) -> String {
    let out = trapal(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Runs a command expected to fail and returns its single diagnostic line.
fn fails(args: &[&str]) -> String {
    let out = trapal(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "diagnostic should be one line: {err}");
    err
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

/// Images for the ingest fixture: `a` is red on the left half and blue on the
/// right, `b` is flat green. `c` is never written because its only detection
/// falls below the threshold.
fn write_images(root: &Path) {
    let cam = root.join("cam1");
    std::fs::create_dir_all(&cam).unwrap();
    image::RgbImage::from_fn(40, 20, |x, _| if x < 20 { image::Rgb([255, 0, 0]) } else { image::Rgb([0, 0, 255]) })
        .save(cam.join("a.png"))
        .unwrap();
    image::RgbImage::from_pixel(10, 10, image::Rgb([0, 200, 0])).save(cam.join("b.png")).unwrap();
}

#[test]
fn ingest_matches_golden_files() {
    let tmp = tempfile::tempdir().unwrap();
    write_images(tmp.path());
    let out = tmp.path().join("out");
    let det = fixture("ingest/detections.json");
    let stdout = ok(&["ingest", "--detections", s(&det), "--images", s(tmp.path()), "--out", s(&out), "--crop-side", "16"]);
    assert_eq!(stdout.trim(), "3 images, 1 empty, 3 crops");
    for f in ["crops.csv", "images.csv", "empty.csv"] {
        assert_eq!(read(&out.join(f)), read(&fixture("ingest").join(f)), "{f}");
    }
    let mut crops: Vec<String> = std::fs::read_dir(out.join("crops"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    crops.sort();
    assert_eq!(crops, ["cam1_a_0.png", "cam1_b_0.png", "cam1_b_1.png"]);
    let a = image::open(out.join("crops/cam1_a_0.png")).unwrap().to_rgb8();
    assert_eq!(a.dimensions(), (16, 16));
    assert!(a.pixels().all(|p| p.0 == [255, 0, 0]));
    let b = image::open(out.join("crops/cam1_b_1.png")).unwrap().to_rgb8();
    assert!(b.pixels().all(|p| p.0 == [0, 200, 0]));
}

#[test]
fn threshold_one_marks_every_image_empty() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let det = fixture("ingest/detections.json");
    let stdout = ok(&["ingest", "--detections", s(&det), "--images", s(tmp.path()), "--out", s(&out), "--threshold", "1.0"]);
    assert_eq!(stdout.trim(), "3 images, 3 empty, 0 crops");
    assert_eq!(read(&out.join("empty.csv")), "image_id\ncam1_a\ncam1_b\ncam1_c\n");
    assert_eq!(read(&out.join("crops.csv")), "crop_id,image_id,x,y,w,h,conf\n");
    assert_eq!(std::fs::read_dir(out.join("crops")).unwrap().count(), 0);
}

#[test]
fn ingest_failures_leave_no_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let missing = tmp.path().join("nope.json");
    let err = fails(&["ingest", "--detections", s(&missing), "--images", s(tmp.path()), "--out", s(&out)]);
    assert!(err.contains("nope.json"), "{err}");

    let det = fixture("ingest/detections.json");
    let err = fails(&["ingest", "--detections", s(&det), "--images", s(tmp.path()), "--out", s(&out)]);
    assert!(err.contains("a.png"), "{err}");
    assert!(!out.exists());
    assert_eq!(std::fs::read_dir(tmp.path()).unwrap().count(), 0, "staging directory left behind");

    let err = fails(&["ingest", "--detections", s(&det), "--images", s(tmp.path()), "--out", s(&out), "--threshold", "1.5"]);
    assert!(err.contains("threshold"), "{err}");

    write_images(tmp.path());
    std::fs::create_dir(&out).unwrap();
    let err = fails(&["ingest", "--detections", s(&det), "--images", s(tmp.path()), "--out", s(&out)]);
    assert!(err.contains("already exists"), "{err}");
}

#[test]
fn featurize_reads_every_ingested_crop() {
    let tmp = tempfile::tempdir().unwrap();
    write_images(tmp.path());
    let out = tmp.path().join("out");
    let det = fixture("ingest/detections.json");
    ok(&["ingest", "--detections", s(&det), "--images", s(tmp.path()), "--out", s(&out), "--crop-side", "16"]);
    let feats = tmp.path().join("features.csv");
    ok(&["featurize", "--index", s(&out.join("crops.csv")), "--crops", s(&out.join("crops")), "--out", s(&feats)]);
    let t = FeatureTable::<f64>::read(&feats).unwrap();
    assert_eq!(t.crop_ids, ["cam1_a_0", "cam1_b_0", "cam1_b_1"]);
    assert_eq!(t.features.cols(), 72);
    assert_eq!(&t.features.row(0)[..3], &[1.0, 0.0, 0.0]);
    assert_eq!(t.features.row(1), t.features.row(2));
}

/// Two well separated classes in 6 dimensions, written as features + labels.
fn toy_data(dir: &Path, classes: usize) -> (PathBuf, PathBuf, Vec<usize>) {
    let mix = Mixture::new(MixtureSpec { classes: 2, dim: 6, separation: 3.0, ..MixtureSpec::default() }, 3);
    let (x, y) = mix.sample::<f64>(120, 3, 0);
    let y: Vec<usize> = if classes == 1 { vec![0; y.len()] } else { y };
    let ids: Vec<String> = (0..y.len()).map(|i| format!("t{i}")).collect();
    let feats = dir.join("toy.csv");
    FeatureTable::new(ids.clone(), x).unwrap().write(&feats).unwrap();
    let labels = dir.join("toy_labels.csv");
    let rows: Vec<(String, String)> = ids.into_iter().zip(y.iter().map(|&c| ["cat", "dog"][c].to_owned())).collect();
    write_labels(&labels, &rows).unwrap();
    (feats, labels, y)
}

fn mean_pair_distances(rows: &[Vec<f64>], y: &[usize]) -> (f64, f64) {
    let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let d = rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if y[i] == y[j] {
                intra += d;
                ni += 1;
            } else {
                inter += d;
                nx += 1;
            }
        }
    }
    (intra / ni as f64, inter / nx as f64)
}

fn read_export(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = read(path);
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("crop_id,e0,"));
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for l in lines {
        let mut f = l.split(',');
        ids.push(f.next().unwrap().to_owned());
        rows.push(f.map(|v| v.parse().unwrap()).collect());
    }
    (ids, rows)
}

#[test]
fn triplet_embedding_separates_classes() {
    let tmp = tempfile::tempdir().unwrap();
    let (feats, labels, y) = toy_data(tmp.path(), 2);
    let ckpt = tmp.path().join("emb.json");
    ok(&["embed", "--features", s(&feats), "--labels", s(&labels), "--loss", "triplet", "--out", s(&ckpt), "--dim", "4", "--seed", "2"]);
    let dump = tmp.path().join("emb.csv");
    ok(&["export-embedding", "--ckpt", s(&ckpt), "--features", s(&feats), "--out", s(&dump)]);
    let (ids, rows) = read_export(&dump);
    assert_eq!(ids.len(), 120);
    assert_eq!(ids[7], "t7");
    assert!(rows.iter().all(|r| r.len() == 4));
    let (intra, inter) = mean_pair_distances(&rows, &y);
    assert!(intra < inter, "intra {intra} inter {inter}");
}

#[test]
fn xent_embedding_writes_a_valid_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let (feats, labels, _) = toy_data(tmp.path(), 2);
    let ckpt = tmp.path().join("emb.json");
    ok(&["embed", "--features", s(&feats), "--labels", s(&labels), "--loss", "xent", "--out", s(&ckpt), "--dim", "5"]);
    let net: EmbeddingNet<f64> = Checkpoint::from_bytes(&std::fs::read(&ckpt).unwrap()).unwrap().to_embedding().unwrap();
    assert_eq!((net.input_dim(), net.dim()), (6, 5));
    assert!(net.is_finite());
}

#[test]
fn embedding_rejects_bad_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let (feats, labels, _) = toy_data(tmp.path(), 1);
    let ckpt = tmp.path().join("emb.json");
    let err = fails(&["embed", "--features", s(&feats), "--labels", s(&labels), "--loss", "triplet", "--out", s(&ckpt)]);
    assert!(err.contains("two classes"), "{err}");
    assert!(!ckpt.exists());
    let err = fails(&["embed", "--features", s(&feats), "--labels", s(&labels), "--loss", "hinge", "--out", s(&ckpt)]);
    assert!(err.contains("triplet, xent"), "{err}");
}

fn synth_pool(root: &Path) -> PathBuf {
    let dir = root.join("pool");
    let stdout = ok(&[
        "synth", "--out", s(&dir), "--classes", "3", "--dim", "4", "--pool", "300", "--holdout", "90", "--separation", "4",
        "--seed", "11",
    ]);
    assert!(stdout.contains("300 pool and 90 holdout"), "{stdout}");
    dir
}

fn simulate_args<'a>(pool: &'a Path, out: &'a Path, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![
        "simulate", "--pool", s(pool), "--truth", "", "--out", s(out), "--initial", "30", "--batch", "20", "--budget",
        "90", "--finetune-interval", "60", "--finetune-start", "60", "--seed", "4",
    ];
    for pair in extra.chunks(2) {
        match v.iter().position(|a| *a == pair[0]) {
            Some(i) if pair.len() == 2 => v[i + 1] = pair[1],
            _ => v.extend_from_slice(pair),
        }
    }
    v
}

fn with_truth<'a>(mut args: Vec<&'a str>, truth: &'a str) -> Vec<&'a str> {
    let i = args.iter().position(|a| *a == "--truth").unwrap();
    args[i + 1] = truth;
    args
}

#[test]
fn simulation_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let pool = synth_pool(tmp.path());
    let truth = pool.join("truth.csv");
    let (a, b) = (tmp.path().join("a.csv"), tmp.path().join("b.csv"));
    ok(&with_truth(simulate_args(&pool, &a, &["--strategy", "k_center"]), s(&truth)));
    ok(&with_truth(simulate_args(&pool, &b, &["--strategy", "k_center"]), s(&truth)));
    let curve = read(&a);
    assert_eq!(curve, read(&b));
    let lines: Vec<&str> = curve.lines().collect();
    assert_eq!(lines[0], "labels,accuracy,wall_time_s");
    let labels: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, ["30", "50", "70", "90"]);
    assert!(lines[1..].iter().all(|l| l.ends_with(",0.000")));
}

#[test]
fn every_strategy_name_runs_and_typos_list_them() {
    let tmp = tempfile::tempdir().unwrap();
    let pool = synth_pool(tmp.path());
    let truth = pool.join("truth.csv");
    let out = tmp.path().join("c.csv");
    for name in STRATEGIES {
        ok(&with_truth(simulate_args(&pool, &out, &["--strategy", name, "--budget", "50"]), s(&truth)));
    }
    let err = fails(&with_truth(simulate_args(&pool, &out, &["--strategy", "k-centre"]), s(&truth)));
    for name in STRATEGIES {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn budget_equal_to_the_initial_batch_gives_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    let pool = synth_pool(tmp.path());
    let truth = pool.join("truth.csv");
    let out = tmp.path().join("c.csv");
    ok(&with_truth(simulate_args(&pool, &out, &["--budget", "30"]), s(&truth)));
    assert_eq!(read(&out).lines().count(), 2);
}

#[test]
fn durable_simulation_matches_and_resumes() {
    let tmp = tempfile::tempdir().unwrap();
    let pool = synth_pool(tmp.path());
    let truth = pool.join("truth.csv");
    let (mem, durable, resumed) = (tmp.path().join("m.csv"), tmp.path().join("d.csv"), tmp.path().join("r.csv"));
    let session = tmp.path().join("session");
    ok(&with_truth(simulate_args(&pool, &mem, &[]), s(&truth)));
    ok(&with_truth(simulate_args(&pool, &durable, &["--session", s(&session)]), s(&truth)));
    assert_eq!(read(&mem), read(&durable));
    assert_eq!(read(&session.join("curve.csv")), read(&mem));
    assert_eq!(read(&session.join("journal.jsonl")).lines().count(), 90);

    let err = fails(&with_truth(simulate_args(&pool, &resumed, &["--session", s(&session)]), s(&truth)));
    assert!(err.contains("--resume"), "{err}");
    ok(&with_truth(simulate_args(&pool, &resumed, &["--session", s(&session), "--resume"]), s(&truth)));
    assert_eq!(read(&resumed), read(&mem));
}

#[test]
fn simulation_needs_complete_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let pool = synth_pool(tmp.path());
    let partial = tmp.path().join("partial.csv");
    let text = read(&pool.join("truth.csv"));
    std::fs::write(&partial, text.lines().take(20).collect::<Vec<_>>().join("\n") + "\n").unwrap();
    let out = tmp.path().join("c.csv");
    let err = fails(&with_truth(simulate_args(&pool, &out, &[]), s(&partial)));
    assert!(err.contains("syn"), "{err}");
    assert!(!out.exists());
}

fn write_rows(path: &Path, rows: impl Iterator<Item = String>) {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).unwrap());
    writeln!(w, "image_id,label,count,empty").unwrap();
    for r in rows {
        writeln!(w, "{r}").unwrap();
    }
}

fn eval_json(pred: &Path, truth: &Path) -> serde_json::Value {
    serde_json::from_str(&ok(&["eval", "--predictions", s(pred), "--truth", s(truth)])).unwrap()
}

#[test]
fn eval_on_three_million_image_confusion_counts() {
    const TN: usize = 2_219_404;
    const FP: usize = 131_288;
    const FN: usize = 133_769;
    const TP: usize = 714_276;
    let tmp = tempfile::tempdir().unwrap();
    let (pred, truth) = (tmp.path().join("p.csv"), tmp.path().join("t.csv"));
    let empty = |i: usize| format!("i{i},,0,true");
    let animal = |i: usize| format!("i{i},deer,1,false");
    // Blocks in order: TN, FP, FN, TP.
    let blocks = [(TN, false, false), (FP, true, false), (FN, false, true), (TP, true, true)];
    let rows = |pick_pred: bool| {
        let mut start = 0;
        let mut out = Vec::with_capacity(TN + FP + FN + TP);
        for &(n, p, t) in &blocks {
            let animal_here = if pick_pred { p } else { t };
            out.extend((start..start + n).map(|i| if animal_here { animal(i) } else { empty(i) }));
            start += n;
        }
        out
    };
    write_rows(&pred, rows(true).into_iter());
    write_rows(&truth, rows(false).into_iter());
    let r = eval_json(&pred, &truth);
    let b = &r["empty_vs_animal"];
    let pct = |v: &serde_json::Value| (v.as_f64().unwrap() * 10_000.0).round() / 100.0;
    assert_eq!(pct(&b["accuracy"]), 91.71);
    assert_eq!(pct(&b["precision"]), 84.47);
    assert_eq!(pct(&b["recall"]), 84.23);
    assert_eq!(b["true_negative"], TN);
    assert_eq!(r["images"], TN + FP + FN + TP);
}

#[test]
fn eval_of_truth_against_itself_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let truth = tmp.path().join("t.csv");
    let rows = ["a,deer,1,false", "b,,0,true", "c,fox,14,false", "d,deer,70,false"];
    write_rows(&truth, rows.iter().map(|r| r.to_string()));
    let r = eval_json(&truth, &truth);
    assert_eq!(r["empty_vs_animal"]["accuracy"], 1.0);
    assert_eq!(r["empty_vs_animal"]["precision"], 1.0);
    assert_eq!(r["empty_vs_animal"]["recall"], 1.0);
    assert_eq!(r["species"]["top1"], 1.0);
    assert_eq!(r["counting"]["top1"], 1.0);
    assert_eq!(r["counting"]["within_one_bin"], 1.0);
}

#[test]
fn eval_rejects_mismatched_files() {
    let tmp = tempfile::tempdir().unwrap();
    let (pred, truth) = (tmp.path().join("p.csv"), tmp.path().join("t.csv"));
    write_rows(&pred, ["a,deer,1,false".to_owned()].into_iter());
    write_rows(&truth, ["a,deer,1,false".to_owned(), "b,,0,true".to_owned()].into_iter());
    let err = fails(&["eval", "--predictions", s(&pred), "--truth", s(&truth)]);
    assert!(err.contains("1 predictions but 2"), "{err}");
}

#[test]
fn synth_never_overwrites() {
    let tmp = tempfile::tempdir().unwrap();
    let pool = synth_pool(tmp.path());
    let err = fails(&["synth", "--out", s(&pool)]);
    assert!(err.contains("already exists"), "{err}");
    let err = fails(&["synth", "--out", s(&tmp.path().join("x")), "--classes", "5", "--dim", "3"]);
    assert!(err.contains("classes"), "{err}");
}
