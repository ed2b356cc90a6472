use std::collections::HashMap;
use std::path::Path;

use serde::Serialize;
use trapal_core::checkpoint::Checkpoint;
use trapal_core::features::{classes_from_labels, encode_labels, read_labels, write_labels, FeatureTable};
use trapal_core::fsio::write_atomic;
use trapal_core::ingest::{
    binary_metrics, count_metrics, ingest_images, parse_detection_file, read_ground_truth, species_accuracy,
    write_crop_index, ConfusionCounts, GroundTruthRow, ImageStatus, IngestConfig,
};
use trapal_core::embedding::{distance, LabeledSamples};
use trapal_core::nn::Activation;
use trapal_core::pooldir::{load_pool_dir, CLASSES_FILE, FEATURES_FILE, HOLDOUT_FILE, HOLDOUT_LABELS_FILE};
use trapal_core::session::store::{DurableSession, STATE_FILE};
use trapal_core::session::{run_simulation, LearningCurve, SimulatedOracle};
use trapal_core::synthetic::{Mixture, MixtureSpec};
use trapal_core::{EmbeddingNet, EmbeddingObjective, LoopConfig, Matrix, Session, StrategyKind, TripletConfig, XentConfig};

use crate::error::{io_err, CliError};
use crate::output::StagedDir;
use crate::{EmbedArgs, EvalArgs, ExportArgs, IngestArgs, ServeArgs, SimulateArgs, SynthArgs};

pub const CROPS_DIR: &str = "crops";
pub const CROP_INDEX_FILE: &str = "crops.csv";
pub const IMAGE_REPORT_FILE: &str = "images.csv";
pub const EMPTY_REPORT_FILE: &str = "empty.csv";
pub const TRUTH_FILE: &str = "truth.csv";

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(io_err(path))
}

fn csv_bytes<S: Serialize>(rows: &[S], header: &[&str]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(header).map_err(|e| CliError::Invalid(e.to_string()))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Invalid(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Invalid(e.to_string()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(path, bytes).map_err(io_err(path))
}

pub fn ingest(a: &IngestArgs) -> Result<(), CliError> {
    let cfg = IngestConfig { confidence_threshold: a.threshold, crop_side: a.crop_side };
    cfg.validate()?;
    let entries = parse_detection_file(&read_file(&a.detections)?)?;
    let staged = StagedDir::new(&a.out)?;
    let crops = staged.path().join(CROPS_DIR);
    std::fs::create_dir(&crops).map_err(io_err(&crops))?;
    let report = ingest_images(&entries, &a.images, &crops, &cfg, a.jobs)?;

    let mut index = Vec::new();
    write_crop_index(&mut index, &report.crops)?;
    if report.crops.is_empty() {
        index = b"crop_id,image_id,x,y,w,h,conf\n".to_vec();
    }
    write_file(&staged.path().join(CROP_INDEX_FILE), &index)?;
    let images = csv_bytes(&report.images, &["image_id", "file", "status", "count"])?;
    write_file(&staged.path().join(IMAGE_REPORT_FILE), &images)?;
    let empty: String = std::iter::once("image_id\n".to_owned())
        .chain(report.empty_images().map(|r| format!("{}\n", r.image_id)))
        .collect();
    write_file(&staged.path().join(EMPTY_REPORT_FILE), empty.as_bytes())?;
    staged.publish()?;
    let n_empty = report.images.iter().filter(|r| r.status == ImageStatus::Empty).count();
    println!("{} images, {} empty, {} crops", report.images.len(), n_empty, report.crops.len());
    Ok(())
}

/// Mean distance of points to their class centroid, and mean distance between
/// distinct centroids.
fn spread(emb: &Matrix<f32>, labels: &[usize], classes: usize) -> Result<(f64, f64), CliError> {
    let d = emb.cols();
    let mut centroids = vec![vec![0.0f32; d]; classes];
    let mut counts = vec![0usize; classes];
    for (row, &l) in emb.iter_rows().zip(labels) {
        counts[l] += 1;
        for (c, v) in centroids[l].iter_mut().zip(row) {
            *c += v;
        }
    }
    for (c, &n) in centroids.iter_mut().zip(&counts) {
        c.iter_mut().for_each(|v| *v /= n.max(1) as f32);
    }
    let mut intra = 0.0;
    for (row, &l) in emb.iter_rows().zip(labels) {
        intra += f64::from(distance(row, &centroids[l])?);
    }
    let present: Vec<usize> = (0..classes).filter(|&c| counts[c] > 0).collect();
    let (mut inter, mut pairs) = (0.0, 0usize);
    for (i, &a) in present.iter().enumerate() {
        for &b in &present[i + 1..] {
            inter += f64::from(distance(&centroids[a], &centroids[b])?);
            pairs += 1;
        }
    }
    Ok((intra / labels.len().max(1) as f64, inter / pairs.max(1) as f64))
}

pub fn embed(a: &EmbedArgs) -> Result<(), CliError> {
    let mut objective = match a.loss.as_str() {
        "triplet" => EmbeddingObjective::Triplet(TripletConfig { seed: a.seed, ..TripletConfig::default() }),
        "xent" | "cross_entropy" => EmbeddingObjective::CrossEntropy(XentConfig { seed: a.seed, ..XentConfig::default() }),
        other => return Err(CliError::Invalid(format!("unknown loss {other:?}; valid: triplet, xent"))),
    };
    match &mut objective {
        EmbeddingObjective::Triplet(c) => {
            c.epochs = a.epochs.unwrap_or(c.epochs);
            c.learning_rate = a.learning_rate.unwrap_or(c.learning_rate);
            c.margin = a.margin.unwrap_or(c.margin);
        }
        EmbeddingObjective::CrossEntropy(c) => {
            if a.margin.is_some() {
                return Err(CliError::Invalid("--margin applies only to --loss triplet".into()));
            }
            c.epochs = a.epochs.unwrap_or(c.epochs);
            c.learning_rate = a.learning_rate.unwrap_or(c.learning_rate);
        }
    }
    if a.dim == 0 || a.hidden == 0 {
        return Err(CliError::Invalid("--dim and --hidden must be positive".into()));
    }
    let table = FeatureTable::<f32>::read(&a.features)?;
    let rows = read_labels(&a.labels)?;
    let rows: Vec<(String, String)> = rows.into_iter().filter(|(_, l)| !l.is_empty()).collect();
    let classes = classes_from_labels(rows.iter().map(|r| r.1.as_str()));
    let encoded = encode_labels(&rows, &classes)?;
    let position = table.position_map();
    let mut picked = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for (crop, _) in &rows {
        let &i = position
            .get(crop.as_str())
            .ok_or_else(|| CliError::Invalid(format!("labeled crop {crop:?} is not in {}", a.features.display())))?;
        picked.push(i);
        labels.push(encoded[crop]);
    }
    let x = table.features.select_rows(&picked);
    let net = EmbeddingNet::<f32>::new(x.cols(), &[a.hidden], a.dim, Activation::Relu, a.seed);
    let trained = objective.train(&net, LabeledSamples::new(&x, &labels)?)?;
    if !trained.is_finite() {
        return Err(CliError::Invalid("training diverged; lower --learning-rate".into()));
    }
    write_file(&a.out, &Checkpoint::embedding(&trained).to_bytes())?;
    let (intra, inter) = spread(&trained.embed_matrix(&x)?, &labels, classes.len())?;
    println!(
        "trained {} embedding on {} crops, {} classes; mean distance to class centroid {intra:.4}, between centroids {inter:.4}",
        objective.name(),
        labels.len(),
        classes.len()
    );
    Ok(())
}

fn loop_config(a: &SimulateArgs) -> Result<LoopConfig, CliError> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(io_err(p))?;
            LoopConfig::from_toml(&text)?
        }
        None => LoopConfig::default(),
    };
    if let Some(s) = &a.strategy {
        cfg.strategy = s.parse::<StrategyKind>()?;
    }
    cfg.budget = a.budget.unwrap_or(cfg.budget);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.initial_random = a.initial.unwrap_or(cfg.initial_random);
    cfg.batch_size = a.batch.unwrap_or(cfg.batch_size);
    cfg.finetune_interval = a.finetune_interval.unwrap_or(cfg.finetune_interval);
    cfg.finetune_start = a.finetune_start.unwrap_or(cfg.finetune_start);
    cfg.wall_clock |= a.wall_time;
    cfg.validate()?;
    Ok(cfg)
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let cfg = loop_config(a)?;
    let truth_rows = read_labels(&a.truth)?;
    let curve = if a.resume {
        let dir = a.session.as_deref().expect("clap requires --session");
        let mut d = DurableSession::<f32>::open(dir)?;
        let truth = encode_labels(&truth_rows, d.session().classes())?;
        d.run(&mut SimulatedOracle::new(truth))?;
        d.session().curve().clone()
    } else {
        if let Some(dir) = &a.session {
            if dir.join(STATE_FILE).exists() {
                return Err(CliError::Invalid(format!("{} already holds a session; pass --resume", dir.display())));
            }
        }
        let data = load_pool_dir::<f32>(&a.pool)?;
        let classes = match &data.classes {
            Some(c) => c.clone(),
            None => classes_from_labels(truth_rows.iter().map(|r| r.1.as_str())),
        };
        let truth = encode_labels(&truth_rows, &classes)?;
        let holdout_truth = if data.holdout_labels.is_empty() { &truth_rows } else { &data.holdout_labels };
        let holdout = data.labeled_holdout(&classes, holdout_truth)?;
        let net = data.embedding_or_identity();
        let mut oracle = SimulatedOracle::new(truth);
        match &a.session {
            Some(dir) => {
                let session = Session::new(data.pool, holdout, classes, cfg, net)?;
                let mut d = DurableSession::create(dir, session)?;
                d.run(&mut oracle)?;
                d.session().curve().clone()
            }
            None => run_simulation(data.pool, holdout, classes, cfg, net, &mut oracle)?.curve().clone(),
        }
    };
    write_file(&a.out, curve.to_csv().as_bytes())?;
    report_curve(&curve);
    Ok(())
}

fn report_curve(curve: &LearningCurve) {
    match curve.last() {
        Some(p) => match p.accuracy {
            Some(acc) => println!("{} points; {} labels, holdout accuracy {:.4}", curve.len(), p.labels, acc),
            None => println!("{} points; {} labels, no holdout", curve.len(), p.labels),
        },
        None => println!("empty learning curve"),
    }
}

pub fn serve(a: &ServeArgs) -> Result<(), CliError> {
    let addr: std::net::SocketAddr =
        a.listen.parse().map_err(|e| CliError::Invalid(format!("--listen {:?}: {e}", a.listen)))?;
    for dir in [&a.crops, &a.pools] {
        if !dir.is_dir() {
            return Err(CliError::Invalid(format!("{} is not a directory", dir.display())));
        }
    }
    std::fs::create_dir_all(&a.session).map_err(io_err(&a.session))?;
    let config = trapal_server::ServerConfig {
        sessions_root: a.session.clone(),
        crops_root: a.crops.clone(),
        pools_root: a.pools.clone(),
    };
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(io_err(&a.session))?;
    println!("listening on http://{addr}");
    rt.block_on(trapal_server::serve(config, addr)).map_err(|e| CliError::Invalid(format!("serve on {addr}: {e}")))
}

#[derive(Debug, Serialize)]
struct BinaryReport {
    accuracy: f64,
    precision: Option<f64>,
    recall: Option<f64>,
    #[serde(flatten)]
    counts: ConfusionCounts,
}

#[derive(Debug, Serialize)]
struct SpeciesReport {
    images: usize,
    top1: f64,
}

#[derive(Debug, Serialize)]
struct CountReport {
    images: usize,
    top1: f64,
    within_one_bin: f64,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    images: usize,
    empty_vs_animal: BinaryReport,
    species: Option<SpeciesReport>,
    counting: Option<CountReport>,
}

/// Pairs predictions with truth by image id.
fn align(pred: Vec<GroundTruthRow>, truth: Vec<GroundTruthRow>) -> Result<Vec<(GroundTruthRow, GroundTruthRow)>, CliError> {
    if pred.len() != truth.len() {
        return Err(CliError::Invalid(format!("{} predictions but {} ground-truth rows", pred.len(), truth.len())));
    }
    let mut by_id: HashMap<String, GroundTruthRow> = HashMap::with_capacity(truth.len());
    for t in truth {
        let id = t.image_id.clone();
        if by_id.insert(id.clone(), t).is_some() {
            return Err(CliError::Invalid(format!("image {id:?} appears twice in the ground truth")));
        }
    }
    pred.into_iter()
        .map(|p| {
            let t = by_id
                .remove(&p.image_id)
                .ok_or_else(|| CliError::Invalid(format!("image {:?} has no ground truth or is predicted twice", p.image_id)))?;
            Ok((p, t))
        })
        .collect()
}

fn evaluate(pairs: &[(GroundTruthRow, GroundTruthRow)]) -> Result<EvalReport, CliError> {
    let mut counts = ConfusionCounts::default();
    let (mut sp_pred, mut sp_true) = (Vec::new(), Vec::new());
    let (mut c_pred, mut c_true) = (Vec::new(), Vec::new());
    for (p, t) in pairs {
        counts.record(!p.empty, !t.empty);
        if t.empty {
            continue;
        }
        if let Some(label) = &t.label {
            sp_pred.push(if p.empty { None } else { p.label.as_deref() });
            sp_true.push(Some(label.as_str()));
        }
        if !p.empty {
            c_pred.push(p.count);
            c_true.push(t.count);
        }
    }
    let m = binary_metrics(&counts)?;
    let species = if sp_true.is_empty() {
        None
    } else {
        Some(SpeciesReport { images: sp_true.len(), top1: species_accuracy(&sp_pred, &sp_true)? })
    };
    let counting = if c_true.is_empty() {
        None
    } else {
        let cm = count_metrics(&c_pred, &c_true)?;
        Some(CountReport { images: c_true.len(), top1: cm.top1_accuracy, within_one_bin: cm.within_one_bin_accuracy })
    };
    Ok(EvalReport {
        images: pairs.len(),
        empty_vs_animal: BinaryReport { accuracy: m.accuracy, precision: m.precision, recall: m.recall, counts },
        species,
        counting,
    })
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    let read = |p: &Path| -> Result<Vec<GroundTruthRow>, CliError> {
        let f = std::fs::File::open(p).map_err(io_err(p))?;
        read_ground_truth(std::io::BufReader::new(f))
            .map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))
    };
    let pairs = align(read(&a.predictions)?, read(&a.truth)?)?;
    let report = evaluate(&pairs)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Some(out) = &a.out {
        write_file(out, format!("{json}\n").as_bytes())?;
    }
    println!("{json}");
    Ok(())
}

pub fn export_embedding(a: &ExportArgs) -> Result<(), CliError> {
    let bytes = read_file(&a.ckpt)?;
    let show = |source| CliError::Checkpoint { path: a.ckpt.display().to_string(), source };
    let net = Checkpoint::from_bytes(&bytes).and_then(|c| c.to_embedding::<f32>()).map_err(show)?;
    let table = FeatureTable::<f32>::read(&a.features)?;
    let emb = net.embed_matrix(&table.features)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> =
        std::iter::once("crop_id".to_owned()).chain((0..emb.cols()).map(|j| format!("e{j}"))).collect();
    let csv_err = |e: csv::Error| CliError::Invalid(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for (id, row) in table.crop_ids.iter().zip(emb.iter_rows()) {
        let rec = std::iter::once(id.clone()).chain(row.iter().map(|v| v.to_string()));
        w.write_record(rec).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Invalid(e.to_string()))?;
    write_file(&a.out, &bytes)?;
    println!("embedded {} crops into {} dimensions", emb.rows(), emb.cols());
    Ok(())
}

pub fn synth(a: &SynthArgs) -> Result<(), CliError> {
    if a.classes < 2 || a.dim < a.classes {
        return Err(CliError::Invalid(format!("need 2 <= classes <= dim, got {} classes in {} dims", a.classes, a.dim)));
    }
    if a.pool == 0 || a.separation.is_nan() || a.separation <= 0.0 {
        return Err(CliError::Invalid("--pool and --separation must be positive".into()));
    }
    let spec = MixtureSpec { classes: a.classes, dim: a.dim, separation: a.separation, ..MixtureSpec::default() };
    let mix = Mixture::new(spec, a.seed);
    let names: Vec<String> = (0..a.classes).map(|c| format!("class{c:02}")).collect();
    let staged = StagedDir::new(&a.out)?;
    let dir = staged.path();

    let (x, y) = mix.sample::<f32>(a.pool, a.seed, 0);
    let ids: Vec<String> = (0..a.pool).map(|i| format!("syn{i:06}")).collect();
    let truth: Vec<(String, String)> = ids.iter().cloned().zip(y.iter().map(|&c| names[c].clone())).collect();
    FeatureTable::new(ids, x)?.write(&dir.join(FEATURES_FILE))?;
    write_labels(&dir.join(TRUTH_FILE), &truth)?;
    if a.holdout > 0 {
        let (hx, hy) = mix.sample::<f32>(a.holdout, a.seed, 1);
        let hids: Vec<String> = (0..a.holdout).map(|i| format!("hold{i:06}")).collect();
        let rows: Vec<(String, String)> = hids.iter().cloned().zip(hy.iter().map(|&c| names[c].clone())).collect();
        FeatureTable::new(hids, hx)?.write(&dir.join(HOLDOUT_FILE))?;
        write_labels(&dir.join(HOLDOUT_LABELS_FILE), &rows)?;
    }
    let table: String = names.iter().map(|n| format!("{n}\n")).collect();
    write_file(&dir.join(CLASSES_FILE), table.as_bytes())?;
    staged.publish()?;
    println!("wrote {} pool and {} holdout points in {} classes to {}", a.pool, a.holdout, a.classes, a.out.display());
    Ok(())
}
