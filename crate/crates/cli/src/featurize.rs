//! Fixed colour features for crops: channel means over a 4×4 grid followed by
//! an 8-bin histogram per channel, all scaled to `[0, 1]`.

use rayon::prelude::*;
use trapal_core::features::FeatureTable;
use trapal_core::ingest::read_crop_index;
use trapal_core::Matrix;

use crate::error::{io_err, CliError};
use crate::FeaturizeArgs;

pub const GRID: u32 = 4;
pub const BINS: usize = 8;
pub const WIDTH: usize = (GRID * GRID * 3) as usize + 3 * BINS;

pub fn features(img: &image::RgbImage) -> Vec<f32> {
    let (w, h) = img.dimensions();
    let mut out = Vec::with_capacity(WIDTH);
    for gy in 0..GRID {
        for gx in 0..GRID {
            let (x0, x1) = (gx * w / GRID, ((gx + 1) * w / GRID).max(gx * w / GRID + 1).min(w));
            let (y0, y1) = (gy * h / GRID, ((gy + 1) * h / GRID).max(gy * h / GRID + 1).min(h));
            let mut sum = [0u64; 3];
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = img.get_pixel(x, y);
                    for c in 0..3 {
                        sum[c] += u64::from(p[c]);
                    }
                }
            }
            let n = (u64::from(x1 - x0) * u64::from(y1 - y0)).max(1) as f32;
            out.extend(sum.iter().map(|&s| s as f32 / n / 255.0));
        }
    }
    let mut hist = [[0u64; BINS]; 3];
    for p in img.pixels() {
        for c in 0..3 {
            hist[c][usize::from(p[c]) * BINS / 256] += 1;
        }
    }
    let total = (u64::from(w) * u64::from(h)).max(1) as f32;
    for channel in &hist {
        out.extend(channel.iter().map(|&k| k as f32 / total));
    }
    out
}

pub fn run(a: &FeaturizeArgs) -> Result<(), CliError> {
    let file = std::fs::File::open(&a.index).map_err(io_err(&a.index))?;
    let rows = read_crop_index(file)?;
    if rows.is_empty() {
        return Err(CliError::Invalid(format!("{} lists no crops", a.index.display())));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.max(1))
        .build()
        .map_err(|e| CliError::Invalid(format!("thread pool: {e}")))?;
    let feats: Vec<Vec<f32>> = pool.install(|| {
        rows.par_iter()
            .map(|r| {
                let path = a.crops.join(format!("{}.png", r.crop_id));
                let img = image::open(&path).map_err(|e| CliError::Image { path: path.display().to_string(), source: e })?;
                Ok(features(&img.to_rgb8()))
            })
            .collect::<Result<_, CliError>>()
    })?;
    let m = Matrix::from_rows(WIDTH, &feats)?;
    let ids = rows.into_iter().map(|r| r.crop_id).collect();
    FeatureTable::new(ids, m)?.write(&a.out)?;
    println!("featurized {} crops into {} columns", feats.len(), WIDTH);
    Ok(())
}
