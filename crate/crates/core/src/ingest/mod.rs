//! Post-processing of pretrained detector output.
//!
//! A detection counts only when its confidence reaches the configured
//! threshold (0.90 by default, inclusive). An image with no such detection is
//! empty; otherwise its animal count is the number of surviving detections and
//! every surviving box becomes one square crop.

mod crop;
mod detections;
mod files;
mod metrics;

pub use crop::{crop_and_resize, pixel_rect, Crop, PixelRect};
pub use detections::{parse_detection_file, BBox, DetectionRecord, ImageEntry};
pub use files::{
    ingest_images, read_crop_index, read_ground_truth, write_crop_index, CropIndexRow, GroundTruth,
    GroundTruthRow, ImageReport, IngestReport,
};
pub use metrics::{binary_metrics, count_metrics, species_accuracy, BinaryMetrics, ConfusionCounts, CountMetrics};

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed detection file at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid detection on image {image_id}: {reason}")]
    Validation { image_id: String, reason: String },
    #[error("invalid ingest config: {0}")]
    Config(String),
    #[error("count {0} cannot be binned; empty images have no count bin")]
    ZeroCount(u32),
    #[error("degenerate crop on image {image_id}: pixel rectangle {w}x{h}")]
    DegenerateCrop { image_id: String, w: u32, h: u32 },
    #[error("{0}")]
    Domain(String),
    #[error("length mismatch: {0} predictions vs {1} ground-truth values")]
    LengthMismatch(usize, usize),
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("image error on {path}: {source}")]
    Image { path: String, source: image::ImageError },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub confidence_threshold: f64,
    pub crop_side: u32,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self { confidence_threshold: 0.90, crop_side: 256 }
    }
}

impl IngestConfig {
    /// Threshold 1.0 is accepted so "everything empty" runs are possible;
    /// only detections with confidence exactly 1.0 survive it.
    pub fn validate(&self) -> Result<(), IngestError> {
        if !(self.confidence_threshold > 0.0 && self.confidence_threshold <= 1.0) {
            return Err(IngestError::Config(format!(
                "confidence threshold {} outside (0, 1]",
                self.confidence_threshold
            )));
        }
        if self.crop_side < 8 {
            return Err(IngestError::Config(format!("crop side {} below 8 pixels", self.crop_side)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageStatus {
    Empty,
    Animal,
}

/// Detections at or above the confidence threshold, in their original order.
pub fn filter_detections<'a>(dets: &'a [DetectionRecord], cfg: &IngestConfig) -> Vec<&'a DetectionRecord> {
    dets.iter().filter(|d| d.confidence >= cfg.confidence_threshold).collect()
}

pub fn classify_empty(dets: &[DetectionRecord], cfg: &IngestConfig) -> ImageStatus {
    if dets.iter().any(|d| d.confidence >= cfg.confidence_threshold) {
        ImageStatus::Animal
    } else {
        ImageStatus::Empty
    }
}

pub fn count_animals(dets: &[DetectionRecord], cfg: &IngestConfig) -> u32 {
    dets.iter().filter(|d| d.confidence >= cfg.confidence_threshold).count() as u32
}

/// Count categories 1..=10, 11-50 and 51+.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CountBin {
    Exact(u8),
    From11To50,
    Over50,
}

impl CountBin {
    pub const COUNT: usize = 12;

    /// Ordinal position: 0 for "1" through 11 for "51+".
    pub fn index(self) -> usize {
        match self {
            CountBin::Exact(n) => usize::from(n) - 1,
            CountBin::From11To50 => 10,
            CountBin::Over50 => 11,
        }
    }
}

impl fmt::Display for CountBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CountBin::Exact(n) => write!(f, "{n}"),
            CountBin::From11To50 => f.write_str("11-50"),
            CountBin::Over50 => f.write_str("51+"),
        }
    }
}

pub fn bin_count(count: u32) -> Result<CountBin, IngestError> {
    match count {
        0 => Err(IngestError::ZeroCount(0)),
        1..=10 => Ok(CountBin::Exact(count as u8)),
        11..=50 => Ok(CountBin::From11To50),
        _ => Ok(CountBin::Over50),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dets(confs: &[f64]) -> Vec<DetectionRecord> {
        confs
            .iter()
            .map(|&c| DetectionRecord {
                image_id: "img".into(),
                category: "1".into(),
                bbox: BBox::new(0.1, 0.1, 0.2, 0.2).unwrap(),
                confidence: c,
            })
            .collect()
    }

    fn confs(v: &[&DetectionRecord]) -> Vec<f64> {
        v.iter().map(|d| d.confidence).collect()
    }

    #[test]
    fn filter_keeps_order_and_boundary() {
        let cfg = IngestConfig::default();
        assert_eq!(confs(&filter_detections(&dets(&[0.95, 0.30, 0.91]), &cfg)), vec![0.95, 0.91]);
        assert!(filter_detections(&dets(&[0.89]), &cfg).is_empty());
        assert_eq!(confs(&filter_detections(&dets(&[0.90]), &cfg)), vec![0.90]);
    }

    #[test]
    fn empty_classification() {
        let cfg = IngestConfig::default();
        assert_eq!(classify_empty(&dets(&[0.95, 0.30]), &cfg), ImageStatus::Animal);
        assert_eq!(classify_empty(&[], &cfg), ImageStatus::Empty);
        assert_eq!(classify_empty(&dets(&[0.89, 0.85]), &cfg), ImageStatus::Empty);
    }

    #[test]
    fn counting() {
        let cfg = IngestConfig::default();
        assert_eq!(count_animals(&dets(&[0.95, 0.92, 0.40]), &cfg), 2);
        assert_eq!(count_animals(&[], &cfg), 0);
        assert_eq!(count_animals(&dets(&[0.99; 12]), &cfg), 12);
    }

    #[test]
    fn bins() {
        assert_eq!(bin_count(7).unwrap(), CountBin::Exact(7));
        assert_eq!(bin_count(23).unwrap(), CountBin::From11To50);
        assert_eq!(bin_count(51).unwrap(), CountBin::Over50);
        assert_eq!(bin_count(50).unwrap(), CountBin::From11To50);
        assert_eq!(bin_count(10).unwrap(), CountBin::Exact(10));
        assert_eq!(bin_count(11).unwrap().to_string(), "11-50");
        assert!(matches!(bin_count(0), Err(IngestError::ZeroCount(0))));
    }

    #[test]
    fn bin_indices_are_contiguous() {
        let mut seen: Vec<usize> = (1..=60).map(|c| bin_count(c).unwrap().index()).collect();
        seen.dedup();
        assert_eq!(seen, (0..CountBin::COUNT).collect::<Vec<_>>());
    }

    #[test]
    fn config_validation() {
        assert!(IngestConfig::default().validate().is_ok());
        assert!(IngestConfig { confidence_threshold: 0.0, crop_side: 256 }.validate().is_err());
        assert!(IngestConfig { confidence_threshold: 0.9, crop_side: 4 }.validate().is_err());
    }

    proptest! {
        #[test]
        fn count_equals_filter_len(cs in prop::collection::vec(0.0f64..=1.0, 0..20), t in 0.01f64..1.0) {
            let cfg = IngestConfig { confidence_threshold: t, crop_side: 256 };
            let d = dets(&cs);
            let kept = filter_detections(&d, &cfg);
            prop_assert_eq!(count_animals(&d, &cfg) as usize, kept.len());
            prop_assert_eq!(classify_empty(&d, &cfg) == ImageStatus::Animal, !kept.is_empty());
        }

        #[test]
        fn filter_is_idempotent_and_monotone(cs in prop::collection::vec(0.0f64..=1.0, 0..20), t1 in 0.01f64..1.0, t2 in 0.01f64..1.0) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let d = dets(&cs);
            let lo_cfg = IngestConfig { confidence_threshold: lo, crop_side: 256 };
            let hi_cfg = IngestConfig { confidence_threshold: hi, crop_side: 256 };
            let once: Vec<DetectionRecord> = filter_detections(&d, &lo_cfg).into_iter().cloned().collect();
            let twice = filter_detections(&once, &lo_cfg);
            prop_assert_eq!(confs(&twice), once.iter().map(|d| d.confidence).collect::<Vec<_>>());
            let high = confs(&filter_detections(&d, &hi_cfg));
            let low = confs(&filter_detections(&d, &lo_cfg));
            prop_assert!(high.iter().all(|c| low.contains(c)));
        }

        #[test]
        fn every_positive_count_has_one_bin(c in 1u32..100_000) {
            let b = bin_count(c).unwrap();
            let expected = if c <= 10 { (c - 1) as usize } else if c <= 50 { 10 } else { 11 };
            prop_assert_eq!(b.index(), expected);
        }
    }
}
