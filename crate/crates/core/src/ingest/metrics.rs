use serde::{Deserialize, Serialize};

use super::{bin_count, IngestError};

/// Empty-vs-animal confusion counts; "animal" is the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_positive: u64,
    pub false_positive: u64,
    pub true_negative: u64,
    pub false_negative: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_positive + self.false_positive + self.true_negative + self.false_negative
    }

    pub fn record(&mut self, predicted_animal: bool, actual_animal: bool) {
        match (predicted_animal, actual_animal) {
            (true, true) => self.true_positive += 1,
            (true, false) => self.false_positive += 1,
            (false, false) => self.true_negative += 1,
            (false, true) => self.false_negative += 1,
        }
    }
}

/// `None` marks a metric whose denominator is zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn binary_metrics(c: &ConfusionCounts) -> Result<BinaryMetrics, IngestError> {
    let total = c.total();
    if total == 0 {
        return Err(IngestError::Domain("confusion counts are all zero".into()));
    }
    Ok(BinaryMetrics {
        accuracy: (c.true_positive + c.true_negative) as f64 / total as f64,
        precision: ratio(c.true_positive, c.true_positive + c.false_positive),
        recall: ratio(c.true_positive, c.true_positive + c.false_negative),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountMetrics {
    pub top1_accuracy: f64,
    pub within_one_bin_accuracy: f64,
}

/// Binned counting accuracy: exact bin match and bin ordinals at most one apart.
pub fn count_metrics(predicted: &[u32], truth: &[u32]) -> Result<CountMetrics, IngestError> {
    if predicted.len() != truth.len() {
        return Err(IngestError::LengthMismatch(predicted.len(), truth.len()));
    }
    if predicted.is_empty() {
        return Err(IngestError::Domain("no counts to evaluate".into()));
    }
    let mut exact = 0usize;
    let mut near = 0usize;
    for (&p, &t) in predicted.iter().zip(truth) {
        let (bp, bt) = (bin_count(p)?.index(), bin_count(t)?.index());
        if bp == bt {
            exact += 1;
        }
        if bp.abs_diff(bt) <= 1 {
            near += 1;
        }
    }
    let n = predicted.len() as f64;
    Ok(CountMetrics { top1_accuracy: exact as f64 / n, within_one_bin_accuracy: near as f64 / n })
}

/// Fraction of positions where the predicted species equals the true one.
pub fn species_accuracy<S: PartialEq>(predicted: &[S], truth: &[S]) -> Result<f64, IngestError> {
    if predicted.len() != truth.len() {
        return Err(IngestError::LengthMismatch(predicted.len(), truth.len()));
    }
    if predicted.is_empty() {
        return Err(IngestError::Domain("no species labels to evaluate".into()));
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / predicted.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_counts() {
        let m = binary_metrics(&ConfusionCounts { true_positive: 1, false_positive: 0, true_negative: 1, false_negative: 0 }).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall), (1.0, Some(1.0), Some(1.0)));
    }

    #[test]
    fn undefined_precision() {
        let m = binary_metrics(&ConfusionCounts { true_positive: 0, false_positive: 0, true_negative: 5, false_negative: 5 }).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.precision, None);
        assert_eq!(m.recall, Some(0.0));
    }

    #[test]
    fn zero_total_is_error() {
        assert!(binary_metrics(&ConfusionCounts::default()).is_err());
    }

    #[test]
    fn count_metric_cases() {
        assert_eq!(count_metrics(&[3], &[3]).unwrap(), CountMetrics { top1_accuracy: 1.0, within_one_bin_accuracy: 1.0 });
        assert_eq!(count_metrics(&[4], &[3]).unwrap(), CountMetrics { top1_accuracy: 0.0, within_one_bin_accuracy: 1.0 });
        // bin(12) is ordinal 10, bin(3) is ordinal 2
        assert_eq!(count_metrics(&[12], &[3]).unwrap(), CountMetrics { top1_accuracy: 0.0, within_one_bin_accuracy: 0.0 });
        // 10 and 11 sit in adjacent bins
        assert_eq!(count_metrics(&[10], &[11]).unwrap().within_one_bin_accuracy, 1.0);
        assert!(matches!(count_metrics(&[1, 2], &[1]), Err(IngestError::LengthMismatch(2, 1))));
    }

    #[test]
    fn record_builds_confusion() {
        let mut c = ConfusionCounts::default();
        c.record(true, true);
        c.record(true, false);
        c.record(false, true);
        c.record(false, false);
        c.record(false, false);
        assert_eq!(c, ConfusionCounts { true_positive: 1, false_positive: 1, true_negative: 2, false_negative: 1 });
    }
}
