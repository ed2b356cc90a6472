use serde::{Deserialize, Serialize};

use super::SessionError;
use crate::classifier::TrainConfig;
use crate::embedding::{EmbeddingObjective, TripletConfig};
use crate::strategies::{StrategyKind, StrategyParams};

/// Schedule and model settings for one active-learning run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    /// Labels requested uniformly at random before the first model is trained.
    pub initial_random: usize,
    /// Items selected per step.
    pub batch_size: usize,
    /// The embedding is fine-tuned whenever the label count is a multiple of this...
    pub finetune_interval: usize,
    /// ...and at least this large.
    pub finetune_start: usize,
    /// Stop once this many labels have been acquired.
    pub budget: usize,
    pub strategy: StrategyKind,
    pub strategy_params: StrategyParams,
    pub seed: u64,
    /// Hidden units of the species classifier.
    pub classifier_hidden: usize,
    pub classifier: TrainConfig,
    /// Continue from the previous classifier instead of a fresh seeded init.
    pub warm_start: bool,
    /// Fine-tune the embedding on the labeled set at the scheduled counts.
    pub finetune: bool,
    pub embedding: EmbeddingObjective,
    /// Record elapsed seconds in the learning curve. Off by default so that
    /// simulated curves are byte-reproducible.
    pub wall_clock: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            initial_random: 1_000,
            batch_size: 100,
            finetune_interval: 2_000,
            finetune_start: 2_000,
            budget: 30_000,
            strategy: StrategyKind::KCenter,
            strategy_params: StrategyParams::default(),
            seed: 0,
            classifier_hidden: 100,
            classifier: TrainConfig::default(),
            warm_start: false,
            finetune: true,
            embedding: EmbeddingObjective::Triplet(TripletConfig::default()),
            wall_clock: false,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), SessionError> {
        let bad = |m: String| Err(SessionError::Config(m));
        if self.initial_random == 0 {
            return bad("initial_random must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.budget < self.initial_random {
            return bad(format!("budget {} is below initial_random {}", self.budget, self.initial_random));
        }
        if self.finetune {
            if self.finetune_interval == 0 {
                return bad("finetune_interval must be positive".into());
            }
            if !self.finetune_interval.is_multiple_of(self.batch_size) {
                return bad(format!(
                    "finetune_interval {} is not a multiple of batch_size {}",
                    self.finetune_interval, self.batch_size
                ));
            }
        }
        if self.classifier_hidden == 0 {
            return bad("classifier_hidden must be at least 1".into());
        }
        self.classifier.validate().map_err(|e| SessionError::Config(e.to_string()))?;
        Ok(())
    }

    /// Whether reaching `labels` acquired labels triggers a fine-tune.
    pub fn finetune_due(&self, labels: usize) -> bool {
        self.finetune
            && self.finetune_interval > 0
            && labels >= self.finetune_start
            && labels.is_multiple_of(self.finetune_interval)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("LoopConfig serializes to TOML")
    }

    pub fn from_toml(s: &str) -> Result<Self, SessionError> {
        toml::from_str(s).map_err(|e| SessionError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = LoopConfig::default();
        c.validate().unwrap();
        assert_eq!((c.initial_random, c.batch_size, c.finetune_interval, c.finetune_start), (1000, 100, 2000, 2000));
    }

    #[test]
    fn invalid_configs() {
        let base = LoopConfig::default();
        assert!(LoopConfig { batch_size: 0, ..base.clone() }.validate().is_err());
        assert!(LoopConfig { finetune_interval: 2050, ..base.clone() }.validate().is_err());
        assert!(LoopConfig { budget: 999, ..base.clone() }.validate().is_err());
    }

    #[test]
    fn finetune_cadence() {
        let c = LoopConfig::default();
        let fired: Vec<usize> = (1000..=7000).step_by(100).filter(|&l| c.finetune_due(l)).collect();
        assert_eq!(fired, vec![2000, 4000, 6000]);
        assert!(!LoopConfig { finetune: false, ..c }.finetune_due(2000));
    }

    #[test]
    fn toml_round_trip() {
        let c = LoopConfig { strategy: StrategyKind::Entropy, seed: 99, ..LoopConfig::default() };
        assert_eq!(LoopConfig::from_toml(&c.to_toml()).unwrap(), c);
        let partial = LoopConfig::from_toml("budget = 1500\nstrategy = \"margin\"\n").unwrap();
        assert_eq!(partial.budget, 1500);
        assert_eq!(partial.strategy, StrategyKind::Margin);
        assert_eq!(partial.batch_size, 100);
    }
}
