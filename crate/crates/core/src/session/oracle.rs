use std::collections::HashMap;

use thiserror::Error;

/// One item put to the oracle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryItem {
    pub index: usize,
    pub crop_id: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("no ground truth for crop {0:?}")]
    UnknownId(String),
    #[error("oracle returned {got} labels for {expected} items")]
    Count { expected: usize, got: usize },
    #[error("oracle unavailable: {0}")]
    Unavailable(String),
}

/// Label source. Returns one class index per item, aligned with `items`.
pub trait Oracle {
    fn kind(&self) -> &'static str;
    fn label(&mut self, items: &[QueryItem]) -> Result<Vec<usize>, OracleError>;
}

/// Answers instantly from a ground-truth table keyed by crop id.
#[derive(Clone, Debug, Default)]
pub struct SimulatedOracle {
    truth: HashMap<String, usize>,
    queries: usize,
}

impl SimulatedOracle {
    pub fn new(truth: HashMap<String, usize>) -> Self {
        Self { truth, queries: 0 }
    }

    /// Items answered so far.
    pub fn queries(&self) -> usize {
        self.queries
    }
}

impl FromIterator<(String, usize)> for SimulatedOracle {
    fn from_iter<I: IntoIterator<Item = (String, usize)>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

impl Oracle for SimulatedOracle {
    fn kind(&self) -> &'static str {
        "simulated"
    }

    fn label(&mut self, items: &[QueryItem]) -> Result<Vec<usize>, OracleError> {
        let out = items
            .iter()
            .map(|q| self.truth.get(&q.crop_id).copied().ok_or_else(|| OracleError::UnknownId(q.crop_id.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        self.queries += out.len();
        Ok(out)
    }
}
