//! The active-learning loop: a seeded random batch, then strategy-selected
//! batches, a classifier retrained after every commit and scheduled embedding
//! fine-tunes.
//!
//! A [`Session`] is driven either synchronously through [`Session::step`]
//! with an [`Oracle`], or asynchronously by issuing a batch, recording answers
//! as they arrive and committing once the batch is complete.

mod config;
mod oracle;
mod persist;
pub mod store;

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::LoopConfig;
pub use oracle::{Oracle, OracleError, QueryItem, SimulatedOracle};
pub use persist::{load_session, save_session, SESSION_FORMAT, SESSION_VERSION};

use crate::classifier::{evaluate_accuracy, train_classifier, ClassifierError, MlpClassifier, TrainConfig};
use crate::cluster::{average_linkage, Dendrogram};
use crate::embedding::{fine_tune, EmbeddingError, EmbeddingNet, LabeledSamples};
use crate::error::ShapeError;
use crate::matrix::Matrix;
use crate::rng::derive_seed;
use crate::scalar::Scalar;
use crate::strategies::{select, select_random, SelectionContext, StrategyError, StrategyKind};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("invalid loop config: {0}")]
    Config(String),
    #[error("pool has {pool} items but {needed} initial labels were requested")]
    PoolTooSmall { pool: usize, needed: usize },
    #[error("budget of {0} labels reached")]
    BudgetReached(usize),
    #[error("batch {0} is still pending")]
    BatchPending(u64),
    #[error("no batch is pending")]
    NoPendingBatch,
    #[error("batch {batch_id} has {missing} unanswered items")]
    Incomplete { batch_id: u64, missing: usize },
    #[error("item {0:?} is not in the pending batch")]
    NotPending(String),
    #[error("item {crop_id:?} already labeled {existing}, got {given}")]
    Conflict { crop_id: String, existing: usize, given: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("unknown class name {0:?}")]
    UnknownClass(String),
    #[error("inconsistent session data: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("session file: {0}")]
    Format(String),
    #[error("I/O on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Unlabeled candidates: base features (embedding-net input), one row per crop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Pool<T> {
    pub crop_ids: Vec<String>,
    pub features: Matrix<T>,
}

impl<T: Scalar> Pool<T> {
    pub fn new(crop_ids: Vec<String>, features: Matrix<T>) -> Result<Self, SessionError> {
        ShapeError::check(crop_ids.len(), features.rows())?;
        let mut seen = std::collections::HashSet::with_capacity(crop_ids.len());
        for id in &crop_ids {
            if !seen.insert(id.as_str()) {
                return Err(SessionError::Corrupt(format!("duplicate crop id {id:?} in pool")));
            }
        }
        Ok(Self { crop_ids, features })
    }

    pub fn len(&self) -> usize {
        self.crop_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.crop_ids.is_empty()
    }
}

/// Labeled evaluation split, disjoint from the pool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Holdout<T> {
    pub features: Matrix<T>,
    pub labels: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub labels: usize,
    /// `None` when the session has no holdout.
    pub accuracy: Option<f64>,
    pub wall_time_s: f64,
}

/// Holdout accuracy against labels acquired; labels strictly increase.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> Option<&CurvePoint> {
        self.points.last()
    }

    fn push(&mut self, p: CurvePoint) -> Result<(), SessionError> {
        if let Some(last) = self.points.last() {
            if p.labels <= last.labels {
                return Err(SessionError::Corrupt(format!("curve point at {} after {}", p.labels, last.labels)));
            }
        }
        self.points.push(p);
        Ok(())
    }

    /// CSV with header `labels,accuracy,wall_time_s`. A missing accuracy is an
    /// empty field.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("labels,accuracy,wall_time_s\n");
        for p in &self.points {
            let acc = p.accuracy.map(|a| format!("{a:.6}")).unwrap_or_default();
            s.push_str(&format!("{},{},{:.3}\n", p.labels, acc, p.wall_time_s));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub step: u64,
    pub strategy: StrategyKind,
    pub index: usize,
    pub score: f64,
}

/// Issued but not yet committed query batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendingBatch {
    pub batch_id: u64,
    /// Step the batch belongs to; 0 is the initial random batch.
    pub step: u64,
    pub strategy: StrategyKind,
    pub indices: Vec<usize>,
    pub scores: Vec<f64>,
    /// Unix seconds.
    pub issued_at: u64,
    /// Pool index → label, for the items answered so far.
    pub answers: BTreeMap<usize, usize>,
}

impl PendingBatch {
    pub fn unanswered(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied().filter(|i| !self.answers.contains_key(i))
    }

    pub fn is_complete(&self) -> bool {
        self.answers.len() == self.indices.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnswerStatus {
    Accepted,
    /// Same label already recorded for this item.
    Duplicate,
}

/// Everything persisted about a session. Derived data (embedded features,
/// clustering) lives in [`Session`] and is rebuilt on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SessionState<T> {
    pub config: LoopConfig,
    pub classes: Vec<String>,
    pub pool: Pool<T>,
    pub holdout: Option<Holdout<T>>,
    /// `(pool index, label)` in commit order.
    pub labeled: Vec<(usize, usize)>,
    /// Strategy steps committed after the initial batch.
    pub step: u64,
    pub next_batch_id: u64,
    pub embedding: EmbeddingNet<T>,
    pub classifier: Option<MlpClassifier<T>>,
    pub pending: Option<PendingBatch>,
    pub curve: LearningCurve,
    /// Label counts at which the embedding was fine-tuned.
    pub finetune_events: Vec<usize>,
    pub audit: Vec<AuditRow>,
    /// Wall time accumulated before the current process picked the session up.
    pub elapsed_s: f64,
}

pub struct Session<T: Scalar> {
    state: SessionState<T>,
    is_labeled: Vec<bool>,
    by_crop_id: HashMap<String, usize>,
    embedded: Matrix<T>,
    holdout_embedded: Option<Matrix<T>>,
    dendrogram: Option<Dendrogram>,
    resumed_at: Instant,
}

fn now_unix() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl<T: Scalar> Session<T> {
    /// New session with nothing labeled. `embedding` maps pool and holdout
    /// features into the space the strategies and classifier work in.
    pub fn new(
        pool: Pool<T>,
        holdout: Option<Holdout<T>>,
        classes: Vec<String>,
        config: LoopConfig,
        embedding: EmbeddingNet<T>,
    ) -> Result<Self, SessionError> {
        config.validate()?;
        if pool.len() < config.initial_random {
            return Err(SessionError::PoolTooSmall { pool: pool.len(), needed: config.initial_random });
        }
        if classes.len() < 2 {
            return Err(SessionError::Config(format!("need at least two classes, got {}", classes.len())));
        }
        let state = SessionState {
            config,
            classes,
            pool,
            holdout,
            labeled: Vec::new(),
            step: 0,
            next_batch_id: 0,
            embedding,
            classifier: None,
            pending: None,
            curve: LearningCurve::default(),
            finetune_events: Vec::new(),
            audit: Vec::new(),
            elapsed_s: 0.0,
        };
        Self::from_state(state)
    }

    /// Validates a persisted state and rebuilds its derived data.
    pub fn from_state(state: SessionState<T>) -> Result<Self, SessionError> {
        let n = state.pool.len();
        let k = state.classes.len();
        let bad = |m: String| Err(SessionError::Corrupt(m));
        ShapeError::check(state.pool.crop_ids.len(), state.pool.features.rows())?;
        ShapeError::check(state.embedding.input_dim(), state.pool.features.cols())?;
        let mut is_labeled = vec![false; n];
        for &(i, l) in &state.labeled {
            if i >= n || is_labeled[i] {
                return bad(format!("labeled index {i} repeated or out of range"));
            }
            if l >= k {
                return bad(format!("label {l} out of range for {k} classes"));
            }
            is_labeled[i] = true;
        }
        if let Some(p) = &state.pending {
            if p.indices.len() != p.scores.len() {
                return bad("pending scores do not align with indices".into());
            }
            let mut in_batch = vec![false; n];
            for &i in &p.indices {
                if i >= n || is_labeled[i] || in_batch[i] {
                    return bad(format!("pending index {i} is labeled, repeated or out of range"));
                }
                in_batch[i] = true;
            }
            for (&i, &l) in &p.answers {
                if i >= n || !in_batch[i] || l >= k {
                    return bad(format!("pending answer for {i} is invalid"));
                }
            }
        }
        if let Some(h) = &state.holdout {
            ShapeError::check(h.features.rows(), h.labels.len())?;
            ShapeError::check(state.embedding.input_dim(), h.features.cols())?;
            if let Some(&l) = h.labels.iter().find(|&&l| l >= k) {
                return bad(format!("holdout label {l} out of range for {k} classes"));
            }
        }
        if let Some(c) = &state.classifier {
            ShapeError::check(state.embedding.dim(), c.input_dim())?;
            ShapeError::check(k, c.num_classes())?;
        }
        if state.curve.points.windows(2).any(|w| w[0].labels >= w[1].labels) {
            return bad("curve labels are not strictly increasing".into());
        }
        let embedded = state.embedding.embed_matrix(&state.pool.features)?;
        let holdout_embedded = match &state.holdout {
            Some(h) => Some(state.embedding.embed_matrix(&h.features)?),
            None => None,
        };
        let by_crop_id: HashMap<String, usize> =
            state.pool.crop_ids.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
        if by_crop_id.len() != n {
            return bad("pool crop ids are not unique".into());
        }
        Ok(Self { state, is_labeled, by_crop_id, embedded, holdout_embedded, dendrogram: None, resumed_at: Instant::now() })
    }

    pub fn state(&self) -> &SessionState<T> {
        &self.state
    }

    pub fn config(&self) -> &LoopConfig {
        &self.state.config
    }

    pub fn classes(&self) -> &[String] {
        &self.state.classes
    }

    pub fn labels_acquired(&self) -> usize {
        self.state.labeled.len()
    }

    pub fn step_count(&self) -> u64 {
        self.state.step
    }

    pub fn curve(&self) -> &LearningCurve {
        &self.state.curve
    }

    pub fn pending(&self) -> Option<&PendingBatch> {
        self.state.pending.as_ref()
    }

    /// Pool features in the current embedding space.
    pub fn embedded(&self) -> &Matrix<T> {
        &self.embedded
    }

    pub fn is_labeled(&self, index: usize) -> bool {
        self.is_labeled.get(index).copied().unwrap_or(false)
    }

    /// Label of an item from an already committed batch.
    pub fn committed_label(&self, index: usize) -> Option<usize> {
        if !self.is_labeled(index) {
            return None;
        }
        self.state.labeled.iter().find(|&&(i, _)| i == index).map(|&(_, l)| l)
    }

    pub fn is_done(&self) -> bool {
        self.state.pending.is_none()
            && (self.labels_acquired() >= self.state.config.budget
                || (self.labels_acquired() > 0 && self.labels_acquired() == self.state.pool.len()))
    }

    pub fn crop_id(&self, index: usize) -> &str {
        &self.state.pool.crop_ids[index]
    }

    pub fn index_of(&self, crop_id: &str) -> Option<usize> {
        self.by_crop_id.get(crop_id).copied()
    }

    pub fn class_index(&self, name: &str) -> Result<usize, SessionError> {
        self.state.classes.iter().position(|c| c == name).ok_or_else(|| SessionError::UnknownClass(name.to_owned()))
    }

    fn wall_time(&self) -> f64 {
        if self.state.config.wall_clock {
            self.state.elapsed_s + self.resumed_at.elapsed().as_secs_f64()
        } else {
            0.0
        }
    }

    /// Wall time to persist: the running total when wall-clock tracking is on.
    pub(crate) fn elapsed_for_save(&self) -> f64 {
        self.wall_time()
    }

    fn unlabeled(&self) -> Vec<usize> {
        (0..self.state.pool.len()).filter(|&i| !self.is_labeled[i]).collect()
    }

    fn labeled_sorted(&self) -> Vec<usize> {
        (0..self.state.pool.len()).filter(|&i| self.is_labeled[i]).collect()
    }

    /// Selects the next batch, or returns the one already pending. The first
    /// batch is `initial_random` items drawn uniformly.
    pub fn issue_batch(&mut self) -> Result<&PendingBatch, SessionError> {
        if self.state.pending.is_some() {
            return Ok(self.state.pending.as_ref().expect("checked"));
        }
        if self.is_done() {
            return Err(SessionError::BudgetReached(self.state.config.budget));
        }
        let cfg = &self.state.config;
        let unlabeled = self.unlabeled();
        let labeled = self.labeled_sorted();
        let (step, strategy, selection) = if self.state.labeled.is_empty() {
            let seed = derive_seed(cfg.seed, "init", 0);
            let ctx = SelectionContext::new(&self.embedded, &labeled, &unlabeled, None, seed, cfg.strategy_params)?;
            (0, StrategyKind::Random, select_random(&ctx, cfg.initial_random)?)
        } else {
            let step = self.state.step + 1;
            let n = cfg.batch_size.min(cfg.budget - self.labels_acquired()).min(unlabeled.len());
            let seed = derive_seed(cfg.seed, "select", step);
            if cfg.strategy == StrategyKind::InformativeDiverse && self.dendrogram.is_none() {
                self.dendrogram = Some(average_linkage(&self.embedded));
            }
            let cfg = &self.state.config;
            let mut ctx = SelectionContext::new(
                &self.embedded,
                &labeled,
                &unlabeled,
                self.state.classifier.as_ref(),
                seed,
                cfg.strategy_params,
            )?;
            if let Some(d) = &self.dendrogram {
                ctx = ctx.with_dendrogram(d);
            }
            (step, cfg.strategy, select(cfg.strategy, &ctx, n)?)
        };
        let batch = PendingBatch {
            batch_id: self.state.next_batch_id,
            step,
            strategy,
            indices: selection.indices,
            scores: selection.scores,
            issued_at: now_unix(),
            answers: BTreeMap::new(),
        };
        self.state.next_batch_id += 1;
        Ok(self.state.pending.insert(batch))
    }

    /// Outcome [`Session::record_answer`] would have, without recording.
    pub fn check_answer(&self, index: usize, label: usize) -> Result<AnswerStatus, SessionError> {
        let classes = self.state.classes.len();
        let crop = |i: usize| self.state.pool.crop_ids.get(i).cloned().unwrap_or_else(|| format!("#{i}"));
        let pending = self.state.pending.as_ref().ok_or(SessionError::NoPendingBatch)?;
        if !pending.indices.contains(&index) {
            return Err(SessionError::NotPending(crop(index)));
        }
        if label >= classes {
            return Err(SessionError::LabelOutOfRange { label, classes });
        }
        match pending.answers.get(&index) {
            Some(&existing) if existing == label => Ok(AnswerStatus::Duplicate),
            Some(&existing) => Err(SessionError::Conflict { crop_id: crop(index), existing, given: label }),
            None => Ok(AnswerStatus::Accepted),
        }
    }

    /// Records one answer for the pending batch. Re-sending the same label is
    /// a no-op; a different label is a conflict and changes nothing.
    pub fn record_answer(&mut self, index: usize, label: usize) -> Result<AnswerStatus, SessionError> {
        let status = self.check_answer(index, label)?;
        if status == AnswerStatus::Accepted {
            self.state.pending.as_mut().expect("checked").answers.insert(index, label);
        }
        Ok(status)
    }

    /// Drops the pending batch and its answers.
    pub fn abandon_pending(&mut self) {
        self.state.pending = None;
    }

    /// Moves a fully answered batch into the labeled set, fine-tunes the
    /// embedding if the new label count is on the schedule, retrains the
    /// classifier and appends a curve point. On error nothing changes.
    pub fn commit(&mut self) -> Result<&CurvePoint, SessionError> {
        let pending = self.state.pending.as_ref().ok_or(SessionError::NoPendingBatch)?;
        if !pending.is_complete() {
            return Err(SessionError::Incomplete {
                batch_id: pending.batch_id,
                missing: pending.indices.len() - pending.answers.len(),
            });
        }
        let cfg = &self.state.config;
        let step = pending.step;
        let mut labeled = self.state.labeled.clone();
        labeled.extend(pending.indices.iter().map(|&i| (i, pending.answers[&i])));
        let labels_after = labeled.len();
        let mut order: Vec<(usize, usize)> = labeled.clone();
        order.sort_unstable();
        let train_idx: Vec<usize> = order.iter().map(|p| p.0).collect();
        let train_labels: Vec<usize> = order.iter().map(|p| p.1).collect();

        let finetuned = if cfg.finetune_due(labels_after) {
            let base = self.state.pool.features.select_rows(&train_idx);
            let samples = LabeledSamples::new(&base, &train_labels)?;
            let objective = cfg.embedding.with_seed(derive_seed(cfg.seed, "finetune", labels_after as u64));
            let net = fine_tune(&self.state.embedding, samples, &objective)?;
            let embedded = net.embed_matrix(&self.state.pool.features)?;
            let holdout = match &self.state.holdout {
                Some(h) => Some(net.embed_matrix(&h.features)?),
                None => None,
            };
            Some((net, embedded, holdout))
        } else {
            None
        };
        let (embedded, holdout_embedded) = match &finetuned {
            Some((_, e, h)) => (e, h.as_ref()),
            None => (&self.embedded, self.holdout_embedded.as_ref()),
        };

        let train_x = embedded.select_rows(&train_idx);
        let samples = LabeledSamples::new(&train_x, &train_labels)?;
        let start = match (&self.state.classifier, cfg.warm_start) {
            (Some(prev), true) => prev.clone(),
            _ => MlpClassifier::new(
                embedded.cols(),
                cfg.classifier_hidden,
                self.state.classes.len(),
                cfg.classifier.init_scale,
                derive_seed(cfg.seed, "classifier-init", step),
            ),
        };
        let train_cfg = TrainConfig { seed: derive_seed(cfg.seed, "classifier-train", step), ..cfg.classifier.clone() };
        let classifier = train_classifier(&start, samples, &train_cfg)?;
        let accuracy = match (holdout_embedded, &self.state.holdout) {
            (Some(x), Some(h)) => Some(evaluate_accuracy(&classifier, LabeledSamples::new(x, &h.labels)?)?),
            _ => None,
        };
        let point = CurvePoint { labels: labels_after, accuracy, wall_time_s: self.wall_time() };
        let mut curve = self.state.curve.clone();
        curve.push(point)?;

        let pending = self.state.pending.take().expect("checked");
        for (&index, &score) in pending.indices.iter().zip(&pending.scores) {
            self.state.audit.push(AuditRow { step, strategy: pending.strategy, index, score });
            self.is_labeled[index] = true;
        }
        self.state.labeled = labeled;
        self.state.step = step;
        self.state.classifier = Some(classifier);
        self.state.curve = curve;
        if let Some((net, embedded, holdout)) = finetuned {
            self.state.embedding = net;
            self.embedded = embedded;
            self.holdout_embedded = holdout;
            self.dendrogram = None;
            self.state.finetune_events.push(labels_after);
        }
        Ok(self.state.curve.last().expect("just pushed"))
    }

    /// Issues a batch, asks `oracle` for every item and commits. If the
    /// oracle fails the batch is dropped and the session is unchanged.
    pub fn step(&mut self, oracle: &mut dyn Oracle) -> Result<&CurvePoint, SessionError> {
        if let Some(p) = &self.state.pending {
            return Err(SessionError::BatchPending(p.batch_id));
        }
        let next_batch_id = self.state.next_batch_id;
        let indices = self.issue_batch()?.indices.clone();
        let items: Vec<QueryItem> =
            indices.into_iter().map(|index| QueryItem { index, crop_id: self.crop_id(index).to_owned() }).collect();
        let answers = match oracle.label(&items) {
            Ok(a) if a.len() == items.len() => a,
            Ok(a) => {
                self.rollback_issue(next_batch_id);
                return Err(OracleError::Count { expected: items.len(), got: a.len() }.into());
            }
            Err(e) => {
                self.rollback_issue(next_batch_id);
                return Err(e.into());
            }
        };
        for (q, &label) in items.iter().zip(&answers) {
            if let Err(e) = self.record_answer(q.index, label) {
                self.rollback_issue(next_batch_id);
                return Err(e);
            }
        }
        if let Err(e) = self.commit() {
            self.rollback_issue(next_batch_id);
            return Err(e);
        }
        Ok(self.state.curve.last().expect("commit pushed a point"))
    }

    fn rollback_issue(&mut self, next_batch_id: u64) {
        self.state.pending = None;
        self.state.next_batch_id = next_batch_id;
    }
}

/// Creates a session and labels its initial random batch through `oracle`.
pub fn init_session<T: Scalar>(
    pool: Pool<T>,
    holdout: Option<Holdout<T>>,
    classes: Vec<String>,
    config: LoopConfig,
    embedding: EmbeddingNet<T>,
    oracle: &mut dyn Oracle,
) -> Result<Session<T>, SessionError> {
    let mut s = Session::new(pool, holdout, classes, config, embedding)?;
    s.step(oracle)?;
    Ok(s)
}

/// Runs a session from scratch to its budget against `oracle`.
pub fn run_simulation<T: Scalar>(
    pool: Pool<T>,
    holdout: Option<Holdout<T>>,
    classes: Vec<String>,
    config: LoopConfig,
    embedding: EmbeddingNet<T>,
    oracle: &mut dyn Oracle,
) -> Result<Session<T>, SessionError> {
    let mut s = init_session(pool, holdout, classes, config, embedding, oracle)?;
    while !s.is_done() {
        s.step(oracle)?;
    }
    Ok(s)
}
