//! On-disk session directory with a label journal for crash recovery.
//!
//! ```text
//! <dir>/config.toml      loop configuration
//! <dir>/classes.txt      class table, one name per line
//! <dir>/state.json       full session state (rewritten atomically)
//! <dir>/journal.jsonl    append-only label journal
//! <dir>/embedding.json   embedding checkpoint
//! <dir>/classifier.json  classifier checkpoint
//! <dir>/curve.csv        labels,accuracy,wall_time_s
//! <dir>/audit.csv        step,strategy,index,score
//! ```
//!
//! Every answer is appended to the journal and synced before it is applied.
//! `state.json` is rewritten when a batch is issued and after each commit, so
//! on reopen the journal entries of the pending batch are replayed and no
//! answer is lost or asked twice.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{load_session, save_session, AnswerStatus, CurvePoint, Oracle, PendingBatch, QueryItem, Session, SessionError};
use crate::checkpoint::Checkpoint;
use crate::fsio::write_atomic;
use crate::scalar::Scalar;

pub const CONFIG_FILE: &str = "config.toml";
pub const CLASSES_FILE: &str = "classes.txt";
pub const STATE_FILE: &str = "state.json";
pub const JOURNAL_FILE: &str = "journal.jsonl";
pub const EMBEDDING_FILE: &str = "embedding.json";
pub const CLASSIFIER_FILE: &str = "classifier.json";
pub const CURVE_FILE: &str = "curve.csv";
pub const AUDIT_FILE: &str = "audit.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JournalRecord {
    pub step: u64,
    pub batch_id: u64,
    pub crop_id: String,
    pub index: usize,
    pub label: usize,
    /// Unix seconds.
    pub timestamp: f64,
    pub oracle_kind: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SessionError + '_ {
    move |source| SessionError::Io { path: path.display().to_string(), source }
}

/// Reads every complete journal line. A trailing partial line, left by a
/// crash during an append, is cut off the file.
pub fn read_journal(path: &Path) -> Result<Vec<JournalRecord>, SessionError> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
    if complete < bytes.len() {
        let f = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
        f.set_len(complete as u64).map_err(io_err(path))?;
        f.sync_all().map_err(io_err(path))?;
    }
    let mut out = Vec::new();
    for (n, line) in BufReader::new(&bytes[..complete]).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| SessionError::Format(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

fn now_secs() -> f64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// A session bound to its directory. All mutation goes through here so that
/// the files stay consistent with the in-memory state.
pub struct DurableSession<T: Scalar> {
    dir: PathBuf,
    session: Session<T>,
    journal: File,
}

impl<T: Scalar> DurableSession<T> {
    /// Writes a new session directory. Fails if `dir` already holds a session.
    pub fn create(dir: &Path, session: Session<T>) -> Result<Self, SessionError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let state = dir.join(STATE_FILE);
        if state.exists() {
            return Err(SessionError::Config(format!("{} already holds a session", dir.display())));
        }
        let cfg = dir.join(CONFIG_FILE);
        write_atomic(&cfg, session.config().to_toml().as_bytes()).map_err(io_err(&cfg))?;
        let classes = dir.join(CLASSES_FILE);
        let table: String = session.classes().iter().map(|c| format!("{c}\n")).collect();
        write_atomic(&classes, table.as_bytes()).map_err(io_err(&classes))?;
        let jpath = dir.join(JOURNAL_FILE);
        let journal = OpenOptions::new().create(true).append(true).open(&jpath).map_err(io_err(&jpath))?;
        let me = Self { dir: dir.to_owned(), session, journal };
        me.persist()?;
        Ok(me)
    }

    /// Loads `state.json` and replays journaled answers of the pending batch.
    pub fn open(dir: &Path) -> Result<Self, SessionError> {
        let spath = dir.join(STATE_FILE);
        let bytes = std::fs::read(&spath).map_err(io_err(&spath))?;
        let mut session = load_session::<T>(&bytes)?;
        let jpath = dir.join(JOURNAL_FILE);
        let records = read_journal(&jpath)?;
        if let Some(batch_id) = session.pending().map(|p| p.batch_id) {
            for r in records.iter().filter(|r| r.batch_id == batch_id) {
                if session.index_of(&r.crop_id) != Some(r.index) {
                    return Err(SessionError::Corrupt(format!("journal entry for {:?} has index {}", r.crop_id, r.index)));
                }
                session.record_answer(r.index, r.label)?;
            }
        }
        let journal = OpenOptions::new().create(true).append(true).open(&jpath).map_err(io_err(&jpath))?;
        Ok(Self { dir: dir.to_owned(), session, journal })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn session(&self) -> &Session<T> {
        &self.session
    }

    pub fn into_session(self) -> Session<T> {
        self.session
    }

    /// Returns the pending batch, issuing and persisting a new one if needed.
    pub fn issue(&mut self) -> Result<&PendingBatch, SessionError> {
        if self.session.pending().is_none() {
            self.session.issue_batch()?;
            if let Err(e) = self.save_state() {
                self.session.abandon_pending();
                return Err(e);
            }
        }
        Ok(self.session.pending().expect("issued"))
    }

    /// Journals then applies one answer. Duplicates are not journaled again.
    pub fn answer(&mut self, index: usize, label: usize, oracle_kind: &str) -> Result<AnswerStatus, SessionError> {
        let status = self.session.check_answer(index, label)?;
        if status == AnswerStatus::Duplicate {
            return Ok(status);
        }
        let p = self.session.pending().expect("check_answer saw a batch");
        let rec = JournalRecord {
            step: p.step,
            batch_id: p.batch_id,
            crop_id: self.session.crop_id(index).to_owned(),
            index,
            label,
            timestamp: now_secs(),
            oracle_kind: oracle_kind.to_owned(),
        };
        let mut line = serde_json::to_vec(&rec).expect("journal record serializes");
        line.push(b'\n');
        let jpath = self.dir.join(JOURNAL_FILE);
        self.journal.write_all(&line).map_err(io_err(&jpath))?;
        self.journal.sync_data().map_err(io_err(&jpath))?;
        self.session.record_answer(index, label)
    }

    /// Commits the complete pending batch and rewrites every derived file.
    pub fn commit(&mut self) -> Result<CurvePoint, SessionError> {
        let point = *self.session.commit()?;
        self.persist()?;
        Ok(point)
    }

    /// One synchronous step: asks `oracle` only for the unanswered items of
    /// the pending batch, journals the answers, calls `after_journal` and
    /// commits.
    pub fn step_with(
        &mut self,
        oracle: &mut dyn Oracle,
        after_journal: &mut dyn FnMut(&PendingBatch),
    ) -> Result<CurvePoint, SessionError> {
        let unanswered: Vec<usize> = self.issue()?.unanswered().collect();
        let items: Vec<QueryItem> = unanswered
            .iter()
            .map(|&index| QueryItem { index, crop_id: self.session.crop_id(index).to_owned() })
            .collect();
        if !items.is_empty() {
            let labels = oracle.label(&items)?;
            if labels.len() != items.len() {
                return Err(super::OracleError::Count { expected: items.len(), got: labels.len() }.into());
            }
            for (q, &l) in items.iter().zip(&labels) {
                self.answer(q.index, l, oracle.kind())?;
            }
        }
        after_journal(self.session.pending().expect("batch still pending"));
        self.commit()
    }

    pub fn step(&mut self, oracle: &mut dyn Oracle) -> Result<CurvePoint, SessionError> {
        self.step_with(oracle, &mut |_| {})
    }

    /// Steps until the budget is reached.
    pub fn run(&mut self, oracle: &mut dyn Oracle) -> Result<(), SessionError> {
        while !self.session.is_done() {
            self.step(oracle)?;
        }
        Ok(())
    }

    fn save_state(&self) -> Result<(), SessionError> {
        let p = self.dir.join(STATE_FILE);
        write_atomic(&p, &save_session(&self.session)).map_err(io_err(&p))
    }

    fn persist(&self) -> Result<(), SessionError> {
        let st = self.session.state();
        let emb = self.dir.join(EMBEDDING_FILE);
        write_atomic(&emb, &Checkpoint::embedding(&st.embedding).to_bytes()).map_err(io_err(&emb))?;
        if let Some(clf) = &st.classifier {
            let p = self.dir.join(CLASSIFIER_FILE);
            write_atomic(&p, &Checkpoint::classifier(clf, &st.classes).to_bytes()).map_err(io_err(&p))?;
        }
        let curve = self.dir.join(CURVE_FILE);
        write_atomic(&curve, st.curve.to_csv().as_bytes()).map_err(io_err(&curve))?;
        let mut audit = String::from("step,strategy,index,score\n");
        for r in &st.audit {
            audit.push_str(&format!("{},{},{},{}\n", r.step, r.strategy, r.index, r.score));
        }
        let ap = self.dir.join(AUDIT_FILE);
        write_atomic(&ap, audit.as_bytes()).map_err(io_err(&ap))?;
        self.save_state()
    }
}
