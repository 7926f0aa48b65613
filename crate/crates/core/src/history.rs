//! Block training history: one append-only row per training run.
//!
//! Every fitness evaluation (full or cut short at the feature-cutting epoch)
//! deposits a record here; the surrogate builds its pairwise training set
//! from the non-partial rows. The store never rewrites a row. Lookups key on
//! the padded block vector and return the most recent row for that block.
//! Appends are synchronized so evaluations may run in parallel, and the
//! JSON-Lines file mirrors the in-memory order line for line.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

/// One row of training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord<F> {
    pub record_id: u64,
    /// Padded block vector: growth rates first, disabled layers at the
    /// disable value.
    pub block_vector: Vec<u32>,
    pub losses: Vec<F>,
    pub accuracies: Vec<F>,
    pub best_accuracy: F,
    /// 1-based epoch at which the best accuracy first appeared.
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub dataset_id: String,
    /// True when training stopped at the feature-cutting epoch instead of
    /// running the full early-stopped schedule.
    pub partial: bool,
    /// Logical clock: total trainer epochs consumed across the store when the
    /// row was appended, including this row's own epochs.
    pub timestamp: u64,
}

impl<F: Scalar> TrainingRecord<F> {
    /// Internal consistency of the curve fields.
    pub fn check(&self) -> Result<(), HistoryError> {
        if self.losses.len() != self.accuracies.len() || self.losses.len() != self.epochs_run {
            return Err(HistoryError::Corrupt(
                "curve lengths disagree with epochs_run",
            ));
        }
        if self.epochs_run == 0 {
            return Err(HistoryError::Corrupt("record has no epochs"));
        }
        let max = self
            .accuracies
            .iter()
            .cloned()
            .fold(F::neg_infinity(), F::max);
        if (max - self.best_accuracy).abs() > F::from_f64_lossy(1e-9) {
            return Err(HistoryError::Corrupt(
                "best_accuracy is not the curve maximum",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum HistoryError {
    #[error("corrupt training record: {0}")]
    Corrupt(&'static str),
    #[error("history io: {0}")]
    Io(#[from] std::io::Error),
    #[error("history parse: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Fields of a record the store fills in at append time.
#[derive(Debug, Clone)]
pub struct NewRecord<F> {
    pub block_vector: Vec<u32>,
    pub losses: Vec<F>,
    pub accuracies: Vec<F>,
    pub best_accuracy: F,
    pub best_epoch: usize,
    pub dataset_id: String,
    pub partial: bool,
}

struct StoreInner<F> {
    records: Vec<TrainingRecord<F>>,
    latest_by_block: HashMap<Vec<u32>, usize>,
    epochs_total: u64,
    sink: Option<BufWriter<File>>,
}

/// Append-only store of training records, safe for concurrent appends.
pub struct HistoryStore<F> {
    inner: Mutex<StoreInner<F>>,
}

impl<F: Scalar> Default for HistoryStore<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> HistoryStore<F> {
    pub fn new() -> Self {
        Self {
            inner: Mutex::new(StoreInner {
                records: Vec::new(),
                latest_by_block: HashMap::new(),
                epochs_total: 0,
                sink: None,
            }),
        }
    }

    /// Store that mirrors every append to a JSON-Lines file, creating or
    /// loading it first so a run can resume where it stopped.
    pub fn with_file(path: &Path) -> Result<Self, HistoryError> {
        let store = if path.exists() {
            Self::load_jsonl(path)?
        } else {
            Self::new()
        };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        store.inner.lock().unwrap().sink = Some(BufWriter::new(file));
        Ok(store)
    }

    /// Reads a JSON-Lines history file into memory.
    pub fn load_jsonl(path: &Path) -> Result<Self, HistoryError> {
        let store = Self::new();
        let reader = BufReader::new(File::open(path)?);
        {
            let mut inner = store.inner.lock().unwrap();
            for line in reader.lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: TrainingRecord<F> = serde_json::from_str(&line)?;
                record.check()?;
                let idx = inner.records.len();
                inner
                    .latest_by_block
                    .insert(record.block_vector.clone(), idx);
                inner.epochs_total = record.timestamp;
                inner.records.push(record);
            }
        }
        Ok(store)
    }

    /// Appends a record, assigning its id and logical timestamp. Returns the
    /// stored row.
    pub fn append(&self, new: NewRecord<F>) -> Result<TrainingRecord<F>, HistoryError> {
        let mut inner = self.inner.lock().unwrap();
        let record_id = inner.records.len() as u64;
        let epochs = new.losses.len();
        inner.epochs_total += epochs as u64;
        let record = TrainingRecord {
            record_id,
            block_vector: new.block_vector,
            losses: new.losses,
            accuracies: new.accuracies,
            best_accuracy: new.best_accuracy,
            best_epoch: new.best_epoch,
            epochs_run: epochs,
            dataset_id: new.dataset_id,
            partial: new.partial,
            timestamp: inner.epochs_total,
        };
        record.check()?;
        if let Some(sink) = inner.sink.as_mut() {
            serde_json::to_writer(&mut *sink, &record)?;
            sink.write_all(b"\n")?;
            sink.flush()?;
        }
        let idx = inner.records.len();
        inner
            .latest_by_block
            .insert(record.block_vector.clone(), idx);
        inner.records.push(record.clone());
        Ok(record)
    }

    /// Most recent record for a block vector.
    pub fn lookup(&self, block_vector: &[u32]) -> Option<TrainingRecord<F>> {
        let inner = self.inner.lock().unwrap();
        inner
            .latest_by_block
            .get(block_vector)
            .map(|&idx| inner.records[idx].clone())
    }

    /// Snapshot of all records in append order.
    pub fn records(&self) -> Vec<TrainingRecord<F>> {
        self.inner.lock().unwrap().records.clone()
    }

    /// Snapshot of the non-partial records in append order.
    pub fn full_records(&self) -> Vec<TrainingRecord<F>> {
        self.inner
            .lock()
            .unwrap()
            .records
            .iter()
            .filter(|r| !r.partial)
            .cloned()
            .collect()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Total trainer epochs recorded so far.
    pub fn epochs_total(&self) -> u64 {
        self.inner.lock().unwrap().epochs_total
    }
}
