//! Labeling state machine: leases, quality control, the append-only choice
//! log and its replay.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use layoutrank::pairs::{ComparisonPair, Dataset, Side};
use layoutrank::render::render;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

pub type Result<T> = std::result::Result<T, ServiceError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoreConfig {
    /// Comparison tasks per batch, before the quality-control duplicate.
    pub batch_pairs: usize,
    /// Distinct sessions that must judge each pair.
    pub raters: usize,
    pub lease_ms: u64,
    pub base_height: u32,
    pub seed: u64,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig {
            batch_pairs: 10,
            raters: 3,
            lease_ms: 10 * 60 * 1000,
            base_height: 300,
            seed: 0,
        }
    }
}

/// Which of the two stacked charts a labeler picked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Position {
    Top,
    Bottom,
}

/// One persisted judgement of an accepted batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChoiceRecord {
    pub pair_id: String,
    pub session: String,
    pub batch_id: String,
    pub chosen: Side,
    /// Side shown on top.
    pub shown_first: Side,
    pub timestamp_ms: u64,
    /// Set on the task whose duplicate confirmed the batch.
    pub quality_control: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartView {
    pub svg: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: String,
    pub position: usize,
    /// Always `"stacked"`: one chart above the other.
    pub presentation: String,
    pub top: ChartView,
    pub bottom: ChartView,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchView {
    pub batch_id: String,
    pub session: String,
    pub expires_at_ms: u64,
    pub tasks: Vec<TaskView>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskChoice {
    pub task_id: String,
    pub choice: Position,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Submission {
    pub session: String,
    pub batch_id: String,
    pub choices: Vec<TaskChoice>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Rejected,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubmitOutcome {
    pub verdict: Verdict,
    pub records: usize,
    pub progress: Progress,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub pairs: usize,
    /// Pairs still short of the required number of judgements.
    pub pending: usize,
    pub leased: usize,
    /// Pairs with every required judgement.
    pub labeled: usize,
    pub unanimous: usize,
    pub discarded: usize,
    pub accepted_batches: usize,
    pub rejected_batches: usize,
    pub records: usize,
}

#[derive(Clone, Debug)]
struct Slot {
    task_id: String,
    pair: usize,
    shown_first: Side,
    duplicate: bool,
}

#[derive(Clone, Debug)]
struct Lease {
    slots: Vec<Slot>,
    expires_at_ms: u64,
    view: BatchView,
}

/// In-memory index over a pool of pairs plus the choice log.
pub struct Store {
    cfg: StoreConfig,
    pool: Vec<ComparisonPair>,
    experiment: layoutrank::Experiment,
    index: HashMap<String, usize>,
    choices: Vec<Vec<ChoiceRecord>>,
    leases: HashMap<String, Lease>,
    leased: HashMap<usize, String>,
    records: usize,
    accepted: HashSet<String>,
    rejected: usize,
    log: Option<(PathBuf, File)>,
    rng: ChaCha8Rng,
}

impl Store {
    /// Builds the store from the unlabeled pairs of `pool` and replays the
    /// log at `log_path` when it exists. New records are appended there.
    pub fn open(pool: &Dataset, log_path: Option<&Path>, cfg: StoreConfig) -> Result<Store> {
        if cfg.batch_pairs == 0 || cfg.raters == 0 || cfg.lease_ms == 0 {
            return Err(ServiceError::InvalidRequest(
                "batch size, rater count and lease must be positive".into(),
            ));
        }
        let pairs: Vec<ComparisonPair> = pool.pairs.iter().filter(|p| p.label.is_none()).cloned().collect();
        let index = pairs.iter().enumerate().map(|(i, p)| (p.id.clone(), i)).collect();
        let mut store = Store {
            choices: vec![Vec::new(); pairs.len()],
            experiment: pool.experiment,
            pool: pairs,
            index,
            leases: HashMap::new(),
            leased: HashMap::new(),
            records: 0,
            accepted: HashSet::new(),
            rejected: 0,
            log: None,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
        };
        if let Some(path) = log_path {
            let io = |e: std::io::Error| ServiceError::Io(format!("{}: {e}", path.display()));
            let mut valid = 0;
            if path.exists() {
                let (records, len) = read_log_prefix(path)?;
                for rec in records {
                    store.apply(rec)?;
                }
                valid = len;
            }
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(io)?;
            if file.metadata().map_err(io)?.len() > valid {
                file.set_len(valid).map_err(io)?;
            }
            store.log = Some((path.to_path_buf(), file));
        }
        Ok(store)
    }

    pub fn config(&self) -> &StoreConfig {
        &self.cfg
    }

    fn apply(&mut self, rec: ChoiceRecord) -> Result<()> {
        let &i = self
            .index
            .get(&rec.pair_id)
            .ok_or_else(|| ServiceError::InvalidRequest(format!("log names unknown pair {}", rec.pair_id)))?;
        if self.choices[i].iter().any(|r| r.session == rec.session) {
            return Err(ServiceError::InvalidRequest(format!(
                "session {} judged pair {} twice",
                rec.session, rec.pair_id
            )));
        }
        self.accepted.insert(rec.batch_id.clone());
        self.choices[i].push(rec);
        self.records += 1;
        Ok(())
    }

    fn expire(&mut self, now_ms: u64) {
        let expired: Vec<String> = self
            .leases
            .iter()
            .filter(|(_, l)| l.expires_at_ms <= now_ms)
            .map(|(s, _)| s.clone())
            .collect();
        for session in expired {
            self.release(&session);
        }
    }

    fn release(&mut self, session: &str) {
        if let Some(lease) = self.leases.remove(session) {
            for slot in lease.slots {
                self.leased.remove(&slot.pair);
            }
        }
    }

    fn eligible(&self, i: usize, session: &str) -> bool {
        self.choices[i].len() < self.cfg.raters
            && !self.leased.contains_key(&i)
            && self.choices[i].iter().all(|r| r.session != session)
    }

    fn task_id(&mut self) -> String {
        format!("t{:016x}", self.rng.gen::<u64>())
    }

    /// Leases `batch_pairs` pairs to `session` and returns them plus one
    /// duplicate with sides swapped at a random position. A session with a
    /// live lease gets the same batch again.
    pub fn serve_batch(&mut self, session: &str, now_ms: u64) -> Result<BatchView> {
        check_session(session)?;
        self.expire(now_ms);
        if let Some(lease) = self.leases.get(session) {
            return Ok(lease.view.clone());
        }
        let mut open: Vec<usize> = (0..self.pool.len()).filter(|&i| self.eligible(i, session)).collect();
        let need = self.cfg.batch_pairs;
        if open.len() < need {
            return Err(ServiceError::InsufficientPairs {
                available: open.len(),
                needed: need,
            });
        }
        open.shuffle(&mut self.rng);
        open.truncate(need);
        let mut slots = Vec::with_capacity(need + 1);
        for &pair in &open {
            let shown_first = if self.rng.gen() { Side::A } else { Side::B };
            let task_id = self.task_id();
            slots.push(Slot {
                task_id,
                pair,
                shown_first,
                duplicate: false,
            });
        }
        let original = self.rng.gen_range(0..need);
        let at = self.rng.gen_range(0..=need);
        let dup = Slot {
            task_id: self.task_id(),
            pair: slots[original].pair,
            shown_first: slots[original].shown_first.other(),
            duplicate: true,
        };
        slots.insert(at, dup);

        let batch_id = format!("b{:016x}", self.rng.gen::<u64>());
        let mut tasks = Vec::with_capacity(slots.len());
        for (position, slot) in slots.iter().enumerate() {
            let pair = &self.pool[slot.pair];
            let svg = |side: Side| -> Result<ChartView> {
                let (_, svg) = render(&pair.data_for(side), pair.side(side), self.cfg.base_height)?;
                Ok(ChartView { svg })
            };
            tasks.push(TaskView {
                task_id: slot.task_id.clone(),
                position,
                presentation: "stacked".into(),
                top: svg(slot.shown_first)?,
                bottom: svg(slot.shown_first.other())?,
            });
        }
        let view = BatchView {
            batch_id,
            session: session.to_string(),
            expires_at_ms: now_ms + self.cfg.lease_ms,
            tasks,
        };
        for &pair in &open {
            self.leased.insert(pair, session.to_string());
        }
        self.leases.insert(
            session.to_string(),
            Lease {
                slots,
                expires_at_ms: view.expires_at_ms,
                view: view.clone(),
            },
        );
        Ok(view)
    }

    /// Checks the duplicate against its original. Accepted batches append
    /// one record per distinct pair to the log and flush it; rejected ones
    /// persist nothing and return their pairs to the queue.
    pub fn submit_batch(&mut self, sub: &Submission, now_ms: u64) -> Result<SubmitOutcome> {
        check_session(&sub.session)?;
        self.expire(now_ms);
        let lease = self
            .leases
            .get(&sub.session)
            .ok_or_else(|| ServiceError::UnknownSession(sub.session.clone()))?;
        if lease.view.batch_id != sub.batch_id {
            return Err(ServiceError::InvalidRequest(format!(
                "batch {} is not the active batch of session {}",
                sub.batch_id, sub.session
            )));
        }
        let mut picked: HashMap<&str, Position> = HashMap::new();
        for c in &sub.choices {
            if !lease.slots.iter().any(|s| s.task_id == c.task_id) {
                return Err(ServiceError::PartialBatch(format!("unknown task {}", c.task_id)));
            }
            if picked.insert(&c.task_id, c.choice).is_some() {
                return Err(ServiceError::PartialBatch(format!("task {} answered twice", c.task_id)));
            }
        }
        if picked.len() != lease.slots.len() {
            return Err(ServiceError::PartialBatch(format!(
                "{} of {} tasks answered",
                picked.len(),
                lease.slots.len()
            )));
        }
        let chosen = |slot: &Slot| match picked[slot.task_id.as_str()] {
            Position::Top => slot.shown_first,
            Position::Bottom => slot.shown_first.other(),
        };
        let dup = lease.slots.iter().find(|s| s.duplicate).expect("batch has a duplicate");
        let original = lease
            .slots
            .iter()
            .find(|s| !s.duplicate && s.pair == dup.pair)
            .expect("duplicate has an original");
        let consistent = chosen(dup) == chosen(original);

        if !consistent {
            self.release(&sub.session);
            self.rejected += 1;
            return Ok(SubmitOutcome {
                verdict: Verdict::Rejected,
                records: 0,
                progress: self.progress(),
            });
        }
        let records: Vec<ChoiceRecord> = lease
            .slots
            .iter()
            .filter(|s| !s.duplicate)
            .map(|s| ChoiceRecord {
                pair_id: self.pool[s.pair].id.clone(),
                session: sub.session.clone(),
                batch_id: sub.batch_id.clone(),
                chosen: chosen(s),
                shown_first: s.shown_first,
                timestamp_ms: now_ms,
                quality_control: s.pair == dup.pair,
            })
            .collect();
        if let Some((path, file)) = &mut self.log {
            let mut buf = String::new();
            for r in &records {
                buf.push_str(&serde_json::to_string(r).expect("records serialize"));
                buf.push('\n');
            }
            file.write_all(buf.as_bytes())
                .and_then(|_| file.flush())
                .and_then(|_| file.sync_data())
                .map_err(|e| ServiceError::Io(format!("{}: {e}", path.display())))?;
        }
        self.release(&sub.session);
        let n = records.len();
        for r in records {
            self.apply(r)?;
        }
        Ok(SubmitOutcome {
            verdict: Verdict::Accepted,
            records: n,
            progress: self.progress(),
        })
    }

    pub fn progress(&self) -> Progress {
        let labeled: Vec<&Vec<ChoiceRecord>> =
            self.choices.iter().filter(|c| c.len() >= self.cfg.raters).collect();
        let unanimous = labeled.iter().filter(|c| unanimous_side(c).is_some()).count();
        Progress {
            pairs: self.pool.len(),
            pending: self.pool.len() - labeled.len(),
            leased: self.leased.len(),
            labeled: labeled.len(),
            unanimous,
            discarded: labeled.len() - unanimous,
            accepted_batches: self.accepted.len(),
            rejected_batches: self.rejected,
            records: self.records,
        }
    }

    /// Pairs every required session judged the same way, labeled.
    pub fn dataset(&self) -> Dataset {
        let pairs = self
            .pool
            .iter()
            .zip(&self.choices)
            .filter(|(_, c)| c.len() >= self.cfg.raters)
            .filter_map(|(p, c)| {
                let side = unanimous_side(c)?;
                Some(ComparisonPair {
                    label: Some(side),
                    ..p.clone()
                })
            })
            .collect();
        Dataset {
            experiment: self.experiment,
            pairs,
        }
    }

    pub fn records(&self) -> impl Iterator<Item = &ChoiceRecord> {
        self.choices.iter().flatten()
    }
}

fn unanimous_side(records: &[ChoiceRecord]) -> Option<Side> {
    let first = records.first()?.chosen;
    records.iter().all(|r| r.chosen == first).then_some(first)
}

fn check_session(session: &str) -> Result<()> {
    if session.is_empty() || session.len() > 128 || session.chars().any(char::is_control) {
        return Err(ServiceError::InvalidRequest("session ids are 1-128 printable characters".into()));
    }
    Ok(())
}

/// Reads a choice log. A final line without a newline is an interrupted
/// write and is skipped.
pub fn read_log(path: &Path) -> Result<Vec<ChoiceRecord>> {
    Ok(read_log_prefix(path)?.0)
}

/// Records plus the byte length of the complete-line prefix.
fn read_log_prefix(path: &Path) -> Result<(Vec<ChoiceRecord>, u64)> {
    let io = |e: std::io::Error| ServiceError::Io(format!("{}: {e}", path.display()));
    let mut reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    let mut line = String::new();
    let mut number = 0;
    let mut valid = 0u64;
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(io)?;
        if n == 0 {
            break;
        }
        number += 1;
        if !line.ends_with('\n') {
            log::warn!("{}: ignoring truncated final line {number}", path.display());
            break;
        }
        valid += n as u64;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| {
            ServiceError::InvalidRequest(format!("{} line {number}: {e}", path.display()))
        })?);
    }
    Ok((out, valid))
}

/// Unanimously labeled pairs from a pool and a choice log, without serving.
pub fn replay(pool: &Dataset, log_path: &Path, raters: usize) -> Result<Dataset> {
    let mut store = Store::open(
        pool,
        None,
        StoreConfig {
            raters,
            ..StoreConfig::default()
        },
    )?;
    for rec in read_log(log_path)? {
        store.apply(rec)?;
    }
    Ok(store.dataset())
}
