//! Asynchronous rollout scheduling over a virtual clock.
//!
//! Each training step issues a batch of prompts. The main pool waits only for
//! the fastest `ceil(cutoff * batch)` of them; the rest keep running in a
//! standalone pool and join the train batch of the first later step that ends
//! after they finish, unless that would make them too stale.

use std::collections::BTreeMap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub batch_size: usize,
    pub cutoff_fraction: f64,
    pub max_off_policy_steps: usize,
    pub group_size: usize,
    /// Parameters of the log-normal rollout duration model.
    pub duration_mu: f64,
    pub duration_sigma: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            cutoff_fraction: 0.95,
            max_off_policy_steps: 5,
            group_size: 8,
            duration_mu: 0.0,
            duration_sigma: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchedulerError {
    #[error("cutoff fraction must be in (0, 1], got {0}")]
    Cutoff(String),
    #[error("{0} must be positive")]
    Zero(&'static str),
    #[error("duration model: {0}")]
    Duration(String),
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<(), SchedulerError> {
        if !(self.cutoff_fraction > 0.0 && self.cutoff_fraction <= 1.0) {
            return Err(SchedulerError::Cutoff(self.cutoff_fraction.to_string()));
        }
        if self.batch_size == 0 {
            return Err(SchedulerError::Zero("batch_size"));
        }
        if self.group_size == 0 {
            return Err(SchedulerError::Zero("group_size"));
        }
        LogNormal::new(self.duration_mu, self.duration_sigma).map_err(|e| SchedulerError::Duration(e.to_string()))?;
        Ok(())
    }

    /// Jobs the main pool completes per step.
    pub fn in_step_count(&self) -> usize {
        let n = (self.cutoff_fraction * self.batch_size as f64).ceil() as usize;
        n.clamp(1, self.batch_size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    MainPool,
    StandalonePool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    /// Would exceed the off-policy bound.
    Stale,
    /// Still running when the last step ended.
    RunEnded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutJob {
    pub prompt_id: usize,
    pub issue_step: usize,
    /// Step whose train batch received the job.
    pub completion_step: Option<usize>,
    pub duration: f64,
    pub finish_time: f64,
    pub origin: Origin,
    pub dropped: Option<DropReason>,
}

impl RolloutJob {
    pub fn staleness(&self) -> Option<usize> {
        self.completion_step.map(|c| c - self.issue_step)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub start: f64,
    pub end: f64,
    /// Prompt ids trained at this step: in-step completions, then carryovers.
    pub trained: Vec<usize>,
    pub in_step: usize,
    pub carried_in: usize,
    pub deferred: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub record: StepRecord,
    pub train_batch: Vec<RolloutJob>,
    pub dropped: Vec<RolloutJob>,
}

/// Runs one step starting at `start`: `batch` are the freshly issued jobs (their
/// durations already drawn), `pending` the stragglers still in flight. Returns
/// the step outcome and the jobs carried over to the next step.
pub fn schedule_step(
    step: usize,
    start: f64,
    batch: Vec<RolloutJob>,
    pending: Vec<RolloutJob>,
    cfg: &SchedulerConfig,
) -> (StepOutcome, Vec<RolloutJob>) {
    let mut batch = batch;
    batch.sort_by(|a, b| a.duration.total_cmp(&b.duration).then(a.prompt_id.cmp(&b.prompt_id)));
    let n = cfg.in_step_count().min(batch.len());
    let end = batch.get(n.saturating_sub(1)).map_or(start, |j| j.finish_time);
    let stragglers = batch.split_off(n);

    let mut train_batch: Vec<RolloutJob> = batch
        .into_iter()
        .map(|mut j| {
            j.completion_step = Some(step);
            j.origin = Origin::MainPool;
            j
        })
        .collect();
    let in_step = train_batch.len();

    let mut dropped = Vec::new();
    let mut carry = Vec::new();
    let mut carried_in = 0;
    for mut j in pending {
        let stale_now = step - j.issue_step > cfg.max_off_policy_steps;
        if j.finish_time <= end && !stale_now {
            j.completion_step = Some(step);
            carried_in += 1;
            train_batch.push(j);
        } else if stale_now || step - j.issue_step == cfg.max_off_policy_steps {
            // Any later step would exceed the bound.
            j.dropped = Some(DropReason::Stale);
            dropped.push(j);
        } else {
            carry.push(j);
        }
    }
    let deferred = stragglers.len();
    carry.extend(stragglers.into_iter().map(|mut j| {
        j.origin = Origin::StandalonePool;
        j
    }));
    let record = StepRecord {
        step,
        start,
        end,
        trained: train_batch.iter().map(|j| j.prompt_id).collect(),
        in_step,
        carried_in,
        deferred,
        dropped: dropped.len(),
    };
    (StepOutcome { record, train_batch, dropped }, carry)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleHistory {
    pub config: SchedulerConfig,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    /// Every issued job in issue order, with its final fate.
    pub jobs: Vec<RolloutJob>,
}

impl ScheduleHistory {
    pub fn trained(&self) -> impl Iterator<Item = &RolloutJob> {
        self.jobs.iter().filter(|j| j.dropped.is_none())
    }

    pub fn dropped(&self) -> impl Iterator<Item = &RolloutJob> {
        self.jobs.iter().filter(|j| j.dropped.is_some())
    }
}

/// Draws the durations of one step's batch.
pub fn issue_batch(
    rng: &mut ChaCha8Rng,
    dist: &LogNormal<f64>,
    step: usize,
    start: f64,
    batch_size: usize,
) -> Vec<RolloutJob> {
    (0..batch_size)
        .map(|i| {
            let duration = dist.sample(rng);
            RolloutJob {
                prompt_id: step * batch_size + i,
                issue_step: step,
                completion_step: None,
                duration,
                finish_time: start + duration,
                origin: Origin::MainPool,
                dropped: None,
            }
        })
        .collect()
}

/// Simulates `steps` training steps.
pub fn run_schedule(cfg: &SchedulerConfig, steps: usize, seed: u64) -> Result<ScheduleHistory, SchedulerError> {
    cfg.validate()?;
    let dist =
        LogNormal::new(cfg.duration_mu, cfg.duration_sigma).map_err(|e| SchedulerError::Duration(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fates: BTreeMap<usize, RolloutJob> = BTreeMap::new();
    let mut records = Vec::with_capacity(steps);
    let mut pending = Vec::new();
    let mut clock = 0.0;
    for step in 0..steps {
        let batch = issue_batch(&mut rng, &dist, step, clock, cfg.batch_size);
        let (outcome, carry) = schedule_step(step, clock, batch, pending, cfg);
        for j in outcome.train_batch.into_iter().chain(outcome.dropped) {
            fates.insert(j.prompt_id, j);
        }
        clock = outcome.record.end;
        records.push(outcome.record);
        pending = carry;
    }
    for mut j in pending {
        j.dropped = Some(DropReason::RunEnded);
        fates.insert(j.prompt_id, j);
    }
    Ok(ScheduleHistory { config: *cfg, seed, steps: records, jobs: fates.into_values().collect() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StalenessReport {
    /// Staleness value to number of trained jobs.
    pub histogram: BTreeMap<usize, usize>,
    pub max: usize,
    pub trained: usize,
    pub dropped_stale: usize,
    pub dropped_run_ended: usize,
}

/// Staleness distribution of the trained jobs.
///
/// # Panics
/// If a trained job exceeds the configured off-policy bound.
pub fn staleness_report(history: &ScheduleHistory) -> StalenessReport {
    let mut histogram = BTreeMap::new();
    for j in history.trained() {
        *histogram.entry(j.staleness().expect("trained jobs have a completion step")).or_insert(0) += 1;
    }
    let max = histogram.keys().next_back().copied().unwrap_or(0);
    assert!(
        max <= history.config.max_off_policy_steps,
        "trained job with staleness {max} exceeds the bound {}",
        history.config.max_off_policy_steps
    );
    let count = |r: DropReason| history.dropped().filter(|j| j.dropped == Some(r)).count();
    StalenessReport {
        trained: histogram.values().sum(),
        histogram,
        max,
        dropped_stale: count(DropReason::Stale),
        dropped_run_ended: count(DropReason::RunEnded),
    }
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum LogLine<'a> {
    Header { format: &'a str, version: u32, seed: u64, config: &'a SchedulerConfig },
    Step(&'a StepRecord),
    Job(&'a RolloutJob),
}

pub const SCHEDULE_FORMAT: &str = "context-fold-schedule";

/// Writes the schedule as JSON lines: a header, one line per step, one per job.
pub fn write_schedule_log<W: Write>(out: &mut W, history: &ScheduleHistory) -> std::io::Result<()> {
    let mut line = |l: &LogLine<'_>| -> std::io::Result<()> {
        serde_json::to_writer(&mut *out, l)?;
        out.write_all(b"\n")
    };
    line(&LogLine::Header { format: SCHEDULE_FORMAT, version: 1, seed: history.seed, config: &history.config })?;
    for s in &history.steps {
        line(&LogLine::Step(s))?;
    }
    for j in &history.jobs {
        line(&LogLine::Job(j))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ceiling_cutoff() {
        assert_eq!(SchedulerConfig::default().in_step_count(), 31);
        let sync = SchedulerConfig { cutoff_fraction: 1.0, ..SchedulerConfig::default() };
        assert_eq!(sync.in_step_count(), 32);
    }

    #[test]
    fn synchronous_run_has_no_staleness() {
        let cfg = SchedulerConfig { cutoff_fraction: 1.0, ..SchedulerConfig::default() };
        let h = run_schedule(&cfg, 10, 3).unwrap();
        let r = staleness_report(&h);
        assert_eq!(r.histogram.keys().copied().collect::<Vec<_>>(), vec![0]);
        assert_eq!(r.trained, 320);
        assert!(h.steps.iter().all(|s| s.trained.len() == 32 && s.deferred == 0));
    }

    #[test]
    fn straggler_six_steps_late_is_dropped() {
        let cfg = SchedulerConfig { batch_size: 2, cutoff_fraction: 0.5, ..SchedulerConfig::default() };
        let job = |id: usize, d: f64| RolloutJob {
            prompt_id: id,
            issue_step: 0,
            completion_step: None,
            duration: d,
            finish_time: d,
            origin: Origin::MainPool,
            dropped: None,
        };
        let (out, mut carry) = schedule_step(0, 0.0, vec![job(0, 1.0), job(1, 100.0)], vec![], &cfg);
        assert_eq!(out.record.trained, vec![0]);
        assert_eq!(carry.len(), 1);
        let mut clock = out.record.end;
        let mut dropped = Vec::new();
        for step in 1..=6 {
            let fresh = vec![
                RolloutJob { issue_step: step, finish_time: clock + 1.0, ..job(10 * step, 1.0) },
                RolloutJob { issue_step: step, finish_time: clock + 1.0, ..job(10 * step + 1, 1.0) },
            ];
            let (o, c) = schedule_step(step, clock, fresh, carry, &cfg);
            clock = o.record.end;
            dropped.extend(o.dropped);
            carry = c.into_iter().filter(|j| j.issue_step == 0).collect();
        }
        assert_eq!(dropped.len(), 1);
        assert_eq!(dropped[0].prompt_id, 1);
        assert_eq!(dropped[0].dropped, Some(DropReason::Stale));
    }
}
