//! Batch drivers behind the command line: single-configuration runs, benchmark
//! matrices and the simulated training pipeline.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::baselines::{
    run_react, run_summary, ExtractiveSummarizer, SummaryConfig, DEFAULT_MAX_SESSIONS, DEFAULT_SUMMARY_TOKENS,
};
use crate::context::{ActionKind, TraceRecord, Trajectory};
use crate::env::judge::{NeedSetJudge, ScopeJudge};
use crate::env::task::{grade, CompoundTask, TaskSet, TaskSetSpec};
use crate::env::tools::EnvSession;
use crate::grpo::{emit_training_examples, evaluate_objective, PenaltyCounts, PseudoLogprobs};
use crate::policies::PolicySpec;
use crate::runtime::budget::{DEFAULT_ACTIVE_LIMIT, DEFAULT_MAX_BRANCHES, DEFAULT_MAX_TURNS};
use crate::runtime::{run_episode, BudgetConfig, EpisodeMetrics, EpisodeOutcome, Policy, RuntimeError, TaskInput};
use crate::scheduler::{run_schedule, staleness_report, ScheduleHistory, SchedulerConfig, StalenessReport};
use crate::{ClipConfig, RewardedGroup, TrainingExample};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl From<RuntimeError> for HarnessError {
    fn from(e: RuntimeError) -> Self {
        match e {
            RuntimeError::Budget(b) => HarnessError::Config(b.to_string()),
            other => HarnessError::Runtime(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    React,
    Summary,
    Fold,
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "react" => Ok(Self::React),
            "summary" => Ok(Self::Summary),
            "fold" => Ok(Self::Fold),
            _ => Err(format!("unknown mode `{s}`; expected react, summary or fold")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::React => "react",
            Self::Summary => "summary",
            Self::Fold => "fold",
        })
    }
}

/// Branch cap: a positive count or unlimited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BranchCap {
    Limited(usize),
    Unlimited,
}

impl BranchCap {
    pub fn as_count(self) -> usize {
        match self {
            Self::Limited(n) => n,
            Self::Unlimited => usize::MAX,
        }
    }
}

impl FromStr for BranchCap {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "unlimited" {
            return Ok(Self::Unlimited);
        }
        s.parse().map(Self::Limited).map_err(|_| format!("max branches must be a count or `unlimited`, got `{s}`"))
    }
}

impl fmt::Display for BranchCap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Limited(n) => write!(f, "{n}"),
            Self::Unlimited => f.write_str("unlimited"),
        }
    }
}

impl Serialize for BranchCap {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Limited(n) => s.serialize_u64(*n as u64),
            Self::Unlimited => s.serialize_str("unlimited"),
        }
    }
}

impl<'de> Deserialize<'de> for BranchCap {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(n) => Ok(Self::Limited(n as usize)),
            Raw::Word(w) => w.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Parses token counts such as `32768`, `32K` or `327680`.
pub fn parse_tokens(s: &str) -> Result<usize, String> {
    let (digits, scale) = match s.strip_suffix(['K', 'k']) {
        Some(d) => (d, 1024),
        None => (s, 1),
    };
    digits.parse::<usize>().ok().and_then(|n| n.checked_mul(scale)).ok_or_else(|| format!("invalid token count `{s}`"))
}

/// Where tasks come from: `easy:N`, `medium:N`, `hard:N`, `compound:K:N`, or the
/// path of a saved task set.
pub fn load_tasks(reference: &str, seed: u64) -> Result<TaskSet, HarnessError> {
    let parts: Vec<&str> = reference.split(':').collect();
    let count = |s: &str| -> Result<usize, HarnessError> {
        s.parse().map_err(|_| HarnessError::Config(format!("invalid count `{s}` in task reference `{reference}`")))
    };
    let spec = match parts.as_slice() {
        ["easy", n] => TaskSetSpec { easy: count(n)?, ..TaskSetSpec::new(seed) },
        ["medium", n] => TaskSetSpec { medium: count(n)?, ..TaskSetSpec::new(seed) },
        ["hard", n] => TaskSetSpec { hard: count(n)?, ..TaskSetSpec::new(seed) },
        ["compound", k, n] => {
            let k = count(k)?;
            if k == 0 {
                return Err(HarnessError::Config("compound k must be at least 1".into()));
            }
            TaskSetSpec::compound(seed, k, count(n)?)
        }
        _ => {
            let path = PathBuf::from(reference);
            if !path.is_file() {
                return Err(HarnessError::Config(format!("unknown task set `{reference}`")));
            }
            return TaskSet::load(&path).map_err(|e| HarnessError::Config(e.to_string()));
        }
    };
    let ts = TaskSet::generate(spec);
    if ts.problems.is_empty() {
        return Err(HarnessError::Config(format!("task set `{reference}` is empty")));
    }
    Ok(ts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub active_limit: usize,
    pub max_branches: BranchCap,
    pub max_sessions: usize,
    pub max_turns: usize,
    /// Word budget of the extractive summarizer.
    pub summary_tokens: usize,
    pub tasks: String,
    pub seed: u64,
    pub policy: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Fold,
            active_limit: DEFAULT_ACTIVE_LIMIT,
            max_branches: BranchCap::Limited(DEFAULT_MAX_BRANCHES),
            max_sessions: DEFAULT_MAX_SESSIONS,
            max_turns: DEFAULT_MAX_TURNS,
            summary_tokens: DEFAULT_SUMMARY_TOKENS,
            tasks: "easy:10".into(),
            seed: 0,
            policy: "oracle".into(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<PolicySpec, HarnessError> {
        let positive = [
            ("active_limit", self.active_limit),
            ("max_turns", self.max_turns),
            ("max_branches", self.max_branches.as_count()),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(HarnessError::Config(format!("{name} must be positive")));
            }
        }
        if self.mode == Mode::Summary {
            if self.max_sessions == 0 {
                return Err(HarnessError::Config("max_sessions must be positive".into()));
            }
            if self.summary_tokens >= self.active_limit {
                return Err(HarnessError::Config(format!(
                    "summary_tokens ({}) must be below the active limit ({})",
                    self.summary_tokens, self.active_limit
                )));
            }
        }
        self.policy.parse().map_err(HarnessError::Config)
    }

    pub fn budget(&self) -> BudgetConfig {
        BudgetConfig {
            active_limit: self.active_limit,
            max_branches: self.max_branches.as_count(),
            max_turns: self.max_turns,
        }
    }

    /// Short label such as `fold@32768x10`.
    pub fn label(&self) -> String {
        match self.mode {
            Mode::React => format!("react@{}", self.active_limit),
            Mode::Summary => format!("summary@{}x{}", self.active_limit, self.max_sessions),
            Mode::Fold => format!("fold@{}x{}", self.active_limit, self.max_branches),
        }
    }

    /// Applies a matrix cell such as `react@32K`, `fold@32Kx10`,
    /// `fold@32Kxunlimited` or `summary@32Kx10`.
    pub fn with_cell(&self, cell: &str) -> Result<Self, HarnessError> {
        let bad = |why: String| HarnessError::Config(format!("bench cell `{cell}`: {why}"));
        let (mode, rest) = cell.split_once('@').ok_or_else(|| bad("expected <mode>@<limit>".into()))?;
        let mode: Mode = mode.parse().map_err(bad)?;
        let (limit, extra) = match rest.split_once('x') {
            Some((l, e)) => (l, Some(e)),
            None => (rest, None),
        };
        let mut cfg = Self { mode, active_limit: parse_tokens(limit).map_err(bad)?, ..self.clone() };
        match (mode, extra) {
            (Mode::React, Some(_)) => return Err(bad("react takes no multiplier".into())),
            (Mode::Fold, Some(e)) => cfg.max_branches = e.parse().map_err(bad)?,
            (Mode::Summary, Some(e)) => {
                cfg.max_sessions = e.parse().map_err(|_| bad(format!("invalid session count `{e}`")))?
            }
            (_, None) => {}
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub task_id: String,
    pub reward: u8,
    pub partial_credit: f64,
    pub branches_in_scope: usize,
    pub branches_judged: usize,
    pub metrics: EpisodeMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub episodes: usize,
    pub pass_at_1: f64,
    pub finish: f64,
    pub main_len: f64,
    pub tool_calls: f64,
    pub branches: f64,
    /// In-scope fraction over all judged branches; 1 when none were opened.
    pub scope: f64,
    pub peak_context: f64,
    pub total_tokens: f64,
    pub generated_tokens: f64,
    pub summary_sessions: f64,
}

impl Aggregate {
    pub fn from_rows(rows: &[EpisodeRow]) -> Self {
        let n = rows.len().max(1) as f64;
        let mean = |f: &dyn Fn(&EpisodeRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        let judged: usize = rows.iter().map(|r| r.branches_judged).sum();
        let in_scope: usize = rows.iter().map(|r| r.branches_in_scope).sum();
        Self {
            episodes: rows.len(),
            pass_at_1: mean(&|r| f64::from(r.reward)),
            finish: mean(&|r| if r.metrics.finished { 1.0 } else { 0.0 }),
            main_len: mean(&|r| r.metrics.main_len as f64),
            tool_calls: mean(&|r| r.metrics.tool_calls as f64),
            branches: mean(&|r| r.metrics.branches as f64),
            scope: if judged == 0 { 1.0 } else { in_scope as f64 / judged as f64 },
            peak_context: mean(&|r| r.metrics.peak_context as f64),
            total_tokens: mean(&|r| r.metrics.total_tokens as f64),
            generated_tokens: mean(&|r| r.metrics.generated_tokens as f64),
            summary_sessions: mean(&|r| r.metrics.summary_sessions as f64),
        }
    }
}

pub const REPORT_FORMAT: &str = "context-fold-metrics";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format: String,
    pub version: u32,
    pub config: RunConfig,
    pub aggregate: Aggregate,
    pub episodes: Vec<EpisodeRow>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let r: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if r.format != REPORT_FORMAT || r.version != REPORT_VERSION {
            return Err(format!("unsupported metrics file {} v{}", r.format, r.version));
        }
        Ok(r)
    }
}

/// Judges every closed branch; returns (in scope, judged).
pub fn judge_branches(traj: &Trajectory, judge: &dyn ScopeJudge) -> (usize, usize) {
    let turns = traj.turns();
    let mut in_scope = 0;
    let mut judged = 0;
    for span in traj.spans().iter().filter(|s| s.close > s.open) {
        let prompt = match turns[span.open - 1].action() {
            ActionKind::Branch { prompt, .. } => prompt.as_str(),
            _ => "",
        };
        let message = match turns[span.close - 1].action() {
            ActionKind::Return { message } => message.as_str(),
            _ => "",
        };
        judged += 1;
        if judge.in_scope(prompt, &turns[span.open..span.close], message) {
            in_scope += 1;
        }
    }
    (in_scope, judged)
}

/// Runs one episode of `problem` under `cfg` with the given policy.
pub fn run_one(
    cfg: &RunConfig,
    ts: &TaskSet,
    problem: &CompoundTask,
    policy: &mut dyn Policy,
) -> Result<EpisodeOutcome, HarnessError> {
    let task = TaskInput::new(&problem.id, &problem.question);
    let mut env = EnvSession::new(&ts.corpus);
    let out = match cfg.mode {
        Mode::Fold => run_episode(task, policy, &mut env, &cfg.budget())?,
        Mode::React => run_react(task, policy, &mut env, cfg.active_limit, cfg.max_turns)?,
        Mode::Summary => {
            let sc = SummaryConfig {
                active_limit: cfg.active_limit,
                max_sessions: cfg.max_sessions,
                max_turns: cfg.max_turns,
            };
            let summarizer = ExtractiveSummarizer { max_tokens: cfg.summary_tokens, ..ExtractiveSummarizer::default() };
            run_summary(task, policy, &mut env, &sc, &summarizer)?
        }
    };
    Ok(out)
}

pub struct RunOutput {
    pub report: RunReport,
    /// Per-episode traces, in task order.
    pub traces: Vec<(String, Vec<TraceRecord>)>,
}

/// Runs every problem of a loaded task set.
pub fn run_task_set(cfg: &RunConfig, ts: &TaskSet) -> Result<RunOutput, HarnessError> {
    let spec = cfg.validate()?;
    let branching = cfg.mode == Mode::Fold;
    let judge = NeedSetJudge::new(&ts.corpus);
    let results: Vec<Result<(EpisodeRow, Vec<TraceRecord>), HarnessError>> = ts
        .problems
        .par_iter()
        .enumerate()
        .map(|(i, problem)| {
            let mut policy = spec.build(problem, &ts.corpus, branching, i, 0).map_err(HarnessError::Config)?;
            let out = run_one(cfg, ts, problem, &mut policy)?;
            let g = grade(problem, out.metrics.answer.as_deref());
            let (in_scope, judged) = judge_branches(&out.trajectory, &judge);
            let row = EpisodeRow {
                task_id: problem.id.clone(),
                reward: g.reward,
                partial_credit: g.partial_credit(),
                branches_in_scope: in_scope,
                branches_judged: judged,
                metrics: out.metrics,
            };
            Ok((row, out.trace))
        })
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut traces = Vec::with_capacity(results.len());
    for r in results {
        let (row, trace) = r?;
        traces.push((row.task_id.clone(), trace));
        rows.push(row);
    }
    let report = RunReport {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        config: cfg.clone(),
        aggregate: Aggregate::from_rows(&rows),
        episodes: rows,
    };
    Ok(RunOutput { report, traces })
}

pub fn run(cfg: &RunConfig) -> Result<RunOutput, HarnessError> {
    cfg.validate()?;
    let ts = load_tasks(&cfg.tasks, cfg.seed)?;
    run_task_set(cfg, &ts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub tasks: String,
    pub cell: String,
    pub mode: Mode,
    pub active_limit: usize,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub format: String,
    pub version: u32,
    pub config: RunConfig,
    pub cells: Vec<String>,
    pub task_sets: Vec<String>,
    pub rows: Vec<BenchRow>,
}

pub const BENCH_FORMAT: &str = "context-fold-bench";

/// Runs every (task set, cell) pair; rows follow task-set order, then cell order.
pub fn bench(base: &RunConfig, cells: &[String], task_sets: &[String]) -> Result<BenchTable, HarnessError> {
    if cells.is_empty() {
        return Err(HarnessError::Config("bench needs at least one cell".into()));
    }
    if task_sets.is_empty() {
        return Err(HarnessError::Config("bench needs at least one task set".into()));
    }
    let configs: Vec<RunConfig> = cells.iter().map(|c| base.with_cell(c)).collect::<Result<_, _>>()?;
    for c in &configs {
        c.validate()?;
    }
    let mut rows = Vec::new();
    for tasks in task_sets {
        let ts = load_tasks(tasks, base.seed)?;
        for (cell, cfg) in cells.iter().zip(&configs) {
            let out = run_task_set(cfg, &ts)?;
            rows.push(BenchRow {
                tasks: tasks.clone(),
                cell: cell.clone(),
                mode: cfg.mode,
                active_limit: cfg.active_limit,
                aggregate: out.report.aggregate,
            });
        }
    }
    Ok(BenchTable {
        format: BENCH_FORMAT.into(),
        version: REPORT_VERSION,
        config: base.clone(),
        cells: cells.to_vec(),
        task_sets: task_sets.to_vec(),
        rows,
    })
}

impl BenchTable {
    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<18} {:<22} {:>7} {:>7} {:>9} {:>7} {:>8} {:>6} {:>10}\n",
            "tasks", "cell", "pass@1", "finish", "main_len", "tools", "branches", "scope", "peak_ctx"
        );
        for r in &self.rows {
            let a = &r.aggregate;
            out.push_str(&format!(
                "{:<18} {:<22} {:>7.3} {:>7.3} {:>9.1} {:>7.1} {:>8.2} {:>6.3} {:>10.1}\n",
                r.tasks, r.cell, a.pass_at_1, a.finish, a.main_len, a.tool_calls, a.branches, a.scope, a.peak_context
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSimConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub group_size: usize,
    pub cutoff_fraction: f64,
    pub max_off_policy_steps: usize,
    pub duration_mu: f64,
    pub duration_sigma: f64,
}

impl Default for TrainSimConfig {
    fn default() -> Self {
        let s = SchedulerConfig::default();
        Self {
            steps: 4,
            batch_size: s.batch_size,
            group_size: s.group_size,
            cutoff_fraction: s.cutoff_fraction,
            max_off_policy_steps: s.max_off_policy_steps,
            duration_mu: s.duration_mu,
            duration_sigma: s.duration_sigma,
        }
    }
}

impl TrainSimConfig {
    pub fn scheduler(&self) -> SchedulerConfig {
        SchedulerConfig {
            batch_size: self.batch_size,
            cutoff_fraction: self.cutoff_fraction,
            max_off_policy_steps: self.max_off_policy_steps,
            group_size: self.group_size,
            duration_mu: self.duration_mu,
            duration_sigma: self.duration_sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSimReport {
    pub format: String,
    pub version: u32,
    pub run: RunConfig,
    pub train: TrainSimConfig,
    pub staleness: StalenessReport,
    pub groups: usize,
    pub degenerate_groups: usize,
    pub nonzero_advantage_groups: usize,
    pub mean_reward: f64,
    pub penalties: PenaltyCounts,
    pub examples: usize,
    pub examples_with_nonzero_advantage: usize,
    pub trained_llm_tokens: usize,
    /// Objective at the rollout policy (new = old log-probabilities), averaged over groups.
    pub mean_objective_at_old: f64,
}

pub const TRAIN_SIM_FORMAT: &str = "context-fold-train-sim";

pub struct TrainSimOutput {
    pub report: TrainSimReport,
    pub schedule: ScheduleHistory,
    pub groups: Vec<RewardedGroup>,
    pub examples: Vec<TrainingExample>,
}

/// Schedules rollouts, runs a group of episodes per trained prompt, then grades,
/// labels and computes advantages and training examples.
pub fn train_sim(run: &RunConfig, train: &TrainSimConfig) -> Result<TrainSimOutput, HarnessError> {
    let spec = run.validate()?;
    if train.steps == 0 {
        return Err(HarnessError::Config("steps must be positive".into()));
    }
    let sched = train.scheduler();
    sched.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
    let ts = load_tasks(&run.tasks, run.seed)?;
    let schedule = run_schedule(&sched, train.steps, run.seed).map_err(|e| HarnessError::Config(e.to_string()))?;
    let staleness = staleness_report(&schedule);

    let mut jobs: Vec<_> = schedule.trained().cloned().collect();
    jobs.sort_by_key(|j| (j.completion_step, j.prompt_id));
    let branching = run.mode == Mode::Fold;
    let judge = NeedSetJudge::new(&ts.corpus);
    let budget = run.budget();
    let clip = ClipConfig::default();
    let scorer = PseudoLogprobs { seed: run.seed };

    type GroupResult = Result<(RewardedGroup, Vec<TrainingExample>, f64), HarnessError>;
    let results: Vec<GroupResult> = jobs
        .par_iter()
        .map(|job| {
            let problem = &ts.problems[job.prompt_id % ts.problems.len()];
            let mut graded = Vec::with_capacity(train.group_size);
            for member in 0..train.group_size {
                let mut policy =
                    spec.build(problem, &ts.corpus, branching, job.prompt_id, member).map_err(HarnessError::Config)?;
                let out = run_one(run, &ts, problem, &mut policy)?;
                let reward = grade(problem, out.metrics.answer.as_deref()).reward;
                graded.push((out.trajectory, reward));
            }
            let group = RewardedGroup::assemble(format!("p{}:{}", job.prompt_id, problem.id), graded, &budget, &judge);
            let examples = emit_training_examples(&group, &scorer).map_err(|e| HarnessError::Runtime(e.to_string()))?;
            let old = old_logprobs(&group, &scorer);
            let objective =
                evaluate_objective(&group, &old, &old, &clip).map_err(|e| HarnessError::Runtime(e.to_string()))?;
            Ok((group, examples, objective.value))
        })
        .collect();

    let mut groups = Vec::with_capacity(results.len());
    let mut examples = Vec::new();
    let mut objective_sum = 0.0;
    for r in results {
        let (g, ex, obj) = r?;
        objective_sum += obj;
        groups.push(g);
        examples.extend(ex);
    }
    let mut penalties = PenaltyCounts::default();
    for g in &groups {
        for m in &g.members {
            penalties += m.penalties;
        }
    }
    let members: usize = groups.iter().map(|g| g.members.len()).sum();
    let rewards: usize = groups.iter().flat_map(|g| g.members.iter().map(|m| m.reward as usize)).sum();
    let nonzero_example =
        |e: &TrainingExample| e.segments.iter().flat_map(|s| s.advantages.iter().flatten()).any(|a| *a != 0.0);
    let report = TrainSimReport {
        format: TRAIN_SIM_FORMAT.into(),
        version: REPORT_VERSION,
        run: run.clone(),
        train: train.clone(),
        staleness,
        groups: groups.len(),
        degenerate_groups: groups.iter().filter(|g| g.is_degenerate()).count(),
        nonzero_advantage_groups: groups.iter().filter(|g| g.has_nonzero_advantage()).count(),
        mean_reward: if members == 0 { 0.0 } else { rewards as f64 / members as f64 },
        penalties,
        examples: examples.len(),
        examples_with_nonzero_advantage: examples.iter().filter(|e| nonzero_example(e)).count(),
        trained_llm_tokens: examples.iter().map(TrainingExample::llm_token_count).sum(),
        mean_objective_at_old: if groups.is_empty() { 0.0 } else { objective_sum / groups.len() as f64 },
    };
    Ok(TrainSimOutput { report, schedule, groups, examples })
}

/// Old-policy log-probabilities in the flat per-token layout, scored against
/// each turn's folded context.
fn old_logprobs(group: &RewardedGroup, scorer: &PseudoLogprobs) -> Vec<Vec<Option<f64>>> {
    use crate::grpo::LogprobSupplier;
    group
        .members
        .iter()
        .map(|m| {
            let mut row = Vec::with_capacity(m.mask.len());
            for (i, t) in m.trajectory.turns().iter().enumerate() {
                let ctx: Vec<u32> = m
                    .trajectory
                    .fold_before(i + 1)
                    .items
                    .iter()
                    .flat_map(|it| it.action.action_tokens().iter().chain(it.observation.observation_tokens()))
                    .map(|tok| tok.id())
                    .collect();
                let target: Vec<u32> = t.action_tokens().iter().map(|tok| tok.id()).collect();
                let lp: Vec<f64> = scorer.logprobs(&ctx, &target);
                row.extend(lp.into_iter().map(Some));
                row.extend(std::iter::repeat_n(None, t.observation_tokens().len()));
            }
            row
        })
        .collect()
}

/// Convenience for tests and benches: a plain oracle run of one problem set.
pub fn oracle_config(mode: Mode, active_limit: usize, max_branches: BranchCap, tasks: &str, seed: u64) -> RunConfig {
    RunConfig { mode, active_limit, max_branches, tasks: tasks.into(), seed, ..RunConfig::default() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells_parse() {
        let base = RunConfig::default();
        let c = base.with_cell("fold@32Kxunlimited").unwrap();
        assert_eq!((c.mode, c.active_limit, c.max_branches), (Mode::Fold, 32_768, BranchCap::Unlimited));
        let c = base.with_cell("react@327680").unwrap();
        assert_eq!((c.mode, c.active_limit), (Mode::React, 327_680));
        let c = base.with_cell("summary@32Kx3").unwrap();
        assert_eq!(c.max_sessions, 3);
        assert!(base.with_cell("react@32Kx10").is_err());
        assert!(base.with_cell("nope@1").is_err());
    }

    #[test]
    fn branch_cap_serde() {
        let v = serde_json::to_value(BranchCap::Unlimited).unwrap();
        assert_eq!(v, serde_json::json!("unlimited"));
        let c: BranchCap = serde_json::from_value(serde_json::json!(7)).unwrap();
        assert_eq!(c, BranchCap::Limited(7));
    }

    #[test]
    fn task_refs() {
        assert!(load_tasks("compound:0:1", 1).is_err());
        assert!(load_tasks("easy:0", 1).is_err());
        assert!(load_tasks("/no/such/file", 1).is_err());
        assert_eq!(load_tasks("medium:2", 1).unwrap().problems.len(), 2);
    }
}
