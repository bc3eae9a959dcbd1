mod config;

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use context_fold::context::trace::{read_trace, render_trace, validate_trace, write_trace};
use context_fold::context::TraceHeader;
use context_fold::grpo::{write_versioned_jsonl, EXAMPLES_FORMAT, GROUPS_FORMAT};
use context_fold::harness::{self, parse_tokens, BranchCap, HarnessError, Mode, RunConfig};
use context_fold::scheduler::write_schedule_log;
use serde_json::json;

#[derive(Parser)]
#[command(name = "ctxfold", version, about = "Simulate context-folding agents, baselines and training pipelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct RunFlags {
    /// TOML config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// react, summary or fold
    #[arg(long)]
    mode: Option<String>,
    /// Active context limit in tokens (e.g. 32768 or 32K).
    #[arg(long)]
    limit: Option<String>,
    /// Branch cap for fold mode, or `unlimited`.
    #[arg(long)]
    max_branches: Option<String>,
    /// Summary session cap for summary mode.
    #[arg(long)]
    max_sessions: Option<usize>,
    #[arg(long)]
    max_turns: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// easy:N, medium:N, hard:N, compound:K:N or a task-set file.
    #[arg(long)]
    tasks: Option<String>,
    /// oracle, scripted:flaky:M, scripted:wander:M, scripted:bad-calls:M or external:PATH
    #[arg(long)]
    policy: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every task of a task set under one configuration.
    Run {
        #[command(flatten)]
        flags: RunFlags,
        /// Output directory for metrics.json and traces/.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare configurations across task sets (`--tasks` takes a comma-separated list).
    Bench {
        #[command(flatten)]
        flags: RunFlags,
        /// Comma-separated cells such as react@32K,fold@32Kx10,summary@32Kx10.
        #[arg(long, value_delimiter = ',')]
        cells: Vec<String>,
        /// Write the table as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate the rollout scheduler and the training-signal pipeline.
    TrainSim {
        #[command(flatten)]
        flags: RunFlags,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        group_size: Option<usize>,
        #[arg(long)]
        cutoff: Option<f64>,
        #[arg(long)]
        max_staleness: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretty-print a trace file.
    Trace { file: PathBuf },
    /// Generate a task set and save it.
    Tasks {
        #[arg(long)]
        tasks: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(m) => Failure::Config(m),
            HarnessError::Runtime(m) => Failure::Runtime(m),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Runtime(format!("{}: {e}", path.display()))
}

fn resolve(flags: &RunFlags, base: RunConfig) -> Result<RunConfig, Failure> {
    let mut cfg = base;
    if let Some(m) = &flags.mode {
        cfg.mode = m.parse().map_err(Failure::Config)?;
    }
    if let Some(l) = &flags.limit {
        cfg.active_limit = parse_tokens(l).map_err(Failure::Config)?;
    }
    if let Some(b) = &flags.max_branches {
        if cfg.mode != Mode::Fold {
            return Err(Failure::Config(format!("--max-branches only applies to fold mode, not {}", cfg.mode)));
        }
        cfg.max_branches = b.parse::<BranchCap>().map_err(Failure::Config)?;
    }
    if let Some(s) = flags.max_sessions {
        if cfg.mode != Mode::Summary {
            return Err(Failure::Config(format!("--max-sessions only applies to summary mode, not {}", cfg.mode)));
        }
        cfg.max_sessions = s;
    }
    if let Some(t) = flags.max_turns {
        cfg.max_turns = t;
    }
    if let Some(s) = flags.seed {
        cfg.seed = s;
    }
    if let Some(t) = &flags.tasks {
        cfg.tasks = t.clone();
    }
    if let Some(p) = &flags.policy {
        cfg.policy = p.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(io_err(path))
}

fn cmd_run(flags: &RunFlags, out: &Path) -> Result<(), Failure> {
    let file = config::load(flags.config.as_deref()).map_err(Failure::Config)?;
    let cfg = resolve(flags, file.run)?;
    let result = harness::run(&cfg)?;
    let traces = out.join("traces");
    fs::create_dir_all(&traces).map_err(io_err(&traces))?;
    write(&out.join("metrics.json"), &result.report.to_json())?;
    let provenance = json!({ "config": cfg, "seed": cfg.seed });
    for (i, (task_id, records)) in result.traces.iter().enumerate() {
        let path = traces.join(format!("episode-{i:04}.jsonl"));
        let f = fs::File::create(&path).map_err(io_err(&path))?;
        let header = TraceHeader::new(task_id.clone(), provenance.clone());
        write_trace(std::io::BufWriter::new(f), Some(&header), records).map_err(io_err(&path))?;
    }
    let a = &result.report.aggregate;
    println!(
        "{}  tasks={}  episodes={}  pass@1={:.3}  finish={:.3}  main_len={:.1}  tool_calls={:.1}  branches={:.2}  scope={:.3}",
        cfg.label(),
        cfg.tasks,
        a.episodes,
        a.pass_at_1,
        a.finish,
        a.main_len,
        a.tool_calls,
        a.branches,
        a.scope
    );
    Ok(())
}

fn cmd_bench(flags: &RunFlags, cells: &[String], out: Option<&Path>) -> Result<(), Failure> {
    let file = config::load(flags.config.as_deref()).map_err(Failure::Config)?;
    let tasks_flag = flags.tasks.clone();
    let base_flags = RunFlags { tasks: None, ..flags.clone() };
    let base = resolve(&base_flags, file.run)?;
    let cells = if cells.is_empty() { file.bench.cells } else { cells.to_vec() };
    let task_sets: Vec<String> = match tasks_flag {
        Some(t) => t.split(',').map(str::to_string).collect(),
        None if !file.bench.task_sets.is_empty() => file.bench.task_sets,
        None => vec![base.tasks.clone()],
    };
    let table = harness::bench(&base, &cells, &task_sets)?;
    print!("{}", table.render());
    if let Some(path) = out {
        write(path, &serde_json::to_string_pretty(&table).expect("tables serialize"))?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train_sim(
    flags: &RunFlags,
    steps: Option<usize>,
    batch_size: Option<usize>,
    group_size: Option<usize>,
    cutoff: Option<f64>,
    max_staleness: Option<usize>,
    out: &Path,
) -> Result<(), Failure> {
    let file = config::load(flags.config.as_deref()).map_err(Failure::Config)?;
    let run = resolve(flags, file.run)?;
    let mut train = file.train;
    if let Some(s) = steps {
        train.steps = s;
    }
    if let Some(b) = batch_size {
        train.batch_size = b;
    }
    if let Some(g) = group_size {
        train.group_size = g;
    }
    if let Some(c) = cutoff {
        train.cutoff_fraction = c;
    }
    if let Some(m) = max_staleness {
        train.max_off_policy_steps = m;
    }
    let result = harness::train_sim(&run, &train)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let provenance = json!({ "run": run, "train": train, "seed": run.seed });
    write(&out.join("report.json"), &serde_json::to_string_pretty(&result.report).expect("reports serialize"))?;
    let path = out.join("groups.jsonl");
    let f = fs::File::create(&path).map_err(io_err(&path))?;
    write_versioned_jsonl(std::io::BufWriter::new(f), GROUPS_FORMAT, &provenance, &result.groups)
        .map_err(io_err(&path))?;
    let path = out.join("examples.jsonl");
    let f = fs::File::create(&path).map_err(io_err(&path))?;
    write_versioned_jsonl(std::io::BufWriter::new(f), EXAMPLES_FORMAT, &provenance, &result.examples)
        .map_err(io_err(&path))?;
    let log = out.join("schedule.jsonl");
    let mut buf = Vec::new();
    write_schedule_log(&mut buf, &result.schedule).map_err(io_err(&log))?;
    fs::write(&log, buf).map_err(io_err(&log))?;

    let r = &result.report;
    let p = &r.penalties;
    println!(
        "groups={}  degenerate={}  nonzero-advantage={}  mean-reward={:.3}",
        r.groups, r.degenerate_groups, r.nonzero_advantage_groups, r.mean_reward
    );
    println!(
        "penalties: unfolded-tokens={}  out-of-scope-branches={} ({} tokens)  failed-turns={} ({} tokens)",
        p.unfolded_tokens, p.out_of_scope_branches, p.out_of_scope_tokens, p.failed_turns, p.failed_tokens
    );
    println!(
        "examples={}  with-nonzero-advantage={}  trained-llm-tokens={}  staleness-max={}  dropped={}",
        r.examples,
        r.examples_with_nonzero_advantage,
        r.trained_llm_tokens,
        r.staleness.max,
        r.staleness.dropped_stale + r.staleness.dropped_run_ended
    );
    Ok(())
}

fn cmd_trace(file: &Path) -> Result<(), Failure> {
    let f = fs::File::open(file).map_err(|e| Failure::Config(format!("{}: {e}", file.display())))?;
    let (header, records) = read_trace(BufReader::new(f)).map_err(|e| Failure::Config(e.to_string()))?;
    print!("{}", render_trace(header.as_ref(), &records));
    if let Err(v) = validate_trace(&records) {
        return Err(Failure::Runtime(format!("malformed trace: {v}")));
    }
    Ok(())
}

fn cmd_tasks(tasks: &str, seed: u64, out: &Path) -> Result<(), Failure> {
    let ts = harness::load_tasks(tasks, seed)?;
    ts.save(out).map_err(io_err(out))?;
    println!("{} problems, {} documents -> {}", ts.problems.len(), ts.corpus.docs().len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { flags, out } => cmd_run(flags, out),
        Command::Bench { flags, cells, out } => cmd_bench(flags, cells, out.as_deref()),
        Command::TrainSim { flags, steps, batch_size, group_size, cutoff, max_staleness, out } => {
            cmd_train_sim(flags, *steps, *batch_size, *group_size, *cutoff, *max_staleness, out)
        }
        Command::Trace { file } => cmd_trace(file),
        Command::Tasks { tasks, seed, out } => cmd_tasks(tasks, *seed, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
