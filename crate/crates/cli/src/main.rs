use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use explorebench_core::config::{RunConfig, CONFIG_ENV};
use explorebench_core::eval::{tally_episode, BenchReport, EpisodeTally, RuleJudge};
use explorebench_core::generator::generate_suite;
use explorebench_core::memory::{EmbeddingProvider, FeatureTable, HashingEmbedder};
use explorebench_core::pipeline::{build_samples, dataset_stats, write_samples, DatasetStats};
use explorebench_core::policy::{builtin, ExternalPolicy, Policy, BUILTIN_NAMES};
use explorebench_core::reward::{score_rollouts, RewardConstants};
use explorebench_core::sim::{replay_memory, run_episode, EpisodeLog};
use explorebench_core::{load_scene, load_task, Scene, Task};

#[derive(Parser)]
#[command(name = "explorebench", version, about = "Embodied exploration benchmark harness")]
struct Cli {
    /// JSON run configuration; overrides the built-in defaults.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scenes and tasks.
    Gen(GenArgs),
    /// Run a policy over a suite and write logs plus a report.
    Run(RunArgs),
    /// Turn episode logs into training samples.
    BuildDataset(DatasetArgs),
    /// Recompute a report from existing logs.
    Eval(EvalArgs),
    /// Summarize one episode log and rebuild its memory bank.
    Replay(ReplayArgs),
    /// Score rollout records with the multi-task reward.
    ScoreRollouts(ScoreArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    count: Option<usize>,
    /// Scene size in metres, `WxH`.
    #[arg(long)]
    size: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Directory produced by `gen`. Without it the suite is generated from
    /// the configured seed and count.
    #[arg(long)]
    suite: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    count: Option<usize>,
    /// One of random, greedy, oracle, oracle-no-memory, external.
    #[arg(long)]
    policy: Option<String>,
    /// Command line of the external policy process.
    #[arg(long, num_args = 1.., allow_hyphen_values = true)]
    endpoint: Vec<String>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a long-format CSV for plotting.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct DatasetArgs {
    #[arg(long)]
    logs: PathBuf,
    #[arg(long)]
    suite: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to `<out>.stats.json`.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    logs: PathBuf,
    /// Suite directory; lets questions skipped by aborted episodes count.
    #[arg(long)]
    suite: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    log: PathBuf,
    /// Write the rebuilt memory bank as JSONL.
    #[arg(long)]
    memory_out: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    /// Rollout JSONL, `-` for stdin.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Scored JSONL, `-` or absent for stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Print the reward constants as JSON.
    #[arg(long)]
    emit_constants: bool,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli) {
        let closed_pipe = e.chain().any(|c| {
            c.downcast_ref::<io::Error>()
                .is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)
        });
        if closed_pipe {
            return;
        }
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn emit(text: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    };
    match cli.cmd {
        Command::Gen(a) => cmd_gen(cfg, a),
        Command::Run(a) => cmd_run(cfg, a),
        Command::BuildDataset(a) => cmd_build_dataset(cfg, a),
        Command::Eval(a) => cmd_eval(a),
        Command::Replay(a) => cmd_replay(cfg, a),
        Command::ScoreRollouts(a) => cmd_score(cfg, a),
    }
}

/// Writes through a sibling temp file so readers never see partial output.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

fn parse_size(s: &str) -> Result<(f64, f64)> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .with_context(|| format!("size `{s}` is not WxH"))?;
    Ok((w.trim().parse()?, h.trim().parse()?))
}

fn cmd_gen(mut cfg: RunConfig, a: GenArgs) -> Result<()> {
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(c) = a.count {
        cfg.count = c;
    }
    if let Some(s) = &a.size {
        let (w, h) = parse_size(s)?;
        cfg.generator.width_m = w;
        cfg.generator.height_m = h;
    }
    cfg.validate()?;
    let suite = generate_suite(cfg.seed, cfg.count, &cfg.generator)?;
    for (scene, task) in &suite {
        write_atomic(
            &a.out.join("scenes").join(format!("{}.json", scene.id)),
            scene.to_json().as_bytes(),
        )?;
        write_atomic(
            &a.out.join("tasks").join(format!("{}.json", task.id)),
            task.to_json().as_bytes(),
        )?;
    }
    write_atomic(&a.out.join("config.json"), cfg.to_json().as_bytes())?;
    emit(&format!("generated {} tasks in {}\n", suite.len(), a.out.display()))?;
    Ok(())
}

fn json_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == ext))
        .collect();
    out.sort();
    Ok(out)
}

fn load_suite(dir: &Path) -> Result<Vec<(Scene, Task)>> {
    let mut out = Vec::new();
    for p in json_files(&dir.join("tasks"), "json")? {
        let task = load_task(&p).with_context(|| format!("loading {}", p.display()))?;
        let sp = dir.join("scenes").join(format!("{}.json", task.scene));
        let scene = load_scene(&sp).with_context(|| format!("loading {}", sp.display()))?;
        out.push((scene, task));
    }
    if out.is_empty() {
        bail!("no tasks found under {}", dir.join("tasks").display());
    }
    Ok(out)
}

fn load_tasks(dir: &Path) -> Result<BTreeMap<String, Task>> {
    let mut out = BTreeMap::new();
    for p in json_files(&dir.join("tasks"), "json")? {
        let t = load_task(&p).with_context(|| format!("loading {}", p.display()))?;
        out.insert(t.id.clone(), t);
    }
    Ok(out)
}

fn embedder(cfg: &RunConfig) -> Result<Box<dyn EmbeddingProvider>> {
    Ok(match &cfg.features {
        Some(p) => Box::new(FeatureTable::load(p).with_context(|| format!("loading {}", p.display()))?),
        None => Box::new(HashingEmbedder { dim: cfg.embedding_dim }),
    })
}

fn make_policy(cfg: &RunConfig) -> Result<Box<dyn Policy>> {
    if cfg.policy == "external" {
        let (prog, args) = cfg
            .endpoint
            .split_first()
            .context("the external policy needs --endpoint")?;
        let mut p = ExternalPolicy::spawn(prog, args)?;
        p.timeout = Duration::from_millis(cfg.timeout_ms);
        return Ok(Box::new(p));
    }
    builtin(&cfg.policy, cfg.seed).with_context(|| {
        format!(
            "unknown policy `{}`; expected one of {} or external",
            cfg.policy,
            BUILTIN_NAMES.join(", ")
        )
    })
}

fn write_report(report: &BenchReport, out: &Path, plot: Option<&Path>) -> Result<()> {
    write_atomic(&out.join("report.json"), report.to_json().as_bytes())?;
    write_atomic(&out.join("report.csv"), report.to_csv().as_bytes())?;
    if let Some(p) = plot {
        write_atomic(p, report.to_plot_csv().as_bytes())?;
    }
    emit(&report.to_csv())?;
    Ok(())
}

fn cmd_run(mut cfg: RunConfig, a: RunArgs) -> Result<()> {
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(c) = a.count {
        cfg.count = c;
    }
    if let Some(p) = a.policy {
        cfg.policy = p;
    }
    if !a.endpoint.is_empty() {
        cfg.endpoint = a.endpoint;
    }
    if let Some(b) = a.budget {
        cfg.episode.budget_per_subtask = b;
    }
    if let Some(o) = a.out {
        cfg.output = o;
    }
    cfg.validate()?;
    // fail fast on a bad policy name
    drop(make_policy(&cfg)?);
    let suite = match &a.suite {
        Some(d) => load_suite(d)?,
        None => generate_suite(cfg.seed, cfg.count, &cfg.generator)?,
    };
    let emb = embedder(&cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.max(1))
        .build()?;
    let results: Vec<Result<EpisodeTally>> = pool.install(|| {
        suite
            .par_iter()
            .map(|(scene, task)| -> Result<EpisodeTally> {
                let mut policy = make_policy(&cfg)?;
                let log = run_episode(scene, task, policy.as_mut(), &cfg.episode, emb.as_ref())
                    .with_context(|| format!("task {}", task.id))?;
                write_atomic(
                    &cfg.output.join("logs").join(format!("{}.jsonl", task.id)),
                    log.to_jsonl().as_bytes(),
                )?;
                if let Some(reason) = log.abort_reason() {
                    eprintln!("task {} aborted: {reason}", task.id);
                }
                Ok(tally_episode(&log, Some(task), &RuleJudge)?)
            })
            .collect()
    });
    let mut tallies = Vec::new();
    for r in results {
        match r {
            Ok(t) => tallies.push(t),
            Err(e) => eprintln!("error: {e:#}"),
        }
    }
    if tallies.is_empty() {
        bail!("every task failed");
    }
    write_atomic(&cfg.output.join("config.json"), cfg.to_json().as_bytes())?;
    let report = BenchReport::from_tallies(&tallies, "rule")?;
    write_report(&report, &cfg.output, a.plot.as_deref())
}

fn read_logs(dir: &Path) -> Result<Vec<EpisodeLog>> {
    let files = json_files(dir, "jsonl")?;
    if files.is_empty() {
        bail!("no episode logs in {}", dir.display());
    }
    files
        .iter()
        .map(|p| {
            let f = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            EpisodeLog::read_jsonl(BufReader::new(f)).with_context(|| format!("parsing {}", p.display()))
        })
        .collect()
}

#[derive(Serialize)]
struct StatsFile<'a> {
    engine_version: &'a str,
    config: &'a RunConfig,
    stats: DatasetStats,
}

fn cmd_build_dataset(cfg: RunConfig, a: DatasetArgs) -> Result<()> {
    let logs = read_logs(&a.logs)?;
    let tasks = load_tasks(&a.suite)?;
    let emb = embedder(&cfg)?;
    let per_log: Vec<_> = logs
        .par_iter()
        .map(|log| -> Result<_> {
            let id = log.task_id().context("log has no header")?;
            let task = tasks.get(id).with_context(|| format!("task {id} not in suite"))?;
            Ok(build_samples(log, task, &cfg.pipeline, emb.as_ref())?.0)
        })
        .collect::<Result<_>>()?;
    let samples: Vec<_> = per_log.into_iter().flatten().collect();
    let mut buf = Vec::new();
    write_samples(&samples, &mut buf)?;
    write_atomic(&a.out, &buf)?;
    let stats = dataset_stats(&samples);
    let stats_path = a.stats.unwrap_or_else(|| {
        let mut p = a.out.as_os_str().to_owned();
        p.push(".stats.json");
        PathBuf::from(p)
    });
    let file = StatsFile {
        engine_version: env!("CARGO_PKG_VERSION"),
        config: &cfg,
        stats,
    };
    write_atomic(&stats_path, serde_json::to_string_pretty(&file)?.as_bytes())?;
    emit(&format!("{} samples from {} logs\n", samples.len(), logs.len()))?;
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let logs = read_logs(&a.logs)?;
    let tasks = match &a.suite {
        Some(d) => load_tasks(d)?,
        None => BTreeMap::new(),
    };
    let tallies = logs
        .par_iter()
        .map(|l| tally_episode(l, l.task_id().and_then(|id| tasks.get(id)), &RuleJudge))
        .collect::<Result<Vec<_>, _>>()?;
    let report = BenchReport::from_tallies(&tallies, "rule")?;
    write_report(&report, &a.out, a.plot.as_deref())
}

#[derive(Serialize)]
struct ReplaySummary<'a> {
    task_id: Option<&'a str>,
    steps: usize,
    actions: BTreeMap<&'static str, usize>,
    subtasks: Vec<explorebench_core::sim::SubtaskOutcome>,
    memory_entries: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    abort: Option<&'a str>,
}

fn cmd_replay(cfg: RunConfig, a: ReplayArgs) -> Result<()> {
    let f = fs::File::open(&a.log).with_context(|| format!("opening {}", a.log.display()))?;
    let log = EpisodeLog::read_jsonl(BufReader::new(f))?;
    let emb = embedder(&cfg)?;
    let bank = replay_memory(&log, &cfg.episode, emb.as_ref())?;
    let mut actions = BTreeMap::new();
    for act in log.actions() {
        *actions.entry(act.as_str()).or_insert(0) += 1;
    }
    let summary = ReplaySummary {
        task_id: log.task_id(),
        steps: log.step_count(),
        actions,
        subtasks: log.subtask_outcomes(),
        memory_entries: bank.len(),
        abort: log.abort_reason(),
    };
    emit(&(serde_json::to_string_pretty(&summary)? + "\n"))?;
    if let Some(p) = &a.memory_out {
        write_atomic(p, bank.to_jsonl().as_bytes())?;
    }
    Ok(())
}

fn cmd_score(cfg: RunConfig, a: ScoreArgs) -> Result<()> {
    if a.emit_constants {
        let c = RewardConstants::from_config(&cfg.reward, cfg.episode.retrieval.topk);
        emit(&(serde_json::to_string_pretty(&c)? + "\n"))?;
        if a.input.is_none() {
            return Ok(());
        }
    }
    let input: Box<dyn BufRead> = match &a.input {
        Some(p) if p.as_os_str() != "-" => Box::new(BufReader::new(
            fs::File::open(p).with_context(|| format!("opening {}", p.display()))?,
        )),
        _ => Box::new(io::stdin().lock()),
    };
    let n = match &a.output {
        Some(p) if p.as_os_str() != "-" => {
            let mut buf = Vec::new();
            let n = score_rollouts(input, &mut buf, &cfg.reward)?;
            write_atomic(p, &buf)?;
            n
        }
        _ => {
            let mut out = BufWriter::new(io::stdout().lock());
            let n = score_rollouts(input, &mut out, &cfg.reward)?;
            out.flush()?;
            n
        }
    };
    eprintln!("scored {n} rollouts");
    Ok(())
}

