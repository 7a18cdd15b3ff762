//! Command-line harness: single runs, preset ablations, parameter sweeps,
//! and run-to-run comparison reports, all written as CSV files.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 I/O error.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use revq::agent::Agent;
use revq::config::{
    parse_config_str, preset, split_qualified, AgentConfig, FileOverrides, PRESET_NAMES,
};
use revq::env::EnvKind;
use revq::experiment::{
    build_ablation_report, read_episodes_csv, run_ablation, run_experiment_with_agent, run_sweep,
    summarize, write_ablation_csv, write_comparison_csv, write_episodes_csv, write_phi_dump,
    write_q_dump, write_summary_csv, write_sweep_csv, EpisodeStats, ExperimentConfig, SweepParam,
};
use revq::stats::compare;

const DEFAULT_EPISODES: u64 = 100_000;

#[derive(Parser)]
#[command(
    name = "revq",
    version,
    about = "Tabular Q-learning/SARSA with reversibility-aware safety mechanisms",
    arg_required_else_help = true
)]
struct Cli {
    /// Print a built-in agent preset as JSON and exit. Presets whose
    /// parameters differ by environment need a qualified name, e.g.
    /// `fullmodel-cliff` or `fullmodel-taxi`.
    #[arg(long, value_name = "NAME")]
    dump_preset: Option<String>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent and write per-episode and summary CSVs.
    Run(RunArgs),
    /// Run every built-in preset on one environment and write a ranked
    /// comparison table.
    Ablate(AblateArgs),
    /// Sweep one parameter of the fullmodel preset across several values.
    Sweep(SweepArgs),
    /// Compare two finished runs from their episode CSVs.
    Report(ReportArgs),
}

fn parse_env(text: &str) -> Result<EnvKind, String> {
    text.parse()
}

fn parse_param(text: &str) -> Result<SweepParam, String> {
    text.parse()
}

#[derive(Args)]
struct RunArgs {
    /// Preset name (optionally environment-qualified, e.g. `fullmodel-taxi`)
    /// or path to a JSON config file.
    #[arg(long)]
    agent: String,
    /// Environment; needed when the agent argument does not pin one.
    #[arg(long, value_parser = parse_env)]
    env: Option<EnvKind>,
    /// Episodes to run [default: 100000, or the config file's value].
    #[arg(long)]
    episodes: Option<u64>,
    /// Base seed; episode i uses seed base+i [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Maximum steps per episode [default: the environment's cap].
    #[arg(long)]
    step_limit: Option<u64>,
    /// Keep learned tables across episodes instead of retraining each
    /// episode from scratch.
    #[arg(long)]
    persist_tables: bool,
    /// Override one config key, e.g. `--set alpha=0.2 --set K=3`. Aliases:
    /// K=horizon_k, lambda=penalty_weight, penalty=penalty_factor. Also
    /// accepts step_limit and persist_tables.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory for episodes.csv and summary.csv.
    #[arg(long)]
    out: PathBuf,
    /// Also write q_dump.csv and phi_dump.csv from the final tables.
    #[arg(long)]
    dump_tables: bool,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long, value_parser = parse_env)]
    env: EnvKind,
    /// Episodes per preset [default: 100000].
    #[arg(long)]
    episodes: Option<u64>,
    /// Base seed shared by every preset [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; gets one subdirectory per preset plus
    /// ablation_report.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_parser = parse_env)]
    env: EnvKind,
    /// Parameter to sweep: horizon_k (K), penalty_weight (lambda),
    /// penalty_factor (penalty), phi_init, threshold, or q_init.
    #[arg(long, value_parser = parse_param)]
    param: SweepParam,
    /// Comma-separated values, e.g. --values 0.2,0.4,0.8.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// Episodes per value [default: 100000].
    #[arg(long)]
    episodes: Option<u64>,
    /// Base seed shared by every value [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; gets one subdirectory per value plus sweep.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// episodes.csv of the baseline run.
    #[arg(long)]
    baseline: PathBuf,
    /// episodes.csv of the variant run.
    #[arg(long)]
    variant: PathBuf,
    /// Write the comparison CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Config(String),
    Io(String),
}

impl CliError {
    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Io(m) => m,
        }
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if let Some(name) = cli.dump_preset {
        if cli.command.is_some() {
            return Err(CliError::Config(
                "--dump-preset cannot be combined with a subcommand".into(),
            ));
        }
        print!("{}", resolve_dump(&name)?.to_json_pretty());
        return Ok(());
    }
    match cli
        .command
        .expect("clap requires a subcommand or --dump-preset")
    {
        Command::Run(args) => cmd_run(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Report(args) => cmd_report(args),
    }
}

fn unknown_preset(name: &str) -> CliError {
    CliError::Config(format!(
        "unknown preset '{name}' (expected one of: {})",
        PRESET_NAMES.join(", ")
    ))
}

fn resolve_dump(name: &str) -> Result<AgentConfig, CliError> {
    if let Some((bare, env)) = split_qualified(name) {
        if let Some(cfg) = preset(bare, env) {
            return Ok(cfg);
        }
        return Err(unknown_preset(name));
    }
    match (
        preset(name, EnvKind::CliffWalking),
        preset(name, EnvKind::Taxi),
    ) {
        (Some(a), Some(b)) if a == b => Ok(a),
        (Some(_), Some(_)) => Err(CliError::Config(format!(
            "preset '{name}' differs by environment; use '{name}-cliff' or '{name}-taxi'"
        ))),
        _ => Err(unknown_preset(name)),
    }
}

/// Resolves `--agent` to a validated config plus the environment it runs in.
/// Resolution order: environment-qualified preset, bare preset (needs
/// `--env`), then a JSON config file (environment from `--env` or the file).
fn resolve_agent(
    arg: &str,
    flag_env: Option<EnvKind>,
) -> Result<(AgentConfig, EnvKind, FileOverrides), CliError> {
    if let Some((bare, env)) = split_qualified(arg) {
        if let Some(cfg) = preset(bare, env) {
            if let Some(flag) = flag_env {
                if flag != env {
                    return Err(CliError::Config(format!(
                        "agent '{arg}' is tuned for {env} but --env {flag} was given"
                    )));
                }
            }
            return Ok((cfg, env, FileOverrides::default()));
        }
    }
    if preset(arg, EnvKind::CliffWalking).is_some() {
        let env = flag_env.ok_or_else(|| {
            CliError::Config(format!(
                "preset '{arg}' needs --env, or a qualified name like '{arg}-taxi'"
            ))
        })?;
        return Ok((
            preset(arg, env).expect("same lookup"),
            env,
            FileOverrides::default(),
        ));
    }
    let path = Path::new(arg);
    if !path.is_file() {
        return Err(CliError::Config(format!(
            "'{arg}' is neither a preset (one of: {}) nor a config file",
            PRESET_NAMES.join(", ")
        )));
    }
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("reading {arg}: {e}")))?;
    let (cfg, over) =
        parse_config_str(&text).map_err(|e| CliError::Config(format!("{arg}: {e}")))?;
    let env = flag_env.or(over.env).ok_or_else(|| {
        CliError::Config("no environment: pass --env or set \"env\" in the config file".into())
    })?;
    Ok((cfg, env, over))
}

fn canonical_key(key: &str) -> &str {
    match key {
        "K" => "horizon_k",
        "lambda" => "penalty_weight",
        "penalty" => "penalty_factor",
        other => other,
    }
}

const AGENT_KEYS: [&str; 15] = [
    "algorithm",
    "use_precedence",
    "use_threshold_penalty",
    "use_rollback",
    "alpha",
    "gamma",
    "epsilon",
    "q_init",
    "horizon_k",
    "ema_rate",
    "penalty_weight",
    "phi_init",
    "threshold",
    "penalty_factor",
    "threshold_on_penalized_target",
];

/// Values are parsed as JSON scalars; anything that is not valid JSON is
/// taken as a bare string (so `--set algorithm=sarsa` works unquoted).
fn parse_scalar(text: &str) -> Result<Value, CliError> {
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Array(_) | Value::Object(_)) => Err(CliError::Config(format!(
            "--set value '{text}' must be a scalar"
        ))),
        Ok(v) => Ok(v),
        Err(_) => Ok(Value::String(text.to_owned())),
    }
}

/// Applies `--set` overrides on top of the resolved agent config; returns
/// the experiment-level overrides (step_limit, persist_tables) if present.
fn apply_sets(
    agent: &mut AgentConfig,
    sets: &[String],
) -> Result<(Option<u64>, Option<bool>), CliError> {
    if sets.is_empty() {
        return Ok((None, None));
    }
    let Value::Object(mut obj) = serde_json::to_value(&*agent).expect("config serializes") else {
        unreachable!("config serializes to an object")
    };
    let mut seen = HashSet::new();
    let mut step_limit = None;
    let mut persist_tables = None;
    for raw in sets {
        let (key, value_text) = raw
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set '{raw}': expected KEY=VALUE")))?;
        let key = canonical_key(key.trim());
        if !seen.insert(key.to_owned()) {
            return Err(CliError::Config(format!(
                "--set names '{key}' more than once (aliases included)"
            )));
        }
        let value = parse_scalar(value_text.trim())?;
        match key {
            "step_limit" => {
                step_limit = Some(value.as_u64().filter(|&v| v >= 1).ok_or_else(|| {
                    CliError::Config(format!(
                        "step_limit must be a positive integer, got '{value_text}'"
                    ))
                })?);
            }
            "persist_tables" => {
                persist_tables = Some(value.as_bool().ok_or_else(|| {
                    CliError::Config(format!(
                        "persist_tables must be true or false, got '{value_text}'"
                    ))
                })?);
            }
            k if AGENT_KEYS.contains(&k) => {
                obj.insert(k.to_owned(), value);
            }
            other => {
                return Err(CliError::Config(format!(
                    "--set key '{other}' is not settable (agent fields, step_limit, \
                     persist_tables)"
                )));
            }
        }
    }
    let merged: AgentConfig = serde_json::from_value(Value::Object(obj))
        .map_err(|e| CliError::Config(format!("--set: {e}")))?;
    merged
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    *agent = merged;
    Ok((step_limit, persist_tables))
}

fn io_error(context: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", context.display()))
}

fn csv_error(context: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", context.display()))
}

fn write_csv(path: &Path, write: impl FnOnce(fs::File) -> csv::Result<()>) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(io_error(path))?;
    write(file).map_err(csv_error(path))?;
    println!("{}", path.display());
    Ok(())
}

fn write_run_outputs(
    dir: &Path,
    stats: &[EpisodeStats],
    dump: Option<&Agent>,
) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_error(dir))?;
    write_csv(&dir.join("episodes.csv"), |f| write_episodes_csv(f, stats))?;
    let summary = summarize(stats);
    write_csv(&dir.join("summary.csv"), |f| write_summary_csv(f, &summary))?;
    if let Some(agent) = dump {
        write_csv(&dir.join("q_dump.csv"), |f| write_q_dump(f, agent))?;
        write_csv(&dir.join("phi_dump.csv"), |f| write_phi_dump(f, agent))?;
    }
    Ok(())
}

fn positive_episodes(episodes: u64) -> Result<u64, CliError> {
    if episodes == 0 {
        return Err(CliError::Config("episodes must be at least 1".into()));
    }
    Ok(episodes)
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let (mut agent_cfg, env, over) = resolve_agent(&args.agent, args.env)?;
    let (set_step_limit, set_persist) = apply_sets(&mut agent_cfg, &args.set)?;
    let episodes = positive_episodes(args.episodes.or(over.episodes).unwrap_or(DEFAULT_EPISODES))?;
    let step_limit = set_step_limit
        .or(args.step_limit)
        .or(over.step_limit)
        .unwrap_or_else(|| env.default_step_limit());
    if step_limit == 0 {
        return Err(CliError::Config("step_limit must be at least 1".into()));
    }
    let persist_tables =
        set_persist.unwrap_or(args.persist_tables || over.persist_tables.unwrap_or(false));
    let cfg = ExperimentConfig {
        env,
        agent: agent_cfg,
        episodes,
        step_limit,
        base_seed: args.seed.or(over.base_seed).unwrap_or(0),
        persist_tables,
    };
    let (stats, agent) = run_experiment_with_agent(&cfg);
    write_run_outputs(&args.out, &stats, args.dump_tables.then_some(&agent))
}

fn cmd_ablate(args: AblateArgs) -> Result<(), CliError> {
    let episodes = positive_episodes(args.episodes.unwrap_or(DEFAULT_EPISODES))?;
    let results = run_ablation(args.env, episodes, args.seed.unwrap_or(0));
    let mut summaries = Vec::with_capacity(results.len());
    for (name, stats) in &results {
        write_run_outputs(&args.out.join(name), stats, None)?;
        summaries.push((*name, summarize(stats)));
    }
    let rows = build_ablation_report(args.env, &summaries);
    write_csv(&args.out.join("ablation_report.csv"), |f| {
        write_ablation_csv(f, &rows)
    })
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let episodes = positive_episodes(args.episodes.unwrap_or(DEFAULT_EPISODES))?;
    let results = run_sweep(
        args.env,
        args.param,
        &args.values,
        episodes,
        args.seed.unwrap_or(0),
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    let mut points = Vec::with_capacity(results.len());
    for (value, stats) in &results {
        let dir = args
            .out
            .join(format!("{}_{value}", args.param.canonical_name()));
        write_run_outputs(&dir, stats, None)?;
        points.push((*value, summarize(stats)));
    }
    write_csv(&args.out.join("sweep.csv"), |f| write_sweep_csv(f, &points))
}

fn read_episodes(path: &Path) -> Result<Vec<EpisodeStats>, CliError> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    let stats = read_episodes_csv(text.as_bytes())
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if stats.is_empty() {
        return Err(CliError::Config(format!(
            "{}: no episodes in file",
            path.display()
        )));
    }
    Ok(stats)
}

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    let baseline = summarize(&read_episodes(&args.baseline)?);
    let variant = summarize(&read_episodes(&args.variant)?);
    let rows = compare(&baseline, &variant);
    match args.out {
        Some(path) => write_csv(&path, |f| write_comparison_csv(f, &rows)),
        None => write_comparison_csv(std::io::stdout(), &rows)
            .map_err(|e| CliError::Io(format!("stdout: {e}"))),
    }
}
