//! Experiment harness: seeded episode execution, accounting, ablations,
//! sweeps, and CSV output.
//!
//! Reproducibility contract: episode `i` of a run draws everything from one
//! ChaCha8 stream seeded `base_seed + i`; the environment reset consumes
//! draws first, then the agent's selections. The per-episode seed sequence
//! depends only on the base seed, so every agent run with the same base
//! seed experiences the same start states, and identical configs produce
//! byte-identical CSVs.
//!
//! Accounting: every loop iteration consumes one step of budget. A step
//! whose outcome the agent rolled back counts toward `rollbacks` and
//! nothing else; its reward and events stay out of the episode totals. All
//! other steps accumulate the raw environment reward (shaping is a learning
//! signal, not an environment cost) and the environment's event flags.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::agent::Agent;
use crate::config::{preset, AgentConfig, ConfigError, PRESET_NAMES};
use crate::env::{EnvKind, Environment};
use crate::stats::{aggregate, Aggregate, ComparisonRow, RunSummary};

/// Everything a single run needs besides output locations.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    pub agent: AgentConfig,
    pub episodes: u64,
    pub step_limit: u64,
    pub base_seed: u64,
    /// Keep learned tables across episodes (continual training) instead of
    /// retraining from scratch under each episode's seed.
    pub persist_tables: bool,
}

impl ExperimentConfig {
    pub fn new(env: EnvKind, agent: AgentConfig) -> Self {
        Self {
            env,
            agent,
            episodes: 100_000,
            step_limit: env.default_step_limit(),
            base_seed: 0,
            persist_tables: false,
        }
    }
}

/// One episode's record, exactly the columns of the episode CSV.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpisodeStats {
    pub episode: u64,
    pub seed: u64,
    pub total_reward: f64,
    pub steps: u64,
    pub falls: u64,
    pub illegal_actions: u64,
    pub deliveries: u64,
    pub rollbacks: u64,
    pub reached_goal: bool,
}

/// Runs one episode under its own RNG stream. The caller prepares the agent
/// (fresh tables or carried-over state) via [`Agent::begin_episode`].
pub fn run_episode(
    env: &dyn Environment,
    agent: &mut Agent,
    step_limit: u64,
    seed: u64,
    episode: u64,
) -> EpisodeStats {
    assert!(step_limit >= 1, "step_limit must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = env.reset(&mut rng);
    let mut stats = EpisodeStats {
        episode,
        seed,
        total_reward: 0.0,
        steps: 0,
        falls: 0,
        illegal_actions: 0,
        deliveries: 0,
        rollbacks: 0,
        reached_goal: false,
    };
    while stats.steps < step_limit {
        let step = agent
            .step(env, state, &mut rng)
            .expect("episode states are non-terminal");
        stats.steps += 1;
        if step.rollback_fired {
            stats.rollbacks += 1;
        } else {
            stats.total_reward += step.reward;
            stats.falls += u64::from(step.events.fell_off_cliff);
            stats.illegal_actions += u64::from(step.events.illegal_action);
            stats.deliveries += u64::from(step.events.delivered);
        }
        state = step.effective_next_state;
        if step.terminated {
            stats.reached_goal = true;
            break;
        }
    }
    debug_assert!(stats.rollbacks <= stats.steps);
    debug_assert!(stats.deliveries <= 1);
    stats
}

/// Runs the full episode schedule and also returns the trained agent, for
/// table dumps.
pub fn run_experiment_with_agent(cfg: &ExperimentConfig) -> (Vec<EpisodeStats>, Agent) {
    let env = cfg.env.build();
    let mut agent = Agent::new(&cfg.agent, env.num_states(), env.num_actions());
    let stats = (0..cfg.episodes)
        .map(|i| {
            agent.begin_episode(!cfg.persist_tables);
            run_episode(
                env.as_ref(),
                &mut agent,
                cfg.step_limit,
                cfg.base_seed + i,
                i,
            )
        })
        .collect();
    (stats, agent)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Vec<EpisodeStats> {
    run_experiment_with_agent(cfg).0
}

/// Metric order used by summaries, comparisons, and reports.
pub const METRICS: [&str; 7] = [
    "total_reward",
    "steps",
    "falls",
    "illegal_actions",
    "deliveries",
    "rollbacks",
    "reached_goal",
];

pub fn summarize(stats: &[EpisodeStats]) -> RunSummary {
    fn col(stats: &[EpisodeStats], f: impl Fn(&EpisodeStats) -> f64) -> Aggregate {
        aggregate(&stats.iter().map(f).collect::<Vec<_>>())
    }
    RunSummary {
        metrics: vec![
            ("total_reward", col(stats, |e| e.total_reward)),
            ("steps", col(stats, |e| e.steps as f64)),
            ("falls", col(stats, |e| e.falls as f64)),
            ("illegal_actions", col(stats, |e| e.illegal_actions as f64)),
            ("deliveries", col(stats, |e| e.deliveries as f64)),
            ("rollbacks", col(stats, |e| e.rollbacks as f64)),
            (
                "reached_goal",
                col(stats, |e| if e.reached_goal { 1.0 } else { 0.0 }),
            ),
        ],
    }
}

/// The safety metric each environment reports in ablation tables.
pub fn failure_metric(env: EnvKind) -> &'static str {
    match env {
        EnvKind::CliffWalking => "falls",
        EnvKind::Taxi => "illegal_actions",
    }
}

/// Runs all eight presets under a shared seed schedule, in parallel.
/// Results come back in [`PRESET_NAMES`] order.
pub fn run_ablation(
    env: EnvKind,
    episodes: u64,
    base_seed: u64,
) -> Vec<(&'static str, Vec<EpisodeStats>)> {
    PRESET_NAMES
        .par_iter()
        .map(|&name| {
            let agent = preset(name, env).expect("built-in preset");
            let cfg = ExperimentConfig {
                episodes,
                base_seed,
                ..ExperimentConfig::new(env, agent)
            };
            (name, run_experiment(&cfg))
        })
        .collect()
}

/// One line of the ablation report. Delta cells are relative to the
/// `baseline` preset and absent on the baseline's own row.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub agent: String,
    pub reward_mean: f64,
    pub reward_std: f64,
    pub delta_reward: Option<f64>,
    pub pct_delta_reward: Option<f64>,
    pub failures: f64,
    /// Failure reduction vs. baseline, in percent (positive = fewer).
    pub pct_delta_failures: Option<f64>,
    pub rollbacks: f64,
}

/// Assembles the ablation report, sorted by mean reward, best first.
pub fn build_ablation_report(
    env: EnvKind,
    summaries: &[(&'static str, RunSummary)],
) -> Vec<AblationRow> {
    let failure = failure_metric(env);
    let (_, base) = summaries
        .iter()
        .find(|(name, _)| *name == "baseline")
        .expect("ablation includes the baseline preset");
    let base_reward = base.get("total_reward").unwrap().mean;
    let base_failures = base.get(failure).unwrap().mean;
    let mut rows: Vec<AblationRow> = summaries
        .iter()
        .map(|(name, summary)| {
            let reward = base_reward_cell(summary);
            let failures = summary.get(failure).unwrap().mean;
            let is_baseline = *name == "baseline";
            let delta = reward.mean - base_reward;
            AblationRow {
                agent: name.to_string(),
                reward_mean: reward.mean,
                reward_std: reward.std,
                delta_reward: (!is_baseline).then_some(delta),
                pct_delta_reward: if is_baseline || base_reward == 0.0 {
                    None
                } else {
                    Some(delta / base_reward.abs() * 100.0)
                },
                failures,
                pct_delta_failures: if is_baseline || base_failures == 0.0 {
                    None
                } else {
                    Some((base_failures - failures) / base_failures * 100.0)
                },
                rollbacks: summary.get("rollbacks").unwrap().mean,
            }
        })
        .collect();
    rows.sort_by(|a, b| b.reward_mean.total_cmp(&a.reward_mean));
    rows
}

fn base_reward_cell(summary: &RunSummary) -> &Aggregate {
    summary
        .get("total_reward")
        .expect("summaries always carry total_reward")
}

/// Hyperparameters the sweep command can vary. Everything else stays at the
/// environment's `fullmodel` preset values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    HorizonK,
    PenaltyWeight,
    PenaltyFactor,
    PhiInit,
    Threshold,
    QInit,
}

impl SweepParam {
    pub fn canonical_name(self) -> &'static str {
        match self {
            SweepParam::HorizonK => "horizon_k",
            SweepParam::PenaltyWeight => "penalty_weight",
            SweepParam::PenaltyFactor => "penalty_factor",
            SweepParam::PhiInit => "phi_init",
            SweepParam::Threshold => "threshold",
            SweepParam::QInit => "q_init",
        }
    }

    /// Writes one sweep value into a config and re-validates it; the config
    /// is untouched when the value is rejected.
    pub fn apply(self, cfg: &mut AgentConfig, value: f64) -> Result<(), ConfigError> {
        let mut next = cfg.clone();
        match self {
            SweepParam::HorizonK => {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(ConfigError::InvalidValue(format!(
                        "horizon_k must be a non-negative integer, got {value}"
                    )));
                }
                next.horizon_k = Some(value as u64);
            }
            SweepParam::PenaltyWeight => next.penalty_weight = Some(value),
            SweepParam::PenaltyFactor => next.penalty_factor = Some(value),
            SweepParam::PhiInit => next.phi_init = Some(value),
            SweepParam::Threshold => next.threshold = Some(value),
            SweepParam::QInit => next.q_init = value,
        }
        next.validate()?;
        *cfg = next;
        Ok(())
    }
}

impl std::str::FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "K" | "k" | "horizon_k" => SweepParam::HorizonK,
            "lambda" | "penalty_weight" => SweepParam::PenaltyWeight,
            "penalty" | "penalty_factor" => SweepParam::PenaltyFactor,
            "phi_init" => SweepParam::PhiInit,
            "threshold" => SweepParam::Threshold,
            "q_init" => SweepParam::QInit,
            other => {
                return Err(format!(
                    "unknown sweep parameter '{other}' \
                     (expected K, lambda, penalty, phi_init, threshold, or q_init)"
                ))
            }
        })
    }
}

/// One full experiment per value, in parallel, everything else pinned to
/// the environment's `fullmodel` preset.
pub fn run_sweep(
    env: EnvKind,
    param: SweepParam,
    values: &[f64],
    episodes: u64,
    base_seed: u64,
) -> Result<Vec<(f64, Vec<EpisodeStats>)>, ConfigError> {
    assert!(!values.is_empty(), "sweep requires at least one value");
    let mut configs = Vec::with_capacity(values.len());
    for &value in values {
        let mut agent = preset("fullmodel", env).expect("built-in preset");
        param.apply(&mut agent, value)?;
        configs.push((value, agent));
    }
    Ok(configs
        .into_par_iter()
        .map(|(value, agent)| {
            let cfg = ExperimentConfig {
                episodes,
                base_seed,
                ..ExperimentConfig::new(env, agent)
            };
            (value, run_experiment(&cfg))
        })
        .collect())
}

fn fmt(v: f64) -> String {
    v.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| v.to_string())
}

pub fn write_episodes_csv<W: Write>(out: W, stats: &[EpisodeStats]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "episode",
        "seed",
        "total_reward",
        "steps",
        "falls",
        "illegal_actions",
        "deliveries",
        "rollbacks",
        "reached_goal",
    ])?;
    for e in stats {
        w.write_record([
            e.episode.to_string(),
            e.seed.to_string(),
            fmt(e.total_reward),
            e.steps.to_string(),
            e.falls.to_string(),
            e.illegal_actions.to_string(),
            e.deliveries.to_string(),
            e.rollbacks.to_string(),
            e.reached_goal.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an episode CSV written by [`write_episodes_csv`]. Numeric text is
/// the shortest round-trip form, so a write/read cycle reproduces every
/// record exactly.
pub fn read_episodes_csv<R: std::io::Read>(input: R) -> csv::Result<Vec<EpisodeStats>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

pub fn write_summary_csv<W: Write>(out: W, summary: &RunSummary) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "mean", "std", "ci_low", "ci_high", "n"])?;
    for (metric, agg) in &summary.metrics {
        w.write_record([
            metric.to_string(),
            fmt(agg.mean),
            fmt(agg.std),
            fmt(agg.ci_low),
            fmt(agg.ci_high),
            agg.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_comparison_csv<W: Write>(out: W, rows: &[ComparisonRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "metric",
        "baseline_mean",
        "baseline_std",
        "variant_mean",
        "variant_std",
        "delta_mean",
        "pct_delta_mean",
        "delta_std",
        "pct_delta_std",
    ])?;
    for row in rows {
        w.write_record([
            row.metric.to_string(),
            fmt(row.baseline_mean),
            fmt(row.baseline_std),
            fmt(row.variant_mean),
            fmt(row.variant_std),
            fmt(row.delta_mean),
            opt(row.pct_delta_mean),
            fmt(row.delta_std),
            opt(row.pct_delta_std),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ablation_csv<W: Write>(out: W, rows: &[AblationRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "agent",
        "reward_mean",
        "reward_std",
        "delta_reward",
        "pct_delta_reward",
        "failures",
        "pct_delta_failures",
        "rollbacks",
    ])?;
    for row in rows {
        w.write_record([
            row.agent.clone(),
            fmt(row.reward_mean),
            fmt(row.reward_std),
            opt(row.delta_reward),
            opt(row.pct_delta_reward),
            fmt(row.failures),
            opt(row.pct_delta_failures),
            fmt(row.rollbacks),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Plot-ready sweep table over the headline metric (total reward).
pub fn write_sweep_csv<W: Write>(out: W, points: &[(f64, RunSummary)]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["value", "mean", "std", "ci_low", "ci_high", "n"])?;
    for (value, summary) in points {
        let agg = summary
            .get("total_reward")
            .expect("summaries always carry total_reward");
        w.write_record([
            fmt(*value),
            fmt(agg.mean),
            fmt(agg.std),
            fmt(agg.ci_low),
            fmt(agg.ci_high),
            agg.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_q_dump<W: Write>(out: W, agent: &Agent) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["state", "action", "q"])?;
    for s in 0..agent.num_states() {
        for a in 0..agent.num_actions() {
            let q = agent.q(crate::env::StateId(s), crate::env::ActionId(a));
            w.write_record([s.to_string(), a.to_string(), fmt(q)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reversibility score dump; writes only the header when the agent has no
/// estimator.
pub fn write_phi_dump<W: Write>(out: W, agent: &Agent) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["state", "action", "phi"])?;
    for s in 0..agent.num_states() {
        for a in 0..agent.num_actions() {
            if let Some(phi) = agent.phi(crate::env::StateId(s), crate::env::ActionId(a)) {
                w.write_record([s.to_string(), a.to_string(), fmt(phi)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
