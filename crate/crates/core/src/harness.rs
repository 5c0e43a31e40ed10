//! Seeded Monte Carlo trials of Track-and-Stop and their aggregation.
//!
//! Trial `i` of an experiment draws every reward and every decoding coin from
//! its own ChaCha8 stream, keyed by the `(i + 1)`-th output of SplitMix64
//! started at `base_seed`. Results are therefore a pure function of the
//! configuration, whether trials run sequentially or on a thread pool.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{lower_bound_from_t_star, stopping_time_hint, weak_lower_bound_from_t_star, ORACLE_TOL};
use crate::error::{Error, Result};
use crate::family::{sample, ArmModel, FamilyKind};
use crate::oracle::{solve, solve_with, BanditInstance, SolverOptions, Weights};
use crate::stopping::{evaluate, recommend, StoppingConfig};
use crate::tracking::{initialization_arm, next_arm, HistoryState, TrackingRule};

pub const DEFAULT_MAX_ROUNDS: u64 = 1_000_000;

/// Accuracy of the per-round plug-in allocation. Tracking only needs the
/// direction of `w*`, so this is far looser than the reported `T*`.
pub const PLAN_TOL: f64 = 1e-3;
pub const PLAN_MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub instance: BanditInstance,
    pub rule: TrackingRule,
    pub delta: f64,
    pub n_trials: usize,
    pub base_seed: u64,
    pub max_rounds: u64,
    pub trace: bool,
}

impl ExperimentConfig {
    pub fn new(
        instance: BanditInstance,
        rule: TrackingRule,
        delta: f64,
        n_trials: usize,
        base_seed: u64,
    ) -> Result<Self> {
        let config = ExperimentConfig {
            instance,
            rule,
            delta,
            n_trials,
            base_seed,
            max_rounds: DEFAULT_MAX_ROUNDS,
            trace: false,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.stopping_config()?;
        if self.n_trials == 0 {
            return Err(Error::Precondition("n_trials must be at least 1".into()));
        }
        if self.max_rounds < self.instance.k() as u64 {
            return Err(Error::Precondition(format!(
                "max_rounds = {} cannot cover the {} initial pulls",
                self.max_rounds,
                self.instance.k()
            )));
        }
        Ok(())
    }

    fn stopping_config(&self) -> Result<StoppingConfig> {
        StoppingConfig::new(self.delta, self.instance.m_opt(), self.instance.k())
    }
}

/// One round of a traced trial. Statistic fields are empty until the
/// stopping rule is first checked, at round `K + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: u64,
    pub arm: usize,
    pub reward: f64,
    pub z_value: Option<f64>,
    pub threshold: Option<f64>,
    pub critical_arm: Option<usize>,
    pub tuple: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub tau: u64,
    pub recommended: usize,
    /// Always false for capped trials.
    pub correct: bool,
    pub final_counts: Vec<u64>,
    pub hit_cap: bool,
    #[serde(skip)]
    pub trace: Option<Vec<TraceRecord>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub family: FamilyKind,
    pub means: Vec<f64>,
    pub m_opt: usize,
    pub rule: TrackingRule,
    pub delta: f64,
    pub n_trials: usize,
    pub base_seed: u64,
    pub error_rate: f64,
    pub mean_tau: f64,
    pub stddev_tau: f64,
    pub t_star: f64,
    pub w_star: Vec<f64>,
    /// `T* kl(1 - delta, delta)`.
    pub lb_expected_tau: f64,
    /// `T* ln(1/(2.4 delta))`.
    pub lb_log_form: f64,
    /// Lambert-W crossing bound, absent when its precondition fails.
    pub lw_upper_hint: Option<f64>,
    pub n_capped: usize,
    pub threshold_family_caveat: Option<String>,
}

/// The `n`-th output (`n >= 1`) of SplitMix64 seeded with `seed`.
pub fn splitmix64(seed: u64, n: u64) -> u64 {
    let mut z = seed.wrapping_add(n.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn trial_rng(base_seed: u64, trial_index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(base_seed, trial_index.wrapping_add(1)))
}

/// Plug-in allocation `w*(mu_hat)`, warm-started from the previous round.
/// Falls back to uniform weights when the empirical instance is degenerate.
fn plan(inst: &BanditInstance, state: &HistoryState, warm: &mut Weights) -> Weights {
    let Some(means) = state.empirical_means() else {
        return Weights::uniform(state.k());
    };
    let Ok(hat) = BanditInstance::empirical(inst.family(), &means, inst.m_opt()) else {
        return Weights::uniform(state.k());
    };
    let opts = SolverOptions::warm(PLAN_TOL, PLAN_MAX_ITER);
    let w = match solve_with(&hat, &opts, Some(warm)) {
        Ok(sol) => sol.w_star,
        Err(Error::NotConverged { best, .. }) => best.w_star,
        Err(_) => Weights::uniform(state.k()),
    };
    *warm = w.clone();
    w
}

pub fn run_trial(config: &ExperimentConfig, trial_index: u64) -> Result<TrialResult> {
    config.validate()?;
    let inst = &config.instance;
    let k = inst.k();
    let stop_cfg = config.stopping_config()?;
    let arms: Vec<ArmModel> = inst
        .means()
        .iter()
        .map(|&m| ArmModel::new(inst.family(), m))
        .collect::<Result<_>>()?;
    let optimal = inst.optimal_set();

    let mut rng = trial_rng(config.base_seed, trial_index);
    let mut state = HistoryState::new(k);
    let mut warm = Weights::uniform(k);
    let mut trace = config.trace.then(Vec::new);

    loop {
        let arm = match initialization_arm(config.rule, &mut state) {
            Some(a) => a,
            None => {
                let plugin = plan(inst, &state, &mut warm);
                next_arm(config.rule, &mut state, &plugin)?
            }
        };
        let reward = sample(&arms[arm], &mut rng);
        state.record(arm, reward);

        let report = if state.t > k as u64 {
            Some(evaluate(inst.family(), &state, &stop_cfg)?)
        } else {
            None
        };
        if let Some(rows) = trace.as_mut() {
            rows.push(TraceRecord {
                t: state.t,
                arm,
                reward,
                z_value: report.as_ref().map(|r| r.z_value),
                threshold: report.as_ref().map(|r| r.threshold),
                critical_arm: report.as_ref().map(|r| r.critical_arm),
                tuple: report.as_ref().map(|r| r.best_tuple.clone()),
            });
        }

        let hit_cap = state.t >= config.max_rounds;
        match report {
            Some(r) if r.stop => {
                let recommended = recommend(&r, &mut rng)?;
                return Ok(TrialResult {
                    tau: state.t,
                    recommended,
                    correct: optimal.contains(&recommended),
                    final_counts: state.counts,
                    hit_cap: false,
                    trace,
                });
            }
            Some(r) if hit_cap => {
                return Ok(TrialResult {
                    tau: state.t,
                    recommended: r.best_tuple[0],
                    correct: false,
                    final_counts: state.counts,
                    hit_cap: true,
                    trace,
                });
            }
            None if hit_cap => {
                return Ok(TrialResult {
                    tau: state.t,
                    recommended: arm,
                    correct: false,
                    final_counts: state.counts,
                    hit_cap: true,
                    trace,
                });
            }
            _ => {}
        }
    }
}

/// All trials of an experiment, in trial-index order.
pub fn run_trials(config: &ExperimentConfig) -> Result<Vec<TrialResult>> {
    config.validate()?;
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..config.n_trials as u64)
            .into_par_iter()
            .map(|i| run_trial(config, i))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..config.n_trials as u64).map(|i| run_trial(config, i)).collect()
    }
}

pub fn summarize(config: &ExperimentConfig, trials: &[TrialResult]) -> Result<ExperimentSummary> {
    if trials.is_empty() {
        return Err(Error::Precondition("no trials to summarize".into()));
    }
    let inst = &config.instance;
    let n = trials.len() as f64;
    let errors = trials.iter().filter(|r| !r.correct).count();
    let mean_tau = trials.iter().map(|r| r.tau as f64).sum::<f64>() / n;
    let stddev_tau = if trials.len() > 1 {
        (trials.iter().map(|r| (r.tau as f64 - mean_tau).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let oracle = solve(inst, ORACLE_TOL)?;
    let caveat = match inst.family() {
        FamilyKind::Bernoulli => None,
        other => Some(format!(
            "the stopping threshold is calibrated for Bernoulli rewards; its use with {} rewards is heuristic",
            other.name()
        )),
    };
    Ok(ExperimentSummary {
        family: inst.family(),
        means: inst.means().to_vec(),
        m_opt: inst.m_opt(),
        rule: config.rule,
        delta: config.delta,
        n_trials: trials.len(),
        base_seed: config.base_seed,
        error_rate: errors as f64 / n,
        mean_tau,
        stddev_tau,
        t_star: oracle.t_star,
        lb_expected_tau: lower_bound_from_t_star(oracle.t_star, config.delta)?,
        lb_log_form: weak_lower_bound_from_t_star(oracle.t_star, config.delta)?,
        lw_upper_hint: stopping_time_hint(oracle.t_star, inst.k(), inst.m_opt(), config.delta).ok(),
        w_star: oracle.w_star.into_inner(),
        n_capped: trials.iter().filter(|r| r.hit_cap).count(),
        threshold_family_caveat: caveat,
    })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    let trials = run_trials(config)?;
    summarize(config, &trials)
}

/// `trial,tau,recommended,correct,hit_cap,counts_0..counts_{K-1}`.
pub fn write_trials_csv<W: Write>(out: W, trials: &[TrialResult], k: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["trial", "tau", "recommended", "correct", "hit_cap"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..k).map(|a| format!("counts_{a}")));
    w.write_record(&header)?;
    for (i, r) in trials.iter().enumerate() {
        let mut row = vec![
            i.to_string(),
            r.tau.to_string(),
            r.recommended.to_string(),
            r.correct.to_string(),
            r.hit_cap.to_string(),
        ];
        row.extend(r.final_counts.iter().map(|n| n.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `t,arm,reward,z_value,threshold,critical_arm,tuple`, with tuple members
/// joined by `;`.
pub fn write_trace_csv<W: Write>(out: W, rows: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "arm", "reward", "z_value", "threshold", "critical_arm", "tuple"])?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for r in rows {
        w.write_record([
            r.t.to_string(),
            r.arm.to_string(),
            r.reward.to_string(),
            opt(r.z_value.map(|z| z.to_string())),
            opt(r.threshold.map(|b| b.to_string())),
            opt(r.critical_arm.map(|a| a.to_string())),
            opt(r
                .tuple
                .as_ref()
                .map(|t| t.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(";"))),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_json<W: Write>(mut out: W, summary: &ExperimentSummary) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, summary).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}
