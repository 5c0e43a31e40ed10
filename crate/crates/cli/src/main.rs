use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bestarm::bounds::bound_report;
use bestarm::harness::{run_trials, summarize, write_summary_json, write_trace_csv, write_trials_csv};
use bestarm::oracle::solve;
use bestarm::{ExperimentConfig, ExperimentSummary, TrackingRule};
use clap::{Args, Parser, Subcommand};

mod config;

use config::CliConfig;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or instance. Exit code 1.
    Usage(String),
    /// Solver, simulation or file-system failure. Exit code 2.
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Parser)]
#[command(
    name = "bestarm",
    version,
    about = "Best-arm identification with several optimal arms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct InstanceArgs {
    /// TOML config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// bernoulli, gaussian or poisson
    #[arg(long)]
    family: Option<String>,
    /// Known standard deviation of gaussian rewards
    #[arg(long)]
    sigma: Option<f64>,
    /// Comma-separated arm means, e.g. 0.5,0.5,0.2
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    means: Option<Vec<f64>>,
    /// Number of optimal arms
    #[arg(long)]
    m: Option<usize>,
}

#[derive(Args, Default)]
struct ExperimentArgs {
    /// Confidence parameter, default 0.1
    #[arg(long)]
    delta: Option<f64>,
    /// Sampling rule: c (C-Tracking) or d (D-Tracking, default)
    #[arg(long)]
    rule: Option<TrackingRule>,
    /// Number of independent trials, default 100
    #[arg(long)]
    trials: Option<usize>,
    /// Base seed, default 0
    #[arg(long)]
    seed: Option<u64>,
    /// Per-trial round cap
    #[arg(long)]
    max_rounds: Option<u64>,
    /// Write a per-round trace for every trial
    #[arg(long)]
    trace: bool,
    /// Output directory (overrides BESTARM_OUT and the config file)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Characteristic time T* and optimal allocation w*
    Oracle {
        #[command(flatten)]
        instance: InstanceArgs,
        /// Relative duality-gap tolerance
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Print a CSV row instead of the report
        #[arg(long)]
        machine: bool,
    },
    /// Monte Carlo run of one configuration
    Run {
        #[command(flatten)]
        instance: InstanceArgs,
        #[command(flatten)]
        experiment: ExperimentArgs,
    },
    /// One run per (rule, delta) cell
    Sweep {
        #[command(flatten)]
        instance: InstanceArgs,
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// Comma-separated confidence levels
        #[arg(long, value_delimiter = ',')]
        deltas: Option<Vec<f64>>,
        /// Comma-separated sampling rules
        #[arg(long, value_delimiter = ',')]
        rules: Option<Vec<TrackingRule>>,
    },
    /// Lower bounds on E[tau] and the Lambert-W stopping-time bound
    Bounds {
        #[command(flatten)]
        instance: InstanceArgs,
        /// Confidence parameter, default 0.1
        #[arg(long)]
        delta: Option<f64>,
        /// Print a CSV row instead of the report
        #[arg(long)]
        machine: bool,
    },
}

fn load(instance: InstanceArgs, experiment: Option<&ExperimentArgs>) -> Result<CliConfig, CliError> {
    let mut cfg = match &instance.config {
        Some(path) => CliConfig::load(path)?,
        None => CliConfig::default(),
    };
    let mut flags = CliConfig::default();
    flags.instance.family = instance.family;
    flags.instance.sigma = instance.sigma;
    flags.instance.means = instance.means;
    flags.instance.m = instance.m;
    if let Some(e) = experiment {
        flags.experiment.delta = e.delta;
        flags.experiment.trials = e.trials;
        flags.experiment.seed = e.seed;
        flags.algorithm.rule = e.rule;
        flags.algorithm.max_rounds = e.max_rounds;
        flags.output.trace = e.trace.then_some(true);
    }
    cfg.merge(flags);
    Ok(cfg)
}

/// Six significant digits, trailing zeros dropped.
fn g6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..6).contains(&exp) {
        let s = format!("{:.*}", (5 - exp).max(0) as usize, x);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.5e}")
    }
}

fn list(xs: &[f64]) -> String {
    xs.iter().map(|&x| g6(x)).collect::<Vec<_>>().join(", ")
}

fn cmd_oracle(instance: InstanceArgs, tol: f64, machine: bool) -> Result<(), CliError> {
    let inst = load(instance, None)?.instance()?;
    let sol = solve(&inst, tol).map_err(runtime)?;
    if machine {
        let ws: Vec<String> = (0..inst.k()).map(|a| format!("w_{a}")).collect();
        println!("t_star,gap,iterations,{}", ws.join(","));
        let vals: Vec<String> = sol.w_star.as_slice().iter().map(|w| w.to_string()).collect();
        println!(
            "{},{},{},{}",
            sol.t_star,
            sol.gap_certificate,
            sol.iterations,
            vals.join(",")
        );
    } else {
        println!("family      {}", inst.family());
        println!("means       {}", list(inst.means()));
        println!("M           {}", inst.m_opt());
        println!("T*          {}", g6(sol.t_star));
        println!("w*          {}", list(sol.w_star.as_slice()));
        println!("gap         {}", g6(sol.gap_certificate));
        println!("iterations  {}", sol.iterations);
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Run one experiment and write `summary.json`, `trials.csv` and any traces
/// into `dir`.
fn execute(cfg: &ExperimentConfig, dir: &Path) -> Result<ExperimentSummary, CliError> {
    let trials = run_trials(cfg).map_err(runtime)?;
    let summary = summarize(cfg, &trials).map_err(runtime)?;
    create_dir(dir)?;
    write_summary_json(create(&dir.join("summary.json"))?, &summary).map_err(runtime)?;
    write_trials_csv(create(&dir.join("trials.csv"))?, &trials, cfg.instance.k()).map_err(runtime)?;
    for (i, t) in trials.iter().enumerate() {
        if let Some(rows) = &t.trace {
            write_trace_csv(create(&dir.join(format!("trace_{i}.csv")))?, rows).map_err(runtime)?;
        }
    }
    Ok(summary)
}

fn print_summary(s: &ExperimentSummary) {
    let errors = (s.error_rate * s.n_trials as f64).round();
    println!(
        "rule        {}   delta {}   trials {}   seed {}",
        s.rule,
        g6(s.delta),
        s.n_trials,
        s.base_seed
    );
    println!(
        "error rate  {} ({} wrong, {} capped)",
        g6(s.error_rate),
        errors,
        s.n_capped
    );
    println!("mean tau    {} (sd {})", g6(s.mean_tau), g6(s.stddev_tau));
    println!("T*          {}", g6(s.t_star));
    println!("lower bound {}", g6(s.lb_expected_tau));
    match s.lw_upper_hint {
        Some(x) => println!("lambert     {}", g6(x)),
        None => println!("lambert     n/a"),
    }
    if let Some(note) = &s.threshold_family_caveat {
        println!("note        {note}");
    }
}

fn cmd_run(instance: InstanceArgs, experiment: ExperimentArgs) -> Result<(), CliError> {
    let cfg = load(instance, Some(&experiment))?;
    let exp = cfg.experiment()?;
    let dir = cfg.out_dir(experiment.out.as_deref());
    println!(
        "family      {}   means {}   M {}",
        exp.instance.family(),
        list(exp.instance.means()),
        exp.instance.m_opt()
    );
    let summary = execute(&exp, &dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml()).map_err(runtime)?;
    print_summary(&summary);
    println!("wrote       {}", dir.display());
    Ok(())
}

fn cmd_sweep(
    instance: InstanceArgs,
    experiment: ExperimentArgs,
    deltas: Option<Vec<f64>>,
    rules: Option<Vec<TrackingRule>>,
) -> Result<(), CliError> {
    let mut cfg = load(instance, Some(&experiment))?;
    if deltas.is_some() {
        cfg.sweep.deltas = deltas;
    }
    if rules.is_some() {
        cfg.sweep.rules = rules;
    }
    let deltas = cfg.sweep.deltas.clone().unwrap_or_else(|| vec![cfg.delta()]);
    let rules = cfg
        .sweep
        .rules
        .clone()
        .unwrap_or_else(|| vec![cfg.algorithm.rule.unwrap_or(TrackingRule::DTracking)]);
    let dir = cfg.out_dir(experiment.out.as_deref());
    create_dir(&dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml()).map_err(runtime)?;

    let mut table = csv::Writer::from_writer(create(&dir.join("sweep.csv"))?);
    table
        .write_record([
            "rule",
            "delta",
            "status",
            "error_rate",
            "mean_tau",
            "stddev_tau",
            "t_star",
            "lb_expected_tau",
            "lw_upper_hint",
            "n_capped",
            "message",
        ])
        .map_err(runtime)?;
    println!(
        "{:<5} {:>10} {:>11} {:>11} {:>11} {:>8}",
        "rule", "delta", "error_rate", "mean_tau", "stddev_tau", "capped"
    );
    let mut failed = 0;
    for &rule in &rules {
        for &delta in &deltas {
            let mut cell = cfg.clone();
            cell.algorithm.rule = Some(rule);
            cell.experiment.delta = Some(delta);
            let outcome = cell
                .experiment()
                .and_then(|exp| execute(&exp, &dir.join(format!("{rule}_delta_{delta}"))));
            let row = match &outcome {
                Ok(s) => {
                    println!(
                        "{:<5} {:>10} {:>11} {:>11} {:>11} {:>8}",
                        rule,
                        g6(delta),
                        g6(s.error_rate),
                        g6(s.mean_tau),
                        g6(s.stddev_tau),
                        s.n_capped
                    );
                    vec![
                        rule.to_string(),
                        delta.to_string(),
                        "ok".into(),
                        s.error_rate.to_string(),
                        s.mean_tau.to_string(),
                        s.stddev_tau.to_string(),
                        s.t_star.to_string(),
                        s.lb_expected_tau.to_string(),
                        s.lw_upper_hint.map(|x| x.to_string()).unwrap_or_default(),
                        s.n_capped.to_string(),
                        String::new(),
                    ]
                }
                Err(e) => {
                    failed += 1;
                    println!("{:<5} {:>10} failed: {e}", rule, g6(delta));
                    let mut row = vec![rule.to_string(), delta.to_string(), "failed".into()];
                    row.extend(std::iter::repeat_n(String::new(), 7));
                    row.push(e.to_string());
                    row
                }
            };
            table.write_record(&row).map_err(runtime)?;
        }
    }
    table.flush().map_err(runtime)?;
    println!("wrote       {}", dir.display());
    if failed > 0 {
        return Err(CliError::Runtime(format!("{failed} sweep cell(s) failed")));
    }
    Ok(())
}

fn cmd_bounds(instance: InstanceArgs, delta: Option<f64>, machine: bool) -> Result<(), CliError> {
    let mut cfg = load(instance, None)?;
    if delta.is_some() {
        cfg.experiment.delta = delta;
    }
    let inst = cfg.instance()?;
    let delta = cfg.delta();
    if !(delta > 0.0 && delta < 1.0) {
        return Err(CliError::Usage(format!("delta must lie in (0, 1), got {delta}")));
    }
    let r = bound_report(&inst, delta).map_err(runtime)?;
    let slack = r
        .lambert_bound
        .map(|x| r.c1 * x - (r.c2 * x.powf(r.threshold_alpha)).ln());
    if machine {
        println!(
            "delta,t_star,kl_lower_bound,log_lower_bound,asymptotic_line,c,alpha,c1,c2,a,lambert_bound,lambert_slack"
        );
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        println!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.delta,
            r.t_star,
            r.kl_lower_bound,
            r.log_lower_bound,
            r.asymptotic_line,
            r.threshold_c,
            r.threshold_alpha,
            r.c1,
            r.c2,
            r.lambert_a,
            opt(r.lambert_bound),
            opt(slack)
        );
        return Ok(());
    }
    println!("delta               {}", g6(r.delta));
    println!("T*                  {}", g6(r.t_star));
    println!("T* kl(1-d, d)       {}", g6(r.kl_lower_bound));
    println!("T* ln(1/(2.4 d))    {}", g6(r.log_lower_bound));
    println!("T* ln(1/d)          {}", g6(r.asymptotic_line));
    println!("C, alpha            {}, {}", g6(r.threshold_c), g6(r.threshold_alpha));
    println!("c1, c2, A           {}, {}, {}", g6(r.c1), g6(r.c2), g6(r.lambert_a));
    match (r.lambert_bound, slack) {
        (Some(x), Some(s)) => {
            println!("lambert bound       {}", g6(x));
            println!("c1 x - ln(c2 x^a)   {}", g6(s));
        }
        _ => println!("lambert bound       n/a (A <= 1)"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Oracle { instance, tol, machine } => cmd_oracle(instance, tol, machine),
        Command::Run { instance, experiment } => cmd_run(instance, experiment),
        Command::Sweep {
            instance,
            experiment,
            deltas,
            rules,
        } => cmd_sweep(instance, experiment, deltas, rules),
        Command::Bounds {
            instance,
            delta,
            machine,
        } => cmd_bounds(instance, delta, machine),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
