//! Subcommand implementations.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use cartpole_core::dynamics::{Model, State};
use cartpole_core::integrator::{simulate, Controller, SimConfig, ZeroController};
use cartpole_core::params::ParamId;
use cartpole_core::policy::MlpPolicy;
use cartpole_core::roa::{roa_report, run_study, Controllers, Pairing, PairingSamples, RoaSummary};
use cartpole_core::sensitivity::{
    sensitivity, sensitivity_suite, Method, PerturbationSpec, SensSystem, SensitivityRecord,
    SuiteConfig,
};
use cartpole_core::trainer::{train_with_progress, REWARD_BOUND};

use crate::config::RunConfig;
use crate::csv_io::{self, RoaRow, SensitivityTable};
use crate::error::CliError;
use crate::svg::{self, Panel, Series, Style, PALETTE};
use crate::weights::WeightsFile;

/// `println!` that ignores a closed stdout (e.g. output piped into `head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

/// Exit status of a command that ran to completion.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NO_SUCCESS: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "cartpole",
    version,
    about = "Cart-pole control laboratory: training, simulation, sensitivity and region-of-attraction studies"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a controller with REINFORCE.
    Train(TrainArgs),
    /// Simulate one closed-loop (or uncontrolled) run.
    Simulate(SimulateArgs),
    /// Parameter sensitivities along a trajectory.
    Sensitivity(SensitivityArgs),
    /// Monte-Carlo region-of-attraction study.
    Roa(RoaArgs),
}

fn parse_training_model(s: &str) -> Result<Model, String> {
    match s.parse::<Model>() {
        Ok(m @ (Model::Lab | Model::Lti)) => Ok(m),
        _ => Err(format!("expected lab or lti, got `{s}`")),
    }
}

fn parse_model(s: &str) -> Result<Model, String> {
    s.parse::<Model>().map_err(|e| e.to_string())
}

fn parse_ic(s: &str) -> Result<State<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| format!("`{}` is not a number", t.trim()))
        })
        .collect::<Result<_, _>>()?;
    let arr: [f64; 4] = v
        .try_into()
        .map_err(|_| "expected four comma-separated values x,xdot,alpha,alphadot".to_string())?;
    if arr.iter().any(|x| !x.is_finite()) {
        return Err("initial condition must be finite".into());
    }
    Ok(State(arr))
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse::<Method>().map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training environment: lab or lti.
    #[arg(long, value_parser = parse_training_model)]
    pub model: Model,
    /// Run configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Where to write the trained weights.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Training-log CSV (default: the weights path with extension `log.csv`).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Plant model: lab, lti or simplified.
    #[arg(long, value_parser = parse_model)]
    pub model: Model,
    /// Weights file, or `zero` for 0 V throughout.
    #[arg(long, default_value = "zero")]
    pub controller: String,
    /// Initial state x,xdot,alpha,alphadot.
    #[arg(long, value_parser = parse_ic, allow_hyphen_values = true)]
    pub ic: State<f64>,
    /// Simulated time in seconds (default: `[sim] horizon`).
    #[arg(long)]
    pub time: Option<f64>,
    /// Trajectory CSV; the chart is written next to it with extension `svg`.
    #[arg(long, default_value = "trajectory.csv")]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    /// Plant model: lab or lti. Not used with --suite.
    #[arg(long, value_parser = parse_training_model, required_unless_present = "suite")]
    pub system: Option<Model>,
    /// Weights file, or `none` for the uncontrolled system.
    #[arg(long, default_value = "none")]
    pub controller: String,
    /// Parameter symbol, or `all`.
    #[arg(long, default_value = "all")]
    pub param: String,
    /// cs (complex step), cd (central difference) or ode (forward
    /// sensitivity equations, uncontrolled LTI only).
    #[arg(long, value_parser = parse_method, default_value = "cs")]
    pub method: Method,
    /// Perturbation step (default from `[sensitivity]`).
    #[arg(long)]
    pub h: Option<f64>,
    /// Horizon in seconds (default from `[sensitivity]`).
    #[arg(long)]
    pub time: Option<f64>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Run all five systems for every parameter.
    #[arg(long)]
    pub suite: bool,
    #[arg(long)]
    pub lti_weights: Option<PathBuf>,
    #[arg(long)]
    pub lab_weights: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RoaArgs {
    /// a (LTI controller on LTI), b (LTI controller on lab), c (lab
    /// controller on lab) or all.
    #[arg(long, default_value = "all")]
    pub pairing: String,
    /// Number of uniform initial conditions (default `[roa] n_samples`).
    #[arg(long)]
    pub n: Option<usize>,
    /// Add neighborhood samples around successful initial conditions.
    #[arg(long)]
    pub refine: bool,
    /// Sampling seed (default `[roa] seed`).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lti_weights: Option<PathBuf>,
    #[arg(long)]
    pub lab_weights: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Sensitivity(a) => cmd_sensitivity(&a),
        Command::Roa(a) => cmd_roa(&a),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    use std::io::Write;
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(path, e))
}

/// Runs `f` on a rayon pool capped by `CARTPOLE_THREADS`.
fn with_pool<R: Send>(f: impl FnOnce() -> R + Send) -> Result<R, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("CARTPOLE_THREADS") {
        let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            CliError::Usage(format!(
                "CARTPOLE_THREADS must be a positive integer, got `{v}`"
            ))
        })?;
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn cmd_train(a: &TrainArgs) -> Result<i32, CliError> {
    let cfg = load_config(a.config.as_deref())?;
    let tcfg = cfg.trainer_for(a.model, a.seed);
    let outcome = train_with_progress(&tcfg, |e| {
        if (e.episode + 1) % 100 == 0 {
            log::info!(
                "episode {} steps {} moving average {:.1}",
                e.episode + 1,
                e.steps,
                e.moving_avg
            );
        }
    })?;
    let weights = WeightsFile {
        policy: outcome.policy,
        seed: a.seed,
        trained_on: a.model,
    };
    weights.save(&a.out)?;
    let log_path = a
        .log
        .clone()
        .unwrap_or_else(|| a.out.with_extension("log.csv"));
    csv_io::write_training_log(create(&log_path)?, &outcome.log)?;
    let last = outcome.log.last();
    say!(
        "model={} seed={} episodes={} moving_avg={:.3} reached_threshold={}",
        a.model,
        a.seed,
        outcome.log.len(),
        last.map_or(0.0, |e| e.moving_avg),
        outcome.reached_threshold
    );
    say!("weights: {}", a.out.display());
    say!("log: {}", log_path.display());
    if outcome.reached_threshold {
        Ok(EXIT_OK)
    } else {
        eprintln!(
            "training stopped after {} episodes without reaching a moving average of {}",
            tcfg.max_episodes, tcfg.success_threshold
        );
        Ok(EXIT_NO_SUCCESS)
    }
}

fn load_controller(spec: &str, none_words: &[&str]) -> Result<Option<WeightsFile>, CliError> {
    if none_words.contains(&spec) {
        Ok(None)
    } else {
        WeightsFile::load(Path::new(spec)).map(Some)
    }
}

fn cmd_simulate(a: &SimulateArgs) -> Result<i32, CliError> {
    let cfg = load_config(a.config.as_deref())?;
    let weights = load_controller(&a.controller, &["zero"])?;
    let sim = SimConfig {
        h: cfg.sim.h,
        horizon: a.time.unwrap_or(cfg.sim.horizon),
        model: a.model,
    };
    sim.validate()?;
    let (traj, final_u) = match &weights {
        Some(w) => {
            let t = simulate(&cfg.params, &w.policy, a.ic, &sim);
            let u = Controller::<f64>::voltage(&w.policy, t.last());
            (t, u)
        }
        None => (simulate(&cfg.params, &ZeroController, a.ic, &sim), 0.0),
    };
    csv_io::write_trajectory(create(&a.out)?, &traj, final_u)?;
    let svg_path = a.out.with_extension("svg");
    write_text(
        &svg_path,
        &trajectory_svg(&traj.times, &traj.states, a.model, &a.controller),
    )?;

    let max_x = traj.states.iter().map(|z| z.x().abs()).fold(0.0, f64::max);
    let z = traj.last();
    say!(
        "model={} steps={} diverged={} max_abs_x={:.6} final=({:.6}, {:.6}, {:.6}, {:.6})",
        a.model,
        traj.len() - 1,
        traj.diverged,
        max_x,
        z[0],
        z[1],
        z[2],
        z[3]
    );
    say!("trajectory: {}", a.out.display());
    say!("chart: {}", svg_path.display());
    Ok(EXIT_OK)
}

fn trajectory_svg(times: &[f64], states: &[State<f64>], model: Model, controller: &str) -> String {
    let mut panels = Vec::new();
    for (j, name, unit) in [
        (0, "cart position x", "x [m]"),
        (2, "pendulum angle alpha", "alpha [rad]"),
    ] {
        let mut p = Panel::new(name, "t [s]", unit, Style::Line);
        p.guides = vec![-REWARD_BOUND, REWARD_BOUND];
        p.series.push(Series {
            label: String::new(),
            color: PALETTE[j / 2].into(),
            points: times.iter().zip(states).map(|(&t, z)| (t, z[j])).collect(),
        });
        panels.push(p);
    }
    svg::render(
        &format!("{model} model, controller {controller}"),
        &panels,
        1,
    )
}

fn parse_params(spec: &str) -> Result<Vec<ParamId>, CliError> {
    if spec == "all" {
        return Ok(ParamId::ALL.to_vec());
    }
    spec.split(',')
        .map(|s| {
            s.trim().parse::<ParamId>().map_err(|_| {
                CliError::Usage(format!(
                    "unknown parameter `{}`; valid names: {}, all",
                    s.trim(),
                    ParamId::ALL
                        .iter()
                        .map(|p| p.symbol())
                        .collect::<Vec<_>>()
                        .join(", ")
                ))
            })
        })
        .collect()
}

const STATE_LABELS: [&str; 4] = ["s_x", "s_xdot", "s_alpha", "s_alphadot"];

fn sensitivity_svg(title: &str, curves: &[(&str, &SensitivityRecord)]) -> String {
    let panels: Vec<Panel> = (0..4)
        .map(|j| {
            let mut p = Panel::new(
                STATE_LABELS[j],
                "t [s]",
                &format!("d z{} / d p", j + 1),
                Style::Line,
            );
            for (i, (label, r)) in curves.iter().enumerate() {
                p.series.push(Series {
                    label: label.to_string(),
                    color: PALETTE[i % PALETTE.len()].into(),
                    points: r.times.iter().zip(&r.s[j]).map(|(&t, &s)| (t, s)).collect(),
                });
            }
            p
        })
        .collect();
    svg::render(title, &panels, 2)
}

fn step_for(method: Method, h: Option<f64>, cfg: &RunConfig) -> f64 {
    h.unwrap_or(match method {
        Method::ComplexStep => cfg.sensitivity.h_cs,
        Method::CentralDiff => cfg.sensitivity.h_cd,
        Method::ForwardOde => 0.0,
    })
}

fn write_sensitivity_csv(
    dir: &Path,
    system: &str,
    r: &SensitivityRecord,
) -> Result<PathBuf, CliError> {
    let path = dir.join(csv_io::sensitivity_file_name(
        system,
        r.spec.param,
        r.spec.method,
        r.spec.h,
    ));
    csv_io::write_sensitivity(create(&path)?, &SensitivityTable::from(r))?;
    if r.diverged {
        log::warn!("{}: trajectory diverged; series truncated", path.display());
    }
    Ok(path)
}

fn cmd_sensitivity(a: &SensitivityArgs) -> Result<i32, CliError> {
    let cfg = load_config(a.config.as_deref())?;
    let params = parse_params(&a.param)?;
    let h = step_for(a.method, a.h, &cfg);
    if a.suite {
        return sensitivity_suite_cmd(a, &cfg, &params, h);
    }
    let model = a.system.expect("clap enforces --system without --suite");
    let weights = load_controller(&a.controller, &["none"])?;
    let system = match &weights {
        None => model.name().to_string(),
        Some(w) => format!("{}_{}ctrl", model.name(), w.trained_on.name()),
    };
    let horizon = a.time.unwrap_or(if weights.is_some() {
        cfg.sensitivity.controlled_time
    } else {
        cfg.sensitivity.uncontrolled_time
    });
    let sim = SimConfig {
        h: cfg.sim.h,
        horizon,
        model,
    };
    let policy = weights.as_ref().map(|w| &w.policy);
    let records: Vec<SensitivityRecord> = with_pool(|| {
        params
            .par_iter()
            .map(|&p| {
                let spec = PerturbationSpec {
                    param: p,
                    method: a.method,
                    h,
                    relative: cfg.sensitivity.relative_step,
                };
                sensitivity(&cfg.params, policy, cfg.sensitivity.z0, &sim, spec)
            })
            .collect::<Result<Vec<_>, _>>()
    })??;
    for r in &records {
        let path = write_sensitivity_csv(&a.out_dir, &system, r)?;
        let title = format!(
            "{system}: sensitivity to {} ({})",
            r.spec.param.symbol(),
            r.spec.method
        );
        write_text(
            &path.with_extension("svg"),
            &sensitivity_svg(&title, &[(&system, r)]),
        )?;
        say!("{} sup_norm={:.6e}", path.display(), r.sup_norm());
    }
    Ok(EXIT_OK)
}

fn sensitivity_suite_cmd(
    a: &SensitivityArgs,
    cfg: &RunConfig,
    params: &[ParamId],
    h: f64,
) -> Result<i32, CliError> {
    if a.method == Method::ForwardOde {
        return Err(CliError::Usage(
            "the suite includes controlled and lab systems; use --method cs or cd".into(),
        ));
    }
    let (Some(lti), Some(lab)) = (&a.lti_weights, &a.lab_weights) else {
        return Err(CliError::Usage(
            "--suite needs both --lti-weights and --lab-weights".into(),
        ));
    };
    let lti = WeightsFile::load(lti)?;
    let lab = WeightsFile::load(lab)?;
    let suite = SuiteConfig {
        params: cfg.params,
        method: a.method,
        h,
        relative: cfg.sensitivity.relative_step,
        step: cfg.sim.h,
        uncontrolled_horizon: cfg.sensitivity.uncontrolled_time,
        controlled_horizon: a.time.unwrap_or(cfg.sensitivity.controlled_time),
        z0: cfg.sensitivity.z0,
    };
    let entries = with_pool(|| sensitivity_suite(&suite, &lti.policy, &lab.policy))??;
    let entries: Vec<_> = entries
        .into_iter()
        .filter(|e| params.contains(&e.record.spec.param))
        .collect();
    for e in &entries {
        let path = write_sensitivity_csv(&a.out_dir, e.system.name(), &e.record)?;
        say!("{} sup_norm={:.6e}", path.display(), e.record.sup_norm());
    }
    for &p in params {
        for (group, controlled) in [("uncontrolled", false), ("controlled", true)] {
            let curves: Vec<(&str, &SensitivityRecord)> = entries
                .iter()
                .filter(|e| e.record.spec.param == p && e.system.is_controlled() == controlled)
                .map(|e| (e.system.name(), &e.record))
                .collect();
            let name = format!("sens_{group}_{}_{}_{h:e}.svg", p.symbol(), a.method);
            let title = format!(
                "{group} systems: sensitivity to {} ({})",
                p.symbol(),
                a.method
            );
            write_text(&a.out_dir.join(name), &sensitivity_svg(&title, &curves))?;
        }
    }
    debug_assert_eq!(SensSystem::ALL.len() * params.len(), entries.len());
    Ok(EXIT_OK)
}

fn parse_pairings(s: &str) -> Result<Vec<Pairing>, CliError> {
    if s == "all" {
        return Ok(Pairing::ALL.to_vec());
    }
    let mut out = Vec::new();
    for t in s.split(',') {
        let p = t.trim().parse::<Pairing>().map_err(|_| {
            CliError::Usage(format!(
                "unknown pairing `{}` (expected a, b, c or all)",
                t.trim()
            ))
        })?;
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn load_role(
    path: Option<&Path>,
    needed: bool,
    flag: &str,
    expect: Model,
) -> Result<Option<WeightsFile>, CliError> {
    match (path, needed) {
        (_, false) => Ok(None),
        (None, true) => Err(CliError::Usage(format!(
            "the requested pairing needs {flag}"
        ))),
        (Some(p), true) => {
            let w = WeightsFile::load(p)?;
            if w.trained_on != expect {
                log::warn!(
                    "{} was trained on {}, used as the {expect} controller",
                    p.display(),
                    w.trained_on
                );
            }
            Ok(Some(w))
        }
    }
}

fn cmd_roa(a: &RoaArgs) -> Result<i32, CliError> {
    let cfg = load_config(a.config.as_deref())?;
    let pairings = parse_pairings(&a.pairing)?;
    let lti = load_role(
        a.lti_weights.as_deref(),
        pairings.iter().any(|p| p.uses_lti_controller()),
        "--lti-weights",
        Model::Lti,
    )?;
    let lab = load_role(
        a.lab_weights.as_deref(),
        pairings.iter().any(|p| !p.uses_lti_controller()),
        "--lab-weights",
        Model::Lab,
    )?;
    let unused = MlpPolicy::zeros();
    let controllers = Controllers {
        lti: lti.as_ref().map_or(&unused, |w| &w.policy),
        lab: lab.as_ref().map_or(&unused, |w| &w.policy),
    };
    let mut rcfg = cfg.roa.clone();
    if let Some(n) = a.n {
        rcfg.n_samples = n;
    }
    if let Some(s) = a.seed {
        rcfg.seed = s;
    }
    let refinement = a.refine.then_some(&cfg.refinement);
    let results = with_pool(|| run_study(&pairings, controllers, &rcfg, refinement))??;
    let summary = roa_report(&results)?;

    for r in &results {
        let rows: Vec<RoaRow> = r
            .samples
            .iter()
            .map(|&sample| RoaRow {
                sample,
                pairing: r.pairing,
            })
            .collect();
        let path = a.out_dir.join(format!("roa_{}.csv", r.pairing.letter()));
        csv_io::write_roa(create(&path)?, &rows)?;
    }
    let report = summary_text(
        &summary,
        &rcfg,
        results.first().map_or(0, |r| r.samples.len()),
    );
    write_text(&a.out_dir.join("roa_summary.txt"), &report)?;
    write_text(&a.out_dir.join("roa_scatter.svg"), &roa_svg(&results))?;
    say!("{}", report.trim_end());
    if pairings.len() == Pairing::ALL.len() {
        say!("ORDER: {}", summary.ordering());
    }
    Ok(EXIT_OK)
}

fn summary_text(summary: &RoaSummary, cfg: &cartpole_core::roa::RoaConfig, total: usize) -> String {
    let mut s = String::new();
    s.push_str("# region of attraction summary\n");
    s.push_str(&format!("seed = {}\n", cfg.seed));
    s.push_str(&format!("uniform_samples = {}\n", cfg.n_samples));
    s.push_str(&format!(
        "refined_samples = {}\n",
        total.saturating_sub(cfg.n_samples)
    ));
    s.push_str("pairing,name,successes,total,fraction\n");
    for p in &summary.pairings {
        let frac = p
            .fraction()
            .map_or_else(|| "n/a".to_string(), |f| format!("{f:.6}"));
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            p.pairing.letter(),
            p.pairing.name(),
            p.successes,
            p.total,
            frac
        ));
    }
    s.push_str(&format!("order = {}\n", summary.ordering()));
    if summary.pairings.len() == Pairing::ALL.len() {
        s.push_str(&format!(
            "expected_order_c>a>b = {}\n",
            summary.matches_expected_order()
        ));
    }
    s
}

const AXES: [&str; 4] = ["x0", "xdot0", "alpha0", "alphadot0"];

#[allow(clippy::needless_range_loop)] // i, j index both AXES and the state
fn roa_svg(results: &[PairingSamples]) -> String {
    let n = results.first().map_or(0, |r| r.samples.len());
    let failed_all: Vec<usize> = (0..n)
        .filter(|&i| results.iter().all(|r| !r.samples[i].success))
        .collect();
    let mut panels = Vec::new();
    for i in 0..4 {
        for j in i + 1..4 {
            let mut p = Panel::new(
                &format!("{} vs {}", AXES[j], AXES[i]),
                AXES[i],
                AXES[j],
                Style::Dots,
            );
            let first = results.first();
            p.series.push(Series {
                label: "unstable".into(),
                color: "#cccccc".into(),
                points: first
                    .map(|r| {
                        failed_all
                            .iter()
                            .map(|&k| (r.samples[k].ic[i], r.samples[k].ic[j]))
                            .collect()
                    })
                    .unwrap_or_default(),
            });
            for (c, r) in results.iter().enumerate() {
                p.series.push(Series {
                    label: format!("({}) stable", r.pairing.letter()),
                    color: PALETTE[c].into(),
                    points: r
                        .samples
                        .iter()
                        .filter(|s| s.success)
                        .map(|s| (s.ic[i], s.ic[j]))
                        .collect(),
                });
            }
            panels.push(p);
        }
    }
    svg::render("region of attraction: initial conditions", &panels, 3)
}
