//! Empirical region-of-attraction estimation by Monte-Carlo simulation.
//!
//! An initial condition counts as stabilized when, over a closed-loop run of
//! `sim_time` seconds, the cart never leaves `|x| <= cart_bound` and the
//! pendulum stays within `angle_tol` of upright at every step of the final
//! `final_window` seconds.

use std::fmt;
use std::ops::ControlFlow;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::{Model, State};
use crate::error::{Error, Result};
use crate::integrator::{simulate_monitored, Controller, SimConfig, Trajectory, DEFAULT_STEP};
use crate::params::PhysicalParams;
use crate::policy::MlpPolicy;

/// Controller/model combination under study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pairing {
    /// (a) LTI-trained controller on the LTI model.
    LtiCtrlOnLti,
    /// (b) LTI-trained controller on the lab model.
    LtiCtrlOnLab,
    /// (c) lab-trained controller on the lab model.
    LabCtrlOnLab,
}

impl Pairing {
    pub const ALL: [Pairing; 3] = [
        Pairing::LtiCtrlOnLti,
        Pairing::LtiCtrlOnLab,
        Pairing::LabCtrlOnLab,
    ];

    pub fn letter(self) -> char {
        match self {
            Pairing::LtiCtrlOnLti => 'a',
            Pairing::LtiCtrlOnLab => 'b',
            Pairing::LabCtrlOnLab => 'c',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Pairing::LtiCtrlOnLti => "lti_ctrl_on_lti",
            Pairing::LtiCtrlOnLab => "lti_ctrl_on_lab",
            Pairing::LabCtrlOnLab => "lab_ctrl_on_lab",
        }
    }

    pub fn model(self) -> Model {
        match self {
            Pairing::LtiCtrlOnLti => Model::Lti,
            _ => Model::Lab,
        }
    }

    /// Whether the controller was trained on the LTI model.
    pub fn uses_lti_controller(self) -> bool {
        !matches!(self, Pairing::LabCtrlOnLab)
    }
}

impl fmt::Display for Pairing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pairing {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Pairing::ALL
            .iter()
            .copied()
            .find(|p| s.len() == 1 && s.starts_with(p.letter()) || s == p.name())
            .ok_or_else(|| Error::Config(format!("unknown pairing `{s}` (expected a, b or c)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoaConfig {
    pub lower: [f64; 4],
    pub upper: [f64; 4],
    pub sim_time: f64,
    pub h: f64,
    pub angle_tol: f64,
    pub final_window: f64,
    pub cart_bound: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub params: PhysicalParams<f64>,
}

impl Default for RoaConfig {
    fn default() -> Self {
        RoaConfig {
            lower: [-0.2, -10.0, -0.2, -10.0],
            upper: [0.2, 10.0, 0.2, 10.0],
            sim_time: 40.0,
            h: DEFAULT_STEP,
            angle_tol: 0.05,
            final_window: 1.0,
            cart_bound: 0.2,
            n_samples: 5000,
            seed: 0,
            params: PhysicalParams::default(),
        }
    }
}

impl RoaConfig {
    pub fn validate(&self) -> Result<()> {
        for j in 0..4 {
            if !(self.lower[j] < self.upper[j]) {
                return Err(Error::Config(format!(
                    "sampling bounds for dimension {j} are not ordered ({} .. {})",
                    self.lower[j], self.upper[j]
                )));
            }
        }
        for (name, v) in [
            ("sim_time", self.sim_time),
            ("h", self.h),
            ("angle_tol", self.angle_tol),
            ("final_window", self.final_window),
            ("cart_bound", self.cart_bound),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.final_window > self.sim_time {
            return Err(Error::Config("final_window exceeds sim_time".into()));
        }
        self.params.validate()
    }

    pub fn sim_config(&self, model: Model) -> SimConfig {
        SimConfig {
            h: self.h,
            horizon: self.sim_time,
            model,
        }
    }

    fn half_width(&self, j: usize) -> f64 {
        0.5 * (self.upper[j] - self.lower[j])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FailureReason {
    None,
    CartBound,
    AngleFinal,
    Diverged,
}

impl FailureReason {
    pub fn name(self) -> &'static str {
        match self {
            FailureReason::None => "none",
            FailureReason::CartBound => "cart_bound",
            FailureReason::AngleFinal => "angle_final",
            FailureReason::Diverged => "diverged",
        }
    }
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoaSample {
    pub ic: State<f64>,
    pub success: bool,
    pub reason: FailureReason,
}

impl RoaSample {
    fn new(ic: State<f64>, reason: FailureReason) -> Self {
        RoaSample {
            ic,
            success: reason == FailureReason::None,
            reason,
        }
    }
}

/// Judges a recorded closed-loop trajectory against the success criteria.
pub fn classify_trajectory(traj: &Trajectory<f64>, cfg: &RoaConfig) -> RoaSample {
    let ic = traj.states[0];
    for z in &traj.states {
        if !z.is_finite() {
            return RoaSample::new(ic, FailureReason::Diverged);
        }
        if z.x().abs() > cfg.cart_bound {
            return RoaSample::new(ic, FailureReason::CartBound);
        }
    }
    let n = cfg.sim_config(Model::Lab).steps();
    if traj.diverged || traj.len() < n + 1 {
        return RoaSample::new(ic, FailureReason::Diverged);
    }
    let window = (cfg.final_window / cfg.h).round() as usize;
    let settled = traj.states[n - window..=n]
        .iter()
        .all(|z| z.alpha().abs() <= cfg.angle_tol);
    if settled {
        RoaSample::new(ic, FailureReason::None)
    } else {
        RoaSample::new(ic, FailureReason::AngleFinal)
    }
}

/// Full closed-loop trajectory from `ic`, without early termination.
pub fn roa_trajectory<C: Controller<f64> + ?Sized>(
    ic: State<f64>,
    model: Model,
    controller: &C,
    cfg: &RoaConfig,
) -> Trajectory<f64> {
    crate::integrator::simulate(&cfg.params, controller, ic, &cfg.sim_config(model))
}

/// Simulates `ic` under `controller` on `model` and classifies the run.
/// The simulation stops at the first cart-bound violation.
pub fn classify_ic<C: Controller<f64> + ?Sized>(
    ic: State<f64>,
    model: Model,
    controller: &C,
    cfg: &RoaConfig,
) -> RoaSample {
    let bound = cfg.cart_bound;
    let traj = simulate_monitored(
        &cfg.params,
        controller,
        ic,
        &cfg.sim_config(model),
        |_, z| {
            if z.x().abs() > bound {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        },
    );
    classify_trajectory(&traj, cfg)
}

/// The two trained controllers a study draws from.
#[derive(Debug, Clone, Copy)]
pub struct Controllers<'a> {
    pub lti: &'a MlpPolicy,
    pub lab: &'a MlpPolicy,
}

impl<'a> Controllers<'a> {
    pub fn for_pairing(&self, pairing: Pairing) -> &'a MlpPolicy {
        if pairing.uses_lti_controller() {
            self.lti
        } else {
            self.lab
        }
    }
}

/// Classifies every initial condition. Runs in parallel on the current rayon
/// pool; the output is in input order.
pub fn classify_all<C: Controller<f64> + Sync + ?Sized>(
    ics: &[State<f64>],
    model: Model,
    controller: &C,
    cfg: &RoaConfig,
) -> Vec<RoaSample> {
    ics.par_iter()
        .map(|&ic| classify_ic(ic, model, controller, cfg))
        .collect()
}

/// `cfg.n_samples` initial conditions drawn independently and uniformly from
/// the sampling box.
pub fn uniform_ics(cfg: &RoaConfig) -> Vec<State<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.n_samples)
        .map(|_| {
            let mut z = [0.0; 4];
            for (j, v) in z.iter_mut().enumerate() {
                *v = rng.random_range(cfg.lower[j]..cfg.upper[j]);
            }
            State(z)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementConfig {
    /// Neighborhood half-widths as fractions of the box half-width, strictly
    /// increasing.
    pub radii: Vec<f64>,
    pub per_center: usize,
    /// Cap on the total pool size, initial samples included.
    pub max_total: usize,
    pub seed: u64,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        RefinementConfig {
            radii: vec![0.01, 0.02, 0.05, 0.1],
            per_center: 10,
            max_total: 100_000,
            seed: 1,
        }
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<()> {
        if self.radii.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config(
                "refinement radii must be strictly increasing".into(),
            ));
        }
        if self.radii.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::Config("refinement radii must be positive".into()));
        }
        Ok(())
    }
}

/// New initial conditions drawn around `centers`: for each radius, in
/// order, `per_center` uniform draws from each center's neighborhood clipped
/// to the sampling box. Generation stops once `existing + new` reaches
/// `max_total`.
pub fn refine_ics(
    centers: &[State<f64>],
    existing: usize,
    rcfg: &RefinementConfig,
    cfg: &RoaConfig,
) -> Result<Vec<State<f64>>> {
    rcfg.validate()?;
    if centers.is_empty() {
        log::warn!("no successful initial conditions to refine around; sample set unchanged");
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rcfg.seed);
    let budget = rcfg.max_total.saturating_sub(existing);
    let mut out = Vec::new();
    'outer: for &radius in &rcfg.radii {
        for c in centers {
            let mut lo = [0.0; 4];
            let mut hi = [0.0; 4];
            for j in 0..4 {
                let r = radius * cfg.half_width(j);
                lo[j] = (c[j] - r).max(cfg.lower[j]);
                hi[j] = (c[j] + r).min(cfg.upper[j]);
            }
            for _ in 0..rcfg.per_center {
                if out.len() >= budget {
                    break 'outer;
                }
                let mut z = [0.0; 4];
                for j in 0..4 {
                    z[j] = if lo[j] < hi[j] {
                        rng.random_range(lo[j]..hi[j])
                    } else {
                        lo[j]
                    };
                }
                out.push(State(z));
            }
        }
    }
    Ok(out)
}

/// Samples of one pairing over the shared initial-condition list.
#[derive(Debug, Clone, PartialEq)]
pub struct PairingSamples {
    pub pairing: Pairing,
    pub samples: Vec<RoaSample>,
}

impl PairingSamples {
    pub fn successes(&self) -> usize {
        self.samples.iter().filter(|s| s.success).count()
    }
}

/// Runs the uniform phase and, optionally, neighborhood refinement for each
/// pairing on a common set of initial conditions. Refinement centers are the
/// initial conditions that succeeded under at least one pairing.
pub fn run_study(
    pairings: &[Pairing],
    controllers: Controllers<'_>,
    cfg: &RoaConfig,
    refinement: Option<&RefinementConfig>,
) -> Result<Vec<PairingSamples>> {
    cfg.validate()?;
    let ics = uniform_ics(cfg);
    let mut results: Vec<PairingSamples> = pairings
        .iter()
        .map(|&pairing| PairingSamples {
            pairing,
            samples: classify_all(&ics, pairing.model(), controllers.for_pairing(pairing), cfg),
        })
        .collect();
    if let Some(rcfg) = refinement {
        let centers: Vec<State<f64>> = (0..ics.len())
            .filter(|&i| results.iter().any(|r| r.samples[i].success))
            .map(|i| ics[i])
            .collect();
        let extra = refine_ics(&centers, ics.len(), rcfg, cfg)?;
        for r in &mut results {
            let more = classify_all(
                &extra,
                r.pairing.model(),
                controllers.for_pairing(r.pairing),
                cfg,
            );
            r.samples.extend(more);
        }
    }
    Ok(results)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairingSummary {
    pub pairing: Pairing,
    pub total: usize,
    pub successes: usize,
}

impl PairingSummary {
    /// Success fraction, `None` for an empty sample set.
    pub fn fraction(&self) -> Option<f64> {
        (self.total > 0).then(|| self.successes as f64 / self.total as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoaSummary {
    pub pairings: Vec<PairingSummary>,
}

impl RoaSummary {
    pub fn get(&self, pairing: Pairing) -> Option<&PairingSummary> {
        self.pairings.iter().find(|p| p.pairing == pairing)
    }

    /// Pairings ordered by decreasing success count, e.g. `c > a > b`, with
    /// `=` between ties.
    pub fn ordering(&self) -> String {
        let mut sorted: Vec<&PairingSummary> = self.pairings.iter().collect();
        sorted.sort_by(|x, y| {
            y.successes
                .cmp(&x.successes)
                .then(x.pairing.cmp(&y.pairing))
        });
        let mut out = String::new();
        for (i, p) in sorted.iter().enumerate() {
            if i > 0 {
                let sep = if sorted[i - 1].successes == p.successes {
                    " = "
                } else {
                    " > "
                };
                out.push_str(sep);
            }
            out.push(p.pairing.letter());
        }
        out
    }

    /// True iff `c > a > b` strictly.
    pub fn matches_expected_order(&self) -> bool {
        match (
            self.get(Pairing::LabCtrlOnLab),
            self.get(Pairing::LtiCtrlOnLti),
            self.get(Pairing::LtiCtrlOnLab),
        ) {
            (Some(c), Some(a), Some(b)) => c.successes > a.successes && a.successes > b.successes,
            _ => false,
        }
    }
}

/// Per-pairing counts. All pairings must have been evaluated on the same
/// initial conditions in the same order.
pub fn roa_report(results: &[PairingSamples]) -> Result<RoaSummary> {
    if let Some(first) = results.first() {
        for r in &results[1..] {
            let same = r.samples.len() == first.samples.len()
                && r.samples
                    .iter()
                    .zip(&first.samples)
                    .all(|(a, b)| a.ic == b.ic);
            if !same {
                return Err(Error::Config(format!(
                    "pairings {} and {} were evaluated on different initial conditions",
                    first.pairing, r.pairing
                )));
            }
        }
    }
    Ok(RoaSummary {
        pairings: results
            .iter()
            .map(|r| PairingSummary {
                pairing: r.pairing,
                total: r.samples.len(),
                successes: r.successes(),
            })
            .collect(),
    })
}
