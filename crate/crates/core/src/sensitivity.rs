//! Local parameter sensitivities `s_jk(t) = dz_j(t)/dp_k` along simulated
//! trajectories.
//!
//! Three routes are provided:
//!
//! * complex step: one complex simulation with `p_k + i delta`, read off as
//!   `Im z_j / delta`;
//! * central difference: two real simulations at `p_k +/- delta`;
//! * forward sensitivity equations (LTI model only): the linear system
//!   `s' = A s + (dA/dp_k) z + (dB/dp_k) v`, `s(0) = 0`, integrated with the
//!   same scheme and step as the state.
//!
//! The displacement is `delta = h |p_k|` when [`PerturbationSpec::relative`]
//! is set (the default) and `delta = h` otherwise. Parameters span seven
//! orders of magnitude, so an absolute central-difference step of `1e-5`
//! exceeds `J_m` itself.
//!
//! Controlled systems use the deterministic policy. Its ReLU and saturation
//! gates act on real parts, so near a kink the complex-step value is a
//! one-sided derivative.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::dynamics::{lti_matrices, LtiSystem, Model, State};
use crate::error::{Error, Result};
use crate::integrator::{simulate, SimConfig, Trajectory, ZeroController};
use crate::params::{ParamId, PhysicalParams};
use crate::policy::MlpPolicy;
use crate::scalar::{Complex, Scalar};

pub const DEFAULT_COMPLEX_STEP: f64 = 1e-8;
pub const DEFAULT_CENTRAL_STEP: f64 = 1e-5;
/// Smallest step accepted for central differences.
pub const MIN_CENTRAL_STEP: f64 = 1e-7;
/// Initial state for uncontrolled sensitivity runs.
pub const UNCONTROLLED_Z0: [f64; 4] = [0.01, 0.0, 0.01, 0.0];
pub const UNCONTROLLED_HORIZON: f64 = 1.0;
pub const CONTROLLED_HORIZON: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    ComplexStep,
    CentralDiff,
    ForwardOde,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::ComplexStep => "cs",
            Method::CentralDiff => "cd",
            Method::ForwardOde => "ode",
        }
    }

    pub fn default_step(self) -> f64 {
        match self {
            Method::ComplexStep => DEFAULT_COMPLEX_STEP,
            Method::CentralDiff => DEFAULT_CENTRAL_STEP,
            Method::ForwardOde => 0.0,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cs" | "complex_step" => Ok(Method::ComplexStep),
            "cd" | "central_diff" => Ok(Method::CentralDiff),
            "ode" | "forward_ode" => Ok(Method::ForwardOde),
            _ => Err(Error::Config(format!(
                "unknown method `{s}` (expected cs, cd or ode)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationSpec {
    pub param: ParamId,
    pub method: Method,
    pub h: f64,
    /// Scale the step by `|p_k|`.
    pub relative: bool,
}

impl PerturbationSpec {
    pub fn new(param: ParamId, method: Method) -> Self {
        PerturbationSpec {
            param,
            method,
            h: method.default_step(),
            relative: true,
        }
    }

    pub fn with_step(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    /// Absolute displacement applied to the parameter.
    pub fn displacement(&self, nominal: &PhysicalParams<f64>) -> f64 {
        if self.relative {
            self.h * nominal.get(self.param).abs()
        } else {
            self.h
        }
    }

    fn validate(&self, expected: Method) -> Result<()> {
        if self.method != expected {
            return Err(Error::Config(format!(
                "perturbation method {} passed to the {} routine",
                self.method, expected
            )));
        }
        if expected != Method::ForwardOde && !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Config(format!(
                "step must be positive, got {}",
                self.h
            )));
        }
        Ok(())
    }
}

/// Sensitivity time series for one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityRecord {
    pub times: Vec<f64>,
    /// `s[j][n] = dz_j / dp_k` at `times[n]`.
    pub s: [Vec<f64>; 4],
    pub nominal_params: PhysicalParams<f64>,
    pub spec: PerturbationSpec,
    /// The underlying simulation diverged; the record is truncated.
    pub diverged: bool,
}

impl SensitivityRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest absolute entry over all components and times.
    pub fn sup_norm(&self) -> f64 {
        self.s.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn component_sup_norm(&self, j: usize) -> f64 {
        self.s[j].iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_identically_zero(&self) -> bool {
        self.s.iter().flatten().all(|&v| v == 0.0)
    }

    /// `sup |self - other| / sup |other|` over the common prefix; zero when
    /// both records vanish identically.
    pub fn relative_sup_error(&self, other: &SensitivityRecord) -> f64 {
        let n = self.len().min(other.len());
        let mut diff: f64 = 0.0;
        for j in 0..4 {
            for k in 0..n {
                diff = diff.max((self.s[j][k] - other.s[j][k]).abs());
            }
        }
        let scale = other.sup_norm();
        if diff == 0.0 {
            0.0
        } else if scale == 0.0 {
            f64::INFINITY
        } else {
            diff / scale
        }
    }
}

/// Simulates the real-parameter system with the optional deterministic
/// controller.
pub fn simulate_real(
    params: &PhysicalParams<f64>,
    controller: Option<&MlpPolicy>,
    z0: State<f64>,
    cfg: &SimConfig,
) -> Trajectory<f64> {
    match controller {
        Some(p) => simulate(params, p, z0, cfg),
        None => simulate(params, &ZeroController, z0, cfg),
    }
}

pub fn complex_step_sensitivity(
    params: &PhysicalParams<f64>,
    controller: Option<&MlpPolicy>,
    z0: State<f64>,
    cfg: &SimConfig,
    spec: PerturbationSpec,
) -> Result<SensitivityRecord> {
    spec.validate(Method::ComplexStep)?;
    cfg.validate()?;
    let delta = spec.displacement(params);
    let mut pc = PhysicalParams::<Complex>::from_real(params);
    *pc.get_mut(spec.param) = Complex::new(params.get(spec.param), delta);
    let zc = State::<Complex>::from_real(&z0);
    let traj = match controller {
        Some(p) => simulate(&pc, p, zc, cfg),
        None => simulate(&pc, &ZeroController, zc, cfg),
    };
    let n = usable_len(&traj);
    let mut s: [Vec<f64>; 4] = Default::default();
    for (j, col) in s.iter_mut().enumerate() {
        *col = traj.states[..n].iter().map(|z| z[j].im() / delta).collect();
    }
    Ok(SensitivityRecord {
        times: traj.times[..n].to_vec(),
        s,
        nominal_params: *params,
        spec,
        diverged: traj.diverged,
    })
}

pub fn central_diff_sensitivity(
    params: &PhysicalParams<f64>,
    controller: Option<&MlpPolicy>,
    z0: State<f64>,
    cfg: &SimConfig,
    spec: PerturbationSpec,
) -> Result<SensitivityRecord> {
    spec.validate(Method::CentralDiff)?;
    cfg.validate()?;
    let delta = spec.displacement(params);
    if spec.h < MIN_CENTRAL_STEP {
        log::warn!(
            "central-difference step {} is below {MIN_CENTRAL_STEP}; expect cancellation error",
            spec.h
        );
    }
    let plus = simulate_real(&params.perturbed(spec.param, delta), controller, z0, cfg);
    let minus = simulate_real(&params.perturbed(spec.param, -delta), controller, z0, cfg);
    let n = usable_len(&plus).min(usable_len(&minus));
    let mut s: [Vec<f64>; 4] = Default::default();
    for (j, col) in s.iter_mut().enumerate() {
        *col = (0..n)
            .map(|k| (plus.states[k][j] - minus.states[k][j]) / (2.0 * delta))
            .collect();
    }
    Ok(SensitivityRecord {
        times: plus.times[..n].to_vec(),
        s,
        nominal_params: *params,
        spec,
        diverged: plus.diverged || minus.diverged,
    })
}

/// Number of leading states that are finite.
fn usable_len<S: Scalar>(traj: &Trajectory<S>) -> usize {
    if traj.diverged {
        traj.states
            .iter()
            .position(|z| !z.is_finite())
            .unwrap_or(traj.len())
    } else {
        traj.len()
    }
}

/// Closed-form `(dA/dp_k, dB/dp_k)` of the LTI model at `p`.
pub fn lti_parameter_derivative(p: &PhysicalParams<f64>, param: ParamId) -> LtiSystem<f64> {
    let sys = lti_matrices(p);
    let a22 = sys.a[1][1];
    let a42 = sys.a[3][1];
    let (b2, b4) = (sys.b[1], sys.b[3]);
    let mut da = [[0.0; 4]; 4];
    let mut db = [0.0; 4];
    match param {
        ParamId::CartMass => {
            da[1][1] = -a22 / p.m_c;
            da[1][2] = -p.m_p * p.g / (p.m_c * p.m_c);
            da[3][1] = -a42 / p.m_c;
            da[3][2] = -p.m_p * p.g / (p.m_c * p.m_c * p.l_p);
            db[1] = -b2 / p.m_c;
            db[3] = -b4 / p.m_c;
        }
        ParamId::PendulumMass => {
            da[1][2] = p.g / p.m_c;
            da[3][2] = p.g / (p.m_c * p.l_p);
        }
        ParamId::PendulumLength => {
            da[3][1] = -a42 / p.l_p;
            da[3][2] = -sys.a[3][2] / p.l_p;
            db[3] = -b4 / p.l_p;
        }
        ParamId::Gravity => {
            da[1][2] = p.m_p / p.m_c;
            da[3][2] = (p.m_c + p.m_p) / (p.m_c * p.l_p);
        }
        ParamId::PinionRadius => {
            da[1][1] = -2.0 * a22 / p.r_mp;
            da[3][1] = -2.0 * a42 / p.r_mp;
            db[1] = -b2 / p.r_mp;
            db[3] = -b4 / p.r_mp;
        }
        ParamId::ArmatureResistance => {
            da[1][1] = -a22 / p.r_m;
            da[3][1] = -a42 / p.r_m;
            db[1] = -b2 / p.r_m;
            db[3] = -b4 / p.r_m;
        }
        ParamId::GearRatio => {
            da[1][1] = 2.0 * a22 / p.k_g;
            da[3][1] = 2.0 * a42 / p.k_g;
            db[1] = b2 / p.k_g;
            db[3] = b4 / p.k_g;
        }
        ParamId::BackEmfConstant => {
            da[1][1] = a22 / p.k_m;
            da[3][1] = a42 / p.k_m;
        }
        ParamId::TorqueConstant => {
            da[1][1] = a22 / p.k_t;
            da[3][1] = a42 / p.k_t;
            db[1] = b2 / p.k_t;
            db[3] = b4 / p.k_t;
        }
        ParamId::HingeDamping
        | ParamId::CartDamping
        | ParamId::MotorInertia
        | ParamId::PendulumInertia => {}
    }
    LtiSystem { a: da, b: db }
}

/// Integrates the uncontrolled LTI model together with its forward
/// sensitivity equations for `param`.
pub fn forward_ode_sensitivity_lti(
    params: &PhysicalParams<f64>,
    z0: State<f64>,
    cfg: &SimConfig,
    param: ParamId,
) -> Result<SensitivityRecord> {
    cfg.validate()?;
    if cfg.model != Model::Lti {
        return Err(Error::Config(format!(
            "forward sensitivity equations are implemented for the lti model, not {}",
            cfg.model
        )));
    }
    let spec = PerturbationSpec {
        param,
        method: Method::ForwardOde,
        h: 0.0,
        relative: false,
    };
    let sys = lti_matrices(params);
    let dsys = lti_parameter_derivative(params, param);
    let n = cfg.steps();
    let h = cfg.h;
    let v = 0.0;

    let mut z = z0.0;
    let mut sens = [0.0; 4];
    let mut times = Vec::with_capacity(n + 1);
    let mut s: [Vec<f64>; 4] = Default::default();
    let push = |times: &mut Vec<f64>, s: &mut [Vec<f64>; 4], k: usize, sv: &[f64; 4]| {
        times.push(k as f64 * h);
        for j in 0..4 {
            s[j].push(sv[j]);
        }
    };
    push(&mut times, &mut s, 0, &sens);
    let mut diverged = false;
    for k in 1..=n {
        let dz = sys.apply(&State(z), v);
        let mut ds = sys.apply(&State(sens), v);
        let forcing = dsys.apply(&State(z), v);
        for j in 0..4 {
            ds.0[j] += forcing[j];
        }
        // semi-implicit Euler on the augmented system (z, s)
        z[1] += h * dz[1];
        z[3] += h * dz[3];
        z[0] += h * z[1];
        z[2] += h * z[3];
        sens[1] += h * ds[1];
        sens[3] += h * ds[3];
        sens[0] += h * sens[1];
        sens[2] += h * sens[3];
        if z.iter().chain(sens.iter()).any(|x| !x.is_finite()) {
            diverged = true;
            break;
        }
        push(&mut times, &mut s, k, &sens);
    }
    Ok(SensitivityRecord {
        times,
        s,
        nominal_params: *params,
        spec,
        diverged,
    })
}

/// Dispatches on `spec.method`. The forward-ODE route ignores the step and
/// requires an uncontrolled LTI run.
pub fn sensitivity(
    params: &PhysicalParams<f64>,
    controller: Option<&MlpPolicy>,
    z0: State<f64>,
    cfg: &SimConfig,
    spec: PerturbationSpec,
) -> Result<SensitivityRecord> {
    match spec.method {
        Method::ComplexStep => complex_step_sensitivity(params, controller, z0, cfg, spec),
        Method::CentralDiff => central_diff_sensitivity(params, controller, z0, cfg, spec),
        Method::ForwardOde => {
            if controller.is_some() {
                return Err(Error::Config(
                    "forward sensitivity equations support uncontrolled runs only".into(),
                ));
            }
            forward_ode_sensitivity_lti(params, z0, cfg, spec.param)
        }
    }
}

/// Model/controller combinations examined by the sensitivity suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SensSystem {
    Lab,
    Lti,
    /// LTI model under the LTI-trained controller.
    LtiWithLtiCtrl,
    /// Lab model under the LTI-trained controller.
    LabWithLtiCtrl,
    /// Lab model under the lab-trained controller.
    LabWithLabCtrl,
}

impl SensSystem {
    pub const ALL: [SensSystem; 5] = [
        SensSystem::Lab,
        SensSystem::Lti,
        SensSystem::LtiWithLtiCtrl,
        SensSystem::LabWithLtiCtrl,
        SensSystem::LabWithLabCtrl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SensSystem::Lab => "lab",
            SensSystem::Lti => "lti",
            SensSystem::LtiWithLtiCtrl => "lti_ltictrl",
            SensSystem::LabWithLtiCtrl => "lab_ltictrl",
            SensSystem::LabWithLabCtrl => "lab_labctrl",
        }
    }

    pub fn model(self) -> Model {
        match self {
            SensSystem::Lti | SensSystem::LtiWithLtiCtrl => Model::Lti,
            _ => Model::Lab,
        }
    }

    pub fn is_controlled(self) -> bool {
        !matches!(self, SensSystem::Lab | SensSystem::Lti)
    }
}

impl fmt::Display for SensSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub params: PhysicalParams<f64>,
    pub method: Method,
    pub h: f64,
    pub relative: bool,
    pub step: f64,
    pub uncontrolled_horizon: f64,
    pub controlled_horizon: f64,
    pub z0: State<f64>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            params: PhysicalParams::default(),
            method: Method::ComplexStep,
            h: DEFAULT_COMPLEX_STEP,
            relative: true,
            step: crate::integrator::DEFAULT_STEP,
            uncontrolled_horizon: UNCONTROLLED_HORIZON,
            controlled_horizon: CONTROLLED_HORIZON,
            z0: State(UNCONTROLLED_Z0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteEntry {
    pub system: SensSystem,
    pub record: SensitivityRecord,
}

/// Runs every parameter over both uncontrolled models and the three
/// controlled pairings. Results are ordered by system, then parameter.
pub fn sensitivity_suite(
    cfg: &SuiteConfig,
    lti_policy: &MlpPolicy,
    lab_policy: &MlpPolicy,
) -> Result<Vec<SuiteEntry>> {
    let jobs: Vec<(SensSystem, ParamId)> = SensSystem::ALL
        .iter()
        .flat_map(|&s| ParamId::ALL.iter().map(move |&p| (s, p)))
        .collect();
    jobs.par_iter()
        .map(|&(system, param)| {
            let controller = match system {
                SensSystem::Lab | SensSystem::Lti => None,
                SensSystem::LtiWithLtiCtrl | SensSystem::LabWithLtiCtrl => Some(lti_policy),
                SensSystem::LabWithLabCtrl => Some(lab_policy),
            };
            let horizon = if controller.is_some() {
                cfg.controlled_horizon
            } else {
                cfg.uncontrolled_horizon
            };
            let sim = SimConfig {
                h: cfg.step,
                horizon,
                model: system.model(),
            };
            let spec = PerturbationSpec {
                param,
                method: cfg.method,
                h: cfg.h,
                relative: cfg.relative,
            };
            let record = sensitivity(&cfg.params, controller, cfg.z0, &sim, spec)?;
            Ok(SuiteEntry { system, record })
        })
        .collect()
}
