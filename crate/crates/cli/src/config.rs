//! Run configuration file.
//!
//! ```text
//! [params]            # overrides of the nominal physical parameters
//! J_m = 3.9e-7
//! [sim]
//! h = 0.01
//! horizon = 10
//! [trainer]
//! gamma = 0.99
//! lr = 0.003          # lr_lab / lr_lti override per model
//! max_episodes = 20000
//! horizon_steps = 2000
//! success_threshold = 1950
//! success_window = 50
//! ic_halfwidth = 0.08
//! standardize_returns = false
//! [sensitivity]
//! h_cs = 1e-8
//! h_cd = 1e-5
//! relative_step = true
//! uncontrolled_time = 1
//! controlled_time = 10
//! z0 = 0.01, 0, 0.01, 0
//! [roa]
//! n_samples = 5000
//! seed = 0
//! sim_time = 40
//! angle_tol = 0.05
//! final_window = 1
//! cart_bound = 0.2
//! lower = -0.2, -10, -0.2, -10
//! upper = 0.2, 10, 0.2, 10
//! radii = 0.01, 0.02, 0.05, 0.1
//! per_center = 10
//! max_total = 100000
//! refine_seed = 1
//! ```
//!
//! Every key is optional. Unknown sections and keys are rejected with their
//! line number.

use std::path::Path;

use cartpole_core::dynamics::{Model, State};
use cartpole_core::integrator::DEFAULT_STEP;
use cartpole_core::params::{ParamId, PhysicalParams};
use cartpole_core::roa::{RefinementConfig, RoaConfig};
use cartpole_core::sensitivity::{
    CONTROLLED_HORIZON, DEFAULT_CENTRAL_STEP, DEFAULT_COMPLEX_STEP, UNCONTROLLED_HORIZON,
    UNCONTROLLED_Z0,
};
use cartpole_core::trainer::TrainerConfig;

use crate::error::CliError;
use crate::kv::{self, Entry};

#[derive(Debug, Clone, PartialEq)]
pub struct SimSection {
    pub h: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerSection {
    pub base: TrainerConfig,
    pub lr_lab: Option<f64>,
    pub lr_lti: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivitySection {
    pub h_cs: f64,
    pub h_cd: f64,
    pub relative_step: bool,
    pub uncontrolled_time: f64,
    pub controlled_time: f64,
    pub z0: State<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: PhysicalParams<f64>,
    pub sim: SimSection,
    pub trainer: TrainerSection,
    pub sensitivity: SensitivitySection,
    pub roa: RoaConfig,
    pub refinement: RefinementConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: PhysicalParams::default(),
            sim: SimSection {
                h: DEFAULT_STEP,
                horizon: 10.0,
            },
            trainer: TrainerSection {
                base: TrainerConfig::default(),
                lr_lab: None,
                lr_lti: None,
            },
            sensitivity: SensitivitySection {
                h_cs: DEFAULT_COMPLEX_STEP,
                h_cd: DEFAULT_CENTRAL_STEP,
                relative_step: true,
                uncontrolled_time: UNCONTROLLED_HORIZON,
                controlled_time: CONTROLLED_HORIZON,
                z0: State(UNCONTROLLED_Z0),
            },
            roa: RoaConfig::default(),
            refinement: RefinementConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        for e in kv::parse(text, origin)? {
            match e.section.as_deref() {
                Some("params") => cfg.set_param(&e, origin)?,
                Some("sim") => cfg.set_sim(&e, origin)?,
                Some("trainer") => cfg.set_trainer(&e, origin)?,
                Some("sensitivity") => cfg.set_sensitivity(&e, origin)?,
                Some("roa") => cfg.set_roa(&e, origin)?,
                Some(other) => {
                    return Err(CliError::parse(
                        origin,
                        e.line,
                        format!("unknown section `[{other}]`"),
                    ))
                }
                None => {
                    return Err(CliError::parse(
                        origin,
                        e.line,
                        format!("key `{}` outside of a section", e.key),
                    ))
                }
            }
        }
        cfg.params.validate()?;
        cfg.trainer.base.params = cfg.params;
        cfg.roa.params = cfg.params;
        Ok(cfg)
    }

    /// Trainer settings for `model`, with the seed and any per-model
    /// learning rate applied.
    pub fn trainer_for(&self, model: Model, seed: u64) -> TrainerConfig {
        let lr = match model {
            Model::Lab => self.trainer.lr_lab,
            Model::Lti => self.trainer.lr_lti,
            Model::Simplified => None,
        };
        TrainerConfig {
            model,
            seed,
            lr: lr.unwrap_or(self.trainer.base.lr),
            ..self.trainer.base.clone()
        }
    }

    fn set_param(&mut self, e: &Entry, origin: &str) -> Result<(), CliError> {
        let id: ParamId = e.key.parse().map_err(|_| {
            CliError::parse(origin, e.line, format!("unknown parameter `{}`", e.key))
        })?;
        *self.params.get_mut(id) = kv::parse_f64(e, origin)?;
        Ok(())
    }

    fn set_sim(&mut self, e: &Entry, origin: &str) -> Result<(), CliError> {
        match e.key.as_str() {
            "h" => self.sim.h = kv::parse_f64(e, origin)?,
            "horizon" => self.sim.horizon = kv::parse_f64(e, origin)?,
            _ => return Err(unknown_key(e, origin)),
        }
        Ok(())
    }

    fn set_trainer(&mut self, e: &Entry, origin: &str) -> Result<(), CliError> {
        let t = &mut self.trainer.base;
        match e.key.as_str() {
            "gamma" => t.gamma = kv::parse_f64(e, origin)?,
            "lr" => t.lr = kv::parse_f64(e, origin)?,
            "lr_lab" => self.trainer.lr_lab = Some(kv::parse_f64(e, origin)?),
            "lr_lti" => self.trainer.lr_lti = Some(kv::parse_f64(e, origin)?),
            "max_episodes" => t.max_episodes = kv::parse_usize(e, origin)?,
            "horizon_steps" => t.horizon_steps = kv::parse_usize(e, origin)?,
            "success_threshold" => t.success_threshold = kv::parse_f64(e, origin)?,
            "success_window" => t.success_window = kv::parse_usize(e, origin)?,
            "ic_halfwidth" => t.ic_halfwidth = kv::parse_f64(e, origin)?,
            "h" => t.h = kv::parse_f64(e, origin)?,
            "standardize_returns" => t.standardize_returns = kv::parse_bool(e, origin)?,
            _ => return Err(unknown_key(e, origin)),
        }
        Ok(())
    }

    fn set_sensitivity(&mut self, e: &Entry, origin: &str) -> Result<(), CliError> {
        let s = &mut self.sensitivity;
        match e.key.as_str() {
            "h_cs" => s.h_cs = kv::parse_f64(e, origin)?,
            "h_cd" => s.h_cd = kv::parse_f64(e, origin)?,
            "relative_step" => s.relative_step = kv::parse_bool(e, origin)?,
            "uncontrolled_time" => s.uncontrolled_time = kv::parse_f64(e, origin)?,
            "controlled_time" => s.controlled_time = kv::parse_f64(e, origin)?,
            "z0" => s.z0 = State(vec4(e, origin)?),
            _ => return Err(unknown_key(e, origin)),
        }
        Ok(())
    }

    fn set_roa(&mut self, e: &Entry, origin: &str) -> Result<(), CliError> {
        let r = &mut self.roa;
        match e.key.as_str() {
            "n_samples" => r.n_samples = kv::parse_usize(e, origin)?,
            "seed" => r.seed = kv::parse_usize(e, origin)? as u64,
            "sim_time" => r.sim_time = kv::parse_f64(e, origin)?,
            "h" => r.h = kv::parse_f64(e, origin)?,
            "angle_tol" => r.angle_tol = kv::parse_f64(e, origin)?,
            "final_window" => r.final_window = kv::parse_f64(e, origin)?,
            "cart_bound" => r.cart_bound = kv::parse_f64(e, origin)?,
            "lower" => r.lower = vec4(e, origin)?,
            "upper" => r.upper = vec4(e, origin)?,
            "radii" => self.refinement.radii = kv::parse_list(e, origin)?,
            "per_center" => self.refinement.per_center = kv::parse_usize(e, origin)?,
            "max_total" => self.refinement.max_total = kv::parse_usize(e, origin)?,
            "refine_seed" => self.refinement.seed = kv::parse_usize(e, origin)? as u64,
            _ => return Err(unknown_key(e, origin)),
        }
        Ok(())
    }
}

fn unknown_key(e: &Entry, origin: &str) -> CliError {
    let section = e.section.as_deref().unwrap_or("");
    CliError::parse(
        origin,
        e.line,
        format!("unknown key `{}` in [{section}]", e.key),
    )
}

fn vec4(e: &Entry, origin: &str) -> Result<[f64; 4], CliError> {
    let v = kv::parse_list(e, origin)?;
    v.try_into()
        .map_err(|_| CliError::parse(origin, e.line, "expected four comma-separated numbers"))
}
