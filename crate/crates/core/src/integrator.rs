//! Fixed-step semi-implicit Euler integration and closed-loop simulation.

use std::ops::ControlFlow;

use crate::dynamics::{Model, State, StateDerivative};
use crate::error::{Error, Result};
use crate::params::PhysicalParams;
use crate::scalar::Scalar;

/// Default integration step (s).
pub const DEFAULT_STEP: f64 = 0.01;

/// Maps the current state to a motor voltage. Evaluated once per step and
/// held over the step.
pub trait Controller<S: Scalar> {
    fn voltage(&self, z: &State<S>) -> S;
}

/// Applies 0 V at every step.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroController;

impl<S: Scalar> Controller<S> for ZeroController {
    fn voltage(&self, _z: &State<S>) -> S {
        S::zero()
    }
}

impl<S: Scalar, F: Fn(&State<S>) -> S> Controller<S> for F {
    fn voltage(&self, z: &State<S>) -> S {
        self(z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub h: f64,
    pub horizon: f64,
    pub model: Model,
}

impl SimConfig {
    pub fn new(model: Model, horizon: f64) -> Self {
        SimConfig {
            h: DEFAULT_STEP,
            horizon,
            model,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Config(format!(
                "step h must be positive, got {}",
                self.h
            )));
        }
        if !(self.horizon >= self.h) {
            return Err(Error::Config(format!(
                "horizon {} must be at least one step ({})",
                self.horizon, self.h
            )));
        }
        Ok(())
    }

    /// Number of integration steps covering the horizon.
    pub fn steps(&self) -> usize {
        (self.horizon / self.h).round() as usize
    }
}

/// States sampled at `t_k = k h` and the voltages held over each step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub times: Vec<f64>,
    pub states: Vec<State<S>>,
    /// One fewer than `states`: no action is taken from the final state.
    pub voltages: Vec<S>,
    pub step: f64,
    /// Set iff a non-finite state was produced; the offending state is the
    /// last one stored.
    pub diverged: bool,
}

impl<S: Scalar> Trajectory<S> {
    fn with_capacity(z0: State<S>, h: f64, n: usize) -> Self {
        let mut states = Vec::with_capacity(n + 1);
        states.push(z0);
        Trajectory {
            times: {
                let mut t = Vec::with_capacity(n + 1);
                t.push(0.0);
                t
            },
            states,
            voltages: Vec::with_capacity(n),
            step: h,
            diverged: false,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &State<S> {
        self.states.last().expect("trajectory always holds z0")
    }
}

/// One semi-implicit Euler step: velocities from the accelerations at the
/// current state, then positions from the updated velocities.
#[inline]
pub fn semi_euler_step<S: Scalar>(
    rhs: impl Fn(&State<S>, S) -> StateDerivative<S>,
    z: &State<S>,
    v_m: S,
    h: f64,
) -> State<S> {
    let d = rhs(z, v_m);
    let x_dot = z[1] + d[1] * h;
    let alpha_dot = z[3] + d[3] * h;
    State([z[0] + x_dot * h, x_dot, z[2] + alpha_dot * h, alpha_dot])
}

/// Simulates `model` under `controller` from `z0` for `cfg.horizon` seconds.
/// Stops early, flagging divergence, if a state becomes non-finite.
pub fn simulate<S: Scalar, C: Controller<S> + ?Sized>(
    params: &PhysicalParams<S>,
    controller: &C,
    z0: State<S>,
    cfg: &SimConfig,
) -> Trajectory<S> {
    simulate_monitored(
        params,
        controller,
        z0,
        cfg,
        |_, _| ControlFlow::Continue(()),
    )
}

/// Like [`simulate`], but calls `monitor(k, z_k)` on each new state and stops
/// as soon as it breaks. Divergence stops the run before the monitor sees
/// the non-finite state.
pub fn simulate_monitored<S: Scalar, C: Controller<S> + ?Sized>(
    params: &PhysicalParams<S>,
    controller: &C,
    z0: State<S>,
    cfg: &SimConfig,
    mut monitor: impl FnMut(usize, &State<S>) -> ControlFlow<()>,
) -> Trajectory<S> {
    let n = cfg.steps();
    let h = cfg.h;
    let model = cfg.model;
    let mut traj = Trajectory::with_capacity(z0, h, n);
    if !z0.is_finite() {
        traj.diverged = true;
        return traj;
    }
    if monitor(0, &z0).is_break() {
        return traj;
    }
    let mut z = z0;
    for k in 1..=n {
        let v = controller.voltage(&z);
        z = semi_euler_step(|s, u| model.rhs(s, params, u), &z, v, h);
        traj.voltages.push(v);
        traj.states.push(z);
        traj.times.push(k as f64 * h);
        if !z.is_finite() || !v.is_finite() {
            log::debug!("trajectory diverged at step {k} (t = {})", k as f64 * h);
            traj.diverged = true;
            break;
        }
        if monitor(k, &z).is_break() {
            break;
        }
    }
    traj
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::lti_rhs;
    use crate::scalar::Complex;

    fn nominal() -> PhysicalParams<f64> {
        PhysicalParams::default()
    }

    #[test]
    fn origin_is_fixed_point_of_lti_step() {
        let p = nominal();
        let z = semi_euler_step(|s, u| lti_rhs(s, &p, u), &State::zero(), 0.0, 0.01);
        assert_eq!(z.0, [0.0; 4]);
    }

    #[test]
    fn harmonic_oscillator_single_step() {
        // z1' = z2, z2' = -z1 embedded in the first coordinate pair
        let rhs = |z: &State<f64>, _v: f64| StateDerivative([z[1], -z[0], 0.0, 0.0]);
        let z = semi_euler_step(rhs, &State::new(1.0, 0.0, 0.0, 0.0), 0.0, 0.01);
        assert_eq!(z[1], -0.01);
        assert!((z[0] - 0.9999).abs() < 1e-15);
        assert_eq!((z[2], z[3]), (0.0, 0.0));
    }

    #[test]
    fn complex_step_with_zero_imaginary_stays_real() {
        let p = PhysicalParams::<Complex>::from_real(&nominal());
        let z0 = State::<Complex>::from_real(&State::new(0.01, 0.1, 0.05, -0.2));
        let z = semi_euler_step(
            |s, u| Model::Lab.rhs(s, &p, u),
            &z0,
            Complex::from_real(1.0),
            0.01,
        );
        assert!(z.im().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_controller_at_origin_is_flat() {
        let cfg = SimConfig::new(Model::Lab, 1.0);
        let traj = simulate(&nominal(), &ZeroController, State::zero(), &cfg);
        assert_eq!(traj.len(), 101);
        assert_eq!(traj.voltages.len(), 100);
        assert!(traj.states.iter().all(|z| z.0 == [0.0; 4]));
        assert!(!traj.diverged);
        for (k, t) in traj.times.iter().enumerate() {
            assert_eq!(*t, k as f64 * 0.01);
        }
    }

    #[test]
    fn uncontrolled_lti_falls_monotonically() {
        let cfg = SimConfig::new(Model::Lti, 1.0);
        let traj = simulate(
            &nominal(),
            &ZeroController,
            State::new(0.0, 0.0, 0.01, 0.0),
            &cfg,
        );
        for w in traj.states.windows(2) {
            assert!(w[1].alpha() >= w[0].alpha());
        }
        assert!(traj.last().alpha() > 0.1);
    }

    #[test]
    fn divergence_sets_flag_and_truncates() {
        let cfg = SimConfig::new(Model::Lab, 1.0);
        let blowup = |_z: &State<f64>| f64::INFINITY;
        let traj = simulate(&nominal(), &blowup, State::zero(), &cfg);
        assert!(traj.diverged);
        assert_eq!(traj.len(), 2);
        let traj = simulate(
            &nominal(),
            &ZeroController,
            State::new(0.0, f64::NAN, 0.0, 0.0),
            &cfg,
        );
        assert!(traj.diverged);
        assert_eq!(traj.len(), 1);
    }

    #[test]
    fn monitor_stops_early() {
        let cfg = SimConfig::new(Model::Lti, 5.0);
        let traj = simulate_monitored(
            &nominal(),
            &ZeroController,
            State::new(0.0, 0.0, 0.01, 0.0),
            &cfg,
            |_, z| {
                if z.alpha().abs() > 0.2 {
                    ControlFlow::Break(())
                } else {
                    ControlFlow::Continue(())
                }
            },
        );
        assert!(traj.last().alpha() > 0.2);
        assert!(traj.len() < cfg.steps() + 1);
        assert!(!traj.diverged);
    }

    #[test]
    fn sim_config_validation() {
        assert!(SimConfig {
            h: 0.0,
            horizon: 1.0,
            model: Model::Lab
        }
        .validate()
        .is_err());
        assert!(SimConfig {
            h: 0.1,
            horizon: 0.05,
            model: Model::Lab
        }
        .validate()
        .is_err());
        assert!(SimConfig::new(Model::Lab, 1.0).validate().is_ok());
        assert_eq!(SimConfig::new(Model::Lab, 40.0).steps(), 4000);
    }
}
