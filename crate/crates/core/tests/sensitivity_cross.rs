//! Complex step, central differences and the LTI forward sensitivity
//! equations checked against one another.

use approx::assert_relative_eq;
use cartpole_core::dynamics::{Model, State};
use cartpole_core::integrator::SimConfig;
use cartpole_core::params::{ParamId, PhysicalParams};
use cartpole_core::sensitivity::{
    forward_ode_sensitivity_lti, sensitivity, Method, PerturbationSpec, SensitivityRecord,
    UNCONTROLLED_Z0,
};
use cartpole_core::trainer::{train, TrainerConfig};

fn run(
    model: Model,
    param: ParamId,
    method: Method,
    h: f64,
    policy: Option<&cartpole_core::MlpPolicy>,
    horizon: f64,
) -> SensitivityRecord {
    let p = PhysicalParams::default();
    let spec = PerturbationSpec::new(param, method).with_step(h);
    sensitivity(
        &p,
        policy,
        State(UNCONTROLLED_Z0),
        &SimConfig::new(model, horizon),
        spec,
    )
    .unwrap()
}

#[test]
fn complex_step_and_central_difference_agree_uncontrolled() {
    for model in [Model::Lab, Model::Lti] {
        for param in ParamId::ALL {
            let cs = run(model, param, Method::ComplexStep, 1e-8, None, 1.0);
            let cd = run(model, param, Method::CentralDiff, 1e-5, None, 1.0);
            assert_eq!(cs.len(), 101);
            let err = cd.relative_sup_error(&cs);
            assert!(err < 1e-5, "{model} {param}: {err:e}");
        }
    }
}

#[test]
fn forward_equations_agree_with_both_difference_methods() {
    let p = PhysicalParams::default();
    for param in ParamId::ALL {
        let ode = forward_ode_sensitivity_lti(
            &p,
            State(UNCONTROLLED_Z0),
            &SimConfig::new(Model::Lti, 1.0),
            param,
        )
        .unwrap();
        let cs = run(Model::Lti, param, Method::ComplexStep, 1e-8, None, 1.0);
        let cd = run(Model::Lti, param, Method::CentralDiff, 1e-5, None, 1.0);
        assert!(cs.relative_sup_error(&ode) < 1e-5, "{param} cs");
        assert!(cd.relative_sup_error(&ode) < 1e-5, "{param} cd");
    }
}

#[test]
fn complex_step_is_insensitive_to_tiny_steps() {
    for model in [Model::Lab, Model::Lti] {
        for param in ParamId::ALL {
            let a = run(model, param, Method::ComplexStep, 1e-8, None, 1.0);
            let b = run(model, param, Method::ComplexStep, 5e-16, None, 1.0);
            assert!(b.relative_sup_error(&a) < 1e-8, "{model} {param}");
        }
    }
}

#[test]
fn central_differences_cancel_at_tiny_steps() {
    // the failure mode the complex step avoids
    let cs = run(
        Model::Lab,
        ParamId::HingeDamping,
        Method::ComplexStep,
        1e-13,
        None,
        1.0,
    );
    let cd = run(
        Model::Lab,
        ParamId::HingeDamping,
        Method::CentralDiff,
        1e-13,
        None,
        1.0,
    );
    let reference = run(
        Model::Lab,
        ParamId::HingeDamping,
        Method::ComplexStep,
        1e-8,
        None,
        1.0,
    );
    assert!(cs.relative_sup_error(&reference) < 1e-8);
    assert!(cd.relative_sup_error(&reference) > 1e-4);
}

#[test]
fn zero_sensitivity_structure() {
    for param in [
        ParamId::HingeDamping,
        ParamId::CartDamping,
        ParamId::MotorInertia,
        ParamId::PendulumInertia,
    ] {
        for method in [Method::ComplexStep, Method::CentralDiff] {
            assert!(
                run(Model::Lti, param, method, method.default_step(), None, 1.0)
                    .is_identically_zero()
            );
        }
    }
    let lab = run(
        Model::Lab,
        ParamId::HingeDamping,
        Method::ComplexStep,
        1e-8,
        None,
        1.0,
    );
    assert!(lab.component_sup_norm(2) > 0.0);
    assert!(lab.component_sup_norm(3) > 0.0);
}

#[test]
fn controlled_complex_step_matches_central_difference_away_from_kinks() {
    let cfg = TrainerConfig {
        success_threshold: 480.0,
        success_window: 20,
        seed: 2,
        ..TrainerConfig::default()
    };
    let out = train(&cfg).unwrap();
    assert!(out.reached_threshold);
    for param in [
        ParamId::PendulumMass,
        ParamId::HingeDamping,
        ParamId::GearRatio,
    ] {
        let cs = run(
            Model::Lab,
            param,
            Method::ComplexStep,
            1e-8,
            Some(&out.policy),
            2.0,
        );
        let cd = run(
            Model::Lab,
            param,
            Method::CentralDiff,
            1e-6,
            Some(&out.policy),
            2.0,
        );
        assert!(!cs.is_identically_zero());
        for j in 0..4 {
            assert_relative_eq!(
                cs.s[j][10],
                cd.s[j][10],
                max_relative = 1e-4,
                epsilon = 1e-9
            );
        }
    }
}
