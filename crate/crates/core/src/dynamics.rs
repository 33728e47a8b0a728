//! Right-hand sides of the three cart-pole models.
//!
//! * lab model: full nonlinear dynamics with DC-motor actuator, gear train and
//!   viscous damping at both the cart and the hinge;
//! * simplified model: undamped rigid-body dynamics with a force input;
//! * LTI model: linearization of the simplified model at the upright
//!   equilibrium, with the motor written in as a voltage input.
//!
//! State is `(x, x_dot, alpha, alpha_dot)` with `alpha = 0` upright and
//! counterclockwise positive.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::params::PhysicalParams;
use crate::scalar::Scalar;

const FIELDS: [&str; 4] = ["x", "x_dot", "alpha", "alpha_dot"];
const DERIV_FIELDS: [&str; 4] = ["dx", "dx_dot", "dalpha", "dalpha_dot"];

/// Cart-pole state `(x, x_dot, alpha, alpha_dot)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State<S>(pub [S; 4]);

/// Time derivative of a [`State`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative<S>(pub [S; 4]);

impl<S: Scalar> State<S> {
    pub fn new(x: S, x_dot: S, alpha: S, alpha_dot: S) -> Self {
        State([x, x_dot, alpha, alpha_dot])
    }

    pub fn zero() -> Self {
        State([S::zero(); 4])
    }

    pub fn x(&self) -> S {
        self.0[0]
    }
    pub fn x_dot(&self) -> S {
        self.0[1]
    }
    pub fn alpha(&self) -> S {
        self.0[2]
    }
    pub fn alpha_dot(&self) -> S {
        self.0[3]
    }

    pub fn from_real(z: &State<f64>) -> Self {
        State(z.0.map(S::from_real))
    }

    pub fn re(&self) -> State<f64> {
        State(self.0.map(|v| v.re()))
    }

    pub fn im(&self) -> [f64; 4] {
        self.0.map(|v| v.im())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self) -> Result<()> {
        ensure_finite(&self.0, &FIELDS)
    }
}

impl<S: Scalar> StateDerivative<S> {
    pub fn ensure_finite(&self) -> Result<()> {
        ensure_finite(&self.0, &DERIV_FIELDS)
    }
}

fn ensure_finite<S: Scalar>(v: &[S; 4], names: &[&'static str; 4]) -> Result<()> {
    match v.iter().position(|s| !s.is_finite()) {
        Some(j) => Err(Error::NonFinite { field: names[j] }),
        None => Ok(()),
    }
}

impl<S> Index<usize> for State<S> {
    type Output = S;
    fn index(&self, j: usize) -> &S {
        &self.0[j]
    }
}

impl<S> IndexMut<usize> for State<S> {
    fn index_mut(&mut self, j: usize) -> &mut S {
        &mut self.0[j]
    }
}

impl<S> Index<usize> for StateDerivative<S> {
    type Output = S;
    fn index(&self, j: usize) -> &S {
        &self.0[j]
    }
}

macro_rules! vec4_ops {
    ($t:ident) => {
        impl<S: Scalar> Add for $t<S> {
            type Output = Self;
            fn add(self, rhs: Self) -> Self {
                $t([
                    self.0[0] + rhs.0[0],
                    self.0[1] + rhs.0[1],
                    self.0[2] + rhs.0[2],
                    self.0[3] + rhs.0[3],
                ])
            }
        }
        impl<S: Scalar> Sub for $t<S> {
            type Output = Self;
            fn sub(self, rhs: Self) -> Self {
                $t([
                    self.0[0] - rhs.0[0],
                    self.0[1] - rhs.0[1],
                    self.0[2] - rhs.0[2],
                    self.0[3] - rhs.0[3],
                ])
            }
        }
        impl<S: Scalar> Neg for $t<S> {
            type Output = Self;
            fn neg(self) -> Self {
                $t(self.0.map(|v| -v))
            }
        }
        impl<S: Scalar> Mul<f64> for $t<S> {
            type Output = Self;
            fn mul(self, k: f64) -> Self {
                $t(self.0.map(|v| v * k))
            }
        }
    };
}

vec4_ops!(State);
vec4_ops!(StateDerivative);

/// Which right-hand side drives a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    Lab,
    Lti,
    /// Force-input model driven through the motor map of [`motor_force`].
    Simplified,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Lab => "lab",
            Model::Lti => "lti",
            Model::Simplified => "simplified",
        }
    }

    /// Evaluates the model with voltage input `v_m`.
    #[inline]
    pub fn rhs<S: Scalar>(self, z: &State<S>, p: &PhysicalParams<S>, v_m: S) -> StateDerivative<S> {
        match self {
            Model::Lab => lab_rhs(z, p, v_m),
            Model::Lti => lti_rhs(z, p, v_m),
            Model::Simplified => simplified_rhs_unchecked(z, p, motor_force(p, v_m, z.x_dot())),
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lab" => Ok(Model::Lab),
            "lti" => Ok(Model::Lti),
            "simplified" => Ok(Model::Simplified),
            _ => Err(Error::Config(format!(
                "unknown model `{s}` (expected lab, lti or simplified)"
            ))),
        }
    }
}

/// Shared denominator of the lab model,
/// `4 (m_c + m_p) r_mp^2 + 4 J_m K_g^2 + 3 m_p r_mp^2 sin^2(alpha)`.
#[inline]
pub fn lab_denominator<S: Scalar>(alpha: S, p: &PhysicalParams<S>) -> S {
    let r2 = p.r_mp * p.r_mp;
    let s = alpha.sin();
    (p.m_c + p.m_p) * r2 * 4.0 + p.j_m * p.k_g * p.k_g * 4.0 + p.m_p * r2 * s * s * 3.0
}

/// Lab model driven by motor voltage `v_m`.
pub fn lab_rhs<S: Scalar>(z: &State<S>, p: &PhysicalParams<S>, v_m: S) -> StateDerivative<S> {
    let [_, z2, z3, z4] = z.0;
    let (s, c) = (z3.sin(), z3.cos());
    let r2 = p.r_mp * p.r_mp;
    let d = lab_denominator(z3, p);

    // viscous cart damping plus back-EMF
    let cart_drag = p.r_m * r2 * p.b_c + p.k_g * p.k_g * p.k_t * p.k_m;
    // (m_c + m_p) r_mp^2 + J_m K_g^2
    let inertia = (p.m_c + p.m_p) * r2 + p.j_m * p.k_g * p.k_g;
    let drive = p.k_g * p.k_t * v_m;

    let dz2 = -(r2 * p.b_p * c * z4 * 3.0) / (p.l_p * d)
        - (p.m_p * p.l_p * r2 * s * z4 * z4 * 4.0) / d
        - (cart_drag * z2 * 4.0) / (p.r_m * d)
        + (p.m_p * r2 * p.g * c * s * 3.0) / d
        + (p.r_mp * drive * 4.0) / (p.r_m * d);

    let dz4 = -(inertia * p.b_p * z4 * 3.0) / (p.m_p * p.l_p * p.l_p * d)
        - (p.m_p * r2 * c * s * z4 * z4 * 3.0) / d
        - (cart_drag * c * z2 * 3.0) / (p.r_m * p.l_p * d)
        + (inertia * p.g * s * 3.0) / (p.l_p * d)
        + (r2 * c * drive * 3.0) / (p.r_m * p.l_p * d);

    StateDerivative([z2, dz2, z4, dz4])
}

/// Determinant of the simplified model's mass matrix,
/// `(m_c + m_p) l_p - m_p l_p cos^2(alpha)`.
#[inline]
pub fn mass_matrix_det<S: Scalar>(alpha: S, p: &PhysicalParams<S>) -> S {
    let c = alpha.cos();
    (p.m_c + p.m_p) * p.l_p - p.m_p * p.l_p * c * c
}

/// Simplified nonlinear model driven by cart force `f_c`.
pub fn simplified_rhs<S: Scalar>(
    z: &State<S>,
    p: &PhysicalParams<S>,
    f_c: S,
) -> Result<StateDerivative<S>> {
    let det = mass_matrix_det(z.alpha(), p);
    if !(det.re() > 0.0) {
        return Err(Error::SingularMassMatrix(det.re()));
    }
    Ok(simplified_rhs_unchecked(z, p, f_c))
}

#[inline]
fn simplified_rhs_unchecked<S: Scalar>(
    z: &State<S>,
    p: &PhysicalParams<S>,
    f_c: S,
) -> StateDerivative<S> {
    let [_, z2, z3, z4] = z.0;
    let (s, c) = (z3.sin(), z3.cos());
    // M = [[m_c + m_p, -m_p l_p c], [-c, l_p]]
    let m11 = p.m_c + p.m_p;
    let m12 = -(p.m_p * p.l_p * c);
    let m21 = -c;
    let m22 = p.l_p;
    let det = m11 * m22 - m12 * m21;
    let r1 = f_c - p.m_p * p.l_p * s * z4 * z4;
    let r2 = p.g * s;
    let x_acc = (m22 * r1 - m12 * r2) / det;
    let a_acc = (m11 * r2 - m21 * r1) / det;
    StateDerivative([z2, x_acc, z4, a_acc])
}

/// Cart force produced by the geared DC motor at voltage `v_m` and cart
/// velocity `x_dot`: drive term minus back-EMF drag.
#[inline]
pub fn motor_force<S: Scalar>(p: &PhysicalParams<S>, v_m: S, x_dot: S) -> S {
    let ktg = p.k_g * p.k_t;
    (ktg * v_m) / (p.r_m * p.r_mp) - (ktg * p.k_g * p.k_m * x_dot) / (p.r_m * p.r_mp * p.r_mp)
}

/// State and input matrices of the LTI model, `z' = A z + B v_m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LtiSystem<S> {
    pub a: [[S; 4]; 4],
    pub b: [S; 4],
}

impl<S: Scalar> LtiSystem<S> {
    #[inline]
    pub fn apply(&self, z: &State<S>, v_m: S) -> StateDerivative<S> {
        let mut out = [S::zero(); 4];
        for (i, row) in self.a.iter().enumerate() {
            let mut acc = self.b[i] * v_m;
            for (a, zj) in row.iter().zip(z.0.iter()) {
                acc += *a * *zj;
            }
            out[i] = acc;
        }
        StateDerivative(out)
    }
}

pub fn lti_matrices<S: Scalar>(p: &PhysicalParams<S>) -> LtiSystem<S> {
    let zero = S::zero();
    let one = S::from_real(1.0);
    let emf = (p.k_g * p.k_g * p.k_t * p.k_m) / (p.r_m * p.r_mp * p.r_mp * p.m_c);
    let gain = (p.k_g * p.k_t) / (p.r_m * p.r_mp * p.m_c);
    LtiSystem {
        a: [
            [zero, one, zero, zero],
            [zero, -emf, (p.m_p * p.g) / p.m_c, zero],
            [zero, zero, zero, one],
            [
                zero,
                -emf / p.l_p,
                ((p.m_c + p.m_p) / (p.m_c * p.l_p)) * p.g,
                zero,
            ],
        ],
        b: [zero, gain, zero, gain / p.l_p],
    }
}

pub fn lti_rhs<S: Scalar>(z: &State<S>, p: &PhysicalParams<S>, v_m: S) -> StateDerivative<S> {
    lti_matrices(p).apply(z, v_m)
}
