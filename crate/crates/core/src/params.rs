//! Physical constants of the lab cart-pole rig.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::scalar::Scalar;

/// Identifies one of the 13 physical parameters. The discriminant order is
/// the canonical parameter order used for sensitivity indices and in every
/// exported file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamId {
    CartMass,
    PendulumMass,
    PendulumLength,
    Gravity,
    PinionRadius,
    ArmatureResistance,
    HingeDamping,
    CartDamping,
    GearRatio,
    BackEmfConstant,
    TorqueConstant,
    MotorInertia,
    PendulumInertia,
}

impl ParamId {
    pub const ALL: [ParamId; 13] = [
        ParamId::CartMass,
        ParamId::PendulumMass,
        ParamId::PendulumLength,
        ParamId::Gravity,
        ParamId::PinionRadius,
        ParamId::ArmatureResistance,
        ParamId::HingeDamping,
        ParamId::CartDamping,
        ParamId::GearRatio,
        ParamId::BackEmfConstant,
        ParamId::TorqueConstant,
        ParamId::MotorInertia,
        ParamId::PendulumInertia,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(k: usize) -> Option<ParamId> {
        Self::ALL.get(k).copied()
    }

    /// Short symbol used in config files, CLI flags and file names.
    pub fn symbol(self) -> &'static str {
        match self {
            ParamId::CartMass => "m_c",
            ParamId::PendulumMass => "m_p",
            ParamId::PendulumLength => "l_p",
            ParamId::Gravity => "g",
            ParamId::PinionRadius => "r_mp",
            ParamId::ArmatureResistance => "R_m",
            ParamId::HingeDamping => "B_p",
            ParamId::CartDamping => "B_c",
            ParamId::GearRatio => "K_g",
            ParamId::BackEmfConstant => "K_m",
            ParamId::TorqueConstant => "K_t",
            ParamId::MotorInertia => "J_m",
            ParamId::PendulumInertia => "J_p",
        }
    }

    /// Comma-separated symbols in canonical order.
    pub fn ordering_line() -> String {
        Self::ALL
            .iter()
            .map(|p| p.symbol())
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for ParamId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ParamId::ALL
            .iter()
            .copied()
            .find(|p| p.symbol() == s)
            .ok_or_else(|| Error::UnknownParameter(s.to_string()))
    }
}

/// The rig's physical parameters (SI units), generic over the scalar field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams<S> {
    pub m_c: S,
    pub m_p: S,
    pub l_p: S,
    pub g: S,
    pub r_mp: S,
    pub r_m: S,
    pub b_p: S,
    /// Used verbatim as the coefficient multiplying cart velocity.
    pub b_c: S,
    pub k_g: S,
    pub k_m: S,
    pub k_t: S,
    pub j_m: S,
    /// Carried for completeness; none of the implemented models read it.
    pub j_p: S,
}

impl PhysicalParams<f64> {
    pub const NOMINAL: PhysicalParams<f64> = PhysicalParams {
        m_c: 0.94,
        m_p: 0.23,
        l_p: 0.3302,
        g: 9.8,
        r_mp: 6.35e-3,
        r_m: 2.6,
        b_p: 0.0024,
        b_c: 5.4,
        k_g: 3.71,
        k_m: 7.67e-3,
        k_t: 7.67e-3,
        j_m: 3.90e-7,
        j_p: 3.344e-2,
    };

    /// Returns a copy with `param` displaced by `delta`.
    pub fn perturbed(&self, param: ParamId, delta: f64) -> Self {
        let mut p = *self;
        *p.get_mut(param) += delta;
        p
    }

    /// Rejects non-finite or non-positive values.
    pub fn validate(&self) -> Result<(), Error> {
        for id in ParamId::ALL {
            let v = self.get(id);
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    param: id,
                    value: v,
                });
            }
        }
        Ok(())
    }
}

impl Default for PhysicalParams<f64> {
    fn default() -> Self {
        Self::NOMINAL
    }
}

impl<S: Scalar> PhysicalParams<S> {
    pub fn get(&self, id: ParamId) -> S {
        match id {
            ParamId::CartMass => self.m_c,
            ParamId::PendulumMass => self.m_p,
            ParamId::PendulumLength => self.l_p,
            ParamId::Gravity => self.g,
            ParamId::PinionRadius => self.r_mp,
            ParamId::ArmatureResistance => self.r_m,
            ParamId::HingeDamping => self.b_p,
            ParamId::CartDamping => self.b_c,
            ParamId::GearRatio => self.k_g,
            ParamId::BackEmfConstant => self.k_m,
            ParamId::TorqueConstant => self.k_t,
            ParamId::MotorInertia => self.j_m,
            ParamId::PendulumInertia => self.j_p,
        }
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut S {
        match id {
            ParamId::CartMass => &mut self.m_c,
            ParamId::PendulumMass => &mut self.m_p,
            ParamId::PendulumLength => &mut self.l_p,
            ParamId::Gravity => &mut self.g,
            ParamId::PinionRadius => &mut self.r_mp,
            ParamId::ArmatureResistance => &mut self.r_m,
            ParamId::HingeDamping => &mut self.b_p,
            ParamId::CartDamping => &mut self.b_c,
            ParamId::GearRatio => &mut self.k_g,
            ParamId::BackEmfConstant => &mut self.k_m,
            ParamId::TorqueConstant => &mut self.k_t,
            ParamId::MotorInertia => &mut self.j_m,
            ParamId::PendulumInertia => &mut self.j_p,
        }
    }

    pub fn from_real(p: &PhysicalParams<f64>) -> Self {
        let mut out = PhysicalParams {
            m_c: S::zero(),
            m_p: S::zero(),
            l_p: S::zero(),
            g: S::zero(),
            r_mp: S::zero(),
            r_m: S::zero(),
            b_p: S::zero(),
            b_c: S::zero(),
            k_g: S::zero(),
            k_m: S::zero(),
            k_t: S::zero(),
            j_m: S::zero(),
            j_p: S::zero(),
        };
        for id in ParamId::ALL {
            *out.get_mut(id) = S::from_real(p.get(id));
        }
        out
    }
}
