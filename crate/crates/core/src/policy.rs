//! Gaussian policy network `4 -> 36 -> 10 -> (mu, sigma)` with ReLU hidden
//! layers.
//!
//! Training samples normalized actions from `N(mu, sigma^2)`; deployment uses
//! the deterministic controller `V_m = 10 mu(z)`, a piecewise-affine map of
//! the state.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::dynamics::State;
use crate::error::{Error, Result};
use crate::integrator::Controller;
use crate::scalar::{sigmoid_f64, Scalar};

pub const INPUT: usize = 4;
pub const HIDDEN1: usize = 36;
pub const HIDDEN2: usize = 10;
/// Layer widths, input to output.
pub const ARCH: [usize; 4] = [INPUT, HIDDEN1, HIDDEN2, 2];
/// Volts per unit of normalized action.
pub const VOLTAGE_SCALE: f64 = 10.0;
pub const MAX_VOLTAGE: f64 = 10.0;
pub const SIGMA_FLOOR: f64 = 1e-6;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

// Offsets into the flat parameter vector.
const W1: usize = 0;
const B1: usize = W1 + HIDDEN1 * INPUT;
const W2: usize = B1 + HIDDEN1;
const B2: usize = W2 + HIDDEN2 * HIDDEN1;
const WM: usize = B2 + HIDDEN2;
const BM: usize = WM + HIDDEN2;
const WS: usize = BM + 1;
const BS: usize = WS + HIDDEN2;
/// Total number of trainable parameters.
pub const NUM_PARAMS: usize = BS + 1;

/// Parameter group within the flat vector, used for persistence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub name: &'static str,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Parameter blocks in storage order. Weight matrices are row-major with one
/// row per output neuron.
pub const BLOCKS: [Block; 8] = [
    Block {
        name: "W1",
        offset: W1,
        rows: HIDDEN1,
        cols: INPUT,
    },
    Block {
        name: "b1",
        offset: B1,
        rows: 1,
        cols: HIDDEN1,
    },
    Block {
        name: "W2",
        offset: W2,
        rows: HIDDEN2,
        cols: HIDDEN1,
    },
    Block {
        name: "b2",
        offset: B2,
        rows: 1,
        cols: HIDDEN2,
    },
    Block {
        name: "W_mean",
        offset: WM,
        rows: 1,
        cols: HIDDEN2,
    },
    Block {
        name: "b_mean",
        offset: BM,
        rows: 1,
        cols: 1,
    },
    Block {
        name: "W_std",
        offset: WS,
        rows: 1,
        cols: HIDDEN2,
    },
    Block {
        name: "b_std",
        offset: BS,
        rows: 1,
        cols: 1,
    },
];

/// Mean and standard deviation of the normalized action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianHead<S> {
    pub mu: S,
    pub sigma: S,
}

/// One sampled training action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    /// Unclipped draw from `N(mu, sigma^2)`.
    pub raw: f64,
    /// Log-density of `raw`.
    pub logp: f64,
    /// Voltage sent to the environment, `10 clip(raw, -1, 1)`.
    pub voltage: f64,
}

/// Intermediate activations of a real forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub pre1: [f64; HIDDEN1],
    pub pre2: [f64; HIDDEN2],
    pub hidden: [f64; HIDDEN2],
    pub raw_sigma: f64,
    pub head: GaussianHead<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpPolicy {
    theta: Vec<f64>,
}

#[inline]
pub fn relu<S: Scalar>(x: S) -> S {
    if x.re() > 0.0 {
        x
    } else {
        S::zero()
    }
}

/// ReLU gated on the real part; both parts are zeroed on the inactive side.
pub fn relu_complex<S: Scalar>(x: S) -> S {
    relu(x)
}

/// Saturates `v` to `[-limit, limit]` by its real part.
#[inline]
pub fn clip<S: Scalar>(v: S, limit: f64) -> S {
    if v.re() > limit {
        S::from_real(limit)
    } else if v.re() < -limit {
        S::from_real(-limit)
    } else {
        v
    }
}

/// `log N(a; mu, sigma^2)`.
pub fn gaussian_log_prob(a: f64, mu: f64, sigma: f64) -> f64 {
    let d = (a - mu) / sigma;
    -LN_SQRT_2PI - sigma.ln() - 0.5 * d * d
}

impl MlpPolicy {
    pub fn zeros() -> Self {
        MlpPolicy {
            theta: vec![0.0; NUM_PARAMS],
        }
    }

    /// Draws every weight and bias of a layer from
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init(rng: &mut impl Rng) -> Self {
        let mut theta = vec![0.0; NUM_PARAMS];
        for block in BLOCKS {
            let fan_in = match block.name {
                "W1" | "b1" => INPUT,
                "W2" | "b2" => HIDDEN1,
                _ => HIDDEN2,
            };
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            for v in &mut theta[block.range()] {
                *v = dist.sample(rng);
            }
        }
        MlpPolicy { theta }
    }

    pub fn from_flat(theta: Vec<f64>) -> Result<Self> {
        if theta.len() != NUM_PARAMS {
            return Err(Error::ShapeMismatch {
                expected: NUM_PARAMS,
                got: theta.len(),
            });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                field: "policy weights",
            });
        }
        Ok(MlpPolicy { theta })
    }

    pub fn params(&self) -> &[f64] {
        &self.theta
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        BLOCKS
            .iter()
            .find(|b| b.name == name)
            .map(|b| &self.theta[b.range()])
    }

    pub fn block_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        BLOCKS
            .iter()
            .find(|b| b.name == name)
            .map(|b| &mut self.theta[b.range()])
    }

    fn hidden<S: Scalar>(&self, z: &State<S>) -> [S; HIDDEN2] {
        let t = &self.theta;
        let mut h1 = [S::zero(); HIDDEN1];
        for (i, h) in h1.iter_mut().enumerate() {
            let row = &t[W1 + i * INPUT..W1 + (i + 1) * INPUT];
            let mut acc = S::from_real(t[B1 + i]);
            for (w, zj) in row.iter().zip(z.0.iter()) {
                acc += *zj * *w;
            }
            *h = relu(acc);
        }
        let mut h2 = [S::zero(); HIDDEN2];
        for (i, h) in h2.iter_mut().enumerate() {
            let row = &t[W2 + i * HIDDEN1..W2 + (i + 1) * HIDDEN1];
            let mut acc = S::from_real(t[B2 + i]);
            for (w, a) in row.iter().zip(h1.iter()) {
                acc += *a * *w;
            }
            *h = relu(acc);
        }
        h2
    }

    fn head_output<S: Scalar>(&self, weights: usize, bias: usize, hidden: &[S; HIDDEN2]) -> S {
        let mut acc = S::from_real(self.theta[bias]);
        for (w, a) in self.theta[weights..weights + HIDDEN2]
            .iter()
            .zip(hidden.iter())
        {
            acc += *a * *w;
        }
        acc
    }

    /// Mean of the normalized action; the deterministic controller before
    /// scaling.
    pub fn mean<S: Scalar>(&self, z: &State<S>) -> S {
        let h = self.hidden(z);
        self.head_output(WM, BM, &h)
    }

    pub fn forward<S: Scalar>(&self, z: &State<S>) -> GaussianHead<S> {
        let h = self.hidden(z);
        let mu = self.head_output(WM, BM, &h);
        let raw = self.head_output(WS, BS, &h);
        GaussianHead {
            mu,
            sigma: raw.softplus() + S::from_real(SIGMA_FLOOR),
        }
    }

    /// Real forward pass that keeps the activations needed by
    /// [`MlpPolicy::backward`].
    pub fn forward_cached(&self, z: &State<f64>) -> ForwardCache {
        let t = &self.theta;
        let mut pre1 = [0.0; HIDDEN1];
        for (i, p) in pre1.iter_mut().enumerate() {
            let row = &t[W1 + i * INPUT..W1 + (i + 1) * INPUT];
            let mut acc = t[B1 + i];
            for (w, x) in row.iter().zip(z.0.iter()) {
                acc += x * w;
            }
            *p = acc;
        }
        let mut pre2 = [0.0; HIDDEN2];
        let mut hidden = [0.0; HIDDEN2];
        for i in 0..HIDDEN2 {
            let row = &t[W2 + i * HIDDEN1..W2 + (i + 1) * HIDDEN1];
            let mut acc = t[B2 + i];
            for (w, p) in row.iter().zip(pre1.iter()) {
                acc += relu(*p) * w;
            }
            pre2[i] = acc;
            hidden[i] = relu(pre2[i]);
        }
        let mu = self.head_output(WM, BM, &hidden);
        let raw_sigma = self.head_output(WS, BS, &hidden);
        ForwardCache {
            pre1,
            pre2,
            hidden,
            raw_sigma,
            head: GaussianHead {
                mu,
                sigma: raw_sigma.softplus() + SIGMA_FLOOR,
            },
        }
    }

    /// Accumulates into `grad` the gradient of a scalar objective whose
    /// partials with respect to `mu` and `sigma` at input `z` are `d_mu` and
    /// `d_sigma`.
    pub fn backward(
        &self,
        z: &State<f64>,
        cache: &ForwardCache,
        d_mu: f64,
        d_sigma: f64,
        grad: &mut [f64],
    ) {
        debug_assert_eq!(grad.len(), NUM_PARAMS);
        let t = &self.theta;
        let d_raw = d_sigma * sigmoid_f64(cache.raw_sigma);

        grad[BM] += d_mu;
        grad[BS] += d_raw;
        let mut d_pre2 = [0.0; HIDDEN2];
        for i in 0..HIDDEN2 {
            let h = cache.hidden[i];
            grad[WM + i] += d_mu * h;
            grad[WS + i] += d_raw * h;
            if cache.pre2[i] > 0.0 {
                d_pre2[i] = d_mu * t[WM + i] + d_raw * t[WS + i];
            }
        }

        let mut d_h1 = [0.0; HIDDEN1];
        for (i, &dp) in d_pre2.iter().enumerate() {
            if dp == 0.0 {
                continue;
            }
            grad[B2 + i] += dp;
            let base = W2 + i * HIDDEN1;
            for j in 0..HIDDEN1 {
                grad[base + j] += dp * cache.pre1[j].max(0.0);
                d_h1[j] += dp * t[base + j];
            }
        }

        for (j, &dh) in d_h1.iter().enumerate() {
            if cache.pre1[j] <= 0.0 {
                continue;
            }
            grad[B1 + j] += dh;
            let base = W1 + j * INPUT;
            for (k, zk) in z.0.iter().enumerate() {
                grad[base + k] += dh * zk;
            }
        }
    }

    /// Clipped deployment voltage `10 mu(z)`.
    pub fn deterministic_voltage<S: Scalar>(&self, z: &State<S>) -> S {
        clip(self.mean(z) * VOLTAGE_SCALE, MAX_VOLTAGE)
    }

    /// Samples a training action; the log-density is taken at the unclipped
    /// draw.
    pub fn sample_action(&self, z: &State<f64>, rng: &mut impl Rng) -> Action {
        let head = self.forward(z);
        sample_from_head(&head, rng)
    }
}

pub fn sample_from_head(head: &GaussianHead<f64>, rng: &mut impl Rng) -> Action {
    let eps: f64 = StandardNormal.sample(rng);
    let raw = head.mu + head.sigma * eps;
    Action {
        raw,
        logp: gaussian_log_prob(raw, head.mu, head.sigma),
        voltage: VOLTAGE_SCALE * raw.clamp(-1.0, 1.0),
    }
}

impl<S: Scalar> Controller<S> for MlpPolicy {
    fn voltage(&self, z: &State<S>) -> S {
        self.deterministic_voltage(z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Complex;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layout_covers_every_parameter() {
        assert_eq!(NUM_PARAMS, 4 * 36 + 36 + 36 * 10 + 10 + 10 + 1 + 10 + 1);
        let mut next = 0;
        for b in BLOCKS {
            assert_eq!(b.offset, next);
            next += b.len();
        }
        assert_eq!(next, NUM_PARAMS);
    }

    #[test]
    #[allow(clippy::approx_constant)] // the rounded value quoted in the docs
    fn zero_policy_head() {
        let p = MlpPolicy::zeros();
        let head = p.forward(&State::new(0.3, -1.0, 0.1, 2.0));
        assert_eq!(head.mu, 0.0);
        assert!((head.sigma - (std::f64::consts::LN_2 + 1e-6)).abs() < 1e-15);
        assert!((head.sigma - 0.69315).abs() < 1e-5);
        assert_eq!(
            p.deterministic_voltage(&State::new(0.1, 0.0, 0.0, 0.0)),
            0.0
        );
    }

    #[test]
    fn mean_head_is_linear_in_its_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = MlpPolicy::init(&mut rng);
        p.block_mut("b_mean").unwrap()[0] = 0.0;
        let z = State::new(0.05, 0.1, -0.05, 0.3);
        let mu = p.forward(&z).mu;
        for w in p.block_mut("W_mean").unwrap() {
            *w *= 2.0;
        }
        assert!((p.forward(&z).mu - 2.0 * mu).abs() < 1e-15);
    }

    #[test]
    fn voltage_saturates() {
        let mut p = MlpPolicy::zeros();
        p.block_mut("b_mean").unwrap()[0] = 1.4;
        assert_eq!(p.deterministic_voltage(&State::<f64>::zero()), 10.0);
        p.block_mut("b_mean").unwrap()[0] = -3.0;
        assert_eq!(p.deterministic_voltage(&State::<f64>::zero()), -10.0);
        let v = p.deterministic_voltage(&State::<Complex>::zero());
        assert_eq!((v.re(), v.im()), (-10.0, 0.0));
    }

    #[test]
    fn relu_complex_gates_on_real_part() {
        let v = relu_complex(Complex::new(3.0, 0.001));
        assert_eq!((v.re(), v.im()), (3.0, 0.001));
        let v = relu_complex(Complex::new(-2.0, 0.001));
        assert_eq!((v.re(), v.im()), (0.0, 0.0));
        let v = relu_complex(Complex::new(0.0, 0.0));
        assert_eq!((v.re(), v.im()), (0.0, 0.0));
    }

    #[test]
    fn complex_forward_matches_real() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = MlpPolicy::init(&mut rng);
        for _ in 0..20 {
            let z = State::new(
                rng.random_range(-0.2..0.2),
                rng.random_range(-1.0..1.0),
                rng.random_range(-0.2..0.2),
                rng.random_range(-1.0..1.0),
            );
            let r = p.forward(&z);
            let c = p.forward(&State::<Complex>::from_real(&z));
            assert_eq!(c.mu.re().to_bits(), r.mu.to_bits());
            assert_eq!(c.sigma.re().to_bits(), r.sigma.to_bits());
            assert_eq!((c.mu.im(), c.sigma.im()), (0.0, 0.0));
            let v = p.deterministic_voltage(&State::<Complex>::from_real(&z));
            assert_eq!(v.re().to_bits(), p.deterministic_voltage(&z).to_bits());
            assert_eq!(v.im(), 0.0);
        }
    }

    #[test]
    fn cached_forward_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = MlpPolicy::init(&mut rng);
        let z = State::new(0.1, -0.3, 0.02, 0.5);
        let a = p.forward(&z);
        let b = p.forward_cached(&z).head;
        assert!((a.mu - b.mu).abs() < 1e-15);
        assert!((a.sigma - b.sigma).abs() < 1e-15);
    }

    #[test]
    fn standard_normal_log_density_at_zero() {
        assert!((gaussian_log_prob(0.0, 0.0, 1.0) + 0.91894).abs() < 1e-5);
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let head = GaussianHead {
            mu: 0.0,
            sigma: 1.0,
        };
        let a = sample_from_head(&head, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_from_head(&head, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert!((a.logp - gaussian_log_prob(a.raw, 0.0, 1.0)).abs() < 1e-15);
        assert_eq!(a.voltage, 10.0 * a.raw.clamp(-1.0, 1.0));
    }

    #[test]
    fn sample_mean_converges() {
        let head = GaussianHead {
            mu: 0.3,
            sigma: 0.5,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| sample_from_head(&head, &mut rng).raw)
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.3).abs() < 0.01, "{mean}");
    }

    #[test]
    fn from_flat_checks_shape_and_finiteness() {
        assert!(matches!(
            MlpPolicy::from_flat(vec![0.0; 3]),
            Err(Error::ShapeMismatch {
                expected: NUM_PARAMS,
                got: 3
            })
        ));
        let mut v = vec![0.0; NUM_PARAMS];
        v[7] = f64::NAN;
        assert!(MlpPolicy::from_flat(v).is_err());
    }
}
