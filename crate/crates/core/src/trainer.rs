//! REINFORCE with discounted returns and NAdam updates.
//!
//! Each episode starts from a state drawn uniformly from the box
//! `(-w, w)^4`, samples normalized actions from the Gaussian policy, and ends
//! at the first step whose successor leaves the `|x| <= 0.2`, `|alpha| <= 0.2`
//! band, or at the step horizon. One NAdam step is taken on
//! `-sum_t log pi(a_t | s_t) G_t` after every episode.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{Model, State};
use crate::error::{Error, Result};
use crate::integrator::{semi_euler_step, DEFAULT_STEP};
use crate::nadam::{nadam_step, NAdamConfig, NAdamState};
use crate::params::PhysicalParams;
use crate::policy::{sample_from_head, MlpPolicy, NUM_PARAMS};

/// Half-width of the rewarded band for both cart position (m) and pendulum
/// angle (rad).
pub const REWARD_BOUND: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub model: Model,
    pub params: PhysicalParams<f64>,
    pub gamma: f64,
    pub lr: f64,
    pub max_episodes: usize,
    pub horizon_steps: usize,
    pub success_threshold: f64,
    pub success_window: usize,
    pub ic_halfwidth: f64,
    pub h: f64,
    pub seed: u64,
    /// Standardize returns within each episode before weighting log-probs.
    pub standardize_returns: bool,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            model: Model::Lab,
            params: PhysicalParams::default(),
            gamma: 0.99,
            lr: 3e-3,
            max_episodes: 20_000,
            horizon_steps: 2000,
            success_threshold: 1950.0,
            success_window: 50,
            ic_halfwidth: 0.08,
            h: DEFAULT_STEP,
            seed: 0,
            standardize_returns: false,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.horizon_steps == 0 {
            return bad("horizon_steps must be positive".into());
        }
        if self.success_threshold > self.horizon_steps as f64 {
            return bad(format!(
                "success_threshold {} exceeds horizon_steps {}",
                self.success_threshold, self.horizon_steps
            ));
        }
        if self.success_window == 0 {
            return bad("success_window must be positive".into());
        }
        if !(self.ic_halfwidth > 0.0) {
            return bad(format!(
                "ic_halfwidth must be positive, got {}",
                self.ic_halfwidth
            ));
        }
        if !(self.h > 0.0) {
            return bad(format!("step h must be positive, got {}", self.h));
        }
        if self.model == Model::Simplified {
            return bad("training supports the lab and lti models".into());
        }
        self.params.validate()
    }
}

/// 1 if the state is inside the rewarded band (bounds inclusive), else 0.
/// Velocities are unconstrained.
pub fn reward(z_next: &State<f64>) -> f64 {
    if z_next.x().abs() <= REWARD_BOUND && z_next.alpha().abs() <= REWARD_BOUND {
        1.0
    } else {
        0.0
    }
}

/// `G_t = sum_k gamma^k r_{t+k}`, by backward recursion.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (g, r) in out.iter_mut().zip(rewards).rev() {
        acc = r + gamma * acc;
        *g = acc;
    }
    out
}

/// One rollout. `states[t]` is the state the action `actions[t]` was drawn
/// in; `rewards[t]` scores the successor state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeRecord {
    pub states: Vec<State<f64>>,
    pub actions: Vec<f64>,
    pub logps: Vec<f64>,
    pub rewards: Vec<f64>,
    /// Number of rewarded steps, i.e. the index of the first zero reward.
    pub length: usize,
}

impl EpisodeRecord {
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// `-sum_t logp_t G_t`.
pub fn policy_loss(episode: &EpisodeRecord, gamma: f64) -> f64 {
    let g = discounted_returns(&episode.rewards, gamma);
    -episode
        .logps
        .iter()
        .zip(&g)
        .map(|(l, g)| l * g)
        .sum::<f64>()
}

fn standardize(v: &mut [f64]) {
    if v.len() < 2 {
        return;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt() + 1e-9;
    for x in v.iter_mut() {
        *x = (*x - mean) / sd;
    }
}

/// Loss and its gradient with respect to every policy parameter, recomputing
/// the log-probabilities of the recorded actions under `policy`.
pub fn loss_and_gradient(
    policy: &MlpPolicy,
    episode: &EpisodeRecord,
    gamma: f64,
    standardize_returns: bool,
) -> (f64, Vec<f64>) {
    let mut returns = discounted_returns(&episode.rewards, gamma);
    if standardize_returns {
        standardize(&mut returns);
    }
    let mut grad = vec![0.0; NUM_PARAMS];
    let mut loss = 0.0;
    for ((z, &a), &g) in episode.states.iter().zip(&episode.actions).zip(&returns) {
        if g == 0.0 {
            continue;
        }
        let cache = policy.forward_cached(z);
        let (mu, sigma) = (cache.head.mu, cache.head.sigma);
        let d = a - mu;
        let logp = crate::policy::gaussian_log_prob(a, mu, sigma);
        loss -= logp * g;
        let s2 = sigma * sigma;
        let d_mu = -g * d / s2;
        let d_sigma = -g * (d * d / (s2 * sigma) - 1.0 / sigma);
        policy.backward(z, &cache, d_mu, d_sigma, &mut grad);
    }
    (loss, grad)
}

/// Rolls out one episode from `z0` with sampled actions.
pub fn run_episode(
    policy: &MlpPolicy,
    cfg: &TrainerConfig,
    z0: State<f64>,
    rng: &mut impl Rng,
) -> EpisodeRecord {
    let mut ep = EpisodeRecord::default();
    let mut z = z0;
    let model = cfg.model;
    let params = &cfg.params;
    for _ in 0..cfg.horizon_steps {
        let head = policy.forward(&z);
        let action = sample_from_head(&head, rng);
        let next = semi_euler_step(|s, u| model.rhs(s, params, u), &z, action.voltage, cfg.h);
        let r = if next.is_finite() { reward(&next) } else { 0.0 };
        ep.states.push(z);
        ep.actions.push(action.raw);
        ep.logps.push(action.logp);
        ep.rewards.push(r);
        if r == 0.0 {
            break;
        }
        ep.length += 1;
        z = next;
    }
    ep
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    pub steps: usize,
    pub reward: f64,
    pub moving_avg: f64,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: MlpPolicy,
    pub log: Vec<EpisodeLog>,
    /// Whether the moving-average stopping rule fired.
    pub reached_threshold: bool,
}

/// Initial policy for a seed: the first draws of the run's RNG stream.
fn seeded_start(seed: u64) -> (MlpPolicy, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let policy = MlpPolicy::init(&mut rng);
    (policy, rng)
}

pub fn initial_policy(seed: u64) -> MlpPolicy {
    seeded_start(seed).0
}

/// Trains a policy. Stops when the mean episode reward over the last
/// `success_window` episodes reaches `success_threshold`, or after
/// `max_episodes`.
pub fn train(cfg: &TrainerConfig) -> Result<TrainOutcome> {
    train_with_progress(cfg, |_| {})
}

pub fn train_with_progress(
    cfg: &TrainerConfig,
    mut progress: impl FnMut(&EpisodeLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (mut policy, mut rng) = seeded_start(cfg.seed);
    let opt = NAdamConfig::with_lr(cfg.lr);
    let mut state = NAdamState::new(NUM_PARAMS);
    let mut log = Vec::new();
    let mut window_sum = 0.0;
    let w = cfg.ic_halfwidth;

    for episode in 0..cfg.max_episodes {
        let z0 = State::new(
            rng.random_range(-w..w),
            rng.random_range(-w..w),
            rng.random_range(-w..w),
            rng.random_range(-w..w),
        );
        let ep = run_episode(&policy, cfg, z0, &mut rng);
        let (loss, grad) = loss_and_gradient(&policy, &ep, cfg.gamma, cfg.standardize_returns);
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged {
                episode,
                what: "non-finite loss",
            });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingDiverged {
                episode,
                what: "non-finite gradient",
            });
        }
        nadam_step(policy.params_mut(), &grad, &mut state, &opt)?;
        if policy.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::TrainingDiverged {
                episode,
                what: "non-finite parameters",
            });
        }

        let total = ep.total_reward();
        window_sum += total;
        if log.len() >= cfg.success_window {
            let old: &EpisodeLog = &log[log.len() - cfg.success_window];
            window_sum -= old.reward;
        }
        let n = (log.len() + 1).min(cfg.success_window);
        let entry = EpisodeLog {
            episode,
            steps: ep.length,
            reward: total,
            moving_avg: window_sum / n as f64,
            loss,
        };
        progress(&entry);
        log.push(entry);
        if n == cfg.success_window && entry.moving_avg >= cfg.success_threshold {
            return Ok(TrainOutcome {
                policy,
                log,
                reached_threshold: true,
            });
        }
    }
    Ok(TrainOutcome {
        policy,
        log,
        reached_threshold: false,
    })
}
