//! Saddle-point formulation of the empirical logistic Bellman error.
//!
//! The empirical loss can be written as a maximum over distributions z on
//! the batch:
//!
//! ```text
//! S(θ, z) = Σ_n z(n)·(Δ̂_θ(ξ_n) − (1/η)·log(N·z(n))) + (1 − γ)·⟨ν₀, V_θ⟩,
//! ```
//!
//! with `max_z S(θ, z)` equal to the empirical loss and the maximizer
//! proportional to `exp(η·Δ̂)`. The learner descends in θ while the sampler
//! ascends in z, and the average of the learner's iterates approximately
//! minimizes the empirical loss.
//!
//! A [`PreparedBatch`] deduplicates the states touched by a batch and
//! caches their feature blocks and prior-policy rows so that every inner
//! step costs one pass over that table. Terminal next states carry an
//! all-zero feature block, which makes their value and their feature
//! contribution vanish without special cases downstream.

use crate::features::{q_row, FeatureMap, Theta};
use crate::lbe::soft_value;
use crate::mdp::{StationaryPolicy, TabularMdp, TransitionBatch};
use crate::numeric::{log_sum_exp, sample_index, softmax};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SaddleError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("sampler weight {index} is zero; the multiplicative update cannot leave it")]
    ZeroSamplerWeight { index: usize },
    #[error("weights do not form a probability vector: {0}")]
    NotADistribution(String),
    #[error("bad parameter: {0}")]
    BadParameter(String),
}

/// One deduplicated state: its feature block, and the prior policy's
/// probabilities there (the distribution the soft value tilts against).
#[derive(Debug, Clone)]
struct PreparedState {
    feats: Vec<f64>,
    prior: Vec<f64>,
}

/// Where a transition's continuation value comes from: the single sampled
/// next state, or the exact next-state distribution (used by the
/// semi-empirical loss, which needs model access).
#[derive(Debug, Clone)]
enum NextRef {
    Sampled(usize),
    Expected(Vec<(f64, usize)>),
}

#[derive(Debug, Clone)]
struct PreparedPair {
    state: usize,
    action: usize,
    reward: f64,
    next: NextRef,
}

/// A transition batch compiled against a feature map and a prior policy,
/// ready for repeated loss and gradient evaluation.
#[derive(Debug, Clone)]
pub struct PreparedBatch {
    states: Vec<PreparedState>,
    pairs: Vec<PreparedPair>,
    /// Initial-state weights (summing to one) for the (1 − γ) term. Empty
    /// when the discount is one.
    init: Vec<(f64, usize)>,
    n_actions: usize,
    block_dim: usize,
    gamma: f64,
    pub eta: f64,
    pub alpha: f64,
}

/// Per-θ tables for one batch: soft values and tilted-policy
/// log-probabilities for every deduplicated state, plus the per-transition
/// errors Δ̂ (or their expected-next-state form).
pub(crate) struct BatchEval {
    pub v: Vec<f64>,
    pub log_pi: Vec<f64>,
    pub delta: Vec<f64>,
}

impl PreparedBatch {
    /// Compile a tabular batch. The prior policy supplies both the soft
    /// value weights and the tilted-policy reference; the initial
    /// distribution comes from the MDP exactly (not from the batch's
    /// initial-state draws). With `expected_next` the continuation value
    /// of each pair is averaged over the true next-state distribution.
    pub fn from_tabular(
        batch: &TransitionBatch,
        mdp: &TabularMdp,
        prior: &StationaryPolicy,
        eta: f64,
        alpha: f64,
        expected_next: bool,
    ) -> Result<Self, SaddleError> {
        if batch.is_empty() {
            return Err(SaddleError::EmptyBatch);
        }
        if prior.n_states() != mdp.n_states() || prior.n_actions() != mdp.n_actions() {
            return Err(SaddleError::DimensionMismatch("prior policy shape".into()));
        }
        check_temperatures(eta, alpha)?;
        let s = mdp.n_states();
        let a_n = mdp.n_actions();
        let mut index_of: Vec<Option<usize>> = vec![None; s];
        let mut states: Vec<PreparedState> = Vec::new();
        let mut intern = |x: usize, states: &mut Vec<PreparedState>| -> usize {
            if let Some(i) = index_of[x] {
                return i;
            }
            let mut feats = vec![0.0; s];
            feats[x] = 1.0;
            let i = states.len();
            states.push(PreparedState { feats, prior: prior.row(x).to_vec() });
            index_of[x] = Some(i);
            i
        };
        let mut pairs = Vec::with_capacity(batch.len());
        for tr in &batch.entries {
            if tr.state >= s || tr.next_state >= s || tr.action >= a_n {
                return Err(SaddleError::DimensionMismatch("transition indexes".into()));
            }
            let state = intern(tr.state, &mut states);
            let next = if tr.terminal {
                // A terminal continuation contributes nothing — the cutoff
                // is certain, so this holds in expected mode too. Give the
                // pair a zero-feature entry of its own.
                let i = states.len();
                states.push(PreparedState {
                    feats: vec![0.0; s],
                    prior: vec![1.0 / a_n as f64; a_n],
                });
                NextRef::Sampled(i)
            } else if expected_next {
                let row = mdp.transition_row(tr.state, tr.action);
                let mut support = Vec::new();
                for (y, &p) in row.iter().enumerate() {
                    if p > 0.0 {
                        support.push((p, intern(y, &mut states)));
                    }
                }
                NextRef::Expected(support)
            } else {
                NextRef::Sampled(intern(tr.next_state, &mut states))
            };
            pairs.push(PreparedPair { state, action: tr.action, reward: tr.reward, next });
        }
        let mut init = Vec::new();
        if mdp.discount() < 1.0 {
            for (x, &w) in mdp.initial_dist().iter().enumerate() {
                if w > 0.0 {
                    init.push((w, intern(x, &mut states)));
                }
            }
        }
        Ok(PreparedBatch {
            states,
            pairs,
            init,
            n_actions: a_n,
            block_dim: s,
            gamma: mdp.discount(),
            eta,
            alpha,
        })
    }

    /// Compile simulator transitions: raw state vectors run through the
    /// feature map, a shared prior given by tilting the uniform policy with
    /// `alpha·Q_prior` (the accumulated-policy representation), terminal
    /// next states mapped to the zero block. `initial_states` weights the
    /// (1 − γ) term uniformly; pass an empty slice when the discount is 1.
    #[allow(clippy::too_many_arguments)]
    pub fn from_simulator(
        steps: &[(Vec<f64>, usize, f64, Vec<f64>, bool)],
        initial_states: &[Vec<f64>],
        fmap: &FeatureMap,
        theta_prior: &Theta,
        gamma: f64,
        eta: f64,
        alpha: f64,
    ) -> Result<Self, SaddleError> {
        if steps.is_empty() {
            return Err(SaddleError::EmptyBatch);
        }
        check_temperatures(eta, alpha)?;
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(SaddleError::BadParameter(format!("discount {gamma}")));
        }
        let a_n = fmap.n_actions();
        let p = fmap.block_dim();
        let mut states: Vec<PreparedState> = Vec::new();
        let mut push_state = |vec: &[f64], terminal: bool| -> Result<usize, SaddleError> {
            let feats = fmap
                .state_block_vec(vec, terminal)
                .map_err(|e| SaddleError::DimensionMismatch(e.to_string()))?;
            if theta_prior.len() != feats.len() * a_n {
                return Err(SaddleError::DimensionMismatch("prior theta length".into()));
            }
            let q_prior = q_row(theta_prior, &feats, a_n);
            let logits: Vec<f64> = q_prior.iter().map(|q| alpha * q).collect();
            let prior = softmax(&logits);
            states.push(PreparedState { feats, prior });
            Ok(states.len() - 1)
        };
        let mut pairs = Vec::with_capacity(steps.len());
        for (state, action, reward, next_state, terminal) in steps {
            if *action >= a_n {
                return Err(SaddleError::DimensionMismatch("action index".into()));
            }
            let si = push_state(state, false)?;
            let ni = push_state(next_state, *terminal)?;
            pairs.push(PreparedPair {
                state: si,
                action: *action,
                reward: *reward,
                next: NextRef::Sampled(ni),
            });
        }
        let mut init = Vec::new();
        if gamma < 1.0 {
            if initial_states.is_empty() {
                return Err(SaddleError::BadParameter(
                    "a discounted batch needs initial states for the (1 - gamma) term".into(),
                ));
            }
            let w = 1.0 / initial_states.len() as f64;
            for x in initial_states {
                init.push((w, push_state(x, false)?));
            }
        }
        Ok(PreparedBatch {
            states,
            pairs,
            init,
            n_actions: a_n,
            block_dim: p,
            gamma,
            eta,
            alpha,
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn theta_dim(&self) -> usize {
        self.block_dim * self.n_actions
    }

    fn check_theta(&self, theta: &Theta) -> Result<(), SaddleError> {
        if theta.len() != self.theta_dim() {
            return Err(SaddleError::DimensionMismatch(format!(
                "theta has {} entries, expected {}",
                theta.len(),
                self.theta_dim()
            )));
        }
        Ok(())
    }

    fn check_z(&self, z: &[f64]) -> Result<(), SaddleError> {
        if z.len() != self.pairs.len() {
            return Err(SaddleError::DimensionMismatch(format!(
                "z has {} entries, expected {}",
                z.len(),
                self.pairs.len()
            )));
        }
        let mut sum = 0.0;
        for &w in z {
            if !(w >= 0.0) {
                return Err(SaddleError::NotADistribution(format!("negative weight {w}")));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > 1e-6 {
            return Err(SaddleError::NotADistribution(format!("weights sum to {sum}")));
        }
        Ok(())
    }

    pub(crate) fn eval(&self, theta: &Theta) -> BatchEval {
        let a_n = self.n_actions;
        let n_states = self.states.len();
        let mut q = vec![0.0; n_states * a_n];
        let mut v = vec![0.0; n_states];
        let mut log_pi = vec![f64::NEG_INFINITY; n_states * a_n];
        for (i, st) in self.states.iter().enumerate() {
            let row = q_row(theta, &st.feats, a_n);
            v[i] = soft_value(&row, &st.prior, self.alpha);
            for a in 0..a_n {
                if st.prior[a] > 0.0 {
                    log_pi[i * a_n + a] = st.prior[a].ln() + self.alpha * (row[a] - v[i]);
                }
                q[i * a_n + a] = row[a];
            }
        }
        let delta = self
            .pairs
            .iter()
            .map(|pair| {
                let cont = match &pair.next {
                    NextRef::Sampled(i) => v[*i],
                    NextRef::Expected(support) => {
                        support.iter().map(|(p, i)| p * v[*i]).sum()
                    }
                };
                pair.reward + self.gamma * cont - q[pair.state * a_n + pair.action]
            })
            .collect();
        BatchEval { v, log_pi, delta }
    }

    /// The per-transition errors Δ̂_θ for the whole batch.
    pub fn empirical_errors(&self, theta: &Theta) -> Result<Vec<f64>, SaddleError> {
        self.check_theta(theta)?;
        Ok(self.eval(theta).delta)
    }

    /// The empirical loss this batch's saddle objective maximizes to.
    pub fn empirical_loss(&self, theta: &Theta) -> Result<f64, SaddleError> {
        self.check_theta(theta)?;
        let eval = self.eval(theta);
        let logits: Vec<f64> = eval.delta.iter().map(|d| self.eta * d).collect();
        let lse = log_sum_exp(&logits) - (self.pairs.len() as f64).ln();
        Ok(lse / self.eta + self.init_term(&eval.v))
    }

    fn init_term(&self, v: &[f64]) -> f64 {
        if self.gamma >= 1.0 {
            return 0.0;
        }
        (1.0 - self.gamma) * self.init.iter().map(|(w, i)| w * v[*i]).sum::<f64>()
    }

    /// Accumulate `coef · Σ_a π_θ(a|state)·φ(state, a)` into `grad`.
    fn add_tilted_features(&self, grad: &mut [f64], state: usize, coef: f64, eval: &BatchEval) {
        let a_n = self.n_actions;
        let st = &self.states[state];
        for a in 0..a_n {
            let lp = eval.log_pi[state * a_n + a];
            if lp == f64::NEG_INFINITY {
                continue;
            }
            let c = coef * lp.exp();
            if c == 0.0 {
                continue;
            }
            for (j, &f) in st.feats.iter().enumerate() {
                if f != 0.0 {
                    grad[j * a_n + a] += c * f;
                }
            }
        }
    }

    fn sub_pair_features(&self, grad: &mut [f64], pair: &PreparedPair, coef: f64) {
        let a_n = self.n_actions;
        let st = &self.states[pair.state];
        for (j, &f) in st.feats.iter().enumerate() {
            if f != 0.0 {
                grad[j * a_n + pair.action] -= coef * f;
            }
        }
    }
}

fn check_temperatures(eta: f64, alpha: f64) -> Result<(), SaddleError> {
    if !(eta > 0.0 && eta.is_finite()) || !(alpha > 0.0 && alpha.is_finite()) {
        return Err(SaddleError::BadParameter(format!(
            "eta {eta} and alpha {alpha} must be positive"
        )));
    }
    Ok(())
}

/// S(θ, z) = Σ_n z(n)·(Δ̂_n − (1/η)·log(N·z(n))) + (1 − γ)·⟨ν₀, V_θ⟩,
/// with 0·log 0 = 0.
pub fn s_objective(theta: &Theta, z: &[f64], batch: &PreparedBatch) -> Result<f64, SaddleError> {
    batch.check_theta(theta)?;
    batch.check_z(z)?;
    let eval = batch.eval(theta);
    Ok(s_objective_from_eval(z, batch, &eval))
}

fn s_objective_from_eval(z: &[f64], batch: &PreparedBatch, eval: &BatchEval) -> f64 {
    let n = z.len() as f64;
    let mut sum = 0.0;
    for (zi, di) in z.iter().zip(&eval.delta) {
        if *zi > 0.0 {
            sum += zi * (di - (n * zi).ln() / batch.eta);
        }
    }
    sum + batch.init_term(&eval.v)
}

/// The maximizing sampler distribution z*(n) ∝ exp(η·Δ̂_θ(ξ_n)).
pub fn best_response(theta: &Theta, batch: &PreparedBatch) -> Result<Vec<f64>, SaddleError> {
    batch.check_theta(theta)?;
    let eval = batch.eval(theta);
    let logits: Vec<f64> = eval.delta.iter().map(|d| batch.eta * d).collect();
    Ok(softmax(&logits))
}

/// The sampler's ascent direction h(n) = Δ̂_n − (1/η)·log(N·z(n)). Every
/// weight must be positive: the multiplicative update can never leave a
/// zero coordinate, so a zero weight means the sampler was mis-seeded.
pub fn sampler_grad(
    theta: &Theta,
    z: &[f64],
    batch: &PreparedBatch,
) -> Result<Vec<f64>, SaddleError> {
    batch.check_theta(theta)?;
    batch.check_z(z)?;
    if let Some(index) = z.iter().position(|w| *w <= 0.0) {
        return Err(SaddleError::ZeroSamplerWeight { index });
    }
    let eval = batch.eval(theta);
    let n = z.len() as f64;
    Ok(z.iter()
        .zip(&eval.delta)
        .map(|(zi, di)| di - (n * zi).ln() / batch.eta)
        .collect())
}

/// Exponentiated-gradient ascent step z'(n) ∝ z(n)·exp(β'·h(n)),
/// normalized with a shifted exponential. With β' = η and h from
/// [`sampler_grad`] this lands on the best response in a single step.
pub fn eg_update(z: &[f64], h: &[f64], beta_prime: f64) -> Result<Vec<f64>, SaddleError> {
    if z.len() != h.len() {
        return Err(SaddleError::DimensionMismatch(format!(
            "z has {} entries, h has {}",
            z.len(),
            h.len()
        )));
    }
    if !(beta_prime > 0.0 && beta_prime.is_finite()) {
        return Err(SaddleError::BadParameter(format!("step size {beta_prime}")));
    }
    let logits: Vec<f64> = z
        .iter()
        .zip(h)
        .map(|(zi, hi)| if *zi > 0.0 { zi.ln() + beta_prime * hi } else { f64::NEG_INFINITY })
        .collect();
    Ok(softmax(&logits))
}

/// The exact learner gradient ∇_θ S(θ, z):
///
/// ```text
/// Σ_n z(n)·(γ·Σ_a π_θ(a|X'_n)·φ(X'_n, a) − φ(X_n, A_n))
/// + (1 − γ)·Σ_x̄ ν₀(x̄)·Σ_a π_θ(a|x̄)·φ(x̄, a),
/// ```
///
/// where π_θ is the prior tilted by exp(α·Q_θ).
pub fn learner_grad_exact(
    theta: &Theta,
    z: &[f64],
    batch: &PreparedBatch,
) -> Result<Theta, SaddleError> {
    batch.check_theta(theta)?;
    batch.check_z(z)?;
    let eval = batch.eval(theta);
    let mut grad = vec![0.0; batch.theta_dim()];
    for (pair, &zi) in batch.pairs.iter().zip(z) {
        if zi == 0.0 {
            continue;
        }
        match &pair.next {
            NextRef::Sampled(i) => {
                batch.add_tilted_features(&mut grad, *i, batch.gamma * zi, &eval)
            }
            NextRef::Expected(support) => {
                for (p, i) in support {
                    batch.add_tilted_features(&mut grad, *i, batch.gamma * zi * p, &eval);
                }
            }
        }
        batch.sub_pair_features(&mut grad, pair, zi);
    }
    if batch.gamma < 1.0 {
        for (w, i) in &batch.init {
            batch.add_tilted_features(&mut grad, *i, (1.0 - batch.gamma) * w, &eval);
        }
    }
    Ok(Theta(grad))
}

/// One-sample estimate of the learner gradient: draw a transition index
/// from z, a next action from the tilted policy at its next state, and an
/// initial state from ν₀ with another tilted action. Its expectation over
/// the three draws is [`learner_grad_exact`].
pub fn learner_grad_sampled(
    theta: &Theta,
    z: &[f64],
    batch: &PreparedBatch,
    rng: &mut ChaCha8Rng,
) -> Result<Theta, SaddleError> {
    batch.check_theta(theta)?;
    batch.check_z(z)?;
    let eval = batch.eval(theta);
    let a_n = batch.n_actions;
    let mut grad = vec![0.0; batch.theta_dim()];
    let n = sample_index(z, rng.gen::<f64>());
    let pair = &batch.pairs[n];
    let next = match &pair.next {
        NextRef::Sampled(i) => *i,
        NextRef::Expected(support) => {
            let probs: Vec<f64> = support.iter().map(|(p, _)| *p).collect();
            support[sample_index(&probs, rng.gen::<f64>())].1
        }
    };
    let pi_next: Vec<f64> =
        (0..a_n).map(|a| eval.log_pi[next * a_n + a].exp()).collect();
    let a_next = sample_index(&pi_next, rng.gen::<f64>());
    batch.add_one_feature(&mut grad, next, a_next, batch.gamma);
    batch.sub_pair_features(&mut grad, pair, 1.0);
    if batch.gamma < 1.0 {
        let init_w: Vec<f64> = batch.init.iter().map(|(w, _)| *w).collect();
        let x_bar = batch.init[sample_index(&init_w, rng.gen::<f64>())].1;
        let pi_bar: Vec<f64> =
            (0..a_n).map(|a| eval.log_pi[x_bar * a_n + a].exp()).collect();
        let a_bar = sample_index(&pi_bar, rng.gen::<f64>());
        batch.add_one_feature(&mut grad, x_bar, a_bar, 1.0 - batch.gamma);
    }
    Ok(Theta(grad))
}

impl PreparedBatch {
    fn add_one_feature(&self, grad: &mut [f64], state: usize, action: usize, coef: f64) {
        if coef == 0.0 {
            return;
        }
        let a_n = self.n_actions;
        for (j, &f) in self.states[state].feats.iter().enumerate() {
            if f != 0.0 {
                grad[j * a_n + action] += coef * f;
            }
        }
    }
}

/// How the learner turns its gradient into a θ step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnerRule {
    Sgd,
    AdaptiveMoment,
}

/// How the sampler distribution is driven.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerRule {
    ExponentiatedGradient,
    BestResponse,
    Uniform,
}

/// Whether the learner sees the exact gradient or the one-sample estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradMode {
    Exact,
    Sampled,
}

#[derive(Debug, Clone)]
pub struct InnerOptConfig {
    /// Number of alternating steps T.
    pub steps: usize,
    /// Learner step size β.
    pub beta: f64,
    /// Sampler step size β' (exponentiated-gradient only).
    pub beta_prime: f64,
    pub learner: LearnerRule,
    pub sampler: SamplerRule,
    pub grad: GradMode,
}

impl InnerOptConfig {
    fn validate(&self) -> Result<(), SaddleError> {
        if self.steps > 0 && !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(SaddleError::BadParameter(format!("learner step size {}", self.beta)));
        }
        if self.sampler == SamplerRule::ExponentiatedGradient
            && !(self.beta_prime > 0.0 && self.beta_prime.is_finite())
        {
            return Err(SaddleError::BadParameter(format!(
                "sampler step size {}",
                self.beta_prime
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MinMaxOutcome {
    /// Average of the T + 1 learner iterates — the solver's answer.
    pub theta_avg: Theta,
    /// The last learner iterate (useful for warm starts).
    pub theta_last: Theta,
    /// The final sampler distribution.
    pub z: Vec<f64>,
    /// S(θ_τ, z_τ) after each step, starting with the initial point.
    pub objective_trace: Vec<f64>,
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl AdamState {
    fn new(dim: usize) -> Self {
        AdamState { m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }

    fn step(&mut self, theta: &mut Theta, grad: &[f64], beta: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t as i32);
        let c2 = 1.0 - B2.powi(self.t as i32);
        for i in 0..grad.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            theta.0[i] -= beta * m_hat / (v_hat.sqrt() + EPS);
        }
    }
}

/// Run T alternating steps on the saddle objective: the sampler and the
/// learner both move from the previous joint state, and the returned θ is
/// the average of all T + 1 learner iterates. The sampler starts uniform;
/// the learner starts from `init_theta` (zeros when absent), which lets an
/// outer loop warm-start from its previous solution.
pub fn minmax_solve(
    batch: &PreparedBatch,
    cfg: &InnerOptConfig,
    init_theta: Option<&Theta>,
    rng: &mut ChaCha8Rng,
) -> Result<MinMaxOutcome, SaddleError> {
    cfg.validate()?;
    let dim = batch.theta_dim();
    let mut theta = match init_theta {
        Some(t) => {
            batch.check_theta(t)?;
            t.clone()
        }
        None => Theta::zeros(dim),
    };
    let n = batch.len();
    let mut z = vec![1.0 / n as f64; n];
    let mut sum = theta.clone();
    let mut adam = AdamState::new(dim);
    let mut trace = Vec::with_capacity(cfg.steps + 1);
    trace.push(s_objective_from_eval(&z, batch, &batch.eval(&theta)));
    for _ in 0..cfg.steps {
        let next_z = match cfg.sampler {
            SamplerRule::ExponentiatedGradient => {
                let h = sampler_grad(&theta, &z, batch)?;
                eg_update(&z, &h, cfg.beta_prime)?
            }
            SamplerRule::BestResponse => best_response(&theta, batch)?,
            SamplerRule::Uniform => z.clone(),
        };
        let grad = match cfg.grad {
            GradMode::Exact => learner_grad_exact(&theta, &z, batch)?,
            GradMode::Sampled => learner_grad_sampled(&theta, &z, batch, rng)?,
        };
        match cfg.learner {
            LearnerRule::Sgd => theta.axpy(-cfg.beta, &grad),
            LearnerRule::AdaptiveMoment => adam.step(&mut theta, grad.as_slice(), cfg.beta),
        }
        z = next_z;
        sum.axpy(1.0, &theta);
        trace.push(s_objective_from_eval(&z, batch, &batch.eval(&theta)));
    }
    let mut theta_avg = sum;
    theta_avg.scale(1.0 / (cfg.steps + 1) as f64);
    Ok(MinMaxOutcome { theta_avg, theta_last: theta, z, objective_trace: trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs;
    use crate::lbe::{elbe, lbe, selbe, LossContext};
    use crate::mdp::{sample_batch, Transition};
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn two_state_setup(
        gamma: f64,
        n: usize,
        seed: u64,
    ) -> (TabularMdp, StationaryPolicy, TransitionBatch) {
        let mdp = envs::two_state_stochastic().with_discount(gamma).unwrap();
        let prior = StationaryPolicy::uniform(2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = sample_batch(&mdp, &prior, n, &mut rng).unwrap();
        (mdp, prior, batch)
    }

    fn random_theta(dim: usize, rng: &mut ChaCha8Rng) -> Theta {
        Theta((0..dim).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect())
    }

    #[test]
    fn prepared_loss_agrees_with_the_direct_empirical_loss() {
        let (mdp, prior, batch) = two_state_setup(0.9, 40, 3);
        let ctx = LossContext::new(&mdp, &prior, None, 2.0, 0.7).unwrap();
        let prep = PreparedBatch::from_tabular(&batch, &mdp, &prior, 2.0, 0.7, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let theta = random_theta(4, &mut rng);
            assert_relative_eq!(
                prep.empirical_loss(&theta).unwrap(),
                elbe(&theta, &batch, &ctx).unwrap(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn prepared_expected_mode_agrees_with_the_semi_empirical_loss() {
        let (mdp, prior, batch) = two_state_setup(0.9, 40, 5);
        let ctx = LossContext::new(&mdp, &prior, None, 1.3, 0.7).unwrap();
        let prep = PreparedBatch::from_tabular(&batch, &mdp, &prior, 1.3, 0.7, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let theta = random_theta(4, &mut rng);
            assert_relative_eq!(
                prep.empirical_loss(&theta).unwrap(),
                selbe(&theta, &batch, &ctx).unwrap(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn best_response_maximizes_and_attains_the_empirical_loss() {
        let (_, _, batch) = two_state_setup(0.9, 24, 7);
        let mdp = envs::two_state_stochastic().with_discount(0.9).unwrap();
        let prior = StationaryPolicy::uniform(2, 2);
        let prep = PreparedBatch::from_tabular(&batch, &mdp, &prior, 1.5, 0.8, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let theta = random_theta(4, &mut rng);
            let z_star = best_response(&theta, &prep).unwrap();
            let at_star = s_objective(&theta, &z_star, &prep).unwrap();
            assert_relative_eq!(
                at_star,
                prep.empirical_loss(&theta).unwrap(),
                epsilon = 1e-10
            );
            // Any other distribution scores no higher.
            for _ in 0..20 {
                let raw: Vec<f64> = (0..prep.len()).map(|_| rng.gen::<f64>() + 1e-3).collect();
                let total: f64 = raw.iter().sum();
                let z: Vec<f64> = raw.iter().map(|w| w / total).collect();
                assert!(s_objective(&theta, &z, &prep).unwrap() <= at_star + 1e-10);
            }
        }
    }

    #[test]
    fn uniform_sampler_scores_the_mean_error_plus_initial_term() {
        let (mdp, prior, batch) = two_state_setup(0.9, 16, 9);
        let prep = PreparedBatch::from_tabular(&batch, &mdp, &prior, 2.0, 1.0, false).unwrap();
        let theta = Theta(vec![0.3, -0.1, 0.5, 0.2]);
        let z = vec![1.0 / 16.0; 16];
        let errs = prep.empirical_errors(&theta).unwrap();
        let mean: f64 = errs.iter().sum::<f64>() / 16.0;
        let ctx = LossContext::new(&mdp, &prior, None, 2.0, 1.0).unwrap();
        let v0 = crate::lbe::value_function(
            &theta,
            &FeatureMap::tabular(2, 2),
            &prior,
            1.0,
            0,
        )
        .unwrap();
        let _ = ctx;
        assert_relative_eq!(
            s_objective(&theta, &z, &prep).unwrap(),
            mean + 0.1 * v0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn best_response_recovers_the_tilted_weights_on_a_crafted_batch() {
        // θ = 0 makes Δ̂ equal the rewards; with η = 1 and rewards
        // (ln 3, 0) the best response is (0.75, 0.25).
        let mdp = envs::two_state_deterministic()
            .with_rewards(vec![3f64.ln(), 0.0, 0.0, 0.0])
            .unwrap()
            .with_discount(0.9)
            .unwrap();
        let prior = StationaryPolicy::uniform(2, 2);
        let batch = TransitionBatch {
            entries: vec![
                Transition { state: 0, action: 0, reward: 3f64.ln(), next_state: 0, terminal: false },
                Transition { state: 0, action: 1, reward: 0.0, next_state: 1, terminal: false },
            ],
            initial_states: vec![0, 0],
        };
        let prep = PreparedBatch::from_tabular(&batch, &mdp, &prior, 1.0, 1.0, false).unwrap();
        let theta = Theta::zeros(4);
        // With θ = 0 every soft value is 0, so Δ̂ is exactly the reward.
        let errs = prep.empirical_errors(&theta).unwrap();
        assert_relative_eq!(errs[0], 3f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(errs[1], 0.0, epsilon = 1e-12);
        let z = best_response(&theta, &prep).unwrap();
        assert_relative_eq!(z[0], 0.75, epsilon = 1e-12);
        assert_relative_eq!(z[1], 0.25, epsilon = 1e-12);
        // At the best response the ascent direction is constant, so one
        // more multiplicative step changes nothing.
        let h = sampler_grad(&theta, &z, &prep).unwrap();
        assert_relative_eq!(h[0], h[1], epsilon = 1e-12);
        let z2 = eg_update(&z, &h, 0.37).unwrap();
        assert_relative_eq!(z2[0], 0.75, epsilon = 1e-12);
    }

    #[test]
    fn eg_with_step_equal_to_eta_jumps_to_the_best_response() {
        let (mdp, prior, batch) = two_state_setup(0.9, 12, 11);
        let prep = PreparedBatch::from_tabular(&batch, &mdp, &prior, 2.5, 0.9, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let theta = random_theta(4, &mut rng);
        let z0 = vec![1.0 / 12.0; 12];
        let h = sampler_grad(&theta, &z0, &prep).unwrap();
        let one_step = eg_update(&z0, &h, 2.5).unwrap();
        let z_star = best_response(&theta, &prep).unwrap();
        for (a, b) in one_step.iter().zip(&z_star) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn eg_iterates_contract_to_the_best_response() {
        let (mdp, prior, batch) = two_state_setup(0.9, 20, 13);
        let eta = 2.0;
        let prep = PreparedBatch::from_tabular(&batch, &mdp, &prior, eta, 0.8, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let theta = random_theta(4, &mut rng);
        let z_star = best_response(&theta, &prep).unwrap();
        let mut z = vec![1.0 / 20.0; 20];
        let mut prev_obj = s_objective(&theta, &z, &prep).unwrap();
        for _ in 0..60 {
            let h = sampler_grad(&theta, &z, &prep).unwrap();
            z = eg_update(&z, &h, 0.6).unwrap();
            let obj = s_objective(&theta, &z, &prep).unwrap();
            assert!(obj >= prev_obj - 1e-12, "ascent broke: {prev_obj} -> {obj}");
            prev_obj = obj;
        }
        for (a, b) in z.iter().zip(&z_star) {
            assert!((a - b).abs() < 1e-6, "z {a} vs z* {b}");
        }
    }

    #[test]
    fn sampler_grad_refuses_zero_weights() {
        let (mdp, prior, batch) = two_state_setup(0.9, 4, 15);
        let prep = PreparedBatch::from_tabular(&batch, &mdp, &prior, 1.0, 1.0, false).unwrap();
        let z = vec![0.5, 0.5, 0.0, 0.0];
        assert_eq!(
            sampler_grad(&Theta::zeros(4), &z, &prep).unwrap_err(),
            SaddleError::ZeroSamplerWeight { index: 2 }
        );
    }

    #[test]
    fn learner_grad_exact_matches_finite_differences_of_the_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for gamma in [0.9, 1.0] {
            let mdp = envs::river_swim().with_discount(gamma).unwrap();
            let prior = StationaryPolicy::uniform(6, 2);
            let batch = if gamma < 1.0 {
                sample_batch(&mdp, &prior, 30, &mut rng).unwrap()
            } else {
                crate::mdp::sample_batch_episodic(&mdp, &prior, 30, 15, &mut rng).unwrap()
            };
            for expected_next in [false, true] {
                let prep =
                    PreparedBatch::from_tabular(&batch, &mdp, &prior, 1.7, 0.6, expected_next)
                        .unwrap();
                for _ in 0..5 {
                    let theta = random_theta(12, &mut rng);
                    let raw: Vec<f64> =
                        (0..prep.len()).map(|_| rng.gen::<f64>() + 0.05).collect();
                    let total: f64 = raw.iter().sum();
                    let z: Vec<f64> = raw.iter().map(|w| w / total).collect();
                    let grad = learner_grad_exact(&theta, &z, &prep).unwrap();
                    let mut probe = theta.clone();
                    for i in 0..12 {
                        let h = 1e-6;
                        let orig = probe.0[i];
                        probe.0[i] = orig + h;
                        let up = s_objective(&probe, &z, &prep).unwrap();
                        probe.0[i] = orig - h;
                        let down = s_objective(&probe, &z, &prep).unwrap();
                        probe.0[i] = orig;
                        let fd = (up - down) / (2.0 * h);
                        assert!(
                            (grad.as_slice()[i] - fd).abs() <= 1e-6 * fd.abs().max(1.0),
                            "component {i}: {} vs {fd} (gamma {gamma})",
                            grad.as_slice()[i]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn envelope_gradient_of_the_empirical_loss_uses_the_best_response() {
        // ∇ of max_z S(θ, z) at θ is the partial gradient at the maximizer.
        let (mdp, prior, batch) = two_state_setup(0.9, 25, 17);
        let prep = PreparedBatch::from_tabular(&batch, &mdp, &prior, 2.0, 0.9, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        for _ in 0..8 {
            let theta = random_theta(4, &mut rng);
            let z_star = best_response(&theta, &prep).unwrap();
            let grad = learner_grad_exact(&theta, &z_star, &prep).unwrap();
            let mut probe = theta.clone();
            for i in 0..4 {
                let h = 1e-6;
                let orig = probe.0[i];
                probe.0[i] = orig + h;
                let up = prep.empirical_loss(&probe).unwrap();
                probe.0[i] = orig - h;
                let down = prep.empirical_loss(&probe).unwrap();
                probe.0[i] = orig;
                let fd = (up - down) / (2.0 * h);
                assert!(
                    (grad.as_slice()[i] - fd).abs() <= 1e-5 * fd.abs().max(1.0),
                    "component {i}: {} vs {fd}",
                    grad.as_slice()[i]
                );
            }
        }
    }

    #[test]
    fn sampled_gradient_is_unbiased_for_the_exact_one() {
        let (mdp, prior, batch) = two_state_setup(0.9, 8, 19);
        let prep = PreparedBatch::from_tabular(&batch, &mdp, &prior, 1.5, 0.8, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let theta = random_theta(4, &mut rng);
        let raw: Vec<f64> = (0..8).map(|_| rng.gen::<f64>() + 0.1).collect();
        let total: f64 = raw.iter().sum();
        let z: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let exact = learner_grad_exact(&theta, &z, &prep).unwrap();
        let trials = 200_000;
        let mut mean = vec![0.0; 4];
        let mut sq = vec![0.0; 4];
        for _ in 0..trials {
            let g = learner_grad_sampled(&theta, &z, &prep, &mut rng).unwrap();
            for i in 0..4 {
                mean[i] += g.as_slice()[i];
                sq[i] += g.as_slice()[i] * g.as_slice()[i];
            }
        }
        for i in 0..4 {
            let m = mean[i] / trials as f64;
            let var = (sq[i] / trials as f64 - m * m).max(0.0);
            let sigma = (var / trials as f64).sqrt();
            assert!(
                (m - exact.as_slice()[i]).abs() <= 3.0 * sigma + 1e-9,
                "component {i}: mc {m} vs exact {} (sigma {sigma})",
                exact.as_slice()[i]
            );
        }
    }

    #[test]
    fn minmax_average_equals_the_mean_of_replayed_iterates() {
        let (mdp, prior, batch) = two_state_setup(0.9, 16, 21);
        let prep = PreparedBatch::from_tabular(&batch, &mdp, &prior, 1.0, 1.0, false).unwrap();
        let cfg = InnerOptConfig {
            steps: 7,
            beta: 0.2,
            beta_prime: 0.4,
            learner: LearnerRule::Sgd,
            sampler: SamplerRule::ExponentiatedGradient,
            grad: GradMode::Exact,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let out = minmax_solve(&prep, &cfg, None, &mut rng).unwrap();
        // Replay the deterministic recursion by hand.
        let mut theta = Theta::zeros(4);
        let mut z = vec![1.0 / 16.0; 16];
        let mut iterates = vec![theta.clone()];
        for _ in 0..7 {
            let h = sampler_grad(&theta, &z, &prep).unwrap();
            let next_z = eg_update(&z, &h, 0.4).unwrap();
            let g = learner_grad_exact(&theta, &z, &prep).unwrap();
            theta.axpy(-0.2, &g);
            z = next_z;
            iterates.push(theta.clone());
        }
        for i in 0..4 {
            let mean: f64 = iterates.iter().map(|t| t.as_slice()[i]).sum::<f64>() / 8.0;
            assert_relative_eq!(out.theta_avg.as_slice()[i], mean, epsilon = 1e-12);
            assert_relative_eq!(
                out.theta_last.as_slice()[i],
                iterates[7].as_slice()[i],
                epsilon = 1e-12
            );
        }
        assert_eq!(out.objective_trace.len(), 8);
    }

    #[test]
    fn minmax_drives_the_empirical_loss_near_its_minimum() {
        let (mdp, prior, batch) = two_state_setup(0.9, 60, 23);
        let prep = PreparedBatch::from_tabular(&batch, &mdp, &prior, 0.5, 0.5, false).unwrap();
        let cfg = InnerOptConfig {
            steps: 2000,
            beta: 0.25,
            beta_prime: 0.25,
            learner: LearnerRule::Sgd,
            sampler: SamplerRule::ExponentiatedGradient,
            grad: GradMode::Exact,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let out = minmax_solve(&prep, &cfg, None, &mut rng).unwrap();
        let start = prep.empirical_loss(&Theta::zeros(4)).unwrap();
        let end = prep.empirical_loss(&out.theta_avg).unwrap();
        assert!(end < start, "no progress: {start} -> {end}");
        // At the minimum the envelope gradient vanishes.
        let z_star = best_response(&out.theta_avg, &prep).unwrap();
        let g = learner_grad_exact(&out.theta_avg, &z_star, &prep).unwrap();
        assert!(
            crate::numeric::inf_norm(g.as_slice()) < 0.01,
            "stationarity gap {}",
            crate::numeric::inf_norm(g.as_slice())
        );
    }

    #[test]
    fn best_response_sampler_with_adam_reaches_the_same_loss_as_sgd() {
        let (mdp, prior, batch) = two_state_setup(0.9, 40, 25);
        let prep = PreparedBatch::from_tabular(&batch, &mdp, &prior, 1.0, 1.0, false).unwrap();
        let sgd = InnerOptConfig {
            steps: 20_000,
            beta: 0.25,
            beta_prime: 0.1,
            learner: LearnerRule::Sgd,
            sampler: SamplerRule::BestResponse,
            grad: GradMode::Exact,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let reference = minmax_solve(&prep, &sgd, None, &mut rng).unwrap();
        let floor = prep.empirical_loss(&reference.theta_last).unwrap();
        let adam = InnerOptConfig {
            steps: 3000,
            beta: 0.05,
            learner: LearnerRule::AdaptiveMoment,
            ..sgd
        };
        let out = minmax_solve(&prep, &adam, None, &mut rng).unwrap();
        let achieved = prep.empirical_loss(&out.theta_avg).unwrap();
        assert!(achieved >= floor - 1e-9, "below the optimum? {achieved} < {floor}");
        assert!(achieved - floor < 1e-3, "adam stalled: {achieved} vs floor {floor}");
    }

    #[test]
    fn uniform_sampler_leaves_z_uniform() {
        let (mdp, prior, batch) = two_state_setup(0.9, 10, 27);
        let prep = PreparedBatch::from_tabular(&batch, &mdp, &prior, 1.0, 1.0, false).unwrap();
        let cfg = InnerOptConfig {
            steps: 20,
            beta: 0.1,
            beta_prime: 0.1,
            learner: LearnerRule::Sgd,
            sampler: SamplerRule::Uniform,
            grad: GradMode::Exact,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        let out = minmax_solve(&prep, &cfg, None, &mut rng).unwrap();
        for w in &out.z {
            assert_relative_eq!(*w, 0.1, epsilon = 1e-15);
        }
    }

    #[test]
    fn warm_start_is_respected() {
        let (mdp, prior, batch) = two_state_setup(0.9, 10, 29);
        let prep = PreparedBatch::from_tabular(&batch, &mdp, &prior, 1.0, 1.0, false).unwrap();
        let cfg = InnerOptConfig {
            steps: 0,
            beta: 0.1,
            beta_prime: 0.1,
            learner: LearnerRule::Sgd,
            sampler: SamplerRule::ExponentiatedGradient,
            grad: GradMode::Exact,
        };
        let init = Theta(vec![0.5, -0.5, 0.25, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let out = minmax_solve(&prep, &cfg, Some(&init), &mut rng).unwrap();
        assert_eq!(out.theta_avg.as_slice(), init.as_slice());
    }

    #[test]
    fn lbe_equals_empirical_loss_on_exhaustive_deterministic_batch() {
        // On a deterministic cycle visited with its exact occupancy
        // frequencies the exact and empirical losses coincide, tying the
        // saddle machinery back to the closed-form loss.
        let mdp = TabularMdp::new(
            2,
            1,
            vec![0.0, 1.0, 1.0, 0.0],
            vec![1.0, -0.5],
            1.0,
            vec![1.0, 0.0],
        )
        .unwrap();
        let prior = StationaryPolicy::uniform(2, 1);
        let occ = crate::mdp::finite_horizon_occupancy(&mdp, &prior, 2).unwrap();
        let batch = TransitionBatch {
            entries: vec![
                Transition { state: 0, action: 0, reward: 1.0, next_state: 1, terminal: false },
                Transition { state: 1, action: 0, reward: -0.5, next_state: 0, terminal: false },
            ],
            initial_states: vec![0, 0],
        };
        let prep = PreparedBatch::from_tabular(&batch, &mdp, &prior, 1.7, 1.0, false).unwrap();
        let ctx = LossContext::new(&mdp, &prior, Some(&occ), 1.7, 1.0).unwrap();
        let theta = Theta(vec![0.8, -0.3]);
        assert_relative_eq!(
            prep.empirical_loss(&theta).unwrap(),
            lbe(&theta, &ctx).unwrap(),
            epsilon = 1e-12
        );
        let z_star = best_response(&theta, &prep).unwrap();
        assert_relative_eq!(
            s_objective(&theta, &z_star, &prep).unwrap(),
            lbe(&theta, &ctx).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn simulator_batches_handle_terminals_and_match_tabular_features() {
        // A ReLU map over 2-dimensional states; terminal next states must
        // contribute zero value and zero features.
        let fmap = FeatureMap::random_relu(2, 8, 2, 99);
        let steps = vec![
            (vec![0.1, 0.2], 0usize, 1.0, vec![0.3, -0.1], false),
            (vec![0.3, -0.1], 1usize, 0.5, vec![0.0, 0.0], true),
        ];
        let prep = PreparedBatch::from_simulator(
            &steps,
            &[],
            &fmap,
            &Theta::zeros(16),
            1.0,
            1.0,
            1.0,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let theta = random_theta(16, &mut rng);
        let errs = prep.empirical_errors(&theta).unwrap();
        // Terminal pair: Δ̂ = r − Q(x, a) with no continuation.
        let feats = fmap.state_block_vec(&[0.3, -0.1], false).unwrap();
        let q = q_row(&theta, &feats, 2);
        assert_relative_eq!(errs[1], 0.5 - q[1], epsilon = 1e-12);
    }

    #[test]
    fn discounted_simulator_batch_requires_initial_states() {
        let fmap = FeatureMap::random_relu(2, 4, 2, 1);
        let steps = vec![(vec![0.0, 0.0], 0usize, 0.0, vec![0.1, 0.1], false)];
        let err = PreparedBatch::from_simulator(
            &steps,
            &[],
            &fmap,
            &Theta::zeros(8),
            0.9,
            1.0,
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, SaddleError::BadParameter(_)));
    }
}
