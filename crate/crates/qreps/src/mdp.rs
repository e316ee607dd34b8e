//! Tabular Markov decision processes, stationary policies, occupancy
//! measures, and transition batches.
//!
//! States and actions are dense indices. Transition kernels are stored
//! row-major as `P[(x·A + a)·S + x']`, rewards as `r[x·A + a]`. The
//! discount lives on the MDP itself; `γ = 1` is treated as fixed-horizon
//! episodic and is served by the `*_horizon` variants of the evaluation
//! routines.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

const PROB_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MdpError {
    #[error("transition row for state {state}, action {action} sums to {sum}, expected 1")]
    NonStochasticRow { state: usize, action: usize, sum: f64 },
    #[error("negative probability {value} at state {state}, action {action}, next {next}")]
    NegativeProbability { state: usize, action: usize, next: usize, value: f64 },
    #[error("initial distribution invalid: {reason}")]
    BadInitialDist { reason: String },
    #[error("discount must lie in (0, 1], got {0}")]
    BadDiscount(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("policy row for state {state} sums to {sum}, expected 1")]
    BadPolicyRow { state: usize, sum: f64 },
    #[error("operation requires discount < 1; use the horizon variant instead")]
    UndiscountedNeedsHorizon,
    #[error("linear system for the occupancy measure is singular")]
    SingularSystem,
    #[error("parse error: {0}")]
    Parse(String),
}

/// A finite MDP with dense transition and reward tables.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    discount: f64,
    initial_dist: Vec<f64>,
}

impl TabularMdp {
    /// Builds and validates an MDP. Transition rows must each sum to one
    /// (tolerance 1e-9) with nonnegative entries, the initial distribution
    /// must be a probability vector, and the discount must lie in (0, 1].
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
        initial_dist: Vec<f64>,
    ) -> Result<Self, MdpError> {
        if transition.len() != n_states * n_actions * n_states {
            return Err(MdpError::DimensionMismatch(format!(
                "transition table has {} entries, expected {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        if reward.len() != n_states * n_actions {
            return Err(MdpError::DimensionMismatch(format!(
                "reward table has {} entries, expected {}",
                reward.len(),
                n_states * n_actions
            )));
        }
        if initial_dist.len() != n_states {
            return Err(MdpError::DimensionMismatch(format!(
                "initial distribution has {} entries, expected {}",
                initial_dist.len(),
                n_states
            )));
        }
        let mdp = TabularMdp { n_states, n_actions, transition, reward, discount, initial_dist };
        mdp.validate()?;
        Ok(mdp)
    }

    /// Re-checks every structural invariant; `new` calls this internally.
    pub fn validate(&self) -> Result<(), MdpError> {
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(MdpError::BadDiscount(self.discount));
        }
        for x in 0..self.n_states {
            for a in 0..self.n_actions {
                let row = self.transition_row(x, a);
                let mut sum = 0.0;
                for (next, &p) in row.iter().enumerate() {
                    if p < -1e-12 || !p.is_finite() {
                        return Err(MdpError::NegativeProbability {
                            state: x,
                            action: a,
                            next,
                            value: p,
                        });
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > PROB_TOL {
                    return Err(MdpError::NonStochasticRow { state: x, action: a, sum });
                }
            }
        }
        let nu_sum: f64 = self.initial_dist.iter().sum();
        if self.initial_dist.iter().any(|&p| p < -1e-12 || !p.is_finite()) {
            return Err(MdpError::BadInitialDist { reason: "negative entry".into() });
        }
        if (nu_sum - 1.0).abs() > PROB_TOL {
            return Err(MdpError::BadInitialDist { reason: format!("sums to {nu_sum}") });
        }
        if self.reward.iter().any(|r| !r.is_finite()) {
            return Err(MdpError::DimensionMismatch("non-finite reward entry".into()));
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    /// P(x' | x, a).
    pub fn p(&self, x: usize, a: usize, next: usize) -> f64 {
        self.transition[(x * self.n_actions + a) * self.n_states + next]
    }

    /// The full row P(· | x, a).
    pub fn transition_row(&self, x: usize, a: usize) -> &[f64] {
        let base = (x * self.n_actions + a) * self.n_states;
        &self.transition[base..base + self.n_states]
    }

    /// r(x, a).
    pub fn r(&self, x: usize, a: usize) -> f64 {
        self.reward[x * self.n_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    /// Same MDP with a different discount (useful for studying an instance
    /// at several discounts without rebuilding the tables).
    pub fn with_discount(mut self, discount: f64) -> Result<Self, MdpError> {
        self.discount = discount;
        self.validate()?;
        Ok(self)
    }

    /// Same MDP with a different reward table.
    pub fn with_rewards(mut self, reward: Vec<f64>) -> Result<Self, MdpError> {
        if reward.len() != self.n_states * self.n_actions {
            return Err(MdpError::DimensionMismatch("reward table size".into()));
        }
        self.reward = reward;
        self.validate()?;
        Ok(self)
    }

    /// Serializes to the plain-text interchange format; see [`TabularMdp::from_text`].
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        format!(
            "tabular_mdp v1\nn_states {}\nn_actions {}\ndiscount {}\ntransition {}\nreward {}\ninitial_dist {}\n",
            self.n_states,
            self.n_actions,
            self.discount,
            join(&self.transition),
            join(&self.reward),
            join(&self.initial_dist),
        )
    }

    /// Parses the text format emitted by [`TabularMdp::to_text`]:
    /// a `tabular_mdp v1` header followed by `n_states`, `n_actions`,
    /// `discount`, and the flattened row-major `transition`, `reward`, and
    /// `initial_dist` arrays. Values round-trip exactly.
    pub fn from_text(text: &str) -> Result<Self, MdpError> {
        let mut n_states = None;
        let mut n_actions = None;
        let mut discount = None;
        let mut transition = None;
        let mut reward = None;
        let mut initial_dist = None;
        let mut saw_header = false;

        let parse_floats = |toks: &[&str]| -> Result<Vec<f64>, MdpError> {
            toks.iter()
                .map(|t| t.parse::<f64>().map_err(|e| MdpError::Parse(format!("bad float {t:?}: {e}"))))
                .collect()
        };

        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks[0] {
                "tabular_mdp" => {
                    if toks.get(1) != Some(&"v1") {
                        return Err(MdpError::Parse(format!("unsupported version in {line:?}")));
                    }
                    saw_header = true;
                }
                "n_states" => {
                    n_states = Some(
                        toks.get(1)
                            .and_then(|t| t.parse::<usize>().ok())
                            .ok_or_else(|| MdpError::Parse(format!("bad n_states line {line:?}")))?,
                    )
                }
                "n_actions" => {
                    n_actions = Some(
                        toks.get(1)
                            .and_then(|t| t.parse::<usize>().ok())
                            .ok_or_else(|| MdpError::Parse(format!("bad n_actions line {line:?}")))?,
                    )
                }
                "discount" => {
                    discount = Some(
                        toks.get(1)
                            .and_then(|t| t.parse::<f64>().ok())
                            .ok_or_else(|| MdpError::Parse(format!("bad discount line {line:?}")))?,
                    )
                }
                "transition" => transition = Some(parse_floats(&toks[1..])?),
                "reward" => reward = Some(parse_floats(&toks[1..])?),
                "initial_dist" => initial_dist = Some(parse_floats(&toks[1..])?),
                other => return Err(MdpError::Parse(format!("unknown field {other:?}"))),
            }
        }
        if !saw_header {
            return Err(MdpError::Parse("missing tabular_mdp v1 header".into()));
        }
        let missing = |f: &str| MdpError::Parse(format!("missing field {f}"));
        TabularMdp::new(
            n_states.ok_or_else(|| missing("n_states"))?,
            n_actions.ok_or_else(|| missing("n_actions"))?,
            transition.ok_or_else(|| missing("transition"))?,
            reward.ok_or_else(|| missing("reward"))?,
            discount.ok_or_else(|| missing("discount"))?,
            initial_dist.ok_or_else(|| missing("initial_dist"))?,
        )
    }
}

/// A stationary stochastic policy, one probability row per state.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl StationaryPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self, MdpError> {
        if probs.len() != n_states * n_actions {
            return Err(MdpError::DimensionMismatch(format!(
                "policy table has {} entries, expected {}",
                probs.len(),
                n_states * n_actions
            )));
        }
        for x in 0..n_states {
            let row = &probs[x * n_actions..(x + 1) * n_actions];
            if row.iter().any(|&p| p < -1e-12 || !p.is_finite()) {
                return Err(MdpError::BadPolicyRow { state: x, sum: f64::NAN });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(MdpError::BadPolicyRow { state: x, sum });
            }
        }
        Ok(StationaryPolicy { n_states, n_actions, probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        StationaryPolicy {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// Point-mass policy from one action index per state.
    pub fn deterministic(n_states: usize, n_actions: usize, actions: &[usize]) -> Result<Self, MdpError> {
        if actions.len() != n_states {
            return Err(MdpError::DimensionMismatch("one action per state required".into()));
        }
        let mut probs = vec![0.0; n_states * n_actions];
        for (x, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(MdpError::DimensionMismatch(format!("action {a} out of range")));
            }
            probs[x * n_actions + a] = 1.0;
        }
        Ok(StationaryPolicy { n_states, n_actions, probs })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// π(a | x).
    pub fn prob(&self, x: usize, a: usize) -> f64 {
        self.probs[x * self.n_actions + a]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.probs[x * self.n_actions..(x + 1) * self.n_actions]
    }

    pub fn sample_action(&self, x: usize, rng: &mut ChaCha8Rng) -> usize {
        crate::numeric::sample_index(self.row(x), rng.gen::<f64>())
    }

    /// `(1 - eps)·π + eps·uniform`: the same policy with every action kept
    /// above an `eps / |A|` floor, so data collection never starves a pair.
    pub fn mix_uniform(&self, eps: f64) -> Result<StationaryPolicy, MdpError> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(MdpError::BadInitialDist {
                reason: format!("mixing weight {eps} outside [0, 1]"),
            });
        }
        let floor = eps / self.n_actions as f64;
        let probs = self.probs.iter().map(|&p| (1.0 - eps) * p + floor).collect();
        StationaryPolicy::new(self.n_states, self.n_actions, probs)
    }
}

/// A normalized distribution over state-action pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeasure {
    n_states: usize,
    n_actions: usize,
    mass: Vec<f64>,
}

impl OccupancyMeasure {
    pub fn new(n_states: usize, n_actions: usize, mass: Vec<f64>) -> Result<Self, MdpError> {
        if mass.len() != n_states * n_actions {
            return Err(MdpError::DimensionMismatch("occupancy table size".into()));
        }
        let sum: f64 = mass.iter().sum();
        if mass.iter().any(|&p| p < -1e-12 || !p.is_finite()) || (sum - 1.0).abs() > 1e-8 {
            return Err(MdpError::BadInitialDist { reason: format!("occupancy sums to {sum}") });
        }
        Ok(OccupancyMeasure { n_states, n_actions, mass })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// p(x, a).
    pub fn mass(&self, x: usize, a: usize) -> f64 {
        self.mass[x * self.n_actions + a]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.mass
    }

    /// State marginal ν(x) = Σ_a p(x, a).
    pub fn state_marginal(&self) -> Vec<f64> {
        let mut nu = vec![0.0; self.n_states];
        for x in 0..self.n_states {
            for a in 0..self.n_actions {
                nu[x] += self.mass(x, a);
            }
        }
        nu
    }
}

/// One sampled environment transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    pub terminal: bool,
}

/// A batch of transitions plus fresh initial-state draws for the
/// initial-distribution term of the losses.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionBatch {
    pub entries: Vec<Transition>,
    pub initial_states: Vec<usize>,
}

impl TransitionBatch {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn policy_matches(mdp: &TabularMdp, policy: &StationaryPolicy) -> Result<(), MdpError> {
    if policy.n_states != mdp.n_states || policy.n_actions != mdp.n_actions {
        return Err(MdpError::DimensionMismatch("policy shape does not match MDP".into()));
    }
    Ok(())
}

/// The normalized discounted state-action occupancy of `policy`:
/// solves ν = (1 − γ)ν₀ + γ P_π^T ν by dense LU, then p(x,a) = ν(x)π(a|x).
/// Requires γ < 1; for γ = 1 use [`finite_horizon_occupancy`].
pub fn exact_occupancy(
    mdp: &TabularMdp,
    policy: &StationaryPolicy,
) -> Result<OccupancyMeasure, MdpError> {
    policy_matches(mdp, policy)?;
    let gamma = mdp.discount;
    if gamma >= 1.0 {
        return Err(MdpError::UndiscountedNeedsHorizon);
    }
    let s = mdp.n_states;
    // A[y][x] = δ_{xy} − γ P_π(y | x); solve A ν = (1 − γ) ν₀.
    let mut a = DMatrix::<f64>::identity(s, s);
    for x in 0..s {
        for act in 0..mdp.n_actions {
            let pi = policy.prob(x, act);
            if pi == 0.0 {
                continue;
            }
            let row = mdp.transition_row(x, act);
            for y in 0..s {
                a[(y, x)] -= gamma * pi * row[y];
            }
        }
    }
    let b = DVector::from_iterator(s, mdp.initial_dist.iter().map(|&v| (1.0 - gamma) * v));
    let nu = a.lu().solve(&b).ok_or(MdpError::SingularSystem)?;
    let mut mass = vec![0.0; s * mdp.n_actions];
    for x in 0..s {
        for act in 0..mdp.n_actions {
            mass[x * mdp.n_actions + act] = nu[x].max(0.0) * policy.prob(x, act);
        }
    }
    let total: f64 = mass.iter().sum();
    for m in &mut mass {
        *m /= total;
    }
    OccupancyMeasure::new(s, mdp.n_actions, mass)
}

/// The average state-action distribution over the first `horizon` steps:
/// (1/H) Σ_{t<H} ν_t(x) π(a|x) with ν_{t+1} = P_π^T ν_t. This is the
/// occupancy notion used for fixed-horizon (γ = 1) runs.
pub fn finite_horizon_occupancy(
    mdp: &TabularMdp,
    policy: &StationaryPolicy,
    horizon: usize,
) -> Result<OccupancyMeasure, MdpError> {
    policy_matches(mdp, policy)?;
    if horizon == 0 {
        return Err(MdpError::DimensionMismatch("horizon must be positive".into()));
    }
    let s = mdp.n_states;
    let a_n = mdp.n_actions;
    let mut nu = mdp.initial_dist.clone();
    let mut mass = vec![0.0; s * a_n];
    for _ in 0..horizon {
        let mut next = vec![0.0; s];
        for x in 0..s {
            if nu[x] == 0.0 {
                continue;
            }
            for act in 0..a_n {
                let w = nu[x] * policy.prob(x, act);
                if w == 0.0 {
                    continue;
                }
                mass[x * a_n + act] += w;
                let row = mdp.transition_row(x, act);
                for y in 0..s {
                    next[y] += w * row[y];
                }
            }
        }
        nu = next;
    }
    for m in &mut mass {
        *m /= horizon as f64;
    }
    OccupancyMeasure::new(s, a_n, mass)
}

/// Normalized discounted return (1 − γ) E[Σ γ^t r] = ⟨p_π, r⟩. Requires γ < 1.
pub fn expected_return(mdp: &TabularMdp, policy: &StationaryPolicy) -> Result<f64, MdpError> {
    let occ = exact_occupancy(mdp, policy)?;
    Ok(occ.as_slice().iter().zip(mdp.rewards()).map(|(p, r)| p * r).sum())
}

/// Per-step average return over a fixed horizon: ⟨p_H, r⟩ with the
/// finite-horizon occupancy. This is the γ = 1 counterpart of
/// [`expected_return`].
pub fn expected_return_horizon(
    mdp: &TabularMdp,
    policy: &StationaryPolicy,
    horizon: usize,
) -> Result<f64, MdpError> {
    let occ = finite_horizon_occupancy(mdp, policy, horizon)?;
    Ok(occ.as_slice().iter().zip(mdp.rewards()).map(|(p, r)| p * r).sum())
}

/// Optimal normalized return and a greedy optimal policy, via value
/// iteration run to a sup-norm Bellman residual of 1e-12. Requires γ < 1.
pub fn optimal_return(mdp: &TabularMdp) -> Result<(f64, StationaryPolicy), MdpError> {
    let gamma = mdp.discount;
    if gamma >= 1.0 {
        return Err(MdpError::UndiscountedNeedsHorizon);
    }
    let s = mdp.n_states;
    let a_n = mdp.n_actions;
    let mut v = vec![0.0; s];
    loop {
        let mut next = vec![f64::NEG_INFINITY; s];
        for x in 0..s {
            for act in 0..a_n {
                let row = mdp.transition_row(x, act);
                let q: f64 = mdp.r(x, act) + gamma * row.iter().zip(&v).map(|(p, vv)| p * vv).sum::<f64>();
                next[x] = next[x].max(q);
            }
        }
        let residual = v.iter().zip(&next).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        v = next;
        if residual <= 1e-12 {
            break;
        }
    }
    let mut actions = vec![0usize; s];
    for x in 0..s {
        let mut best = f64::NEG_INFINITY;
        for act in 0..a_n {
            let row = mdp.transition_row(x, act);
            let q: f64 = mdp.r(x, act) + gamma * row.iter().zip(&v).map(|(p, vv)| p * vv).sum::<f64>();
            if q > best {
                best = q;
                actions[x] = act;
            }
        }
    }
    let policy = StationaryPolicy::deterministic(s, a_n, &actions)?;
    let ret = (1.0 - gamma) * mdp.initial_dist.iter().zip(&v).map(|(p, vv)| p * vv).sum::<f64>();
    Ok((ret, policy))
}

/// Fixed-horizon counterpart of [`optimal_return`]: runs backward induction
/// over `horizon` steps, extracts the stationary policy that is greedy with
/// respect to the full-horizon values, and reports that policy's exact
/// per-step average return. The stationary extraction keeps the
/// normalization denominator achievable by the stationary policies the
/// learner produces (a time-varying policy can squeeze out a little more
/// near the boundary, which would make a perfect stationary policy appear
/// suboptimal).
pub fn optimal_return_horizon(
    mdp: &TabularMdp,
    horizon: usize,
) -> Result<(f64, StationaryPolicy), MdpError> {
    if horizon == 0 {
        return Err(MdpError::DimensionMismatch("horizon must be positive".into()));
    }
    let s = mdp.n_states;
    let a_n = mdp.n_actions;
    let mut v = vec![0.0; s];
    let mut actions = vec![0usize; s];
    for _ in 0..horizon {
        let mut next = vec![f64::NEG_INFINITY; s];
        for x in 0..s {
            for act in 0..a_n {
                let row = mdp.transition_row(x, act);
                let q: f64 = mdp.r(x, act) + row.iter().zip(&v).map(|(p, vv)| p * vv).sum::<f64>();
                if q > next[x] {
                    next[x] = q;
                    actions[x] = act;
                }
            }
        }
        v = next;
    }
    let policy = StationaryPolicy::deterministic(s, a_n, &actions)?;
    let ret = expected_return_horizon(mdp, &policy, horizon)?;
    Ok((ret, policy))
}

/// Draws `n` i.i.d. transitions whose (state, action) pairs follow the
/// discounted occupancy of `policy`: the chain restarts from ν₀ with
/// probability 1 − γ before every step (geometric stopping). The sampled
/// next state is recorded regardless of whether a restart follows. Also
/// records `n` fresh draws from ν₀ in `initial_states`. Requires γ < 1;
/// for γ = 1 use [`sample_batch_episodic`].
pub fn sample_batch(
    mdp: &TabularMdp,
    policy: &StationaryPolicy,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TransitionBatch, MdpError> {
    policy_matches(mdp, policy)?;
    let gamma = mdp.discount;
    if gamma >= 1.0 {
        return Err(MdpError::UndiscountedNeedsHorizon);
    }
    let draw_initial = |rng: &mut ChaCha8Rng| {
        crate::numeric::sample_index(&mdp.initial_dist, rng.gen::<f64>())
    };
    let mut entries = Vec::with_capacity(n);
    let mut state = draw_initial(rng);
    for _ in 0..n {
        if rng.gen::<f64>() >= gamma {
            state = draw_initial(rng);
        }
        let action = policy.sample_action(state, rng);
        let next = crate::numeric::sample_index(mdp.transition_row(state, action), rng.gen::<f64>());
        entries.push(Transition {
            state,
            action,
            reward: mdp.r(state, action),
            next_state: next,
            terminal: false,
        });
        state = next;
    }
    let initial_states = (0..n).map(|_| draw_initial(rng)).collect();
    Ok(TransitionBatch { entries, initial_states })
}

/// Fixed-horizon batch sampler for γ = 1: rolls out whole `horizon`-step
/// episodes from ν₀ and, when more steps were generated than requested,
/// keeps a uniform subsample without replacement, so each kept pair follows
/// the finite-horizon occupancy. The last transition of each episode is
/// marked terminal, so the empirical losses treat the cutoff as the end of
/// the value recursion — without this anchor the undiscounted loss is
/// insensitive to the level of V and learning stalls. Also records `n`
/// fresh ν₀ draws.
pub fn sample_batch_episodic(
    mdp: &TabularMdp,
    policy: &StationaryPolicy,
    n: usize,
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TransitionBatch, MdpError> {
    policy_matches(mdp, policy)?;
    if horizon == 0 || n == 0 {
        return Err(MdpError::DimensionMismatch("n and horizon must be positive".into()));
    }
    let draw_initial = |rng: &mut ChaCha8Rng| {
        crate::numeric::sample_index(&mdp.initial_dist, rng.gen::<f64>())
    };
    let mut pool = Vec::with_capacity(n.div_ceil(horizon) * horizon);
    while pool.len() < n {
        let mut state = draw_initial(rng);
        for step in 0..horizon {
            let action = policy.sample_action(state, rng);
            let next =
                crate::numeric::sample_index(mdp.transition_row(state, action), rng.gen::<f64>());
            pool.push(Transition {
                state,
                action,
                reward: mdp.r(state, action),
                next_state: next,
                terminal: step + 1 == horizon,
            });
            state = next;
        }
    }
    let entries = if pool.len() == n {
        pool
    } else {
        let idx = rand::seq::index::sample(rng, pool.len(), n);
        let mut keep: Vec<usize> = idx.into_iter().collect();
        keep.sort_unstable();
        keep.into_iter().map(|i| pool[i]).collect()
    };
    let initial_states = (0..n).map(|_| draw_initial(rng)).collect();
    Ok(TransitionBatch { entries, initial_states })
}
