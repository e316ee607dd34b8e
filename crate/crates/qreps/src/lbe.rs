//! Soft value functions, Bellman errors, and the logistic Bellman error
//! family.
//!
//! Exact-mode evaluation works on a tabular MDP with the state-action
//! indicator features, so θ *is* the Q-table read row-major as
//! `Q[x·A + a]`. The soft value V_θ(x) = (1/α)·log Σ_a π(a|x)·exp(α·Q)
//! is always computed against the per-row maximum, which keeps every loss
//! finite for exponents far beyond the overflow range.

use crate::features::{FeatureMap, Theta};
use crate::mdp::{OccupancyMeasure, StationaryPolicy, TabularMdp, Transition, TransitionBatch};
use crate::numeric::{log_sum_exp, weighted_log_sum_exp};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LbeError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("prior policy has no support at state {state}")]
    ZeroPriorSupport { state: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("operation needs a reference distribution (exact mode only)")]
    MissingReference,
    #[error("bad parameter: {0}")]
    BadParameter(String),
}

/// Evaluation context for the losses: the MDP, the prior policy π_ref the
/// soft values tilt against, an optional reference state-action
/// distribution p_ref (required by the exact loss), and the temperatures
/// η (Bellman-error tilt) and α (policy tilt). Discount and initial
/// distribution come from the MDP; with discount 1 the
/// initial-distribution term of every loss vanishes.
#[derive(Debug, Clone)]
pub struct LossContext<'a> {
    pub mdp: &'a TabularMdp,
    pub prior: &'a StationaryPolicy,
    pub p_ref: Option<&'a OccupancyMeasure>,
    pub eta: f64,
    pub alpha: f64,
}

impl<'a> LossContext<'a> {
    pub fn new(
        mdp: &'a TabularMdp,
        prior: &'a StationaryPolicy,
        p_ref: Option<&'a OccupancyMeasure>,
        eta: f64,
        alpha: f64,
    ) -> Result<Self, LbeError> {
        if !(eta > 0.0 && eta.is_finite()) || !(alpha > 0.0 && alpha.is_finite()) {
            return Err(LbeError::BadParameter(format!("eta {eta} and alpha {alpha} must be positive")));
        }
        if prior.n_states() != mdp.n_states() || prior.n_actions() != mdp.n_actions() {
            return Err(LbeError::DimensionMismatch("prior policy shape".into()));
        }
        if let Some(p) = p_ref {
            if p.n_states() != mdp.n_states() || p.n_actions() != mdp.n_actions() {
                return Err(LbeError::DimensionMismatch("reference distribution shape".into()));
            }
        }
        Ok(LossContext { mdp, prior, p_ref, eta, alpha })
    }

    fn check_theta(&self, theta: &Theta) -> Result<(), LbeError> {
        let m = self.mdp.n_states() * self.mdp.n_actions();
        if theta.len() != m {
            return Err(LbeError::DimensionMismatch(format!(
                "theta has {} entries, expected {m}",
                theta.len()
            )));
        }
        Ok(())
    }
}

/// The soft value of one Q-row: (1/α)·log Σ_a prior[a]·exp(α·q[a]),
/// max-shifted. Zero-probability prior entries are skipped entirely.
pub fn soft_value(q_row: &[f64], prior_row: &[f64], alpha: f64) -> f64 {
    let logits: Vec<f64> = q_row.iter().map(|q| alpha * q).collect();
    weighted_log_sum_exp(prior_row, &logits) / alpha
}

/// V_θ at one discrete state for an arbitrary feature map.
pub fn value_function(
    theta: &Theta,
    fmap: &FeatureMap,
    prior: &StationaryPolicy,
    alpha: f64,
    state: usize,
) -> Result<f64, LbeError> {
    if !(alpha > 0.0) {
        return Err(LbeError::BadParameter(format!("alpha {alpha} must be positive")));
    }
    let row = prior.row(state);
    if row.iter().sum::<f64>() <= 0.0 {
        return Err(LbeError::ZeroPriorSupport { state });
    }
    let q = crate::features::q_values(theta, fmap, state)
        .map_err(|e| LbeError::DimensionMismatch(e.to_string()))?;
    Ok(soft_value(&q, row, alpha))
}

/// Per-θ tables the exact losses share: the Q-table, the soft values, the
/// exact Bellman errors Δ(x,a) = r + γ·⟨P(·|x,a), V⟩ − Q(x,a), and the
/// log-probabilities of the tilted policy π_θ(a|x) ∝ π_ref(a|x)·exp(α·Q).
pub(crate) struct ExactEval {
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub delta: Vec<f64>,
    pub log_pi: Vec<f64>,
}

pub(crate) fn exact_eval(ctx: &LossContext, theta: &Theta) -> ExactEval {
    let s = ctx.mdp.n_states();
    let a_n = ctx.mdp.n_actions();
    let gamma = ctx.mdp.discount();
    let q = theta.as_slice().to_vec();
    let mut v = vec![0.0; s];
    let mut log_pi = vec![f64::NEG_INFINITY; s * a_n];
    for x in 0..s {
        let q_row = &q[x * a_n..(x + 1) * a_n];
        let prior_row = ctx.prior.row(x);
        v[x] = soft_value(q_row, prior_row, ctx.alpha);
        for a in 0..a_n {
            if prior_row[a] > 0.0 {
                log_pi[x * a_n + a] = prior_row[a].ln() + ctx.alpha * (q_row[a] - v[x]);
            }
        }
    }
    let mut delta = vec![0.0; s * a_n];
    for x in 0..s {
        for a in 0..a_n {
            let pv: f64 = ctx
                .mdp
                .transition_row(x, a)
                .iter()
                .zip(&v)
                .map(|(p, vv)| p * vv)
                .sum();
            delta[x * a_n + a] = ctx.mdp.r(x, a) + gamma * pv - q[x * a_n + a];
        }
    }
    ExactEval { q, v, delta, log_pi }
}

/// Δ_θ(x, a) = r(x,a) + γ·E_{x'∼P(·|x,a)} V_θ(x') − Q_θ(x,a).
pub fn bellman_error_exact(
    theta: &Theta,
    ctx: &LossContext,
    state: usize,
    action: usize,
) -> Result<f64, LbeError> {
    ctx.check_theta(theta)?;
    let eval = exact_eval(ctx, theta);
    Ok(eval.delta[state * ctx.mdp.n_actions() + action])
}

/// Δ̂_θ(x, a, x') = r + γ·V_θ(x') − Q_θ(x,a); a terminal next state
/// contributes V_θ(x') = 0.
pub fn bellman_error_empirical(
    theta: &Theta,
    ctx: &LossContext,
    transition: &Transition,
) -> Result<f64, LbeError> {
    ctx.check_theta(theta)?;
    let a_n = ctx.mdp.n_actions();
    let next_v = if transition.terminal {
        0.0
    } else {
        let q_row = &theta.as_slice()[transition.next_state * a_n..(transition.next_state + 1) * a_n];
        soft_value(q_row, ctx.prior.row(transition.next_state), ctx.alpha)
    };
    let q_sa = theta.as_slice()[transition.state * a_n + transition.action];
    Ok(transition.reward + ctx.mdp.discount() * next_v - q_sa)
}

fn initial_value_term(ctx: &LossContext, v: &[f64]) -> f64 {
    let gamma = ctx.mdp.discount();
    if gamma >= 1.0 {
        return 0.0;
    }
    (1.0 - gamma)
        * ctx
            .mdp
            .initial_dist()
            .iter()
            .zip(v)
            .map(|(p, vv)| p * vv)
            .sum::<f64>()
}

/// The exact logistic Bellman error
/// (1/η)·log Σ_{x,a} p_ref(x,a)·exp(η·Δ_θ(x,a)) + (1 − γ)·⟨ν₀, V_θ⟩.
pub fn lbe(theta: &Theta, ctx: &LossContext) -> Result<f64, LbeError> {
    ctx.check_theta(theta)?;
    let p_ref = ctx.p_ref.ok_or(LbeError::MissingReference)?;
    let eval = exact_eval(ctx, theta);
    let logits: Vec<f64> = eval.delta.iter().map(|d| ctx.eta * d).collect();
    let lse = weighted_log_sum_exp(p_ref.as_slice(), &logits);
    Ok(lse / ctx.eta + initial_value_term(ctx, &eval.v))
}

/// Analytic gradient of [`lbe`] in θ (equivalently in Q): the softmax
/// tilting of p_ref by exp(η·Δ) composes the per-pair error gradients
/// γ·E_{x'}[π_θ(·|x')] − e_{x,a}, plus the initial-distribution term.
pub fn grad_lbe(theta: &Theta, ctx: &LossContext) -> Result<Theta, LbeError> {
    ctx.check_theta(theta)?;
    let p_ref = ctx.p_ref.ok_or(LbeError::MissingReference)?;
    let s = ctx.mdp.n_states();
    let a_n = ctx.mdp.n_actions();
    let gamma = ctx.mdp.discount();
    let eval = exact_eval(ctx, theta);

    // Tilted weights w ∝ p_ref·exp(η·Δ), max-shifted over the support.
    let mut log_w = vec![f64::NEG_INFINITY; s * a_n];
    for i in 0..s * a_n {
        let p = p_ref.as_slice()[i];
        if p > 0.0 {
            log_w[i] = p.ln() + ctx.eta * eval.delta[i];
        }
    }
    let norm = log_sum_exp(&log_w);
    let w: Vec<f64> = log_w.iter().map(|lw| (lw - norm).exp()).collect();

    // Pushforward of w through the transition kernel.
    let mut t = vec![0.0; s];
    for x in 0..s {
        for a in 0..a_n {
            let wi = w[x * a_n + a];
            if wi == 0.0 {
                continue;
            }
            for (y, p) in ctx.mdp.transition_row(x, a).iter().enumerate() {
                t[y] += wi * p;
            }
        }
    }

    let mut grad = vec![0.0; s * a_n];
    for y in 0..s {
        let weight = gamma * t[y]
            + if gamma < 1.0 { (1.0 - gamma) * ctx.mdp.initial_dist()[y] } else { 0.0 };
        if weight != 0.0 {
            for b in 0..a_n {
                grad[y * a_n + b] += weight * eval.log_pi[y * a_n + b].exp();
            }
        }
    }
    for i in 0..s * a_n {
        grad[i] -= w[i];
    }
    Ok(Theta(grad))
}

/// The empirical loss: (1/η)·log((1/N)·Σ_n exp(η·Δ̂_θ(ξ_n))) plus the
/// initial-distribution term, which in tabular mode uses the exact ν₀.
pub fn elbe(theta: &Theta, batch: &TransitionBatch, ctx: &LossContext) -> Result<f64, LbeError> {
    ctx.check_theta(theta)?;
    if batch.is_empty() {
        return Err(LbeError::EmptyBatch);
    }
    let eval = exact_eval(ctx, theta);
    let a_n = ctx.mdp.n_actions();
    let logits: Vec<f64> = batch
        .entries
        .iter()
        .map(|tr| {
            let next_v = if tr.terminal { 0.0 } else { eval.v[tr.next_state] };
            let q_sa = eval.q[tr.state * a_n + tr.action];
            ctx.eta * (tr.reward + ctx.mdp.discount() * next_v - q_sa)
        })
        .collect();
    let lse = log_sum_exp(&logits) - (batch.len() as f64).ln();
    Ok(lse / ctx.eta + initial_value_term(ctx, &eval.v))
}

/// The semi-empirical loss: the batch's pairs keep their sampling weights
/// but each exponent holds the exact error Δ_θ(X_n, A_n), removing the
/// next-state sampling noise from inside the exponential. A terminal pair
/// keeps its certain zero continuation, so its exact error is r − Q.
pub fn selbe(theta: &Theta, batch: &TransitionBatch, ctx: &LossContext) -> Result<f64, LbeError> {
    ctx.check_theta(theta)?;
    if batch.is_empty() {
        return Err(LbeError::EmptyBatch);
    }
    let eval = exact_eval(ctx, theta);
    let a_n = ctx.mdp.n_actions();
    let logits: Vec<f64> = batch
        .entries
        .iter()
        .map(|tr| {
            let idx = tr.state * a_n + tr.action;
            if tr.terminal {
                ctx.eta * (tr.reward - eval.q[idx])
            } else {
                ctx.eta * eval.delta[idx]
            }
        })
        .collect();
    let lse = log_sum_exp(&logits) - (batch.len() as f64).ln();
    Ok(lse / ctx.eta + initial_value_term(ctx, &eval.v))
}
