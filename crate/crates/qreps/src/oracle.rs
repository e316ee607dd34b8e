//! Exact tabular reference computations: a line-searched minimizer for the
//! exact loss, the tilted state-action distribution it induces, an exact
//! additive decomposition of the loss into divergence terms, and the
//! expectation form of the empirical loss used to quantify its bias.
//!
//! Everything here works on small MDPs with the state-action indicator
//! features, where θ is the Q-table itself. These routines exist so the
//! stochastic solvers elsewhere can be judged against closed-form or
//! brute-force ground truth.

use crate::features::Theta;
use crate::lbe::{exact_eval, grad_lbe, lbe, LbeError, LossContext};
use crate::mdp::{exact_occupancy, MdpError, OccupancyMeasure, StationaryPolicy, TabularMdp};
use crate::numeric::{inf_norm, weighted_log_sum_exp};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Lbe(#[from] LbeError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error("descent did not converge after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    NoConvergence { iterations: usize, grad_norm: f64 },
    #[error("bad parameter: {0}")]
    BadParameter(String),
}

#[derive(Debug, Clone, Copy)]
pub struct MinimizerReport {
    pub iterations: usize,
    pub grad_inf_norm: f64,
    pub loss: f64,
}

/// Minimize a smooth convex function by gradient descent with Armijo
/// backtracking and step growth. Convergence is declared on the sup norm
/// of the gradient.
pub(crate) fn minimize(
    f: &dyn Fn(&Theta) -> f64,
    grad: &dyn Fn(&Theta) -> Theta,
    init: Theta,
    tol: f64,
    max_iters: usize,
) -> Result<(Theta, MinimizerReport), OracleError> {
    let mut theta = init;
    let mut value = f(&theta);
    let mut step = 1.0f64;
    for iter in 0..max_iters {
        let g = grad(&theta);
        let gnorm = inf_norm(g.as_slice());
        if gnorm <= tol {
            return Ok((
                theta,
                MinimizerReport { iterations: iter, grad_inf_norm: gnorm, loss: value },
            ));
        }
        let sq: f64 = g.as_slice().iter().map(|x| x * x).sum();
        let mut t = step;
        let mut accepted = false;
        for _ in 0..80 {
            let mut probe = theta.clone();
            probe.axpy(-t, &g);
            let candidate = f(&probe);
            // Require strictly measurable decrease; at the resolution of
            // f64 an equal value means the quadratic regime is exhausted.
            if candidate <= value - 1e-4 * t * sq && candidate < value {
                theta = probe;
                value = candidate;
                step = t * 2.0;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // The step shrank below resolution; treat the point as final.
            return Ok((
                theta,
                MinimizerReport { iterations: iter, grad_inf_norm: gnorm, loss: value },
            ));
        }
    }
    let g = grad(&theta);
    let gnorm = inf_norm(g.as_slice());
    if gnorm <= tol {
        Ok((theta, MinimizerReport { iterations: max_iters, grad_inf_norm: gnorm, loss: value }))
    } else {
        Err(OracleError::NoConvergence { iterations: max_iters, grad_norm: gnorm })
    }
}

/// Minimize the exact loss to a gradient sup norm below `tol`, starting
/// from `init` (zeros when absent). The minimizer is only unique up to a
/// constant shift of all Q-values, so compare outputs through the loss,
/// through action gaps, or after centering.
pub fn exact_lbe_minimizer_with(
    ctx: &LossContext,
    init: Option<&Theta>,
    tol: f64,
    max_iters: usize,
) -> Result<(Theta, MinimizerReport), OracleError> {
    let dim = ctx.mdp.n_states() * ctx.mdp.n_actions();
    let start = match init {
        Some(t) => t.clone(),
        None => Theta::zeros(dim),
    };
    // Surface context errors (missing reference, bad dimensions) eagerly.
    lbe(&start, ctx)?;
    minimize(
        &|t| lbe(t, ctx).expect("validated context"),
        &|t| grad_lbe(t, ctx).expect("validated context"),
        start,
        tol,
        max_iters,
    )
}

pub fn exact_lbe_minimizer(ctx: &LossContext) -> Result<(Theta, MinimizerReport), OracleError> {
    exact_lbe_minimizer_with(ctx, None, 1e-7, 200_000)
}

/// The tilted state-action distribution q̃_θ(x,a) ∝ p_ref(x,a)·exp(η·Δ_θ),
/// normalized. At the exact minimizer this distribution satisfies the
/// occupancy flow constraint, which is how the dual solution hands back a
/// primal one.
pub fn tilted_distribution(ctx: &LossContext, theta: &Theta) -> Result<Vec<f64>, LbeError> {
    let p_ref = ctx.p_ref.ok_or(LbeError::MissingReference)?;
    let eval = exact_eval(ctx, theta);
    let n = eval.delta.len();
    let mut log_w = vec![f64::NEG_INFINITY; n];
    for i in 0..n {
        if p_ref.as_slice()[i] > 0.0 {
            log_w[i] = p_ref.as_slice()[i].ln() + ctx.eta * eval.delta[i];
        }
    }
    let norm = crate::numeric::log_sum_exp(&log_w);
    Ok(log_w.iter().map(|lw| (lw - norm).exp()).collect())
}

/// How far the tilted distribution is from satisfying the flow constraint
/// Σ_a q(x',a') = γ·Σ_{x,a} P(x'|x,a)·q(x,a) + (1 − γ)·ν₀(x'), reported as
/// the largest per-state violation.
pub fn flow_violation(ctx: &LossContext, q: &[f64]) -> f64 {
    let s = ctx.mdp.n_states();
    let a_n = ctx.mdp.n_actions();
    let gamma = ctx.mdp.discount();
    let mut worst = 0.0f64;
    for y in 0..s {
        let marginal: f64 = (0..a_n).map(|a| q[y * a_n + a]).sum();
        let mut inflow = 0.0;
        for x in 0..s {
            for a in 0..a_n {
                inflow += ctx.mdp.p(x, a, y) * q[x * a_n + a];
            }
        }
        let target = gamma * inflow
            + if gamma < 1.0 { (1.0 - gamma) * ctx.mdp.initial_dist()[y] } else { 0.0 };
        worst = worst.max((marginal - target).abs());
    }
    worst
}

/// The exact additive decomposition of the loss.
///
/// For any policy whose occupancy is p* (with conditionals π*), and for
/// every θ:
///
/// ```text
/// loss(θ) = ⟨p*, r⟩ − D(p*‖p_ref)/η − H(p*‖π_ref)/α
///           + D(p*‖q̃_θ)/η + H(p*‖π_θ)/α,
/// ```
///
/// where D is relative entropy over state-action pairs, H is the
/// state-weighted conditional relative entropy between policies, q̃_θ is
/// the tilted distribution and π_θ the tilted policy. The first three
/// terms do not depend on θ, so minimizing the loss is exactly minimizing
/// the two divergences — and `residual` measures how well the identity
/// holds numerically.
#[derive(Debug, Clone, Copy)]
pub struct DecompositionReport {
    pub loss: f64,
    pub comparator_value: f64,
    pub reference_divergence: f64,
    pub policy_divergence: f64,
    pub residual: f64,
}

pub fn decomposition_check(
    ctx: &LossContext,
    theta: &Theta,
    comparator: &StationaryPolicy,
) -> Result<DecompositionReport, OracleError> {
    let p_ref = ctx.p_ref.ok_or(LbeError::MissingReference)?;
    let mdp = ctx.mdp;
    let s = mdp.n_states();
    let a_n = mdp.n_actions();
    let p_star = exact_occupancy(mdp, comparator)?;
    let loss = lbe(theta, ctx)?;
    let q_tilde = tilted_distribution(ctx, theta)?;
    let eval = exact_eval(ctx, theta);

    let mut return_term = 0.0;
    let mut d_ref = 0.0;
    let mut d_tilde = 0.0;
    let mut h_prior = 0.0;
    let mut h_theta = 0.0;
    for x in 0..s {
        let mu: f64 = (0..a_n).map(|a| p_star.mass(x, a)).sum();
        if mu <= 0.0 {
            continue;
        }
        for a in 0..a_n {
            let p = p_star.mass(x, a);
            if p <= 0.0 {
                continue;
            }
            let i = x * a_n + a;
            return_term += p * mdp.r(x, a);
            d_ref += p * (p / p_ref.as_slice()[i]).ln();
            d_tilde += p * (p / q_tilde[i]).ln();
            let pi_star = p / mu;
            h_prior += p * (pi_star / ctx.prior.prob(x, a)).ln();
            h_theta += p * (pi_star.ln() - eval.log_pi[i]);
        }
    }
    let comparator_value = return_term - d_ref / ctx.eta - h_prior / ctx.alpha;
    let residual = loss - comparator_value - d_tilde / ctx.eta - h_theta / ctx.alpha;
    Ok(DecompositionReport {
        loss,
        comparator_value,
        reference_divergence: d_tilde / ctx.eta,
        policy_divergence: h_theta / ctx.alpha,
        residual,
    })
}

/// The expectation form of the empirical loss: the exponent keeps the
/// sampled-next-state error, but the expectation over next states is
/// taken exactly inside the outer log:
///
/// ```text
/// (1/η)·log Σ_{x,a} p_ref(x,a)·E_{x'} exp(η·(r + γ·V_θ(x') − Q_θ(x,a)))
/// + (1 − γ)·⟨ν₀, V_θ⟩.
/// ```
///
/// By Jensen this never falls below the exact loss, and the gap is the
/// bias an infinite batch of single-sample transitions would retain.
pub fn expectation_elbe(ctx: &LossContext, theta: &Theta) -> Result<f64, LbeError> {
    let p_ref = ctx.p_ref.ok_or(LbeError::MissingReference)?;
    let eval = exact_eval(ctx, theta);
    let (s, a_n) = (ctx.mdp.n_states(), ctx.mdp.n_actions());
    let gamma = ctx.mdp.discount();
    let mut logits = vec![f64::NEG_INFINITY; s * a_n];
    let gv: Vec<f64> = eval.v.iter().map(|v| ctx.eta * gamma * v).collect();
    for x in 0..s {
        for a in 0..a_n {
            let i = x * a_n + a;
            let p = p_ref.as_slice()[i];
            if p <= 0.0 {
                continue;
            }
            let inner = weighted_log_sum_exp(ctx.mdp.transition_row(x, a), &gv);
            logits[i] = p.ln() + ctx.eta * (ctx.mdp.r(x, a) - eval.q[i]) + inner;
        }
    }
    let lse = crate::numeric::log_sum_exp(&logits);
    let init = if gamma < 1.0 {
        (1.0 - gamma)
            * ctx.mdp.initial_dist().iter().zip(&eval.v).map(|(p, v)| p * v).sum::<f64>()
    } else {
        0.0
    };
    Ok(lse / ctx.eta + init)
}

/// Analytic gradient of [`expectation_elbe`]: outer weights tilt p_ref by
/// the per-pair log moment, inner weights tilt each next-state row by
/// exp(η·γ·V_θ), and both compose with the usual tilted-policy features.
pub fn grad_expectation_elbe(ctx: &LossContext, theta: &Theta) -> Result<Theta, LbeError> {
    let p_ref = ctx.p_ref.ok_or(LbeError::MissingReference)?;
    let eval = exact_eval(ctx, theta);
    let (s, a_n) = (ctx.mdp.n_states(), ctx.mdp.n_actions());
    let gamma = ctx.mdp.discount();
    let gv: Vec<f64> = eval.v.iter().map(|v| ctx.eta * gamma * v).collect();
    let mut logits = vec![f64::NEG_INFINITY; s * a_n];
    let mut inner_log = vec![0.0; s * a_n];
    for x in 0..s {
        for a in 0..a_n {
            let i = x * a_n + a;
            let p = p_ref.as_slice()[i];
            if p <= 0.0 {
                continue;
            }
            inner_log[i] = weighted_log_sum_exp(ctx.mdp.transition_row(x, a), &gv);
            logits[i] = p.ln() + ctx.eta * (ctx.mdp.r(x, a) - eval.q[i]) + inner_log[i];
        }
    }
    let norm = crate::numeric::log_sum_exp(&logits);
    // t(y) collects γ·Σ_{x,a} W(x,a)·u(y|x,a) plus the initial weights.
    let mut t = vec![0.0; s];
    let mut grad = vec![0.0; s * a_n];
    for x in 0..s {
        for a in 0..a_n {
            let i = x * a_n + a;
            if logits[i] == f64::NEG_INFINITY {
                continue;
            }
            let w = (logits[i] - norm).exp();
            grad[i] -= w;
            let row = ctx.mdp.transition_row(x, a);
            for y in 0..s {
                if row[y] > 0.0 {
                    let u = (row[y].ln() + gv[y] - inner_log[i]).exp();
                    t[y] += gamma * w * u;
                }
            }
        }
    }
    if gamma < 1.0 {
        for y in 0..s {
            t[y] += (1.0 - gamma) * ctx.mdp.initial_dist()[y];
        }
    }
    for y in 0..s {
        if t[y] != 0.0 {
            for b in 0..a_n {
                grad[y * a_n + b] += t[y] * eval.log_pi[y * a_n + b].exp();
            }
        }
    }
    Ok(Theta(grad))
}

/// Minimize the expectation form of the empirical loss.
pub fn expectation_elbe_minimizer(
    ctx: &LossContext,
    tol: f64,
    max_iters: usize,
) -> Result<(Theta, MinimizerReport), OracleError> {
    let dim = ctx.mdp.n_states() * ctx.mdp.n_actions();
    expectation_elbe(ctx, &Theta::zeros(dim))?;
    minimize(
        &|t| expectation_elbe(ctx, t).expect("validated context"),
        &|t| grad_expectation_elbe(ctx, t).expect("validated context"),
        Theta::zeros(dim),
        tol,
        max_iters,
    )
}

/// One row of the bias sweep: how far the expectation form of the
/// empirical loss sits above the exact loss at a given η.
#[derive(Debug, Clone, Copy)]
pub struct BiasPoint {
    pub eta: f64,
    /// Minimum of the expectation form minus minimum of the exact loss —
    /// the bias an infinite-batch learner settles into. Nonnegative
    /// because the expectation form dominates pointwise.
    pub minima_gap: f64,
    /// Pointwise gap at the expectation-form minimizer. Also nonnegative,
    /// but not monotone in η: sharp temperatures flatten the sampled
    /// errors at their own minimizer, shrinking the local gap.
    pub at_expectation_min: f64,
    /// Pointwise gap at θ = 0. Identically zero: with all values zero the
    /// sampled error has no next-state dependence left to bias.
    pub at_zero: f64,
}

/// Sweep η and measure the gap between the expectation form of the
/// empirical loss and the exact loss: between their minima, at the
/// expectation-form minimizer, and at θ = 0. The reference distribution is
/// shared across the grid so the points are comparable; on a deterministic
/// MDP every gap is zero.
pub fn elbe_bias_curve(
    mdp: &TabularMdp,
    prior: &StationaryPolicy,
    p_ref: &OccupancyMeasure,
    alpha: f64,
    etas: &[f64],
) -> Result<Vec<BiasPoint>, OracleError> {
    let zero = Theta::zeros(mdp.n_states() * mdp.n_actions());
    let mut out = Vec::with_capacity(etas.len());
    for &eta in etas {
        let ctx = LossContext::new(mdp, prior, Some(p_ref), eta, alpha)?;
        let (theta_e, report_e) = expectation_elbe_minimizer(&ctx, 1e-9, 200_000)?;
        let (_, report_l) = exact_lbe_minimizer(&ctx)?;
        let minima_gap = report_e.loss - report_l.loss;
        let at_expectation_min = expectation_elbe(&ctx, &theta_e)? - lbe(&theta_e, &ctx)?;
        let at_zero = expectation_elbe(&ctx, &zero)? - lbe(&zero, &ctx)?;
        out.push(BiasPoint { eta, minima_gap, at_expectation_min, at_zero });
    }
    Ok(out)
}

/// The gap between the best and second-best Q-value at a state — the
/// margin a shift-invariant Q-table actually exposes.
pub fn action_gap(theta: &Theta, n_actions: usize, state: usize) -> f64 {
    let row = &theta.as_slice()[state * n_actions..(state + 1) * n_actions];
    let mut sorted = row.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sorted[0] - sorted[1]
}

/// Center a θ vector to mean zero, removing the constant-shift degree of
/// freedom before comparing minimizers.
pub fn center(theta: &Theta) -> Theta {
    let mean = theta.as_slice().iter().sum::<f64>() / theta.len() as f64;
    Theta(theta.as_slice().iter().map(|t| t - mean).collect())
}
