//! Shift-stabilized exponential-family primitives.
//!
//! Every exponentiated sum in the crate goes through these helpers so that
//! large exponents (the losses are evaluated with exponents up to ~±100 in
//! the bias studies) never overflow.

/// log Σ_i exp(v[i]), computed against the running maximum.
///
/// Returns `f64::NEG_INFINITY` for an empty slice.
pub fn log_sum_exp(vals: &[f64]) -> f64 {
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = vals.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// log Σ_i w[i]·exp(v[i]) for nonnegative weights; zero-weight entries are
/// skipped so `0·exp(anything)` contributes nothing.
pub fn weighted_log_sum_exp(weights: &[f64], vals: &[f64]) -> f64 {
    debug_assert_eq!(weights.len(), vals.len());
    let max = weights
        .iter()
        .zip(vals)
        .filter(|(w, _)| **w > 0.0)
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = weights
        .iter()
        .zip(vals)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, v)| w * (v - max).exp())
        .sum();
    max + sum.ln()
}

/// Normalized exp(v[i] − max) weights; the softmax distribution of `vals`.
pub fn softmax(vals: &[f64]) -> Vec<f64> {
    let mut out = vals.to_vec();
    softmax_in_place(&mut out);
    out
}

/// In-place variant of [`softmax`].
pub fn softmax_in_place(vals: &mut [f64]) {
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in vals.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in vals.iter_mut() {
        *v /= sum;
    }
}

/// log of the softmax of `vals`: v[i] − log Σ_j exp(v[j]).
pub fn log_softmax(vals: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(vals);
    vals.iter().map(|v| v - lse).collect()
}

/// Componentwise infinity norm.
pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Componentwise 1-norm.
pub fn one_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Draw an index from an explicit probability vector via a cumulative scan.
pub fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn log_sum_exp_matches_direct_sum_in_safe_range() {
        let vals: [f64; 3] = [0.3, -1.2, 2.0];
        let direct: f64 = vals.iter().map(|v| v.exp()).sum::<f64>().ln();
        assert_relative_eq!(log_sum_exp(&vals), direct, max_relative = 1e-14);
    }

    #[test]
    fn log_sum_exp_survives_large_exponents() {
        let vals = [1000.0, 999.0];
        let expected = 1000.0 + (1.0 + (-1.0f64).exp()).ln();
        assert_relative_eq!(log_sum_exp(&vals), expected, max_relative = 1e-14);
    }

    #[test]
    fn weighted_log_sum_exp_skips_zero_weights() {
        // The zero-weight entry carries an exponent that would overflow.
        let got = weighted_log_sum_exp(&[0.0, 1.0], &[1e308, 0.0]);
        assert_relative_eq!(got, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn softmax_normalizes_and_orders() {
        let p = softmax(&[2.0, 1.0, 0.0]);
        assert_relative_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(p[0] > p[1] && p[1] > p[2]);
    }

    #[test]
    fn sample_index_picks_by_cumulative_mass() {
        let probs = [0.25, 0.5, 0.25];
        assert_eq!(sample_index(&probs, 0.1), 0);
        assert_eq!(sample_index(&probs, 0.5), 1);
        assert_eq!(sample_index(&probs, 0.9), 2);
        assert_eq!(sample_index(&probs, 0.999_999), 2);
    }
}
