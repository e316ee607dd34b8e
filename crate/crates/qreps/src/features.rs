//! State-action feature maps for linear action-value functions.
//!
//! Both maps factor as φ(x, a) = φ'(x) ⊗ e_a: a state feature block of
//! dimension `p` placed in the slot of the chosen action, giving flat
//! index `i·A + a` and total dimension m = p·A. For the tabular map the
//! block is a one-hot over states, so φ(x, a) is the one-hot at
//! `x·A + a`; the random-ReLU map uses a frozen random hidden layer and
//! a termination indicator that zeroes the block (so terminal next
//! states automatically contribute zero value and zero gradient).

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("feature descriptor parse error: {0}")]
    Parse(String),
}

/// Parameter vector of a linear action-value function Q_θ(x,a) = ⟨θ, φ(x,a)⟩.
#[derive(Debug, Clone, PartialEq)]
pub struct Theta(pub Vec<f64>);

impl Theta {
    pub fn zeros(m: usize) -> Self {
        Theta(vec![0.0; m])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// self += scale · other.
    pub fn axpy(&mut self, scale: f64, other: &Theta) {
        debug_assert_eq!(self.len(), other.len());
        for (t, o) in self.0.iter_mut().zip(&other.0) {
            *t += scale * o;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in &mut self.0 {
            *t *= factor;
        }
    }
}

/// A frozen feature map shared by the losses, the policy, and the agent.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMap {
    /// One-hot over state-action pairs; m = S·A.
    Tabular { n_states: usize, n_actions: usize },
    /// Random single hidden layer: φ'_i(s) = max(0, ⟨w_i, s⟩ + b_i), with
    /// weights and biases drawn once from Uniform(±1/√state_dim) and
    /// reconstructible from `seed`; m = hidden·A.
    RandomRelu {
        state_dim: usize,
        hidden: usize,
        n_actions: usize,
        seed: u64,
        weight: Vec<f64>,
        bias: Vec<f64>,
    },
}

impl FeatureMap {
    pub fn tabular(n_states: usize, n_actions: usize) -> Self {
        FeatureMap::Tabular { n_states, n_actions }
    }

    /// Draws the hidden layer from `seed`: all `hidden × state_dim` weights
    /// row-major, then the `hidden` biases, each Uniform(−1/√d, 1/√d).
    pub fn random_relu(state_dim: usize, hidden: usize, n_actions: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (state_dim as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        let weight = (0..hidden * state_dim).map(|_| dist.sample(&mut rng)).collect();
        let bias = (0..hidden).map(|_| dist.sample(&mut rng)).collect();
        FeatureMap::RandomRelu { state_dim, hidden, n_actions, seed, weight, bias }
    }

    /// Total feature dimension m.
    pub fn dim(&self) -> usize {
        self.block_dim() * self.n_actions()
    }

    /// State block dimension p (m = p·A).
    pub fn block_dim(&self) -> usize {
        match self {
            FeatureMap::Tabular { n_states, .. } => *n_states,
            FeatureMap::RandomRelu { hidden, .. } => *hidden,
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            FeatureMap::Tabular { n_actions, .. } => *n_actions,
            FeatureMap::RandomRelu { n_actions, .. } => *n_actions,
        }
    }

    /// State block for a discrete state (tabular map only).
    pub fn state_block(&self, state: usize) -> Result<Vec<f64>, FeatureError> {
        match self {
            FeatureMap::Tabular { n_states, .. } => {
                if state >= *n_states {
                    return Err(FeatureError::DimensionMismatch(format!(
                        "state {state} out of range for {n_states} states"
                    )));
                }
                let mut block = vec![0.0; *n_states];
                block[state] = 1.0;
                Ok(block)
            }
            FeatureMap::RandomRelu { .. } => Err(FeatureError::DimensionMismatch(
                "random-ReLU features need a continuous state vector".into(),
            )),
        }
    }

    /// State block for a continuous state; `terminal` applies the
    /// termination indicator δ, zeroing the block.
    pub fn state_block_vec(&self, state: &[f64], terminal: bool) -> Result<Vec<f64>, FeatureError> {
        match self {
            FeatureMap::Tabular { .. } => Err(FeatureError::DimensionMismatch(
                "tabular features take a discrete state index".into(),
            )),
            FeatureMap::RandomRelu { state_dim, hidden, weight, bias, .. } => {
                if state.len() != *state_dim {
                    return Err(FeatureError::DimensionMismatch(format!(
                        "state vector has {} entries, expected {state_dim}",
                        state.len()
                    )));
                }
                if terminal {
                    return Ok(vec![0.0; *hidden]);
                }
                let mut block = vec![0.0; *hidden];
                for i in 0..*hidden {
                    let mut z = bias[i];
                    for (j, s) in state.iter().enumerate() {
                        z += weight[i * state_dim + j] * s;
                    }
                    block[i] = z.max(0.0);
                }
                Ok(block)
            }
        }
    }

    /// Full m-dimensional φ(x, a) for a discrete state.
    pub fn evaluate(&self, state: usize, action: usize) -> Result<Vec<f64>, FeatureError> {
        let block = self.state_block(state)?;
        self.embed(&block, action)
    }

    /// Full m-dimensional φ(s, a) for a continuous state.
    pub fn evaluate_vec(
        &self,
        state: &[f64],
        terminal: bool,
        action: usize,
    ) -> Result<Vec<f64>, FeatureError> {
        let block = self.state_block_vec(state, terminal)?;
        self.embed(&block, action)
    }

    /// Places a state block into the action slot: out[i·A + action] = block[i].
    pub fn embed(&self, block: &[f64], action: usize) -> Result<Vec<f64>, FeatureError> {
        let a_n = self.n_actions();
        if action >= a_n {
            return Err(FeatureError::DimensionMismatch(format!("action {action} out of range")));
        }
        if block.len() != self.block_dim() {
            return Err(FeatureError::DimensionMismatch("state block size".into()));
        }
        let mut out = vec![0.0; self.dim()];
        for (i, b) in block.iter().enumerate() {
            out[i * a_n + action] = *b;
        }
        Ok(out)
    }

    /// Serializes the map's defining parameters (ReLU weights are
    /// reconstructed from the seed on load, so runs stay bit-reproducible).
    pub fn to_descriptor(&self) -> String {
        match self {
            FeatureMap::Tabular { n_states, n_actions } => {
                format!("feature_map tabular\nn_states {n_states}\nn_actions {n_actions}\n")
            }
            FeatureMap::RandomRelu { state_dim, hidden, n_actions, seed, .. } => format!(
                "feature_map random_relu\nstate_dim {state_dim}\nhidden {hidden}\nn_actions {n_actions}\nseed {seed}\n"
            ),
        }
    }

    pub fn from_descriptor(text: &str) -> Result<Self, FeatureError> {
        let mut kind = None;
        let mut fields = std::collections::HashMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut toks = line.split_whitespace();
            match (toks.next(), toks.next()) {
                (Some("feature_map"), Some(k)) => kind = Some(k.to_string()),
                (Some(key), Some(val)) => {
                    let parsed: u64 = val
                        .parse()
                        .map_err(|e| FeatureError::Parse(format!("bad value {val:?}: {e}")))?;
                    fields.insert(key.to_string(), parsed);
                }
                _ => return Err(FeatureError::Parse(format!("bad line {line:?}"))),
            }
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| FeatureError::Parse(format!("missing field {k}")))
        };
        match kind.as_deref() {
            Some("tabular") => Ok(FeatureMap::tabular(get("n_states")? as usize, get("n_actions")? as usize)),
            Some("random_relu") => Ok(FeatureMap::random_relu(
                get("state_dim")? as usize,
                get("hidden")? as usize,
                get("n_actions")? as usize,
                get("seed")?,
            )),
            other => Err(FeatureError::Parse(format!("unknown feature map {other:?}"))),
        }
    }
}

/// Q_θ(x, ·) over all actions from a precomputed state block:
/// q[a] = Σ_i block[i] · θ[i·A + a].
pub fn q_row(theta: &Theta, block: &[f64], n_actions: usize) -> Vec<f64> {
    debug_assert_eq!(theta.len(), block.len() * n_actions);
    let mut q = vec![0.0; n_actions];
    for (i, b) in block.iter().enumerate() {
        if *b == 0.0 {
            continue;
        }
        let base = i * n_actions;
        for (a, qa) in q.iter_mut().enumerate() {
            *qa += b * theta.0[base + a];
        }
    }
    q
}

/// Q_θ(x, ·) for a discrete state.
pub fn q_values(theta: &Theta, fmap: &FeatureMap, state: usize) -> Result<Vec<f64>, FeatureError> {
    if theta.len() != fmap.dim() {
        return Err(FeatureError::DimensionMismatch(format!(
            "theta has {} entries, expected {}",
            theta.len(),
            fmap.dim()
        )));
    }
    Ok(q_row(theta, &fmap.state_block(state)?, fmap.n_actions()))
}

/// Q_θ(s, ·) for a continuous state with termination indicator.
pub fn q_values_vec(
    theta: &Theta,
    fmap: &FeatureMap,
    state: &[f64],
    terminal: bool,
) -> Result<Vec<f64>, FeatureError> {
    if theta.len() != fmap.dim() {
        return Err(FeatureError::DimensionMismatch("theta length".into()));
    }
    Ok(q_row(theta, &fmap.state_block_vec(state, terminal)?, fmap.n_actions()))
}
