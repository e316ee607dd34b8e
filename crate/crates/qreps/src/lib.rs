//! Q-REPS: relative-entropy policy search driven by the logistic Bellman error.
//!
//! The library is organized around a tabular MDP core plus a linear
//! function-approximation layer:
//!
//! * [`mdp`] — tabular MDPs, policies, occupancy measures, batch sampling.
//! * [`features`] — one-hot and random-ReLU state-action feature maps.
//! * [`lbe`] — soft value functions, Bellman errors, and the logistic
//!   Bellman error family (exact, empirical, semi-empirical).
//! * [`saddle`] — the saddle-point reformulation of the empirical loss and
//!   the alternating learner/sampler optimizer.
//! * [`agent`] — the outer policy-iteration loop (empirical and exact).
//! * [`envs`] — pinned benchmark environments, including a cart-pole
//!   simulator.
//! * [`oracle`] — slow-but-sure reference computations: exact loss
//!   minimization, the regret decomposition, bias curves, action gaps.

pub mod agent;
pub mod envs;
pub mod features;
pub mod lbe;
pub mod mdp;
pub mod numeric;
pub mod oracle;
pub mod saddle;
