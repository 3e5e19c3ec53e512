//! Composite blocks shared by the models: two-layer MLPs (with optional
//! batch normalization between the layers), sigmoid gating, and Gaussian
//! Fourier feature embeddings.

use rand::Rng;
use rand_distr::StandardNormal;

use super::matrix::Matrix;
use super::optim::ParameterStore;
use super::tape::{NodeId, Tape};
use super::NnError;
use crate::scalar::{real, Real};

/// Registers the parameters of a two-layer MLP under `prefix`:
/// `<prefix>/l1`, `<prefix>/l2`, and — when `batch_norm` — a
/// `<prefix>/bn` block (γ ones, β zeros, frozen running statistics).
pub fn register_mlp2<R: Real, G: Rng>(
    store: &mut ParameterStore<R>,
    rng: &mut G,
    prefix: &str,
    in_dim: usize,
    hidden_dim: usize,
    out_dim: usize,
    batch_norm: bool,
) {
    store.register_linear(rng, &format!("{prefix}/l1"), in_dim, hidden_dim);
    store.register_linear(rng, &format!("{prefix}/l2"), hidden_dim, out_dim);
    if batch_norm {
        store.register(
            &format!("{prefix}/bn/gamma"),
            Matrix::from_vec(1, hidden_dim, vec![R::one(); hidden_dim]),
        );
        store.register(&format!("{prefix}/bn/beta"), Matrix::zeros(1, hidden_dim));
        store.register_frozen(
            &format!("{prefix}/bn/running_mean"),
            Matrix::zeros(1, hidden_dim),
        );
        store.register_frozen(
            &format!("{prefix}/bn/running_var"),
            Matrix::from_vec(1, hidden_dim, vec![R::one(); hidden_dim]),
        );
    }
}

/// Forward pass of a block registered with `register_mlp2`:
/// Linear → [BatchNorm] → Swish → Linear → [Swish if `final_swish`].
/// Batch normalization is applied iff the block was registered with it.
pub fn mlp2_forward<R: Real>(
    tape: &mut Tape<R>,
    store: &mut ParameterStore<R>,
    prefix: &str,
    x: NodeId,
    final_swish: bool,
    training: bool,
) -> Result<NodeId, NnError> {
    let mut h = tape.linear(store, &format!("{prefix}/l1"), x)?;
    if store.contains(&format!("{prefix}/bn/gamma")) {
        h = tape.batch_norm(store, &format!("{prefix}/bn"), h, training)?;
    }
    let a = tape.swish(h);
    let out = tape.linear(store, &format!("{prefix}/l2"), a)?;
    Ok(if final_swish { tape.swish(out) } else { out })
}

/// Registers a `hidden → 1` gate head under `<prefix>`.
pub fn register_gate<R: Real, G: Rng>(
    store: &mut ParameterStore<R>,
    rng: &mut G,
    prefix: &str,
    hidden_dim: usize,
) {
    store.register_linear(rng, prefix, hidden_dim, 1);
}

/// Per-row importance weighting: `m · sigmoid(linear(m))`.
pub fn gate_forward<R: Real>(
    tape: &mut Tape<R>,
    store: &ParameterStore<R>,
    prefix: &str,
    messages: NodeId,
) -> Result<NodeId, NnError> {
    let logits = tape.linear(store, prefix, messages)?;
    let g = tape.sigmoid(logits);
    Ok(tape.mul_col(messages, g))
}

/// Draws the frozen frequency matrix `B` (`in_dim × num_freqs`, entries
/// Normal(0, scale²)) and stores it under `<prefix>/freq`.
pub fn register_fourier<R: Real, G: Rng>(
    store: &mut ParameterStore<R>,
    rng: &mut G,
    prefix: &str,
    in_dim: usize,
    num_freqs: usize,
    scale: f64,
) {
    let b = Matrix::from_vec(
        in_dim,
        num_freqs,
        (0..in_dim * num_freqs)
            .map(|_| real::<R>(scale * rng.sample::<f64, _>(StandardNormal)))
            .collect(),
    );
    store.register_frozen(&format!("{prefix}/freq"), b);
}

/// `concat[cos(2π x B), sin(2π x B)]`; output width is `2 · num_freqs`.
pub fn fourier_forward<R: Real>(
    tape: &mut Tape<R>,
    store: &ParameterStore<R>,
    prefix: &str,
    x: NodeId,
) -> Result<NodeId, NnError> {
    let b = tape.param(store, &format!("{prefix}/freq"))?;
    let xb = tape.matmul(x, b);
    let scaled = tape.scale(xb, real::<R>(2.0) * R::PI());
    let c = tape.cos(scaled);
    let s = tape.sin(scaled);
    Ok(tape.concat_cols(&[c, s]))
}
