//! Named parameter storage with gradients and Adam moment buffers, plus the
//! cosine-annealing learning-rate schedule.
//!
//! Iteration is always in name order (BTreeMap), which makes initialization,
//! updates, and checkpoints deterministic for a fixed seed.

use std::collections::BTreeMap;

use rand::Rng;

use super::matrix::Matrix;
use super::NnError;
use crate::scalar::{real, Real};

struct Entry<R> {
    value: Matrix<R>,
    grad: Matrix<R>,
    m: Matrix<R>,
    v: Matrix<R>,
    trainable: bool,
}

/// All parameters (and frozen buffers) of one model, keyed by name.
pub struct ParameterStore<R> {
    entries: BTreeMap<String, Entry<R>>,
    step: u64,
    has_grads: bool,
}

impl<R: Real> Default for ParameterStore<R> {
    fn default() -> Self {
        Self::new()
    }
}

impl<R: Real> ParameterStore<R> {
    pub fn new() -> Self {
        Self {
            entries: BTreeMap::new(),
            step: 0,
            has_grads: false,
        }
    }

    /// Registers a trainable parameter. A name may be registered once.
    pub fn register(&mut self, name: &str, value: Matrix<R>) {
        self.insert(name, value, true);
    }

    /// Registers a non-trainable buffer (frozen frequencies, running
    /// statistics); persisted in checkpoints, skipped by the optimizer.
    pub fn register_frozen(&mut self, name: &str, value: Matrix<R>) {
        self.insert(name, value, false);
    }

    fn insert(&mut self, name: &str, value: Matrix<R>, trainable: bool) {
        let (rows, cols) = value.shape();
        let prev = self.entries.insert(
            name.to_string(),
            Entry {
                value,
                grad: Matrix::zeros(rows, cols),
                m: Matrix::zeros(rows, cols),
                v: Matrix::zeros(rows, cols),
                trainable,
            },
        );
        assert!(prev.is_none(), "parameter {name} registered twice");
    }

    /// Registers `W` (fan_in × fan_out, uniform in ±√(1/fan_in)) and a zero
    /// bias `1 × fan_out` under `<prefix>/w` and `<prefix>/b`.
    pub fn register_linear<G: Rng>(
        &mut self,
        rng: &mut G,
        prefix: &str,
        fan_in: usize,
        fan_out: usize,
    ) {
        let bound = (1.0 / fan_in as f64).sqrt();
        let w = Matrix::from_vec(
            fan_in,
            fan_out,
            (0..fan_in * fan_out)
                .map(|_| real::<R>(rng.random_range(-bound..bound)))
                .collect(),
        );
        self.register(&format!("{prefix}/w"), w);
        self.register(&format!("{prefix}/b"), Matrix::zeros(1, fan_out));
    }

    pub fn get(&self, name: &str) -> Result<&Matrix<R>, NnError> {
        self.entries
            .get(name)
            .map(|e| &e.value)
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn set(&mut self, name: &str, value: Matrix<R>) -> Result<(), NnError> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))?;
        if entry.value.shape() != value.shape() {
            return Err(NnError::Shape(format!(
                "{name}: {:?} vs {:?}",
                entry.value.shape(),
                value.shape()
            )));
        }
        entry.value = value;
        Ok(())
    }

    pub fn grad(&self, name: &str) -> Result<&Matrix<R>, NnError> {
        self.entries
            .get(name)
            .map(|e| &e.grad)
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn zero_grads(&mut self) {
        for e in self.entries.values_mut() {
            e.grad.fill(R::zero());
        }
        self.has_grads = false;
    }

    pub(crate) fn accumulate_grad(&mut self, name: &str, delta: &Matrix<R>) {
        let entry = self.entries.get_mut(name).expect("gradient for unknown parameter");
        entry.grad.add_assign(delta);
        self.has_grads = true;
    }

    /// Names in deterministic order; `trainable_only` filters buffers out.
    pub fn names(&self, trainable_only: bool) -> Vec<String> {
        self.entries
            .iter()
            .filter(|(_, e)| !trainable_only || e.trainable)
            .map(|(n, _)| n.clone())
            .collect()
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.entries.get(name).is_some_and(|e| e.trainable)
    }

    /// Total trainable scalar count.
    pub fn num_params(&self) -> usize {
        self.entries
            .values()
            .filter(|e| e.trainable)
            .map(|e| e.value.data().len())
            .sum()
    }

    /// Total scalar count including frozen buffers.
    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|e| e.value.data().len()).sum()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    /// One Adam step with bias correction. Weight decay is decoupled:
    /// θ ← θ·(1 − lr·wd) applied before the moment update.
    pub fn adam_step(
        &mut self,
        lr: R,
        beta1: R,
        beta2: R,
        eps: R,
        weight_decay: R,
    ) -> Result<(), NnError> {
        if !self.has_grads {
            return Err(NnError::Usage(
                "adam_step called with no accumulated gradients".into(),
            ));
        }
        self.step += 1;
        let t = real::<R>(self.step as f64);
        let bc1 = R::one() - beta1.powf(t);
        let bc2 = R::one() - beta2.powf(t);
        for e in self.entries.values_mut() {
            if !e.trainable {
                continue;
            }
            let decay = R::one() - lr * weight_decay;
            for i in 0..e.value.data().len() {
                let g = e.grad.data()[i];
                let m = beta1 * e.m.data()[i] + (R::one() - beta1) * g;
                let v = beta2 * e.v.data()[i] + (R::one() - beta2) * g * g;
                e.m.data_mut()[i] = m;
                e.v.data_mut()[i] = v;
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                let theta = e.value.data()[i] * decay;
                e.value.data_mut()[i] = theta - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// η(step) = η_min + ½(η_max − η_min)(1 + cos(π·step/total)).
pub fn cosine_lr<R: Real>(
    step: u64,
    total_steps: u64,
    eta_max: R,
    eta_min: R,
) -> Result<R, NnError> {
    if total_steps == 0 || step > total_steps {
        return Err(NnError::Usage(format!(
            "cosine_lr step {step} outside 0..={total_steps}"
        )));
    }
    let phase = real::<R>(step as f64 / total_steps as f64) * R::PI();
    Ok(eta_min + (eta_max - eta_min) * (R::one() + phase.cos()) / real::<R>(2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn store_with(value: f64) -> ParameterStore<f64> {
        let mut s = ParameterStore::new();
        s.register("theta", Matrix::from_vec(1, 1, vec![value]));
        s
    }

    #[test]
    fn first_step_approximates_signed_lr() {
        for g in [0.3, -2.0, 17.0] {
            let mut s = store_with(1.0);
            s.accumulate_grad("theta", &Matrix::from_vec(1, 1, vec![g]));
            s.adam_step(1e-3, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, 0.0).unwrap();
            let update = s.get("theta").unwrap().get(0, 0) - 1.0;
            let expect = -1e-3 * g.signum();
            assert!(
                ((update - expect) / expect).abs() < 1e-6,
                "g={g}: update {update}"
            );
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut s = store_with(0.7);
        s.accumulate_grad("theta", &Matrix::zeros(1, 1));
        s.adam_step(1e-2, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, 0.0).unwrap();
        assert_eq!(s.get("theta").unwrap().get(0, 0), 0.7);
    }

    #[test]
    fn step_without_gradients_is_a_usage_error() {
        let mut s = store_with(1.0);
        assert!(matches!(
            s.adam_step(1e-3, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, 0.0),
            Err(NnError::Usage(_))
        ));
    }

    #[test]
    fn quadratic_loss_decreases_monotonically() {
        // loss = ½θ², gradient = θ; Adam's normalized step is ≈ lr·sign(θ),
        // so the decrease is monotone while |θ| stays well above lr
        let mut s = store_with(1.0);
        let mut losses = Vec::new();
        for _ in 0..10 {
            let theta = s.get("theta").unwrap().get(0, 0);
            losses.push(0.5 * theta * theta);
            s.zero_grads();
            s.accumulate_grad("theta", &Matrix::from_vec(1, 1, vec![theta]));
            s.adam_step(0.05, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, 0.0).unwrap();
        }
        for w in losses.windows(2) {
            assert!(w[1] < w[0], "loss went {} -> {}", w[0], w[1]);
        }
        assert!(*losses.last().unwrap() < 0.5 * losses[0]);
    }

    #[test]
    fn decoupled_weight_decay_shrinks_before_update() {
        let mut s = store_with(10.0);
        s.accumulate_grad("theta", &Matrix::zeros(1, 1));
        s.adam_step(0.1, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, 0.5).unwrap();
        // zero gradient: the only effect is θ·(1 − lr·wd) = 10·0.95
        assert!((s.get("theta").unwrap().get(0, 0) - 9.5).abs() < 1e-12);
    }

    #[test]
    fn frozen_buffers_never_move() {
        let mut s = ParameterStore::<f64>::new();
        s.register("w", Matrix::from_vec(1, 1, vec![1.0]));
        s.register_frozen("freq", Matrix::from_vec(1, 1, vec![3.5]));
        s.accumulate_grad("w", &Matrix::from_vec(1, 1, vec![1.0]));
        s.adam_step(0.1, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, 0.0).unwrap();
        assert_eq!(s.get("freq").unwrap().get(0, 0), 3.5);
        assert_eq!(s.num_params(), 1);
        assert_eq!(s.num_scalars(), 2);
    }

    #[test]
    #[should_panic(expected = "registered twice")]
    fn duplicate_registration_panics() {
        let mut s = ParameterStore::<f64>::new();
        s.register("w", Matrix::zeros(1, 1));
        s.register("w", Matrix::zeros(1, 1));
    }

    #[test]
    fn initialization_is_deterministic_per_seed() {
        let build = || {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let mut s = ParameterStore::<f64>::new();
            s.register_linear(&mut rng, "layer0", 8, 16);
            s.register_linear(&mut rng, "layer1", 16, 4);
            s
        };
        let (a, b) = (build(), build());
        for name in a.names(false) {
            assert_eq!(a.get(&name).unwrap(), b.get(&name).unwrap());
        }
        let bound = (1.0f64 / 8.0).sqrt();
        assert!(a.get("layer0/w").unwrap().data().iter().all(|x| x.abs() < bound));
        assert!(a.get("layer0/b").unwrap().data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn cosine_schedule_endpoints_and_midpoint() {
        assert_eq!(cosine_lr(0, 100, 1e-3_f64, 0.0).unwrap(), 1e-3);
        assert!(cosine_lr(100, 100, 1e-3_f64, 0.0).unwrap().abs() < 1e-19);
        assert!((cosine_lr(50, 100, 1e-3_f64, 0.0).unwrap() - 5e-4).abs() < 1e-12);
        let with_min = cosine_lr(10, 10, 1e-3_f64, 1e-5).unwrap();
        assert!((with_min - 1e-5).abs() < 1e-18);
        assert!(cosine_lr(11, 10, 1e-3_f64, 0.0).is_err());
    }
}
