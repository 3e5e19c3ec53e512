//! Charged-particle dynamics in R³: leapfrog-integrated Coulomb forces
//! between unit-mass bodies, used to synthesize trajectory-prediction
//! datasets.  Each sample records the initial state and the positions
//! after `num_steps` integration steps as the target.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::data::{GeometricSample, Target};
use super::HarnessError;

/// Standard deviation of initial positions.
pub const POS_STD: f64 = 0.5;
/// Standard deviation of initial velocities.
pub const VEL_STD: f64 = 0.5;

const AMBIENT: usize = 3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NBodyConfig {
    pub num_bodies: usize,
    pub dt: f64,
    pub num_steps: usize,
    pub softening: f64,
    pub seed: u64,
    pub num_train: usize,
    pub num_val: usize,
    pub num_test: usize,
}

impl Default for NBodyConfig {
    fn default() -> Self {
        Self {
            num_bodies: 5,
            dt: 1e-3,
            num_steps: 1000,
            softening: 0.1,
            seed: 0,
            num_train: 3000,
            num_val: 2000,
            num_test: 2000,
        }
    }
}

impl NBodyConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.num_bodies < 2 {
            return Err(HarnessError::Invalid(
                "need at least two bodies to interact".into(),
            ));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(HarnessError::Invalid("dt must be positive".into()));
        }
        if self.num_steps == 0 {
            return Err(HarnessError::Invalid("num_steps must be positive".into()));
        }
        if !(self.softening.is_finite() && self.softening > 0.0) {
            return Err(HarnessError::Invalid("softening must be positive".into()));
        }
        Ok(())
    }

    /// Scales the train/val/test trajectory counts, rounding and keeping
    /// each split non-empty.
    pub fn scaled(mut self, scale: f64) -> Result<Self, HarnessError> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(HarnessError::Invalid("scale must be positive".into()));
        }
        let apply = |n: usize| (((n as f64) * scale).round() as usize).max(1);
        self.num_train = apply(self.num_train);
        self.num_val = apply(self.num_val);
        self.num_test = apply(self.num_test);
        Ok(self)
    }
}

/// Coulomb accelerations a_i = Σ_{j≠i} q_i q_j (x_i−x_j)/(|x_i−x_j|²+ε²)^{3/2}
/// for unit masses, accumulated once per pair so the total is exactly zero.
fn accelerations(pos: &[Vec<f64>], charges: &[f64], softening: f64) -> Vec<Vec<f64>> {
    let n = pos.len();
    let mut acc = vec![vec![0.0; AMBIENT]; n];
    for i in 0..n {
        for j in i + 1..n {
            let mut r2 = softening * softening;
            let mut d = [0.0; AMBIENT];
            for k in 0..AMBIENT {
                d[k] = pos[i][k] - pos[j][k];
                r2 += d[k] * d[k];
            }
            let w = charges[i] * charges[j] / (r2 * r2.sqrt());
            for k in 0..AMBIENT {
                acc[i][k] += w * d[k];
                acc[j][k] -= w * d[k];
            }
        }
    }
    acc
}

/// One kick-drift-kick step; `acc` must hold the accelerations at the
/// incoming positions, and the accelerations at the new positions are
/// returned for reuse.
pub fn leapfrog_step(
    pos: &mut [Vec<f64>],
    vel: &mut [Vec<f64>],
    acc: &[Vec<f64>],
    charges: &[f64],
    dt: f64,
    softening: f64,
) -> Vec<Vec<f64>> {
    for (v, a) in vel.iter_mut().zip(acc) {
        for k in 0..AMBIENT {
            v[k] += 0.5 * dt * a[k];
        }
    }
    for (x, v) in pos.iter_mut().zip(vel.iter()) {
        for k in 0..AMBIENT {
            x[k] += dt * v[k];
        }
    }
    let next = accelerations(pos, charges, softening);
    for (v, a) in vel.iter_mut().zip(&next) {
        for k in 0..AMBIENT {
            v[k] += 0.5 * dt * a[k];
        }
    }
    next
}

/// Integrates `num_steps` leapfrog steps from the given state and returns
/// the final positions and velocities.
pub fn simulate_from(
    pos: &[Vec<f64>],
    vel: &[Vec<f64>],
    charges: &[f64],
    dt: f64,
    num_steps: usize,
    softening: f64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut x: Vec<Vec<f64>> = pos.to_vec();
    let mut v: Vec<Vec<f64>> = vel.to_vec();
    let mut acc = accelerations(&x, charges, softening);
    for _ in 0..num_steps {
        acc = leapfrog_step(&mut x, &mut v, &acc, charges, dt, softening);
    }
    (x, v)
}

/// Draws initial conditions from the trajectory's own RNG stream and
/// integrates them; the stream index makes each trajectory independent of
/// how many others were generated before it.
fn sample_trajectory(cfg: &NBodyConfig, stream: u64) -> GeometricSample {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let n = cfg.num_bodies;
    let charges: Vec<f64> = (0..n).map(|_| if rng.random() { 1.0 } else { -1.0 }).collect();
    let gaussian_rows = |rng: &mut ChaCha8Rng, std: f64| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                (0..AMBIENT)
                    .map(|_| std * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect()
    };
    let pos = gaussian_rows(&mut rng, POS_STD);
    let vel = gaussian_rows(&mut rng, VEL_STD);
    let (end_pos, _) = simulate_from(&pos, &vel, &charges, cfg.dt, cfg.num_steps, cfg.softening);
    GeometricSample {
        pos,
        feat: charges.iter().map(|&q| vec![q]).collect(),
        vel: Some(vel),
        target: Target::Positions(end_pos),
    }
}

#[derive(Debug, Clone)]
pub struct NBodyDataset {
    pub train: Vec<GeometricSample>,
    pub val: Vec<GeometricSample>,
    pub test: Vec<GeometricSample>,
}

/// Generates disjoint train/val/test splits; trajectory `i` always uses RNG
/// stream `i`, so the same seed reproduces the same data at any scale.
pub fn simulate_dataset(cfg: &NBodyConfig) -> Result<NBodyDataset, HarnessError> {
    cfg.validate()?;
    let mut splits = [Vec::new(), Vec::new(), Vec::new()];
    let mut stream = 0u64;
    for (slot, count) in splits.iter_mut().zip([cfg.num_train, cfg.num_val, cfg.num_test]) {
        for _ in 0..count {
            slot.push(sample_trajectory(cfg, stream));
            stream += 1;
        }
    }
    let [train, val, test] = splits;
    Ok(NBodyDataset { train, val, test })
}
