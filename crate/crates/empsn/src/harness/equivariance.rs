//! Symmetry checking for trained predictors: readouts must be invariant
//! and predicted positions equivariant under random rigid motions of the
//! input (rotations, reflections, translations).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::complex::vietoris_rips;
use crate::geometry::{Point, RigidMotion};
use crate::model::{prepare, EmpsnModel};
use crate::nn::Tape;

use super::data::{GeometricSample, Target};
use super::HarnessError;

/// One prediction: a graph-level readout, predicted positions, or both.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub readout: Option<Vec<f64>>,
    pub positions: Option<Vec<Vec<f64>>>,
}

/// Anything that maps a geometric sample to a [`Prediction`].
pub trait GeometricPredictor {
    fn predict(&mut self, sample: &GeometricSample) -> Result<Prediction, HarnessError>;
}

/// Runs a model on single samples in evaluation mode, lifting each with the
/// model's own radius and dimension cap.
pub struct ModelPredictor<'a> {
    model: &'a mut EmpsnModel,
}

impl<'a> ModelPredictor<'a> {
    pub fn new(model: &'a mut EmpsnModel) -> Self {
        Self { model }
    }
}

impl GeometricPredictor for ModelPredictor<'_> {
    fn predict(&mut self, sample: &GeometricSample) -> Result<Prediction, HarnessError> {
        let cfg = self.model.config().clone();
        let points: Vec<Point<f64>> =
            sample.pos.iter().map(|p| Point::new(p.clone())).collect();
        let complex = vietoris_rips(&points, cfg.delta, cfg.max_dim)?;
        let velocities = if cfg.use_velocity {
            Some(vec![sample.vel.clone().ok_or_else(|| {
                HarnessError::Invalid("the model uses velocities but the sample has none".into())
            })?])
        } else {
            None
        };
        let batch = prepare(
            &cfg,
            &[&complex],
            std::slice::from_ref(&sample.feat),
            velocities.as_deref(),
        )?;
        let mut tape = Tape::new();
        let out = self.model.forward(&mut tape, &batch, false)?;
        let readout = out.readout.map(|node| tape.value(node).data().to_vec());
        let positions = out.positions.map(|node| {
            let m = tape.value(node);
            (0..m.rows())
                .map(|i| (0..m.cols()).map(|j| m.get(i, j)).collect())
                .collect()
        });
        Ok(Prediction { readout, positions })
    }
}

/// Applies a rigid motion to a sample: positions move as points, velocities
/// as vectors, and position-valued targets as points; features and scalar
/// targets are untouched.
pub fn transform_sample(
    sample: &GeometricSample,
    motion: &RigidMotion<f64>,
) -> Result<GeometricSample, HarnessError> {
    let move_points = |rows: &[Vec<f64>]| -> Result<Vec<Vec<f64>>, HarnessError> {
        rows.iter()
            .map(|p| {
                Ok(motion
                    .apply_point(&Point::new(p.clone()))?
                    .coords()
                    .to_vec())
            })
            .collect()
    };
    Ok(GeometricSample {
        pos: move_points(&sample.pos)?,
        feat: sample.feat.clone(),
        vel: sample
            .vel
            .as_ref()
            .map(|vs| vs.iter().map(|v| motion.apply_vector(v)).collect())
            .transpose()?,
        target: match &sample.target {
            Target::Scalars(y) => Target::Scalars(y.clone()),
            Target::Positions(rows) => Target::Positions(move_points(rows)?),
        },
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivarianceReport {
    pub trials: usize,
    /// Largest readout deviation across rigid motions, when a readout exists.
    pub max_invariance_residual: Option<f64>,
    /// Largest gap between moved predictions and predictions of moved
    /// inputs, when positions are predicted.
    pub max_equivariance_residual: Option<f64>,
    pub threshold: f64,
    pub passed: bool,
}

/// Draws `trials` random rigid motions (cycling through the samples),
/// comparing each moved prediction against the cached base prediction.
pub fn check_equivariance<P: GeometricPredictor>(
    predictor: &mut P,
    samples: &[GeometricSample],
    trials: usize,
    seed: u64,
    threshold: f64,
) -> Result<EquivarianceReport, HarnessError> {
    if samples.is_empty() {
        return Err(HarnessError::Invalid("no samples to check".into()));
    }
    if trials == 0 {
        return Err(HarnessError::Invalid("trials must be positive".into()));
    }
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(HarnessError::Invalid("threshold must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut base: Vec<Option<Prediction>> = vec![None; samples.len()];
    let mut max_inv: Option<f64> = None;
    let mut max_equi: Option<f64> = None;
    for t in 0..trials {
        let i = t % samples.len();
        let sample = &samples[i];
        if base[i].is_none() {
            let p = predictor.predict(sample)?;
            if p.readout.is_none() && p.positions.is_none() {
                return Err(HarnessError::Invalid(
                    "the predictor produced no outputs".into(),
                ));
            }
            base[i] = Some(p);
        }
        let b = base[i].as_ref().unwrap().clone();
        let g = RigidMotion::<f64>::random(sample.ambient_dim(), &mut rng);
        let moved = predictor.predict(&transform_sample(sample, &g)?)?;
        match (&b.readout, &moved.readout) {
            (Some(a), Some(c)) if a.len() == c.len() => {
                let r = a
                    .iter()
                    .zip(c)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                max_inv = Some(max_inv.unwrap_or(0.0).max(r));
            }
            (None, None) => {}
            _ => {
                return Err(HarnessError::Invalid(
                    "readout shape changed under a rigid motion".into(),
                ))
            }
        }
        match (&b.positions, &moved.positions) {
            (Some(a), Some(c)) if a.len() == c.len() => {
                let mut r = 0.0f64;
                for (row, got) in a.iter().zip(c) {
                    let want = g.apply_point(&Point::new(row.clone()))?;
                    for (x, y) in want.coords().iter().zip(got) {
                        r = r.max((x - y).abs());
                    }
                }
                max_equi = Some(max_equi.unwrap_or(0.0).max(r));
            }
            (None, None) => {}
            _ => {
                return Err(HarnessError::Invalid(
                    "position output shape changed under a rigid motion".into(),
                ))
            }
        }
    }
    let passed =
        max_inv.unwrap_or(0.0) <= threshold && max_equi.unwrap_or(0.0) <= threshold;
    Ok(EquivarianceReport {
        trials,
        max_invariance_residual: max_inv,
        max_equivariance_residual: max_equi,
        threshold,
        passed,
    })
}
