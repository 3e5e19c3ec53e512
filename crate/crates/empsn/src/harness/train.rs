//! Training and evaluation loops: lifts each sample to a simplicial complex
//! once, then runs minibatch Adam with a per-epoch shuffle, tracking the
//! best validation loss as a checkpoint (with any target normalization
//! stored alongside) and a per-epoch metrics CSV.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::complex::{vietoris_rips, SimplicialComplex};
use crate::geometry::Point;
use crate::model::{prepare, EmpsnModel};
use crate::nn::optim::{cosine_lr, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
use crate::nn::{Matrix, Tape};

use super::data::{GeometricSample, Target};
use super::HarnessError;

const ABS_FLOOR: f64 = 1e-24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Mse,
    Mae,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mae,
    Mse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    Constant,
    Cosine { eta_min: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub schedule: Schedule,
    pub weight_decay: f64,
    pub loss: Loss,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(HarnessError::Invalid(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(HarnessError::Invalid("lr must be finite and >= 0".into()));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(HarnessError::Invalid(
                "weight_decay must be finite and >= 0".into(),
            ));
        }
        if let Schedule::Cosine { eta_min } = self.schedule {
            if !(eta_min.is_finite() && eta_min >= 0.0) {
                return Err(HarnessError::Invalid(
                    "eta_min must be finite and >= 0".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Trajectory regression profile: batch 100, constant learning rate,
/// weight decay 1e-12, squared-error loss.
pub fn nbody_profile(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 100,
        lr: 1e-3,
        schedule: Schedule::Constant,
        weight_decay: 1e-12,
        loss: Loss::Mse,
        seed: 0,
    }
}

/// Molecular graph regression profile: batch 128, cosine-annealed learning
/// rate from 5e-4, weight decay 1e-16, absolute-error loss.
pub fn qm9_profile(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 128,
        lr: 5e-4,
        schedule: Schedule::Cosine { eta_min: 0.0 },
        weight_decay: 1e-16,
        loss: Loss::Mae,
        seed: 0,
    }
}

/// Per-column affine target transform y' = (y − mean) / spread with spread
/// the mean absolute deviation; a zero spread divides by one instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub spread: Vec<f64>,
    pub degenerate: Vec<bool>,
}

impl Normalization {
    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(&self.mean)
            .zip(&self.spread)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn denormalize(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(&self.mean)
            .zip(&self.spread)
            .map(|((v, m), s)| v * s + m)
            .collect()
    }
}

/// Fits a [`Normalization`] column-wise on the given target vectors.
pub fn normalize_targets(targets: &[Vec<f64>]) -> Result<Normalization, HarnessError> {
    let width = match targets.first() {
        Some(t) if !t.is_empty() => t.len(),
        _ => {
            return Err(HarnessError::Invalid(
                "cannot fit normalization on empty targets".into(),
            ))
        }
    };
    if targets.iter().any(|t| t.len() != width) {
        return Err(HarnessError::Invalid(
            "targets have mixed widths".into(),
        ));
    }
    let n = targets.len() as f64;
    let mut mean = vec![0.0; width];
    for t in targets {
        for (m, v) in mean.iter_mut().zip(t) {
            *m += v / n;
        }
    }
    let mut spread = vec![0.0; width];
    for t in targets {
        for ((s, v), m) in spread.iter_mut().zip(t).zip(&mean) {
            *s += (v - m).abs() / n;
        }
    }
    let degenerate: Vec<bool> = spread.iter().map(|&s| s == 0.0).collect();
    for (s, &d) in spread.iter_mut().zip(&degenerate) {
        if d {
            eprintln!("warning: constant target column; skipping its rescaling");
            *s = 1.0;
        }
    }
    Ok(Normalization {
        mean,
        spread,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs: Vec<EpochRow>,
    pub best_val: f64,
    pub best_epoch: usize,
    pub normalization: Option<Normalization>,
    /// Best-validation checkpoint written during training.
    pub checkpoint: PathBuf,
}

/// Writes the per-epoch metrics table; floats use the shortest
/// representation that round-trips.
pub fn write_metrics_csv(path: &Path, rows: &[EpochRow]) -> Result<(), HarnessError> {
    let mut out = String::from("epoch,lr,train_loss,val_loss,wall_seconds\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch, r.lr, r.train_loss, r.val_loss, r.wall_seconds
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Samples lifted once up front, with targets flattened to rows of the
/// prediction matrix (one row per sample for graph tasks, one per point
/// for trajectory tasks).
struct LiftedSet {
    complexes: Vec<SimplicialComplex<f64>>,
    features: Vec<Vec<Vec<f64>>>,
    velocities: Option<Vec<Vec<Vec<f64>>>>,
    targets: Vec<Vec<f64>>,
    target_cols: usize,
}

impl LiftedSet {
    fn build(
        samples: &[GeometricSample],
        model: &EmpsnModel,
        norm: Option<&Normalization>,
    ) -> Result<Self, HarnessError> {
        let cfg = model.config();
        if samples.is_empty() {
            return Err(HarnessError::Invalid("empty sample set".into()));
        }
        let graph_task = cfg.target_width > 0;
        let mut complexes = Vec::with_capacity(samples.len());
        let mut features = Vec::with_capacity(samples.len());
        let mut velocities = cfg.use_velocity.then(Vec::new);
        let mut targets = Vec::with_capacity(samples.len());
        let mut target_cols = 0;
        for (i, s) in samples.iter().enumerate() {
            s.validate()
                .map_err(|msg| HarnessError::Invalid(format!("sample {i}: {msg}")))?;
            let points: Vec<Point<f64>> =
                s.pos.iter().map(|p| Point::new(p.clone())).collect();
            complexes.push(vietoris_rips(&points, cfg.delta, cfg.max_dim)?);
            features.push(s.feat.clone());
            if let Some(vels) = velocities.as_mut() {
                vels.push(s.vel.clone().ok_or_else(|| {
                    HarnessError::Invalid(format!(
                        "sample {i} lacks velocities but the model uses them"
                    ))
                })?);
            }
            let rows: Vec<f64> = match (&s.target, graph_task) {
                (Target::Scalars(y), true) => {
                    if y.len() != cfg.target_width {
                        return Err(HarnessError::Invalid(format!(
                            "sample {i}: target width {} but the model predicts {}",
                            y.len(),
                            cfg.target_width
                        )));
                    }
                    target_cols = cfg.target_width;
                    match norm {
                        Some(n) => n.normalize(y),
                        None => y.clone(),
                    }
                }
                (Target::Positions(rows), false) => {
                    target_cols = s.ambient_dim();
                    rows.iter().flatten().copied().collect()
                }
                (Target::Scalars(_), false) => {
                    return Err(HarnessError::Invalid(format!(
                        "sample {i} has a scalar target but the model predicts positions"
                    )));
                }
                (Target::Positions(_), true) => {
                    return Err(HarnessError::Invalid(format!(
                        "sample {i} has a position target but the model has a readout head"
                    )));
                }
            };
            targets.push(rows);
        }
        Ok(Self {
            complexes,
            features,
            velocities,
            targets,
            target_cols,
        })
    }

    fn len(&self) -> usize {
        self.complexes.len()
    }

    fn target_matrix(&self, idx: &[usize]) -> Matrix<f64> {
        let data: Vec<f64> = idx
            .iter()
            .flat_map(|&i| self.targets[i].iter().copied())
            .collect();
        Matrix::from_vec(data.len() / self.target_cols, self.target_cols, data)
    }
}

/// Forward pass over the index batch plus the loss node against the batch
/// targets; returns the loss node and its scalar value.
fn batch_loss(
    model: &mut EmpsnModel,
    tape: &mut Tape<f64>,
    set: &LiftedSet,
    idx: &[usize],
    loss: Loss,
    training: bool,
) -> Result<(crate::nn::NodeId, f64), HarnessError> {
    let complexes: Vec<&SimplicialComplex<f64>> =
        idx.iter().map(|&i| &set.complexes[i]).collect();
    let features: Vec<Vec<Vec<f64>>> =
        idx.iter().map(|&i| set.features[i].clone()).collect();
    let velocities: Option<Vec<Vec<Vec<f64>>>> = set
        .velocities
        .as_ref()
        .map(|v| idx.iter().map(|&i| v[i].clone()).collect());
    let batch = prepare(
        model.config(),
        &complexes,
        &features,
        velocities.as_deref(),
    )?;
    let out = model.forward(tape, &batch, training)?;
    let graph_task = model.config().target_width > 0;
    let pred = if graph_task {
        out.readout.expect("readout head is on for graph tasks")
    } else {
        out.positions.ok_or_else(|| {
            HarnessError::Invalid(
                "trajectory training needs a position-updating model".into(),
            )
        })?
    };
    let target = tape.constant(set.target_matrix(idx));
    let (rows, cols) = tape.value(pred).shape();
    let diff = tape.sub(pred, target);
    let sq = tape.mul(diff, diff);
    let summed = match loss {
        Loss::Mse => tape.sum_all(sq),
        Loss::Mae => {
            let abs = tape.sqrt_guarded(sq, ABS_FLOOR);
            tape.sum_all(abs)
        }
    };
    let mean = tape.scale(summed, 1.0 / (rows * cols) as f64);
    let value = tape.value(mean).data()[0];
    Ok((mean, value))
}

/// Runs minibatch Adam, leaving `model` in its final-epoch state; the best
/// validation checkpoint goes to `<out_dir>/model.json` (with the fitted
/// target normalization in its metadata) and the per-epoch table to
/// `<out_dir>/metrics.csv`.
pub fn train(
    model: &mut EmpsnModel,
    train_set: &[GeometricSample],
    val_set: &[GeometricSample],
    tc: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainReport, HarnessError> {
    tc.validate()?;
    let cfg = model.config().clone();
    if cfg.relift && tc.batch_size != 1 {
        return Err(HarnessError::Invalid(
            "re-lifting models train with batch_size 1".into(),
        ));
    }
    let graph_task = cfg.target_width > 0;
    let norm = if graph_task {
        let raw: Vec<Vec<f64>> = train_set
            .iter()
            .filter_map(|s| match &s.target {
                Target::Scalars(y) => Some(y.clone()),
                Target::Positions(_) => None,
            })
            .collect();
        if raw.len() != train_set.len() {
            return Err(HarnessError::Invalid(
                "graph training needs scalar targets on every sample".into(),
            ));
        }
        Some(normalize_targets(&raw)?)
    } else {
        None
    };
    let train_lifted = LiftedSet::build(train_set, model, norm.as_ref())?;
    let val_lifted = LiftedSet::build(val_set, model, norm.as_ref())?;

    fs::create_dir_all(out_dir)?;
    let checkpoint = out_dir.join("model.json");
    let num_batches = train_lifted.len().div_ceil(tc.batch_size);
    let total_steps = (tc.epochs * num_batches) as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut order: Vec<usize> = (0..train_lifted.len()).collect();
    let mut rows: Vec<EpochRow> = Vec::with_capacity(tc.epochs);
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut global_step = 0u64;

    for epoch in 1..=tc.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut epoch_lr = tc.lr;
        let mut train_sum = 0.0;
        let mut train_entries = 0.0;
        for (b, idx) in order.chunks(tc.batch_size).enumerate() {
            let mut tape = Tape::new();
            let (loss_node, value) =
                batch_loss(model, &mut tape, &train_lifted, idx, tc.loss, true)?;
            if !value.is_finite() {
                return Err(HarnessError::Diverged(format!(
                    "train loss {value} at epoch {epoch}, batch {b}"
                )));
            }
            let entries = idx
                .iter()
                .map(|&i| train_lifted.targets[i].len())
                .sum::<usize>() as f64;
            train_sum += value * entries;
            train_entries += entries;
            let lr = match tc.schedule {
                Schedule::Constant => tc.lr,
                Schedule::Cosine { eta_min } => {
                    cosine_lr(global_step, total_steps, tc.lr, eta_min)?
                }
            };
            if b == 0 {
                epoch_lr = lr;
            }
            model.store_mut().zero_grads();
            tape.backward(loss_node, model.store_mut())?;
            model
                .store_mut()
                .adam_step(lr, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, tc.weight_decay)?;
            global_step += 1;
        }

        let mut val_sum = 0.0;
        let mut val_entries = 0.0;
        let val_order: Vec<usize> = (0..val_lifted.len()).collect();
        for idx in val_order.chunks(tc.batch_size) {
            let mut tape = Tape::new();
            let (_, value) =
                batch_loss(model, &mut tape, &val_lifted, idx, tc.loss, false)?;
            if !value.is_finite() {
                return Err(HarnessError::Diverged(format!(
                    "validation loss {value} at epoch {epoch}"
                )));
            }
            let entries = idx
                .iter()
                .map(|&i| val_lifted.targets[i].len())
                .sum::<usize>() as f64;
            val_sum += value * entries;
            val_entries += entries;
        }
        let train_loss = train_sum / train_entries;
        let val_loss = val_sum / val_entries;

        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            let mut meta = serde_json::Map::new();
            meta.insert("epoch".into(), serde_json::json!(epoch));
            meta.insert("val_loss".into(), serde_json::json!(val_loss));
            if let Some(n) = &norm {
                meta.insert(
                    "normalization".into(),
                    serde_json::to_value(n).map_err(crate::nn::NnError::from)?,
                );
            }
            model.save_with_meta(&checkpoint, meta)?;
        }

        rows.push(EpochRow {
            epoch,
            lr: epoch_lr,
            train_loss,
            val_loss,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }

    write_metrics_csv(&out_dir.join("metrics.csv"), &rows)?;
    Ok(TrainReport {
        epochs: rows,
        best_val,
        best_epoch,
        normalization: norm,
        checkpoint,
    })
}

/// Mean absolute or squared error over every predicted entry, with graph
/// predictions mapped back through `normalization` before comparison.
pub fn evaluate(
    model: &mut EmpsnModel,
    samples: &[GeometricSample],
    metric: Metric,
    normalization: Option<&Normalization>,
) -> Result<f64, HarnessError> {
    if samples.is_empty() {
        return Err(HarnessError::Invalid("nothing to evaluate".into()));
    }
    let cfg = model.config().clone();
    let graph_task = cfg.target_width > 0;
    if !graph_task && normalization.is_some() {
        return Err(HarnessError::Invalid(
            "position targets are never normalized".into(),
        ));
    }
    let lifted = LiftedSet::build(samples, model, None)?;
    let chunk = if cfg.relift { 1 } else { 100 };
    let order: Vec<usize> = (0..lifted.len()).collect();
    let mut sum = 0.0;
    let mut count = 0.0;
    for idx in order.chunks(chunk) {
        let complexes: Vec<&SimplicialComplex<f64>> =
            idx.iter().map(|&i| &lifted.complexes[i]).collect();
        let features: Vec<Vec<Vec<f64>>> =
            idx.iter().map(|&i| lifted.features[i].clone()).collect();
        let velocities: Option<Vec<Vec<Vec<f64>>>> = lifted
            .velocities
            .as_ref()
            .map(|v| idx.iter().map(|&i| v[i].clone()).collect());
        let batch = prepare(&cfg, &complexes, &features, velocities.as_deref())?;
        let mut tape = Tape::new();
        let out = model.forward(&mut tape, &batch, false)?;
        let pred_node = if graph_task {
            out.readout.expect("readout head is on for graph tasks")
        } else {
            out.positions.ok_or_else(|| {
                HarnessError::Invalid(
                    "trajectory evaluation needs a position-updating model".into(),
                )
            })?
        };
        let pred = tape.value(pred_node);
        let mut row = 0;
        for &i in idx {
            let rows_here = lifted.targets[i].len() / lifted.target_cols;
            for r in 0..rows_here {
                let mut out_row: Vec<f64> =
                    (0..lifted.target_cols).map(|j| pred.get(row, j)).collect();
                if let Some(n) = normalization {
                    out_row = n.denormalize(&out_row);
                }
                for (j, p) in out_row.iter().enumerate() {
                    let t = lifted.targets[i][r * lifted.target_cols + j];
                    let d = p - t;
                    sum += match metric {
                        Metric::Mae => d.abs(),
                        Metric::Mse => d * d,
                    };
                    count += 1.0;
                }
                row += 1;
            }
        }
    }
    Ok(sum / count)
}
