//! The message passing network: embeddings, per-relation gated messages,
//! residual feature updates, readout, and the equivariant position update.
//!
//! All parameters live in a flat [`ParameterStore`] under stable names
//! (`embed_{d}`, `layer{l}/msg_{relation}`, `layer{l}/upd_{d}`, ...), so a
//! model is reconstructible from its config plus a checkpoint, and parameter
//! counts are reproducible from the config alone.

use std::path::Path;
use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::complex::adjacency::AdjacencyKind;
use crate::complex::{vietoris_rips, SimplicialComplex};
use crate::geometry::Point;
use crate::invariants::layout_len;
use crate::nn::blocks::{
    fourier_forward, gate_forward, mlp2_forward, register_fourier, register_gate, register_mlp2,
};
use crate::nn::checkpoint;
use crate::nn::tape::{NodeId, Tape};
use crate::nn::{Matrix, NnError, ParameterStore};

use super::batch::{build_plans, PreparedBatch, RelationPlan};
use super::tape_inv::relation_invariants;
use super::{EmpsnConfig, ModelError};

/// Tape handles to everything a forward pass produces.
pub struct ForwardOutput {
    /// Final hidden features, one matrix per simplex dimension.
    pub features: Vec<NodeId>,
    /// Final node positions; present for the position-updating variant.
    pub positions: Option<NodeId>,
    /// Per-sample prediction; present when `target_width > 0`.
    pub readout: Option<NodeId>,
}

pub struct EmpsnModel {
    cfg: EmpsnConfig,
    store: ParameterStore<f64>,
}

fn positions_to_matrix(complex: &SimplicialComplex<f64>) -> Matrix<f64> {
    let n = complex.num_points();
    let d = complex.ambient_dim();
    let mut data = Vec::with_capacity(n * d);
    for p in complex.positions() {
        data.extend_from_slice(p.coords());
    }
    Matrix::from_vec(n, d, data)
}

/// 1 / max(1, senders-per-node) for the node-pair relation, the position
/// update's normalizing constant.
fn inverse_degrees(plans: &[RelationPlan], num_points: usize) -> Matrix<f64> {
    let mut degree = vec![0usize; num_points];
    if let Some(plan) = plans
        .iter()
        .find(|p| p.relation.kind == AdjacencyKind::Upper && p.relation.receiver_dim == 0)
    {
        for &r in plan.receiver_rows.iter() {
            degree[r] += 1;
        }
    }
    Matrix::from_vec(
        num_points,
        1,
        degree.iter().map(|&d| 1.0 / d.max(1) as f64).collect(),
    )
}

/// Per-dimension sum over each sample's simplices, concatenated across
/// dimensions. Dimensions without simplices contribute zero blocks.
pub(crate) fn pool_and_concat(
    tape: &mut Tape<f64>,
    per_dim: &[NodeId],
    sample_of: &[Rc<Vec<usize>>],
    num_samples: usize,
) -> NodeId {
    let pooled: Vec<NodeId> = per_dim
        .iter()
        .zip(sample_of)
        .map(|(&f, ids)| tape.scatter_add_rows(f, Rc::clone(ids), num_samples))
        .collect();
    tape.concat_cols(&pooled)
}

fn kind_slot(kind: AdjacencyKind) -> usize {
    match kind {
        AdjacencyKind::Boundary => 0,
        AdjacencyKind::Coboundary => 1,
        AdjacencyKind::Upper => 2,
        AdjacencyKind::Lower => unreachable!("lower adjacency is never wired"),
    }
}

impl EmpsnModel {
    /// Fresh model with parameters initialized deterministically from the
    /// seed. Registration order is fixed by the config, so two models with
    /// equal configs and seeds are identical.
    pub fn new(cfg: EmpsnConfig, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut store = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = cfg.hidden_dim;
        let relations = cfg.relations();

        for d in 0..=cfg.max_dim {
            store.register_linear(&mut rng, &format!("embed_{d}"), cfg.in_features, h);
        }
        if cfg.fourier {
            for rel in &relations {
                let w = layout_len(rel.kind, rel.sender_dim, rel.receiver_dim, cfg.use_velocity);
                register_fourier(
                    &mut store,
                    &mut rng,
                    &format!("ff_{}", rel.name()),
                    w,
                    cfg.num_frequencies,
                    cfg.fourier_scale,
                );
            }
        }
        for l in 0..cfg.num_layers {
            for rel in &relations {
                let inv_w =
                    layout_len(rel.kind, rel.sender_dim, rel.receiver_dim, cfg.use_velocity);
                let feed = if cfg.fourier {
                    2 * cfg.num_frequencies
                } else {
                    inv_w
                };
                register_mlp2(
                    &mut store,
                    &mut rng,
                    &format!("layer{l}/msg_{}", rel.name()),
                    2 * h + feed,
                    h,
                    h,
                    cfg.batch_norm,
                );
                register_gate(&mut store, &mut rng, &format!("layer{l}/gate_{}", rel.name()), h);
            }
            for d in 0..=cfg.max_dim {
                register_mlp2(
                    &mut store,
                    &mut rng,
                    &format!("layer{l}/upd_{d}"),
                    4 * h,
                    h,
                    h,
                    cfg.batch_norm,
                );
            }
            if cfg.update_positions {
                register_mlp2(&mut store, &mut rng, &format!("layer{l}/phi_x"), h, h, 1, false);
                if cfg.use_velocity {
                    register_mlp2(&mut store, &mut rng, &format!("layer{l}/phi_v"), h, h, 1, false);
                }
            }
        }
        if cfg.target_width > 0 {
            for d in 0..=cfg.max_dim {
                register_mlp2(&mut store, &mut rng, &format!("read_pre_{d}"), h, h, h, false);
            }
            register_mlp2(
                &mut store,
                &mut rng,
                "read_post",
                (cfg.max_dim + 1) * h,
                h,
                cfg.target_width,
                false,
            );
        }
        Ok(Self { cfg, store })
    }

    /// Rebuilds a model around an existing store (e.g. from a checkpoint),
    /// verifying that it holds exactly the parameters the config implies.
    pub fn from_store(cfg: EmpsnConfig, store: ParameterStore<f64>) -> Result<Self, ModelError> {
        let reference = Self::new(cfg.clone(), 0)?;
        let want = reference.store.names(false);
        if want != store.names(false) {
            return Err(ModelError::Config(
                "store parameters do not match the model config".into(),
            ));
        }
        for name in &want {
            if reference.store.get(name)?.shape() != store.get(name)?.shape() {
                return Err(ModelError::Config(format!(
                    "parameter {name} has the wrong shape for the config"
                )));
            }
        }
        Ok(Self { cfg, store })
    }

    /// Writes parameters plus metadata carrying the config under a
    /// `config` key, leaving room for callers to add siblings.
    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        self.save_with_meta(path, serde_json::Map::new())
    }

    /// Like [`EmpsnModel::save`] with extra metadata entries alongside the
    /// config.
    pub fn save_with_meta(
        &self,
        path: &Path,
        mut extra: serde_json::Map<String, serde_json::Value>,
    ) -> Result<(), ModelError> {
        let cfg = serde_json::to_value(&self.cfg).map_err(NnError::from)?;
        extra.insert("config".into(), cfg);
        checkpoint::save(&self.store, &serde_json::Value::Object(extra), path)?;
        Ok(())
    }

    /// Restores a model saved with [`EmpsnModel::save`], returning any
    /// sibling metadata untouched.
    pub fn load_with_meta(path: &Path) -> Result<(Self, serde_json::Value), ModelError> {
        let (store, meta) = checkpoint::load::<f64>(path)?;
        let cfg_value = meta
            .get("config")
            .cloned()
            .ok_or_else(|| ModelError::Config("checkpoint metadata lacks a config".into()))?;
        let cfg: EmpsnConfig = serde_json::from_value(cfg_value).map_err(|e| {
            ModelError::Config(format!("checkpoint metadata is not a model config: {e}"))
        })?;
        Ok((Self::from_store(cfg, store)?, meta))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Ok(Self::load_with_meta(path)?.0)
    }

    pub fn config(&self) -> &EmpsnConfig {
        &self.cfg
    }

    pub fn store(&self) -> &ParameterStore<f64> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParameterStore<f64> {
        &mut self.store
    }

    /// Trainable scalar count (the figure reported for budget matching).
    pub fn num_trainable_scalars(&self) -> usize {
        self.store.num_params()
    }

    fn check_batch(&self, batch: &PreparedBatch) -> Result<(), ModelError> {
        let cfg = &self.cfg;
        if batch.init_features.len() != cfg.max_dim + 1 {
            return Err(ModelError::Config(format!(
                "batch prepared for max_dim {}, model expects {}",
                batch.init_features.len() - 1,
                cfg.max_dim
            )));
        }
        if batch.node_features.cols() != cfg.in_features {
            return Err(ModelError::Config(format!(
                "batch feature width {} does not match configured {}",
                batch.node_features.cols(),
                cfg.in_features
            )));
        }
        if cfg.use_velocity && batch.velocities.is_none() {
            return Err(ModelError::Config(
                "config enables velocities but the batch has none".into(),
            ));
        }
        let relations = cfg.relations();
        if batch.plans.len() != relations.len()
            || batch
                .plans
                .iter()
                .zip(&relations)
                .any(|(p, r)| p.relation != *r)
        {
            return Err(ModelError::Config(
                "batch routing does not match the model's wired relations".into(),
            ));
        }
        if cfg.relift && batch.num_samples != 1 {
            return Err(ModelError::Config(
                "re-lifting forward passes support a single sample".into(),
            ));
        }
        Ok(())
    }

    /// Runs the network, recording every operation on `tape`. `training`
    /// selects batch-norm statistics and enables their running updates.
    pub fn forward(
        &mut self,
        tape: &mut Tape<f64>,
        batch: &PreparedBatch,
        training: bool,
    ) -> Result<ForwardOutput, ModelError> {
        self.check_batch(batch)?;
        let cfg = self.cfg.clone();
        let store = &mut self.store;
        let h = cfg.hidden_dim;
        let num_points = batch.num_points();

        // routing state; re-lifting replaces it from moved positions
        let mut plans: Vec<RelationPlan> = batch.plans.clone();
        let mut sample_of: Vec<Rc<Vec<usize>>> = batch.sample_of.clone();
        let mut counts: Vec<usize> = (0..=cfg.max_dim)
            .map(|d| batch.complex.num_simplices(d))
            .collect();
        let mut precomputed: Option<&Vec<Matrix<f64>>> = batch.precomputed_inv.as_ref();
        let mut inv_degree = tape.constant(batch.node_inv_degree.clone());

        let mut positions = tape.constant(positions_to_matrix(&batch.complex));
        let velocities = batch
            .velocities
            .as_ref()
            .map(|m| tape.constant(m.clone()));

        let mut feats: Vec<NodeId> = Vec::with_capacity(cfg.max_dim + 1);
        for d in 0..=cfg.max_dim {
            let x = tape.constant(batch.init_features[d].clone());
            feats.push(tape.linear(store, &format!("embed_{d}"), x)?);
        }

        for l in 0..cfg.num_layers {
            // aggregated messages per receiver dimension and adjacency kind
            let mut agg: Vec<[Option<NodeId>; 3]> = vec![[None; 3]; cfg.max_dim + 1];
            // raw node-pair messages feed the position update
            let mut node_msgs: Option<(usize, NodeId)> = None;

            for (pi, plan) in plans.iter().enumerate() {
                if plan.num_pairs == 0 {
                    continue;
                }
                let rel = plan.relation;
                let f_recv = tape.gather_rows(feats[rel.receiver_dim], Rc::clone(&plan.receiver_rows));
                let f_send = tape.gather_rows(feats[rel.sender_dim], Rc::clone(&plan.sender_rows));
                let inv = if cfg.geometry_ablation {
                    tape.constant(Matrix::zeros(plan.num_pairs, plan.inv_width))
                } else if let Some(tables) = precomputed {
                    tape.constant(tables[pi].clone())
                } else {
                    relation_invariants(tape, plan, positions, velocities)?
                };
                let inv_feed = if cfg.fourier {
                    fourier_forward(tape, store, &format!("ff_{}", rel.name()), inv)?
                } else {
                    inv
                };
                let msg_in = tape.concat_cols(&[f_recv, f_send, inv_feed]);
                let m = mlp2_forward(
                    tape,
                    store,
                    &format!("layer{l}/msg_{}", rel.name()),
                    msg_in,
                    true,
                    training,
                )?;
                if rel.kind == AdjacencyKind::Upper && rel.receiver_dim == 0 {
                    node_msgs = Some((pi, m));
                }
                let gated = gate_forward(tape, store, &format!("layer{l}/gate_{}", rel.name()), m)?;
                let summed = tape.scatter_add_rows(
                    gated,
                    Rc::clone(&plan.receiver_rows),
                    counts[rel.receiver_dim],
                );
                agg[rel.receiver_dim][kind_slot(rel.kind)] = Some(summed);
            }

            // residual update per dimension from boundary, coboundary, and
            // upper-adjacent aggregates (zero blocks where absent)
            for d in 0..=cfg.max_dim {
                if counts[d] == 0 {
                    continue;
                }
                let zeros = tape.constant(Matrix::zeros(counts[d], h));
                let parts = [
                    feats[d],
                    agg[d][0].unwrap_or(zeros),
                    agg[d][1].unwrap_or(zeros),
                    agg[d][2].unwrap_or(zeros),
                ];
                let cat = tape.concat_cols(&parts);
                let upd =
                    mlp2_forward(tape, store, &format!("layer{l}/upd_{d}"), cat, false, training)?;
                feats[d] = tape.add(feats[d], upd);
            }

            if cfg.update_positions {
                // Σ_j (x_i − x_j) · φ_x(m_ij), normalized per receiver
                let pushed = if let Some((pi, m)) = node_msgs {
                    let plan = &plans[pi];
                    let w = mlp2_forward(tape, store, &format!("layer{l}/phi_x"), m, false, training)?;
                    let roles = &plan.roles;
                    let sender_col = roles.a.as_ref().expect("node-pair roles carry `a`");
                    let x_recv = tape.gather_rows(positions, Rc::clone(&roles.b));
                    let x_send = tape.gather_rows(positions, Rc::clone(sender_col));
                    let disp = tape.sub(x_recv, x_send);
                    let weighted = tape.mul_col(disp, w);
                    let summed = tape.scatter_add_rows(weighted, Rc::clone(&roles.b), num_points);
                    tape.mul_col(summed, inv_degree)
                } else {
                    tape.constant(Matrix::zeros(num_points, batch.complex.ambient_dim()))
                };
                let step = if let Some(vel) = velocities {
                    let s = mlp2_forward(tape, store, &format!("layer{l}/phi_v"), feats[0], false, training)?;
                    let v = tape.mul_col(vel, s);
                    tape.add(v, pushed)
                } else {
                    pushed
                };
                positions = tape.add(positions, step);

                // between layers, optionally re-lift the complex from the
                // moved points; higher-dimensional features restart as
                // vertex means of the current node features
                if cfg.relift && l + 1 < cfg.num_layers {
                    let pts: Vec<Point<f64>> = {
                        let pm = tape.value(positions);
                        (0..pm.rows()).map(|i| Point::new(pm.row(i).to_vec())).collect()
                    };
                    let lifted = vietoris_rips(&pts, cfg.delta, cfg.max_dim)?;
                    plans = build_plans(&cfg, &lifted, cfg.use_velocity)?;
                    counts = (0..=cfg.max_dim).map(|d| lifted.num_simplices(d)).collect();
                    sample_of = counts.iter().map(|&c| Rc::new(vec![0usize; c])).collect();
                    inv_degree = tape.constant(inverse_degrees(&plans, num_points));
                    precomputed = None;
                    for d in 1..=cfg.max_dim {
                        let mut inc = Matrix::zeros(counts[d], num_points);
                        for (i, verts) in lifted.level_iter(d).enumerate() {
                            let w = 1.0 / verts.len() as f64;
                            for &v in verts {
                                inc.set(i, v, w);
                            }
                        }
                        let incn = tape.constant(inc);
                        feats[d] = tape.matmul(incn, feats[0]);
                    }
                }
            }
        }

        let readout = if cfg.target_width > 0 {
            let mut transformed = Vec::with_capacity(cfg.max_dim + 1);
            for d in 0..=cfg.max_dim {
                transformed.push(mlp2_forward(
                    tape,
                    store,
                    &format!("read_pre_{d}"),
                    feats[d],
                    false,
                    training,
                )?);
            }
            let cat = pool_and_concat(tape, &transformed, &sample_of, batch.num_samples);
            Some(mlp2_forward(tape, store, "read_post", cat, false, training)?)
        } else {
            None
        };

        Ok(ForwardOutput {
            features: feats,
            positions: cfg.update_positions.then_some(positions),
            readout,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::batch::prepare;
    use rand::Rng;

    fn base_cfg() -> EmpsnConfig {
        EmpsnConfig {
            max_dim: 1,
            comm_type: (0, 1),
            hidden_dim: 3,
            num_layers: 2,
            delta: 1.5,
            update_positions: false,
            use_velocity: false,
            geometry_ablation: false,
            fourier: false,
            fourier_scale: 1.0,
            num_frequencies: 4,
            batch_norm: false,
            relift: false,
            in_features: 2,
            target_width: 1,
        }
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize, ambient: usize) -> Vec<Point<f64>> {
        (0..n)
            .map(|_| Point::new((0..ambient).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect()
    }

    fn random_rows(rng: &mut ChaCha8Rng, n: usize, w: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..w).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    /// Widening the communication type only adds parameters; the shared
    /// wiring keeps identical names.
    #[test]
    fn comm_type_widening_extends_parameter_names() {
        let mut narrow_cfg = base_cfg();
        narrow_cfg.max_dim = 2;
        narrow_cfg.comm_type = (1, 1);
        let mut wide_cfg = narrow_cfg.clone();
        wide_cfg.comm_type = (1, 2);
        let narrow = EmpsnModel::new(narrow_cfg, 0).unwrap();
        let wide = EmpsnModel::new(wide_cfg, 0).unwrap();
        let narrow_names = narrow.store.names(true);
        let wide_names = wide.store.names(true);
        for n in &narrow_names {
            assert!(wide_names.contains(n), "{n} missing from wider model");
        }
        let extra: Vec<String> = wide_names
            .iter()
            .filter(|n| !narrow_names.contains(n))
            .cloned()
            .collect();
        assert!(!extra.is_empty());
        for n in &extra {
            assert!(
                n.contains("boundary_1_2") || n.contains("coboundary_2_1"),
                "unexpected extra parameter {n}"
            );
        }
    }

    /// Sum-pool then concatenate: features [1,2],[3,4] at dimension 0 and
    /// [5,6] at dimension 1 for one sample give [4,6,5,6].
    #[test]
    fn pooled_concat_sums_within_dimensions() {
        let mut tape = Tape::new();
        let d0 = tape.constant(Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        let d1 = tape.constant(Matrix::from_vec(1, 2, vec![5.0, 6.0]));
        let sample_of = [Rc::new(vec![0usize, 0]), Rc::new(vec![0usize])];
        let out = pool_and_concat(&mut tape, &[d0, d1], &sample_of, 1);
        assert_eq!(tape.value(out).shape(), (1, 4));
        for (j, want) in [4.0, 6.0, 5.0, 6.0].into_iter().enumerate() {
            assert_eq!(tape.value(out).get(0, j), want);
        }
    }

    /// A single isolated node exercises the degenerate path: no messages,
    /// update sees zero blocks, readout pools one simplex. The whole pass
    /// must equal the same computation composed by hand from the store's
    /// weight matrices.
    #[test]
    fn single_node_forward_matches_hand_composition() {
        let mut cfg = base_cfg();
        cfg.max_dim = 0;
        cfg.comm_type = (0, 0);
        cfg.num_layers = 1;
        cfg.target_width = 2;
        let mut model = EmpsnModel::new(cfg.clone(), 5).unwrap();

        let pts = vec![Point::new(vec![0.3, -0.7, 0.2])];
        let complex = vietoris_rips(&pts, 1.0, 0).unwrap();
        let feats = vec![vec![0.4, -1.1]];
        let batch = prepare(&cfg, &[&complex], &[feats.clone()], None).unwrap();
        let mut tape = Tape::new();
        let out = model.forward(&mut tape, &batch, false).unwrap();
        let got = tape.value(out.readout.unwrap()).clone();

        let lin = |store: &ParameterStore<f64>, prefix: &str, x: &Matrix<f64>| {
            let w = store.get(&format!("{prefix}/w")).unwrap();
            let b = store.get(&format!("{prefix}/b")).unwrap();
            let mut y = x.matmul(w);
            for i in 0..y.rows() {
                for j in 0..y.cols() {
                    y.set(i, j, y.get(i, j) + b.get(0, j));
                }
            }
            y
        };
        let mlp2 = |store: &ParameterStore<f64>, prefix: &str, x: &Matrix<f64>| {
            let hidden = lin(store, &format!("{prefix}/l1"), x).map(crate::nn::matrix::swish);
            lin(store, &format!("{prefix}/l2"), &hidden)
        };
        let store = model.store();
        let x = Matrix::from_vec(1, 2, feats[0].clone());
        let f0 = lin(store, "embed_0", &x);
        let mut cat = Matrix::zeros(1, 12);
        for j in 0..3 {
            cat.set(0, j, f0.get(0, j));
        }
        let mut f1 = mlp2(store, "layer0/upd_0", &cat);
        for j in 0..3 {
            f1.set(0, j, f1.get(0, j) + f0.get(0, j));
        }
        let pooled = mlp2(store, "read_pre_0", &f1);
        let want = mlp2(store, "read_post", &pooled);
        assert!(got.approx_eq(&want, 1e-12));
    }

    /// Zeroing the update MLP's output layer makes each layer an identity
    /// on features.
    #[test]
    fn zeroed_update_head_leaves_embeddings_fixed() {
        let cfg = base_cfg();
        let mut model = EmpsnModel::new(cfg.clone(), 11).unwrap();
        for l in 0..cfg.num_layers {
            for d in 0..=cfg.max_dim {
                let prefix = format!("layer{l}/upd_{d}");
                let shape = model.store.get(&format!("{prefix}/l2/w")).unwrap().shape();
                model
                    .store
                    .set(&format!("{prefix}/l2/w"), Matrix::zeros(shape.0, shape.1))
                    .unwrap();
                model
                    .store
                    .set(&format!("{prefix}/l2/b"), Matrix::zeros(1, shape.1))
                    .unwrap();
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = random_points(&mut rng, 5, 3);
        let complex = vietoris_rips(&pts, 1.5, 1).unwrap();
        let feats = random_rows(&mut rng, 5, 2);
        let batch = prepare(&cfg, &[&complex], &[feats.clone()], None).unwrap();

        let mut tape = Tape::new();
        let out = model.forward(&mut tape, &batch, false).unwrap();
        // embeddings by hand
        let w = model.store.get("embed_0/w").unwrap();
        let b = model.store.get("embed_0/b").unwrap();
        let x = Matrix::from_vec(5, 2, feats.into_iter().flatten().collect());
        let mut want = x.matmul(w);
        for i in 0..5 {
            for j in 0..want.cols() {
                want.set(i, j, want.get(i, j) + b.get(0, j));
            }
        }
        assert!(tape.value(out.features[0]).approx_eq(&want, 1e-12));
    }

    /// φ_x ≡ 0 (and φ_v ≡ 0) must leave every position exactly in place.
    #[test]
    fn zeroed_position_heads_freeze_positions() {
        let mut cfg = base_cfg();
        cfg.update_positions = true;
        cfg.use_velocity = true;
        cfg.target_width = 0;
        let mut model = EmpsnModel::new(cfg.clone(), 3).unwrap();
        for l in 0..cfg.num_layers {
            for head in ["phi_x", "phi_v"] {
                let prefix = format!("layer{l}/{head}");
                let shape = model.store.get(&format!("{prefix}/l2/w")).unwrap().shape();
                model
                    .store
                    .set(&format!("{prefix}/l2/w"), Matrix::zeros(shape.0, shape.1))
                    .unwrap();
                model
                    .store
                    .set(&format!("{prefix}/l2/b"), Matrix::zeros(1, shape.1))
                    .unwrap();
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = random_points(&mut rng, 5, 3);
        let complex = vietoris_rips(&pts, 1.5, 1).unwrap();
        let feats = random_rows(&mut rng, 5, 2);
        let vels = random_rows(&mut rng, 5, 3);
        let batch = prepare(&cfg, &[&complex], &[feats], Some(&[vels])).unwrap();

        let mut tape = Tape::new();
        let out = model.forward(&mut tape, &batch, false).unwrap();
        let got = tape.value(out.positions.unwrap());
        let want = positions_to_matrix(&complex);
        for i in 0..5 {
            for j in 0..3 {
                assert_eq!(got.get(i, j), want.get(i, j));
            }
        }
    }

    /// Two nodes with φ_x forced to one push each other apart along their
    /// common line, with exactly opposite displacements.
    #[test]
    fn two_nodes_displace_antisymmetrically_along_their_line() {
        let mut cfg = base_cfg();
        cfg.comm_type = (0, 0);
        cfg.num_layers = 1;
        cfg.update_positions = true;
        cfg.target_width = 0;
        let mut model = EmpsnModel::new(cfg.clone(), 7).unwrap();
        let shape = model.store.get("layer0/phi_x/l2/w").unwrap().shape();
        model
            .store
            .set("layer0/phi_x/l2/w", Matrix::zeros(shape.0, shape.1))
            .unwrap();
        model
            .store
            .set("layer0/phi_x/l2/b", Matrix::from_vec(1, 1, vec![1.0]))
            .unwrap();

        let pts = vec![Point::new(vec![0.0, 0.0, 0.0]), Point::new(vec![1.0, 0.0, 0.0])];
        let complex = vietoris_rips(&pts, 1.5, 1).unwrap();
        let feats = vec![vec![0.5, 0.5]; 2];
        let batch = prepare(&cfg, &[&complex], &[feats], None).unwrap();

        let mut tape = Tape::new();
        let out = model.forward(&mut tape, &batch, false).unwrap();
        let got = tape.value(out.positions.unwrap());
        // x0' = x0 + (x0 − x1), x1' = x1 + (x1 − x0)
        assert_eq!(got.get(0, 0), -1.0);
        assert_eq!(got.get(1, 0), 2.0);
        for i in 0..2 {
            for j in 1..3 {
                assert_eq!(got.get(i, j), 0.0);
            }
        }
    }

    /// With geometry zeroed out, moving a node (same topology) changes
    /// nothing about the output — bit for bit.
    #[test]
    fn ablation_output_is_purely_topological() {
        let mut cfg = base_cfg();
        cfg.geometry_ablation = true;
        cfg.delta = 10.0;
        let mut model = EmpsnModel::new(cfg.clone(), 13).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts = random_points(&mut rng, 5, 3);
        let feats = random_rows(&mut rng, 5, 2);
        let mut moved = pts.clone();
        moved[2] = Point::new(vec![
            moved[2].coords()[0] + 0.4,
            moved[2].coords()[1] - 0.3,
            moved[2].coords()[2] + 0.8,
        ]);

        let run = |model: &mut EmpsnModel, pts: &[Point<f64>]| {
            let complex = vietoris_rips(pts, 10.0, 1).unwrap();
            let batch = prepare(&cfg, &[&complex], &[feats.clone()], None).unwrap();
            let mut tape = Tape::new();
            let out = model.forward(&mut tape, &batch, false).unwrap();
            tape.value(out.readout.unwrap()).clone()
        };
        let a = run(&mut model, &pts);
        let b = run(&mut model, &moved);
        assert_eq!(a.data(), b.data());
    }

    /// A path graph has edges but no triangles: the empty top dimension
    /// must flow through update and readout as zero blocks.
    #[test]
    fn empty_top_dimension_stays_finite() {
        let mut cfg = base_cfg();
        cfg.max_dim = 2;
        cfg.comm_type = (1, 2);
        let mut model = EmpsnModel::new(cfg.clone(), 17).unwrap();
        let pts = vec![
            Point::new(vec![0.0, 0.0, 0.0]),
            Point::new(vec![1.0, 0.0, 0.0]),
            Point::new(vec![2.0, 0.0, 0.0]),
        ];
        let complex = vietoris_rips(&pts, 1.2, 2).unwrap();
        assert_eq!(complex.num_simplices(2), 0);
        let feats = vec![vec![1.0, -1.0]; 3];
        let batch = prepare(&cfg, &[&complex], &[feats], None).unwrap();
        let mut tape = Tape::new();
        let out = model.forward(&mut tape, &batch, false).unwrap();
        assert_eq!(tape.value(out.features[2]).rows(), 0);
        let readout = tape.value(out.readout.unwrap());
        assert!(readout.data().iter().all(|v| v.is_finite()));
    }

    /// Forward on a two-sample batch equals the two single-sample forwards.
    #[test]
    fn batched_forward_equals_stacked_singles() {
        let cfg = base_cfg();
        let mut model = EmpsnModel::new(cfg.clone(), 19).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p1 = random_points(&mut rng, 5, 3);
        let p2 = random_points(&mut rng, 4, 3);
        let c1 = vietoris_rips(&p1, 1.5, 1).unwrap();
        let c2 = vietoris_rips(&p2, 1.5, 1).unwrap();
        let f1 = random_rows(&mut rng, 5, 2);
        let f2 = random_rows(&mut rng, 4, 2);

        let joint = prepare(&cfg, &[&c1, &c2], &[f1.clone(), f2.clone()], None).unwrap();
        let mut tape = Tape::new();
        let out = model.forward(&mut tape, &joint, false).unwrap();
        let both = tape.value(out.readout.unwrap()).clone();

        let solo = |model: &mut EmpsnModel, c: &SimplicialComplex<f64>, f: &[Vec<f64>]| {
            let batch = prepare(&cfg, &[c], &[f.to_vec()], None).unwrap();
            let mut tape = Tape::new();
            let out = model.forward(&mut tape, &batch, false).unwrap();
            tape.value(out.readout.unwrap()).clone()
        };
        let a = solo(&mut model, &c1, &f1);
        let b = solo(&mut model, &c2, &f2);
        assert_eq!(both.rows(), 2);
        assert!((both.get(0, 0) - a.get(0, 0)).abs() < 1e-9);
        assert!((both.get(1, 0) - b.get(0, 0)).abs() < 1e-9);
    }

    /// Same config and seed → identical parameters; different seed → not.
    #[test]
    fn initialization_is_seed_deterministic() {
        let cfg = base_cfg();
        let a = EmpsnModel::new(cfg.clone(), 42).unwrap();
        let b = EmpsnModel::new(cfg.clone(), 42).unwrap();
        let c = EmpsnModel::new(cfg, 43).unwrap();
        for name in a.store.names(false) {
            assert_eq!(a.store.get(&name).unwrap().data(), b.store.get(&name).unwrap().data());
        }
        let differs = a
            .store
            .names(true)
            .iter()
            .any(|n| a.store.get(n).unwrap().data() != c.store.get(n).unwrap().data());
        assert!(differs);
    }

    /// Save → load → identical outputs; loading under a mismatched config
    /// is rejected.
    #[test]
    fn checkpoint_round_trip_preserves_outputs() {
        let mut cfg = base_cfg();
        cfg.update_positions = true;
        cfg.use_velocity = true;
        let mut model = EmpsnModel::new(cfg.clone(), 23).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts = random_points(&mut rng, 5, 3);
        let complex = vietoris_rips(&pts, 1.5, 1).unwrap();
        let feats = random_rows(&mut rng, 5, 2);
        let vels = random_rows(&mut rng, 5, 3);
        let batch = prepare(&cfg, &[&complex], &[feats], Some(&[vels])).unwrap();

        let dir = std::env::temp_dir().join(format!("empsn-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.ckpt");
        model.save(&path).unwrap();
        let mut loaded = EmpsnModel::load(&path).unwrap();

        let run = |m: &mut EmpsnModel| {
            let mut tape = Tape::new();
            let out = m.forward(&mut tape, &batch, false).unwrap();
            (
                tape.value(out.readout.unwrap()).clone(),
                tape.value(out.positions.unwrap()).clone(),
            )
        };
        let (ra, pa) = run(&mut model);
        let (rb, pb) = run(&mut loaded);
        assert_eq!(ra.data(), rb.data());
        assert_eq!(pa.data(), pb.data());

        let mut other = cfg.clone();
        other.hidden_dim = 4;
        let store = checkpoint::load::<f64>(&path).unwrap().0;
        assert!(matches!(
            EmpsnModel::from_store(other, store),
            Err(ModelError::Config(_))
        ));
        std::fs::remove_dir_all(&dir).ok();
    }

    /// End-to-end gradient check through messages, gates, updates, the
    /// position update, and both heads, against central finite differences
    /// at a sample of parameter coordinates.
    #[test]
    fn end_to_end_gradients_match_finite_differences() {
        let mut cfg = base_cfg();
        cfg.update_positions = true;
        cfg.use_velocity = true;
        cfg.target_width = 1;
        let mut work = EmpsnModel::new(cfg.clone(), 29).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts = random_points(&mut rng, 4, 3);
        let complex = vietoris_rips(&pts, 2.0, 1).unwrap();
        let feats = random_rows(&mut rng, 4, 2);
        let vels = random_rows(&mut rng, 4, 3);
        let batch = prepare(&cfg, &[&complex], &[feats], Some(&[vels])).unwrap();

        let loss_of = |m: &mut EmpsnModel| -> (Tape<f64>, NodeId) {
            let mut tape = Tape::new();
            let out = m.forward(&mut tape, &batch, false).unwrap();
            let r = tape.sum_all(out.readout.unwrap());
            let p = tape.sum_all(out.positions.unwrap());
            let loss = tape.add(r, p);
            (tape, loss)
        };

        let (mut tape, loss) = loss_of(&mut work);
        tape.backward(loss, &mut work.store).unwrap();

        let names = work.store.names(true);
        let h = 1e-5;
        let mut checked = 0;
        for k in 0..24 {
            let name = &names[(k * 7) % names.len()];
            let shape = work.store.get(name).unwrap().shape();
            let i = rng.random_range(0..shape.0);
            let j = rng.random_range(0..shape.1);
            let analytic = work.store.grad(name).unwrap().get(i, j);

            let base = work.store.get(name).unwrap().get(i, j);
            let mut probe = |v: f64| {
                let mut m = work.store.get(name).unwrap().clone();
                m.set(i, j, v);
                work.store.set(name, m).unwrap();
                let (t, l) = loss_of(&mut work);
                t.value(l).get(0, 0)
            };
            let fp = probe(base + h);
            let fm = probe(base - h);
            probe(base);
            let fd = (fp - fm) / (2.0 * h);
            let denom = fd.abs().max(analytic.abs()).max(1e-4);
            assert!(
                ((analytic - fd) / denom).abs() < 1e-4,
                "{name}[{i},{j}]: analytic {analytic} vs fd {fd}"
            );
            checked += 1;
        }
        assert_eq!(checked, 24);
    }

    /// Re-lifting mid-forward rebuilds routing from moved positions; runs
    /// end to end and stays finite even when edges appear or vanish.
    #[test]
    fn relift_forward_runs_and_stays_finite() {
        let mut cfg = base_cfg();
        cfg.update_positions = true;
        cfg.relift = true;
        cfg.num_layers = 3;
        cfg.target_width = 1;
        let mut model = EmpsnModel::new(cfg.clone(), 31).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let pts = random_points(&mut rng, 6, 3);
        let complex = vietoris_rips(&pts, 1.5, 1).unwrap();
        let feats = random_rows(&mut rng, 6, 2);
        let batch = prepare(&cfg, &[&complex], &[feats.clone()], None).unwrap();
        let mut tape = Tape::new();
        let out = model.forward(&mut tape, &batch, false).unwrap();
        assert!(tape
            .value(out.readout.unwrap())
            .data()
            .iter()
            .all(|v| v.is_finite()));

        // multi-sample batches cannot re-lift
        let c2 = vietoris_rips(&random_points(&mut rng, 4, 3), 1.5, 1).unwrap();
        let f2 = random_rows(&mut rng, 4, 2);
        let two = prepare(&cfg, &[&complex, &c2], &[feats, f2], None).unwrap();
        let mut tape = Tape::new();
        assert!(matches!(
            model.forward(&mut tape, &two, false),
            Err(ModelError::Config(_))
        ));
    }
}
