//! Batched model inputs: samples fused into one block-diagonal complex
//! with precomputed message-routing and vertex-role indices.
//!
//! Per-sample complexes keep their simplex order; sample `p`'s vertex ids
//! are shifted past all earlier samples, so one forward pass over the
//! union is exactly the per-sample forwards stacked.

use std::rc::Rc;

use crate::complex::adjacency::{build_adjacency, AdjacencyKind};
use crate::complex::{disjoint_union, SimplicialComplex};
use crate::invariants::{all_invariants, layout_len};
use crate::nn::Matrix;

use super::{EmpsnConfig, ModelError, Relation};

/// Vertex-role columns of one relation, each `num_pairs` long, holding
/// global vertex ids. For upper adjacency `shared` are the common
/// vertices and `a`/`b` the sender-/receiver-exclusive ones; for
/// (co)boundary `shared` are the face's vertices and `b` the coface's
/// opposite vertex.
#[derive(Clone)]
pub(crate) struct VertexRoles {
    pub shared: Vec<Rc<Vec<usize>>>,
    pub a: Option<Rc<Vec<usize>>>,
    pub b: Rc<Vec<usize>>,
}

/// Precomputed routing for one wired relation on one batch.
#[derive(Clone)]
pub(crate) struct RelationPlan {
    pub relation: Relation,
    pub num_pairs: usize,
    /// Row indices into the sender dimension's feature matrix.
    pub sender_rows: Rc<Vec<usize>>,
    /// Row indices into the receiver dimension's feature matrix.
    pub receiver_rows: Rc<Vec<usize>>,
    pub roles: VertexRoles,
    pub inv_width: usize,
}

/// Model-ready batch: fused complex, inputs as matrices, routing plans,
/// and — for the position-frozen variant — precomputed invariants.
pub struct PreparedBatch {
    pub(crate) complex: SimplicialComplex<f64>,
    pub(crate) num_samples: usize,
    /// Per dimension, per simplex: which sample it belongs to.
    pub(crate) sample_of: Vec<Rc<Vec<usize>>>,
    pub(crate) node_features: Matrix<f64>,
    pub(crate) velocities: Option<Matrix<f64>>,
    /// Initial features per dimension: dim 0 is the input features, higher
    /// dimensions average the features of their vertices.
    pub(crate) init_features: Vec<Matrix<f64>>,
    pub(crate) plans: Vec<RelationPlan>,
    /// One matrix per plan when invariants are precomputed (positions
    /// frozen); the position-updating variant recomputes them on tape.
    pub(crate) precomputed_inv: Option<Vec<Matrix<f64>>>,
    /// Degeneracy count reported while precomputing invariants.
    pub inv_degeneracies: usize,
    /// Per node: 1 / max(1, number of node-to-node senders).
    pub(crate) node_inv_degree: Matrix<f64>,
}

impl PreparedBatch {
    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    pub fn num_points(&self) -> usize {
        self.complex.num_points()
    }

    pub fn complex(&self) -> &SimplicialComplex<f64> {
        &self.complex
    }
}

/// Merge-walk split of two sorted vertex lists into (common, only-left,
/// only-right).
fn split_shared(a: &[usize], b: &[usize]) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let (mut i, mut j) = (0, 0);
    let (mut shared, mut only_a, mut only_b) = (Vec::new(), Vec::new(), Vec::new());
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Equal => {
                shared.push(a[i]);
                i += 1;
                j += 1;
            }
            std::cmp::Ordering::Less => {
                only_a.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                only_b.push(b[j]);
                j += 1;
            }
        }
    }
    only_a.extend_from_slice(&a[i..]);
    only_b.extend_from_slice(&b[j..]);
    (shared, only_a, only_b)
}

/// Builds the routing plans for `cfg`'s wired relations over `complex`.
pub(crate) fn build_plans(
    cfg: &EmpsnConfig,
    complex: &SimplicialComplex<f64>,
    with_velocities: bool,
) -> Result<Vec<RelationPlan>, ModelError> {
    let relations = cfg.relations();
    let kinds: Vec<AdjacencyKind> = {
        let mut k: Vec<AdjacencyKind> = relations.iter().map(|r| r.kind).collect();
        k.dedup();
        k
    };
    let dim_pairs: Vec<(usize, usize)> = relations
        .iter()
        .map(|r| (r.sender_dim, r.receiver_dim))
        .collect();
    let adj = build_adjacency(complex, &kinds, Some(&dim_pairs))?;

    let mut plans = Vec::with_capacity(relations.len());
    for rel in relations {
        let pairs = adj.pairs(rel.kind, rel.sender_dim, rel.receiver_dim);
        let n = pairs.len();
        let mut sender_rows = Vec::with_capacity(n);
        let mut receiver_rows = Vec::with_capacity(n);
        let shared_count = match rel.kind {
            AdjacencyKind::Upper => rel.sender_dim,
            _ => rel.sender_dim.min(rel.receiver_dim) + 1,
        };
        let mut shared: Vec<Vec<usize>> = vec![Vec::with_capacity(n); shared_count];
        let mut a_col = Vec::with_capacity(n);
        let mut b_col = Vec::with_capacity(n);
        for p in pairs {
            sender_rows.push(p.sender.idx);
            receiver_rows.push(p.receiver.idx);
            let sv = complex.simplex_vertices(p.sender);
            let rv = complex.simplex_vertices(p.receiver);
            match rel.kind {
                AdjacencyKind::Upper => {
                    let (sh, oa, ob) = split_shared(sv, rv);
                    debug_assert!(oa.len() == 1 && ob.len() == 1);
                    for (col, v) in shared.iter_mut().zip(&sh) {
                        col.push(*v);
                    }
                    a_col.push(oa[0]);
                    b_col.push(ob[0]);
                }
                AdjacencyKind::Boundary => {
                    // sender is the face; opposite vertex from the receiver
                    let (_, _, ob) = split_shared(sv, rv);
                    debug_assert_eq!(ob.len(), 1);
                    for (col, v) in shared.iter_mut().zip(sv) {
                        col.push(*v);
                    }
                    b_col.push(ob[0]);
                }
                AdjacencyKind::Coboundary => {
                    // receiver is the face; opposite vertex from the sender
                    let (_, oa, _) = split_shared(sv, rv);
                    debug_assert_eq!(oa.len(), 1);
                    for (col, v) in shared.iter_mut().zip(rv) {
                        col.push(*v);
                    }
                    b_col.push(oa[0]);
                }
                AdjacencyKind::Lower => unreachable!("lower adjacency is never wired"),
            }
        }
        plans.push(RelationPlan {
            relation: rel,
            num_pairs: n,
            sender_rows: Rc::new(sender_rows),
            receiver_rows: Rc::new(receiver_rows),
            roles: VertexRoles {
                shared: shared.into_iter().map(Rc::new).collect(),
                a: match rel.kind {
                    AdjacencyKind::Upper => Some(Rc::new(a_col)),
                    _ => None,
                },
                b: Rc::new(b_col),
            },
            inv_width: layout_len(rel.kind, rel.sender_dim, rel.receiver_dim, with_velocities),
        });
    }
    Ok(plans)
}

/// Fuses samples (complex + node features + optional velocities) into one
/// model-ready batch.
pub fn prepare(
    cfg: &EmpsnConfig,
    complexes: &[&SimplicialComplex<f64>],
    features: &[Vec<Vec<f64>>],
    velocities: Option<&[Vec<Vec<f64>>]>,
) -> Result<PreparedBatch, ModelError> {
    cfg.validate()?;
    if complexes.is_empty() || complexes.len() != features.len() {
        return Err(ModelError::Config(format!(
            "{} complexes with {} feature sets",
            complexes.len(),
            features.len()
        )));
    }
    if cfg.use_velocity && velocities.is_none() {
        return Err(ModelError::Config(
            "config enables velocities but none were provided".into(),
        ));
    }
    if let Some(vels) = velocities {
        if vels.len() != complexes.len() {
            return Err(ModelError::Config(format!(
                "{} velocity sets for {} complexes",
                vels.len(),
                complexes.len()
            )));
        }
    }
    let union = disjoint_union(complexes)?;
    let ambient = union.ambient_dim();
    let total_nodes = union.num_points();

    // node features and velocities as stacked matrices
    let mut feat_data = Vec::with_capacity(total_nodes * cfg.in_features);
    for (c, f) in complexes.iter().zip(features) {
        if f.len() != c.num_points() {
            return Err(ModelError::Config(format!(
                "{} feature rows for {} points",
                f.len(),
                c.num_points()
            )));
        }
        for row in f {
            if row.len() != cfg.in_features {
                return Err(ModelError::Config(format!(
                    "feature width {} does not match configured {}",
                    row.len(),
                    cfg.in_features
                )));
            }
            feat_data.extend_from_slice(row);
        }
    }
    let node_features = Matrix::from_vec(total_nodes, cfg.in_features, feat_data);

    let velocities_mat = if cfg.use_velocity {
        let vels = velocities.unwrap();
        let mut data = Vec::with_capacity(total_nodes * ambient);
        for (c, v) in complexes.iter().zip(vels) {
            if v.len() != c.num_points() || v.iter().any(|row| row.len() != ambient) {
                return Err(ModelError::Config(
                    "velocity rows must match points and ambient dimension".into(),
                ));
            }
            for row in v {
                data.extend_from_slice(row);
            }
        }
        Some(Matrix::from_vec(total_nodes, ambient, data))
    } else {
        None
    };

    // sample membership per dimension
    let mut sample_of = Vec::with_capacity(cfg.max_dim + 1);
    for d in 0..=cfg.max_dim {
        let mut ids = Vec::with_capacity(union.num_simplices(d));
        for (p, c) in complexes.iter().enumerate() {
            ids.extend(std::iter::repeat_n(p, c.num_simplices(d)));
        }
        debug_assert_eq!(ids.len(), union.num_simplices(d));
        sample_of.push(Rc::new(ids));
    }

    // initial features: vertex means for higher-dimensional simplices
    let mut init_features = vec![node_features.clone()];
    for d in 1..=cfg.max_dim {
        let rows = union.num_simplices(d);
        let mut data = vec![0.0; rows * cfg.in_features];
        for (i, verts) in union.level_iter(d).enumerate() {
            for &v in verts {
                for j in 0..cfg.in_features {
                    data[i * cfg.in_features + j] += node_features.get(v, j);
                }
            }
            let inv = 1.0 / verts.len() as f64;
            for j in 0..cfg.in_features {
                data[i * cfg.in_features + j] *= inv;
            }
        }
        init_features.push(Matrix::from_vec(rows, cfg.in_features, data));
    }

    let plans = build_plans(cfg, &union, cfg.use_velocity)?;

    // 1 / senders-per-node for the position update's normalizing constant
    let mut degree = vec![0usize; total_nodes];
    if let Some(plan) = plans
        .iter()
        .find(|p| p.relation.kind == AdjacencyKind::Upper && p.relation.receiver_dim == 0)
    {
        for &r in plan.receiver_rows.iter() {
            degree[r] += 1;
        }
    }
    let node_inv_degree = Matrix::from_vec(
        total_nodes,
        1,
        degree.iter().map(|&d| 1.0 / d.max(1) as f64).collect(),
    );

    // invariants for the position-frozen path
    let (precomputed_inv, inv_degeneracies) =
        if !cfg.update_positions && !cfg.geometry_ablation {
            let kinds: Vec<AdjacencyKind> = {
                let mut k: Vec<AdjacencyKind> =
                    plans.iter().map(|p| p.relation.kind).collect();
                k.dedup();
                k
            };
            let dim_pairs: Vec<(usize, usize)> = plans
                .iter()
                .map(|p| (p.relation.sender_dim, p.relation.receiver_dim))
                .collect();
            let adj = build_adjacency(&union, &kinds, Some(&dim_pairs))?;
            let vel_rows: Option<Vec<Vec<f64>>> = velocities_mat.as_ref().map(|m| {
                (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
            });
            let set = all_invariants(&union, &adj, vel_rows.as_deref())?;
            let mut tables = Vec::with_capacity(plans.len());
            for plan in &plans {
                let key = (
                    plan.relation.kind,
                    plan.relation.sender_dim,
                    plan.relation.receiver_dim,
                );
                let m = match set.table(key) {
                    Some(t) => {
                        debug_assert_eq!(t.width, plan.inv_width);
                        Matrix::from_vec(t.len(), t.width, t.values.clone())
                    }
                    None => Matrix::zeros(0, plan.inv_width),
                };
                debug_assert_eq!(m.rows(), plan.num_pairs);
                tables.push(m);
            }
            (Some(tables), set.degeneracies)
        } else {
            (None, 0)
        };

    Ok(PreparedBatch {
        complex: union,
        num_samples: complexes.len(),
        sample_of,
        node_features,
        velocities: velocities_mat,
        init_features,
        plans,
        precomputed_inv,
        inv_degeneracies,
        node_inv_degree,
    })
}
