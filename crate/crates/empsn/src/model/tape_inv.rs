//! Invariant vectors recomputed on the differentiation tape.
//!
//! The position-updating model moves points every layer, so the geometric
//! invariants feeding the next layer's messages must be functions of tape
//! values, not precomputed constants. Each relation's full `pairs × width`
//! invariant table is assembled from vectorized column operations (gather,
//! subtract, row-sums, guarded sqrt/acos), reproducing the reference layout
//! exactly for simplex dimensions ≤ 2:
//!
//! * distances are `√(Σ d²)` with a guarded sqrt,
//! * edge/triangle volumes use the closed-form Gram determinant,
//! * angles between faces sharing all but one vertex reduce to the angle at
//!   the shared ridge: both faces' exclusive directions are projected
//!   orthogonally to the ridge's span and compared via `arccos |cos|`.

use std::rc::Rc;

use crate::complex::adjacency::AdjacencyKind;
use crate::nn::tape::{NodeId, Tape};
use crate::nn::Matrix;

use super::batch::RelationPlan;
use super::ModelError;

/// Floor for squared lengths inside guarded square roots: keeps zero-length
/// differences finite with a zero gradient instead of NaN.
const SQ_FLOOR: f64 = 1e-24;

fn gather(tape: &mut Tape<f64>, m: NodeId, col: &Rc<Vec<usize>>) -> NodeId {
    tape.gather_rows(m, Rc::clone(col))
}

fn dot_rows(tape: &mut Tape<f64>, x: NodeId, y: NodeId) -> NodeId {
    let p = tape.mul(x, y);
    tape.row_sums(p)
}

fn norm_rows(tape: &mut Tape<f64>, x: NodeId) -> NodeId {
    let ss = dot_rows(tape, x, x);
    tape.sqrt_guarded(ss, SQ_FLOOR)
}

/// `max(x, floor)` with identity gradient above the floor.
fn clamp_min(tape: &mut Tape<f64>, x: NodeId, floor: f64) -> NodeId {
    let r = tape.sqrt_guarded(x, floor);
    tape.mul(r, r)
}

fn dist(tape: &mut Tape<f64>, pos: NodeId, a: &Rc<Vec<usize>>, b: &Rc<Vec<usize>>) -> NodeId {
    let pa = gather(tape, pos, a);
    let pb = gather(tape, pos, b);
    let d = tape.sub(pa, pb);
    norm_rows(tape, d)
}

fn mean2(tape: &mut Tape<f64>, x: NodeId, y: NodeId) -> NodeId {
    let s = tape.add(x, y);
    tape.scale(s, 0.5)
}

/// `arccos(|u·v| / (|u||v|))` per row.
fn angle_between(tape: &mut Tape<f64>, u: NodeId, v: NodeId) -> NodeId {
    let d = dot_rows(tape, u, v);
    let d2 = tape.mul(d, d);
    let abs_d = tape.sqrt_guarded(d2, SQ_FLOOR * SQ_FLOOR);
    let nu = norm_rows(tape, u);
    let nv = norm_rows(tape, v);
    let denom = tape.mul(nu, nv);
    let cos = tape.div(abs_d, denom);
    tape.acos_clamped(cos)
}

/// Angle at vertex `c` between the rays toward `a` and `b`.
fn vertex_angle(
    tape: &mut Tape<f64>,
    pos: NodeId,
    c: &Rc<Vec<usize>>,
    a: &Rc<Vec<usize>>,
    b: &Rc<Vec<usize>>,
) -> NodeId {
    let pc = gather(tape, pos, c);
    let pa = gather(tape, pos, a);
    let pb = gather(tape, pos, b);
    let u = tape.sub(pa, pc);
    let v = tape.sub(pb, pc);
    angle_between(tape, u, v)
}

/// Dihedral angle along the ridge edge (p1, p2) between the half-planes
/// through `a` and `b`: exclusive directions projected orthogonally to the
/// ridge, then compared.
fn ridge_angle(
    tape: &mut Tape<f64>,
    pos: NodeId,
    p1: &Rc<Vec<usize>>,
    p2: &Rc<Vec<usize>>,
    a: &Rc<Vec<usize>>,
    b: &Rc<Vec<usize>>,
) -> NodeId {
    let x1 = gather(tape, pos, p1);
    let x2 = gather(tape, pos, p2);
    let d = tape.sub(x2, x1);
    let dd_raw = dot_rows(tape, d, d);
    let dd = clamp_min(tape, dd_raw, SQ_FLOOR);
    let mut project = |col: &Rc<Vec<usize>>| {
        let x = gather(tape, pos, col);
        let w = tape.sub(x, x1);
        let wd = dot_rows(tape, w, d);
        let coef = tape.div(wd, dd);
        let along = tape.mul_col(d, coef);
        tape.sub(w, along)
    };
    let u = project(a);
    let v = project(b);
    angle_between(tape, u, v)
}

/// Triangle area with vertices at the three index columns:
/// `½·√(|u|²|v|² − (u·v)²)` for edge vectors `u`, `v`.
fn triangle_area(
    tape: &mut Tape<f64>,
    pos: NodeId,
    p1: &Rc<Vec<usize>>,
    p2: &Rc<Vec<usize>>,
    q: &Rc<Vec<usize>>,
) -> NodeId {
    let x1 = gather(tape, pos, p1);
    let x2 = gather(tape, pos, p2);
    let xq = gather(tape, pos, q);
    let u = tape.sub(x2, x1);
    let v = tape.sub(xq, x1);
    let uu = dot_rows(tape, u, u);
    let vv = dot_rows(tape, v, v);
    let uv = dot_rows(tape, u, v);
    let uuvv = tape.mul(uu, vv);
    let uv2 = tape.mul(uv, uv);
    let g = tape.sub(uuvv, uv2);
    let root = tape.sqrt_guarded(g, SQ_FLOOR * SQ_FLOOR);
    tape.scale(root, 0.5)
}

/// The invariant table of one relation recomputed from tape positions;
/// matches the reference layout for the supported dimensions.
pub(crate) fn relation_invariants(
    tape: &mut Tape<f64>,
    plan: &RelationPlan,
    positions: NodeId,
    velocities: Option<NodeId>,
) -> Result<NodeId, ModelError> {
    let n = plan.num_pairs;
    let zero = tape.constant(Matrix::zeros(n, 1));
    let roles = &plan.roles;
    let cols: Vec<NodeId> = match plan.relation.kind {
        AdjacencyKind::Upper => {
            let a = roles.a.as_ref().expect("upper roles carry `a`");
            let b = &roles.b;
            let d_ab = dist(tape, positions, a, b);
            let mut cols = match plan.relation.sender_dim {
                0 => vec![zero, zero, zero, d_ab, zero, zero, zero],
                1 => {
                    let p = &roles.shared[0];
                    let d_pa = dist(tape, positions, p, a);
                    let d_pb = dist(tape, positions, p, b);
                    let angle = vertex_angle(tape, positions, p, a, b);
                    // edge volumes are the edge lengths already computed
                    vec![d_pa, d_pb, zero, d_ab, d_pa, d_pb, angle]
                }
                2 => {
                    let (p1, p2) = (&roles.shared[0], &roles.shared[1]);
                    let d1a = dist(tape, positions, p1, a);
                    let d2a = dist(tape, positions, p2, a);
                    let d1b = dist(tape, positions, p1, b);
                    let d2b = dist(tape, positions, p2, b);
                    let to_a = mean2(tape, d1a, d2a);
                    let to_b = mean2(tape, d1b, d2b);
                    let d_pp = dist(tape, positions, p1, p2);
                    let vol_a = triangle_area(tape, positions, p1, p2, a);
                    let vol_b = triangle_area(tape, positions, p1, p2, b);
                    let angle = ridge_angle(tape, positions, p1, p2, a, b);
                    vec![to_a, to_b, d_pp, d_ab, vol_a, vol_b, angle]
                }
                d => {
                    return Err(ModelError::Config(format!(
                        "no on-tape invariants for upper traffic at dimension {d}"
                    )))
                }
            };
            if plan.relation.sender_dim == 0 && plan.inv_width > 7 {
                let vel = velocities.ok_or_else(|| {
                    ModelError::Config("velocity invariants need velocities".into())
                })?;
                let va = gather(tape, vel, a);
                let vb = gather(tape, vel, b);
                cols.push(dot_rows(tape, va, vb));
                cols.push(norm_rows(tape, va));
                cols.push(norm_rows(tape, vb));
            }
            cols
        }
        AdjacencyKind::Boundary | AdjacencyKind::Coboundary => {
            // `shared` is the face, `b` the coface's opposite vertex; the
            // row is identical for both message directions
            let b = &roles.b;
            match roles.shared.len() {
                1 => {
                    let f0 = &roles.shared[0];
                    let d = dist(tape, positions, f0, b);
                    vec![d, zero, zero, d, zero, zero]
                }
                2 => {
                    let (f0, f1) = (&roles.shared[0], &roles.shared[1]);
                    let d0b = dist(tape, positions, f0, b);
                    let d1b = dist(tape, positions, f1, b);
                    let to_b = mean2(tape, d0b, d1b);
                    let d01 = dist(tape, positions, f0, f1);
                    let vol_coface = triangle_area(tape, positions, f0, f1, b);
                    // angles between the face and the coface's other faces,
                    // then between those others
                    let at_f1 = vertex_angle(tape, positions, f1, f0, b);
                    let at_f0 = vertex_angle(tape, positions, f0, f1, b);
                    let with_face = mean2(tape, at_f1, at_f0);
                    let among = vertex_angle(tape, positions, b, f0, f1);
                    vec![to_b, d01, d01, vol_coface, with_face, among]
                }
                m => {
                    return Err(ModelError::Config(format!(
                        "no on-tape invariants for faces with {m} vertices"
                    )))
                }
            }
        }
        AdjacencyKind::Lower => {
            return Err(ModelError::Config(
                "lower adjacency carries no invariants".into(),
            ))
        }
    };
    debug_assert_eq!(cols.len(), plan.inv_width);
    Ok(tape.concat_cols(&cols))
}
