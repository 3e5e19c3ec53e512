//! E(n)-invariant feature vectors for adjacent simplex pairs.
//!
//! Every directed pair gets a fixed-layout vector of distances, volumes and
//! dihedral angles — quantities unchanged by any rigid motion (rotation,
//! reflection, translation) of the positions. Aggregates over point sets use
//! the arithmetic mean so magnitudes do not grow with simplex dimension.
//!
//! Upper pairs (equal dimension, common parent) use 7 slots:
//! `[mean |shared→a|, mean |shared→b|, mean pairwise shared, |a−b|,
//!   vol(sender), vol(receiver), angle(sender, receiver)]`
//! where `a`/`b` are the points exclusive to sender/receiver and the angle
//! is taken between the two faces inside their witnessing parent. When
//! velocities accompany the positions, node-to-node (0,0) upper pairs append
//! `[v_a·v_b, |v_a|, |v_b|]`.
//!
//! Boundary pairs (sender is a codimension-1 face of receiver) use 6 slots:
//! `[mean |shared→b|, mean pairwise shared, vol(sender), vol(receiver),
//!   mean angle(sender, other faces), mean angle(among other faces)]`.
//! Coboundary pairs reuse the boundary layout with roles swapped.
//!
//! Slots undefined at a dimension are zero-filled, so layout length depends
//! only on (kind, sender dim, receiver dim). Degenerate geometry (zero
//! volumes, undefined angles) yields a 0 sentinel and bumps a counter
//! rather than failing: real point clouds contain near-collinear triples.

use std::collections::BTreeMap;
use std::io::{self, Write};

use thiserror::Error;

use crate::complex::adjacency::RelationKey;
use crate::complex::{AdjacencyIndex, AdjacencyKind, SimplicialComplex};
use crate::geometry::{dihedral_angle, distance, simplex_volume, GeometryError, Point};
use crate::scalar::{real, Real};

pub const UPPER_WIDTH: usize = 7;
pub const BOUNDARY_WIDTH: usize = 6;
pub const VELOCITY_EXTRA: usize = 3;

#[derive(Debug, Error)]
pub enum InvariantError {
    #[error("invalid adjacency: {0}")]
    InvalidAdjacency(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Counts pairs whose geometry degenerated to a 0 sentinel (zero volume on
/// a positive-dimensional simplex, or an undefined angle).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Degeneracies {
    pub count: usize,
}

/// Length of the invariant vector for a relation; a pure function of the
/// key (plus whether velocities are attached), never of specific simplices.
pub fn layout_len(
    kind: AdjacencyKind,
    sender_dim: usize,
    receiver_dim: usize,
    with_velocities: bool,
) -> usize {
    match kind {
        AdjacencyKind::Upper => {
            let velocity = usize::from(with_velocities && sender_dim == 0 && receiver_dim == 0);
            UPPER_WIDTH + velocity * VELOCITY_EXTRA
        }
        AdjacencyKind::Boundary | AdjacencyKind::Coboundary => BOUNDARY_WIDTH,
        // lower adjacency carries no features (it is indexed for
        // completeness but never used as a message relation)
        AdjacencyKind::Lower => 0,
    }
}

fn gather<R: Real>(ids: &[usize], positions: &[Point<R>]) -> Result<Vec<Point<R>>, InvariantError> {
    ids.iter()
        .map(|&v| {
            positions
                .get(v)
                .cloned()
                .ok_or_else(|| InvariantError::InvalidAdjacency(format!("vertex {v} has no position")))
        })
        .collect()
}

fn mean<R: Real>(values: &[R]) -> R {
    if values.is_empty() {
        R::zero()
    } else {
        values.iter().copied().sum::<R>() / real::<R>(values.len() as f64)
    }
}

/// Volume with the degeneracy convention: vertices have no volume slot
/// (plain 0), collapsed higher simplices give a counted 0 sentinel. A
/// simplex of dimension above the ambient space is likewise degenerate.
fn volume_slot<R: Real>(
    points: &[Point<R>],
    diag: &mut Degeneracies,
) -> Result<R, InvariantError> {
    if points.len() < 2 {
        return Ok(R::zero());
    }
    match simplex_volume(points) {
        Ok(v) => {
            if v == R::zero() {
                diag.count += 1;
            }
            Ok(v)
        }
        Err(GeometryError::InvalidInput(_)) => {
            diag.count += 1;
            Ok(R::zero())
        }
        Err(e) => Err(e.into()),
    }
}

fn angle_slot<R: Real>(
    face_a: &[Point<R>],
    face_b: &[Point<R>],
    diag: &mut Degeneracies,
) -> Result<R, InvariantError> {
    match dihedral_angle(face_a, face_b) {
        Ok(angle) => Ok(angle),
        Err(GeometryError::DegenerateGeometry(_)) => {
            diag.count += 1;
            Ok(R::zero())
        }
        Err(e) => Err(e.into()),
    }
}

/// Splits two sorted equal-length id lists into (shared, only_a, only_b).
fn split_shared(a: &[usize], b: &[usize]) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let (mut shared, mut only_a, mut only_b) = (Vec::new(), Vec::new(), Vec::new());
    let (mut i, mut j) = (0, 0);
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

/// Invariants for an upper-adjacent pair: equal-dimension simplices that
/// share all but one vertex, witnessed by their union `parent`.
pub fn upper_invariants<R: Real>(
    sender: &[usize],
    receiver: &[usize],
    parent: &[usize],
    positions: &[Point<R>],
    velocities: Option<&[Vec<R>]>,
    diag: &mut Degeneracies,
) -> Result<Vec<R>, InvariantError> {
    if sender.len() != receiver.len() || sender == receiver {
        return Err(InvariantError::InvalidAdjacency(format!(
            "upper pair must be distinct simplices of equal dimension: {sender:?} vs {receiver:?}"
        )));
    }
    let k = sender.len() - 1;
    let (shared, only_a, only_b) = split_shared(sender, receiver);
    if shared.len() != k || only_a.len() != 1 || only_b.len() != 1 {
        return Err(InvariantError::InvalidAdjacency(format!(
            "upper pair must share all but one vertex: {sender:?} vs {receiver:?}"
        )));
    }
    let mut union = shared.clone();
    union.extend([only_a[0], only_b[0]]);
    union.sort_unstable();
    if union != parent {
        return Err(InvariantError::InvalidAdjacency(format!(
            "parent {parent:?} is not the union of {sender:?} and {receiver:?}"
        )));
    }
    let (a, b) = (only_a[0], only_b[0]);
    let d = |i: usize, j: usize| distance(&positions[i], &positions[j]);
    for &v in parent {
        if v >= positions.len() {
            return Err(InvariantError::InvalidAdjacency(format!(
                "vertex {v} has no position"
            )));
        }
    }

    let to_a: Vec<R> = shared.iter().map(|&p| d(p, a)).collect::<Result<_, _>>()?;
    let to_b: Vec<R> = shared.iter().map(|&p| d(p, b)).collect::<Result<_, _>>()?;
    let mut pairwise = Vec::new();
    for (i, &p) in shared.iter().enumerate() {
        for &q in &shared[i + 1..] {
            pairwise.push(d(p, q)?);
        }
    }
    let sender_points = gather(sender, positions)?;
    let receiver_points = gather(receiver, positions)?;
    let angle = if k == 0 {
        R::zero()
    } else {
        angle_slot(&sender_points, &receiver_points, diag)?
    };

    let mut out = vec![
        mean(&to_a),
        mean(&to_b),
        mean(&pairwise),
        d(a, b)?,
        volume_slot(&sender_points, diag)?,
        volume_slot(&receiver_points, diag)?,
        angle,
    ];
    if let Some(vel) = velocities {
        if k == 0 {
            let (va, vb) = (&vel[a], &vel[b]);
            let dot: R = va.iter().zip(vb).map(|(&x, &y)| x * y).sum();
            let norm = |v: &[R]| v.iter().map(|&x| x * x).sum::<R>().sqrt();
            out.extend([dot, norm(va), norm(vb)]);
        }
    }
    assert_eq!(
        out.len(),
        layout_len(AdjacencyKind::Upper, k, k, velocities.is_some())
    );
    Ok(out)
}

/// Invariants for a boundary pair: `sender` is a codimension-1 face of
/// `receiver`; `b` is the vertex of `receiver` outside the face.
pub fn boundary_invariants<R: Real>(
    sender: &[usize],
    receiver: &[usize],
    positions: &[Point<R>],
    diag: &mut Degeneracies,
) -> Result<Vec<R>, InvariantError> {
    let (shared, only_a, only_b) = split_shared(sender, receiver);
    if sender.len() + 1 != receiver.len() || !only_a.is_empty() || only_b.len() != 1 {
        return Err(InvariantError::InvalidAdjacency(format!(
            "boundary pair must be a codimension-1 face: {sender:?} vs {receiver:?}"
        )));
    }
    let b = only_b[0];
    for &v in receiver {
        if v >= positions.len() {
            return Err(InvariantError::InvalidAdjacency(format!(
                "vertex {v} has no position"
            )));
        }
    }
    let d = |i: usize, j: usize| distance(&positions[i], &positions[j]);
    let to_b: Vec<R> = shared.iter().map(|&p| d(p, b)).collect::<Result<_, _>>()?;
    let mut pairwise = Vec::new();
    for (i, &p) in shared.iter().enumerate() {
        for &q in &shared[i + 1..] {
            pairwise.push(d(p, q)?);
        }
    }
    let sender_points = gather(sender, positions)?;
    let receiver_points = gather(receiver, positions)?;

    let receiver_dim = receiver.len() - 1;
    let (with_sender, among_others) = if receiver_dim < 2 {
        (R::zero(), R::zero())
    } else {
        // the other codim-1 faces of the receiver: omit each sender vertex
        let mut others: Vec<Vec<Point<R>>> = Vec::with_capacity(sender.len());
        for omit in sender {
            let ids: Vec<usize> = receiver.iter().copied().filter(|v| v != omit).collect();
            others.push(gather(&ids, positions)?);
        }
        let mut with_sender_angles = Vec::with_capacity(others.len());
        for f in &others {
            with_sender_angles.push(angle_slot(&sender_points, f, diag)?);
        }
        let mut among = Vec::new();
        for (i, f) in others.iter().enumerate() {
            for g in &others[i + 1..] {
                among.push(angle_slot(f, g, diag)?);
            }
        }
        (mean(&with_sender_angles), mean(&among))
    };

    let out = vec![
        mean(&to_b),
        mean(&pairwise),
        volume_slot(&sender_points, diag)?,
        volume_slot(&receiver_points, diag)?,
        with_sender,
        among_others,
    ];
    assert_eq!(
        out.len(),
        layout_len(AdjacencyKind::Boundary, sender.len() - 1, receiver_dim, false)
    );
    Ok(out)
}

/// Row-major `pairs × width` feature table of one relation.
#[derive(Clone, Debug, PartialEq)]
pub struct InvariantTable<R> {
    pub width: usize,
    pub values: Vec<R>,
}

impl<R: Real> InvariantTable<R> {
    pub fn row(&self, i: usize) -> &[R] {
        &self.values[i * self.width..(i + 1) * self.width]
    }

    pub fn len(&self) -> usize {
        if self.width == 0 {
            0
        } else {
            self.values.len() / self.width
        }
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Invariant vectors for every directed pair of an adjacency index, grouped
/// per relation, plus the degeneracy diagnostic.
#[derive(Clone, Debug, Default)]
pub struct InvariantSet<R> {
    tables: BTreeMap<RelationKey, InvariantTable<R>>,
    pub degeneracies: usize,
}

impl<R: Real> InvariantSet<R> {
    pub fn table(&self, key: RelationKey) -> Option<&InvariantTable<R>> {
        self.tables.get(&key)
    }

    pub fn tables(&self) -> impl Iterator<Item = (RelationKey, &InvariantTable<R>)> {
        self.tables.iter().map(|(&k, t)| (k, t))
    }
}

/// Computes the invariant vector of every pair in the index. Velocities,
/// when provided (one per point, ambient dimension), extend node-to-node
/// upper pairs with `[v_a·v_b, |v_a|, |v_b|]`.
pub fn all_invariants<R: Real>(
    complex: &SimplicialComplex<R>,
    adj: &AdjacencyIndex,
    velocities: Option<&[Vec<R>]>,
) -> Result<InvariantSet<R>, InvariantError> {
    if let Some(vel) = velocities {
        if vel.len() != complex.num_points() {
            return Err(InvariantError::InvalidAdjacency(format!(
                "{} velocities for {} points",
                vel.len(),
                complex.num_points()
            )));
        }
        if vel.iter().any(|v| v.len() != complex.ambient_dim()) {
            return Err(InvariantError::InvalidAdjacency(
                "velocity dimension differs from ambient dimension".into(),
            ));
        }
    }
    let positions = complex.positions();
    let mut diag = Degeneracies::default();
    let mut tables = BTreeMap::new();
    for ((kind, sd, rd), pairs) in adj.relations() {
        let width = layout_len(kind, sd, rd, velocities.is_some());
        let mut values = Vec::with_capacity(width * pairs.len());
        for p in pairs {
            let sender = complex.simplex_vertices(p.sender);
            let receiver = complex.simplex_vertices(p.receiver);
            let row = match kind {
                AdjacencyKind::Upper => {
                    let witness = p.witness.ok_or_else(|| {
                        InvariantError::InvalidAdjacency("upper pair without witness".into())
                    })?;
                    upper_invariants(
                        sender,
                        receiver,
                        complex.simplex_vertices(witness),
                        positions,
                        velocities,
                        &mut diag,
                    )?
                }
                AdjacencyKind::Boundary => {
                    boundary_invariants(sender, receiver, positions, &mut diag)?
                }
                AdjacencyKind::Coboundary => {
                    boundary_invariants(receiver, sender, positions, &mut diag)?
                }
                AdjacencyKind::Lower => Vec::new(),
            };
            debug_assert_eq!(row.len(), width);
            values.extend(row);
        }
        tables.insert((kind, sd, rd), InvariantTable { width, values });
    }
    Ok(InvariantSet {
        tables,
        degeneracies: diag.count,
    })
}

/// One CSV row per directed pair:
/// `kind,sender_dim,sender_idx,receiver_dim,receiver_idx,v0,v1,...`
/// with values in 17-significant-digit scientific notation.
pub fn write_invariants_csv<R: Real, W: Write>(
    adj: &AdjacencyIndex,
    set: &InvariantSet<R>,
    mut out: W,
) -> io::Result<()> {
    for (key, pairs) in adj.relations() {
        let Some(table) = set.table(key) else { continue };
        for (i, p) in pairs.iter().enumerate() {
            write!(
                out,
                "{},{},{},{},{}",
                key.0.name(),
                p.sender.dim,
                p.sender.idx,
                p.receiver.dim,
                p.receiver.idx
            )?;
            if table.width > 0 {
                for v in table.row(i) {
                    write!(out, ",{:.16e}", v.to_f64_lossy())?;
                }
            }
            writeln!(out)?;
        }
    }
    Ok(())
}
