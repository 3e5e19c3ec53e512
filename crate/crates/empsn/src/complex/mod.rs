//! Abstract simplicial complexes over point clouds.
//!
//! A point cloud and a radius δ induce a graph (edges between points within
//! δ), and the cliques of that graph form the Vietoris-Rips complex: every
//! (k+1)-clique is a k-simplex. Simplices are stored per dimension in flat,
//! lexicographically sorted arrays so construction stays within a small
//! constant factor of building the radius graph itself and iteration order
//! is deterministic.

pub mod adjacency;
mod json;

pub use adjacency::{build_adjacency, AdjacencyIndex, AdjacencyKind, DirectedPair, SimplexId};

use thiserror::Error;

use crate::geometry::{distance, GeometryError, Point};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum ComplexError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("vertex {id} out of range for {num} vertices")]
    VertexOutOfRange { id: usize, num: usize },
    #[error("complex is not downward closed: missing face {0:?}")]
    MissingFace(Vec<usize>),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// A simplex as its strictly increasing vertex id list; dim = count - 1.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Simplex {
    vertices: Vec<usize>,
}

impl Simplex {
    /// Sorts the ids; duplicate ids are rejected.
    pub fn new(mut vertices: Vec<usize>) -> Result<Self, ComplexError> {
        if vertices.is_empty() {
            return Err(ComplexError::InvalidInput("empty simplex".into()));
        }
        vertices.sort_unstable();
        if vertices.windows(2).any(|w| w[0] == w[1]) {
            return Err(ComplexError::InvalidInput(format!(
                "duplicate vertex in simplex {vertices:?}"
            )));
        }
        Ok(Self { vertices })
    }

    fn from_sorted(vertices: Vec<usize>) -> Self {
        debug_assert!(vertices.windows(2).all(|w| w[0] < w[1]));
        Self { vertices }
    }

    pub fn dim(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    /// All codimension-1 faces (one vertex omitted), for dim ≥ 1.
    pub fn faces(&self) -> Vec<Simplex> {
        if self.vertices.len() < 2 {
            return Vec::new();
        }
        (0..self.vertices.len())
            .map(|omit| {
                let mut v = self.vertices.clone();
                v.remove(omit);
                Simplex::from_sorted(v)
            })
            .collect()
    }
}

/// Flat storage for all simplices of one dimension: `arity = dim + 1`
/// vertex ids per simplex, lexicographically sorted.
#[derive(Clone, Debug, Default, PartialEq)]
struct Level {
    arity: usize,
    verts: Vec<usize>,
}

impl Level {
    fn new(arity: usize) -> Self {
        Self {
            arity,
            verts: Vec::new(),
        }
    }

    fn len(&self) -> usize {
        self.verts.len() / self.arity
    }

    fn get(&self, i: usize) -> &[usize] {
        &self.verts[i * self.arity..(i + 1) * self.arity]
    }

    fn iter(&self) -> std::slice::ChunksExact<'_, usize> {
        self.verts.chunks_exact(self.arity)
    }

    fn find(&self, target: &[usize]) -> Option<usize> {
        debug_assert_eq!(target.len(), self.arity);
        let (mut lo, mut hi) = (0usize, self.len());
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            match self.get(mid).cmp(target) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return Some(mid),
            }
        }
        None
    }
}

/// The combinatorial part of a complex: simplices without positions.
#[derive(Clone, Debug, PartialEq)]
pub struct Skeleton {
    num_vertices: usize,
    levels: Vec<Level>,
}

impl Skeleton {
    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn max_dim(&self) -> usize {
        self.levels.len().saturating_sub(1)
    }

    pub fn counts(&self) -> Vec<usize> {
        self.levels.iter().map(Level::len).collect()
    }
}

/// A geometric simplicial complex: per-vertex positions plus simplices per
/// dimension. Levels may be empty (e.g. a cloud with no pairs within δ still
/// carries an empty edge level up to `max_dim`).
#[derive(Clone, Debug, PartialEq)]
pub struct SimplicialComplex<R> {
    positions: Vec<Point<R>>,
    levels: Vec<Level>,
}

impl<R: Real> SimplicialComplex<R> {
    /// Builds and validates a complex from explicit per-dimension simplex
    /// lists (canonicalizing order): ids must be in range and every
    /// codimension-1 face of every simplex must itself be present.
    pub fn from_parts(
        positions: Vec<Point<R>>,
        simplices: Vec<Vec<Simplex>>,
    ) -> Result<Self, ComplexError> {
        validate_positions(&positions)?;
        let mut levels: Vec<Level> = Vec::with_capacity(simplices.len());
        for (d, mut list) in simplices.into_iter().enumerate() {
            let arity = d + 1;
            let mut level = Level::new(arity);
            list.sort_unstable();
            list.dedup();
            for s in &list {
                if s.dim() != d {
                    return Err(ComplexError::InvalidInput(format!(
                        "simplex {:?} stored at dimension {d}",
                        s.vertices()
                    )));
                }
                for &v in s.vertices() {
                    if v >= positions.len() {
                        return Err(ComplexError::VertexOutOfRange {
                            id: v,
                            num: positions.len(),
                        });
                    }
                }
                level.verts.extend_from_slice(s.vertices());
            }
            levels.push(level);
        }
        if levels.is_empty() {
            levels.push(Level::new(1));
        }
        let complex = Self { positions, levels };
        complex.check_closure()?;
        Ok(complex)
    }

    /// Attaches positions to a lifted skeleton. The skeleton is trusted to
    /// be closed and sorted (clique expansion guarantees both).
    pub fn from_skeleton(
        positions: Vec<Point<R>>,
        skeleton: Skeleton,
    ) -> Result<Self, ComplexError> {
        validate_positions(&positions)?;
        if positions.len() != skeleton.num_vertices {
            return Err(ComplexError::InvalidInput(format!(
                "{} positions for a skeleton over {} vertices",
                positions.len(),
                skeleton.num_vertices
            )));
        }
        Ok(Self {
            positions,
            levels: skeleton.levels,
        })
    }

    /// Same skeleton, different coordinates (e.g. a rigid motion of the
    /// cloud). Point count and ambient dimension must match.
    pub fn with_positions(&self, positions: Vec<Point<R>>) -> Result<Self, ComplexError> {
        validate_positions(&positions)?;
        if positions.len() != self.positions.len() {
            return Err(ComplexError::InvalidInput(format!(
                "expected {} positions, got {}",
                self.positions.len(),
                positions.len()
            )));
        }
        Ok(Self {
            positions,
            levels: self.levels.clone(),
        })
    }

    fn check_closure(&self) -> Result<(), ComplexError> {
        let mut face = Vec::new();
        for d in 1..self.levels.len() {
            for s in self.levels[d].iter() {
                for omit in 0..s.len() {
                    face.clear();
                    face.extend(s.iter().enumerate().filter(|&(i, _)| i != omit).map(|(_, &v)| v));
                    if self.levels[d - 1].find(&face).is_none() {
                        return Err(ComplexError::MissingFace(face));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn positions(&self) -> &[Point<R>] {
        &self.positions
    }

    pub fn num_points(&self) -> usize {
        self.positions.len()
    }

    pub fn ambient_dim(&self) -> usize {
        self.positions.first().map(Point::dim).unwrap_or(0)
    }

    /// Highest represented dimension (levels may be empty).
    pub fn max_dim(&self) -> usize {
        self.levels.len().saturating_sub(1)
    }

    pub fn num_simplices(&self, dim: usize) -> usize {
        self.levels.get(dim).map_or(0, Level::len)
    }

    /// Simplex count per dimension, index = dimension.
    pub fn counts(&self) -> Vec<usize> {
        self.levels.iter().map(Level::len).collect()
    }

    pub fn simplex_vertices(&self, id: SimplexId) -> &[usize] {
        self.levels[id.dim].get(id.idx)
    }

    /// Iterates the vertex lists of one dimension in lexicographic order.
    pub fn level_iter(&self, dim: usize) -> impl Iterator<Item = &[usize]> {
        self.levels
            .get(dim)
            .map(Level::iter)
            .into_iter()
            .flatten()
    }

    /// Binary search for a simplex by its sorted vertex list.
    pub fn find(&self, vertices: &[usize]) -> Option<SimplexId> {
        let dim = vertices.len().checked_sub(1)?;
        let idx = self.levels.get(dim)?.find(vertices)?;
        Some(SimplexId { dim, idx })
    }

    /// Owned simplices of one dimension (for oracles and serialization).
    pub fn simplices(&self, dim: usize) -> Vec<Simplex> {
        self.level_iter(dim)
            .map(|v| Simplex::from_sorted(v.to_vec()))
            .collect()
    }
}

/// Disjoint union of complexes sharing an ambient dimension: part `p`'s
/// vertex ids are shifted by the vertex count of all earlier parts, and
/// every level stays lexicographically sorted because shifted id ranges
/// are disjoint and increasing. Shorter parts contribute nothing to the
/// higher levels of the union.
pub fn disjoint_union<R: Real>(
    parts: &[&SimplicialComplex<R>],
) -> Result<SimplicialComplex<R>, ComplexError> {
    let Some(first) = parts.first() else {
        return Err(ComplexError::InvalidInput("union of zero complexes".into()));
    };
    let ambient = first.ambient_dim();
    if parts.iter().any(|p| p.ambient_dim() != ambient) {
        return Err(ComplexError::InvalidInput(
            "union of complexes with mixed ambient dimensions".into(),
        ));
    }
    let num_levels = parts.iter().map(|p| p.levels.len()).max().unwrap();
    let mut positions = Vec::new();
    let mut levels: Vec<Level> = (1..=num_levels).map(Level::new).collect();
    let mut offset = 0;
    for p in parts {
        positions.extend_from_slice(&p.positions);
        for (d, level) in p.levels.iter().enumerate() {
            levels[d].verts.extend(level.verts.iter().map(|&v| v + offset));
        }
        offset += p.num_points();
    }
    Ok(SimplicialComplex { positions, levels })
}

fn validate_positions<R: Real>(positions: &[Point<R>]) -> Result<(), ComplexError> {
    let Some(first) = positions.first() else {
        return Ok(());
    };
    let n = first.dim();
    for p in positions {
        if p.dim() != n {
            return Err(ComplexError::InvalidInput(
                "points have mixed ambient dimensions".into(),
            ));
        }
        if p.coords().iter().any(|c| !c.is_finite()) {
            return Err(ComplexError::InvalidInput(
                "non-finite coordinate".into(),
            ));
        }
    }
    Ok(())
}

/// Undirected edges {i, j}, i < j, between points within distance δ
/// (inclusive: ties at exactly δ enter the graph).
pub fn radius_graph<R: Real>(
    positions: &[Point<R>],
    delta: R,
) -> Result<Vec<(usize, usize)>, ComplexError> {
    if !(delta > R::zero()) {
        return Err(ComplexError::InvalidInput(format!(
            "delta must be positive, got {delta}"
        )));
    }
    validate_positions(positions)?;
    let mut edges = Vec::new();
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            if distance(&positions[i], &positions[j])? <= delta {
                edges.push((i, j));
            }
        }
    }
    Ok(edges)
}

/// Expands a graph into its clique complex up to `max_dim`: every
/// (k+1)-clique with k ≤ max_dim becomes a k-simplex, emitted exactly once
/// in sorted vertex order via ascending-id expansion of common-neighbor
/// bitsets. Positions are attached separately
/// ([`SimplicialComplex::from_skeleton`]).
pub fn clique_lift(
    edges: &[(usize, usize)],
    num_vertices: usize,
    max_dim: usize,
) -> Result<Skeleton, ComplexError> {
    let words = num_vertices.div_ceil(64).max(1);
    let mut nbr = vec![0u64; num_vertices * words];
    for &(a, b) in edges {
        for id in [a, b] {
            if id >= num_vertices {
                return Err(ComplexError::VertexOutOfRange {
                    id,
                    num: num_vertices,
                });
            }
        }
        if a == b {
            return Err(ComplexError::InvalidInput(format!("self-loop at {a}")));
        }
        nbr[a * words + b / 64] |= 1 << (b % 64);
        nbr[b * words + a / 64] |= 1 << (a % 64);
    }

    let mut levels: Vec<Level> = (1..=max_dim + 1).map(Level::new).collect();
    levels[0].verts.extend(0..num_vertices);
    if max_dim >= 1 && words == 1 {
        // single-word fast path: candidate sets fit in a register, and a
        // cheap counting pass sizes every level exactly so the expansion
        // never reallocates
        let above = |v: usize| if v == 63 { 0 } else { nbr[v] & (!0u64 << (v + 1)) };
        let mut counts = vec![0usize; max_dim + 1];
        for v in 0..num_vertices {
            let cand = above(v);
            if cand != 0 {
                count_word(&nbr, max_dim + 1, 1, cand, &mut counts);
            }
        }
        for (d, &c) in counts.iter().enumerate().skip(1) {
            levels[d].verts.reserve_exact(c * (d + 1));
        }
        let mut clique: Vec<usize> = Vec::with_capacity(max_dim + 1);
        for v in 0..num_vertices {
            clique.clear();
            clique.push(v);
            let cand = above(v);
            if cand != 0 {
                expand_word(&nbr, max_dim + 1, &mut clique, cand, &mut levels);
            }
        }
    } else if max_dim >= 1 {
        // scratch[d] = candidate bitset after the (d+1)-th vertex is chosen
        let mut scratch = vec![0u64; max_dim * words];
        let mut clique: Vec<usize> = Vec::with_capacity(max_dim + 1);
        for v in 0..num_vertices {
            clique.clear();
            clique.push(v);
            let mut any = 0u64;
            for k in 0..words {
                let masked = nbr[v * words + k] & mask_above(v, k);
                scratch[k] = masked;
                any |= masked;
            }
            if any != 0 {
                expand(&nbr, words, max_dim + 1, &mut clique, &mut scratch, 1, &mut levels);
            }
        }
    }
    Ok(Skeleton {
        num_vertices,
        levels,
    })
}

/// Ascending-id expansion over ≤ 64 vertices; `cand` holds the common
/// neighbors above the clique's last vertex, so the bits still pending in
/// the iteration are exactly the ids above the one just taken.
fn expand_word(
    nbr: &[u64],
    max_arity: usize,
    clique: &mut Vec<usize>,
    cand: u64,
    levels: &mut [Level],
) {
    let depth = clique.len();
    if depth + 1 == max_arity {
        // deepest level carries most of the output; emit it with
        // constant-length writes instead of the generic slice copy
        let verts = &mut levels[depth].verts;
        let mut w = cand;
        match *clique.as_slice() {
            [a] => {
                while w != 0 {
                    let u = w.trailing_zeros() as usize;
                    w &= w - 1;
                    verts.extend_from_slice(&[a, u]);
                }
            }
            [a, b] => {
                while w != 0 {
                    let u = w.trailing_zeros() as usize;
                    w &= w - 1;
                    verts.extend_from_slice(&[a, b, u]);
                }
            }
            _ => {
                while w != 0 {
                    let u = w.trailing_zeros() as usize;
                    w &= w - 1;
                    verts.extend_from_slice(clique);
                    verts.push(u);
                }
            }
        }
        return;
    }
    let mut w = cand;
    while w != 0 {
        let u = w.trailing_zeros() as usize;
        w &= w - 1;
        clique.push(u);
        levels[depth].verts.extend_from_slice(clique);
        let next = w & nbr[u];
        if next != 0 {
            expand_word(nbr, max_arity, clique, next, levels);
        }
        clique.pop();
    }
}

/// Counting twin of [`expand_word`]: tallies how many cliques of each size
/// the expansion will emit, without writing any of them. Each candidate bit
/// is one clique of `size + 1` vertices, so the final level is a popcount.
fn count_word(nbr: &[u64], max_arity: usize, size: usize, cand: u64, counts: &mut [usize]) {
    counts[size] += cand.count_ones() as usize;
    if size + 1 >= max_arity {
        return;
    }
    let mut w = cand;
    while w != 0 {
        let u = w.trailing_zeros() as usize;
        w &= w - 1;
        let next = w & nbr[u];
        if next != 0 {
            count_word(nbr, max_arity, size + 1, next, counts);
        }
    }
}

/// Bits of word `word` representing ids strictly greater than `v`.
fn mask_above(v: usize, word: usize) -> u64 {
    let vw = v / 64;
    if word < vw {
        0
    } else if word > vw {
        !0
    } else {
        let b = v % 64;
        if b == 63 {
            0
        } else {
            !0u64 << (b + 1)
        }
    }
}

fn expand(
    nbr: &[u64],
    words: usize,
    max_arity: usize,
    clique: &mut Vec<usize>,
    scratch: &mut [u64],
    depth: usize,
    levels: &mut [Level],
) {
    let cand_base = (depth - 1) * words;
    for wi in 0..words {
        let mut w = scratch[cand_base + wi];
        while w != 0 {
            let b = w.trailing_zeros() as usize;
            w &= w - 1;
            let u = wi * 64 + b;
            clique.push(u);
            levels[clique.len() - 1].verts.extend_from_slice(clique);
            if clique.len() < max_arity {
                let next_base = depth * words;
                let mut any = 0u64;
                for k in 0..words {
                    let masked =
                        scratch[cand_base + k] & nbr[u * words + k] & mask_above(u, k);
                    scratch[next_base + k] = masked;
                    any |= masked;
                }
                if any != 0 {
                    expand(nbr, words, max_arity, clique, scratch, depth + 1, levels);
                }
            }
            clique.pop();
        }
    }
}

/// The Vietoris-Rips complex at radius δ: a simplex for every vertex set
/// of size ≤ max_dim+1 whose pairwise distances are all ≤ δ. Equals the
/// clique complex of the δ-radius graph.
pub fn vietoris_rips<R: Real>(
    positions: &[Point<R>],
    delta: R,
    max_dim: usize,
) -> Result<SimplicialComplex<R>, ComplexError> {
    let edges = radius_graph(positions, delta)?;
    let skeleton = clique_lift(&edges, positions.len(), max_dim)?;
    SimplicialComplex::from_skeleton(positions.to_vec(), skeleton)
}
