//! The four adjacency relations between simplices that carry messages:
//!
//! * boundary ℬ(σ): codimension-1 faces τ ≺ σ (sender = face);
//! * coboundary 𝒞(σ): the transpose — parents one dimension up;
//! * upper 𝒩↑(σ): equal-dimension simplices sharing a common parent;
//! * lower 𝒩↓(σ): equal-dimension simplices sharing a common face.
//!
//! Upper pairs carry their witnessing parent, and a pair adjacent through
//! several parents appears once per witness (for codimension-1 sharing the
//! parent is in fact forced to be τ∪σ, so the witness is unique). Pairs are
//! emitted in a deterministic order fixed by the complex's lexicographic
//! simplex ordering.

use std::collections::BTreeMap;

use super::{ComplexError, SimplicialComplex};
use crate::scalar::Real;

/// Identifies a simplex as (dimension, index within that dimension's
/// lexicographically sorted level).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimplexId {
    pub dim: usize,
    pub idx: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AdjacencyKind {
    Boundary,
    Coboundary,
    Lower,
    Upper,
}

impl AdjacencyKind {
    pub const ALL: [AdjacencyKind; 4] = [
        AdjacencyKind::Boundary,
        AdjacencyKind::Coboundary,
        AdjacencyKind::Lower,
        AdjacencyKind::Upper,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AdjacencyKind::Boundary => "boundary",
            AdjacencyKind::Coboundary => "coboundary",
            AdjacencyKind::Lower => "lower",
            AdjacencyKind::Upper => "upper",
        }
    }
}

/// A directed message edge: `sender` feeds `receiver`. Upper pairs record
/// the parent simplex that witnesses the adjacency.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DirectedPair {
    pub sender: SimplexId,
    pub receiver: SimplexId,
    pub witness: Option<SimplexId>,
}

/// One relation per (kind, sender dimension, receiver dimension).
pub type RelationKey = (AdjacencyKind, usize, usize);

#[derive(Clone, Debug, Default)]
pub struct AdjacencyIndex {
    relations: BTreeMap<RelationKey, Vec<DirectedPair>>,
}

impl AdjacencyIndex {
    pub fn pairs(&self, kind: AdjacencyKind, sender_dim: usize, receiver_dim: usize) -> &[DirectedPair] {
        self.relations
            .get(&(kind, sender_dim, receiver_dim))
            .map_or(&[], Vec::as_slice)
    }

    /// Iterates non-empty relations in deterministic key order.
    pub fn relations(&self) -> impl Iterator<Item = (RelationKey, &[DirectedPair])> {
        self.relations.iter().map(|(&k, v)| (k, v.as_slice()))
    }

    pub fn total_pairs(&self) -> usize {
        self.relations.values().map(Vec::len).sum()
    }

    fn push(&mut self, key: RelationKey, pair: DirectedPair) {
        self.relations.entry(key).or_default().push(pair);
    }
}

/// Builds the requested adjacency relations of a complex.
///
/// `kinds` selects which relations to materialize; `dim_pairs`, when given,
/// keeps only relations with those (sender_dim, receiver_dim) combinations.
pub fn build_adjacency<R: Real>(
    complex: &SimplicialComplex<R>,
    kinds: &[AdjacencyKind],
    dim_pairs: Option<&[(usize, usize)]>,
) -> Result<AdjacencyIndex, ComplexError> {
    let wanted = |kind: AdjacencyKind, sd: usize, rd: usize| -> bool {
        kinds.contains(&kind) && dim_pairs.is_none_or(|ps| ps.contains(&(sd, rd)))
    };
    let mut index = AdjacencyIndex::default();
    let max_dim = complex.max_dim();
    let mut face = Vec::new();

    // Boundary and its transpose in one sweep over each level's face maps.
    if kinds.contains(&AdjacencyKind::Boundary) || kinds.contains(&AdjacencyKind::Coboundary) {
        for d in 1..=max_dim {
            for (idx, s) in complex.level_iter(d).enumerate() {
                let receiver = SimplexId { dim: d, idx };
                for omit in 0..s.len() {
                    face.clear();
                    face.extend(s.iter().enumerate().filter(|&(i, _)| i != omit).map(|(_, &v)| v));
                    let sender = complex
                        .find(&face)
                        .ok_or_else(|| ComplexError::MissingFace(face.clone()))?;
                    if wanted(AdjacencyKind::Boundary, d - 1, d) {
                        index.push(
                            (AdjacencyKind::Boundary, d - 1, d),
                            DirectedPair { sender, receiver, witness: None },
                        );
                    }
                    if wanted(AdjacencyKind::Coboundary, d, d - 1) {
                        index.push(
                            (AdjacencyKind::Coboundary, d, d - 1),
                            DirectedPair { sender: receiver, receiver: sender, witness: None },
                        );
                    }
                }
            }
        }
    }

    // Upper: every ordered pair of distinct codim-1 faces of each parent.
    if kinds.contains(&AdjacencyKind::Upper) {
        for parent_dim in 1..=max_dim {
            let k = parent_dim - 1;
            if !wanted(AdjacencyKind::Upper, k, k) {
                continue;
            }
            let mut faces: Vec<SimplexId> = Vec::new();
            for (idx, s) in complex.level_iter(parent_dim).enumerate() {
                let witness = SimplexId { dim: parent_dim, idx };
                faces.clear();
                for omit in 0..s.len() {
                    face.clear();
                    face.extend(s.iter().enumerate().filter(|&(i, _)| i != omit).map(|(_, &v)| v));
                    faces.push(
                        complex
                            .find(&face)
                            .ok_or_else(|| ComplexError::MissingFace(face.clone()))?,
                    );
                }
                for &sender in &faces {
                    for &receiver in &faces {
                        if sender != receiver {
                            index.push(
                                (AdjacencyKind::Upper, k, k),
                                DirectedPair { sender, receiver, witness: Some(witness) },
                            );
                        }
                    }
                }
            }
        }
    }

    // Lower: every ordered pair of distinct cofaces of each shared face.
    // Two equal-dimension simplices can share at most one codim-1 face, so
    // grouping by that face emits each directed pair exactly once.
    if kinds.contains(&AdjacencyKind::Lower) {
        for d in 1..=max_dim {
            if !wanted(AdjacencyKind::Lower, d, d) {
                continue;
            }
            let mut cofaces: Vec<Vec<SimplexId>> =
                vec![Vec::new(); complex.num_simplices(d - 1)];
            for (idx, s) in complex.level_iter(d).enumerate() {
                let id = SimplexId { dim: d, idx };
                for omit in 0..s.len() {
                    face.clear();
                    face.extend(s.iter().enumerate().filter(|&(i, _)| i != omit).map(|(_, &v)| v));
                    let fid = complex
                        .find(&face)
                        .ok_or_else(|| ComplexError::MissingFace(face.clone()))?;
                    cofaces[fid.idx].push(id);
                }
            }
            for group in &cofaces {
                for &sender in group {
                    for &receiver in group {
                        if sender != receiver {
                            index.push(
                                (AdjacencyKind::Lower, d, d),
                                DirectedPair { sender, receiver, witness: None },
                            );
                        }
                    }
                }
            }
        }
    }

    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{vietoris_rips, Simplex};
    use crate::geometry::Point;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn full_triangle() -> SimplicialComplex<f64> {
        let pts = vec![
            Point::new(vec![0.0, 0.0]),
            Point::new(vec![1.0, 0.0]),
            Point::new(vec![0.0, 1.0]),
        ];
        vietoris_rips(&pts, 2.0, 2).unwrap()
    }

    #[test]
    fn triangle_adjacencies_match_definitions() {
        let complex = full_triangle();
        let adj = build_adjacency(&complex, &AdjacencyKind::ALL, None).unwrap();

        // vertices upper-adjacent through each edge: 2 directed pairs per edge
        let upper = adj.pairs(AdjacencyKind::Upper, 0, 0);
        assert_eq!(upper.len(), 6);
        let senders_to_v0: BTreeSet<usize> = upper
            .iter()
            .filter(|p| p.receiver == SimplexId { dim: 0, idx: 0 })
            .map(|p| p.sender.idx)
            .collect();
        assert_eq!(senders_to_v0, BTreeSet::from([1, 2]));

        // each edge has its 2 endpoints as boundary senders
        let boundary = adj.pairs(AdjacencyKind::Boundary, 0, 1);
        assert_eq!(boundary.len(), 6);
        let edge01 = complex.find(&[0, 1]).unwrap();
        let faces_of_edge01: BTreeSet<usize> = boundary
            .iter()
            .filter(|p| p.receiver == edge01)
            .map(|p| p.sender.idx)
            .collect();
        assert_eq!(faces_of_edge01, BTreeSet::from([0, 1]));

        // coboundary of v0 contains edges {0,1} and {0,2}
        let cob = adj.pairs(AdjacencyKind::Coboundary, 1, 0);
        let parents_of_v0: BTreeSet<usize> = cob
            .iter()
            .filter(|p| p.receiver == SimplexId { dim: 0, idx: 0 })
            .map(|p| p.sender.idx)
            .collect();
        assert!(parents_of_v0.contains(&complex.find(&[0, 1]).unwrap().idx));
        assert!(parents_of_v0.contains(&complex.find(&[0, 2]).unwrap().idx));

        // edges are upper-adjacent through the triangle and lower-adjacent
        // through shared vertices
        assert_eq!(adj.pairs(AdjacencyKind::Upper, 1, 1).len(), 6);
        assert_eq!(adj.pairs(AdjacencyKind::Lower, 1, 1).len(), 6);
        for p in adj.pairs(AdjacencyKind::Upper, 1, 1) {
            assert_eq!(p.witness, Some(SimplexId { dim: 2, idx: 0 }));
        }
    }

    #[test]
    fn single_edge_complex() {
        let pts = vec![Point::new(vec![0.0]), Point::new(vec![3.0])];
        let complex = vietoris_rips(&pts, 5.0, 2).unwrap();
        let adj = build_adjacency(&complex, &AdjacencyKind::ALL, None).unwrap();
        assert_eq!(adj.pairs(AdjacencyKind::Upper, 0, 0).len(), 2);
        assert_eq!(adj.pairs(AdjacencyKind::Boundary, 0, 1).len(), 2);
        assert_eq!(adj.pairs(AdjacencyKind::Coboundary, 1, 0).len(), 2);
        assert!(adj.pairs(AdjacencyKind::Lower, 1, 1).is_empty());
    }

    #[test]
    fn coboundary_is_exact_transpose_of_boundary() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let pts: Vec<Point<f64>> = (0..12)
            .map(|_| Point::new((0..3).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect();
        let complex = vietoris_rips(&pts, 0.9, 3).unwrap();
        let adj = build_adjacency(&complex, &AdjacencyKind::ALL, None).unwrap();
        for d in 1..=complex.max_dim() {
            let mut reversed: Vec<(SimplexId, SimplexId)> = adj
                .pairs(AdjacencyKind::Boundary, d - 1, d)
                .iter()
                .map(|p| (p.receiver, p.sender))
                .collect();
            let mut cob: Vec<(SimplexId, SimplexId)> = adj
                .pairs(AdjacencyKind::Coboundary, d, d - 1)
                .iter()
                .map(|p| (p.sender, p.receiver))
                .collect();
            reversed.sort();
            cob.sort();
            assert_eq!(reversed, cob);
        }
    }

    #[test]
    fn every_simplex_has_dim_plus_one_boundary_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let pts: Vec<Point<f64>> = (0..10)
            .map(|_| Point::new((0..2).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect();
        let complex = vietoris_rips(&pts, 1.0, 3).unwrap();
        let adj = build_adjacency(&complex, &[AdjacencyKind::Boundary], None).unwrap();
        for d in 1..=complex.max_dim() {
            for idx in 0..complex.num_simplices(d) {
                let receiver = SimplexId { dim: d, idx };
                let count = adj
                    .pairs(AdjacencyKind::Boundary, d - 1, d)
                    .iter()
                    .filter(|p| p.receiver == receiver)
                    .count();
                assert_eq!(count, d + 1);
            }
        }
    }

    /// Applies the set-theoretic definitions verbatim over all simplex
    /// pairs (quadratic scan).
    fn definition_oracle(
        complex: &SimplicialComplex<f64>,
    ) -> BTreeMap<RelationKey, Vec<(SimplexId, SimplexId, Option<SimplexId>)>> {
        let all: Vec<(SimplexId, Simplex)> = (0..=complex.max_dim())
            .flat_map(|d| {
                complex
                    .simplices(d)
                    .into_iter()
                    .enumerate()
                    .map(move |(idx, s)| (SimplexId { dim: d, idx }, s))
            })
            .collect();
        let subset = |a: &Simplex, b: &Simplex| a.vertices().iter().all(|v| b.vertices().contains(v));
        let shared = |a: &Simplex, b: &Simplex| {
            a.vertices().iter().filter(|v| b.vertices().contains(v)).count()
        };
        let mut out: BTreeMap<RelationKey, Vec<_>> = BTreeMap::new();
        for (ia, sa) in &all {
            for (ib, sb) in &all {
                if ia == ib {
                    continue;
                }
                // boundary: sa ≺ sb
                if sa.dim() + 1 == sb.dim() && subset(sa, sb) {
                    out.entry((AdjacencyKind::Boundary, sa.dim(), sb.dim()))
                        .or_default()
                        .push((*ia, *ib, None));
                    out.entry((AdjacencyKind::Coboundary, sb.dim(), sa.dim()))
                        .or_default()
                        .push((*ib, *ia, None));
                }
                if sa.dim() == sb.dim() {
                    // upper: common parent contains both
                    for (ip, sp) in &all {
                        if sp.dim() == sa.dim() + 1 && subset(sa, sp) && subset(sb, sp) {
                            out.entry((AdjacencyKind::Upper, sa.dim(), sb.dim()))
                                .or_default()
                                .push((*ia, *ib, Some(*ip)));
                        }
                    }
                    // lower: common codim-1 face
                    if sa.dim() >= 1 && shared(sa, sb) == sa.dim() {
                        let both_contain_shared_face = all.iter().any(|(_, sf)| {
                            sf.dim() + 1 == sa.dim() && subset(sf, sa) && subset(sf, sb)
                        });
                        if both_contain_shared_face {
                            out.entry((AdjacencyKind::Lower, sa.dim(), sb.dim()))
                                .or_default()
                                .push((*ia, *ib, None));
                        }
                    }
                }
            }
        }
        for pairs in out.values_mut() {
            pairs.sort();
        }
        out
    }

    #[test]
    fn adjacency_matches_definition_oracle_on_random_complexes() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..8 {
            let pts: Vec<Point<f64>> = (0..10)
                .map(|_| Point::new((0..3).map(|_| rng.random_range(-1.0..1.0)).collect()))
                .collect();
            let complex = vietoris_rips(&pts, rng.random_range(0.6..1.2), 3).unwrap();
            let adj = build_adjacency(&complex, &AdjacencyKind::ALL, None).unwrap();
            let oracle = definition_oracle(&complex);
            let mut got: BTreeMap<RelationKey, Vec<(SimplexId, SimplexId, Option<SimplexId>)>> =
                BTreeMap::new();
            for (key, pairs) in adj.relations() {
                let mut v: Vec<_> = pairs
                    .iter()
                    .map(|p| (p.sender, p.receiver, p.witness))
                    .collect();
                v.sort();
                got.insert(key, v);
            }
            assert_eq!(got, oracle);
        }
    }

    #[test]
    fn dim_pair_filter_limits_relations() {
        let complex = full_triangle();
        let adj = build_adjacency(
            &complex,
            &[AdjacencyKind::Upper, AdjacencyKind::Boundary],
            Some(&[(0, 0), (0, 1)]),
        )
        .unwrap();
        assert!(!adj.pairs(AdjacencyKind::Upper, 0, 0).is_empty());
        assert!(!adj.pairs(AdjacencyKind::Boundary, 0, 1).is_empty());
        assert!(adj.pairs(AdjacencyKind::Upper, 1, 1).is_empty());
        assert!(adj.pairs(AdjacencyKind::Boundary, 1, 2).is_empty());
    }

    #[test]
    fn upper_pairs_appear_once_per_witness() {
        // two triangles sharing edge {1,2}: vertices 1,2 are upper-adjacent
        // through that edge once, and through no other simplex; edges {1,2}
        // and {0,1} share parent {0,1,2} only.
        let pts = vec![
            Point::new(vec![0.0, 0.0]),
            Point::new(vec![1.0, 0.0]),
            Point::new(vec![0.5, 0.8]),
            Point::new(vec![1.5, 0.8]),
        ];
        let complex = vietoris_rips(&pts, 1.3, 2).unwrap();
        assert_eq!(complex.num_simplices(2), 2, "expected two triangles");
        let adj = build_adjacency(&complex, &[AdjacencyKind::Upper], None).unwrap();
        let v1 = SimplexId { dim: 0, idx: 1 };
        let v2 = SimplexId { dim: 0, idx: 2 };
        let count = adj
            .pairs(AdjacencyKind::Upper, 0, 0)
            .iter()
            .filter(|p| p.sender == v1 && p.receiver == v2)
            .count();
        assert_eq!(count, 1, "single witnessing edge, single pair");
        // the witness of an upper pair is always the union of its endpoints
        for p in adj.pairs(AdjacencyKind::Upper, 1, 1) {
            let w = p.witness.unwrap();
            let mut union: Vec<usize> = complex
                .simplex_vertices(p.sender)
                .iter()
                .chain(complex.simplex_vertices(p.receiver))
                .copied()
                .collect();
            union.sort_unstable();
            union.dedup();
            assert_eq!(complex.simplex_vertices(w), union.as_slice());
        }
    }
}
