//! Exact low-dimensional Euclidean geometry: distances, simplex volumes,
//! hyperplane normals and dihedral angles, and rigid motions for symmetry
//! checks.
//!
//! Volumes use the Gram-determinant form `sqrt(det(EᵀE))/k!`, which reduces
//! to the direct determinant form `|det(E)|/n!` when the simplex dimension
//! equals the ambient dimension (see [`simplex_volume_det`] for that route).
//! Dihedral angles are taken between the hyperplanes spanned by two faces of
//! a common parent simplex, folded to `[0, π/2]` by the absolute value of
//! the normal cosine.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::scalar::{real, Real};

/// Residual threshold below which a direction is considered linearly
/// dependent (degenerate) after normalization.
const DEGENERATE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
}

/// A position in `R^n`. Coordinates are unitless dataset units.
#[derive(Clone, Debug, PartialEq)]
pub struct Point<R> {
    coords: Vec<R>,
}

impl<R: Real> Point<R> {
    pub fn new(coords: Vec<R>) -> Self {
        debug_assert!(!coords.is_empty(), "ambient dimension must be >= 1");
        debug_assert!(coords.iter().all(|c| c.is_finite()), "coordinates must be finite");
        Self { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[R] {
        &self.coords
    }
}

impl<R: Real> From<Vec<R>> for Point<R> {
    fn from(coords: Vec<R>) -> Self {
        Self::new(coords)
    }
}

pub(crate) fn vsub<R: Real>(a: &[R], b: &[R]) -> Vec<R> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

pub(crate) fn vdot<R: Real>(a: &[R], b: &[R]) -> R {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub(crate) fn vnorm<R: Real>(a: &[R]) -> R {
    vdot(a, a).sqrt()
}

/// Euclidean distance between two points of equal ambient dimension.
pub fn distance<R: Real>(p: &Point<R>, q: &Point<R>) -> Result<R, GeometryError> {
    if p.dim() != q.dim() {
        return Err(GeometryError::DimensionMismatch(p.dim(), q.dim()));
    }
    Ok(vnorm(&vsub(p.coords(), q.coords())))
}

/// An element of `E(n)`: an orthogonal matrix (rotation or reflection)
/// followed by a translation.
#[derive(Clone, Debug)]
pub struct RigidMotion<R> {
    dim: usize,
    /// Row-major `dim x dim` orthogonal matrix.
    q: Vec<R>,
    t: Vec<R>,
}

impl<R: Real> RigidMotion<R> {
    /// Builds a motion from a row-major orthogonal matrix and a translation,
    /// validating `QᵀQ = I` and `det(Q) = ±1` to 1e-12 per entry.
    pub fn new(q: Vec<R>, t: Vec<R>) -> Result<Self, GeometryError> {
        let dim = t.len();
        if q.len() != dim * dim {
            return Err(GeometryError::DimensionMismatch(q.len(), dim * dim));
        }
        let tol = real::<R>(1e-12);
        for i in 0..dim {
            for j in 0..dim {
                // (QᵀQ)[i][j] = column i · column j
                let mut acc = R::zero();
                for r in 0..dim {
                    acc += q[r * dim + i] * q[r * dim + j];
                }
                let expect = if i == j { R::one() } else { R::zero() };
                if (acc - expect).abs() > tol {
                    return Err(GeometryError::InvalidInput(format!(
                        "matrix is not orthogonal at ({i},{j})"
                    )));
                }
            }
        }
        let det = det_lu(&q, dim);
        if (det.abs() - R::one()).abs() > tol {
            return Err(GeometryError::InvalidInput(format!(
                "determinant {det} is not +-1"
            )));
        }
        Ok(Self { dim, q, t })
    }

    pub fn identity(dim: usize) -> Self {
        let mut q = vec![R::zero(); dim * dim];
        for i in 0..dim {
            q[i * dim + i] = R::one();
        }
        Self {
            dim,
            q,
            t: vec![R::zero(); dim],
        }
    }

    /// Samples a random motion: QR-orthogonalized Gaussian rotation, a
    /// reflection with probability 1/2, and a Gaussian translation.
    pub fn random<G: Rng>(dim: usize, rng: &mut G) -> Self {
        let q = loop {
            let cols: Vec<Vec<R>> = (0..dim)
                .map(|_| {
                    (0..dim)
                        .map(|_| real::<R>(rng.sample::<f64, _>(StandardNormal)))
                        .collect()
                })
                .collect();
            if let Some(basis) = try_orthonormalize(&cols, real(1e-9)) {
                if basis.len() == dim {
                    break basis;
                }
            }
        };
        let mut flat = Vec::with_capacity(dim * dim);
        for row in &q {
            flat.extend_from_slice(row);
        }
        // negating one row flips the determinant sign, so reflections are
        // sampled alongside rotations
        if rng.random::<bool>() {
            for x in flat.iter_mut().take(dim) {
                *x = -*x;
            }
        }
        let t = (0..dim)
            .map(|_| real::<R>(rng.sample::<f64, _>(StandardNormal)))
            .collect();
        Self { dim, q: flat, t }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Applies `p ↦ Qp + t`.
    pub fn apply_point(&self, p: &Point<R>) -> Result<Point<R>, GeometryError> {
        if p.dim() != self.dim {
            return Err(GeometryError::DimensionMismatch(p.dim(), self.dim));
        }
        let mut out = self.t.clone();
        for (i, o) in out.iter_mut().enumerate() {
            *o += vdot(&self.q[i * self.dim..(i + 1) * self.dim], p.coords());
        }
        Ok(Point::new(out))
    }

    /// Applies only the linear part `v ↦ Qv` (velocities rotate but do not
    /// translate).
    pub fn apply_vector(&self, v: &[R]) -> Result<Vec<R>, GeometryError> {
        if v.len() != self.dim {
            return Err(GeometryError::DimensionMismatch(v.len(), self.dim));
        }
        Ok((0..self.dim)
            .map(|i| vdot(&self.q[i * self.dim..(i + 1) * self.dim], v))
            .collect())
    }
}

/// Applies a rigid motion to a point list.
pub fn apply_motion<R: Real>(
    g: &RigidMotion<R>,
    points: &[Point<R>],
) -> Result<Vec<Point<R>>, GeometryError> {
    points.iter().map(|p| g.apply_point(p)).collect()
}

/// `k`-dimensional volume of the simplex spanned by `k+1` points in `R^n`,
/// computed as `sqrt(det(EᵀE))/k!` over the edge matrix `E`.
///
/// Degenerate (affinely dependent) point sets yield 0. A single vertex has
/// no volume here and is rejected, as is `k > n`.
pub fn simplex_volume<R: Real>(points: &[Point<R>]) -> Result<R, GeometryError> {
    let k = points
        .len()
        .checked_sub(1)
        .filter(|&k| k >= 1)
        .ok_or_else(|| {
            GeometryError::InvalidInput("simplex volume needs at least 2 points".into())
        })?;
    let n = points[0].dim();
    if points.iter().any(|p| p.dim() != n) {
        return Err(GeometryError::InvalidInput(
            "points have mixed ambient dimensions".into(),
        ));
    }
    if k > n {
        return Err(GeometryError::InvalidInput(format!(
            "{k}-simplex cannot be embedded in R^{n}"
        )));
    }
    let edges: Vec<Vec<R>> = points[1..]
        .iter()
        .map(|p| vsub(p.coords(), points[0].coords()))
        .collect();
    // Gram matrix G = EᵀE, factored by Cholesky; a non-positive pivot means
    // rank deficiency, i.e. zero volume.
    let mut gram = vec![R::zero(); k * k];
    for i in 0..k {
        for j in 0..=i {
            let g = vdot(&edges[i], &edges[j]);
            gram[i * k + j] = g;
            gram[j * k + i] = g;
        }
    }
    let mut l = vec![R::zero(); k * k];
    let mut sqrt_det = R::one();
    // pivots that vanish relative to their diagonal mean the new edge is
    // (numerically) in the span of the previous ones: rank deficiency
    let rank_tol = real::<R>(64.0) * R::epsilon();
    for j in 0..k {
        let mut d = gram[j * k + j];
        for r in 0..j {
            d -= l[j * k + r] * l[j * k + r];
        }
        if d <= gram[j * k + j] * rank_tol {
            return Ok(R::zero());
        }
        let dj = d.sqrt();
        sqrt_det *= dj;
        l[j * k + j] = dj;
        for i in (j + 1)..k {
            let mut s = gram[i * k + j];
            for r in 0..j {
                s -= l[i * k + r] * l[j * k + r];
            }
            l[i * k + j] = s / dj;
        }
    }
    Ok(sqrt_det / factorial::<R>(k))
}

/// Direct determinant route `|det(v_1-v_0, …, v_n-v_0)|/n!`, defined only
/// when the simplex dimension equals the ambient dimension. Kept as an
/// independent cross-check of [`simplex_volume`].
pub fn simplex_volume_det<R: Real>(points: &[Point<R>]) -> Result<R, GeometryError> {
    let k = points.len().saturating_sub(1);
    let n = points.first().map(Point::dim).unwrap_or(0);
    if k == 0 || k != n {
        return Err(GeometryError::InvalidInput(format!(
            "determinant volume needs k == n, got k={k}, n={n}"
        )));
    }
    let mut e = vec![R::zero(); n * n];
    for (i, p) in points[1..].iter().enumerate() {
        if p.dim() != n {
            return Err(GeometryError::DimensionMismatch(p.dim(), n));
        }
        for j in 0..n {
            // columns are edge vectors
            e[j * n + i] = p.coords()[j] - points[0].coords()[j];
        }
    }
    Ok(det_lu(&e, n).abs() / factorial::<R>(n))
}

/// Dihedral angle in `[0, π/2]` between the hyperplanes spanned by two
/// faces of a common parent simplex.
///
/// Each face of `m` points spans an `(m-1)`-dimensional direction space;
/// normals are taken inside the joint affine span of both faces. Identical
/// (or parallel) hyperplane directions give 0. A face whose points do not
/// span `m-1` dimensions is degenerate.
pub fn dihedral_angle<R: Real>(
    face_a: &[Point<R>],
    face_b: &[Point<R>],
) -> Result<R, GeometryError> {
    let m = face_a.len();
    if face_b.len() != m {
        return Err(GeometryError::DimensionMismatch(m, face_b.len()));
    }
    if m < 2 {
        return Err(GeometryError::InvalidInput(
            "faces must have at least 2 points to span a hyperplane".into(),
        ));
    }
    let n = face_a[0].dim();
    if face_a.iter().chain(face_b).any(|p| p.dim() != n) {
        return Err(GeometryError::InvalidInput(
            "points have mixed ambient dimensions".into(),
        ));
    }
    let tol = real::<R>(DEGENERATE_TOL);
    let dirs_a: Vec<Vec<R>> = face_a[1..]
        .iter()
        .map(|p| vsub(p.coords(), face_a[0].coords()))
        .collect();
    let dirs_b: Vec<Vec<R>> = face_b[1..]
        .iter()
        .map(|p| vsub(p.coords(), face_b[0].coords()))
        .collect();
    let basis_a = try_orthonormalize(&dirs_a, tol)
        .filter(|b| b.len() == m - 1)
        .ok_or_else(|| GeometryError::DegenerateGeometry("face A does not span a hyperplane".into()))?;
    let basis_b = try_orthonormalize(&dirs_b, tol)
        .filter(|b| b.len() == m - 1)
        .ok_or_else(|| GeometryError::DegenerateGeometry("face B does not span a hyperplane".into()))?;

    // Joint span of both faces plus the connecting segment.
    let mut all = dirs_a;
    all.extend(dirs_b);
    all.push(vsub(face_b[0].coords(), face_a[0].coords()));
    let joint = try_orthonormalize(&all, tol).unwrap_or_default();
    let s = joint.len();
    if s == m - 1 {
        // both faces span the entire joint space: coincident hyperplanes
        return Ok(R::zero());
    }
    if s != m {
        return Err(GeometryError::InvalidInput(format!(
            "faces span a {s}-dimensional joint space, expected {m} (not faces of a common simplex)"
        )));
    }

    // Coordinates of each face basis inside the joint span stay orthonormal.
    let coords = |basis: &[Vec<R>]| -> Vec<Vec<R>> {
        basis
            .iter()
            .map(|v| joint.iter().map(|q| vdot(q, v)).collect())
            .collect()
    };
    let na = complement_direction(&coords(&basis_a), s, tol).ok_or_else(|| {
        GeometryError::DegenerateGeometry("face A normal has vanishing norm".into())
    })?;
    let nb = complement_direction(&coords(&basis_b), s, tol).ok_or_else(|| {
        GeometryError::DegenerateGeometry("face B normal has vanishing norm".into())
    })?;
    let cos = vdot(&na, &nb).abs().min(R::one());
    Ok(cos.acos())
}

/// Modified Gram-Schmidt with one re-orthogonalization pass. Returns the
/// orthonormal basis of the span, skipping dependent inputs; `None` when
/// every input has vanishing norm.
fn try_orthonormalize<R: Real>(vecs: &[Vec<R>], tol: R) -> Option<Vec<Vec<R>>> {
    let mut basis: Vec<Vec<R>> = Vec::new();
    for v in vecs {
        let scale = vnorm(v);
        if scale <= tol {
            continue;
        }
        let mut w: Vec<R> = v.iter().map(|&x| x / scale).collect();
        for _ in 0..2 {
            for q in &basis {
                let c = vdot(q, &w);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= c * *qi;
                }
            }
        }
        let r = vnorm(&w);
        if r > tol {
            for x in w.iter_mut() {
                *x /= r;
            }
            basis.push(w);
        }
    }
    if basis.is_empty() && !vecs.is_empty() {
        return None;
    }
    Some(basis)
}

/// Completes an orthonormal set of `s`-vectors to a basis of `R^s` by one
/// vector: the unit normal of the spanned hyperplane.
fn complement_direction<R: Real>(basis: &[Vec<R>], s: usize, tol: R) -> Option<Vec<R>> {
    for axis in 0..s {
        let mut w = vec![R::zero(); s];
        w[axis] = R::one();
        for _ in 0..2 {
            for q in basis {
                let c = vdot(q, &w);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= c * *qi;
                }
            }
        }
        let r = vnorm(&w);
        if r > tol {
            for x in w.iter_mut() {
                *x /= r;
            }
            return Some(w);
        }
    }
    None
}

/// Determinant of a row-major `n x n` matrix by LU with partial pivoting.
fn det_lu<R: Real>(m: &[R], n: usize) -> R {
    let mut a = m.to_vec();
    let mut det = R::one();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                a[i * n + col]
                    .abs()
                    .partial_cmp(&a[j * n + col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap();
        if a[pivot * n + col] == R::zero() {
            return R::zero();
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            det = -det;
        }
        let p = a[col * n + col];
        det *= p;
        for i in (col + 1)..n {
            let f = a[i * n + col] / p;
            for j in col..n {
                let sub = f * a[col * n + j];
                a[i * n + j] -= sub;
            }
        }
    }
    det
}

fn factorial<R: Real>(k: usize) -> R {
    (1..=k).fold(R::one(), |acc, i| acc * real::<R>(i as f64))
}
