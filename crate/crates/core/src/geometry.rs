//! Convex polyhedral domains, the oblique constrained projection and the
//! derivative projection matrices used by the Euler schemes.
//!
//! A domain is `G = { x : <x, n_i> >= c_i, i = 0..N }` with unit normals
//! `n_i`. Reflection directions are the columns `d_i` of a `J x N` matrix
//! `R` normalized so that `<d_i, n_i> = 1`.
//!
//! The projection of `x` is the pair `(z, xi)` with `z in G`, `z - x = R xi`,
//! `xi >= 0` and `xi_i > 0` only on faces containing `z`. Writing
//! `w = N^T z - c` this is the linear complementarity problem
//! `w = (N^T x - c) + N^T R xi`, `w >= 0`, `xi >= 0`, `w . xi = 0`, which is
//! solved exactly by enumerating candidate active sets in order of size.

use nalgebra::{DMatrix, DVector};
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Normals must have unit length up to this tolerance.
pub const UNIT_NORMAL_TOL: f64 = 1e-12;
/// `<d_i, n_i> = 1` must hold up to this tolerance.
pub const DIRECTION_NORMALIZATION_TOL: f64 = 1e-10;
/// Active systems with a smaller reciprocal 1-norm condition number are singular.
pub const SINGULAR_RCOND: f64 = 1e-12;
/// Multipliers in `(-MULTIPLIER_FLOOR, 0]` (relative to `1 + |x|`) are clamped to zero.
pub const MULTIPLIER_FLOOR: f64 = 1e-12;
/// Largest face count handled by active-set enumeration.
pub const MAX_ENUMERATION_FACES: usize = 12;
const MAX_FACES: usize = 64;

/// Face-detection tolerance for a floating-point state: `1e-9 (1 + |x|)`.
pub fn boundary_tolerance(x: &[f64]) -> f64 {
    1e-9 * (1.0 + norm(x))
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Reciprocal condition number in the 1-norm, given a matrix and its inverse.
pub(crate) fn rcond_from_inverse(a: &DMatrix<f64>, inv: &DMatrix<f64>) -> f64 {
    let norm1 = |m: &DMatrix<f64>| {
        m.column_iter()
            .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let denom = norm1(a) * norm1(inv);
    if denom.is_finite() && denom > 0.0 {
        1.0 / denom
    } else {
        0.0
    }
}

/// Inverse and reciprocal condition number; `None` when below [`SINGULAR_RCOND`].
pub(crate) fn checked_inverse(a: &DMatrix<f64>) -> (Option<DMatrix<f64>>, f64) {
    match a.clone().try_inverse() {
        Some(inv) => {
            let rcond = rcond_from_inverse(a, &inv);
            if rcond < SINGULAR_RCOND {
                (None, rcond)
            } else {
                (Some(inv), rcond)
            }
        }
        None => (None, 0.0),
    }
}

/// A closed convex polyhedron given by unit inward normals and offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyhedron {
    normals: DMatrix<f64>,
    offsets: DVector<f64>,
    interior_point: DVector<f64>,
}

impl Polyhedron {
    /// `normals` holds one unit normal per column (`J x N`).
    pub fn new(normals: DMatrix<f64>, offsets: DVector<f64>, interior_point: DVector<f64>) -> Result<Self> {
        let (dim, faces) = normals.shape();
        if dim == 0 || faces == 0 {
            return Err(Error::InvalidPolyhedron("need at least one dimension and one face".into()));
        }
        if faces > MAX_FACES {
            return Err(Error::InvalidPolyhedron(format!("at most {MAX_FACES} faces are supported, got {faces}")));
        }
        if offsets.len() != faces {
            return Err(Error::InvalidPolyhedron(format!("{faces} normals but {} offsets", offsets.len())));
        }
        if interior_point.len() != dim {
            return Err(Error::InvalidPolyhedron(format!(
                "interior point has length {}, expected {dim}",
                interior_point.len()
            )));
        }
        for (i, n) in normals.column_iter().enumerate() {
            let len = n.norm();
            if (len - 1.0).abs() > UNIT_NORMAL_TOL {
                return Err(Error::InvalidPolyhedron(format!("normal {i} has length {len}, expected 1")));
            }
            let margin = n.dot(&interior_point) - offsets[i];
            if margin <= 0.0 {
                return Err(Error::InvalidPolyhedron(format!(
                    "interior point is not strictly inside face {i} (margin {margin:e})"
                )));
            }
        }
        Ok(Self { normals, offsets, interior_point })
    }

    /// Builds from row-wise normal vectors.
    pub fn from_normals(normals: &[Vec<f64>], offsets: &[f64], interior_point: &[f64]) -> Result<Self> {
        let dim = interior_point.len();
        if normals.iter().any(|n| n.len() != dim) {
            return Err(Error::InvalidPolyhedron(format!("every normal must have length {dim}")));
        }
        let mat = DMatrix::from_fn(dim, normals.len(), |r, c| normals[c][r]);
        Self::new(mat, DVector::from_column_slice(offsets), DVector::from_column_slice(interior_point))
    }

    /// The half line `[0, inf)`.
    pub fn half_line() -> Self {
        Self::orthant(1)
    }

    /// The nonnegative orthant of `R^dim`.
    pub fn orthant(dim: usize) -> Self {
        Self::new(
            DMatrix::identity(dim, dim),
            DVector::zeros(dim),
            DVector::from_element(dim, 1.0),
        )
        .expect("orthant is well formed")
    }

    /// `{ x : x_1 >= x_2 >= ... >= x_dim }` with faces `x_i = x_{i+1}`.
    pub fn weyl_chamber(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidDims(format!("Weyl chamber needs dimension >= 2, got {dim}")));
        }
        let mut normals = DMatrix::zeros(dim, dim - 1);
        for i in 0..dim - 1 {
            normals[(i, i)] = std::f64::consts::FRAC_1_SQRT_2;
            normals[(i + 1, i)] = -std::f64::consts::FRAC_1_SQRT_2;
        }
        let interior = DVector::from_fn(dim, |j, _| (dim - 1 - j) as f64);
        Self::new(normals, DVector::zeros(dim - 1), interior)
    }

    pub fn dim(&self) -> usize {
        self.normals.nrows()
    }

    pub fn num_faces(&self) -> usize {
        self.normals.ncols()
    }

    /// Normals as columns (`J x N`).
    pub fn normals(&self) -> &DMatrix<f64> {
        &self.normals
    }

    pub fn normal(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.normals.as_slice()[i * d..(i + 1) * d]
    }

    pub fn offsets(&self) -> &DVector<f64> {
        &self.offsets
    }

    pub fn interior_point(&self) -> &DVector<f64> {
        &self.interior_point
    }

    /// `<x, n_i> - c_i`.
    pub fn slack(&self, x: &[f64], i: usize) -> f64 {
        dot(self.normal(i), x) - self.offsets[i]
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        (0..self.num_faces()).all(|i| self.slack(x, i) >= -tol)
    }

    /// Faces `i` with `<x, n_i> - c_i <= tol`.
    pub fn active_set(&self, x: &[f64], tol: f64) -> Result<ActiveSet> {
        if x.len() != self.dim() {
            return Err(Error::InvalidDims(format!("point has length {}, expected {}", x.len(), self.dim())));
        }
        let mut indices = Vec::new();
        for i in 0..self.num_faces() {
            let s = self.slack(x, i);
            if s < -tol {
                return Err(Error::PointOutsideDomain { face: i, violation: -s });
            }
            if s <= tol {
                indices.push(i);
            }
        }
        Ok(ActiveSet { indices, tol })
    }

    /// Bitmask of faces within `tol` of `x`, without the domain check.
    pub(crate) fn near_mask(&self, x: &[f64], tol: f64) -> u64 {
        (0..self.num_faces())
            .filter(|&i| self.slack(x, i) <= tol)
            .fold(0, |m, i| m | (1 << i))
    }
}

/// Indices of the faces containing a point, in increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSet {
    indices: Vec<usize>,
    tol: f64,
}

impl ActiveSet {
    pub fn empty() -> Self {
        Self { indices: Vec::new(), tol: 0.0 }
    }

    pub fn new(mut indices: Vec<usize>, tol: f64) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self { indices, tol }
    }

    pub fn from_mask(mask: u64, tol: f64) -> Self {
        let indices = (0..64).filter(|i| mask & (1 << i) != 0).collect();
        Self { indices, tol }
    }

    pub fn mask(&self) -> u64 {
        self.indices.iter().fold(0, |m, &i| m | (1 << i))
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }
}

/// Result of [`project`].
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub point: DVector<f64>,
    pub multipliers: DVector<f64>,
    /// Faces with a strictly positive multiplier.
    pub active: ActiveSet,
}

fn check_reflection_shape(poly: &Polyhedron, r: &DMatrix<f64>) -> Result<()> {
    if r.shape() != (poly.dim(), poly.num_faces()) {
        return Err(Error::InvalidDims(format!(
            "reflection matrix is {}x{}, expected {}x{}",
            r.nrows(),
            r.ncols(),
            poly.dim(),
            poly.num_faces()
        )));
    }
    Ok(())
}

/// `N_A^T D_A` for the faces in `indices`.
fn active_matrix(normals: &DMatrix<f64>, dirs: &DMatrix<f64>, indices: &[usize]) -> DMatrix<f64> {
    let k = indices.len();
    DMatrix::from_fn(k, k, |a, b| normals.column(indices[a]).dot(&dirs.column(indices[b])))
}

/// `I - D_A (N_A^T D_A)^{-1} N_A^T`.
fn derivative_matrix(
    normals: &DMatrix<f64>,
    dirs: &DMatrix<f64>,
    indices: &[usize],
    inverse: &DMatrix<f64>,
) -> DMatrix<f64> {
    let j = normals.nrows();
    let d_a = dirs.select_columns(indices);
    let n_a = normals.select_columns(indices);
    DMatrix::identity(j, j) - d_a * inverse * n_a.transpose()
}

/// The derivative projection matrix for an active set: the unique linear
/// map onto `H = { y : <y, n_i> = 0, i in A }` whose correction `L y - y`
/// lies in the span of the active directions.
pub fn derivative_projection(poly: &Polyhedron, r: &DMatrix<f64>, active: &ActiveSet) -> Result<DMatrix<f64>> {
    check_reflection_shape(poly, r)?;
    let j = poly.dim();
    if active.is_empty() {
        return Ok(DMatrix::identity(j, j));
    }
    if let Some(&bad) = active.indices().iter().find(|&&i| i >= poly.num_faces()) {
        return Err(Error::InvalidDims(format!("face index {bad} out of range")));
    }
    let g = active_matrix(poly.normals(), r, active.indices());
    match checked_inverse(&g) {
        (Some(inv), _) => Ok(derivative_matrix(poly.normals(), r, active.indices(), &inv)),
        (None, rcond) => Err(Error::SingularActiveSystem { indices: active.indices().to_vec(), rcond }),
    }
}

/// Projects `x` onto the domain along the reflection directions.
pub fn project(poly: &Polyhedron, r: &DMatrix<f64>, x: &[f64]) -> Result<Projection> {
    let projector = Projector::new(poly, r)?;
    let mut z = DVector::zeros(poly.dim());
    let mut xi = DVector::zeros(poly.num_faces());
    let mask = projector.project_into(x, z.as_mut_slice(), xi.as_mut_slice())?;
    Ok(Projection { point: z, multipliers: xi, active: ActiveSet::from_mask(mask, 0.0) })
}

#[derive(Debug)]
struct ActiveSystem {
    indices: Vec<usize>,
    rcond: f64,
    solved: Option<SolvedSystem>,
}

#[derive(Debug)]
struct SolvedSystem {
    inverse: DMatrix<f64>,
    derivative: DMatrix<f64>,
}

/// Projection and derivative-projection engine for a fixed `(G, R)`.
///
/// Active-set factorizations are computed on first use and cached, so a
/// single projector can be shared across threads and trials. Enumeration
/// is exact but exponential in the face count; it is capped at
/// [`MAX_ENUMERATION_FACES`]. A pivoting complementarity solver for larger
/// face counts would slot in behind [`Projector::project_into`].
#[derive(Debug)]
pub struct Projector {
    normals: DMatrix<f64>,
    offsets: DVector<f64>,
    dirs: DMatrix<f64>,
    candidates: Vec<u64>,
    systems: Vec<OnceLock<ActiveSystem>>,
}

impl Projector {
    pub fn new(poly: &Polyhedron, r: &DMatrix<f64>) -> Result<Self> {
        check_reflection_shape(poly, r)?;
        let faces = poly.num_faces();
        if faces > MAX_ENUMERATION_FACES {
            return Err(Error::TooManyFaces { faces, max: MAX_ENUMERATION_FACES });
        }
        let total = 1usize << faces;
        let mut candidates: Vec<u64> = (1..total as u64).collect();
        candidates.sort_by_key(|m| (m.count_ones(), *m));
        Ok(Self {
            normals: poly.normals().clone(),
            offsets: poly.offsets().clone(),
            dirs: r.clone(),
            candidates,
            systems: (0..total).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.normals.nrows()
    }

    pub fn num_faces(&self) -> usize {
        self.normals.ncols()
    }

    pub fn directions(&self) -> &DMatrix<f64> {
        &self.dirs
    }

    #[inline]
    fn normal(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.normals.as_slice()[i * d..(i + 1) * d]
    }

    #[inline]
    fn direction(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.dirs.as_slice()[i * d..(i + 1) * d]
    }

    fn system(&self, mask: u64) -> &ActiveSystem {
        self.systems[mask as usize].get_or_init(|| {
            let indices: Vec<usize> = (0..self.num_faces()).filter(|i| mask & (1 << i) != 0).collect();
            if indices.is_empty() {
                let j = self.dim();
                return ActiveSystem {
                    indices,
                    rcond: 1.0,
                    solved: Some(SolvedSystem { inverse: DMatrix::zeros(0, 0), derivative: DMatrix::identity(j, j) }),
                };
            }
            let g = active_matrix(&self.normals, &self.dirs, &indices);
            let (inv, rcond) = checked_inverse(&g);
            let solved = inv.map(|inverse| SolvedSystem {
                derivative: derivative_matrix(&self.normals, &self.dirs, &indices, &inverse),
                inverse,
            });
            ActiveSystem { indices, rcond, solved }
        })
    }

    /// Derivative projection matrix for the faces in `mask`.
    pub fn derivative(&self, mask: u64) -> Result<&DMatrix<f64>> {
        let sys = self.system(mask);
        match &sys.solved {
            Some(s) => Ok(&s.derivative),
            None => Err(Error::SingularActiveSystem { indices: sys.indices.clone(), rcond: sys.rcond }),
        }
    }

    /// Writes the projection of `x` into `z` and its multipliers into `xi`;
    /// returns the mask of faces with a positive multiplier.
    pub fn project_into(&self, x: &[f64], z: &mut [f64], xi: &mut [f64]) -> Result<u64> {
        let faces = self.num_faces();
        let mut slack = [0.0f64; MAX_ENUMERATION_FACES];
        let mut inside = true;
        for (i, s) in slack.iter_mut().enumerate().take(faces) {
            *s = dot(self.normal(i), x) - self.offsets[i];
            inside &= *s >= 0.0;
        }
        xi.iter_mut().for_each(|v| *v = 0.0);
        if inside {
            z.copy_from_slice(x);
            return Ok(0);
        }

        let scale = 1.0 + norm(x);
        let tol = 1e-9 * scale;
        let floor = MULTIPLIER_FLOOR * scale;
        let mut singular: Option<&ActiveSystem> = None;
        let mut local = [0.0f64; MAX_ENUMERATION_FACES];

        for &mask in &self.candidates {
            let sys = self.system(mask);
            let Some(solved) = &sys.solved else {
                singular.get_or_insert(sys);
                continue;
            };
            let k = sys.indices.len();
            let mut negative = false;
            for a in 0..k {
                let mut s = 0.0;
                for b in 0..k {
                    s += solved.inverse[(a, b)] * slack[sys.indices[b]];
                }
                local[a] = -s;
                negative |= local[a] < -floor;
            }
            if negative {
                continue;
            }
            z.copy_from_slice(x);
            for a in 0..k {
                if local[a] > 0.0 {
                    let d = self.direction(sys.indices[a]);
                    z.iter_mut().zip(d).for_each(|(zi, di)| *zi += local[a] * di);
                } else {
                    local[a] = 0.0;
                }
            }
            let feasible =
                (0..faces).all(|i| mask & (1 << i) != 0 || dot(self.normal(i), z) - self.offsets[i] >= -tol);
            if !feasible {
                continue;
            }
            let mut out = 0u64;
            for a in 0..k {
                if local[a] > 0.0 {
                    xi[sys.indices[a]] = local[a];
                    out |= 1 << sys.indices[a];
                }
            }
            return Ok(out);
        }
        Err(match singular {
            Some(sys) => Error::RankDeficientActiveSet { indices: sys.indices.clone() },
            None => Error::NoFeasibleProjection,
        })
    }
}

/// Checks the reflection data against the domain: `<d_i, n_i> = 1` and
/// linear independence of the directions on every face combination that
/// occurs. When the normals are linearly independent every combination of
/// faces meets, so all of them are checked; otherwise the combinations
/// reached by projecting a deterministic cloud of exterior points are.
pub fn validate_reflection(poly: &Polyhedron, r: &DMatrix<f64>) -> Result<()> {
    check_reflection_shape(poly, r)?;
    for i in 0..poly.num_faces() {
        let ip = poly.normals().column(i).dot(&r.column(i));
        if (ip - 1.0).abs() > DIRECTION_NORMALIZATION_TOL {
            return Err(Error::InvalidReflection(format!("<d_{i}, n_{i}> = {ip}, expected 1")));
        }
    }
    let faces = poly.num_faces();
    let independent_normals = faces <= poly.dim() && poly.normals().rank(1e-10) == faces;
    let check_mask = |mask: u64| -> Result<()> {
        let set = ActiveSet::from_mask(mask, 0.0);
        let cols = r.select_columns(set.indices());
        if cols.rank(1e-10) < set.len() {
            return Err(Error::RankDeficientActiveSet { indices: set.indices().to_vec() });
        }
        derivative_projection(poly, r, &set).map(|_| ())
    };
    if independent_normals && faces <= 20 {
        for mask in 1..(1u64 << faces) {
            check_mask(mask)?;
        }
        return Ok(());
    }
    let projector = Projector::new(poly, r)?;
    let mut z = vec![0.0; poly.dim()];
    let mut xi = vec![0.0; faces];
    let mut rng = crate::rng::GaussianStream::new(0x0005_eed0_f9e0, 0, poly.dim(), 1.0);
    let mut dir = vec![0.0; poly.dim()];
    let mut seen = std::collections::BTreeSet::new();
    for sample in 0..600 {
        rng.fill(&mut dir);
        let scale = [1.0, 10.0, 100.0][sample % 3];
        let x: Vec<f64> = poly.interior_point().iter().zip(&dir).map(|(p, d)| p + scale * d).collect();
        projector.project_into(&x, &mut z, &mut xi)?;
        let mask = poly.near_mask(&z, boundary_tolerance(&z));
        if mask != 0 && seen.insert(mask) {
            check_mask(mask)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn oblique_2d() -> (Polyhedron, DMatrix<f64>) {
        // d_1 = (1, 0.5), d_2 = (0, 1) on the positive quadrant.
        (Polyhedron::orthant(2), DMatrix::from_column_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]))
    }

    #[test]
    fn active_set_examples() {
        let half = Polyhedron::half_line();
        assert!(half.active_set(&[2.0], 1e-9).unwrap().is_empty());
        assert_eq!(half.active_set(&[0.0], 1e-9).unwrap().indices(), &[0]);
        let weyl = Polyhedron::weyl_chamber(3).unwrap();
        assert_eq!(weyl.active_set(&[2.0, 2.0, 2.0], 1e-9).unwrap().indices(), &[0, 1]);
    }

    #[test]
    fn active_set_rejects_exterior_points() {
        let half = Polyhedron::half_line();
        let err = half.active_set(&[-0.1], 1e-9).unwrap_err();
        assert!(matches!(err, Error::PointOutsideDomain { face: 0, .. }));
        // inside up to tolerance is fine
        assert_eq!(half.active_set(&[-1e-10], 1e-9).unwrap().indices(), &[0]);
    }

    #[test]
    fn polyhedron_rejects_bad_data() {
        let long = Polyhedron::from_normals(&[vec![1.0, 1e-5]], &[0.0], &[1.0, 0.0]);
        assert!(matches!(long, Err(Error::InvalidPolyhedron(_))));
        let outside = Polyhedron::from_normals(&[vec![1.0]], &[2.0], &[1.0]);
        assert!(matches!(outside, Err(Error::InvalidPolyhedron(_))));
        assert!(Polyhedron::weyl_chamber(1).is_err());
    }

    #[test]
    fn projection_is_identity_on_domain() {
        let (poly, r) = oblique_2d();
        let p = project(&poly, &r, &[0.3, 0.7]).unwrap();
        assert_eq!(p.point.as_slice(), &[0.3, 0.7]);
        assert_eq!(p.multipliers.as_slice(), &[0.0, 0.0]);
        assert!(p.active.is_empty());
    }

    #[test]
    fn oblique_projection_single_face() {
        // active {1}: xi_1 = 1 from <n_1, x> + xi_1 = 0, then z = x + d_1
        let (poly, r) = oblique_2d();
        let p = project(&poly, &r, &[-1.0, 0.3]).unwrap();
        assert_abs_diff_eq!(p.point[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.point[1], 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(p.multipliers[0], 1.0, epsilon = 1e-15);
        assert_eq!(p.multipliers[1], 0.0);
        assert_eq!(p.active.indices(), &[0]);
    }

    #[test]
    fn oblique_projection_corner() {
        // active {1,2}: xi_1 = 1, then 0.5 + xi_2 = 1 gives xi_2 = 0.5
        let (poly, r) = oblique_2d();
        let p = project(&poly, &r, &[-1.0, -1.0]).unwrap();
        assert_abs_diff_eq!(p.point[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.point[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.multipliers[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.multipliers[1], 0.5, epsilon = 1e-15);
        assert_eq!(p.active.indices(), &[0, 1]);
    }

    #[test]
    fn weyl_normal_projection_pools_adjacent_violators() {
        let poly = Polyhedron::weyl_chamber(3).unwrap();
        let r = poly.normals().clone();
        let p = project(&poly, &r, &[1.0, 3.0, 2.0]).unwrap();
        for v in p.point.iter() {
            assert_abs_diff_eq!(*v, 2.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(p.multipliers[0], std::f64::consts::SQRT_2, epsilon = 1e-12);
        assert_eq!(p.multipliers[1], 0.0);
    }

    #[test]
    fn derivative_projection_examples() {
        let (poly, r) = oblique_2d();
        assert_eq!(derivative_projection(&poly, &r, &ActiveSet::empty()).unwrap(), DMatrix::identity(2, 2));

        let half = Polyhedron::half_line();
        let one = DMatrix::from_element(1, 1, 1.0);
        let l = derivative_projection(&half, &one, &ActiveSet::new(vec![0], 0.0)).unwrap();
        assert_eq!(l[(0, 0)], 0.0);

        let l = derivative_projection(&poly, &r, &ActiveSet::new(vec![0], 0.0)).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, -0.5, 1.0]);
        assert_abs_diff_eq!(l, expected, epsilon = 1e-15);
        // L y lies on the face's tangent hyperplane; L y - y is parallel to d_1
        let y = DVector::from_column_slice(&[0.7, -1.3]);
        let ly = &l * &y;
        assert_abs_diff_eq!(ly[0], 0.0, epsilon = 1e-15);
        let corr = &ly - &y;
        assert_abs_diff_eq!(corr[1] - 0.5 * corr[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn singular_active_system_is_reported() {
        let poly = Polyhedron::orthant(2);
        // <d_2, n_2> = 1 but d_2 is parallel to d_1 once scaled: N^T D = [[1, 1], [1, 1]]
        let r = DMatrix::from_column_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let err = derivative_projection(&poly, &r, &ActiveSet::new(vec![0, 1], 0.0)).unwrap_err();
        assert!(matches!(err, Error::SingularActiveSystem { .. }));
        assert!(validate_reflection(&poly, &r).is_err());
    }

    #[test]
    fn projector_rejects_large_face_counts() {
        let poly = Polyhedron::orthant(13);
        let r = poly.normals().clone();
        assert!(matches!(Projector::new(&poly, &r), Err(Error::TooManyFaces { faces: 13, .. })));
    }

    #[test]
    fn validate_reflection_accepts_fixtures() {
        let (poly, r) = oblique_2d();
        validate_reflection(&poly, &r).unwrap();
        let weyl = Polyhedron::weyl_chamber(4).unwrap();
        validate_reflection(&weyl, &weyl.normals().clone()).unwrap();
        let bad = DMatrix::from_column_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        assert!(matches!(validate_reflection(&poly, &bad), Err(Error::InvalidReflection(_))));
    }

    #[test]
    fn box_projection_clamps_with_normal_reflection() {
        // [0,1]^2: x >= 0, y >= 0, -x >= -1, -y >= -1
        let poly = Polyhedron::from_normals(
            &[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]],
            &[0.0, 0.0, -1.0, -1.0],
            &[0.5, 0.5],
        )
        .unwrap();
        let r = poly.normals().clone();
        validate_reflection(&poly, &r).unwrap();
        let p = project(&poly, &r, &[1.7, -0.4]).unwrap();
        assert_abs_diff_eq!(p.point[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.point[1], 0.0, epsilon = 1e-15);
        assert_eq!(p.active.indices(), &[1, 2]);
    }
}
