//! Randomized invariant suites for the geometry, the Euler schemes and the
//! reference oracles.
//!
//! Every suite is deterministic for a given seed and returns a [`Check`]
//! summarizing how many cases were tried and how many failed.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::euler::{simulate, EulerConfig};
use crate::geometry::{derivative_projection, project, validate_reflection, ActiveSet, Polyhedron};
use crate::models::{
    check_functional_gradients, check_jacobians, make_atlas_rbm, make_rbm1d, rank_descending, AffineModel, DispersionSpec,
    DriftSpec, ModelFile, ParamModel,
};
use crate::reference::{brute_force_projection, dp_matrix_oracle, pava_descending};
use crate::rng::{standard_normal_from_bits, GaussianStream};

/// Outcome of one invariant suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    /// First failure, if any.
    pub detail: String,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.cases > 0 && self.failures == 0
    }
}

struct Tally {
    check: Check,
}

impl Tally {
    fn new(name: &str) -> Self {
        Self { check: Check { name: name.to_string(), cases: 0, failures: 0, detail: String::new() } }
    }

    fn record(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        self.check.cases += 1;
        if !ok {
            self.check.failures += 1;
            if self.check.detail.is_empty() {
                self.check.detail = detail();
            }
        }
    }

    fn error(&mut self, e: &Error) {
        self.record(false, || e.to_string());
    }

    fn finish(self) -> Check {
        self.check
    }
}

/// A domain with reflection data.
#[derive(Debug, Clone)]
pub struct Instance {
    pub label: &'static str,
    pub poly: Polyhedron,
    pub r: DMatrix<f64>,
}

impl Instance {
    pub fn is_normal_reflection(&self) -> bool {
        (self.poly.normals() - &self.r).amax() == 0.0
    }
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian(rng: &mut impl RngCore, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| standard_normal_from_bits(rng.next_u64()))
}

fn unit(rng: &mut impl RngCore, n: usize) -> DVector<f64> {
    loop {
        let v = gaussian(rng, n);
        let len = v.norm();
        if len > 1e-3 {
            return v / len;
        }
    }
}

/// Whether every principal minor of `m` is at least `floor`.
pub fn is_p_matrix(m: &DMatrix<f64>, floor: f64) -> bool {
    let n = m.nrows();
    (1u64..(1 << n)).all(|mask| {
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        m.select_rows(&idx).select_columns(&idx).determinant() >= floor
    })
}

/// The positive quadrant with `d_1 = (1, 0.5)`, `d_2 = (0, 1)`.
pub fn oblique_quadrant() -> Instance {
    Instance {
        label: "oblique quadrant",
        poly: Polyhedron::orthant(2),
        r: DMatrix::from_column_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]),
    }
}

/// Weyl chamber with normal reflection.
pub fn weyl_instance(dim: usize) -> Instance {
    let poly = Polyhedron::weyl_chamber(dim).expect("dimension >= 2");
    let r = poly.normals().clone();
    Instance { label: "Weyl chamber", poly, r }
}

/// Cone over `faces <= dim` independent random normals with random offsets.
/// Oblique directions are drawn until `N^T R` is a well-conditioned P-matrix.
pub fn random_cone(rng: &mut ChaCha8Rng, dim: usize, faces: usize, oblique: bool) -> Instance {
    assert!(faces >= 1 && faces <= dim);
    loop {
        let normals = DMatrix::from_columns(&(0..faces).map(|_| unit(rng, dim)).collect::<Vec<_>>());
        let gram = normals.transpose() * &normals;
        if gram.clone().symmetric_eigenvalues().min() < 0.05 {
            continue;
        }
        let offsets = DVector::from_fn(faces, |_, _| rng.random_range(-1.0..1.0));
        let Some(gram_inv) = gram.try_inverse() else { continue };
        let interior = &normals * gram_inv * offsets.add_scalar(1.0);
        let mut r = normals.clone();
        if oblique {
            let scale = rng.random_range(0.0..0.8);
            for i in 0..faces {
                let n = normals.column(i).into_owned();
                let g = gaussian(rng, dim);
                let t = &g - &n * n.dot(&g);
                if t.norm() > 1e-6 {
                    r.set_column(i, &(&n + t.normalize() * scale));
                }
            }
            if !is_p_matrix(&(normals.transpose() * &r), 0.05) {
                continue;
            }
        }
        let Ok(poly) = Polyhedron::new(normals, offsets, interior) else { continue };
        let label = if oblique { "oblique cone" } else { "normal cone" };
        return Instance { label, poly, r };
    }
}

/// Axis-aligned box `[0, u]` with normal reflection.
pub fn random_box(rng: &mut ChaCha8Rng, dim: usize) -> Instance {
    let upper: Vec<f64> = (0..dim).map(|_| rng.random_range(0.5..3.0)).collect();
    let mut normals = DMatrix::zeros(dim, 2 * dim);
    let mut offsets = DVector::zeros(2 * dim);
    for j in 0..dim {
        normals[(j, 2 * j)] = 1.0;
        normals[(j, 2 * j + 1)] = -1.0;
        offsets[2 * j + 1] = -upper[j];
    }
    let interior = DVector::from_iterator(dim, upper.iter().map(|u| u / 2.0));
    let poly = Polyhedron::new(normals, offsets, interior).expect("box is well formed");
    let r = poly.normals().clone();
    Instance { label: "box", poly, r }
}

/// Intersection of random half-spaces containing the origin, with normal reflection.
pub fn random_polytope(rng: &mut ChaCha8Rng, dim: usize, faces: usize) -> Instance {
    let normals = DMatrix::from_columns(&(0..faces).map(|_| unit(rng, dim)).collect::<Vec<_>>());
    let offsets = DVector::from_fn(faces, |_, _| -rng.random_range(0.5..2.0));
    let poly = Polyhedron::new(normals, offsets, DVector::zeros(dim)).expect("origin is interior");
    let r = poly.normals().clone();
    Instance { label: "polytope", poly, r }
}

/// One instance from the mixed family with at most `max_faces` faces.
pub fn random_instance(rng: &mut ChaCha8Rng, max_faces: usize) -> Instance {
    loop {
        let kind = rng.random_range(0..5);
        let dim = rng.random_range(1..=4usize);
        let inst = match kind {
            0 | 1 => {
                let faces = rng.random_range(1..=dim);
                random_cone(rng, dim, faces, kind == 0)
            }
            2 if dim <= 3 => random_box(rng, dim),
            3 if dim >= 2 => {
                let faces = rng.random_range(dim.min(3) + 1..=6);
                random_polytope(rng, dim.min(3), faces)
            }
            4 if dim >= 2 => weyl_instance(dim + 1),
            _ => continue,
        };
        if inst.poly.num_faces() <= max_faces {
            return inst;
        }
    }
}

/// A point near the domain: inside or outside with comparable frequency.
pub fn sample_point(rng: &mut ChaCha8Rng, inst: &Instance) -> Vec<f64> {
    let center = inst.poly.interior_point();
    let spread = if rng.random_bool(0.5) { 0.5 } else { 3.0 } * (1.0 + center.norm());
    (center + gaussian(rng, center.len()) * spread).as_slice().to_vec()
}

fn complementarity_case(t: &mut Tally, rng: &mut ChaCha8Rng, inst: &Instance) {
    let x = sample_point(rng, inst);
    let p = match project(&inst.poly, &inst.r, &x) {
        Ok(p) => p,
        Err(e) => return t.error(&e),
    };
    let z = p.point.as_slice();
    let inside = inst.poly.contains(z, 1e-9);
    let residual = (&p.point - DVector::from_column_slice(&x) - &inst.r * &p.multipliers).amax();
    let nonneg = p.multipliers.iter().all(|&v| v >= -1e-12);
    let comp = (0..inst.poly.num_faces()).all(|i| p.multipliers[i] <= 1e-9 || inst.poly.slack(z, i) <= 1e-9);
    let again = project(&inst.poly, &inst.r, z).map(|q| (q.point - &p.point).amax() <= 1e-9).unwrap_or(false);
    t.record(inside && residual <= 1e-9 && nonneg && comp && again, || {
        format!(
            "{} at {x:?}: inside {inside}, residual {residual:e}, xi >= 0 {nonneg}, complementary {comp}, idempotent {again}",
            inst.label
        )
    });
}

/// Complementarity and idempotence of the projection on random instances
/// (`instances x points` cases).
pub fn projection_complementarity(seed: u64, instances: usize, points: usize) -> Check {
    let mut t = Tally::new("projection complementarity");
    let mut rng = seeded(seed);
    for _ in 0..instances {
        let inst = random_instance(&mut rng, 12);
        for _ in 0..points {
            complementarity_case(&mut t, &mut rng, &inst);
        }
    }
    t.finish()
}

/// Complementarity and idempotence on one fixed instance.
pub fn instance_complementarity(inst: &Instance, seed: u64, points: usize) -> Check {
    let mut t = Tally::new(&format!("{} complementarity", inst.label));
    let mut rng = seeded(seed);
    for _ in 0..points {
        complementarity_case(&mut t, &mut rng, inst);
    }
    t.finish()
}

/// Projection against exhaustive enumeration on instances with at most six faces.
pub fn projection_brute_force(seed: u64, cases: usize) -> Check {
    let mut t = Tally::new("projection vs brute-force enumeration");
    let mut rng = seeded(seed);
    for _ in 0..cases {
        let inst = random_instance(&mut rng, 6);
        let x = sample_point(&mut rng, &inst);
        let scale = 1.0 + DVector::from_column_slice(&x).norm();
        match (project(&inst.poly, &inst.r, &x), brute_force_projection(&inst.poly, &inst.r, &x)) {
            (Ok(p), Ok((z, xi))) => {
                let dz = (&p.point - z).amax();
                let dxi = (&p.multipliers - xi).amax();
                t.record(dz <= 1e-9 * scale && dxi <= 1e-9 * scale, || {
                    format!("{} at {x:?}: |dz| = {dz:e}, |dxi| = {dxi:e}", inst.label)
                });
            }
            (Err(e), _) | (_, Err(e)) => t.error(&e),
        }
    }
    t.finish()
}

/// Projection onto the Weyl chamber with normal reflection against isotonic regression.
pub fn projection_pava(seed: u64, cases: usize) -> Check {
    let mut t = Tally::new("Weyl projection vs pool-adjacent-violators");
    let mut rng = seeded(seed);
    for _ in 0..cases {
        let dim = rng.random_range(2..=7);
        let inst = weyl_instance(dim);
        let x: Vec<f64> = gaussian(&mut rng, dim).iter().map(|v| 2.0 * v).collect();
        match project(&inst.poly, &inst.r, &x) {
            Ok(p) => {
                let expected = DVector::from_vec(pava_descending(&x));
                let err = (&p.point - &expected).amax();
                t.record(err <= 1e-9, || format!("x = {x:?}: error {err:e}"));
            }
            Err(e) => t.error(&e),
        }
    }
    t.finish()
}

/// Algebraic properties of derivative projection matrices at active sets
/// reached by projecting random points. Returns the property check and the
/// contraction check for normal reflection.
pub fn derivative_projection_properties(seed: u64, cases: usize) -> (Check, Check) {
    let mut t = Tally::new("derivative projection properties");
    let mut c = Tally::new("normal-reflection contraction");
    let mut rng = seeded(seed);
    while t.check.cases < cases {
        let inst = random_instance(&mut rng, 12);
        let x = sample_point(&mut rng, &inst);
        let Ok(p) = project(&inst.poly, &inst.r, &x) else { continue };
        let tol = crate::geometry::boundary_tolerance(p.point.as_slice());
        let Ok(near) = inst.poly.active_set(p.point.as_slice(), tol) else { continue };
        let active = ActiveSet::from_mask(near.mask() | p.active.mask(), tol);
        if active.is_empty() {
            continue;
        }
        let lam = match derivative_projection(&inst.poly, &inst.r, &active) {
            Ok(l) => l,
            Err(e) => {
                t.error(&e);
                continue;
            }
        };
        let j = inst.poly.dim();
        let idx = active.indices();
        let n_a = inst.poly.normals().select_columns(idx);
        let d_a = inst.r.select_columns(idx);
        let y = gaussian(&mut rng, j);
        let ly = &lam * &y;
        let idem = (&lam * &lam - &lam).amax();
        let tangent = (n_a.transpose() * &ly).amax();
        let fit = d_a.clone().svd(true, true).solve(&(&ly - &y), 1e-14).map(|c| (&d_a * c - (&ly - &y)).amax());
        let span = fit.unwrap_or(f64::INFINITY);
        let ortho = DMatrix::identity(j, j) - &n_a * (n_a.transpose() * &n_a).try_inverse().unwrap_or_default() * n_a.transpose();
        let h = &ortho * &y;
        let fixes = (&lam * &h - &h).amax();
        t.record(idem <= 1e-10 && tangent <= 1e-10 && span <= 1e-9 && fixes <= 1e-10, || {
            format!(
                "{} faces {idx:?}: |L^2 - L| = {idem:e}, |N^T L y| = {tangent:e}, span residual {span:e}, |L h - h| = {fixes:e}",
                inst.label
            )
        });
        if inst.is_normal_reflection() {
            let norm2 = lam.singular_values().max();
            c.record(norm2 <= 1.0 + 1e-10, || format!("{} faces {idx:?}: |L|_2 = {norm2}", inst.label));
        }
    }
    (t.finish(), c.finish())
}

/// Affine model on `inst` whose only parameter dependence is through the
/// initial condition, so the derivative process is a product of derivative
/// projections.
pub fn zeroed_coefficient_model(rng: &mut ChaCha8Rng, inst: &Instance, params: usize) -> Result<AffineModel> {
    let j = inst.poly.dim();
    let faces = inst.poly.num_faces();
    let push = -(0..faces).fold(DVector::zeros(j), |acc: DVector<f64>, i| acc + inst.poly.normals().column(i));
    let file = ModelFile {
        dim: j,
        noise_dim: j,
        param_dim: params,
        normals: (0..faces).map(|i| inst.poly.normal(i).to_vec()).collect(),
        offsets: inst.poly.offsets().as_slice().to_vec(),
        interior_point: inst.poly.interior_point().as_slice().to_vec(),
        directions: (0..faces).map(|i| inst.r.column(i).iter().copied().collect()).collect(),
        direction_slopes: None,
        x0: inst.poly.interior_point().as_slice().to_vec(),
        x0_slope: Some((0..j).map(|_| (0..params).map(|_| rng.random_range(-2.0..2.0)).collect()).collect()),
        drift: DriftSpec { constant: push.iter().copied().collect(), alpha: None, state: None },
        dispersion: DispersionSpec {
            constant: (0..j).map(|r| (0..j).map(|c| if r == c { 0.7 } else { 0.0 }).collect()).collect(),
            alpha: None,
            state: None,
        },
        elliptic: true,
        functional: None,
    };
    AffineModel::from_file(&file)
}

/// The simulated derivative process against the matrix-product oracle in the
/// zeroed-coefficient regime. Fixtures (oblique quadrant, Weyl chambers) come
/// first, then random instances.
pub fn derivative_map_oracle(seed: u64, instances: usize) -> Check {
    let mut t = Tally::new("derivative process vs matrix-product oracle");
    let mut rng = seeded(seed);
    let cfg = EulerConfig::new(0.02, 150).expect("valid grid");
    let mut hits = 0usize;
    for k in 0..instances {
        let inst = match k {
            0 => oblique_quadrant(),
            1 => weyl_instance(3),
            2 => weyl_instance(4),
            _ => random_instance(&mut rng, 6),
        };
        let model = match zeroed_coefficient_model(&mut rng, &inst, 2) {
            Ok(m) => m,
            Err(e) => {
                t.error(&e);
                continue;
            }
        };
        let alpha = [0.0, 0.0];
        let mut stream = GaussianStream::new(seed, k as u64, inst.poly.dim(), cfg.delta());
        let traj = match simulate(&model, &alpha, &cfg, &mut stream, true) {
            Ok(tr) => tr,
            Err(e) => {
                t.error(&e);
                continue;
            }
        };
        hits += traj.active_sets[1..].iter().filter(|a| !a.is_empty()).count();
        let x0_jac = model.initial_jacobian(&alpha);
        let last = traj.derivatives.as_ref().expect("simulated with derivative").last().expect("non-empty").clone();
        let mut worst: f64 = 0.0;
        let mut failed = None;
        for m in 0..2 {
            match dp_matrix_oracle(x0_jac.column(m).as_slice(), &traj.active_sets[1..], &inst.poly, &inst.r) {
                Ok(v) => {
                    let scale = v.amax().max(1.0);
                    worst = worst.max((last.column(m) - v).amax() / scale);
                }
                Err(e) => failed = Some(e),
            }
        }
        match failed {
            Some(e) => t.error(&e),
            None => t.record(worst <= 1e-10, || format!("{} (instance {k}): relative error {worst:e}", inst.label)),
        }
    }
    t.record(hits > 0, || "no path touched the boundary".into());
    t.finish()
}

fn oblique_state_dependent() -> AffineModel {
    let json = r#"{"dim": 2, "noise_dim": 2, "param_dim": 2,
        "normals": [[1, 0], [0, 1]], "offsets": [0, 0], "interior_point": [1, 1],
        "directions": [[1, 0.5], [0, 1]], "direction_slopes": [[[0, 0], [0, 0]], [[0, 0.2], [-0.1, 0]]],
        "x0": [0.3, 0.2], "x0_slope": [[1, 0], [0, 0.5]],
        "drift": {"constant": [-1, -0.5], "alpha": [[0.5, 0], [0, 1]], "state": [[-0.2, 0.1], [0, -0.3]]},
        "dispersion": {"constant": [[0.7, 0], [0.1, 0.6]], "alpha": [[[0.1, 0], [0, 0]], [[0, 0], [0, 0.2]]],
                       "state": [[[0.05, 0], [0, 0]], [[0, 0], [0.02, 0.03]]]}}"#;
    AffineModel::from_json_str(json).expect("fixture parses")
}

/// Domain invariance, monotone multipliers, hyperplane membership and the
/// one-dimensional closed form along simulated paths.
pub fn euler_invariants(seed: u64, paths: usize) -> Vec<Check> {
    let mut domain = Tally::new("Euler domain invariance");
    let mut mult = Tally::new("Euler monotone multipliers");
    let mut plane = Tally::new("Euler hyperplane membership");
    let mut closed = Tally::new("Euler one-dimensional closed form");
    let mut repro = Tally::new("Euler reproducibility");
    let mut rng = seeded(seed);
    let rbm = make_rbm1d();
    let (atlas, _) = make_atlas_rbm(3, 0.5, 0.5).expect("valid Atlas model");
    let oblique = oblique_state_dependent();
    let cfg = EulerConfig::new(0.01, 100).expect("valid grid");

    for k in 0..paths {
        let cone;
        let (model, alpha): (&dyn ParamModel, Vec<f64>) = match k % 4 {
            0 => (&rbm, vec![rng.random_range(0.0..1.5), rng.random_range(-3.0..1.0), rng.random_range(0.2..2.0)]),
            1 => (&atlas, vec![rng.random_range(0.05..2.0)]),
            2 => (&oblique, vec![rng.random_range(-0.2..0.5), rng.random_range(-0.2..0.5)]),
            _ => {
                let faces = rng.random_range(1..=3);
                let inst = random_cone(&mut rng, 3, faces, true);
                cone = zeroed_coefficient_model(&mut rng, &inst, 2).expect("valid model");
                (&cone, vec![0.0, 0.0])
            }
        };
        let stream = GaussianStream::new(seed, k as u64, model.dims().noise, cfg.delta());
        let traj = match simulate(model, &alpha, &cfg, &mut stream.clone(), true) {
            Ok(tr) => tr,
            Err(e) => {
                domain.error(&e);
                continue;
            }
        };
        let again = simulate(model, &alpha, &cfg, &mut stream.clone(), true);
        repro.record(again.as_ref() == Ok(&traj), || format!("path {k} differs between runs"));

        let poly = model.domain();
        let derivs = traj.derivatives.as_ref().expect("simulated with derivative");
        for n in 1..=traj.steps() {
            let z = traj.states[n].as_slice();
            domain.record(poly.contains(z, 1e-9), || format!("path {k}, step {n}: Z = {z:?} outside"));
            let inc = &traj.multipliers[n] - &traj.multipliers[n - 1];
            let active = &traj.active_sets[n];
            let ok = inc.iter().enumerate().all(|(i, &v)| v >= 0.0 && (v == 0.0 || active.contains(i)));
            mult.record(ok, || format!("path {k}, step {n}: L increment {:?} with active {:?}", inc.as_slice(), active.indices()));
            let jac = &derivs[n];
            let scale = jac.amax().max(1.0);
            let worst = active
                .indices()
                .iter()
                .map(|&i| (jac.transpose() * DVector::from_column_slice(poly.normal(i))).amax())
                .fold(0.0, f64::max);
            plane.record(worst <= 1e-8 * scale, || format!("path {k}, step {n}: <n_i, J> = {worst:e}"));
            if k % 4 == 0 {
                let xi = traj.states[n - 1][0] + alpha[1] * cfg.delta() + alpha[2] * traj.increments[n - 1][0];
                let rounding = 4.0 * f64::EPSILON * traj.multipliers[n][0];
                let exact = traj.states[n][0] == xi.max(0.0) && (inc[0] - (-xi).max(0.0)).abs() <= rounding;
                closed.record(exact, || format!("path {k}, step {n}: Xi = {xi}, Z = {}, dL = {}", traj.states[n][0], inc[0]));
            }
        }
    }
    vec![domain.finish(), mult.finish(), plane.finish(), closed.finish(), repro.finish()]
}

/// Jacobian and gradient consistency for the built-in models at random points.
pub fn model_consistency(seed: u64, cases: usize) -> Vec<Check> {
    let mut jac = Tally::new("model Jacobians vs finite differences");
    let mut grad = Tally::new("diversity gradient vs finite differences");
    let mut perm = Tally::new("diversity permutation invariance");
    let mut refl = Tally::new("Atlas reflection data");
    let mut rng = seeded(seed);
    let rbm = make_rbm1d();
    for _ in 0..cases {
        let alpha = [rng.random_range(0.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(0.1..3.0)];
        let x = [rng.random_range(0.0..5.0)];
        let r = check_jacobians(&rbm, &alpha, &x, 1e-5);
        jac.record(r.is_ok(), || format!("rbm1d: {}", r.unwrap_err()));

        let dim = rng.random_range(2..=5);
        let sigma = rng.random_range(0.01..1.0);
        let p = rng.random_range(0.1..0.9);
        let (atlas, div) = make_atlas_rbm(dim, sigma, p).expect("valid Atlas model");
        let x: Vec<f64> = pava_descending(gaussian(&mut rng, dim).as_slice());
        let alpha = [rng.random_range(0.1..3.0)];
        let r = check_jacobians(&atlas, &alpha, &x, 1e-5);
        jac.record(r.is_ok(), || format!("Atlas: {}", r.unwrap_err()));
        let r = check_functional_gradients(&div, &x, 1e-5);
        grad.record(r.is_ok(), || format!("diversity: {}", r.unwrap_err()));
        let y: Vec<f64> = gaussian(&mut rng, dim).iter().map(|v| 3.0 * v).collect();
        let (a, b) = (div.value(&y), div.value(&rank_descending(&y)));
        perm.record((a - b).abs() <= 1e-12 * a.abs(), || format!("{y:?}: {a} vs {b}"));
        let r = validate_reflection(atlas.domain(), &atlas.reflection().eval(&alpha));
        refl.record(r.is_ok(), || r.unwrap_err().to_string());
    }
    vec![jac.finish(), grad.finish(), perm.finish(), refl.finish()]
}

/// Pointwise checks of a user model at `alpha`: the reflection data, the
/// Jacobians at states sampled around the initial point, and projection
/// complementarity on its domain.
pub fn model_file_checks(model: &dyn ParamModel, alpha: &[f64], seed: u64) -> Vec<Check> {
    let mut wellposed = Tally::new("model data at alpha");
    let mut jac = Tally::new("model Jacobians vs finite differences");
    let r = model.check_alpha(alpha);
    wellposed.record(r.is_ok(), || r.unwrap_err().to_string());
    if wellposed.check.failures > 0 {
        return vec![wellposed.finish()];
    }
    let mut rng = seeded(seed);
    let inst = Instance { label: "model domain", poly: model.domain().clone(), r: model.reflection().eval(alpha) };
    for _ in 0..100 {
        let x = sample_point(&mut rng, &inst);
        let r = check_jacobians(model, alpha, &x, 1e-5);
        jac.record(r.is_ok(), || r.unwrap_err().to_string());
    }
    vec![wellposed.finish(), jac.finish(), instance_complementarity(&inst, seed, 1000)]
}

/// Every suite at its default size.
pub fn run_all(seed: u64) -> Vec<Check> {
    let mut out = vec![
        projection_complementarity(seed, 50, 20),
        instance_complementarity(&oblique_quadrant(), seed, 1000),
        projection_brute_force(seed + 1, 1000),
        projection_pava(seed + 2, 1000),
    ];
    let (props, contraction) = derivative_projection_properties(seed + 3, 500);
    out.push(props);
    out.push(contraction);
    out.extend(euler_invariants(seed + 4, 100));
    out.push(derivative_map_oracle(seed + 5, 100));
    out.extend(model_consistency(seed + 6, 100));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_matrix_detection() {
        assert!(is_p_matrix(&DMatrix::identity(3, 3), 0.5));
        assert!(!is_p_matrix(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]), 0.0));
    }

    #[test]
    fn generators_produce_valid_instances() {
        let mut rng = seeded(1);
        for _ in 0..200 {
            let inst = random_instance(&mut rng, 6);
            assert!(inst.poly.num_faces() <= 6);
            validate_reflection(&inst.poly, &inst.r).unwrap();
        }
    }

    #[test]
    fn small_suites_pass() {
        for c in [projection_complementarity(3, 5, 10), projection_brute_force(4, 50), projection_pava(5, 50)] {
            assert!(c.passed(), "{c:?}");
        }
        assert!(derivative_map_oracle(6, 8).passed());
    }
}
