//! Parameterized reflected-diffusion models.
//!
//! A [`ParamModel`] bundles the domain, the reflection field `alpha -> R(alpha)`
//! and the coefficients `x0`, `b`, `sigma` together with every Jacobian the
//! derivative recursion needs. Coefficient maps write into caller-owned
//! buffers so the Euler loop does not allocate.

mod affine;
mod atlas;
mod functional;
mod rbm1d;

pub use affine::{AffineModel, DispersionSpec, DriftSpec, FunctionalSpec, ModelFile};
pub use atlas::{atlas_drift, atlas_growth, make_atlas_rbm, make_atlas_sde, rank_descending, AtlasRbm, SdeModel};
pub use functional::{check_functional_gradients, Diversity, FnFunctional, Functional, LinearFunctional};
pub use rbm1d::{make_rbm1d, Rbm1d};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::Polyhedron;

/// Dimensions of a model: state `J`, Brownian `K`, parameter `M`, faces `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub state: usize,
    pub noise: usize,
    pub params: usize,
    pub faces: usize,
}

/// `alpha -> R(alpha)` with its Jacobian.
pub trait ReflectionField: Send + Sync {
    fn param_dim(&self) -> usize;
    /// `J x N` matrix with the direction of reflection on face `i` in column `i`.
    fn eval(&self, alpha: &[f64]) -> DMatrix<f64>;
    /// `dR/dalpha_m` for each `m`.
    fn jacobian(&self, alpha: &[f64]) -> Vec<DMatrix<f64>>;
}

/// `R(alpha) = base + sum_m alpha_m slopes[m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineReflection {
    base: DMatrix<f64>,
    slopes: Vec<DMatrix<f64>>,
}

impl AffineReflection {
    pub fn constant(r: DMatrix<f64>, param_dim: usize) -> Self {
        let slopes = vec![DMatrix::zeros(r.nrows(), r.ncols()); param_dim];
        Self { base: r, slopes }
    }

    pub fn new(base: DMatrix<f64>, slopes: Vec<DMatrix<f64>>) -> Result<Self> {
        if slopes.iter().any(|s| s.shape() != base.shape()) {
            return Err(Error::InvalidDims("reflection slopes must match the base matrix".into()));
        }
        Ok(Self { base, slopes })
    }

    pub fn is_constant_in(&self, m: usize) -> bool {
        self.slopes[m].iter().all(|&v| v == 0.0)
    }
}

impl ReflectionField for AffineReflection {
    fn param_dim(&self) -> usize {
        self.slopes.len()
    }

    fn eval(&self, alpha: &[f64]) -> DMatrix<f64> {
        let mut r = self.base.clone();
        for (a, s) in alpha.iter().zip(&self.slopes) {
            r += s * *a;
        }
        r
    }

    fn jacobian(&self, _alpha: &[f64]) -> Vec<DMatrix<f64>> {
        self.slopes.clone()
    }
}

/// Structural facts about a model, used to gate the likelihood-ratio
/// estimator and to skip identically-zero terms.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFlags {
    /// `x0` does not depend on `alpha_m`.
    pub x0_const: Vec<bool>,
    /// `sigma` does not depend on `alpha_m`.
    pub sigma_const: Vec<bool>,
    /// `R` does not depend on `alpha_m`.
    pub reflection_const: Vec<bool>,
    /// Uniform ellipticity of `a = sigma sigma^T` is asserted.
    pub elliptic: bool,
    /// `b_x` vanishes identically.
    pub drift_state_free: bool,
    /// `sigma_x` vanishes identically.
    pub dispersion_state_free: bool,
}

impl ModelFlags {
    /// Whether the likelihood-ratio weight is valid for perturbations of `alpha_m`.
    pub fn lr_eligible(&self, m: usize) -> bool {
        self.elliptic && self.x0_const[m] && self.sigma_const[m] && self.reflection_const[m]
    }

    pub fn reflection_constant(&self) -> bool {
        self.reflection_const.iter().all(|&c| c)
    }
}

pub trait ParamModel: Send + Sync {
    fn dims(&self) -> Dims;
    fn domain(&self) -> &Polyhedron;
    fn reflection(&self) -> &dyn ReflectionField;
    fn flags(&self) -> &ModelFlags;

    fn initial(&self, alpha: &[f64]) -> DVector<f64>;
    /// `J x M`.
    fn initial_jacobian(&self, alpha: &[f64]) -> DMatrix<f64>;

    fn drift(&self, alpha: &[f64], x: &[f64], out: &mut DVector<f64>);
    /// `b_alpha`, `J x M`.
    fn drift_alpha(&self, alpha: &[f64], x: &[f64], out: &mut DMatrix<f64>);
    /// `b_x`, `J x J`.
    fn drift_x(&self, alpha: &[f64], x: &[f64], out: &mut DMatrix<f64>);

    /// `sigma`, `J x K`.
    fn dispersion(&self, alpha: &[f64], x: &[f64], out: &mut DMatrix<f64>);
    /// `d sigma / d alpha_m`, `J x K`.
    fn dispersion_alpha(&self, alpha: &[f64], x: &[f64], m: usize, out: &mut DMatrix<f64>);
    /// `d sigma / d x_j`, `J x K`.
    fn dispersion_x(&self, alpha: &[f64], x: &[f64], j: usize, out: &mut DMatrix<f64>);

    /// Pointwise checks at `alpha`: lengths, `x0(alpha)` in the domain, and
    /// the reflection data at `R(alpha)`.
    fn check_alpha(&self, alpha: &[f64]) -> Result<()> {
        let dims = self.dims();
        if alpha.len() != dims.params {
            return Err(Error::InvalidDims(format!(
                "parameter vector has length {}, model expects {}",
                alpha.len(),
                dims.params
            )));
        }
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidConfig("parameter vector must be finite".into()));
        }
        let x0 = self.initial(alpha);
        let tol = crate::geometry::boundary_tolerance(x0.as_slice());
        if !self.domain().contains(x0.as_slice(), tol) {
            return Err(Error::Model(format!("initial point {:?} lies outside the domain", x0.as_slice())));
        }
        crate::geometry::validate_reflection(self.domain(), &self.reflection().eval(alpha))
    }
}

fn fd_step(v: f64) -> f64 {
    1e-6 * v.abs().max(1.0)
}

fn compare(what: &str, analytic: f64, numeric: f64, rel_tol: f64) -> Result<()> {
    let err = (analytic - numeric).abs();
    if err > rel_tol * numeric.abs().max(1.0) {
        return Err(Error::Model(format!(
            "{what}: analytic {analytic:e} vs finite difference {numeric:e}"
        )));
    }
    Ok(())
}

/// Compares every supplied Jacobian with a central finite difference of its
/// base map at `(alpha, x)`; the error must be within `rel_tol` relative to
/// `max(1, |fd|)`.
pub fn check_jacobians(model: &dyn ParamModel, alpha: &[f64], x: &[f64], rel_tol: f64) -> Result<()> {
    let Dims { state: j, noise: k, params: m, .. } = model.dims();
    let mut plus = DVector::zeros(j);
    let mut minus = DVector::zeros(j);
    let mut s_plus = DMatrix::zeros(j, k);
    let mut s_minus = DMatrix::zeros(j, k);

    let mut b_alpha = DMatrix::zeros(j, m);
    model.drift_alpha(alpha, x, &mut b_alpha);
    let mut b_x = DMatrix::zeros(j, j);
    model.drift_x(alpha, x, &mut b_x);
    let x0_jac = model.initial_jacobian(alpha);
    let r_jac = model.reflection().jacobian(alpha);
    let mut analytic = DMatrix::zeros(j, k);

    for p in 0..m {
        let h = fd_step(alpha[p]);
        let mut ap = alpha.to_vec();
        let mut am = alpha.to_vec();
        ap[p] += h;
        am[p] -= h;

        model.drift(&ap, x, &mut plus);
        model.drift(&am, x, &mut minus);
        for r in 0..j {
            compare(&format!("b_alpha[{r},{p}]"), b_alpha[(r, p)], (plus[r] - minus[r]) / (2.0 * h), rel_tol)?;
        }

        let x0p = model.initial(&ap);
        let x0m = model.initial(&am);
        for r in 0..j {
            compare(&format!("x0'[{r},{p}]"), x0_jac[(r, p)], (x0p[r] - x0m[r]) / (2.0 * h), rel_tol)?;
        }

        model.dispersion(&ap, x, &mut s_plus);
        model.dispersion(&am, x, &mut s_minus);
        model.dispersion_alpha(alpha, x, p, &mut analytic);
        for (idx, a) in analytic.iter().enumerate() {
            let fd = (s_plus.as_slice()[idx] - s_minus.as_slice()[idx]) / (2.0 * h);
            compare(&format!("sigma_alpha[{p}][{idx}]"), *a, fd, rel_tol)?;
        }

        let rp = model.reflection().eval(&ap);
        let rm = model.reflection().eval(&am);
        for (idx, a) in r_jac[p].iter().enumerate() {
            let fd = (rp.as_slice()[idx] - rm.as_slice()[idx]) / (2.0 * h);
            compare(&format!("R'[{p}][{idx}]"), *a, fd, rel_tol)?;
        }
    }

    for c in 0..j {
        let h = fd_step(x[c]);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[c] += h;
        xm[c] -= h;
        model.drift(alpha, &xp, &mut plus);
        model.drift(alpha, &xm, &mut minus);
        for r in 0..j {
            compare(&format!("b_x[{r},{c}]"), b_x[(r, c)], (plus[r] - minus[r]) / (2.0 * h), rel_tol)?;
        }
        model.dispersion(alpha, &xp, &mut s_plus);
        model.dispersion(alpha, &xm, &mut s_minus);
        model.dispersion_x(alpha, x, c, &mut analytic);
        for (idx, a) in analytic.iter().enumerate() {
            let fd = (s_plus.as_slice()[idx] - s_minus.as_slice()[idx]) / (2.0 * h);
            compare(&format!("sigma_x[{c}][{idx}]"), *a, fd, rel_tol)?;
        }
    }
    Ok(())
}
