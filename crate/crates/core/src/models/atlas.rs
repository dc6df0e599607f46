//! The Atlas model: `J` stocks with common volatility where only the
//! strictly smallest one grows, at rate `J g`.
//!
//! Two views are provided. [`SdeModel`] evolves the unranked log
//! capitalizations with the discontinuous drift; [`AtlasRbm`] evolves the
//! ranked log capitalizations as a reflected Brownian motion in the Weyl
//! chamber with normal reflection. The parameter is `alpha > 0` with growth
//! `g(alpha) = sigma^2 / (2 alpha)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{AffineReflection, Diversity, Dims, ModelFlags, ParamModel, ReflectionField};
use crate::error::{Error, Result};
use crate::geometry::Polyhedron;

/// `g(alpha) = sigma^2 / (2 alpha)`.
pub fn atlas_growth(sigma: f64, alpha: f64) -> f64 {
    sigma * sigma / (2.0 * alpha)
}

/// Ranked Atlas model as a parameterized reflected diffusion (`M = 1`).
#[derive(Debug, Clone)]
pub struct AtlasRbm {
    dim: usize,
    sigma: f64,
    domain: Polyhedron,
    reflection: AffineReflection,
    flags: ModelFlags,
}

impl AtlasRbm {
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

pub fn make_atlas_rbm(dim: usize, sigma: f64, p: f64) -> Result<(AtlasRbm, Diversity)> {
    if dim < 2 {
        return Err(Error::InvalidDims(format!("Atlas model needs at least 2 stocks, got {dim}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidConfig(format!("volatility must be positive, got {sigma}")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidConfig(format!("diversity exponent must lie in (0, 1), got {p}")));
    }
    let domain = Polyhedron::weyl_chamber(dim)?;
    let reflection = AffineReflection::constant(domain.normals().clone(), 1);
    let model = AtlasRbm {
        dim,
        sigma,
        domain,
        reflection,
        flags: ModelFlags {
            x0_const: vec![true],
            sigma_const: vec![true],
            reflection_const: vec![true],
            elliptic: true,
            drift_state_free: true,
            dispersion_state_free: true,
        },
    };
    Ok((model, Diversity { p }))
}

impl ParamModel for AtlasRbm {
    fn dims(&self) -> Dims {
        Dims { state: self.dim, noise: self.dim, params: 1, faces: self.dim - 1 }
    }

    fn domain(&self) -> &Polyhedron {
        &self.domain
    }

    fn reflection(&self) -> &dyn ReflectionField {
        &self.reflection
    }

    fn flags(&self) -> &ModelFlags {
        &self.flags
    }

    fn initial(&self, _alpha: &[f64]) -> DVector<f64> {
        DVector::zeros(self.dim)
    }

    fn initial_jacobian(&self, _alpha: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(self.dim, 1)
    }

    fn drift(&self, alpha: &[f64], _x: &[f64], out: &mut DVector<f64>) {
        out.fill(0.0);
        out[self.dim - 1] = self.dim as f64 * atlas_growth(self.sigma, alpha[0]);
    }

    fn drift_alpha(&self, alpha: &[f64], _x: &[f64], out: &mut DMatrix<f64>) {
        out.fill(0.0);
        out[(self.dim - 1, 0)] = -(self.dim as f64) * self.sigma * self.sigma / (2.0 * alpha[0] * alpha[0]);
    }

    fn drift_x(&self, _alpha: &[f64], _x: &[f64], out: &mut DMatrix<f64>) {
        out.fill(0.0);
    }

    fn dispersion(&self, _alpha: &[f64], _x: &[f64], out: &mut DMatrix<f64>) {
        out.fill(0.0);
        out.fill_diagonal(self.sigma);
    }

    fn dispersion_alpha(&self, _alpha: &[f64], _x: &[f64], _m: usize, out: &mut DMatrix<f64>) {
        out.fill(0.0);
    }

    fn dispersion_x(&self, _alpha: &[f64], _x: &[f64], _j: usize, out: &mut DMatrix<f64>) {
        out.fill(0.0);
    }
}

type DriftFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Unreflected SDE `dX = drift(X) dt + sigma dW` with scalar volatility.
#[derive(Clone)]
pub struct SdeModel {
    x0: DVector<f64>,
    sigma: f64,
    drift: DriftFn,
}

impl std::fmt::Debug for SdeModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SdeModel").field("x0", &self.x0).field("sigma", &self.sigma).finish_non_exhaustive()
    }
}

impl SdeModel {
    pub fn new<F>(x0: DVector<f64>, sigma: f64, drift: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self { x0, sigma, drift: Arc::new(drift) }
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn initial(&self) -> &DVector<f64> {
        &self.x0
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }
}

/// Atlas drift: coordinate `j` gets `growth` when it is strictly smaller
/// than every other coordinate; ties give no drift to anyone.
pub fn atlas_drift(x: &[f64], growth: f64, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let mut min_idx = 0;
    for (j, &v) in x.iter().enumerate().skip(1) {
        if v < x[min_idx] {
            min_idx = j;
        }
    }
    let strict = x.iter().enumerate().all(|(j, &v)| j == min_idx || v > x[min_idx]);
    if strict {
        out[min_idx] = growth;
    }
}

/// Log-capitalization SDE of the Atlas model started at the origin.
pub fn make_atlas_sde(dim: usize, sigma: f64, g: f64) -> Result<SdeModel> {
    if dim < 2 {
        return Err(Error::InvalidDims(format!("Atlas model needs at least 2 stocks, got {dim}")));
    }
    let growth = dim as f64 * g;
    Ok(SdeModel::new(DVector::zeros(dim), sigma, move |x, out| atlas_drift(x, growth, out)))
}

/// Stable descending sort.
pub fn rank_descending(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}
