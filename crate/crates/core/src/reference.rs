//! Ground truth and independent oracles for testing the numerical code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::euler::{simulate, EulerConfig, Trajectory};
use crate::geometry::{norm, ActiveSet, Polyhedron};
use crate::models::ParamModel;
use crate::rng::{AggregatedStream, GaussianStream};

/// Derivatives of `E[Z(1)]` for the one-dimensional RBM at `alpha = (1, -1, 1)`,
/// to four decimals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rbm1dTruth {
    pub d_x: f64,
    pub d_b: f64,
    pub d_sigma: f64,
}

impl Rbm1dTruth {
    pub fn as_array(&self) -> [f64; 3] {
        [self.d_x, self.d_b, self.d_sigma]
    }
}

pub const RBM1D_TRUTH: Rbm1dTruth = Rbm1dTruth { d_x: 0.3319, d_b: 0.4351, d_sigma: 0.6681 };
pub const RBM1D_ALPHA: [f64; 3] = [1.0, -1.0, 1.0];
pub const RBM1D_HORIZON: f64 = 1.0;

/// A published Monte Carlo estimate: `mean +- ci95` per coordinate `(x, b, sigma)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PublishedEstimate {
    pub method: &'static str,
    pub delta: f64,
    pub mean: [Option<f64>; 3],
    pub ci95: [Option<f64>; 3],
}

/// Published estimates for the one-dimensional RBM with `1e5` trials each.
pub const RBM1D_PUBLISHED: [PublishedEstimate; 6] = [
    PublishedEstimate { method: "LR", delta: 1e-2, mean: [None, Some(0.4504), None], ci95: [None, Some(0.0071), None] },
    PublishedEstimate {
        method: "IPA",
        delta: 1e-2,
        mean: [Some(0.3634), Some(0.4527), Some(0.6209)],
        ci95: [Some(0.0029), Some(0.0027), Some(0.0035)],
    },
    PublishedEstimate { method: "LR", delta: 1e-3, mean: [None, Some(0.4415), None], ci95: [None, Some(0.0073), None] },
    PublishedEstimate {
        method: "IPA",
        delta: 1e-3,
        mean: [Some(0.3414), Some(0.4411), Some(0.6527)],
        ci95: [Some(0.0029), Some(0.0027), Some(0.0035)],
    },
    PublishedEstimate { method: "LR", delta: 1e-4, mean: [None, Some(0.4329), None], ci95: [None, Some(0.0072), None] },
    PublishedEstimate {
        method: "IPA",
        delta: 1e-4,
        mean: [Some(0.3359), Some(0.4393), Some(0.6611)],
        ci95: [Some(0.0029), Some(0.0025), Some(0.0035)],
    },
];

pub fn published(method: &str, delta: f64) -> Option<&'static PublishedEstimate> {
    RBM1D_PUBLISHED.iter().find(|p| p.method == method && (p.delta - delta).abs() <= 1e-12 * delta)
}

/// Derivative projection built from the direct-sum decomposition
/// `R^J = H (+) span(D_A)`: with `B` a basis of `H`,
/// `Lambda = [B 0] [B D_A]^{-1}`.
fn projection_by_decomposition(poly: &Polyhedron, r: &DMatrix<f64>, active: &ActiveSet) -> Result<DMatrix<f64>> {
    let j = poly.dim();
    if active.is_empty() {
        return Ok(DMatrix::identity(j, j));
    }
    let idx = active.indices();
    let n_a = poly.normals().select_columns(idx);
    let d_a = r.select_columns(idx);
    let gram = &n_a * n_a.transpose();
    let eig = SymmetricEigen::new(gram);
    let scale = eig.eigenvalues.amax().max(1.0);
    let null: Vec<usize> = (0..j).filter(|&c| eig.eigenvalues[c].abs() <= 1e-10 * scale).collect();
    if null.len() + idx.len() != j {
        return Err(Error::RankDeficientActiveSet { indices: idx.to_vec() });
    }
    let basis = eig.eigenvectors.select_columns(&null);
    let mut full = DMatrix::zeros(j, j);
    full.columns_mut(0, null.len()).copy_from(&basis);
    full.columns_mut(null.len(), idx.len()).copy_from(&d_a);
    let inv = full.clone().try_inverse().ok_or(Error::SingularActiveSystem { indices: idx.to_vec(), rcond: 0.0 })?;
    let mut keep = DMatrix::zeros(j, j);
    keep.columns_mut(0, null.len()).copy_from(&basis);
    Ok(keep * inv)
}

/// Applies the derivative projections of `sequence`, in order, to `initial`.
pub fn dp_matrix_oracle(initial: &[f64], sequence: &[ActiveSet], poly: &Polyhedron, r: &DMatrix<f64>) -> Result<DVector<f64>> {
    let mut v = DVector::from_column_slice(initial);
    for a in sequence {
        v = projection_by_decomposition(poly, r, a)? * v;
    }
    Ok(v)
}

/// Least-squares fit by a non-increasing sequence (pool adjacent violators).
pub fn pava_descending(y: &[f64]) -> Vec<f64> {
    // blocks of (sum, count)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(y.len());
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s0 / c0 as f64 >= s1 / c1 as f64 {
                break;
            }
            blocks.pop();
            *blocks.last_mut().unwrap() = (s0 + s1, c0 + c1);
        }
    }
    blocks.iter().flat_map(|&(s, c)| std::iter::repeat_n(s / c as f64, c)).collect()
}

/// Projection by solving the active system of every subset of faces and
/// keeping the feasible solutions, which must agree.
pub fn brute_force_projection(poly: &Polyhedron, r: &DMatrix<f64>, x: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
    let faces = poly.num_faces();
    let xv = DVector::from_column_slice(x);
    let scale = 1.0 + norm(x);
    let mut found: Option<(DVector<f64>, DVector<f64>)> = None;
    for mask in 0u64..(1 << faces) {
        let idx: Vec<usize> = (0..faces).filter(|i| mask & (1 << i) != 0).collect();
        let mut xi = DVector::zeros(faces);
        let mut z = xv.clone();
        if !idx.is_empty() {
            let n_a = poly.normals().select_columns(&idx);
            let d_a = r.select_columns(&idx);
            let g = n_a.transpose() * &d_a;
            let sv = g.singular_values();
            if sv.min() <= 1e-10 * sv.max() {
                continue;
            }
            let slack = DVector::from_iterator(idx.len(), idx.iter().map(|&i| poly.slack(x, i)));
            let Some(sol) = g.lu().solve(&(-slack)) else { continue };
            if sol.iter().any(|&v| !v.is_finite() || v < -1e-12 * scale) {
                continue;
            }
            for (a, &i) in idx.iter().enumerate() {
                xi[i] = sol[a].max(0.0);
            }
            z += r * &xi;
        }
        if (0..faces).any(|i| poly.slack(z.as_slice(), i) < -1e-9 * scale) {
            continue;
        }
        match &found {
            None => found = Some((z, xi)),
            Some((z0, _)) => {
                if (z0 - &z).amax() > 1e-8 * scale {
                    return Err(Error::Model(format!("two feasible projections of {x:?}")));
                }
            }
        }
    }
    found.ok_or(Error::NoFeasibleProjection)
}

/// Coarse and fine trajectories driven by the same Brownian path: the fine
/// path uses the increments of `stream` at step `delta_fine`, the coarse path
/// their sums over blocks of `coarse.delta() / delta_fine`.
pub fn coupled_reference(
    model: &dyn ParamModel,
    alpha: &[f64],
    coarse: &EulerConfig,
    delta_fine: f64,
    stream: &GaussianStream,
    with_derivative: bool,
) -> Result<(Trajectory, Trajectory)> {
    let ratio = coarse.delta() / delta_fine;
    let factor = ratio.round() as usize;
    if factor == 0 || !factor.is_power_of_two() || (ratio - factor as f64).abs() > 1e-9 * ratio {
        return Err(Error::InvalidConfig(format!(
            "coarse step {} is not a power-of-two multiple of {delta_fine}",
            coarse.delta()
        )));
    }
    let fine_cfg = EulerConfig::new(delta_fine, coarse.steps() * factor)?;
    let fine = simulate(model, alpha, &fine_cfg, &mut stream.with_delta(delta_fine), with_derivative)?;
    let mut agg = AggregatedStream::new(stream.with_delta(delta_fine), factor);
    let coarse_path = simulate(model, alpha, coarse, &mut agg, with_derivative)?;
    Ok((coarse_path, fine))
}

/// `max_n |Z_coarse(t_n) - Z_fine(t_n)|` over the fine grid, holding the
/// coarse path constant between its grid points.
pub fn sup_distance(coarse: &Trajectory, fine: &Trajectory) -> f64 {
    let factor = fine.steps() / coarse.steps();
    fine.states
        .iter()
        .enumerate()
        .map(|(n, zf)| (&coarse.states[n / factor] - zf).amax())
        .fold(0.0, f64::max)
}
