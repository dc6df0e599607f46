//! Models with affine coefficients, loadable from JSON.
//!
//! ```text
//! x0(alpha)        = x0 + X0 alpha
//! b(alpha, x)      = beta + B_alpha alpha + B_x x
//! sigma(alpha, x)  = S + sum_m alpha_m S_m + sum_j x_j C_j
//! R(alpha)         = R + sum_m alpha_m R_m
//! ```
//!
//! Matrices are written as arrays of rows. Directions are listed per face,
//! so `directions[i]` is the column `d_i` of `R`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{AffineReflection, Dims, LinearFunctional, ModelFlags, ParamModel, ReflectionField};
use crate::error::{Error, Result};
use crate::geometry::Polyhedron;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSpec {
    pub constant: Vec<f64>,
    #[serde(default)]
    pub alpha: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub state: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersionSpec {
    pub constant: Vec<Vec<f64>>,
    #[serde(default)]
    pub alpha: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default)]
    pub state: Option<Vec<Vec<Vec<f64>>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalSpec {
    #[serde(default)]
    pub running: Option<Vec<f64>>,
    #[serde(default)]
    pub terminal: Option<Vec<f64>>,
}

/// On-disk description of an affine model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub dim: usize,
    pub noise_dim: usize,
    pub param_dim: usize,
    pub normals: Vec<Vec<f64>>,
    pub offsets: Vec<f64>,
    pub interior_point: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
    #[serde(default)]
    pub direction_slopes: Option<Vec<Vec<Vec<f64>>>>,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub x0_slope: Option<Vec<Vec<f64>>>,
    pub drift: DriftSpec,
    pub dispersion: DispersionSpec,
    #[serde(default = "default_true")]
    pub elliptic: bool,
    #[serde(default)]
    pub functional: Option<FunctionalSpec>,
}

fn default_true() -> bool {
    true
}

fn rows_to_matrix(what: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::ModelFile(format!("{what} must be a {nrows}x{ncols} matrix (array of rows)")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c]))
}

fn vector(what: &str, v: &[f64], len: usize) -> Result<DVector<f64>> {
    if v.len() != len {
        return Err(Error::ModelFile(format!("{what} must have length {len}, got {}", v.len())));
    }
    Ok(DVector::from_column_slice(v))
}

fn matrix_list(what: &str, list: Option<&Vec<Vec<Vec<f64>>>>, count: usize, nrows: usize, ncols: usize) -> Result<Vec<DMatrix<f64>>> {
    match list {
        None => Ok(vec![DMatrix::zeros(nrows, ncols); count]),
        Some(l) if l.len() != count => Err(Error::ModelFile(format!("{what} must list {count} matrices"))),
        Some(l) => l.iter().enumerate().map(|(i, m)| rows_to_matrix(&format!("{what}[{i}]"), m, nrows, ncols)).collect(),
    }
}

fn is_zero(m: &DMatrix<f64>) -> bool {
    m.iter().all(|&v| v == 0.0)
}

/// Affine-coefficient reflected diffusion.
#[derive(Debug, Clone)]
pub struct AffineModel {
    dims: Dims,
    domain: Polyhedron,
    reflection: AffineReflection,
    x0: DVector<f64>,
    x0_slope: DMatrix<f64>,
    drift_const: DVector<f64>,
    drift_alpha: DMatrix<f64>,
    drift_state: DMatrix<f64>,
    disp_const: DMatrix<f64>,
    disp_alpha: Vec<DMatrix<f64>>,
    disp_state: Vec<DMatrix<f64>>,
    flags: ModelFlags,
    functional: LinearFunctional,
}

impl AffineModel {
    pub fn from_file(file: &ModelFile) -> Result<Self> {
        let (j, k, m) = (file.dim, file.noise_dim, file.param_dim);
        if j == 0 || k == 0 || m == 0 {
            return Err(Error::ModelFile("dim, noise_dim and param_dim must be positive".into()));
        }
        let faces = file.normals.len();
        let domain = Polyhedron::from_normals(&file.normals, &file.offsets, &file.interior_point)?;
        if domain.dim() != j {
            return Err(Error::ModelFile(format!("interior point has length {}, expected {j}", domain.dim())));
        }
        if file.directions.len() != faces {
            return Err(Error::ModelFile(format!("expected {faces} directions, one per face")));
        }
        let base = rows_to_matrix("directions", &file.directions, faces, j)?.transpose();
        let slopes = matrix_list("direction_slopes", file.direction_slopes.as_ref(), m, faces, j)?
            .into_iter()
            .map(|s| s.transpose())
            .collect();
        let reflection = AffineReflection::new(base, slopes)?;

        let x0 = vector("x0", &file.x0, j)?;
        let x0_slope = match &file.x0_slope {
            Some(rows) => rows_to_matrix("x0_slope", rows, j, m)?,
            None => DMatrix::zeros(j, m),
        };
        let drift_const = vector("drift.constant", &file.drift.constant, j)?;
        let drift_alpha = match &file.drift.alpha {
            Some(rows) => rows_to_matrix("drift.alpha", rows, j, m)?,
            None => DMatrix::zeros(j, m),
        };
        let drift_state = match &file.drift.state {
            Some(rows) => rows_to_matrix("drift.state", rows, j, j)?,
            None => DMatrix::zeros(j, j),
        };
        let disp_const = rows_to_matrix("dispersion.constant", &file.dispersion.constant, j, k)?;
        let disp_alpha = matrix_list("dispersion.alpha", file.dispersion.alpha.as_ref(), m, j, k)?;
        let disp_state = matrix_list("dispersion.state", file.dispersion.state.as_ref(), j, j, k)?;

        let functional = match &file.functional {
            None => LinearFunctional::terminal_only(DVector::from_element(j, 1.0)),
            Some(spec) => LinearFunctional {
                running: match &spec.running {
                    Some(w) => vector("functional.running", w, j)?,
                    None => DVector::zeros(j),
                },
                terminal: match &spec.terminal {
                    Some(w) => vector("functional.terminal", w, j)?,
                    None => DVector::zeros(j),
                },
            },
        };

        let flags = ModelFlags {
            x0_const: (0..m).map(|c| x0_slope.column(c).iter().all(|&v| v == 0.0)).collect(),
            sigma_const: disp_alpha.iter().map(is_zero).collect(),
            reflection_const: (0..m).map(|c| reflection.is_constant_in(c)).collect(),
            elliptic: file.elliptic,
            drift_state_free: is_zero(&drift_state),
            dispersion_state_free: disp_state.iter().all(is_zero),
        };

        Ok(Self {
            dims: Dims { state: j, noise: k, params: m, faces },
            domain,
            reflection,
            x0,
            x0_slope,
            drift_const,
            drift_alpha,
            drift_state,
            disp_const,
            disp_alpha,
            disp_state,
            flags,
            functional,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s).map_err(|e| Error::ModelFile(e.to_string()))?;
        Self::from_file(&file)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::ModelFile(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&s)
    }

    /// The linear functional declared in the file (default: sum of terminal coordinates).
    pub fn functional(&self) -> &LinearFunctional {
        &self.functional
    }
}

impl ParamModel for AffineModel {
    fn dims(&self) -> Dims {
        self.dims
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

    fn initial(&self, alpha: &[f64]) -> DVector<f64> {
        &self.x0 + &self.x0_slope * DVector::from_column_slice(alpha)
    }

    fn initial_jacobian(&self, _alpha: &[f64]) -> DMatrix<f64> {
        self.x0_slope.clone()
    }

    fn drift(&self, alpha: &[f64], x: &[f64], out: &mut DVector<f64>) {
        for r in 0..self.dims.state {
            let mut v = self.drift_const[r];
            for (c, a) in alpha.iter().enumerate() {
                v += self.drift_alpha[(r, c)] * a;
            }
            for (c, xc) in x.iter().enumerate() {
                v += self.drift_state[(r, c)] * xc;
            }
            out[r] = v;
        }
    }

    fn drift_alpha(&self, _alpha: &[f64], _x: &[f64], out: &mut DMatrix<f64>) {
        out.copy_from(&self.drift_alpha);
    }

    fn drift_x(&self, _alpha: &[f64], _x: &[f64], out: &mut DMatrix<f64>) {
        out.copy_from(&self.drift_state);
    }

    fn dispersion(&self, alpha: &[f64], x: &[f64], out: &mut DMatrix<f64>) {
        out.copy_from(&self.disp_const);
        for (a, s) in alpha.iter().zip(&self.disp_alpha) {
            if *a != 0.0 {
                *out += s * *a;
            }
        }
        if !self.flags.dispersion_state_free {
            for (xc, s) in x.iter().zip(&self.disp_state) {
                *out += s * *xc;
            }
        }
    }

    fn dispersion_alpha(&self, _alpha: &[f64], _x: &[f64], m: usize, out: &mut DMatrix<f64>) {
        out.copy_from(&self.disp_alpha[m]);
    }

    fn dispersion_x(&self, _alpha: &[f64], _x: &[f64], j: usize, out: &mut DMatrix<f64>) {
        out.copy_from(&self.disp_state[j]);
    }
}
