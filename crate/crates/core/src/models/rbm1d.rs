use nalgebra::{DMatrix, DVector};

use super::{AffineReflection, Dims, ModelFlags, ParamModel, ReflectionField};
use crate::geometry::Polyhedron;

/// Reflected Brownian motion on `[0, inf)` parameterized by
/// `alpha = (x, b, sigma)`: start `x`, constant drift `b`, volatility `sigma`.
#[derive(Debug, Clone)]
pub struct Rbm1d {
    domain: Polyhedron,
    reflection: AffineReflection,
    flags: ModelFlags,
}

pub fn make_rbm1d() -> Rbm1d {
    Rbm1d {
        domain: Polyhedron::half_line(),
        reflection: AffineReflection::constant(DMatrix::from_element(1, 1, 1.0), 3),
        flags: ModelFlags {
            x0_const: vec![false, true, true],
            sigma_const: vec![true, true, false],
            reflection_const: vec![true; 3],
            elliptic: true,
            drift_state_free: true,
            dispersion_state_free: true,
        },
    }
}

impl ParamModel for Rbm1d {
    fn dims(&self) -> Dims {
        Dims { state: 1, noise: 1, params: 3, faces: 1 }
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
        DVector::from_element(1, alpha[0])
    }

    fn initial_jacobian(&self, _alpha: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0])
    }

    fn drift(&self, alpha: &[f64], _x: &[f64], out: &mut DVector<f64>) {
        out[0] = alpha[1];
    }

    fn drift_alpha(&self, _alpha: &[f64], _x: &[f64], out: &mut DMatrix<f64>) {
        out.copy_from_slice(&[0.0, 1.0, 0.0]);
    }

    fn drift_x(&self, _alpha: &[f64], _x: &[f64], out: &mut DMatrix<f64>) {
        out[(0, 0)] = 0.0;
    }

    fn dispersion(&self, alpha: &[f64], _x: &[f64], out: &mut DMatrix<f64>) {
        out[(0, 0)] = alpha[2];
    }

    fn dispersion_alpha(&self, _alpha: &[f64], _x: &[f64], m: usize, out: &mut DMatrix<f64>) {
        out[(0, 0)] = if m == 2 { 1.0 } else { 0.0 };
    }

    fn dispersion_x(&self, _alpha: &[f64], _x: &[f64], _j: usize, out: &mut DMatrix<f64>) {
        out[(0, 0)] = 0.0;
    }
}
