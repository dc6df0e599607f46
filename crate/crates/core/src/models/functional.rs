use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Path functional `int_0^t zeta1(Z(s)) ds + zeta2(Z(t))` with gradients.
pub trait Functional: Send + Sync {
    fn running(&self, x: &[f64]) -> f64;
    fn running_grad(&self, x: &[f64], out: &mut [f64]);
    fn terminal(&self, x: &[f64]) -> f64;
    fn terminal_grad(&self, x: &[f64], out: &mut [f64]);

    /// Skips the running sums when `zeta1` vanishes identically.
    fn has_running(&self) -> bool {
        true
    }
}

/// `zeta1(x) = <running, x>`, `zeta2(x) = <terminal, x>`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFunctional {
    pub running: DVector<f64>,
    pub terminal: DVector<f64>,
}

impl LinearFunctional {
    pub fn terminal_only(weights: DVector<f64>) -> Self {
        Self { running: DVector::zeros(weights.len()), terminal: weights }
    }
}

impl Functional for LinearFunctional {
    fn running(&self, x: &[f64]) -> f64 {
        crate::geometry::dot(self.running.as_slice(), x)
    }

    fn running_grad(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(self.running.as_slice());
    }

    fn terminal(&self, x: &[f64]) -> f64 {
        crate::geometry::dot(self.terminal.as_slice(), x)
    }

    fn terminal_grad(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(self.terminal.as_slice());
    }

    fn has_running(&self) -> bool {
        self.running.iter().any(|&w| w != 0.0)
    }
}

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Functional assembled from closures.
#[derive(Clone)]
pub struct FnFunctional {
    running: Option<(ScalarFn, GradFn)>,
    terminal: (ScalarFn, GradFn),
}

impl FnFunctional {
    /// `zeta1 = 0`, `zeta2 = f`.
    pub fn terminal<F, G>(f: F, grad: G) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self { running: None, terminal: (Arc::new(f), Arc::new(grad)) }
    }

    pub fn with_running<F, G>(mut self, f: F, grad: G) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.running = Some((Arc::new(f), Arc::new(grad)));
        self
    }
}

impl std::fmt::Debug for FnFunctional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnFunctional").field("has_running", &self.running.is_some()).finish()
    }
}

impl Functional for FnFunctional {
    fn running(&self, x: &[f64]) -> f64 {
        self.running.as_ref().map_or(0.0, |(f, _)| f(x))
    }

    fn running_grad(&self, x: &[f64], out: &mut [f64]) {
        match &self.running {
            Some((_, g)) => g(x, out),
            None => out.iter_mut().for_each(|v| *v = 0.0),
        }
    }

    fn terminal(&self, x: &[f64]) -> f64 {
        (self.terminal.0)(x)
    }

    fn terminal_grad(&self, x: &[f64], out: &mut [f64]) {
        (self.terminal.1)(x, out)
    }

    fn has_running(&self) -> bool {
        self.running.is_some()
    }
}

/// Terminal diversity functional `(sum_j e^{p x_j}) / (sum_j e^{x_j})^p`.
///
/// The value is invariant under `x -> x + c`, which is used to evaluate it
/// with the largest coordinate shifted to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diversity {
    pub p: f64,
}

impl Diversity {
    pub fn value(&self, x: &[f64]) -> f64 {
        let shift = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (num, den) = x.iter().fold((0.0, 0.0), |(n, d), &v| {
            let y = v - shift;
            (n + (self.p * y).exp(), d + y.exp())
        });
        num / den.powf(self.p)
    }

    /// `d zeta / d x_j = p e^{p x_j} / S^p - p zeta e^{x_j} / S` with `S = sum e^{x_k}`.
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let shift = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (num, den) = x.iter().fold((0.0, 0.0), |(n, d), &v| {
            let y = v - shift;
            (n + (self.p * y).exp(), d + y.exp())
        });
        let den_p = den.powf(self.p);
        let zeta = num / den_p;
        for (o, &v) in out.iter_mut().zip(x) {
            let y = v - shift;
            *o = self.p * (self.p * y).exp() / den_p - self.p * zeta * y.exp() / den;
        }
    }
}

impl Functional for Diversity {
    fn running(&self, _x: &[f64]) -> f64 {
        0.0
    }

    fn running_grad(&self, _x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }

    fn terminal(&self, x: &[f64]) -> f64 {
        self.value(x)
    }

    fn terminal_grad(&self, x: &[f64], out: &mut [f64]) {
        self.gradient(x, out)
    }

    fn has_running(&self) -> bool {
        false
    }
}

/// Compares both gradients of `f` with central finite differences at `x`.
pub fn check_functional_gradients(f: &dyn Functional, x: &[f64], rel_tol: f64) -> Result<()> {
    let n = x.len();
    let mut g1 = vec![0.0; n];
    let mut g2 = vec![0.0; n];
    f.running_grad(x, &mut g1);
    f.terminal_grad(x, &mut g2);
    for j in 0..n {
        let h = 1e-6 * x[j].abs().max(1.0);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += h;
        xm[j] -= h;
        let fd1 = (f.running(&xp) - f.running(&xm)) / (2.0 * h);
        let fd2 = (f.terminal(&xp) - f.terminal(&xm)) / (2.0 * h);
        for (name, a, fd) in [("zeta1'", g1[j], fd1), ("zeta2'", g2[j], fd2)] {
            if (a - fd).abs() > rel_tol * fd.abs().max(1.0) {
                return Err(Error::Model(format!("{name}[{j}]: analytic {a:e} vs finite difference {fd:e}")));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::rank_descending;
    use proptest::prelude::*;

    #[test]
    fn diversity_at_equal_components() {
        let d = Diversity { p: 0.5 };
        assert!((d.value(&[0.0, 0.0, 0.0]) - 3f64.sqrt()).abs() < 1e-15);
        assert!((d.value(&[4.0, 4.0, 4.0]) - 3f64.sqrt()).abs() < 1e-14);
        let mut g = [1.0; 3];
        d.gradient(&[0.0, 0.0, 0.0], &mut g);
        for v in g {
            assert!(v.abs() < 1e-15);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let d = Diversity { p: 0.5 };
        check_functional_gradients(&d, &[0.3, -0.2, -1.1], 1e-5).unwrap();
        check_functional_gradients(&d, &[2.0, 1.0, 0.5], 1e-5).unwrap();
        let sq = FnFunctional::terminal(|x| x[0] * x[0], |x, g| g[0] = 2.0 * x[0])
            .with_running(|x| x[0].sin(), |x, g| g[0] = x[0].cos());
        check_functional_gradients(&sq, &[0.7], 1e-5).unwrap();
        let lin = LinearFunctional { running: DVector::from_vec(vec![1.0, -2.0]), terminal: DVector::from_vec(vec![0.5, 0.0]) };
        check_functional_gradients(&lin, &[0.7, 3.0], 1e-5).unwrap();
        let wrong = FnFunctional::terminal(|x| x[0] * x[0], |x, g| g[0] = x[0]);
        assert!(check_functional_gradients(&wrong, &[0.7], 1e-5).is_err());
    }

    proptest! {
        #[test]
        fn diversity_is_permutation_invariant(x in proptest::collection::vec(-5.0f64..5.0, 2..6)) {
            let d = Diversity { p: 0.5 };
            let a = d.value(&x);
            let b = d.value(&rank_descending(&x));
            prop_assert!((a - b).abs() <= 1e-12 * a.abs());
        }
    }
}
