//! Euler schemes for the reflected diffusion `(Z, L)` and its derivative
//! process on the uniform grid `t_n = n delta`.
//!
//! One step from `Z_n` with increment `dW`:
//!
//! ```text
//! Xi      = Z_n + b(Z_n) delta + sigma(Z_n) dW
//! Z_{n+1} = pi(Xi),   L_{n+1} = L_n + xi(Xi)
//! X       = J_n + (b_alpha + b_x J_n) delta + (sigma_alpha + sigma_x J_n) dW + R' xi
//! J_{n+1} = Lambda_{A} X
//! ```
//!
//! where `A` is the set of faces with a positive multiplier together with the
//! faces `Z_{n+1}` lies on up to [`boundary_tolerance`].

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{boundary_tolerance, derivative_projection, project, ActiveSet, Projector};
use crate::models::{Dims, ModelFlags, ParamModel};
use crate::rng::IncrementSource;

/// Uniform time grid: `steps` intervals of length `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerConfig {
    delta: f64,
    steps: usize,
}

impl EulerConfig {
    pub fn new(delta: f64, steps: usize) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidConfig(format!("time step must be positive, got {delta}")));
        }
        if steps == 0 {
            return Err(Error::InvalidConfig("at least one time step is required".into()));
        }
        Ok(Self { delta, steps })
    }

    /// Grid over `[0, horizon]`; `horizon / delta` must be a positive integer
    /// up to a relative error of `1e-9`.
    pub fn from_horizon(delta: f64, horizon: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidConfig(format!("time step must be positive, got {delta}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidConfig(format!("horizon must be positive, got {horizon}")));
        }
        let ratio = horizon / delta;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidConfig(format!(
                "non-integer step count: horizon {horizon} / delta {delta} = {ratio}"
            )));
        }
        Self::new(delta, steps as usize)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `steps * delta`.
    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.delta
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.delta
    }
}

/// Coefficients and their Jacobians at one state.
#[derive(Debug, Clone)]
struct Coefficients {
    b: DVector<f64>,
    b_alpha: DMatrix<f64>,
    b_x: DMatrix<f64>,
    sigma: DMatrix<f64>,
    sigma_alpha: Vec<DMatrix<f64>>,
    sigma_x: Vec<DMatrix<f64>>,
}

impl Coefficients {
    fn zeros(d: Dims) -> Self {
        Self {
            b: DVector::zeros(d.state),
            b_alpha: DMatrix::zeros(d.state, d.params),
            b_x: DMatrix::zeros(d.state, d.state),
            sigma: DMatrix::zeros(d.state, d.noise),
            sigma_alpha: vec![DMatrix::zeros(d.state, d.noise); d.params],
            sigma_x: vec![DMatrix::zeros(d.state, d.noise); d.state],
        }
    }

    fn eval(&mut self, model: &dyn ParamModel, flags: &ModelFlags, alpha: &[f64], x: &[f64], derivative: bool) {
        model.drift(alpha, x, &mut self.b);
        model.dispersion(alpha, x, &mut self.sigma);
        if !derivative {
            return;
        }
        model.drift_alpha(alpha, x, &mut self.b_alpha);
        if !flags.drift_state_free {
            model.drift_x(alpha, x, &mut self.b_x);
        }
        for (m, s) in self.sigma_alpha.iter_mut().enumerate() {
            if !flags.sigma_const[m] {
                model.dispersion_alpha(alpha, x, m, s);
            }
        }
        if !flags.dispersion_state_free {
            for (j, s) in self.sigma_x.iter_mut().enumerate() {
                model.dispersion_x(alpha, x, j, s);
            }
        }
    }
}

/// Mutable per-path state of an [`EulerScheme`].
#[derive(Debug, Clone)]
pub struct EulerState {
    step: usize,
    with_derivative: bool,
    z: Vec<f64>,
    l: Vec<f64>,
    l_inc: Vec<f64>,
    jac: Vec<f64>,
    mask: u64,
    dw: Vec<f64>,
    xi: Vec<f64>,
    pre: Vec<f64>,
    coeffs: Option<Coefficients>,
}

impl EulerState {
    /// Index `n` of the current grid point.
    pub fn step(&self) -> usize {
        self.step
    }

    /// `Z_n`.
    pub fn z(&self) -> &[f64] {
        &self.z
    }

    /// Cumulative multipliers `L_n`.
    pub fn l(&self) -> &[f64] {
        &self.l
    }

    /// `L_n - L_{n-1}`.
    pub fn l_inc(&self) -> &[f64] {
        &self.l_inc
    }

    /// `J_n`, column-major `J x M`; empty without the derivative process.
    pub fn jac(&self) -> &[f64] {
        &self.jac
    }

    /// Faces used for the last derivative projection (bit `i` for face `i`).
    pub fn active_mask(&self) -> u64 {
        self.mask
    }

    /// The increment that produced the current state.
    pub fn last_increment(&self) -> &[f64] {
        &self.dw
    }

    pub fn has_derivative(&self) -> bool {
        self.with_derivative
    }
}

/// Euler scheme for a model at a fixed parameter value.
///
/// Immutable and shareable across threads; each path keeps its own
/// [`EulerState`]. When neither the drift nor the dispersion depends on the
/// state, the coefficients are evaluated once up front.
pub struct EulerScheme<'a> {
    model: &'a dyn ParamModel,
    alpha: Vec<f64>,
    dims: Dims,
    flags: ModelFlags,
    config: EulerConfig,
    projector: Projector,
    x0: Vec<f64>,
    x0_jac: Vec<f64>,
    r_jac: Vec<DMatrix<f64>>,
    hoisted: Option<Coefficients>,
}

impl std::fmt::Debug for EulerScheme<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EulerScheme")
            .field("alpha", &self.alpha)
            .field("dims", &self.dims)
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl<'a> EulerScheme<'a> {
    pub fn new(model: &'a dyn ParamModel, alpha: &[f64], config: EulerConfig) -> Result<Self> {
        model.check_alpha(alpha)?;
        let dims = model.dims();
        if model.reflection().param_dim() != dims.params {
            return Err(Error::InvalidDims(format!(
                "reflection field has {} parameters, model has {}",
                model.reflection().param_dim(),
                dims.params
            )));
        }
        let flags = model.flags().clone();
        if [flags.x0_const.len(), flags.sigma_const.len(), flags.reflection_const.len()]
            .iter()
            .any(|&l| l != dims.params)
        {
            return Err(Error::InvalidDims("model flags must have one entry per parameter".into()));
        }
        let r = model.reflection().eval(alpha);
        let projector = Projector::new(model.domain(), &r)?;
        let x0 = model.initial(alpha);
        let x0_jac = model.initial_jacobian(alpha);
        if x0.len() != dims.state || x0_jac.shape() != (dims.state, dims.params) {
            return Err(Error::InvalidDims("initial point or its Jacobian has the wrong shape".into()));
        }
        let hoisted = (flags.drift_state_free && flags.dispersion_state_free).then(|| {
            let mut c = Coefficients::zeros(dims);
            c.eval(model, &flags, alpha, x0.as_slice(), true);
            c
        });
        Ok(Self {
            model,
            alpha: alpha.to_vec(),
            dims,
            config,
            projector,
            x0: x0.as_slice().to_vec(),
            x0_jac: x0_jac.as_slice().to_vec(),
            r_jac: model.reflection().jacobian(alpha),
            hoisted,
            flags,
        })
    }

    pub fn model(&self) -> &'a dyn ParamModel {
        self.model
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn config(&self) -> &EulerConfig {
        &self.config
    }

    pub fn projector(&self) -> &Projector {
        &self.projector
    }

    /// Whether the coefficients were evaluated once for the whole path.
    pub fn is_state_free(&self) -> bool {
        self.hoisted.is_some()
    }

    /// State at `t = 0`: `Z_0 = x0`, `L_0 = 0`, `J_0 = x0'`.
    pub fn start(&self, with_derivative: bool) -> EulerState {
        let Dims { state: j, noise: k, params: m, faces: n } = self.dims;
        let z = self.x0.clone();
        let tol = boundary_tolerance(&z);
        EulerState {
            step: 0,
            with_derivative,
            mask: self.model.domain().near_mask(&z, tol),
            z,
            l: vec![0.0; n],
            l_inc: vec![0.0; n],
            jac: if with_derivative { self.x0_jac.clone() } else { Vec::new() },
            dw: vec![0.0; k],
            xi: vec![0.0; j],
            pre: if with_derivative { vec![0.0; j * m] } else { Vec::new() },
            coeffs: self.hoisted.is_none().then(|| Coefficients::zeros(self.dims)),
        }
    }

    /// Draws the next increment from `source` and advances one step.
    pub fn step<S: IncrementSource + ?Sized>(&self, state: &mut EulerState, source: &mut S) -> Result<()> {
        source.next_increment(&mut state.dw);
        self.advance_drawn(state)
    }

    /// Advances one step with the given increment.
    pub fn advance(&self, state: &mut EulerState, dw: &[f64]) -> Result<()> {
        if dw.len() != self.dims.noise {
            return Err(Error::InvalidDims(format!("increment has length {}, expected {}", dw.len(), self.dims.noise)));
        }
        state.dw.copy_from_slice(dw);
        self.advance_drawn(state)
    }

    fn advance_drawn(&self, st: &mut EulerState) -> Result<()> {
        let Dims { state: nj, noise: nk, params: nm, faces: _ } = self.dims;
        let delta = self.config.delta;
        let step = st.step + 1;
        if let Some(c) = st.coeffs.as_mut() {
            c.eval(self.model, &self.flags, &self.alpha, &st.z, st.with_derivative);
        }
        let c = match (&self.hoisted, &st.coeffs) {
            (Some(c), _) | (None, Some(c)) => c,
            (None, None) => unreachable!("state carries coefficients when they are not hoisted"),
        };

        for r in 0..nj {
            let mut v = st.z[r] + c.b[r] * delta;
            for k in 0..nk {
                v += c.sigma[(r, k)] * st.dw[k];
            }
            st.xi[r] = v;
        }

        let proj_mask = self.projector.project_into(&st.xi, &mut st.z, &mut st.l_inc).map_err(|e| e.at_step(step))?;
        for (l, inc) in st.l.iter_mut().zip(&st.l_inc) {
            *l += inc;
        }
        let tol = boundary_tolerance(&st.z);
        st.mask = proj_mask | self.model.domain().near_mask(&st.z, tol);
        st.step = step;

        if !st.with_derivative {
            return Ok(());
        }

        let jac = &st.jac;
        let pre = &mut st.pre;
        for m in 0..nm {
            let col = &jac[m * nj..(m + 1) * nj];
            let out = &mut pre[m * nj..(m + 1) * nj];
            for r in 0..nj {
                out[r] = col[r] + c.b_alpha[(r, m)] * delta;
            }
            if !self.flags.drift_state_free {
                for r in 0..nj {
                    let mut s = 0.0;
                    for q in 0..nj {
                        s += c.b_x[(r, q)] * col[q];
                    }
                    out[r] += s * delta;
                }
            }
            if !self.flags.sigma_const[m] {
                let s = &c.sigma_alpha[m];
                for r in 0..nj {
                    for k in 0..nk {
                        out[r] += s[(r, k)] * st.dw[k];
                    }
                }
            }
            if !self.flags.dispersion_state_free {
                for (q, s) in c.sigma_x.iter().enumerate() {
                    if col[q] == 0.0 {
                        continue;
                    }
                    for r in 0..nj {
                        for k in 0..nk {
                            out[r] += col[q] * s[(r, k)] * st.dw[k];
                        }
                    }
                }
            }
            if !self.flags.reflection_const[m] && proj_mask != 0 {
                let rp = &self.r_jac[m];
                for (i, &inc) in st.l_inc.iter().enumerate() {
                    if inc != 0.0 {
                        for r in 0..nj {
                            out[r] += rp[(r, i)] * inc;
                        }
                    }
                }
            }
        }

        if st.mask == 0 {
            st.jac.copy_from_slice(&st.pre);
        } else {
            let lam = self.projector.derivative(st.mask).map_err(|e| e.at_step(step))?;
            for m in 0..nm {
                let src = &st.pre[m * nj..(m + 1) * nj];
                let dst = &mut st.jac[m * nj..(m + 1) * nj];
                for r in 0..nj {
                    let mut s = 0.0;
                    for q in 0..nj {
                        s += lam[(r, q)] * src[q];
                    }
                    dst[r] = s;
                }
            }
        }
        Ok(())
    }

    /// Runs the full grid, recording every state.
    pub fn simulate<S: IncrementSource + ?Sized>(&self, source: &mut S, with_derivative: bool) -> Result<Trajectory> {
        if source.noise_dim() != self.dims.noise {
            return Err(Error::InvalidDims(format!(
                "increment source has dimension {}, model expects {}",
                source.noise_dim(),
                self.dims.noise
            )));
        }
        let Dims { state: nj, params: nm, .. } = self.dims;
        let steps = self.config.steps;
        let mut st = self.start(with_derivative);
        let tol_of = |z: &[f64]| boundary_tolerance(z);
        let mut traj = Trajectory {
            delta: self.config.delta,
            times: Vec::with_capacity(steps + 1),
            states: Vec::with_capacity(steps + 1),
            multipliers: Vec::with_capacity(steps + 1),
            derivatives: with_derivative.then(|| Vec::with_capacity(steps + 1)),
            increments: Vec::with_capacity(steps),
            active_sets: Vec::with_capacity(steps + 1),
        };
        let record = |st: &EulerState, traj: &mut Trajectory| {
            traj.times.push(self.config.time(st.step));
            traj.states.push(DVector::from_column_slice(&st.z));
            traj.multipliers.push(DVector::from_column_slice(&st.l));
            if let Some(d) = traj.derivatives.as_mut() {
                d.push(DMatrix::from_column_slice(nj, nm, &st.jac));
            }
            traj.active_sets.push(ActiveSet::from_mask(st.mask, tol_of(&st.z)));
        };
        record(&st, &mut traj);
        for _ in 0..steps {
            self.step(&mut st, source)?;
            traj.increments.push(DVector::from_column_slice(&st.dw));
            record(&st, &mut traj);
        }
        Ok(traj)
    }
}

/// Discrete path `(Z_n, L_n, J_n)` for `n = 0..=steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub delta: f64,
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// Cumulative multipliers `L_n`.
    pub multipliers: Vec<DVector<f64>>,
    pub derivatives: Option<Vec<DMatrix<f64>>>,
    /// `increments[n]` drives the step from `t_n` to `t_{n+1}`.
    pub increments: Vec<DVector<f64>>,
    /// Faces used by the derivative projection at each grid point.
    pub active_sets: Vec<ActiveSet>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.increments.len()
    }

    pub fn terminal(&self) -> &DVector<f64> {
        self.states.last().expect("a trajectory has at least one state")
    }

    /// CSV with columns `n,t,Z1..ZJ,L1..LN,J1_1..JJ_M`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let nj = self.states[0].len();
        let nf = self.multipliers[0].len();
        let mut header = vec!["n".to_string(), "t".to_string()];
        header.extend((1..=nj).map(|j| format!("Z{j}")));
        header.extend((1..=nf).map(|i| format!("L{i}")));
        if let Some(d) = &self.derivatives {
            let nm = d[0].ncols();
            for j in 1..=nj {
                header.extend((1..=nm).map(|m| format!("J{j}_{m}")));
            }
        }
        writeln!(w, "{}", header.join(","))?;
        for n in 0..self.states.len() {
            let mut row = vec![n.to_string(), self.times[n].to_string()];
            row.extend(self.states[n].iter().map(f64::to_string));
            row.extend(self.multipliers[n].iter().map(f64::to_string));
            if let Some(d) = &self.derivatives {
                let jac = &d[n];
                for j in 0..nj {
                    row.extend((0..jac.ncols()).map(|m| jac[(j, m)].to_string()));
                }
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Simulates `(Z, L)` and optionally the derivative process over `config`.
pub fn simulate<S: IncrementSource + ?Sized>(
    model: &dyn ParamModel,
    alpha: &[f64],
    config: &EulerConfig,
    source: &mut S,
    with_derivative: bool,
) -> Result<Trajectory> {
    EulerScheme::new(model, alpha, *config)?.simulate(source, with_derivative)
}

/// Result of [`step_reflected`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectedStep {
    pub z: DVector<f64>,
    pub l_inc: DVector<f64>,
    /// Faces with a positive multiplier plus faces `z` lies on.
    pub active: ActiveSet,
}

/// One step of the reflected scheme from `z_prev` with increment `dw`.
pub fn step_reflected(model: &dyn ParamModel, alpha: &[f64], z_prev: &[f64], delta: f64, dw: &[f64]) -> Result<ReflectedStep> {
    let d = model.dims();
    let mut b = DVector::zeros(d.state);
    let mut sigma = DMatrix::zeros(d.state, d.noise);
    model.drift(alpha, z_prev, &mut b);
    model.dispersion(alpha, z_prev, &mut sigma);
    let xi = DVector::from_column_slice(z_prev) + b * delta + sigma * DVector::from_column_slice(dw);
    let r = model.reflection().eval(alpha);
    let p = project(model.domain(), &r, xi.as_slice())?;
    let tol = boundary_tolerance(p.point.as_slice());
    let near = model.domain().active_set(p.point.as_slice(), tol)?;
    let active = ActiveSet::from_mask(p.active.mask() | near.mask(), tol);
    Ok(ReflectedStep { z: p.point, l_inc: p.multipliers, active })
}

/// One step of the derivative recursion; `active` is the set reported by
/// [`step_reflected`] for the same step.
#[allow(clippy::too_many_arguments)]
pub fn step_derivative(
    model: &dyn ParamModel,
    alpha: &[f64],
    z_prev: &[f64],
    j_prev: &DMatrix<f64>,
    delta: f64,
    dw: &[f64],
    l_inc: &[f64],
    active: &ActiveSet,
) -> Result<DMatrix<f64>> {
    let d = model.dims();
    let dw = DVector::from_column_slice(dw);
    let mut b_alpha = DMatrix::zeros(d.state, d.params);
    let mut b_x = DMatrix::zeros(d.state, d.state);
    let mut s = DMatrix::zeros(d.state, d.noise);
    model.drift_alpha(alpha, z_prev, &mut b_alpha);
    model.drift_x(alpha, z_prev, &mut b_x);
    let mut x = j_prev + (b_alpha + &b_x * j_prev) * delta;
    let r_jac = model.reflection().jacobian(alpha);
    let l_inc = DVector::from_column_slice(l_inc);
    for m in 0..d.params {
        model.dispersion_alpha(alpha, z_prev, m, &mut s);
        let mut col = &s * &dw + &r_jac[m] * &l_inc;
        for j in 0..d.state {
            model.dispersion_x(alpha, z_prev, j, &mut s);
            col += (&s * &dw) * j_prev[(j, m)];
        }
        let mut target = x.column_mut(m);
        target += col;
    }
    let r = model.reflection().eval(alpha);
    let lam = derivative_projection(model.domain(), &r, active)?;
    x = lam * x;
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{make_rbm1d, AffineModel};
    use crate::rng::{GaussianStream, ScriptedIncrements, ZeroIncrements};

    #[test]
    fn config_requires_integral_steps() {
        let c = EulerConfig::from_horizon(1e-3, 1.0).unwrap();
        assert_eq!(c.steps(), 1000);
        assert_eq!(EulerConfig::from_horizon(0.5, 100.0).unwrap().steps(), 200);
        assert!(matches!(EulerConfig::from_horizon(0.3, 1.0), Err(Error::InvalidConfig(_))));
        assert!(EulerConfig::from_horizon(0.0, 1.0).is_err());
        assert!(EulerConfig::from_horizon(2.0, 1.0).is_err());
        assert!(EulerConfig::new(0.1, 0).is_err());
    }

    #[test]
    fn single_reflected_steps() {
        let m = make_rbm1d();
        let a = [1.0, -1.0, 1.0];
        let s = step_reflected(&m, &a, &[1.0], 1.0, &[0.5]).unwrap();
        assert_eq!((s.z[0], s.l_inc[0]), (0.5, 0.0));
        assert!(s.active.is_empty());
        let s = step_reflected(&m, &a, &[1.0], 1.0, &[-0.5]).unwrap();
        assert_eq!((s.z[0], s.l_inc[0]), (0.0, 0.5));
        assert_eq!(s.active.indices(), &[0]);
    }

    #[test]
    fn single_derivative_steps() {
        let m = make_rbm1d();
        let a = [1.0, -1.0, 1.0];
        let j0 = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        let s = step_reflected(&m, &a, &[1.0], 1.0, &[0.5]).unwrap();
        let j1 = step_derivative(&m, &a, &[1.0], &j0, 1.0, &[0.5], s.l_inc.as_slice(), &s.active).unwrap();
        assert_eq!(j1.as_slice(), &[1.0, 1.0, 0.5]);
        let s = step_reflected(&m, &a, &[1.0], 1.0, &[-0.5]).unwrap();
        let j1 = step_derivative(&m, &a, &[1.0], &j0, 1.0, &[-0.5], s.l_inc.as_slice(), &s.active).unwrap();
        assert_eq!(j1.as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn two_step_hand_example() {
        let m = make_rbm1d();
        let cfg = EulerConfig::new(1.0, 2).unwrap();
        let t = simulate(&m, &[1.0, -1.0, 1.0], &cfg, &mut ScriptedIncrements::scalar(&[0.5, -1.2]), true).unwrap();
        let z: Vec<f64> = t.states.iter().map(|v| v[0]).collect();
        let l: Vec<f64> = t.multipliers.iter().map(|v| v[0]).collect();
        assert_eq!(z, vec![1.0, 0.5, 0.0]);
        assert!((l[2] - 1.7).abs() < 1e-15);
        assert_eq!(&l[..2], &[0.0, 0.0]);
        let dx: Vec<f64> = t.derivatives.as_ref().unwrap().iter().map(|j| j[(0, 0)]).collect();
        assert_eq!(dx, vec![1.0, 1.0, 0.0]);
        assert_eq!(t.times, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn zero_noise_without_drift_is_constant() {
        let json = r#"{"dim": 2, "noise_dim": 2, "param_dim": 1,
            "normals": [[1, 0], [0, 1]], "offsets": [0, 0], "interior_point": [1, 1],
            "directions": [[1, 0.5], [0, 1]], "x0": [0.4, 0.2], "x0_slope": [[2], [3]],
            "drift": {"constant": [0, 0]}, "dispersion": {"constant": [[1, 0], [0, 1]]}}"#;
        let m = AffineModel::from_json_str(json).unwrap();
        let cfg = EulerConfig::new(0.1, 20).unwrap();
        let t = simulate(&m, &[0.0], &cfg, &mut ZeroIncrements { noise_dim: 2 }, true).unwrap();
        for (z, (l, j)) in t.states.iter().zip(t.multipliers.iter().zip(t.derivatives.as_ref().unwrap())) {
            assert_eq!(z.as_slice(), &[0.4, 0.2]);
            assert_eq!(l.as_slice(), &[0.0, 0.0]);
            assert_eq!(j.as_slice(), &[2.0, 3.0]);
        }
    }

    #[test]
    fn engine_matches_reference_steps() {
        let json = r#"{"dim": 2, "noise_dim": 2, "param_dim": 2,
            "normals": [[1, 0], [0, 1]], "offsets": [0, 0], "interior_point": [1, 1],
            "directions": [[1, 0.5], [0, 1]], "direction_slopes": [[[0, 0], [0, 0]], [[0, 0.2], [-0.1, 0]]],
            "x0": [0.3, 0.2], "x0_slope": [[1, 0], [0, 0.5]],
            "drift": {"constant": [-1, -0.5], "alpha": [[0.5, 0], [0, 1]], "state": [[-0.2, 0.1], [0, -0.3]]},
            "dispersion": {"constant": [[0.7, 0], [0.1, 0.6]], "alpha": [[[0.1, 0], [0, 0]], [[0, 0], [0, 0.2]]],
                           "state": [[[0.05, 0], [0, 0]], [[0, 0], [0.02, 0.03]]]}}"#;
        let m = AffineModel::from_json_str(json).unwrap();
        let alpha = [0.4, 0.3];
        let cfg = EulerConfig::new(0.05, 200).unwrap();
        let t = simulate(&m, &alpha, &cfg, &mut GaussianStream::new(3, 0, 2, 0.05), true).unwrap();
        let d = t.derivatives.as_ref().unwrap();
        let mut hits = 0;
        for n in 0..t.steps() {
            let z = t.states[n].as_slice();
            let s = step_reflected(&m, &alpha, z, 0.05, t.increments[n].as_slice()).unwrap();
            assert!((&s.z - &t.states[n + 1]).amax() < 1e-12);
            assert_eq!(s.active.mask(), t.active_sets[n + 1].mask());
            hits += usize::from(!s.active.is_empty());
            let jn = step_derivative(&m, &alpha, z, &d[n], 0.05, t.increments[n].as_slice(), s.l_inc.as_slice(), &s.active)
                .unwrap();
            assert!((&jn - &d[n + 1]).amax() < 1e-10, "step {n}");
        }
        assert!(hits > 10, "path should interact with the boundary, hit {hits} times");
    }

    #[test]
    fn csv_dump_layout() {
        let m = make_rbm1d();
        let cfg = EulerConfig::new(1.0, 2).unwrap();
        let t = simulate(&m, &[1.0, -1.0, 1.0], &cfg, &mut ScriptedIncrements::scalar(&[0.5, -1.2]), true).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "n,t,Z1,L1,J1_1,J1_2,J1_3");
        assert_eq!(lines[1], "0,0,1,0,1,0,0");
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn noise_dimension_mismatch_is_reported() {
        let m = make_rbm1d();
        let cfg = EulerConfig::new(1.0, 2).unwrap();
        let err = simulate(&m, &[1.0, -1.0, 1.0], &cfg, &mut ZeroIncrements { noise_dim: 2 }, false).unwrap_err();
        assert!(matches!(err, Error::InvalidDims(_)));
    }
}
