//! Per-trial gradient estimators and their Monte Carlo aggregation.
//!
//! For `Theta = sum_{n<N} zeta1(Z_n) delta + zeta2(Z_N)`:
//!
//! * IPA: `sum_{n<N} zeta1'(Z_n) J_n delta + zeta2'(Z_N) J_N`.
//! * LR: `Theta * D_m` with `D_m = sum_{n<N} <sigma^T a^{-1} b_{alpha_m}(Z_n), dW_{n+1}>`.
//! * FD: `(Theta(alpha + eps e_m) - Theta(alpha)) / eps` on common random numbers.

use std::fmt;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::euler::{EulerConfig, EulerScheme, Trajectory};
use crate::geometry::checked_inverse;
use crate::models::{atlas_drift, atlas_growth, rank_descending, Diversity, Functional, ParamModel};
use crate::rng::{GaussianStream, IncrementSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "IPA")]
    Ipa,
    #[serde(rename = "LR")]
    Lr,
    #[serde(rename = "FD")]
    Fd,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ipa => "IPA",
            Method::Lr => "LR",
            Method::Fd => "FD",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FdScheme {
    #[default]
    Forward,
    Central,
}

/// Running sum of the IPA estimator along a path.
struct IpaAccumulator {
    sum: Vec<f64>,
    grad: Vec<f64>,
}

impl IpaAccumulator {
    fn new(state_dim: usize, params: usize) -> Self {
        Self { sum: vec![0.0; params], grad: vec![0.0; state_dim] }
    }

    fn add(&mut self, jac: &[f64], weight: f64) {
        let nj = self.grad.len();
        for (m, s) in self.sum.iter_mut().enumerate() {
            let col = &jac[m * nj..(m + 1) * nj];
            *s += weight * col.iter().zip(&self.grad).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    fn running(&mut self, f: &dyn Functional, z: &[f64], jac: &[f64], delta: f64) {
        f.running_grad(z, &mut self.grad);
        self.add(jac, delta);
    }

    fn terminal(&mut self, f: &dyn Functional, z: &[f64], jac: &[f64]) {
        f.terminal_grad(z, &mut self.grad);
        self.add(jac, 1.0);
    }
}

/// IPA estimate from a recorded trajectory (one entry per parameter).
pub fn ipa_trial(traj: &Trajectory, functional: &dyn Functional) -> Result<Vec<f64>> {
    let derivs = traj.derivatives.as_ref().ok_or(Error::MissingDerivative)?;
    let nj = traj.states[0].len();
    let mut acc = IpaAccumulator::new(nj, derivs[0].ncols());
    if functional.has_running() {
        for n in 0..traj.steps() {
            acc.running(functional, traj.states[n].as_slice(), derivs[n].as_slice(), traj.delta);
        }
    }
    let last = traj.steps();
    acc.terminal(functional, traj.states[last].as_slice(), derivs[last].as_slice());
    Ok(acc.sum)
}

/// Parameter coordinates for which the model admits the LR estimator.
pub fn lr_coordinates(model: &dyn ParamModel) -> Vec<usize> {
    let flags = model.flags();
    (0..model.dims().params).filter(|&m| flags.lr_eligible(m)).collect()
}

fn check_lr(model: &dyn ParamModel, coords: &[usize]) -> Result<()> {
    let flags = model.flags();
    let params = model.dims().params;
    if coords.is_empty() {
        return Err(Error::LrNotApplicable("no parameter coordinate enters the drift only".into()));
    }
    for &m in coords {
        if m >= params {
            return Err(Error::InvalidDims(format!("parameter coordinate {m} out of range")));
        }
        if !flags.elliptic {
            return Err(Error::LrNotApplicable("the diffusion is not asserted to be uniformly elliptic".into()));
        }
        let mut why = Vec::new();
        if !flags.x0_const[m] {
            why.push("initial condition");
        }
        if !flags.sigma_const[m] {
            why.push("dispersion");
        }
        if !flags.reflection_const[m] {
            why.push("reflection directions");
        }
        if !why.is_empty() {
            return Err(Error::LrNotApplicable(format!("parameter {m} enters the {}", why.join(" and "))));
        }
    }
    Ok(())
}

/// `sigma^T a^{-1} b_alpha` restricted to `coords`, `K x |coords|`.
fn lr_weights(model: &dyn ParamModel, alpha: &[f64], x: &[f64], coords: &[usize]) -> Result<DMatrix<f64>> {
    let d = model.dims();
    let mut sigma = DMatrix::zeros(d.state, d.noise);
    let mut b_alpha = DMatrix::zeros(d.state, d.params);
    model.dispersion(alpha, x, &mut sigma);
    model.drift_alpha(alpha, x, &mut b_alpha);
    let a = &sigma * sigma.transpose();
    let (inv, rcond) = checked_inverse(&a);
    let inv = inv.ok_or(Error::SingularDiffusion { rcond })?;
    Ok(sigma.transpose() * inv * b_alpha.select_columns(coords))
}

fn path_payoff(traj: &Trajectory, functional: &dyn Functional) -> f64 {
    let mut payoff = 0.0;
    if functional.has_running() {
        for n in 0..traj.steps() {
            payoff += functional.running(traj.states[n].as_slice()) * traj.delta;
        }
    }
    payoff + functional.terminal(traj.terminal().as_slice())
}

/// LR estimate for the parameter coordinates `coords` from a recorded trajectory.
pub fn lr_trial(
    traj: &Trajectory,
    functional: &dyn Functional,
    model: &dyn ParamModel,
    alpha: &[f64],
    coords: &[usize],
) -> Result<Vec<f64>> {
    check_lr(model, coords)?;
    let mut d = vec![0.0; coords.len()];
    for n in 0..traj.steps() {
        let w = lr_weights(model, alpha, traj.states[n].as_slice(), coords).map_err(|e| e.at_step(n))?;
        let dw = &traj.increments[n];
        for (c, dc) in d.iter_mut().enumerate() {
            *dc += w.column(c).dot(dw);
        }
    }
    let payoff = path_payoff(traj, functional);
    Ok(d.into_iter().map(|v| payoff * v).collect())
}

/// Maps a parameter vector and a driving stream to a path payoff.
pub trait PayoffSimulator: Send + Sync {
    fn param_dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn config(&self) -> &EulerConfig;
    /// Fixes the parameter; the result can be run on many streams.
    fn prepare<'s>(&'s self, alpha: &[f64]) -> Result<Box<dyn PreparedPayoff + 's>>;
}

pub trait PreparedPayoff: Send + Sync {
    fn payoff(&self, source: &mut dyn IncrementSource) -> Result<f64>;
}

/// Payoff of the reflected Euler scheme of a [`ParamModel`].
pub struct ReflectedPayoff<'a> {
    model: &'a dyn ParamModel,
    functional: &'a dyn Functional,
    config: EulerConfig,
}

impl<'a> ReflectedPayoff<'a> {
    pub fn new(model: &'a dyn ParamModel, functional: &'a dyn Functional, config: EulerConfig) -> Self {
        Self { model, functional, config }
    }
}

struct PreparedReflected<'a> {
    scheme: EulerScheme<'a>,
    functional: &'a dyn Functional,
}

impl PreparedPayoff for PreparedReflected<'_> {
    fn payoff(&self, source: &mut dyn IncrementSource) -> Result<f64> {
        let delta = self.scheme.config().delta();
        let mut st = self.scheme.start(false);
        let mut payoff = 0.0;
        let running = self.functional.has_running();
        for _ in 0..self.scheme.config().steps() {
            if running {
                payoff += self.functional.running(st.z()) * delta;
            }
            self.scheme.step(&mut st, source)?;
        }
        Ok(payoff + self.functional.terminal(st.z()))
    }
}

impl PayoffSimulator for ReflectedPayoff<'_> {
    fn param_dim(&self) -> usize {
        self.model.dims().params
    }

    fn noise_dim(&self) -> usize {
        self.model.dims().noise
    }

    fn config(&self) -> &EulerConfig {
        &self.config
    }

    fn prepare<'s>(&'s self, alpha: &[f64]) -> Result<Box<dyn PreparedPayoff + 's>> {
        let scheme = EulerScheme::new(self.model, alpha, self.config)?;
        Ok(Box::new(PreparedReflected { scheme, functional: self.functional }))
    }
}

/// Diversity of the ranked Atlas SDE at the horizon, as a function of the
/// growth parameter `alpha` (`g = sigma^2 / (2 alpha)`).
#[derive(Debug, Clone)]
pub struct AtlasSdePayoff {
    dim: usize,
    sigma: f64,
    diversity: Diversity,
    config: EulerConfig,
}

impl AtlasSdePayoff {
    pub fn new(dim: usize, sigma: f64, p: f64, config: EulerConfig) -> Result<Self> {
        // same validation as the ranked model
        crate::models::make_atlas_rbm(dim, sigma, p)?;
        Ok(Self { dim, sigma, diversity: Diversity { p }, config })
    }
}

struct PreparedSde {
    dim: usize,
    sigma: f64,
    growth: f64,
    diversity: Diversity,
    config: EulerConfig,
}

impl PreparedPayoff for PreparedSde {
    fn payoff(&self, source: &mut dyn IncrementSource) -> Result<f64> {
        let delta = self.config.delta();
        let mut x = vec![0.0; self.dim];
        let mut drift = vec![0.0; self.dim];
        let mut dw = vec![0.0; self.dim];
        for _ in 0..self.config.steps() {
            source.next_increment(&mut dw);
            atlas_drift(&x, self.growth, &mut drift);
            for ((xj, bj), wj) in x.iter_mut().zip(&drift).zip(&dw) {
                *xj += bj * delta + self.sigma * wj;
            }
        }
        Ok(self.diversity.value(&rank_descending(&x)))
    }
}

impl PayoffSimulator for AtlasSdePayoff {
    fn param_dim(&self) -> usize {
        1
    }

    fn noise_dim(&self) -> usize {
        self.dim
    }

    fn config(&self) -> &EulerConfig {
        &self.config
    }

    fn prepare<'s>(&'s self, alpha: &[f64]) -> Result<Box<dyn PreparedPayoff + 's>> {
        if alpha.len() != 1 {
            return Err(Error::InvalidDims(format!("Atlas model has one parameter, got {}", alpha.len())));
        }
        if !(alpha[0] > 0.0 && alpha[0].is_finite()) {
            return Err(Error::InvalidConfig(format!("Atlas parameter must be positive, got {}", alpha[0])));
        }
        Ok(Box::new(PreparedSde {
            dim: self.dim,
            sigma: self.sigma,
            growth: self.dim as f64 * atlas_growth(self.sigma, alpha[0]),
            diversity: self.diversity,
            config: self.config,
        }))
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidConfig(format!("finite-difference step must be positive, got {epsilon}")));
    }
    Ok(())
}

fn shifted(alpha: &[f64], m: usize, h: f64) -> Vec<f64> {
    let mut a = alpha.to_vec();
    a[m] += h;
    a
}

/// Finite-difference estimate in coordinate `m`; every simulation is driven
/// by a rewound copy of `stream`.
pub fn fd_trial(
    simulator: &dyn PayoffSimulator,
    alpha: &[f64],
    m: usize,
    epsilon: f64,
    scheme: FdScheme,
    stream: &GaussianStream,
) -> Result<f64> {
    check_epsilon(epsilon)?;
    if m >= alpha.len() {
        return Err(Error::InvalidDims(format!("parameter coordinate {m} out of range")));
    }
    let run = |a: &[f64]| -> Result<f64> {
        let mut s = stream.clone();
        s.reset();
        simulator.prepare(a)?.payoff(&mut s)
    };
    match scheme {
        FdScheme::Forward => Ok((run(&shifted(alpha, m, epsilon))? - run(alpha)?) / epsilon),
        FdScheme::Central => {
            Ok((run(&shifted(alpha, m, epsilon))? - run(&shifted(alpha, m, -epsilon))?) / (2.0 * epsilon))
        }
    }
}

/// Trial count, master seed and worker threads of a Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub trials: usize,
    pub seed: u64,
    pub threads: usize,
}

impl McConfig {
    pub fn new(trials: usize, seed: u64) -> Self {
        Self { trials, seed, threads: 1 }
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.trials < 2 {
            return Err(Error::InsufficientTrials(self.trials));
        }
        if self.threads == 0 {
            return Err(Error::InvalidConfig("thread count must be at least 1".into()));
        }
        Ok(())
    }
}

/// What to estimate.
pub enum Job<'a> {
    Ipa {
        model: &'a dyn ParamModel,
        functional: &'a dyn Functional,
        config: EulerConfig,
    },
    Lr {
        model: &'a dyn ParamModel,
        functional: &'a dyn Functional,
        config: EulerConfig,
        /// Defaults to every eligible coordinate.
        coords: Option<Vec<usize>>,
    },
    Fd {
        simulator: &'a dyn PayoffSimulator,
        epsilon: f64,
        scheme: FdScheme,
        /// Defaults to every coordinate.
        coords: Option<Vec<usize>>,
    },
}

/// Aggregated Monte Carlo output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: Method,
    /// Parameter coordinates (0-based) reported in `mean`, `variance`, `ci95`.
    pub coords: Vec<usize>,
    pub alpha: Vec<f64>,
    pub mean: Vec<f64>,
    /// Sample variance of the per-trial estimates.
    pub variance: Vec<f64>,
    /// `1.96 sqrt(variance / trials)`.
    pub ci95: Vec<f64>,
    pub trials: usize,
    pub delta: f64,
    pub horizon: f64,
    pub seed: u64,
    pub seconds: f64,
    pub epsilon: Option<f64>,
}

pub const CSV_HEADER: &str = "method,m,alpha,delta,t,trials,epsilon,mean,variance,ci95,seed,seconds";

impl EstimateReport {
    /// Standard error `sqrt(variance / trials)` per coordinate.
    pub fn std_error(&self) -> Vec<f64> {
        self.variance.iter().map(|v| (v / self.trials as f64).sqrt()).collect()
    }

    /// Index into `mean` of parameter coordinate `m`.
    pub fn position(&self, m: usize) -> Option<usize> {
        self.coords.iter().position(|&c| c == m)
    }

    /// One row per coordinate under [`CSV_HEADER`]; `alpha` is `;`-separated.
    pub fn csv_rows(&self) -> Vec<String> {
        let alpha = self.alpha.iter().map(f64::to_string).collect::<Vec<_>>().join(";");
        let eps = self.epsilon.map(|e| e.to_string()).unwrap_or_default();
        self.coords
            .iter()
            .enumerate()
            .map(|(i, m)| {
                format!(
                    "{},{m},{alpha},{},{},{},{eps},{},{},{},{},{}",
                    self.method,
                    self.delta,
                    self.horizon,
                    self.trials,
                    self.mean[i],
                    self.variance[i],
                    self.ci95[i],
                    self.seed,
                    self.seconds
                )
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for row in self.csv_rows() {
            s.push_str(&row);
            s.push('\n');
        }
        s
    }
}

/// Column means and sample variances of an `n x width` row-major table,
/// summed in row order.
pub fn summarize(samples: &[f64], width: usize) -> (Vec<f64>, Vec<f64>) {
    let n = samples.len() / width;
    let mut mean = vec![0.0; width];
    for row in samples.chunks(width) {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; width];
    for row in samples.chunks(width) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= (n - 1) as f64);
    (mean, var)
}

/// Runs `trial(i, row)` for every trial index, writing `width` values per
/// trial into a table ordered by trial index.
pub fn run_trials<F>(mc: &McConfig, width: usize, trial: F) -> Result<Vec<f64>>
where
    F: Fn(u64, &mut [f64]) -> Result<()> + Sync,
{
    mc.validate()?;
    let mut out = vec![0.0; mc.trials * width];
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(mc.threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker threads: {e}")))?;
    pool.install(|| {
        out.par_chunks_mut(width)
            .enumerate()
            .try_for_each(|(i, row)| trial(i as u64, row).map_err(|e| e.at_trial(i as u64)))
    })?;
    Ok(out)
}

fn ipa_path(scheme: &EulerScheme<'_>, functional: &dyn Functional, stream: &mut GaussianStream, out: &mut [f64]) -> Result<()> {
    let cfg = scheme.config();
    let mut st = scheme.start(true);
    let mut acc = IpaAccumulator::new(scheme.dims().state, scheme.dims().params);
    let running = functional.has_running();
    for _ in 0..cfg.steps() {
        if running {
            acc.running(functional, st.z(), st.jac(), cfg.delta());
        }
        scheme.step(&mut st, stream)?;
    }
    acc.terminal(functional, st.z(), st.jac());
    out.copy_from_slice(&acc.sum);
    Ok(())
}

fn lr_path(
    scheme: &EulerScheme<'_>,
    functional: &dyn Functional,
    coords: &[usize],
    fixed: Option<&DMatrix<f64>>,
    stream: &mut GaussianStream,
    out: &mut [f64],
) -> Result<()> {
    let cfg = scheme.config();
    let mut st = scheme.start(false);
    let running = functional.has_running();
    let mut payoff = 0.0;
    out.iter_mut().for_each(|v| *v = 0.0);
    let mut local;
    for n in 0..cfg.steps() {
        let w = match fixed {
            Some(w) => w,
            None => {
                local = lr_weights(scheme.model(), scheme.alpha(), st.z(), coords).map_err(|e| e.at_step(n))?;
                &local
            }
        };
        if running {
            payoff += functional.running(st.z()) * cfg.delta();
        }
        scheme.step(&mut st, stream)?;
        let dw = st.last_increment();
        for (c, d) in out.iter_mut().enumerate() {
            *d += w.column(c).iter().zip(dw).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    payoff += functional.terminal(st.z());
    out.iter_mut().for_each(|d| *d *= payoff);
    Ok(())
}

/// Runs `job` over `mc.trials` independent trials at `alpha`.
///
/// Trial `i` is driven by `GaussianStream::new(mc.seed, i, K, delta)` and the
/// reduction runs in trial order, so the report does not depend on
/// `mc.threads`.
pub fn monte_carlo(job: &Job<'_>, alpha: &[f64], mc: &McConfig) -> Result<EstimateReport> {
    mc.validate()?;
    let started = Instant::now();
    let (method, coords, config, epsilon, samples) = match job {
        Job::Ipa { model, functional, config } => {
            let scheme = EulerScheme::new(*model, alpha, *config)?;
            let d = scheme.dims();
            let samples = run_trials(mc, d.params, |i, row| {
                let mut stream = GaussianStream::new(mc.seed, i, d.noise, config.delta());
                ipa_path(&scheme, *functional, &mut stream, row)
            })?;
            (Method::Ipa, (0..d.params).collect::<Vec<_>>(), *config, None, samples)
        }
        Job::Lr { model, functional, config, coords } => {
            let coords = coords.clone().unwrap_or_else(|| lr_coordinates(*model));
            check_lr(*model, &coords)?;
            let scheme = EulerScheme::new(*model, alpha, *config)?;
            let d = scheme.dims();
            let fixed = if scheme.is_state_free() {
                Some(lr_weights(*model, alpha, model.initial(alpha).as_slice(), &coords)?)
            } else {
                None
            };
            let samples = run_trials(mc, coords.len(), |i, row| {
                let mut stream = GaussianStream::new(mc.seed, i, d.noise, config.delta());
                lr_path(&scheme, *functional, &coords, fixed.as_ref(), &mut stream, row)
            })?;
            (Method::Lr, coords, *config, None, samples)
        }
        Job::Fd { simulator, epsilon, scheme, coords } => {
            check_epsilon(*epsilon)?;
            let params = simulator.param_dim();
            if alpha.len() != params {
                return Err(Error::InvalidDims(format!("parameter vector has length {}, expected {params}", alpha.len())));
            }
            let coords = coords.clone().unwrap_or_else(|| (0..params).collect());
            if let Some(&bad) = coords.iter().find(|&&m| m >= params) {
                return Err(Error::InvalidDims(format!("parameter coordinate {bad} out of range")));
            }
            let config = *simulator.config();
            let base = match scheme {
                FdScheme::Forward => Some(simulator.prepare(alpha)?),
                FdScheme::Central => None,
            };
            let mut plus = Vec::with_capacity(coords.len());
            let mut minus = Vec::with_capacity(coords.len());
            for &m in &coords {
                plus.push(simulator.prepare(&shifted(alpha, m, *epsilon))?);
                if *scheme == FdScheme::Central {
                    minus.push(simulator.prepare(&shifted(alpha, m, -*epsilon))?);
                }
            }
            let k = simulator.noise_dim();
            let samples = run_trials(mc, coords.len(), |i, row| {
                let stream = GaussianStream::new(mc.seed, i, k, config.delta());
                let run = |p: &dyn PreparedPayoff| p.payoff(&mut stream.clone());
                let base_value = match &base {
                    Some(b) => run(b.as_ref())?,
                    None => 0.0,
                };
                for (c, v) in row.iter_mut().enumerate() {
                    *v = match scheme {
                        FdScheme::Forward => (run(plus[c].as_ref())? - base_value) / epsilon,
                        FdScheme::Central => (run(plus[c].as_ref())? - run(minus[c].as_ref())?) / (2.0 * epsilon),
                    };
                }
                Ok(())
            })?;
            (Method::Fd, coords, config, Some(*epsilon), samples)
        }
    };
    let (mean, variance) = summarize(&samples, coords.len());
    let ci95 = variance.iter().map(|v| 1.96 * (v / mc.trials as f64).sqrt()).collect();
    Ok(EstimateReport {
        method,
        coords,
        alpha: alpha.to_vec(),
        mean,
        variance,
        ci95,
        trials: mc.trials,
        delta: config.delta(),
        horizon: config.horizon(),
        seed: mc.seed,
        seconds: started.elapsed().as_secs_f64(),
        epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::euler::simulate;
    use crate::models::{make_rbm1d, FnFunctional, LinearFunctional};
    use crate::rng::ScriptedIncrements;
    use nalgebra::DVector;

    fn identity_terminal() -> LinearFunctional {
        LinearFunctional::terminal_only(DVector::from_element(1, 1.0))
    }

    #[test]
    fn ipa_single_step() {
        let m = make_rbm1d();
        let cfg = EulerConfig::new(1.0, 1).unwrap();
        let t = simulate(&m, &[1.0, -1.0, 1.0], &cfg, &mut ScriptedIncrements::scalar(&[0.5]), true).unwrap();
        assert_eq!(ipa_trial(&t, &identity_terminal()).unwrap(), vec![1.0, 1.0, 0.5]);
        let t = simulate(&m, &[1.0, -1.0, 1.0], &cfg, &mut ScriptedIncrements::scalar(&[-0.5]), true).unwrap();
        assert_eq!(ipa_trial(&t, &identity_terminal()).unwrap()[0], 0.0);
        let t = simulate(&m, &[1.0, -1.0, 1.0], &cfg, &mut ScriptedIncrements::scalar(&[0.5]), false).unwrap();
        assert!(matches!(ipa_trial(&t, &identity_terminal()), Err(Error::MissingDerivative)));
    }

    #[test]
    fn lr_single_step() {
        let m = make_rbm1d();
        let cfg = EulerConfig::new(1.0, 1).unwrap();
        let alpha = [1.0, -1.0, 1.0];
        let t = simulate(&m, &alpha, &cfg, &mut ScriptedIncrements::scalar(&[0.5]), false).unwrap();
        assert_eq!(lr_trial(&t, &identity_terminal(), &m, &alpha, &[1]).unwrap(), vec![0.25]);
        let t = simulate(&m, &alpha, &cfg, &mut ScriptedIncrements::scalar(&[0.0]), false).unwrap();
        assert_eq!(lr_trial(&t, &identity_terminal(), &m, &alpha, &[1]).unwrap(), vec![0.0]);
        for bad in [0, 2] {
            let err = lr_trial(&t, &identity_terminal(), &m, &alpha, &[bad]).unwrap_err();
            assert!(matches!(err, Error::LrNotApplicable(_)), "{err}");
        }
        assert_eq!(lr_coordinates(&m), vec![1]);
    }

    #[test]
    fn lr_rejects_degenerate_diffusion() {
        let m = make_rbm1d();
        let cfg = EulerConfig::new(1.0, 1).unwrap();
        let alpha = [1.0, -1.0, 0.0];
        let t = simulate(&m, &alpha, &cfg, &mut ScriptedIncrements::scalar(&[0.5]), false).unwrap();
        let err = lr_trial(&t, &identity_terminal(), &m, &alpha, &[1]).unwrap_err();
        assert!(matches!(err.root(), Error::SingularDiffusion { .. }), "{err}");
    }

    struct Linear {
        config: EulerConfig,
    }

    struct LinearPrepared(f64);

    impl PreparedPayoff for LinearPrepared {
        fn payoff(&self, source: &mut dyn IncrementSource) -> Result<f64> {
            let mut w = [0.0];
            source.next_increment(&mut w);
            Ok(3.0 * self.0 + w[0])
        }
    }

    impl PayoffSimulator for Linear {
        fn param_dim(&self) -> usize {
            2
        }
        fn noise_dim(&self) -> usize {
            1
        }
        fn config(&self) -> &EulerConfig {
            &self.config
        }
        fn prepare<'s>(&'s self, alpha: &[f64]) -> Result<Box<dyn PreparedPayoff + 's>> {
            Ok(Box::new(LinearPrepared(alpha[1])))
        }
    }

    #[test]
    fn fd_on_linear_and_constant_payoffs() {
        let sim = Linear { config: EulerConfig::new(1.0, 1).unwrap() };
        let stream = GaussianStream::new(1, 2, 1, 1.0);
        for eps in [1e-1, 1e-4] {
            for scheme in [FdScheme::Forward, FdScheme::Central] {
                let v = fd_trial(&sim, &[0.3, 0.7], 1, eps, scheme, &stream).unwrap();
                assert!((v - 3.0).abs() < 1e-9, "{v}");
                assert_eq!(fd_trial(&sim, &[0.3, 0.7], 0, eps, scheme, &stream).unwrap(), 0.0);
            }
        }
        assert!(fd_trial(&sim, &[0.3, 0.7], 0, 0.0, FdScheme::Forward, &stream).is_err());
    }

    #[test]
    fn fd_matches_ipa_on_interior_paths() {
        let m = make_rbm1d();
        let alpha = [2.0, 0.5, 0.3];
        let cfg = EulerConfig::from_horizon(1e-2, 1.0).unwrap();
        let f = identity_terminal();
        let sim = ReflectedPayoff::new(&m, &f, cfg);
        for trial in 0..5 {
            let stream = GaussianStream::new(11, trial, 1, cfg.delta());
            let t = simulate(&m, &alpha, &cfg, &mut stream.clone(), true).unwrap();
            assert!(t.multipliers.last().unwrap()[0] == 0.0);
            let ipa = ipa_trial(&t, &f).unwrap();
            for (k, g) in ipa.iter().enumerate() {
                let fd = fd_trial(&sim, &alpha, k, 1e-6, FdScheme::Forward, &stream).unwrap();
                assert!((fd - g).abs() < 1e-4, "coordinate {k}: fd {fd} ipa {g}");
            }
        }
    }

    #[test]
    fn zero_functional_gives_zero_report() {
        let m = make_rbm1d();
        let zero = FnFunctional::terminal(|_| 0.0, |_, g| g[0] = 0.0);
        let cfg = EulerConfig::from_horizon(0.1, 1.0).unwrap();
        let job = Job::Ipa { model: &m, functional: &zero, config: cfg };
        let r = monte_carlo(&job, &[1.0, -1.0, 1.0], &McConfig::new(50, 4)).unwrap();
        assert_eq!(r.mean, vec![0.0; 3]);
        assert_eq!(r.variance, vec![0.0; 3]);
        let err = monte_carlo(&job, &[1.0, -1.0, 1.0], &McConfig::new(1, 4)).unwrap_err();
        assert!(matches!(err, Error::InsufficientTrials(1)));
    }

    #[test]
    fn reports_are_thread_independent() {
        let m = make_rbm1d();
        let f = identity_terminal();
        let cfg = EulerConfig::from_horizon(0.01, 1.0).unwrap();
        let alpha = [1.0, -1.0, 1.0];
        let sim = ReflectedPayoff::new(&m, &f, cfg);
        let jobs = [
            Job::Ipa { model: &m, functional: &f, config: cfg },
            Job::Lr { model: &m, functional: &f, config: cfg, coords: None },
            Job::Fd { simulator: &sim, epsilon: 1e-3, scheme: FdScheme::Central, coords: None },
        ];
        for job in &jobs {
            let mut a = monte_carlo(job, &alpha, &McConfig::new(400, 9)).unwrap();
            let mut b = monte_carlo(job, &alpha, &McConfig::new(400, 9).with_threads(8)).unwrap();
            a.seconds = 0.0;
            b.seconds = 0.0;
            assert_eq!(a, b);
            assert_eq!(a.to_csv(), b.to_csv());
        }
    }

    #[test]
    fn summary_statistics() {
        let (mean, var) = summarize(&[1.0, 10.0, 2.0, 20.0, 3.0, 30.0], 2);
        assert_eq!(mean, vec![2.0, 20.0]);
        assert_eq!(var, vec![1.0, 100.0]);
    }

    #[test]
    fn csv_and_json_layout() {
        let r = EstimateReport {
            method: Method::Fd,
            coords: vec![0, 2],
            alpha: vec![1.0, -1.0, 1.0],
            mean: vec![0.5, 0.25],
            variance: vec![4.0, 1.0],
            ci95: vec![1.96 * 0.2, 1.96 * 0.1],
            trials: 100,
            delta: 0.001,
            horizon: 1.0,
            seed: 7,
            seconds: 0.0,
            epsilon: Some(1e-4),
        };
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "FD,0,1;-1;1,0.001,1,100,0.0001,0.5,4,0.392,7,0");
        assert_eq!(lines[2].split(',').nth(1), Some("2"));
        let back: EstimateReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
        assert_eq!(r.std_error(), vec![0.2, 0.1]);
    }
}
