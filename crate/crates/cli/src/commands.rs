use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use nalgebra::DVector;
use rdsens_core::estimators::{monte_carlo, AtlasSdePayoff, EstimateReport, FdScheme, Job, McConfig, ReflectedPayoff, CSV_HEADER};
use rdsens_core::euler::{simulate, EulerConfig};
use rdsens_core::models::{make_atlas_rbm, make_rbm1d, AffineModel, FnFunctional, Functional, LinearFunctional, ParamModel};
use rdsens_core::reference::{RBM1D_ALPHA, RBM1D_HORIZON, RBM1D_TRUTH};
use rdsens_core::rng::GaussianStream;
use rdsens_core::validation::{model_file_checks, run_all, Check};
use serde::Serialize;

use crate::config::{Format, FunctionalArg, MethodArg, ModelChoice, Resolved, RunConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// JSON file with run options; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Delta,
    Time,
    Epsilon,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub axis: Axis,
    /// Values of the swept quantity, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    /// Estimators to run at each value (default: --method)
    #[arg(long, value_enum, value_delimiter = ',')]
    pub methods: Option<Vec<MethodArg>>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunConfig,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Check a model file instead of running the built-in suites
    #[arg(long)]
    pub model_file: Option<PathBuf>,
    /// Parameter at which to check the model file (default: zeros)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub alpha: Option<Vec<f64>>,
    #[arg(long, default_value_t = 20240611)]
    pub seed: u64,
}

enum Target {
    Reflected { model: Box<dyn ParamModel>, functional: Box<dyn Functional> },
    AtlasSde { dim: usize, sigma: f64, p: f64 },
}

fn square() -> FnFunctional {
    FnFunctional::terminal(|x| x[0] * x[0], |x, out| out[0] = 2.0 * x[0])
}

fn no_functional_choice(res: &Resolved) -> CliResult<()> {
    match res.functional {
        Some(_) => Err(CliError::Config("--functional applies only to the rbm1d model".into())),
        None => Ok(()),
    }
}

fn build(res: &Resolved, model: &ModelChoice) -> CliResult<Target> {
    Ok(match model {
        ModelChoice::Rbm1d => {
            let functional: Box<dyn Functional> = match res.functional.unwrap_or_default() {
                FunctionalArg::Z => Box::new(LinearFunctional::terminal_only(DVector::from_element(1, 1.0))),
                FunctionalArg::Z2 => Box::new(square()),
            };
            Target::Reflected { model: Box::new(make_rbm1d()), functional }
        }
        ModelChoice::AtlasRbm => {
            no_functional_choice(res)?;
            let (model, diversity) = make_atlas_rbm(res.dim, res.sigma, res.p)?;
            Target::Reflected { model: Box::new(model), functional: Box::new(diversity) }
        }
        ModelChoice::AtlasSde => {
            no_functional_choice(res)?;
            make_atlas_rbm(res.dim, res.sigma, res.p)?;
            Target::AtlasSde { dim: res.dim, sigma: res.sigma, p: res.p }
        }
        ModelChoice::File(path) => {
            no_functional_choice(res)?;
            let model = AffineModel::from_path(path)?;
            let functional = model.functional().clone();
            Target::Reflected { model: Box::new(model), functional: Box::new(functional) }
        }
    })
}

impl Target {
    fn param_dim(&self) -> usize {
        match self {
            Target::Reflected { model, .. } => model.dims().params,
            Target::AtlasSde { .. } => 1,
        }
    }
}

fn default_alpha(model: &ModelChoice, target: &Target) -> Vec<f64> {
    match model {
        ModelChoice::Rbm1d => RBM1D_ALPHA.to_vec(),
        ModelChoice::AtlasRbm | ModelChoice::AtlasSde => vec![1.0],
        ModelChoice::File(_) => vec![0.0; target.param_dim()],
    }
}

fn restrict(mut report: EstimateReport, coords: &[usize]) -> CliResult<EstimateReport> {
    let mut pos = Vec::with_capacity(coords.len());
    for &m in coords {
        pos.push(report.position(m).ok_or_else(|| CliError::Config(format!("parameter coordinate {m} out of range")))?);
    }
    let pick = |v: &[f64]| pos.iter().map(|&i| v[i]).collect::<Vec<_>>();
    report.mean = pick(&report.mean);
    report.variance = pick(&report.variance);
    report.ci95 = pick(&report.ci95);
    report.coords = coords.to_vec();
    Ok(report)
}

struct Point {
    method: MethodArg,
    delta: f64,
    t: f64,
    epsilon: f64,
}

fn estimate(res: &Resolved, target: &Target, alpha: &[f64], at: &Point) -> CliResult<EstimateReport> {
    let config = EulerConfig::from_horizon(at.delta, at.t)?;
    let mc = McConfig::new(res.trials, res.seed).with_threads(res.threads);
    let scheme = if res.central { FdScheme::Central } else { FdScheme::Forward };
    let report = match (target, at.method) {
        (Target::Reflected { model, functional }, MethodArg::Ipa) => {
            let report = monte_carlo(&Job::Ipa { model: model.as_ref(), functional: functional.as_ref(), config }, alpha, &mc)?;
            match &res.coords {
                Some(c) => restrict(report, c)?,
                None => report,
            }
        }
        (Target::Reflected { model, functional }, MethodArg::Lr) => monte_carlo(
            &Job::Lr { model: model.as_ref(), functional: functional.as_ref(), config, coords: res.coords.clone() },
            alpha,
            &mc,
        )?,
        (Target::Reflected { model, functional }, MethodArg::Fd) => {
            let simulator = ReflectedPayoff::new(model.as_ref(), functional.as_ref(), config);
            monte_carlo(&Job::Fd { simulator: &simulator, epsilon: at.epsilon, scheme, coords: res.coords.clone() }, alpha, &mc)?
        }
        (Target::AtlasSde { dim, sigma, p }, MethodArg::Fd) => {
            let simulator = AtlasSdePayoff::new(*dim, *sigma, *p, config)?;
            monte_carlo(&Job::Fd { simulator: &simulator, epsilon: at.epsilon, scheme, coords: res.coords.clone() }, alpha, &mc)?
        }
        (Target::AtlasSde { .. }, _) => {
            return Err(CliError::Config("atlas_sde supports only the fd method; use atlas_rbm for ipa and lr".into()))
        }
    };
    Ok(if res.no_timing { EstimateReport { seconds: 0.0, ..report } } else { report })
}

fn emit(output: Option<&Path>, text: &str) -> CliResult<()> {
    match output {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::io(path, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| CliError::io("<stdout>", e))
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn dump_path(res: &Resolved, target: &Target, alpha: &[f64], path: &Path) -> CliResult<()> {
    let Target::Reflected { model, .. } = target else {
        return Err(CliError::Config("--dump-path needs a reflected model".into()));
    };
    let config = EulerConfig::from_horizon(res.delta, res.t)?;
    let mut stream = GaussianStream::new(res.seed, 0, model.dims().noise, config.delta());
    let traj = simulate(model.as_ref(), alpha, &config, &mut stream, true)?;
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    traj.write_csv(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

pub fn cmd_estimate(args: EstimateArgs) -> CliResult<()> {
    let res = Resolved::new(args.run, args.config.as_deref())?;
    let target = build(&res, &res.model)?;
    let alpha = res.alpha.clone().unwrap_or_else(|| default_alpha(&res.model, &target));
    let report = estimate(&res, &target, &alpha, &Point { method: res.method, delta: res.delta, t: res.t, epsilon: res.epsilon })?;
    if let Some(path) = &res.dump_path {
        dump_path(&res, &target, &alpha, path)?;
    }
    let text = match res.format {
        Format::Csv => report.to_csv(),
        Format::Json => to_json(&report),
    };
    emit(res.output.as_deref(), &text)
}

#[derive(Debug, Serialize)]
struct SweepRow {
    #[serde(flatten)]
    report: EstimateReport,
    /// `(mean - exact) / exact` per coordinate, when exact values are known.
    rel_bias: Option<Vec<f64>>,
}

fn relative_bias(res: &Resolved, model: &ModelChoice, alpha: &[f64], report: &EstimateReport) -> Option<Vec<f64>> {
    let known = *model == ModelChoice::Rbm1d
        && res.functional.unwrap_or_default() == FunctionalArg::Z
        && alpha == RBM1D_ALPHA
        && report.horizon == RBM1D_HORIZON;
    known.then(|| {
        let truth = RBM1D_TRUTH.as_array();
        report.coords.iter().zip(&report.mean).map(|(&m, mean)| (mean - truth[m]) / truth[m]).collect()
    })
}

pub const SWEEP_HEADER_EXTRA: &str = "rel_bias";

fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("{CSV_HEADER},{SWEEP_HEADER_EXTRA}\n");
    for row in rows {
        for (i, line) in row.report.csv_rows().into_iter().enumerate() {
            let bias = row.rel_bias.as_ref().map(|b| b[i].to_string()).unwrap_or_default();
            s.push_str(&format!("{line},{bias}\n"));
        }
    }
    s
}

pub fn cmd_sweep(args: SweepArgs) -> CliResult<()> {
    let res = Resolved::new(args.run, args.config.as_deref())?;
    if res.dump_path.is_some() {
        return Err(CliError::Config("--dump-path is supported by estimate only".into()));
    }
    if args.values.is_empty() {
        return Err(CliError::Config("--values must list at least one value".into()));
    }
    let methods = args.methods.unwrap_or_else(|| vec![res.method]);
    let mut runs: Vec<(ModelChoice, Point)> = Vec::new();
    match args.axis {
        Axis::Delta | Axis::Time => {
            for &v in &args.values {
                for &method in &methods {
                    let (delta, t) = if args.axis == Axis::Delta { (v, res.t) } else { (res.delta, v) };
                    runs.push((res.model.clone(), Point { method, delta, t, epsilon: res.epsilon }));
                }
            }
        }
        Axis::Epsilon => {
            let (fd_model, ipa_model) = if res.model.is_atlas() {
                (ModelChoice::AtlasSde, ModelChoice::AtlasRbm)
            } else {
                (res.model.clone(), res.model.clone())
            };
            for &v in &args.values {
                runs.push((fd_model.clone(), Point { method: MethodArg::Fd, delta: res.delta, t: res.t, epsilon: v }));
            }
            runs.push((ipa_model, Point { method: MethodArg::Ipa, delta: res.delta, t: res.t, epsilon: res.epsilon }));
        }
    }
    let mut rows = Vec::with_capacity(runs.len());
    for (model, point) in &runs {
        let target = build(&res, model)?;
        let alpha = res.alpha.clone().unwrap_or_else(|| default_alpha(model, &target));
        let mut report = estimate(&res, &target, &alpha, point)?;
        if point.method != MethodArg::Fd {
            report.epsilon = None;
        }
        let rel_bias = relative_bias(&res, model, &alpha, &report);
        rows.push(SweepRow { report, rel_bias });
    }
    let text = match res.format {
        Format::Csv => sweep_csv(&rows),
        Format::Json => to_json(&rows),
    };
    emit(res.output.as_deref(), &text)
}

fn print_checks(checks: &[Check]) {
    println!("{:<52} {:>7} {:>8}  status", "check", "cases", "failures");
    for c in checks {
        let status = if c.passed() { "PASS" } else { "FAIL" };
        println!("{:<52} {:>7} {:>8}  {status}", c.name, c.cases, c.failures);
        if !c.detail.is_empty() {
            println!("    {}", c.detail);
        }
    }
}

pub fn cmd_validate(args: ValidateArgs) -> CliResult<()> {
    let checks = match &args.model_file {
        None => run_all(args.seed),
        Some(path) => match AffineModel::from_path(path) {
            Ok(model) => {
                let alpha = args.alpha.clone().unwrap_or_else(|| vec![0.0; model.dims().params]);
                model_file_checks(&model, &alpha, args.seed)
            }
            Err(e) => vec![Check { name: format!("model file ({})", e.tag()), cases: 1, failures: 1, detail: e.to_string() }],
        },
    };
    print_checks(&checks);
    match checks.iter().filter(|c| !c.passed()).count() {
        0 => Ok(()),
        n => Err(CliError::ChecksFailed(n)),
    }
}
