use thiserror::Error;

/// Broad classification used by front-ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// The request itself is malformed (bad dimensions, step counts, trial counts, files).
    Config,
    /// The model or the numerics failed (violated assumptions, singular systems).
    Numerical,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("invalid polyhedron: {0}")]
    InvalidPolyhedron(String),

    #[error("invalid reflection data: {0}")]
    InvalidReflection(String),

    #[error("point lies outside the domain: face {face} violated by {violation:e}")]
    PointOutsideDomain { face: usize, violation: f64 },

    #[error("no active set yields a feasible projection")]
    NoFeasibleProjection,

    #[error("reflection directions on faces {indices:?} are linearly dependent")]
    RankDeficientActiveSet { indices: Vec<usize> },

    #[error("active system for faces {indices:?} is singular (reciprocal condition {rcond:e})")]
    SingularActiveSystem { indices: Vec<usize>, rcond: f64 },

    #[error("active-set enumeration supports at most {max} faces, got {faces}")]
    TooManyFaces { faces: usize, max: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("insufficient trials: {0} (at least 2 are required)")]
    InsufficientTrials(usize),

    #[error("trajectory was simulated without the derivative process")]
    MissingDerivative,

    #[error("likelihood-ratio estimator not applicable: {0}")]
    LrNotApplicable(String),

    #[error("diffusion matrix is singular (reciprocal condition {rcond:e})")]
    SingularDiffusion { rcond: f64 },

    #[error("model check failed: {0}")]
    Model(String),

    #[error("model file: {0}")]
    ModelFile(String),

    #[error("at step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("in trial {trial}: {source}")]
    AtTrial {
        trial: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at_step(self, step: usize) -> Self {
        Error::AtStep { step, source: Box::new(self) }
    }

    pub fn at_trial(self, trial: u64) -> Self {
        Error::AtTrial { trial, source: Box::new(self) }
    }

    /// The innermost error, with step/trial context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } | Error::AtTrial { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self.root() {
            Error::InvalidDims(_)
            | Error::InvalidConfig(_)
            | Error::InsufficientTrials(_)
            | Error::LrNotApplicable(_)
            | Error::ModelFile(_) => ErrorKind::Config,
            _ => ErrorKind::Numerical,
        }
    }

    /// Short machine-readable tag.
    pub fn tag(&self) -> &'static str {
        match self.root() {
            Error::InvalidDims(_) => "invalid-dims",
            Error::InvalidPolyhedron(_) => "invalid-polyhedron",
            Error::InvalidReflection(_) => "invalid-reflection",
            Error::PointOutsideDomain { .. } => "point-outside-domain",
            Error::NoFeasibleProjection => "no-feasible-projection",
            Error::RankDeficientActiveSet { .. } => "rank-deficient-active-set",
            Error::SingularActiveSystem { .. } => "singular-active-system",
            Error::TooManyFaces { .. } => "too-many-faces",
            Error::InvalidConfig(_) => "invalid-config",
            Error::InsufficientTrials(_) => "insufficient-trials",
            Error::MissingDerivative => "missing-derivative",
            Error::LrNotApplicable(_) => "lr-not-applicable",
            Error::SingularDiffusion { .. } => "singular-diffusion",
            Error::Model(_) => "model",
            Error::ModelFile(_) => "model-file",
            Error::AtStep { .. } | Error::AtTrial { .. } => unreachable!("root() strips context"),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
