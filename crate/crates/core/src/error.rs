use thiserror::Error;

/// Everything that can go wrong in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid size {0} is odd")]
    OddSize(usize),
    #[error("grid size {0} is below the minimum of 16")]
    TooSmall(usize),
    #[error("half-length {0} must be positive")]
    NonPositiveLength(f64),
    #[error("field lives on a different grid")]
    GridMismatch,
    #[error("sobolev order {0} below -1 is not supported")]
    SobolevOrder(f64),
    #[error("parameters forbidden: {0}")]
    ParamsForbidden(String),
    #[error("no convergence after {iterations} iterations (last residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("iterates collapsed to zero")]
    CollapseToZero,
    #[error("iterates converged to the constant state")]
    ConstantState,
    #[error("weinstein functional has a vanishing denominator")]
    ZeroDenominator,
    #[error("tail below noise floor ({0:.3e}); decay fit not applicable")]
    TailBelowNoise(f64),
    #[error("operator is not symmetric (defect {0:.3e})")]
    AsymmetricInput(f64),
    #[error("restricted system is ill conditioned (condition number {0:.3e})")]
    IllConditioned(f64),
    #[error("right-hand side lies in the kernel")]
    DegenerateRhs,
    #[error("spectral parameter must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("alpha = {0} outside (1/3, 1)")]
    AlphaOutOfRange(f64),
    #[error("growing-mode methods disagree: direct {direct:.6e}, root-find {rootfind:.6e}")]
    MethodDisagreement { direct: f64, rootfind: f64 },
    #[error("eigenvalue near the kernel is not real (imaginary part {0:.3e})")]
    ComplexNearKernelEigenvalue(f64),
    #[error("moving-kernel fit unstable: {0}")]
    FitUnstable(String),
    #[error("solver failed at c = {c}: {source}")]
    SolverFailure { c: f64, source: Box<Error> },
    #[error("blow-up detected at t = {0}")]
    BlowupDetected(f64),
    #[error("non-finite sample at t = {0}")]
    NonFiniteSample(f64),
    #[error("time step {dt} violates the stability envelope ({value:.1} > 40)")]
    StepTooLarge { dt: f64, value: f64 },
    #[error("critical diagnostics need alpha = 1/2 and p = 1")]
    WrongRegime,
    #[error("fit window is empty")]
    WindowEmpty,
    #[error("iterative solver stalled: {0}")]
    Stalled(String),
    #[error("bad field file: {0}")]
    BadFieldFile(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
