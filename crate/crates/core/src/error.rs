use thiserror::Error;

/// Every failure mode surfaced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point is outside the tubular neighbourhood (distance {dist:.3e} >= {width:.3e})")]
    OutOfTube { dist: f64, width: f64 },
    #[error("nearest-point projection is ambiguous (candidates y={y1:.6} and y={y2:.6})")]
    AmbiguousProjection { y1: f64, y2: f64 },
    #[error("displacement sup-norm {sup:.4e} exceeds the admissible bound {bound:.4e}")]
    DisplacementTooLarge { sup: f64, bound: f64 },
    #[error("Newton iteration failed to converge: {0}")]
    NewtonDivergence(String),
    #[error("Jacobian determinant {det:.3e} is not positive")]
    DegenerateJacobian { det: f64 },
    #[error("chart window radius {radius} too large: {reason}")]
    WindowTooLarge { radius: f64, reason: String },
    #[error("power iteration stalled (relative change {rel_change:.3e})")]
    PowerIterationStall { rel_change: f64 },
    #[error("scale N={n} too small: det grad Phi = {det:.6} outside [{lo:.6}, {hi:.6}]")]
    ScaleTooSmall { n: f64, det: f64, lo: f64, hi: f64 },
    #[error("meshing failed: {0}")]
    MeshingFailure(String),
    #[error("coefficient field has {got} samples, mesh has {expected} quadrature points")]
    QuadratureMismatch { expected: usize, got: usize },
    #[error("boundary data not compatible: net flux {flux:.3e}")]
    IncompatibleBoundaryData { flux: f64 },
    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),
    #[error("divergence data has nonzero mean {mean:.3e}")]
    IncompatibleMean { mean: f64 },
    #[error("load vanishes identically")]
    ZeroLoad,
    #[error("divergence data and boundary flux disagree by {mismatch:.3e}")]
    CompatibilityViolation { mismatch: f64 },
    #[error("pressure-constant denominator {value:.3e} below threshold")]
    DegenerateDenominator { value: f64 },
    #[error("trajectories live on different grids: {0}")]
    GridMismatch(String),
    #[error("slab too long: contraction factor {theta:.3} at iteration {iter}")]
    SlabTooLong { theta: f64, iter: usize },
    #[error("geometry degenerated during iteration at level {level}: {reason}")]
    DegeneracyDuringIteration { level: usize, reason: String },
    #[error("fixed-point iteration hit {0} iterations without converging")]
    MaxIterExceeded(usize),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
