use thiserror::Error;

/// Errors raised by construction, evaluation and export of blended surfaces.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AbcError {
    #[error("invalid knot vector: {0}")]
    InvalidKnots(String),

    #[error("coefficient grid is {got_u}x{got_v}, basis needs {want_u}x{want_v}")]
    CoefficientShape {
        got_u: usize,
        got_v: usize,
        want_u: usize,
        want_v: usize,
    },

    #[error("parameter {value} outside domain [{lo}, {hi}]")]
    OutsideDomain { value: f64, lo: f64, hi: f64 },

    #[error("knot multiplicity would exceed degree + 1 at {0}")]
    MultiplicityOverflow(f64),

    #[error("splines are defined over different rectangles")]
    DomainMismatch,

    #[error("composition image straddles knot {knot} of the outer spline ({direction} direction)")]
    StraddlesKnot { knot: f64, direction: char },

    #[error("degenerate cell [{0}, {1}] x [{2}, {3}]")]
    DegenerateCell(f64, f64, f64, f64),

    #[error("degenerate frame: |d1 x d2| = {0:e}")]
    DegenerateFrame(f64),

    #[error("Newton iteration did not converge, last residual {residual:e}")]
    NoConvergence { residual: f64 },

    #[error("singular Jacobian while tracing at u = {u}")]
    TraceSingular { u: f64 },

    #[error("infeasible equality constraints {indices:?} (residual {residual:e})")]
    Infeasible { indices: Vec<usize>, residual: f64 },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("positivity screen failed for factor {factor} near ({x:.4}, {y:.4}): value {value:e}")]
    Positivity {
        factor: usize,
        x: f64,
        y: f64,
        value: f64,
    },

    #[error("index classification still overlaps after {rounds} refinement rounds")]
    RefinementExhausted { rounds: usize },

    #[error("stripe width {0} covers the whole domain, no plateau possible")]
    StripeCoversDomain(f64),

    #[error("weight {weight} does not vanish on segment {segment}: residual {residual:e}")]
    Implicitness {
        weight: String,
        segment: usize,
        residual: f64,
    },

    #[error("stripe topology: {0}")]
    StripeTopology(String),

    #[error("trim loop: {0}")]
    TrimLoop(String),

    #[error("degenerate weights at ({0:.6}, {1:.6}): denominator {2:e}")]
    DegenerateWeights(f64, f64, f64),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("partition: {0}")]
    Partition(String),

    #[error("i/o: {0}")]
    Io(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, AbcError>;

impl From<std::io::Error> for AbcError {
    fn from(e: std::io::Error) -> Self {
        AbcError::Io(e.to_string())
    }
}
