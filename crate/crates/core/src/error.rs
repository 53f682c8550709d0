use thiserror::Error;

/// Every failure the estimator, the generator and the CLI can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("malformed record: {0}")]
    Parse(String),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("non-finite or out-of-range value in field `{0}`")]
    Range(String),
    #[error("line {line}: {source}")]
    AtLine { line: usize, source: Box<Error> },
    #[error("invalid configuration field `{0}`")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("window order violated: {0}")]
    WindowOrder(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("doppler {doppler} outside the Nyquist band ±{nyquist}")]
    AliasDomain { doppler: f64, nyquist: f64 },
    #[error("scan captured at {t_capture} precedes window start {window_start}")]
    StaleScan { t_capture: f64, window_start: f64 },
    #[error("event at {t} precedes window start {window_start}")]
    StaleEvent { t: f64, window_start: f64 },
    #[error("longitudinal speed {vx} below the slip-angle gate {gate}")]
    Gate { vx: f64, gate: f64 },
    #[error("non-positive vertical load (front {fzf} N, rear {fzr} N)")]
    LoadDomain { fzf: f64, fzr: f64 },
    #[error("steering angle {0} rad too close to ±90°")]
    SteeringDomain(f64),
    #[error("truth simulation diverged at t = {t} s")]
    TruthDivergence { t: f64 },
    #[error("time ranges do not overlap: {0}")]
    Alignment(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    pub fn at_line(self, line: usize) -> Error {
        Error::AtLine {
            line,
            source: Box::new(self),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Io(_) => 2,
            Error::AtLine { source, .. } => source.exit_code(),
            Error::Parse(_) | Error::Schema(_) | Error::Range(_) | Error::Config(_) => 2,
            _ => 3,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
