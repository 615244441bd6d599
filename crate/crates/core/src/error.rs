use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("channel {channel} is not finite")]
    NonFinite { channel: usize },

    #[error("channel {channel} reads {value} Pa, beyond the +/-{full_scale} Pa sensor range")]
    FullScaleExceeded {
        channel: usize,
        value: f64,
        full_scale: f64,
    },

    #[error("invalid flow state: {0}")]
    InvalidFlowState(String),

    #[error("invalid calibration run: {0}")]
    InvalidRun(String),

    #[error("cutoff {fc} Hz must lie in (0, {nyquist}) for a {fs} Hz sample rate", nyquist = fs / 2.0)]
    InvalidCutoff { fc: f64, fs: f64 },

    #[error("series of length {len} is too short (need at least {min})")]
    TooShort { len: usize, min: usize },

    #[error("q = {q} Pa is below the {q_min} Pa airflow threshold")]
    InsufficientAirflow { q: f64, q_min: f64 },

    #[error("{failed} of {total} frames failed normalization")]
    DeadRun { failed: usize, total: usize },

    #[error("no input runs")]
    EmptyInput,

    #[error("label {label} lies outside the calibration envelope")]
    EnvelopeViolation { label: String },

    #[error("duplicate dataset point (run {run}, frame {frame})")]
    DuplicatePoint { run: usize, frame: usize },

    #[error("design matrix has rank {rank} < {columns}; unidentifiable monomials: {}", unidentifiable.join(", "))]
    RankDeficient {
        rank: usize,
        columns: usize,
        unidentifiable: Vec<String>,
    },

    #[error("dataset of {len} points is too small (need at least {min})")]
    TooSmall { len: usize, min: usize },

    #[error("dataset does not span enough flow conditions: {0}")]
    InsufficientSpan(String),

    #[error("test partition is empty")]
    EmptyTest,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("timestamp at index {index} does not increase")]
    NonMonotonicTime { index: usize },

    #[error("axis {axis} has {len} element(s); standard deviation needs at least 2")]
    AxisTooSmall { axis: &'static str, len: usize },

    #[error("each group needs at least 2 samples (got {a} and {b})")]
    NotEnoughSamples { a: usize, b: usize },

    #[error("angle {0} deg is outside (-90, 90)")]
    AngleOutOfRange(f64),

    #[error("forward speed vx = {vx} m/s is below {min} m/s")]
    ForwardSpeedTooLow { vx: f64, min: f64 },

    #[error("missing columns: {}", .0.join(", "))]
    MissingColumns(Vec<String>),

    #[error("invalid design matrix: {0}")]
    InvalidTensor(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// True for failures of the numerics rather than of the input data.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::RankDeficient { .. } | Error::Numerical(_))
    }
}
