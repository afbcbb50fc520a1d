use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("negative or non-finite delay: {0}")]
    InvalidDelay(f64),
    #[error("distance must be positive, got {0} m")]
    InvalidDistance(f64),
    #[error("spreading factor {0} outside 7..=12")]
    InvalidSpreadingFactor(u8),
    #[error("unsupported code rate index {0}")]
    InvalidCodeRate(u8),
    #[error("no error-model entry for SF{sf} CR{cr}")]
    UnknownErrorModel { sf: u8, cr: u8 },
    #[error("PHY payload of {0} bytes is below the 13 byte minimum")]
    PayloadTooShort(usize),
    #[error("bit count must be non-negative, got {0}")]
    NegativeBitCount(f64),
    #[error("length mismatch: expected a multiple of {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("value {value} out of range 0..{limit}")]
    OutOfRange { value: u32, limit: u32 },
    #[error("curve fit needs at least {needed} usable points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("degenerate fit input: {0}")]
    DegenerateFit(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid state transition {from} -> {to}")]
    InvalidTransition { from: String, to: String },
    #[error("unsupported gateway count {0}, expected 1, 2 or 4")]
    UnsupportedGatewayCount(usize),
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("channel {0} Hz is not in any known sub-band")]
    UnknownSubBand(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}
