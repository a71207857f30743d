use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Launch angle of exactly +-pi/2; the caller resamples.
    #[error("degenerate tangential launch angle {theta}")]
    DegenerateTangent { theta: f64 },

    #[error("no boundary crossing found along the ray up to t = {t_max}")]
    NoRootFound { t_max: f64 },

    /// The first crossing is a double root within tolerance (grazing ray).
    #[error("tangent ray: first root at t = {t} is a double root within tolerance")]
    TangentRay { t: f64 },

    #[error("angular jump {jump} exceeds the bound {bound}")]
    JumpBoundExceeded { jump: f64, bound: f64 },

    #[error("trajectory ends at time {available}, but time {needed} was requested")]
    InsufficientTrajectory { needed: f64, available: f64 },

    #[error("time {t} outside trajectory range [0, {end}]")]
    OutOfRange { t: f64, end: f64 },

    #[error("insufficient samples: needed at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("unknown lemma id `{0}`")]
    UnknownLemma(String),

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("retry limit of {limit} exceeded while resampling a launch angle")]
    RetryLimit { limit: u32 },
}

impl Error {
    /// Errors that a stepper handles by drawing a fresh launch angle.
    pub fn is_resample(&self) -> bool {
        matches!(
            self,
            Error::DegenerateTangent { .. } | Error::TangentRay { .. }
        )
    }
}
