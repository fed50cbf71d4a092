use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("singular attitude: cos(phi)*cos(theta) = {cos_product:e} is below the guard")]
    SingularAttitude { cos_product: f64 },

    #[error("vertical acceleration command {mu3} leaves less than {margin} m/s^2 below gravity")]
    ThrustSingularity { mu3: f64, margin: f64 },

    #[error("invalid vehicle parameters: {0}")]
    InvalidParams(String),

    #[error("invalid gains: {0}")]
    InvalidGains(String),

    #[error("invalid maneuver: {0}")]
    InvalidManeuver(String),

    #[error("invalid projection config: {0}")]
    InvalidProjection(String),

    #[error("maneuver derivatives inconsistent (max deviation {max_deviation:e} at tau = {at_tau}); offending tau: {offending:?}")]
    InconsistentDerivatives {
        max_deviation: f64,
        at_tau: f64,
        offending: Vec<f64>,
    },

    #[error("projection window is empty around tau = {tau}")]
    EmptyWindow { tau: f64 },

    #[error("closed-loop matrix is not Hurwitz (max real eigenvalue part {max_real})")]
    NonHurwitz { max_real: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("lyapunov linear system is singular")]
    SingularLyapunov,

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("scenarios differ beyond controller mode: {0}")]
    ScenarioMismatch(String),

    #[error("trace error: {0}")]
    Trace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
