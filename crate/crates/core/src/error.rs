use thiserror::Error;

/// Which of the two stage-2 Riccati equations failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiccatiStage {
    Filter,
    Control,
}

impl std::fmt::Display for RiccatiStage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RiccatiStage::Filter => f.write_str("filter"),
            RiccatiStage::Control => f.write_str("control"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("DimensionMismatch: {0}")]
    DimensionMismatch(String),

    #[error("NotSymmetric: {0}")]
    NotSymmetric(String),

    #[error("InvalidInput: {0}")]
    InvalidInput(String),

    #[error("NoStabilizingSolution: {0}")]
    NoStabilizingSolution(String),

    #[error("IllConditioned: stable subspace basis condition number {cond:.3e}")]
    IllConditioned { cond: f64 },

    #[error("NotPositiveDefinite: minimum eigenvalue {min_eig:.3e}")]
    NotPositiveDefinite { min_eig: f64 },

    #[error("ZeroInitialState: the cost bound needs x(0) != 0")]
    ZeroInitialState,

    #[error("NoFeasibleTau: none of the {evaluated} evaluated multipliers was feasible")]
    NoFeasibleTau { evaluated: usize },

    #[error("EpsOutOfRange: channel {channel} has eps = {eps}, need 0 < eps < 1")]
    EpsOutOfRange { channel: usize, eps: f64 },

    #[error("InvalidSaturation: channel {channel} has u_max = {u_max}, need u_max > 0")]
    InvalidSaturation { channel: usize, u_max: f64 },

    #[error("NotStabilizing: A - B_bar*G has spectral abscissa {abscissa:.6e}")]
    NotStabilizing { abscissa: f64 },

    #[error("RiccatiInfeasible({which}): {reason}")]
    RiccatiInfeasible { which: RiccatiStage, reason: String },

    #[error("SpectralRadiusViolation: rho(Y*X) = {rho:.6e} >= tau = {tau:.6e}")]
    SpectralRadiusViolation { rho: f64, tau: f64 },

    #[error("NonFiniteState at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("MissingCompensator: mode saturated_aw needs an antiwindup compensator")]
    MissingCompensator,

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
