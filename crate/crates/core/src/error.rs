use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of a physical formula.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    /// Input power above the harvester's damage threshold.
    #[error("harvester overload: {p_in_dbm} dBm exceeds the {max_input_dbm} dBm input limit")]
    Overload { p_in_dbm: f64, max_input_dbm: f64 },

    #[error("numeric divergence at step {step} (t = {t_s} s)")]
    Divergence { step: u64, t_s: f64 },

    #[error("charge efficiency undefined: no RF energy entered the harvester")]
    ZeroInputEnergy,

    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn parse(origin: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            origin: origin.into(),
            message: message.to_string(),
        }
    }
}
