use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is missing, out of range or inconsistent.
    #[error("invalid configuration field `{field}`: {message}")]
    Config { field: String, message: String },

    /// An event was scheduled before the current clock. This always means a
    /// protocol handler computed a bad timestamp.
    #[error("event scheduled in the past: clock {now}s, requested {at}s")]
    ScheduledInPast { now: f64, at: f64 },

    #[error("event cap of {cap} exceeded at t={clock}s (possible livelock)")]
    EventCapExceeded { cap: u64, clock: f64 },

    #[error("degree range [{min}, {max}] is infeasible for {nodes} nodes")]
    InfeasibleDegree { nodes: usize, min: usize, max: usize },

    #[error("graph is disconnected")]
    Disconnected,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Short machine-readable tag used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config { .. } => "config",
            Error::ScheduledInPast { .. } => "scheduled_in_past",
            Error::EventCapExceeded { .. } => "event_cap_exceeded",
            Error::InfeasibleDegree { .. } => "infeasible_degree",
            Error::Disconnected => "disconnected",
            Error::Io(_) => "io",
            Error::Parse(_) => "parse",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

impl From<toml::de::Error> for Error {
    fn from(err: toml::de::Error) -> Self {
        Error::Parse(err.to_string())
    }
}

impl From<toml::ser::Error> for Error {
    fn from(err: toml::ser::Error) -> Self {
        Error::Parse(err.to_string())
    }
}
