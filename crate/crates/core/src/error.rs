use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("orbit escaped at t = {t:.6} (z = {z:.6e}, p = {p:.6e})")]
    Escaped { t: f64, z: f64, p: f64 },

    #[error("all {n_orbits} orbits escaped")]
    AllEscaped { n_orbits: usize },

    #[error("{escaped} of {total} particles escaped (limit is half the ensemble)")]
    EnsembleLost { escaped: usize, total: usize },

    #[error("wavepacket clipped by the grid: edge amplitude ratio {edge_ratio:.3e}")]
    PacketClipped { edge_ratio: f64 },

    #[error("absorbed probability {absorbed:.3e} exceeds limit {limit:.3e} at t = {t:.3}")]
    AbsorbedTooMuch { absorbed: f64, limit: f64, t: f64 },

    #[error("operator is not unitary: column norm excess {excess:.3e}")]
    NonUnitary { excess: f64 },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("fit rejected: {0}")]
    Fit(String),

    #[error("analysis rejected: {0}")]
    Analysis(String),

    #[error("configuration invalid:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name: name.into(), reason: reason.into() }
    }

    /// Short machine-readable category, used for CLI diagnostics and exit codes.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid-parameter",
            Error::Escaped { .. } | Error::AllEscaped { .. } | Error::EnsembleLost { .. } => {
                "escape"
            }
            Error::PacketClipped { .. } | Error::AbsorbedTooMuch { .. } => "grid",
            Error::NonUnitary { .. } | Error::Eigen(_) => "spectrum",
            Error::Fit(_) | Error::Analysis(_) => "analysis",
            Error::Config(_) => "config",
            Error::Format(_) => "format",
            Error::Io(_) | Error::Csv(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 2,
            "invalid-parameter" => 3,
            "escape" => 4,
            "grid" => 5,
            "spectrum" => 6,
            "analysis" => 7,
            "format" => 8,
            _ => 1,
        }
    }
}

pub(crate) fn require_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite and > 0, got {value}")))
    }
}

pub(crate) fn require_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite, got {value}")))
    }
}
