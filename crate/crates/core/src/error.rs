use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("mesh error: {0}")]
    Mesh(String),
    #[error("inverted element {triangle} (signed area {area:e}) at t = {t}")]
    InvertedElement { triangle: usize, area: f64, t: f64 },
    #[error("assembly error: {0}")]
    Assembly(String),
    #[error("solver did not converge: worst residual {worst_residual:e} after {iterations} Krylov vectors")]
    NotConverged {
        worst_residual: f64,
        iterations: usize,
    },
    #[error("argument error: {0}")]
    Argument(String),
    #[error("point ({x}, {y}) lies outside the mesh")]
    OutsideDomain { x: f64, y: f64 },
    #[error("tracking error: {0}")]
    Tracking(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    /// Stable machine-readable category, used by the CLI error line.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Mesh(_) | Error::InvertedElement { .. } => "mesh",
            Error::Assembly(_) => "assembly",
            Error::NotConverged { .. } => "convergence",
            Error::Argument(_) => "argument",
            Error::OutsideDomain { .. } => "outside-domain",
            Error::Tracking(_) => "tracking",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Format(_) => "format",
        }
    }

    pub(crate) fn annotate(self, context: &str) -> Error {
        match self {
            Error::Mesh(m) => Error::Mesh(format!("{context}: {m}")),
            Error::Domain(m) => Error::Domain(format!("{context}: {m}")),
            Error::Tracking(m) => Error::Tracking(format!("{context}: {m}")),
            Error::Assembly(m) => Error::Assembly(format!("{context}: {m}")),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
