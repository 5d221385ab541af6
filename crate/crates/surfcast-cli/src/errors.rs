//! Exit-code taxonomy: usage (2), data (3), numerical (4).

use std::fmt;

/// A command failure with a definite process exit code.
///
/// Usage errors are malformed invocations (bad flag values, unknown config
/// keys, missing required options). Data errors are well-formed invocations
/// against broken inputs (corrupt files, inconsistent shapes). Numerical
/// errors are structurally valid runs that the numerics could not complete
/// (degenerate data, singular systems, non-convergence).
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, msg) = match self {
            CliError::Usage(m) => ("usage error", m),
            CliError::Data(m) => ("data error", m),
            CliError::Numeric(m) => ("numerical failure", m),
        };
        write!(f, "{kind}: {msg}")
    }
}

impl std::error::Error for CliError {}

impl From<surfcast::Error> for CliError {
    fn from(e: surfcast::Error) -> Self {
        match e {
            surfcast::Error::Dimension { .. } | surfcast::Error::Argument { .. } => {
                CliError::Data(e.to_string())
            }
            surfcast::Error::Degenerate { .. }
            | surfcast::Error::Singular { .. }
            | surfcast::Error::Numerical { .. } => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(format!("io: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(format!("json: {e}"))
    }
}

/// Attaches a file path to an I/O-ish error.
pub trait PathContext<T> {
    fn at_path(self, path: &std::path::Path) -> CliResult<T>;
}

impl<T, E: Into<CliError>> PathContext<T> for Result<T, E> {
    fn at_path(self, path: &std::path::Path) -> CliResult<T> {
        self.map_err(|e| {
            let inner = e.into();
            let msg = match &inner {
                CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m.clone(),
            };
            match inner {
                CliError::Usage(_) => CliError::Usage(format!("{}: {msg}", path.display())),
                CliError::Data(_) => CliError::Data(format!("{}: {msg}", path.display())),
                CliError::Numeric(_) => CliError::Numeric(format!("{}: {msg}", path.display())),
            }
        })
    }
}
