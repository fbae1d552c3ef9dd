use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numerical abort: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            Self::Config(_) => ExitCode::from(2),
            Self::Numerical(_) => ExitCode::from(3),
            Self::Io(_) | Self::Other(_) => ExitCode::FAILURE,
        }
    }
}

impl From<gimcmc::Error> for CliError {
    fn from(e: gimcmc::Error) -> Self {
        use gimcmc::Error as E;
        match e {
            e if e.is_numerical() => Self::Numerical(e.to_string()),
            E::Io(e) => Self::Io(e),
            e @ E::Csv(_) => Self::Other(e.to_string()),
            e => Self::Config(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Other(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Other(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_errors_map_to_exit_classes() {
        assert!(matches!(
            CliError::from(gimcmc::Error::NonFiniteState { iteration: 3 }),
            CliError::Numerical(_)
        ));
        assert!(matches!(
            CliError::from(gimcmc::Error::Numerical("x".into())),
            CliError::Numerical(_)
        ));
        assert!(matches!(
            CliError::from(gimcmc::Error::InvalidParameter("x".into())),
            CliError::Config(_)
        ));
        assert!(matches!(
            CliError::from(gimcmc::Error::Dataset("x".into())),
            CliError::Config(_)
        ));
        assert_eq!(
            CliError::Numerical("x".into()).exit_code(),
            ExitCode::from(3)
        );
        assert_eq!(CliError::Config("x".into()).exit_code(), ExitCode::from(2));
    }
}
