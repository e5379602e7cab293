use std::fmt;

use thiserror::Error;

/// Context attached to a malformed-data error: where in the input it was
/// found, if known.
#[derive(Debug)]
pub struct DataError {
    /// 1-based line number in the source file, when reading line-oriented input.
    pub line: Option<usize>,
    /// Id of the offending instance, when the record itself parsed.
    pub instance: Option<String>,
    pub msg: String,
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.line, &self.instance) {
            (Some(line), _) => write!(f, "data error at line {line}: {}", self.msg),
            (None, Some(id)) => write!(f, "data error for instance {id:?}: {}", self.msg),
            (None, None) => write!(f, "data error: {}", self.msg),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration, rejected before any work starts.
    #[error("config error: {0}")]
    Config(String),

    /// An argument violated an operation's input domain.
    #[error("input error: {0}")]
    InputDomain(String),

    /// Malformed or inconsistent data in a dataset.
    #[error("{0}")]
    Data(DataError),

    /// Training produced a non-finite loss; the run aborts rather than
    /// continuing with poisoned parameters.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Model file written by a newer build than this one can read.
    #[error("model format version {found} is newer than this build supports (up to {supported})")]
    Version { found: u32, supported: u32 },

    /// Model file failed to parse or validate.
    #[error("corrupt model file: {0}")]
    Corrupt(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn input(msg: impl Into<String>) -> Self {
        Error::InputDomain(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(DataError { line: None, instance: None, msg: msg.into() })
    }

    pub fn data_at_line(line: usize, msg: impl Into<String>) -> Self {
        Error::Data(DataError { line: Some(line), instance: None, msg: msg.into() })
    }

    pub fn data_for_instance(id: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Data(DataError { line: None, instance: Some(id.into()), msg: msg.into() })
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn corrupt(msg: impl Into<String>) -> Self {
        Error::Corrupt(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn data_error_names_line_number() {
        let err = Error::data_at_line(17, "sequence is empty");
        assert_eq!(err.to_string(), "data error at line 17: sequence is empty");
    }

    #[test]
    fn data_error_names_instance_id() {
        let err = Error::data_for_instance("J42", "missing label");
        assert_eq!(err.to_string(), "data error for instance \"J42\": missing label");
    }

    #[test]
    fn version_error_reports_both_versions() {
        let err = Error::Version { found: 9, supported: 1 };
        let msg = err.to_string();
        assert!(msg.contains('9') && msg.contains('1'), "{msg}");
    }
}
