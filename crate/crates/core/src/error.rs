use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A document could not be decoded. `field` names the offending field when
    /// the decoder could identify it.
    #[error("parse error{}: {message}", field.as_ref().map(|f| format!(" in field `{f}`")).unwrap_or_default())]
    Parse {
        field: Option<String>,
        message: String,
    },

    #[error("validation error in `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate fit: columns {columns:?} are constant or collinear")]
    DegenerateFit { columns: Vec<String> },

    #[error("attribution undefined: every raw process power is zero")]
    AttributionUndefined,

    #[error("no data: {0}")]
    NoData(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("planning error: file `{file}` has unknown home machine `{home}`")]
    Planning { file: String, home: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("simulation error: {0}")]
    Simulation(String),

    #[error("i/o error on `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse error classes, used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Internal,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Parse { .. } | Error::Validation { .. } | Error::Config(_) | Error::Io { .. } => {
                ErrorClass::Usage
            }
            Error::Lookup(_)
            | Error::InsufficientData(_)
            | Error::DegenerateFit { .. }
            | Error::AttributionUndefined
            | Error::NoData(_)
            | Error::Planning { .. }
            | Error::Simulation(_) => ErrorClass::Data,
            Error::Contract(_) => ErrorClass::Internal,
        }
    }

    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        let message = e.to_string();
        Error::Parse {
            field: field_from_message(&message),
            message,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let message = e.to_string();
        Error::Parse {
            field: field_from_message(&message),
            message,
        }
    }
}

/// serde reports missing/unknown fields as "... field `name` ..."; pull the name out.
fn field_from_message(message: &str) -> Option<String> {
    let start = message.find("field `")? + "field `".len();
    let len = message[start..].find('`')?;
    Some(message[start..start + len].to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_name_is_extracted_from_serde_messages() {
        let err: Error = serde_json::from_str::<crate::MachineSpec>("{}").unwrap_err().into();
        match err {
            Error::Parse { field, .. } => assert_eq!(field.as_deref(), Some("machine_id")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
