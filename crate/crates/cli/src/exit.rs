use std::process::ExitCode;

use detkit::Error;

/// Process exit codes, one per documented failure class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Class {
    Internal = 1,
    Usage = 2,
    GradcheckFailed = 3,
    MissingWeights = 4,
    BadImage = 5,
    VersionMismatch = 6,
    CorruptFile = 7,
    Diverged = 8,
    Parse = 9,
    Io = 10,
}

#[derive(Debug)]
pub struct Failure {
    pub class: Class,
    pub message: String,
}

impl Failure {
    pub fn new(class: Class, message: impl Into<String>) -> Self {
        Failure {
            class,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Failure::new(Class::Usage, message)
    }

    pub fn image(message: impl Into<String>) -> Self {
        Failure::new(Class::BadImage, message)
    }

    pub fn missing_weights(message: impl Into<String>) -> Self {
        Failure::new(Class::MissingWeights, message)
    }

    /// Re-labels a library error raised while reading an image.
    pub fn from_image(path: &std::path::Path, e: Error) -> Self {
        Failure::image(format!("cannot read image {}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.class as u8)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let class = match &e {
            Error::Version { .. } => Class::VersionMismatch,
            Error::BadMagic { .. } | Error::Checksum { .. } | Error::Truncated(_) => Class::CorruptFile,
            Error::Divergence { .. } | Error::NonFinite(_) => Class::Diverged,
            Error::Parse { .. } | Error::Json(_) => Class::Parse,
            Error::Config(_) => Class::Usage,
            Error::Io(_) => Class::Io,
            Error::Invalid(_) => Class::Internal,
        };
        Failure::new(class, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(Class::Io, e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::new(Class::Parse, e.to_string())
    }
}
