use pposg_nn::NnError;

/// Failure classes with their process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<pposg_core::Error> for CliError {
    fn from(e: pposg_core::Error) -> Self {
        use pposg_core::Error as E;
        let text = e.to_string();
        match e {
            E::Config(_) | E::Contract(_) | E::Json(_) => CliError::Config(text),
            E::Numeric(_) | E::NonFinite(_) => CliError::Numeric(text),
            E::Io(_) => CliError::Io(text),
            E::Nn(nn) => nn.into(),
        }
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        let text = e.to_string();
        match e {
            NnError::NonFinite(_) => CliError::Numeric(text),
            NnError::ShapeMismatch { .. } | NnError::EmptySequence(_) => CliError::Config(text),
            NnError::Format(_) | NnError::MissingTensor(_) | NnError::Io(_) | NnError::Json(_) => {
                CliError::Io(text)
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
