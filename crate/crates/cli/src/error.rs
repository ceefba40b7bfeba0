use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const PARSE: i32 = 2;
    pub const MODEL: i32 = 3;
    pub const CERTIFICATE: i32 = 4;
    pub const NUMERICAL: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("stage dependency error: {0}")]
    Dependency(String),

    #[error(transparent)]
    Core(#[from] kgdecay_core::Error),

    #[error("cannot write output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use kgdecay_core::Error as E;
        match self {
            Self::Config(_) | Self::Dependency(_) => exit::PARSE,
            Self::Output(_) => exit::NUMERICAL,
            Self::Core(e) => match e {
                E::InvalidCoefficient(_) | E::Io(_) | E::Csv(_) => exit::PARSE,
                E::ModelAssumption(_) | E::Domain(_) => exit::MODEL,
                E::NoCertificate { .. } | E::ThresholdSearch { .. } => exit::CERTIFICATE,
                E::Precondition(_) | E::Integration { .. } | E::Frame { .. } | E::Fit(_) => {
                    exit::NUMERICAL
                }
            },
        }
    }
}
