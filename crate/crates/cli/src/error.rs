use optdesign::DesignError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("bad config: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Design {
        context: String,
        #[source]
        source: DesignError,
    },

    #[error("{0}")]
    Verification(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
}

impl CliError {
    /// Process exit status: 2 infeasible, 3 verification failure,
    /// 4 bad config, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Parse { .. } => 4,
            CliError::Verification(_) => 3,
            CliError::Design { source, .. } => match source {
                DesignError::InfeasibleDesign(_)
                | DesignError::InfeasibleMarginal(_)
                | DesignError::InfeasibleInterest(_)
                | DesignError::LpInfeasible(_) => 2,
                DesignError::VerificationFailed(_) => 3,
                DesignError::NotContrasts(_)
                | DesignError::ZeroRowQ1(_)
                | DesignError::EmptyLevels(_)
                | DesignError::InvalidCriterion(_)
                | DesignError::BadStrata(_)
                | DesignError::Dimension(_) => 4,
                _ => 1,
            },
            CliError::Io { .. } => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) trait Context<T> {
    fn context(self, what: &str) -> Result<T>;
}

impl<T> Context<T> for std::result::Result<T, DesignError> {
    fn context(self, what: &str) -> Result<T> {
        self.map_err(|source| CliError::Design {
            context: what.to_string(),
            source,
        })
    }
}

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}
