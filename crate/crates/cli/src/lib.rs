//! JSON instances, random instances and verification reports for the
//! `ucp-dilation` command.

pub mod report;
pub mod run;
pub mod spec;

pub use report::{CheckEntry, DimsTable, ErrorReport, RunReport};
pub use run::{run_dims, run_random, run_verify};
pub use spec::InstanceSpec;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid spec: {0}")]
    Schema(String),
    #[error(transparent)]
    Core(#[from] ucp_dilation::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Schema(_) => "schema",
            CliError::Core(ucp_dilation::Error::SizeCap { .. }) => "size_cap",
            CliError::Core(
                ucp_dilation::Error::Validation(_)
                | ucp_dilation::Error::ClosureViolation(_)
                | ucp_dilation::Error::NotPsd { .. },
            ) => "invalid_channel",
            CliError::Core(_) => "numerical",
            CliError::Io { .. } => "io",
        }
    }

    pub fn report(&self) -> ErrorReport {
        ErrorReport {
            error: self.kind().into(),
            message: self.to_string(),
        }
    }
}

/// Exit status for a finished run: 0 when everything passed, 1 otherwise.
pub fn exit_code(report: &RunReport) -> i32 {
    if report.passed {
        0
    } else {
        1
    }
}

/// Exit status for input errors.
pub const INPUT_ERROR: i32 = 2;
