use okret_core::genpipeline::AdapterError;

/// Bad invocation: missing or contradictory arguments, unreadable config.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Ok = 0,
    Usage = 1,
    Data = 2,
    Adapter = 3,
}

impl ExitCode {
    pub fn label(self) -> &'static str {
        match self {
            ExitCode::Ok => "ok",
            ExitCode::Usage => "usage error",
            ExitCode::Data => "data error",
            ExitCode::Adapter => "adapter error",
        }
    }
}

/// Category of a failed command, taken from the first recognized cause.
pub fn classify(err: &anyhow::Error) -> ExitCode {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return ExitCode::Usage;
        }
        if cause.is::<AdapterError>() {
            return ExitCode::Adapter;
        }
        if let Some(e) = cause.downcast_ref::<okret_core::Error>() {
            return if e.is_adapter() { ExitCode::Adapter } else { ExitCode::Data };
        }
    }
    ExitCode::Data
}
