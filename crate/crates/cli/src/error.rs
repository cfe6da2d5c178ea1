use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad configuration or missing inputs (exit 2).
    Config,
    /// Malformed or inconsistent data (exit 3).
    Data,
    /// Anything else that failed while running (exit 4).
    Runtime,
}

/// A failed stage: which stage, what class of failure, and why.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineError {
    pub stage: &'static str,
    pub kind: ErrorKind,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: &'static str, kind: ErrorKind, message: impl fmt::Display) -> Self {
        Self {
            stage,
            kind,
            message: message.to_string(),
        }
    }

    pub fn config(stage: &'static str, message: impl fmt::Display) -> Self {
        Self::new(stage, ErrorKind::Config, message)
    }

    pub fn data(stage: &'static str, message: impl fmt::Display) -> Self {
        Self::new(stage, ErrorKind::Data, message)
    }

    pub fn runtime(stage: &'static str, message: impl fmt::Display) -> Self {
        Self::new(stage, ErrorKind::Runtime, message)
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Runtime => 4,
        }
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.message)
    }
}

impl std::error::Error for PipelineError {}
