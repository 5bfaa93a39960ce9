use std::fmt;

use goldset_core::delta::DeltaError;
use goldset_core::metrics::MetricsError;
use goldset_core::model::ModelError;
use goldset_core::monitor::MonitorError;
use goldset_core::sampler::SamplerError;
use goldset_core::simlab::SimError;
use goldset_core::store::StoreError;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Invalid,
    NotFound,
    Conflict,
    Internal,
}

/// Error surfaced by both the CLI (JSON on stderr, exit code) and the HTTP
/// API (status code, JSON body).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceError {
    pub kind: ErrorKind,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Serialize)]
pub struct ErrorBody<'a> {
    pub code: &'a str,
    pub message: &'a str,
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

impl ServiceError {
    pub fn new(kind: ErrorKind, code: &str, message: impl Into<String>) -> Self {
        ServiceError {
            kind,
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn invalid(code: &str, message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Invalid, code, message)
    }

    pub fn not_found(code: &str, message: impl Into<String>) -> Self {
        Self::new(ErrorKind::NotFound, code, message)
    }

    pub fn conflict(code: &str, message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Conflict, code, message)
    }

    pub fn internal(code: &str, message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Internal, code, message)
    }

    pub fn body(&self) -> ErrorBody<'_> {
        ErrorBody {
            code: &self.code,
            message: &self.message,
        }
    }

    pub fn http_status(&self) -> u16 {
        match self.kind {
            ErrorKind::Invalid => 400,
            ErrorKind::NotFound => 404,
            ErrorKind::Conflict => 409,
            ErrorKind::Internal => 500,
        }
    }

    /// Process exit code. 2 and 3 are reserved for monitor outcomes.
    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Internal => 1,
            ErrorKind::NotFound => 4,
            ErrorKind::Conflict => 5,
            ErrorKind::Invalid => 65,
        }
    }
}

impl fmt::Display for ServiceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for ServiceError {}

impl From<std::io::Error> for ServiceError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::NotFound {
            ServiceError::not_found("file_not_found", e.to_string())
        } else {
            ServiceError::internal("io", e.to_string())
        }
    }
}

impl From<serde_json::Error> for ServiceError {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            ServiceError::internal("io", e.to_string())
        } else {
            ServiceError::invalid("bad_json", e.to_string())
        }
    }
}

impl From<ModelError> for ServiceError {
    fn from(e: ModelError) -> Self {
        ServiceError::invalid(e.code(), e.to_string())
    }
}

impl From<StoreError> for ServiceError {
    fn from(e: StoreError) -> Self {
        let kind = match &e {
            StoreError::NotFound(_) | StoreError::PolicyNotFound(_) => ErrorKind::NotFound,
            StoreError::PolicyImmutable(_) | StoreError::CrossPolicyParent { .. } => ErrorKind::Conflict,
            StoreError::CorruptVersion { .. } | StoreError::Io(_) | StoreError::Json(_) => {
                ErrorKind::Internal
            }
            _ => ErrorKind::Invalid,
        };
        ServiceError::new(kind, e.code(), e.to_string())
    }
}

impl From<MetricsError> for ServiceError {
    fn from(e: MetricsError) -> Self {
        ServiceError::invalid(e.code(), e.to_string())
    }
}

impl From<SamplerError> for ServiceError {
    fn from(e: SamplerError) -> Self {
        ServiceError::invalid(e.code(), e.to_string())
    }
}

impl From<SimError> for ServiceError {
    fn from(e: SimError) -> Self {
        ServiceError::invalid(e.code(), e.to_string())
    }
}

impl From<DeltaError> for ServiceError {
    fn from(e: DeltaError) -> Self {
        match e {
            DeltaError::Store(inner) => inner.into(),
            other => ServiceError::invalid(other.code(), other.to_string()),
        }
    }
}

impl From<MonitorError> for ServiceError {
    fn from(e: MonitorError) -> Self {
        match e {
            MonitorError::Store(inner) => inner.into(),
            MonitorError::Io(inner) => inner.into(),
            other => ServiceError::invalid(other.code(), other.to_string()),
        }
    }
}
