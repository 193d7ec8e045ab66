use nbguard_core::aaa::AaaError;
use nbguard_core::assets::AssetError;
use nbguard_core::ledger::{LedgerError, SubmitError};
use thiserror::Error;

/// Failure of a gateway call, mapped onto an HTTP status by the router.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ApiError {
    #[error("{0}")]
    Unauthenticated(String),
    #[error("{0}")]
    Forbidden(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> u16 {
        match self {
            ApiError::Unauthenticated(_) => 401,
            ApiError::Forbidden(_) => 403,
            ApiError::BadRequest(_) => 400,
            ApiError::NotFound(_) => 404,
            ApiError::Conflict(_) => 409,
            ApiError::Internal(_) => 500,
        }
    }

    /// Authentication and authorization failures answer with a DENY body.
    pub fn is_denial(&self) -> bool {
        matches!(self, ApiError::Unauthenticated(_) | ApiError::Forbidden(_))
    }
}

impl From<AssetError> for ApiError {
    fn from(e: AssetError) -> Self {
        let message = e.to_string();
        match e {
            AssetError::Denied { .. } => ApiError::Forbidden(message),
            AssetError::NotFound { .. } => ApiError::NotFound(message),
            AssetError::DuplicateId(_)
            | AssetError::PermissionInUse { .. }
            | AssetError::IllegalTransition { .. }
            | AssetError::LogExists(_) => ApiError::Conflict(message),
            AssetError::Malformed(_)
            | AssetError::InvalidId(_)
            | AssetError::InvalidTrustIndex(_)
            | AssetError::TrustNotLowered { .. } => ApiError::BadRequest(message),
        }
    }
}

impl From<LedgerError> for ApiError {
    fn from(e: LedgerError) -> Self {
        if e.is_mvcc_conflict() {
            return ApiError::Conflict(format!("{e}; retry"));
        }
        match e {
            LedgerError::UnknownSubmitter(_) | LedgerError::InvalidSignature => {
                ApiError::Forbidden(e.to_string())
            }
            _ => ApiError::Internal(e.to_string()),
        }
    }
}

impl From<SubmitError<AssetError>> for ApiError {
    fn from(e: SubmitError<AssetError>) -> Self {
        match e {
            SubmitError::Ledger(e) => e.into(),
            SubmitError::Chaincode(e) => e.into(),
        }
    }
}

impl From<AaaError> for ApiError {
    fn from(e: AaaError) -> Self {
        match e {
            AaaError::Ledger(e) => e.into(),
            AaaError::Chaincode(e) => e.into(),
            AaaError::NotAdmin(_) => ApiError::Forbidden(e.to_string()),
            AaaError::UnknownApplication(_) => ApiError::NotFound(e.to_string()),
            AaaError::Contention(_) => ApiError::Conflict(e.to_string()),
        }
    }
}
