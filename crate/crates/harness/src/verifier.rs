//! How the mock controller reaches the verification service.

use std::sync::Arc;
use std::time::Duration;

use nbguard_core::aaa::{Verdict, VerificationRequest};
use nbguard_core::assets::{self, ApplicationAsset, RoleAsset};
use nbguard_gateway::client::{ClientError, GatewayClient};
use nbguard_gateway::service::ConflictNotice;
use nbguard_gateway::{ApiError, Gateway, Session};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("gateway: {0}")]
    Gateway(#[from] ApiError),
    #[error("client: {0}")]
    Client(#[from] ClientError),
}

pub trait Verifier: Send + Sync {
    fn verify(&self, req: &VerificationRequest) -> Result<Verdict, VerifyError>;

    fn report_conflict(&self, notice: &ConflictNotice) -> Result<Verdict, VerifyError>;

    /// Role priority of an application, used to tag the rules it installs.
    /// Verifiers without read access to roles report `None`.
    fn role_priority(&self, _app_id: &str) -> Option<i64> {
        None
    }
}

/// Calls the gateway service directly under a controller session.
pub struct InProcess {
    gateway: Arc<Gateway>,
    session: Session,
}

impl InProcess {
    pub fn new(gateway: Arc<Gateway>, session: Session) -> Self {
        InProcess { gateway, session }
    }
}

impl Verifier for InProcess {
    fn verify(&self, req: &VerificationRequest) -> Result<Verdict, VerifyError> {
        Ok(self.gateway.verify(&self.session, req)?)
    }

    fn report_conflict(&self, notice: &ConflictNotice) -> Result<Verdict, VerifyError> {
        Ok(self.gateway.report_conflict(&self.session, notice)?)
    }

    fn role_priority(&self, app_id: &str) -> Option<i64> {
        self.gateway.ledger().with_state(|s| {
            let app = assets::load::<ApplicationAsset>(s, app_id)?;
            assets::load::<RoleAsset>(s, &app.role_id).map(|r| r.priority)
        })
    }
}

/// Calls a gateway over HTTP with an authenticated client.
pub struct Http {
    client: GatewayClient,
}

impl Http {
    pub fn new(client: GatewayClient) -> Self {
        Http { client }
    }
}

impl Verifier for Http {
    fn verify(&self, req: &VerificationRequest) -> Result<Verdict, VerifyError> {
        Ok(self.client.verify(req)?)
    }

    fn report_conflict(&self, notice: &ConflictNotice) -> Result<Verdict, VerifyError> {
        Ok(self.client.report_conflict(notice)?)
    }
}

/// Adds a fixed latency in front of every call, standing in for the time
/// a real ledger takes to commit.
pub struct Delayed<V> {
    inner: V,
    delay: Duration,
}

impl<V: Verifier> Delayed<V> {
    pub fn new(inner: V, delay: Duration) -> Self {
        Delayed { inner, delay }
    }
}

impl<V: Verifier> Verifier for Delayed<V> {
    fn verify(&self, req: &VerificationRequest) -> Result<Verdict, VerifyError> {
        std::thread::sleep(self.delay);
        self.inner.verify(req)
    }

    fn report_conflict(&self, notice: &ConflictNotice) -> Result<Verdict, VerifyError> {
        std::thread::sleep(self.delay);
        self.inner.report_conflict(notice)
    }

    fn role_priority(&self, app_id: &str) -> Option<i64> {
        self.inner.role_priority(app_id)
    }
}

impl<V: Verifier + ?Sized> Verifier for Arc<V> {
    fn verify(&self, req: &VerificationRequest) -> Result<Verdict, VerifyError> {
        (**self).verify(req)
    }

    fn report_conflict(&self, notice: &ConflictNotice) -> Result<Verdict, VerifyError> {
        (**self).report_conflict(notice)
    }

    fn role_priority(&self, app_id: &str) -> Option<i64> {
        (**self).role_priority(app_id)
    }
}
