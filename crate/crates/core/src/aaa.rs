//! Authentication, authorization and accounting of northbound requests.
//!
//! [`authenticate`] is the application-side check (REST credentials plus an
//! ISSUED app-controller token). [`Aaa::authorize`] is the controller-side
//! verification: it evaluates the five criteria against the committed
//! state, lowers the application's trust index on a violation, and commits
//! exactly one log entry per decision.

use std::collections::HashMap;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::assets::tx::{AddLogEntry, UpdateAppTrustIndex};
use crate::assets::{
    self, Action, ApplicationAsset, AssetChaincode, AssetError, AssetTx, ControllerAsset,
    LogEntryAsset, PermissionAsset, TokenAsset, TokenStatus,
};
use crate::clock::{Clock, SystemClock};
use crate::identity::Identity;
use crate::ledger::{Ledger, LedgerError, SubmitError, WorldState};
use crate::policy::{effective_permissions, HttpMethod, TrustPolicy};

pub const MSG_AUTH_REQUIRED: &str = "Authorization required";
pub const MSG_INVALID_JWT: &str = "Invalid access token";
pub const MSG_AUTHENTICATED: &str = "Authenticated";
pub const MSG_NO_TOKEN: &str = "No token for this controller";
pub const MSG_TOKEN_NEW: &str = "Token is not issued";
pub const MSG_TOKEN_EXPIRED: &str = "Token is expired";
pub const MSG_UNKNOWN_CONTROLLER: &str = "Controller is not registered";
pub const MSG_CONTROLLER_MISMATCH: &str = "Token belongs to another controller";
pub const MSG_UNKNOWN_TOKEN: &str = "Unknown token";
pub const MSG_UNKNOWN_APPLICATION: &str = "Unknown application";
pub const MSG_UNAUTHORIZED: &str = "Unauthorized";
pub const MSG_LOW_TRUST: &str = "Trust index below permission threshold";
pub const MSG_ACCEPTED: &str = "Accepted";
pub const MSG_QUOTA: &str = "Quota exceeded";

/// Attempts for a trust update that loses an MVCC race.
const PENALTY_ATTEMPTS: usize = 32;

#[derive(Debug, Error)]
pub enum AaaError {
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Chaincode(#[from] AssetError),
    #[error("{0} is not an administrator")]
    NotAdmin(String),
    #[error("application {0:?} not found")]
    UnknownApplication(String),
    #[error("trust update for {0} kept conflicting")]
    Contention(String),
}

impl From<SubmitError<AssetError>> for AaaError {
    fn from(e: SubmitError<AssetError>) -> Self {
        match e {
            SubmitError::Ledger(e) => AaaError::Ledger(e),
            SubmitError::Chaincode(e) => AaaError::Chaincode(e),
        }
    }
}

/// State of the caller's REST access token after signature and expiry
/// checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum JwtCheck {
    Missing,
    Invalid,
    Valid { subject: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuthDecision {
    pub action: Action,
    pub message: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub token: Option<TokenAsset>,
}

impl AuthDecision {
    fn deny(message: &'static str, token: Option<TokenAsset>) -> Self {
        AuthDecision {
            action: Action::Deny,
            message,
            token,
        }
    }
}

/// REST-level authentication: a valid JWT and an uploaded identity card.
/// Returns the authenticated participant id.
pub fn authenticate_api(jwt: &JwtCheck, has_wallet: bool) -> Result<&str, &'static str> {
    match jwt {
        JwtCheck::Missing => Err(MSG_AUTH_REQUIRED),
        JwtCheck::Invalid => Err(MSG_INVALID_JWT),
        JwtCheck::Valid { .. } if !has_wallet => Err(MSG_AUTH_REQUIRED),
        JwtCheck::Valid { subject } => Ok(subject),
    }
}

/// Most recent token for the pair: the live one, otherwise the newest
/// expired one.
pub fn latest_token(state: &WorldState, application_id: &str, controller_id: &str) -> Option<TokenAsset> {
    assets::live_token(state, application_id, controller_id).or_else(|| {
        assets::list::<TokenAsset>(state)
            .into_iter()
            .filter(|t| t.application_id == application_id && t.controller_id == controller_id)
            .max_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)))
    })
}

/// Application-to-controller authentication. ACCEPT iff the REST
/// credentials belong to `app_id` and its token for `controller_id` is
/// ISSUED.
pub fn authenticate(
    state: &WorldState,
    app_id: &str,
    jwt: &JwtCheck,
    has_wallet: bool,
    controller_id: &str,
) -> AuthDecision {
    match authenticate_api(jwt, has_wallet) {
        Err(message) => return AuthDecision::deny(message, None),
        Ok(subject) if subject != app_id => return AuthDecision::deny(MSG_INVALID_JWT, None),
        Ok(_) => {}
    }
    let Some(token) = latest_token(state, app_id, controller_id) else {
        return AuthDecision::deny(MSG_NO_TOKEN, None);
    };
    match token.status {
        TokenStatus::New => AuthDecision::deny(MSG_TOKEN_NEW, Some(token)),
        TokenStatus::Expired => AuthDecision::deny(MSG_TOKEN_EXPIRED, Some(token)),
        TokenStatus::Issued => AuthDecision {
            action: Action::Accept,
            message: MSG_AUTHENTICATED,
            token: Some(token),
        },
    }
}

/// Body of a controller's verification call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct VerificationRequest {
    #[serde(rename = "$class", default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
    pub url: String,
    #[serde(default)]
    pub data: String,
    pub token_id: String,
    pub http_method: HttpMethod,
    pub permission_id: String,
}

impl VerificationRequest {
    pub fn new(
        url: impl Into<String>,
        data: impl Into<String>,
        token_id: impl Into<String>,
        http_method: HttpMethod,
        permission_id: impl Into<String>,
    ) -> Self {
        VerificationRequest {
            class: None,
            url: url.into(),
            data: data.into(),
            token_id: token_id.into(),
            http_method,
            permission_id: permission_id.into(),
        }
    }
}

/// The authorization criteria, in evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum Criterion {
    RegisteredController,
    TokenController,
    IssuedTokenAndApplication,
    GrantedPermission,
    TrustThreshold,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evaluation {
    pub action: Action,
    pub message: String,
    pub failed: Option<Criterion>,
    /// The token's application when it exists.
    pub application: Option<ApplicationAsset>,
    pub penalize: bool,
}

impl Evaluation {
    fn accept(app: ApplicationAsset) -> Self {
        Evaluation {
            action: Action::Accept,
            message: MSG_ACCEPTED.to_owned(),
            failed: None,
            application: Some(app),
            penalize: false,
        }
    }

    fn deny(criterion: Criterion, message: &str, app: Option<ApplicationAsset>, penalize: bool) -> Self {
        Evaluation {
            action: Action::Deny,
            message: message.to_owned(),
            failed: Some(criterion),
            application: app,
            penalize,
        }
    }
}

/// Pure evaluation of the five criteria against `state`.
///
/// Only criteria 2, 4 and 5 carry a trust penalty. A missing, NEW or
/// EXPIRED token is an authentication failure, and a request relayed by an
/// unregistered controller says nothing about the application.
pub fn evaluate(
    policy: &TrustPolicy,
    state: &WorldState,
    controller_id: &str,
    req: &VerificationRequest,
) -> Evaluation {
    use Criterion::*;
    if assets::load::<ControllerAsset>(state, controller_id).is_none() {
        return Evaluation::deny(RegisteredController, MSG_UNKNOWN_CONTROLLER, None, false);
    }
    let Some(token) = assets::load::<TokenAsset>(state, &req.token_id) else {
        return Evaluation::deny(IssuedTokenAndApplication, MSG_UNKNOWN_TOKEN, None, false);
    };
    let app = assets::load::<ApplicationAsset>(state, &token.application_id);
    if token.controller_id != controller_id {
        let penalize = app.is_some();
        return Evaluation::deny(TokenController, MSG_CONTROLLER_MISMATCH, app, penalize);
    }
    let message = match token.status {
        TokenStatus::Issued => None,
        TokenStatus::New => Some(MSG_TOKEN_NEW),
        TokenStatus::Expired => Some(MSG_TOKEN_EXPIRED),
    };
    if let Some(message) = message {
        return Evaluation::deny(IssuedTokenAndApplication, message, app, false);
    }
    let Some(app) = app else {
        return Evaluation::deny(IssuedTokenAndApplication, MSG_UNKNOWN_APPLICATION, None, false);
    };
    let granted = assets::load::<crate::assets::RoleAsset>(state, &app.role_id)
        .is_some_and(|role| role.permissions.contains(&req.permission_id));
    let permission = assets::load::<PermissionAsset>(state, &req.permission_id);
    let Some(permission) = permission.filter(|_| granted) else {
        return Evaluation::deny(GrantedPermission, MSG_UNAUTHORIZED, Some(app), true);
    };
    if !policy.is_active(&permission, app.trust_index) {
        return Evaluation::deny(TrustThreshold, MSG_LOW_TRUST, Some(app), true);
    }
    debug_assert!(effective_permissions(policy, state, &app).contains(&permission.id));
    Evaluation::accept(app)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Verdict {
    pub action: Action,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub application_id: Option<String>,
    /// Trust index after any penalty.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trust_after: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_criterion: Option<String>,
    pub log_id: String,
}

impl Verdict {
    pub fn accepted(&self) -> bool {
        self.action == Action::Accept
    }
}

/// Verification service bound to a ledger running the asset chaincode.
pub struct Aaa {
    ledger: Arc<Ledger<AssetChaincode>>,
    policy: Arc<TrustPolicy>,
    admin: Identity,
    clock: Arc<dyn Clock>,
    /// Last log timestamp per controller. Held across the commit so that a
    /// controller's entries commit in timestamp order.
    log_clocks: Mutex<HashMap<String, Arc<Mutex<DateTime<Utc>>>>>,
}

impl Aaa {
    /// `admin` signs log entries for requests whose controller is not
    /// registered, since no controller credential may record them.
    pub fn new(ledger: Arc<Ledger<AssetChaincode>>, policy: Arc<TrustPolicy>, admin: Identity) -> Self {
        Aaa {
            ledger,
            policy,
            admin,
            clock: Arc::new(SystemClock),
            log_clocks: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn ledger(&self) -> &Arc<Ledger<AssetChaincode>> {
        &self.ledger
    }

    pub fn policy(&self) -> &Arc<TrustPolicy> {
        &self.policy
    }

    pub fn admin(&self) -> &Identity {
        &self.admin
    }

    pub fn is_admin(&self, id: &str) -> bool {
        self.ledger.chaincode().admins().contains(id)
    }

    pub fn evaluate(&self, controller_id: &str, req: &VerificationRequest) -> Evaluation {
        self.ledger
            .with_state(|state| evaluate(&self.policy, state, controller_id, req))
    }

    /// Decides `req` as submitted by `controller`, applies any trust
    /// penalty and commits the log entry.
    pub fn authorize(&self, controller: &Identity, req: &VerificationRequest) -> Result<Verdict, AaaError> {
        let evaluation = self.evaluate(controller.id(), req);
        let app_id = evaluation.application.as_ref().map(|a| a.id.clone());
        let mut trust_after = evaluation.application.as_ref().map(|a| a.trust_index);
        if evaluation.penalize {
            if let Some(app_id) = &app_id {
                trust_after = Some(self.penalize(controller, app_id)?);
            }
        }
        let failed = evaluation.failed.map(|c| {
            serde_json::to_value(c)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default()
        });
        self.finish(controller, req, evaluation.action, evaluation.message, app_id, trust_after, failed)
    }

    /// Denies `req` without evaluating it (quota exhaustion). No penalty;
    /// the decision is still accounted.
    pub fn deny_unevaluated(
        &self,
        controller: &Identity,
        req: &VerificationRequest,
        message: &str,
    ) -> Result<Verdict, AaaError> {
        let app = self.ledger.with_state(|state| {
            assets::load::<TokenAsset>(state, &req.token_id)
                .and_then(|t| assets::load::<ApplicationAsset>(state, &t.application_id))
        });
        let trust = app.as_ref().map(|a| a.trust_index);
        self.finish(
            controller,
            req,
            Action::Deny,
            message.to_owned(),
            app.map(|a| a.id),
            trust,
            None,
        )
    }

    /// An ACCEPTed rule-installing request whose rule conflicts with the
    /// installed rules. The application is penalized and the denial
    /// accounted.
    pub fn report_conflict(
        &self,
        controller: &Identity,
        req: &VerificationRequest,
        message: &str,
    ) -> Result<Verdict, AaaError> {
        let app_id = self.ledger.with_state(|state| {
            assets::load::<TokenAsset>(state, &req.token_id)
                .filter(|t| t.controller_id == controller.id())
                .map(|t| t.application_id)
        });
        let app_id = app_id.ok_or_else(|| AaaError::UnknownApplication(req.token_id.clone()))?;
        let trust = self.penalize(controller, &app_id)?;
        self.finish(controller, req, Action::Deny, message.to_owned(), Some(app_id), Some(trust), None)
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        controller: &Identity,
        req: &VerificationRequest,
        action: Action,
        message: String,
        application_id: Option<String>,
        trust_after: Option<u8>,
        failed_criterion: Option<String>,
    ) -> Result<Verdict, AaaError> {
        let entry = self.account(controller, req, application_id.as_deref().unwrap_or(""), action, &message)?;
        Ok(Verdict {
            action,
            message,
            application_id,
            trust_after,
            failed_criterion,
            log_id: entry.id,
        })
    }

    /// Lowers the trust index by one, floored at 0. `signer` is the
    /// verifying controller (or an admin).
    pub fn penalize(&self, signer: &Identity, app_id: &str) -> Result<u8, AaaError> {
        for _ in 0..PENALTY_ATTEMPTS {
            let current = self
                .ledger
                .with_state(|s| assets::load::<ApplicationAsset>(s, app_id))
                .ok_or_else(|| AaaError::UnknownApplication(app_id.to_owned()))?
                .trust_index;
            if current == 0 {
                return Ok(0);
            }
            let tx = AssetTx::UpdateAppTrustIndex(UpdateAppTrustIndex {
                app_id: app_id.to_owned(),
                trust_index: i64::from(current) - 1,
            });
            match self.ledger.submit_and_commit(tx.propose(signer)) {
                Ok(_) => return Ok(current - 1),
                Err(SubmitError::Ledger(e)) if e.is_mvcc_conflict() => continue,
                // another penalty committed between our read and endorsement
                Err(SubmitError::Chaincode(AssetError::TrustNotLowered { .. })) => continue,
                Err(e) => return Err(e.into()),
            }
        }
        Err(AaaError::Contention(app_id.to_owned()))
    }

    /// Administrator override of the trust index.
    pub fn recover_trust(&self, caller: &Identity, app_id: &str, value: i64) -> Result<u8, AaaError> {
        if !self.is_admin(caller.id()) {
            return Err(AaaError::NotAdmin(caller.id().to_owned()));
        }
        let tx = AssetTx::UpdateAppTrustIndex(UpdateAppTrustIndex {
            app_id: app_id.to_owned(),
            trust_index: value,
        });
        let receipt = self.ledger.submit_and_commit(tx.propose(caller))?;
        let app: ApplicationAsset = serde_json::from_value(receipt.response)
            .map_err(|e| AssetError::Malformed(e.to_string()))?;
        Ok(app.trust_index)
    }

    /// Commits the log entry for one decision.
    pub fn account(
        &self,
        controller: &Identity,
        req: &VerificationRequest,
        application_id: &str,
        action: Action,
        message: &str,
    ) -> Result<LogEntryAsset, AaaError> {
        let controller_id = controller.id().to_owned();
        let registered = self
            .ledger
            .with_state(|s| assets::load::<ControllerAsset>(s, &controller_id).is_some());
        let signer = if registered { controller } else { &self.admin };

        let last = self
            .log_clocks
            .lock()
            .entry(controller_id.clone())
            .or_insert_with(|| Arc::new(Mutex::new(DateTime::<Utc>::MIN_UTC)))
            .clone();
        let mut last = last.lock();
        let created_time = self.clock.now().max(*last);
        let tx = AssetTx::AddLogEntry(AddLogEntry {
            id: Uuid::new_v4().to_string(),
            created_time,
            resource_url: req.url.clone(),
            data: req.data.clone(),
            token_id: req.token_id.clone(),
            http_method: req.http_method,
            permission_id: req.permission_id.clone(),
            app_id: application_id.to_owned(),
            controller_id,
            action,
            message: message.to_owned(),
        });
        let receipt = self.ledger.submit_and_commit(tx.propose(signer))?;
        *last = created_time;
        serde_json::from_value(receipt.response).map_err(|e| AssetError::Malformed(e.to_string()).into())
    }

    pub fn logs(&self) -> Vec<LogEntryAsset> {
        self.ledger.with_state(assets::list::<LogEntryAsset>)
    }
}
