//! The asset chaincode: one handler per transaction type.

use std::collections::BTreeSet;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use serde_json::{json, Value};
use thiserror::Error;

use super::acl::{check_acl, AclDecision, Operation, Participant, ParticipantType, Resource};
use super::tx::*;
use super::{
    ctx_list, ctx_load, ctx_store, token_index_key, ApplicationAsset, Asset, ControllerAsset,
    LogEntryAsset, PermissionAsset, RoleAsset, TokenAsset, TokenStatus, MAX_TRUST_INDEX,
};
use crate::ledger::types::sha256;
use crate::ledger::{Chaincode, TxContext};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AssetError {
    #[error("access denied: {participant} may not {operation:?} {resource}")]
    Denied {
        participant: String,
        operation: Operation,
        resource: String,
    },
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error("invalid id {0:?}")]
    InvalidId(String),
    #[error("id {0:?} is already in use")]
    DuplicateId(String),
    #[error("{kind} {id:?} not found")]
    NotFound { kind: &'static str, id: String },
    #[error("trust index {0} outside 0..=100")]
    InvalidTrustIndex(i64),
    #[error("controllers may only lower trust ({current} -> {requested})")]
    TrustNotLowered { current: u8, requested: u8 },
    #[error("permission {permission} is referenced by {holder}")]
    PermissionInUse { permission: String, holder: String },
    #[error("token {id} cannot move from {from} to {to}")]
    IllegalTransition {
        id: String,
        from: TokenStatus,
        to: TokenStatus,
    },
    #[error("log entry {0:?} already exists")]
    LogExists(String),
}

/// Chaincode over the asset model. `admins` lists the identities that act
/// as the Admin participant.
#[derive(Debug, Clone, Default)]
pub struct AssetChaincode {
    admins: BTreeSet<String>,
}

fn valid_id(id: &str) -> Result<(), AssetError> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'));
    if ok {
        Ok(())
    } else {
        Err(AssetError::InvalidId(id.to_owned()))
    }
}

fn trust(value: i64) -> Result<u8, AssetError> {
    if (0..=i64::from(MAX_TRUST_INDEX)).contains(&value) {
        Ok(value as u8)
    } else {
        Err(AssetError::InvalidTrustIndex(value))
    }
}

fn require<A: Asset>(ctx: &mut TxContext<'_>, kind: &'static str, id: &str) -> Result<A, AssetError> {
    ctx_load(ctx, id).ok_or_else(|| AssetError::NotFound {
        kind,
        id: id.to_owned(),
    })
}

fn require_permissions(ctx: &mut TxContext<'_>, ids: &[String]) -> Result<BTreeSet<String>, AssetError> {
    for id in ids {
        require::<PermissionAsset>(ctx, "permission", id)?;
    }
    Ok(ids.iter().cloned().collect())
}

impl AssetChaincode {
    pub fn new<I, S>(admins: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        AssetChaincode {
            admins: admins.into_iter().map(Into::into).collect(),
        }
    }

    pub fn admins(&self) -> &BTreeSet<String> {
        &self.admins
    }

    fn participant(&self, ctx: &mut TxContext<'_>) -> Participant {
        let id = ctx.proposal().submitter.clone();
        let kind = if self.admins.contains(&id) {
            ParticipantType::Admin
        } else if ctx.get_state(&ApplicationAsset::key_for(&id)).is_some() {
            ParticipantType::Application
        } else if ctx.get_state(&ControllerAsset::key_for(&id)).is_some() {
            ParticipantType::Controller
        } else {
            ParticipantType::Unknown
        };
        Participant::new(kind, id)
    }

    /// Ids name participants, so one id may not be reused across kinds.
    fn fresh_id(&self, ctx: &mut TxContext<'_>, id: &str) -> Result<(), AssetError> {
        valid_id(id)?;
        let taken = self.admins.contains(id)
            || ctx.get_state(&ApplicationAsset::key_for(id)).is_some()
            || ctx.get_state(&ControllerAsset::key_for(id)).is_some();
        if taken {
            Err(AssetError::DuplicateId(id.to_owned()))
        } else {
            Ok(())
        }
    }

    fn handle(&self, ctx: &mut TxContext<'_>, tx: AssetTx) -> Result<Value, AssetError> {
        let who = self.participant(ctx);
        let allow = |op: Operation, resource: Resource| match check_acl(&who, op, &resource) {
            AclDecision::Allow => Ok(()),
            AclDecision::Deny => Err(AssetError::Denied {
                participant: format!("{:?}({})", who.kind, who.id),
                operation: op,
                resource: resource.to_string(),
            }),
        };

        match tx {
            AssetTx::AddApplication(b) => {
                allow(Operation::Create, Resource::Application { id: b.id.clone() })?;
                self.fresh_id(ctx, &b.id)?;
                let trust_index = trust(b.trust_index)?;
                if !b.role_id.is_empty() {
                    require::<RoleAsset>(ctx, "role", &b.role_id)?;
                }
                let app = ApplicationAsset {
                    id: b.id,
                    name: b.name,
                    trust_index,
                    role_id: b.role_id,
                    quota_used: 0,
                };
                Ok(ctx_store(ctx, &app))
            }
            AssetTx::UpdateApplication(b) => {
                allow(Operation::Update, Resource::Application { id: b.app_id.clone() })?;
                let mut app: ApplicationAsset = require(ctx, "application", &b.app_id)?;
                app.name = b.name;
                Ok(ctx_store(ctx, &app))
            }
            AssetTx::UpdateAppRole(b) => {
                allow(Operation::Update, Resource::Application { id: b.app_id.clone() })?;
                let mut app: ApplicationAsset = require(ctx, "application", &b.app_id)?;
                require::<RoleAsset>(ctx, "role", &b.role_id)?;
                app.role_id = b.role_id;
                Ok(ctx_store(ctx, &app))
            }
            AssetTx::UpdateAppTrustIndex(b) => {
                allow(Operation::Update, Resource::ApplicationTrust { id: b.app_id.clone() })?;
                let requested = trust(b.trust_index)?;
                let mut app: ApplicationAsset = require(ctx, "application", &b.app_id)?;
                // Strictly lower, so a penalty computed from a stale read
                // fails instead of silently repeating a committed one.
                if who.kind != ParticipantType::Admin && requested >= app.trust_index {
                    return Err(AssetError::TrustNotLowered {
                        current: app.trust_index,
                        requested,
                    });
                }
                app.trust_index = requested;
                Ok(ctx_store(ctx, &app))
            }
            AssetTx::RemoveApplication(b) => {
                allow(Operation::Delete, Resource::Application { id: b.app_id.clone() })?;
                let app: ApplicationAsset = require(ctx, "application", &b.app_id)?;
                expire_tokens(ctx, |t| t.application_id == app.id);
                ctx.del_state(app.key());
                Ok(serde_json::to_value(&app).expect("assets serialize"))
            }
            AssetTx::AddController(b) => {
                allow(Operation::Create, Resource::Controller { id: b.id.clone() })?;
                self.fresh_id(ctx, &b.id)?;
                let permissions = require_permissions(ctx, &b.permissions)?;
                let controller = ControllerAsset {
                    id: b.id,
                    name: b.name,
                    permissions,
                };
                Ok(ctx_store(ctx, &controller))
            }
            AssetTx::UpdateController(b) => {
                allow(Operation::Update, Resource::Controller { id: b.controller_id.clone() })?;
                let mut controller: ControllerAsset = require(ctx, "controller", &b.controller_id)?;
                controller.permissions = require_permissions(ctx, &b.permissions)?;
                controller.name = b.name;
                Ok(ctx_store(ctx, &controller))
            }
            AssetTx::RemoveController(b) => {
                allow(Operation::Delete, Resource::Controller { id: b.controller_id.clone() })?;
                let controller: ControllerAsset = require(ctx, "controller", &b.controller_id)?;
                expire_tokens(ctx, |t| t.controller_id == controller.id);
                ctx.del_state(controller.key());
                Ok(serde_json::to_value(&controller).expect("assets serialize"))
            }
            AssetTx::CreatePermission(b) => {
                allow(Operation::Create, Resource::Permission { id: b.id.clone() })?;
                valid_id(&b.id)?;
                if ctx_load::<PermissionAsset>(ctx, &b.id).is_some() {
                    return Err(AssetError::DuplicateId(b.id));
                }
                let permission = PermissionAsset {
                    id: b.id,
                    name: b.name,
                    resource_object: b.resource_object,
                };
                Ok(ctx_store(ctx, &permission))
            }
            AssetTx::RemovePermission(b) => {
                allow(Operation::Delete, Resource::Permission { id: b.permission_id.clone() })?;
                let permission: PermissionAsset = require(ctx, "permission", &b.permission_id)?;
                let in_use = |holder: String| AssetError::PermissionInUse {
                    permission: permission.id.clone(),
                    holder,
                };
                if let Some(role) = ctx_list::<RoleAsset>(ctx)
                    .into_iter()
                    .find(|r| r.permissions.contains(&permission.id))
                {
                    return Err(in_use(format!("role {}", role.id)));
                }
                if let Some(controller) = ctx_list::<ControllerAsset>(ctx)
                    .into_iter()
                    .find(|c| c.permissions.contains(&permission.id))
                {
                    return Err(in_use(format!("controller {}", controller.id)));
                }
                ctx.del_state(permission.key());
                Ok(serde_json::to_value(&permission).expect("assets serialize"))
            }
            AssetTx::CreateRole(b) => {
                allow(Operation::Create, Resource::Role { id: b.id.clone() })?;
                valid_id(&b.id)?;
                if ctx_load::<RoleAsset>(ctx, &b.id).is_some() {
                    return Err(AssetError::DuplicateId(b.id));
                }
                let role = RoleAsset {
                    permissions: require_permissions(ctx, &b.permissions)?,
                    id: b.id,
                    name: b.name,
                    priority: b.priority,
                };
                Ok(ctx_store(ctx, &role))
            }
            AssetTx::UpdateRole(b) => {
                allow(Operation::Update, Resource::Role { id: b.role_id.clone() })?;
                let mut role: RoleAsset = require(ctx, "role", &b.role_id)?;
                role.permissions = require_permissions(ctx, &b.permissions)?;
                role.name = b.name;
                Ok(ctx_store(ctx, &role))
            }
            AssetTx::RequestAppToken(b) => {
                let resource = Resource::Token {
                    application_id: who.id.clone(),
                    controller_id: b.controller_id.clone(),
                };
                if who.kind != ParticipantType::Application {
                    return Err(AssetError::Denied {
                        participant: format!("{:?}({})", who.kind, who.id),
                        operation: Operation::Create,
                        resource: resource.to_string(),
                    });
                }
                allow(Operation::Create, resource)?;
                require::<ControllerAsset>(ctx, "controller", &b.controller_id)?;
                let index = token_index_key(&who.id, &b.controller_id);
                if let Some(existing) = ctx
                    .get_state(&index)
                    .and_then(|v| v.as_str().map(str::to_owned))
                    .and_then(|id| ctx_load::<TokenAsset>(ctx, &id))
                {
                    if existing.status != TokenStatus::Expired {
                        return Ok(serde_json::to_value(&existing).expect("assets serialize"));
                    }
                }
                let proposal = ctx.proposal();
                let mut seed = b"token:".to_vec();
                seed.extend_from_slice(proposal.proposal_id.as_bytes());
                seed.extend_from_slice(&proposal.signature.to_bytes());
                let token = TokenAsset {
                    id: URL_SAFE_NO_PAD.encode(sha256(&seed)),
                    application_id: who.id.clone(),
                    controller_id: b.controller_id,
                    status: TokenStatus::New,
                    created_at: proposal.timestamp,
                };
                ctx.put_state(index, json!(token.id));
                Ok(ctx_store(ctx, &token))
            }
            AssetTx::IssueToken(b) => {
                let token: TokenAsset = require(ctx, "token", &b.token_id)?;
                allow(
                    Operation::Update,
                    Resource::Token {
                        application_id: token.application_id.clone(),
                        controller_id: token.controller_id.clone(),
                    },
                )?;
                Ok(transition(ctx, token, TokenStatus::Issued)?)
            }
            AssetTx::ExpireToken(b) => {
                let token: TokenAsset = require(ctx, "token", &b.token_id)?;
                allow(
                    Operation::Update,
                    Resource::TokenExpiry {
                        application_id: token.application_id.clone(),
                        controller_id: token.controller_id.clone(),
                    },
                )?;
                Ok(transition(ctx, token, TokenStatus::Expired)?)
            }
            AssetTx::AddLogEntry(b) => {
                allow(
                    Operation::Create,
                    Resource::LogEntry {
                        controller_id: b.controller_id.clone(),
                    },
                )?;
                valid_id(&b.id)?;
                if ctx.get_state(&LogEntryAsset::key_for(&b.id)).is_some() {
                    return Err(AssetError::LogExists(b.id));
                }
                let entry = LogEntryAsset {
                    id: b.id,
                    created_time: b.created_time,
                    url: b.resource_url,
                    data: b.data,
                    token_id: b.token_id,
                    http_method: b.http_method,
                    permission_id: b.permission_id,
                    application_id: b.app_id,
                    controller_id: b.controller_id,
                    action: b.action,
                    message: b.message,
                };
                Ok(ctx_store(ctx, &entry))
            }
        }
    }
}

fn transition(ctx: &mut TxContext<'_>, mut token: TokenAsset, to: TokenStatus) -> Result<Value, AssetError> {
    if !token.status.can_become(to) {
        return Err(AssetError::IllegalTransition {
            id: token.id,
            from: token.status,
            to,
        });
    }
    token.status = to;
    if to == TokenStatus::Expired {
        clear_index(ctx, &token);
    }
    Ok(ctx_store(ctx, &token))
}

fn clear_index(ctx: &mut TxContext<'_>, token: &TokenAsset) {
    let index = token_index_key(&token.application_id, &token.controller_id);
    if ctx.get_state(&index).as_ref().and_then(Value::as_str) == Some(token.id.as_str()) {
        ctx.del_state(index);
    }
}

fn expire_tokens(ctx: &mut TxContext<'_>, matches: impl Fn(&TokenAsset) -> bool) {
    for mut token in ctx_list::<TokenAsset>(ctx) {
        if matches(&token) && token.status != TokenStatus::Expired {
            token.status = TokenStatus::Expired;
            clear_index(ctx, &token);
            ctx_store(ctx, &token);
        }
    }
}

impl Chaincode for AssetChaincode {
    type Error = AssetError;

    fn invoke(&self, ctx: &mut TxContext<'_>) -> Result<Value, AssetError> {
        let proposal = ctx.proposal();
        let tx = AssetTx::parse(proposal.tx_type, &proposal.payload)
            .map_err(|e| AssetError::Malformed(e.to_string()))?;
        self.handle(ctx, tx)
    }
}
