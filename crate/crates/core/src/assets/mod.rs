//! Ledger assets and the chaincode that manages them.
//!
//! Every asset lives in the world state as JSON under `<prefix><id>`. The
//! [`AssetChaincode`] implements one handler per transaction type, each of
//! which consults the blockchain ACL ([`acl`]) before touching state.

pub mod acl;
pub mod chaincode;
pub mod tx;

use std::collections::BTreeSet;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::ledger::{TxContext, WorldState};
use crate::policy::{HttpMethod, ResourceObject};

pub use acl::{check_acl, AclDecision, Operation, Participant, ParticipantType, Resource};
pub use chaincode::{AssetChaincode, AssetError};
pub use tx::AssetTx;

pub const DEFAULT_TRUST_INDEX: u8 = 100;
pub const MAX_TRUST_INDEX: u8 = 100;

/// A JSON document stored under `PREFIX + id`.
pub trait Asset: Serialize + DeserializeOwned {
    const PREFIX: &'static str;

    fn id(&self) -> &str;

    fn key_for(id: &str) -> String {
        format!("{}{}", Self::PREFIX, id)
    }

    fn key(&self) -> String {
        Self::key_for(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApplicationAsset {
    pub id: String,
    pub name: String,
    pub trust_index: u8,
    pub role_id: String,
    /// Requests in the current quota window. Kept by the gateway's limiter
    /// and filled in when the asset is exported; always 0 on the ledger.
    #[serde(default)]
    pub quota_used: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerAsset {
    pub id: String,
    pub name: String,
    pub permissions: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermissionAsset {
    pub id: String,
    pub name: String,
    pub resource_object: ResourceObject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleAsset {
    pub id: String,
    pub name: String,
    pub permissions: BTreeSet<String>,
    /// Higher value means higher write authority.
    #[serde(default)]
    pub priority: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TokenStatus {
    New,
    Issued,
    Expired,
}

impl TokenStatus {
    /// NEW→ISSUED, NEW→EXPIRED and ISSUED→EXPIRED.
    pub fn can_become(self, next: TokenStatus) -> bool {
        matches!(
            (self, next),
            (TokenStatus::New, TokenStatus::Issued)
                | (TokenStatus::New, TokenStatus::Expired)
                | (TokenStatus::Issued, TokenStatus::Expired)
        )
    }
}

impl fmt::Display for TokenStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TokenStatus::New => "NEW",
            TokenStatus::Issued => "ISSUED",
            TokenStatus::Expired => "EXPIRED",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenAsset {
    pub id: String,
    pub application_id: String,
    pub controller_id: String,
    pub status: TokenStatus,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Action {
    Accept,
    Deny,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Accept => "ACCEPT",
            Action::Deny => "DENY",
        })
    }
}

/// One accounting record per verification decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntryAsset {
    pub id: String,
    pub created_time: DateTime<Utc>,
    pub url: String,
    pub data: String,
    pub token_id: String,
    pub http_method: HttpMethod,
    pub permission_id: String,
    pub application_id: String,
    pub controller_id: String,
    pub action: Action,
    pub message: String,
}

macro_rules! asset {
    ($ty:ty, $prefix:literal) => {
        impl Asset for $ty {
            const PREFIX: &'static str = $prefix;

            fn id(&self) -> &str {
                &self.id
            }
        }
    };
}

asset!(ApplicationAsset, "application/");
asset!(ControllerAsset, "controller/");
asset!(PermissionAsset, "permission/");
asset!(RoleAsset, "role/");
asset!(TokenAsset, "token/");
asset!(LogEntryAsset, "log/");

/// Key of the live token for an (application, controller) pair.
pub fn token_index_key(application_id: &str, controller_id: &str) -> String {
    format!("token-index/{application_id}/{controller_id}")
}

pub fn load<A: Asset>(state: &WorldState, id: &str) -> Option<A> {
    let (value, _) = state.get(&A::key_for(id))?;
    serde_json::from_value(value.clone()).ok()
}

pub fn list<A: Asset>(state: &WorldState) -> Vec<A> {
    state
        .scan_prefix(A::PREFIX)
        .filter_map(|(_, v, _)| serde_json::from_value(v.clone()).ok())
        .collect()
}

/// The live token for the pair, if any.
pub fn live_token(state: &WorldState, application_id: &str, controller_id: &str) -> Option<TokenAsset> {
    let (id, _) = state.get(&token_index_key(application_id, controller_id))?;
    load(state, id.as_str()?)
}

pub(crate) fn ctx_load<A: Asset>(ctx: &mut TxContext<'_>, id: &str) -> Option<A> {
    ctx.get_state(&A::key_for(id))
        .and_then(|v| serde_json::from_value(v).ok())
}

pub(crate) fn ctx_store<A: Asset>(ctx: &mut TxContext<'_>, asset: &A) -> serde_json::Value {
    let value = serde_json::to_value(asset).expect("assets serialize");
    ctx.put_state(asset.key(), value.clone());
    value
}

pub(crate) fn ctx_list<A: Asset>(ctx: &mut TxContext<'_>) -> Vec<A> {
    ctx.scan_prefix(A::PREFIX)
        .into_iter()
        .filter_map(|(_, v)| serde_json::from_value(v).ok())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_transitions() {
        use TokenStatus::*;
        let all = [New, Issued, Expired];
        let allowed: Vec<_> = all
            .iter()
            .flat_map(|a| all.iter().map(move |b| (*a, *b)))
            .filter(|(a, b)| a.can_become(*b))
            .collect();
        assert_eq!(allowed, [(New, Issued), (New, Expired), (Issued, Expired)]);
    }

    #[test]
    fn keys_use_prefixes() {
        assert_eq!(ApplicationAsset::key_for("app1"), "application/app1");
        assert_eq!(LogEntryAsset::key_for("x"), "log/x");
        assert_eq!(token_index_key("app1", "ctrl1"), "token-index/app1/ctrl1");
    }
}
