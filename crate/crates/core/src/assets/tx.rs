//! Typed payloads for every transaction type. Field names on the wire are
//! kebab-case, e.g. `trust-index`, `role-id`.

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::Action;
use crate::identity::Identity;
use crate::ledger::{Payload, TransactionProposal, TxType};
use crate::policy::{HttpMethod, ResourceObject};

macro_rules! payloads {
    ($($(#[$meta:meta])* $name:ident { $($(#[$fmeta:meta])* $field:ident : $ty:ty),* $(,)? })*) => {
        $(
            $(#[$meta])*
            #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
            #[serde(rename_all = "kebab-case", deny_unknown_fields)]
            pub struct $name {
                $($(#[$fmeta])* pub $field: $ty,)*
            }
        )*
    };
}

payloads! {
    AddApplication {
        id: String,
        name: String,
        #[serde(default = "default_trust")]
        trust_index: i64,
        #[serde(default)]
        role_id: String,
    }
    UpdateApplication { app_id: String, name: String }
    UpdateAppRole { app_id: String, role_id: String }
    UpdateAppTrustIndex { app_id: String, trust_index: i64 }
    RemoveApplication { app_id: String }
    AddController {
        id: String,
        name: String,
        #[serde(default)]
        permissions: Vec<String>,
    }
    UpdateController { controller_id: String, name: String, permissions: Vec<String> }
    RemoveController { controller_id: String }
    CreatePermission { id: String, name: String, resource_object: ResourceObject }
    RemovePermission { permission_id: String }
    CreateRole {
        id: String,
        name: String,
        #[serde(default)]
        permissions: Vec<String>,
        #[serde(default)]
        priority: i64,
    }
    UpdateRole { role_id: String, name: String, permissions: Vec<String> }
    RequestAppToken { controller_id: String }
    IssueToken { token_id: String }
    ExpireToken { token_id: String }
    AddLogEntry {
        id: String,
        created_time: DateTime<Utc>,
        resource_url: String,
        data: String,
        token_id: String,
        http_method: HttpMethod,
        permission_id: String,
        app_id: String,
        controller_id: String,
        action: Action,
        message: String,
    }
}

fn default_trust() -> i64 {
    i64::from(super::DEFAULT_TRUST_INDEX)
}

#[derive(Debug, Clone, PartialEq)]
pub enum AssetTx {
    AddApplication(AddApplication),
    UpdateApplication(UpdateApplication),
    UpdateAppRole(UpdateAppRole),
    UpdateAppTrustIndex(UpdateAppTrustIndex),
    RemoveApplication(RemoveApplication),
    AddController(AddController),
    UpdateController(UpdateController),
    RemoveController(RemoveController),
    CreatePermission(CreatePermission),
    RemovePermission(RemovePermission),
    CreateRole(CreateRole),
    UpdateRole(UpdateRole),
    RequestAppToken(RequestAppToken),
    IssueToken(IssueToken),
    ExpireToken(ExpireToken),
    AddLogEntry(AddLogEntry),
}

fn to_payload<T: Serialize>(body: &T) -> Payload {
    match serde_json::to_value(body).expect("payloads serialize") {
        serde_json::Value::Object(map) => map.into_iter().collect(),
        _ => unreachable!("payload structs serialize to objects"),
    }
}

fn from_payload<T: DeserializeOwned>(payload: &Payload) -> Result<T, serde_json::Error> {
    let map: serde_json::Map<String, serde_json::Value> =
        payload.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    serde_json::from_value(serde_json::Value::Object(map))
}

impl AssetTx {
    pub fn tx_type(&self) -> TxType {
        match self {
            AssetTx::AddApplication(_) => TxType::AddApplication,
            AssetTx::UpdateApplication(_) => TxType::UpdateApplication,
            AssetTx::UpdateAppRole(_) => TxType::UpdateAppRole,
            AssetTx::UpdateAppTrustIndex(_) => TxType::UpdateAppTrustIndex,
            AssetTx::RemoveApplication(_) => TxType::RemoveApplication,
            AssetTx::AddController(_) => TxType::AddController,
            AssetTx::UpdateController(_) => TxType::UpdateController,
            AssetTx::RemoveController(_) => TxType::RemoveController,
            AssetTx::CreatePermission(_) => TxType::CreatePermission,
            AssetTx::RemovePermission(_) => TxType::RemovePermission,
            AssetTx::CreateRole(_) => TxType::CreateRole,
            AssetTx::UpdateRole(_) => TxType::UpdateRole,
            AssetTx::RequestAppToken(_) => TxType::RequestAppToken,
            AssetTx::IssueToken(_) => TxType::IssueToken,
            AssetTx::ExpireToken(_) => TxType::ExpireToken,
            AssetTx::AddLogEntry(_) => TxType::AddLogEntry,
        }
    }

    pub fn payload(&self) -> Payload {
        match self {
            AssetTx::AddApplication(b) => to_payload(b),
            AssetTx::UpdateApplication(b) => to_payload(b),
            AssetTx::UpdateAppRole(b) => to_payload(b),
            AssetTx::UpdateAppTrustIndex(b) => to_payload(b),
            AssetTx::RemoveApplication(b) => to_payload(b),
            AssetTx::AddController(b) => to_payload(b),
            AssetTx::UpdateController(b) => to_payload(b),
            AssetTx::RemoveController(b) => to_payload(b),
            AssetTx::CreatePermission(b) => to_payload(b),
            AssetTx::RemovePermission(b) => to_payload(b),
            AssetTx::CreateRole(b) => to_payload(b),
            AssetTx::UpdateRole(b) => to_payload(b),
            AssetTx::RequestAppToken(b) => to_payload(b),
            AssetTx::IssueToken(b) => to_payload(b),
            AssetTx::ExpireToken(b) => to_payload(b),
            AssetTx::AddLogEntry(b) => to_payload(b),
        }
    }

    pub fn parse(tx_type: TxType, payload: &Payload) -> Result<Self, serde_json::Error> {
        Ok(match tx_type {
            TxType::AddApplication => AssetTx::AddApplication(from_payload(payload)?),
            TxType::UpdateApplication => AssetTx::UpdateApplication(from_payload(payload)?),
            TxType::UpdateAppRole => AssetTx::UpdateAppRole(from_payload(payload)?),
            TxType::UpdateAppTrustIndex => AssetTx::UpdateAppTrustIndex(from_payload(payload)?),
            TxType::RemoveApplication => AssetTx::RemoveApplication(from_payload(payload)?),
            TxType::AddController => AssetTx::AddController(from_payload(payload)?),
            TxType::UpdateController => AssetTx::UpdateController(from_payload(payload)?),
            TxType::RemoveController => AssetTx::RemoveController(from_payload(payload)?),
            TxType::CreatePermission => AssetTx::CreatePermission(from_payload(payload)?),
            TxType::RemovePermission => AssetTx::RemovePermission(from_payload(payload)?),
            TxType::CreateRole => AssetTx::CreateRole(from_payload(payload)?),
            TxType::UpdateRole => AssetTx::UpdateRole(from_payload(payload)?),
            TxType::RequestAppToken => AssetTx::RequestAppToken(from_payload(payload)?),
            TxType::IssueToken => AssetTx::IssueToken(from_payload(payload)?),
            TxType::ExpireToken => AssetTx::ExpireToken(from_payload(payload)?),
            TxType::AddLogEntry => AssetTx::AddLogEntry(from_payload(payload)?),
        })
    }

    /// A proposal for this transaction signed by `submitter`.
    pub fn propose(&self, submitter: &Identity) -> TransactionProposal {
        TransactionProposal::new(submitter, self.tx_type(), self.payload())
    }

    pub fn propose_at(&self, submitter: &Identity, timestamp: DateTime<Utc>) -> TransactionProposal {
        TransactionProposal::new_at(submitter, self.tx_type(), self.payload(), timestamp)
    }
}
