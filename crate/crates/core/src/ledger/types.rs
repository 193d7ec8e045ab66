use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use uuid::Uuid;

use crate::identity::{Identity, Signature};

pub type Hash = [u8; 32];

pub const ZERO_HASH: Hash = [0u8; 32];

pub(crate) mod hex32 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let text = String::deserialize(d)?;
        let bytes = hex::decode(&text).map_err(serde::de::Error::custom)?;
        bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("expected 32 bytes"))
    }
}

pub fn sha256(bytes: &[u8]) -> Hash {
    Sha256::digest(bytes).into()
}

/// Canonical encoding: serde_json over structs (declaration order) and
/// `BTreeMap`s (sorted keys), no whitespace.
pub fn canonical<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("ledger types serialize infallibly")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TxType {
    AddApplication,
    UpdateApplication,
    UpdateAppRole,
    UpdateAppTrustIndex,
    RemoveApplication,
    AddController,
    UpdateController,
    RemoveController,
    CreatePermission,
    RemovePermission,
    CreateRole,
    UpdateRole,
    RequestAppToken,
    IssueToken,
    ExpireToken,
    AddLogEntry,
}

impl TxType {
    pub const ALL: [TxType; 16] = [
        TxType::AddApplication,
        TxType::UpdateApplication,
        TxType::UpdateAppRole,
        TxType::UpdateAppTrustIndex,
        TxType::RemoveApplication,
        TxType::AddController,
        TxType::UpdateController,
        TxType::RemoveController,
        TxType::CreatePermission,
        TxType::RemovePermission,
        TxType::CreateRole,
        TxType::UpdateRole,
        TxType::RequestAppToken,
        TxType::IssueToken,
        TxType::ExpireToken,
        TxType::AddLogEntry,
    ];
}

impl fmt::Display for TxType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = serde_json::to_value(self).expect("unit variant");
        f.write_str(name.as_str().expect("string tag"))
    }
}

pub type Payload = BTreeMap<String, Value>;

#[derive(Serialize)]
struct ProposalHeader<'a> {
    proposal_id: &'a Uuid,
    tx_type: TxType,
    payload: &'a Payload,
    submitter: &'a str,
    timestamp: &'a DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransactionProposal {
    pub proposal_id: Uuid,
    pub tx_type: TxType,
    pub payload: Payload,
    pub submitter: String,
    pub timestamp: DateTime<Utc>,
    pub signature: Signature,
}

impl TransactionProposal {
    pub fn new(identity: &Identity, tx_type: TxType, payload: Payload) -> Self {
        Self::new_at(identity, tx_type, payload, Utc::now())
    }

    pub fn new_at(
        identity: &Identity,
        tx_type: TxType,
        payload: Payload,
        timestamp: DateTime<Utc>,
    ) -> Self {
        let proposal_id = Uuid::new_v4();
        let header = Self::header_bytes(&proposal_id, tx_type, &payload, identity.id(), &timestamp);
        TransactionProposal {
            proposal_id,
            tx_type,
            payload,
            submitter: identity.id().to_owned(),
            timestamp,
            signature: identity.sign(&header),
        }
    }

    fn header_bytes(
        proposal_id: &Uuid,
        tx_type: TxType,
        payload: &Payload,
        submitter: &str,
        timestamp: &DateTime<Utc>,
    ) -> Vec<u8> {
        canonical(&ProposalHeader {
            proposal_id,
            tx_type,
            payload,
            submitter,
            timestamp,
        })
    }

    /// The bytes covered by `signature`.
    pub fn signed_bytes(&self) -> Vec<u8> {
        Self::header_bytes(
            &self.proposal_id,
            self.tx_type,
            &self.payload,
            &self.submitter,
            &self.timestamp,
        )
    }

    pub fn digest(&self) -> Hash {
        sha256(&canonical(self))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadEntry {
    pub key: String,
    pub version: u64,
}

/// `value: None` deletes the key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WriteEntry {
    pub key: String,
    pub value: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
pub enum EndorsementStatus {
    Endorsed,
    Failed { reason: String },
}

#[derive(Serialize)]
struct EndorsementBody<'a> {
    peer_id: &'a str,
    proposal_id: &'a Uuid,
    #[serde(with = "hex32")]
    proposal_digest: Hash,
    read_set: &'a [ReadEntry],
    write_set: &'a [WriteEntry],
    response: &'a Value,
    status: &'a EndorsementStatus,
}

/// A peer's signed simulation result for one proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Endorsement {
    pub peer_id: String,
    pub proposal_id: Uuid,
    pub read_set: Vec<ReadEntry>,
    pub write_set: Vec<WriteEntry>,
    pub response: Value,
    pub status: EndorsementStatus,
    pub peer_signature: Signature,
}

impl Endorsement {
    pub(crate) fn signed(
        peer: &Identity,
        proposal: &TransactionProposal,
        read_set: Vec<ReadEntry>,
        write_set: Vec<WriteEntry>,
        response: Value,
        status: EndorsementStatus,
    ) -> Self {
        let mut endorsement = Endorsement {
            peer_id: peer.id().to_owned(),
            proposal_id: proposal.proposal_id,
            read_set,
            write_set,
            response,
            status,
            peer_signature: Signature {
                r: [0; 32],
                s: [0; 32],
            },
        };
        endorsement.peer_signature = peer.sign(&endorsement.signed_bytes(proposal));
        endorsement
    }

    pub fn signed_bytes(&self, proposal: &TransactionProposal) -> Vec<u8> {
        canonical(&EndorsementBody {
            peer_id: &self.peer_id,
            proposal_id: &self.proposal_id,
            proposal_digest: proposal.digest(),
            read_set: &self.read_set,
            write_set: &self.write_set,
            response: &self.response,
            status: &self.status,
        })
    }

    pub fn is_endorsed(&self) -> bool {
        self.status == EndorsementStatus::Endorsed
    }

    /// Two endorsements agree when their simulation results are identical.
    pub fn agrees_with(&self, other: &Endorsement) -> bool {
        self.read_set == other.read_set
            && self.write_set == other.write_set
            && self.response == other.response
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transaction {
    pub proposal: TransactionProposal,
    pub endorsements: Vec<Endorsement>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TxValidity {
    Valid,
    BadProposalSignature,
    EndorsementPolicyFailure,
    MvccReadConflict,
    DuplicateProposal,
}

impl TxValidity {
    pub fn is_valid(self) -> bool {
        self == TxValidity::Valid
    }
}

#[derive(Serialize)]
struct BlockData<'a> {
    timestamp: &'a DateTime<Utc>,
    transactions: &'a [Transaction],
}

/// A batch of ordered transactions. `validity` is filled in at commit and is
/// not covered by `data_hash`; it is re-derived by replay during chain
/// verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub number: u64,
    #[serde(with = "hex32")]
    pub prev_hash: Hash,
    #[serde(with = "hex32")]
    pub data_hash: Hash,
    pub timestamp: DateTime<Utc>,
    pub transactions: Vec<Transaction>,
    pub validity: Vec<TxValidity>,
}

impl Block {
    pub fn new(
        number: u64,
        prev_hash: Hash,
        timestamp: DateTime<Utc>,
        transactions: Vec<Transaction>,
    ) -> Self {
        let data_hash = Self::compute_data_hash(&timestamp, &transactions);
        Block {
            number,
            prev_hash,
            data_hash,
            timestamp,
            transactions,
            validity: Vec::new(),
        }
    }

    pub fn genesis() -> Self {
        Block::new(0, ZERO_HASH, DateTime::UNIX_EPOCH, Vec::new())
    }

    pub fn compute_data_hash(timestamp: &DateTime<Utc>, transactions: &[Transaction]) -> Hash {
        sha256(&canonical(&BlockData {
            timestamp,
            transactions,
        }))
    }

    /// SHA-256(number as u64 big-endian ∥ prev_hash ∥ data_hash).
    pub fn header_hash(&self) -> Hash {
        let mut hasher = Sha256::new();
        hasher.update(self.number.to_be_bytes());
        hasher.update(self.prev_hash);
        hasher.update(self.data_hash);
        hasher.finalize().into()
    }

    pub fn data_hash_matches(&self) -> bool {
        self.data_hash == Self::compute_data_hash(&self.timestamp, &self.transactions)
    }

    pub fn encode(&self) -> Vec<u8> {
        canonical(self)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }
}
