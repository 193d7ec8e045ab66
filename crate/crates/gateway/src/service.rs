//! The gateway proper: sessions, participant enrollment and every API
//! operation, independent of the HTTP transport.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use nbguard_core::aaa::{
    self, Aaa, AuthDecision, JwtCheck, Verdict, VerificationRequest, MSG_AUTH_REQUIRED,
    MSG_INVALID_JWT, MSG_QUOTA,
};
use nbguard_core::assets::tx::{
    AddApplication, AddController, CreatePermission, CreateRole, ExpireToken, IssueToken,
    RemoveApplication, RemoveController, RemovePermission, RequestAppToken, UpdateAppRole,
    UpdateApplication, UpdateController, UpdateRole,
};
use nbguard_core::assets::{
    self as store, ApplicationAsset, AssetChaincode, AssetTx, ControllerAsset,
    LogEntryAsset, PermissionAsset, RoleAsset, TokenAsset, TokenStatus,
};
use nbguard_core::clock::{Clock, SystemClock};
use nbguard_core::conflict::ConflictType;
use nbguard_core::identity::{Certificate, CertificateAuthority, Identity, Wallet};
use nbguard_core::ledger::{
    Ledger, LedgerConfig, MemberKind, Membership, Payload, TxType, TxValidity, WorldState,
};
use nbguard_core::policy::{ResourceObject, TrustPolicy};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use uuid::Uuid;

use crate::auth::{
    random_bytes, random_secret, Credential, JwtClaims, JwtKeys, JwtRejection, ParticipantKind,
    DEFAULT_JWT_LIFETIME,
};
use crate::error::ApiError;
use crate::limiter::{FixedWindowLimiter, DEFAULT_QUOTA, DEFAULT_QUOTA_WINDOW};

pub const MSP_ID: &str = "NbguardMSP";
pub const CA_ID: &str = "nbguard-ca";
pub const MSG_PING: &str = "Return app information";
pub const MSG_WALLET_ACCEPTED: &str = "Identity card accepted";

const KEYSTORE_FILE: &str = "keystore.json";
const CHAIN_FILE: &str = "chain.log";

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub admin_id: String,
    pub admin_secret: String,
    pub peer_count: usize,
    pub jwt_lifetime: Duration,
    pub quota: u32,
    pub quota_window: Duration,
}

impl GatewayConfig {
    pub fn new(admin_secret: impl Into<String>) -> Self {
        GatewayConfig {
            admin_id: "admin".to_owned(),
            admin_secret: admin_secret.into(),
            peer_count: LedgerConfig::default().peer_count,
            jwt_lifetime: DEFAULT_JWT_LIFETIME,
            quota: DEFAULT_QUOTA,
            quota_window: DEFAULT_QUOTA_WINDOW,
        }
    }
}

/// Everything needed to bring a gateway back after a restart. Participant
/// private keys are handed out at enrollment and never stored.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Keystore {
    ca: Wallet,
    admin: Wallet,
    peers: Vec<Wallet>,
    jwt_secret: String,
    credentials: BTreeMap<String, Credential>,
    certificates: Vec<String>,
    thresholds: BTreeMap<ResourceObject, u8>,
}

/// An authenticated caller: a valid JWT, plus the identity card if one was
/// uploaded for this session.
#[derive(Debug, Clone)]
pub struct Session {
    pub claims: JwtClaims,
    identity: Option<Identity>,
}

impl Session {
    pub fn participant_id(&self) -> &str {
        &self.claims.sub
    }

    pub fn kind(&self) -> ParticipantKind {
        self.claims.participant_type
    }

    pub fn has_wallet(&self) -> bool {
        self.identity.is_some()
    }

    pub fn identity(&self) -> Result<&Identity, ApiError> {
        self.identity
            .as_ref()
            .ok_or_else(|| ApiError::Unauthenticated(MSG_AUTH_REQUIRED.to_owned()))
    }
}

struct Bound {
    identity: Identity,
    exp: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LoginResponse {
    pub token: String,
    pub expires_at: i64,
    pub participant_type: ParticipantKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Ack {
    pub action: store::Action,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PingResponse {
    pub action: store::Action,
    pub message: String,
    pub participant_type: ParticipantKind,
    pub data: Value,
}

/// Enrollment result. The wallet carries the private key and is shown only
/// once; `secret` is present when the gateway generated it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Enrollment<A> {
    pub asset: A,
    pub wallet: Wallet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secret: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct NewApplication {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub role_id: String,
    #[serde(default)]
    pub trust_index: Option<i64>,
    #[serde(default)]
    pub secret: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ApplicationUpdate {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub role_id: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct NewController {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub permissions: Vec<String>,
    #[serde(default)]
    pub secret: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ControllerUpdate {
    pub name: String,
    pub permissions: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct NewRole {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub permissions: Vec<String>,
    #[serde(default)]
    pub priority: i64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RoleUpdate {
    pub name: String,
    pub permissions: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct NewPermission {
    pub id: String,
    pub name: String,
    pub resource_object: ResourceObject,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TokenRequest {
    pub controller_id: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ValueBody {
    pub value: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ConflictNotice {
    pub request: VerificationRequest,
    pub conflict_type: ConflictType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterpart_rule: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RawTransaction {
    pub tx_type: TxType,
    #[serde(default)]
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TxReceipt {
    pub proposal_id: Uuid,
    pub block_number: u64,
    pub response: Value,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct LogQuery {
    pub application_id: Option<String>,
    pub controller_id: Option<String>,
    pub action: Option<store::Action>,
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BlockQuery {
    pub from: Option<u64>,
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TokenQuery {
    pub status: Option<TokenStatus>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TxSummary {
    pub proposal_id: Uuid,
    pub tx_type: TxType,
    pub submitter: String,
    pub validity: Option<TxValidity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BlockSummary {
    pub number: u64,
    pub hash: String,
    pub prev_hash: String,
    pub data_hash: String,
    pub timestamp: DateTime<Utc>,
    pub transactions: Vec<TxSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BlocksResponse {
    pub height: u64,
    pub chain_valid: bool,
    pub blocks: Vec<BlockSummary>,
}

pub struct Gateway {
    aaa: Aaa,
    ca: CertificateAuthority,
    jwt: JwtKeys,
    limiter: FixedWindowLimiter,
    clock: Arc<dyn Clock>,
    credentials: RwLock<BTreeMap<String, Credential>>,
    sessions: Mutex<HashMap<String, Bound>>,
    keystore: Mutex<Keystore>,
    keystore_path: Option<PathBuf>,
}

fn io_error(e: impl std::fmt::Display) -> io::Error {
    io::Error::other(e.to_string())
}

impl Gateway {
    /// A gateway over a fresh in-memory ledger.
    pub fn in_memory(config: GatewayConfig) -> Self {
        Self::in_memory_with_clock(config, Arc::new(SystemClock))
    }

    pub fn in_memory_with_clock(config: GatewayConfig, clock: Arc<dyn Clock>) -> Self {
        let keystore = Self::fresh_keystore(&config);
        Self::assemble(keystore, None, None, config, clock).expect("fresh in-memory gateway")
    }

    /// A gateway persisted under `dir`: the chain is replayed and the CA,
    /// peers and credentials restored if present, otherwise created.
    pub fn open(dir: impl AsRef<Path>, config: GatewayConfig) -> io::Result<Self> {
        Self::open_with_clock(dir, config, Arc::new(SystemClock))
    }

    pub fn open_with_clock(
        dir: impl AsRef<Path>,
        config: GatewayConfig,
        clock: Arc<dyn Clock>,
    ) -> io::Result<Self> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let path = dir.join(KEYSTORE_FILE);
        let keystore = if path.exists() {
            let ks: Keystore = serde_json::from_slice(&fs::read(&path)?).map_err(io_error)?;
            let admin = Identity::from_wallet(&ks.admin).map_err(io_error)?;
            if admin.id() != config.admin_id {
                return Err(io_error(format!(
                    "data directory belongs to admin {:?}, not {:?}",
                    admin.id(),
                    config.admin_id
                )));
            }
            if ks.peers.len() != config.peer_count {
                return Err(io_error(format!(
                    "data directory was created with {} peers",
                    ks.peers.len()
                )));
            }
            ks
        } else {
            Self::fresh_keystore(&config)
        };
        Self::assemble(keystore, Some(dir.join(CHAIN_FILE)), Some(path), config, clock)
    }

    fn fresh_keystore(config: &GatewayConfig) -> Keystore {
        let ca = CertificateAuthority::new(CA_ID, MSP_ID);
        let admin = ca.enroll(&config.admin_id);
        let peers = (0..config.peer_count)
            .map(|i| ca.enroll(&format!("peer{i}")).to_wallet())
            .collect();
        Keystore {
            ca: ca.identity().to_wallet(),
            admin: admin.to_wallet(),
            peers,
            jwt_secret: hex::encode(random_bytes::<32>()),
            credentials: BTreeMap::new(),
            certificates: Vec::new(),
            thresholds: TrustPolicy::default().snapshot(),
        }
    }

    fn assemble(
        mut keystore: Keystore,
        chain: Option<PathBuf>,
        keystore_path: Option<PathBuf>,
        config: GatewayConfig,
        clock: Arc<dyn Clock>,
    ) -> io::Result<Self> {
        let ca_identity = Identity::from_wallet(&keystore.ca).map_err(io_error)?;
        let ca = CertificateAuthority::from_identity(ca_identity).map_err(io_error)?;
        let admin = Identity::from_wallet(&keystore.admin).map_err(io_error)?;
        let peers = keystore
            .peers
            .iter()
            .map(Identity::from_wallet)
            .collect::<Result<Vec<_>, _>>()
            .map_err(io_error)?;

        let mut membership = Membership::new(ca.public_key());
        membership
            .register(admin.certificate().clone(), MemberKind::Client)
            .map_err(io_error)?;
        for encoded in &keystore.certificates {
            let cert = Certificate::from_base64(encoded).map_err(io_error)?;
            membership.register(cert, MemberKind::Client).map_err(io_error)?;
        }

        let ledger_config = LedgerConfig::with_peers(config.peer_count);
        let chaincode = AssetChaincode::new([admin.id().to_owned()]);
        let ledger = match chain {
            Some(path) => Ledger::open(path, ledger_config, chaincode, membership, peers),
            None => Ledger::new(ledger_config, chaincode, membership, peers),
        }
        .map_err(io_error)?;

        let policy = TrustPolicy::default();
        for (object, value) in &keystore.thresholds {
            policy.set_threshold(*object, i64::from(*value)).map_err(io_error)?;
        }

        keystore.credentials.insert(
            config.admin_id.clone(),
            Credential::new(ParticipantKind::Admin, &config.admin_secret),
        );
        let secret = hex::decode(&keystore.jwt_secret).map_err(io_error)?;
        let gateway = Gateway {
            aaa: Aaa::new(Arc::new(ledger), Arc::new(policy), admin).with_clock(clock.clone()),
            ca,
            jwt: JwtKeys::new(&secret, config.jwt_lifetime),
            limiter: FixedWindowLimiter::new(config.quota, config.quota_window, clock.clone()),
            clock,
            credentials: RwLock::new(keystore.credentials.clone()),
            sessions: Mutex::new(HashMap::new()),
            keystore: Mutex::new(keystore),
            keystore_path,
        };
        gateway.persist()?;
        Ok(gateway)
    }

    fn persist(&self) -> io::Result<()> {
        let Some(path) = &self.keystore_path else {
            return Ok(());
        };
        let mut ks = self.keystore.lock();
        ks.credentials = self.credentials.read().clone();
        ks.thresholds = self.aaa.policy().snapshot();
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(&*ks).map_err(io_error)?)?;
        fs::rename(tmp, path)
    }

    fn persist_api(&self) -> Result<(), ApiError> {
        self.persist().map_err(|e| ApiError::Internal(e.to_string()))
    }

    pub fn aaa(&self) -> &Aaa {
        &self.aaa
    }

    pub fn ledger(&self) -> &Arc<Ledger<AssetChaincode>> {
        self.aaa.ledger()
    }

    pub fn limiter(&self) -> &FixedWindowLimiter {
        &self.limiter
    }

    pub fn ca_public_key(&self) -> nbguard_core::identity::PublicKey {
        self.ca.public_key()
    }

    pub fn admin_id(&self) -> &str {
        self.aaa.admin().id()
    }

    /// The admin identity card, for provisioning the admin's client.
    pub fn admin_wallet(&self) -> Wallet {
        self.aaa.admin().to_wallet()
    }

    fn read<R>(&self, f: impl FnOnce(&WorldState) -> R) -> R {
        self.ledger().with_state(f)
    }

    fn commit(&self, signer: &Identity, tx: AssetTx) -> Result<Value, ApiError> {
        Ok(self.ledger().submit_and_commit(tx.propose(signer))?.response)
    }

    fn commit_as<T: serde::de::DeserializeOwned>(&self, signer: &Identity, tx: AssetTx) -> Result<T, ApiError> {
        serde_json::from_value(self.commit(signer, tx)?).map_err(|e| ApiError::Internal(e.to_string()))
    }

    fn require(&self, session: &Session, kind: ParticipantKind) -> Result<Identity, ApiError> {
        let identity = session.identity()?;
        if session.kind() != kind {
            return Err(ApiError::Forbidden(format!(
                "{} is not an {kind}",
                session.participant_id()
            )));
        }
        Ok(identity.clone())
    }

    // ---- authentication ----

    pub fn login(&self, participant_id: &str, secret: &str) -> Result<LoginResponse, ApiError> {
        let kind = self
            .credentials
            .read()
            .get(participant_id)
            .filter(|c| c.matches(secret))
            .map(|c| c.kind)
            .ok_or_else(|| ApiError::Unauthenticated("Invalid credentials".to_owned()))?;
        let (token, claims) = self.jwt.issue(participant_id, kind, self.clock.now());
        Ok(LoginResponse {
            token,
            expires_at: claims.exp,
            participant_type: kind,
        })
    }

    /// Checks the bearer token. The session's identity card, if uploaded,
    /// is attached.
    pub fn session(&self, bearer: Option<&str>) -> Result<Session, ApiError> {
        let token = bearer.ok_or_else(|| ApiError::Unauthenticated(MSG_AUTH_REQUIRED.to_owned()))?;
        let now = self.clock.now();
        let claims = self.jwt.decode(token, now).map_err(|e| {
            ApiError::Unauthenticated(match e {
                JwtRejection::Malformed => MSG_INVALID_JWT.to_owned(),
                JwtRejection::Expired => "Access token expired".to_owned(),
            })
        })?;
        let identity = self.sessions.lock().get(&claims.jti).map(|b| b.identity.clone());
        Ok(Session { claims, identity })
    }

    pub fn upload_wallet(&self, session: &Session, wallet: &Wallet) -> Result<Ack, ApiError> {
        let identity = Identity::from_wallet(wallet)
            .map_err(|e| ApiError::Forbidden(format!("identity card rejected: {e}")))?;
        let cert = identity.certificate();
        if !cert.verify(&self.ca.public_key()) {
            return Err(ApiError::Forbidden("certificate is not issued by this CA".to_owned()));
        }
        if cert.subject_id != session.participant_id() {
            return Err(ApiError::Forbidden(
                "identity card belongs to another participant".to_owned(),
            ));
        }
        let known = self
            .ledger()
            .membership()
            .certificates(&cert.subject_id)
            .contains(cert);
        if !known {
            return Err(ApiError::Forbidden("participant is not registered".to_owned()));
        }
        let now = self.clock.now().timestamp();
        let mut sessions = self.sessions.lock();
        sessions.retain(|_, b| b.exp > now);
        sessions.insert(
            session.claims.jti.clone(),
            Bound {
                identity,
                exp: session.claims.exp,
            },
        );
        Ok(Ack {
            action: store::Action::Accept,
            message: MSG_WALLET_ACCEPTED.to_owned(),
        })
    }

    /// REST-level check: the caller's own record once JWT and identity card
    /// are both present.
    pub fn ping(&self, session: &Session) -> Result<PingResponse, ApiError> {
        let identity = session.identity()?;
        let id = identity.id();
        let data = match session.kind() {
            ParticipantKind::Application => self
                .read(|s| store::load::<ApplicationAsset>(s, id))
                .map(|a| self.with_quota(a))
                .map(|a| serde_json::to_value(a).expect("serializes")),
            ParticipantKind::Controller => self
                .read(|s| store::load::<ControllerAsset>(s, id))
                .map(|c| serde_json::to_value(c).expect("serializes")),
            ParticipantKind::Admin => Some(serde_json::json!({ "id": id })),
        }
        .ok_or_else(|| ApiError::Forbidden(format!("{id} is not registered")))?;
        Ok(PingResponse {
            action: store::Action::Accept,
            message: MSG_PING.to_owned(),
            participant_type: session.kind(),
            data,
        })
    }

    /// Application-to-controller authentication over the caller's session.
    pub fn authenticate(&self, session: &Session, controller_id: &str) -> AuthDecision {
        let jwt = JwtCheck::Valid {
            subject: session.participant_id().to_owned(),
        };
        self.read(|s| {
            aaa::authenticate(s, session.participant_id(), &jwt, session.has_wallet(), controller_id)
        })
    }

    // ---- application operations ----

    pub fn request_token(&self, session: &Session, controller_id: &str) -> Result<TokenAsset, ApiError> {
        let me = self.require(session, ParticipantKind::Application)?;
        self.commit_as(
            &me,
            AssetTx::RequestAppToken(RequestAppToken {
                controller_id: controller_id.to_owned(),
            }),
        )
    }

    pub fn my_tokens(&self, session: &Session) -> Result<Vec<TokenAsset>, ApiError> {
        let me = self.require(session, ParticipantKind::Application)?;
        let mut tokens: Vec<TokenAsset> = self
            .read(store::list::<TokenAsset>)
            .into_iter()
            .filter(|t| t.application_id == me.id())
            .collect();
        tokens.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        Ok(tokens)
    }

    /// Submits an arbitrary asset transaction signed with the caller's
    /// identity card; the chaincode's ACL decides.
    pub fn submit(&self, session: &Session, raw: &RawTransaction) -> Result<TxReceipt, ApiError> {
        let me = session.identity()?;
        let tx = AssetTx::parse(raw.tx_type, &raw.payload)
            .map_err(|e| ApiError::BadRequest(format!("malformed {} payload: {e}", raw.tx_type)))?;
        let receipt = self.ledger().submit_and_commit(tx.propose(me))?;
        Ok(TxReceipt {
            proposal_id: receipt.proposal_id,
            block_number: receipt.block_number,
            response: receipt.response,
        })
    }

    // ---- controller operations ----

    /// Quota first, then the five criteria. Either way the decision is
    /// accounted.
    pub fn verify(&self, session: &Session, req: &VerificationRequest) -> Result<Verdict, ApiError> {
        let me = self.require(session, ParticipantKind::Controller)?;
        let app = self.read(|s| store::load::<TokenAsset>(s, &req.token_id));
        if let Some(token) = app {
            if !self.limiter.try_acquire(&token.application_id) {
                return Ok(self.aaa.deny_unevaluated(&me, req, MSG_QUOTA)?);
            }
        }
        Ok(self.aaa.authorize(&me, req)?)
    }

    pub fn report_conflict(&self, session: &Session, notice: &ConflictNotice) -> Result<Verdict, ApiError> {
        let me = self.require(session, ParticipantKind::Controller)?;
        let message = format!("CONFLICT: {}", notice.conflict_type);
        Ok(self.aaa.report_conflict(&me, &notice.request, &message)?)
    }

    pub fn logs(&self, session: &Session, query: &LogQuery) -> Result<Vec<LogEntryAsset>, ApiError> {
        let me = session.identity()?;
        let (mut app, mut ctrl) = (query.application_id.clone(), query.controller_id.clone());
        match session.kind() {
            ParticipantKind::Admin => {}
            ParticipantKind::Controller => ctrl = Some(me.id().to_owned()),
            ParticipantKind::Application => app = Some(me.id().to_owned()),
        }
        let mut logs: Vec<LogEntryAsset> = self
            .aaa
            .logs()
            .into_iter()
            .filter(|l| app.as_ref().is_none_or(|a| &l.application_id == a))
            .filter(|l| ctrl.as_ref().is_none_or(|c| &l.controller_id == c))
            .filter(|l| query.action.is_none_or(|a| l.action == a))
            .collect();
        logs.sort_by(|a, b| a.created_time.cmp(&b.created_time).then_with(|| a.id.cmp(&b.id)));
        if let Some(limit) = query.limit {
            let skip = logs.len().saturating_sub(limit);
            logs.drain(..skip);
        }
        Ok(logs)
    }

    // ---- admin operations ----

    fn with_quota(&self, mut app: ApplicationAsset) -> ApplicationAsset {
        app.quota_used = self.limiter.used(&app.id);
        app
    }

    fn enroll(&self, id: &str, kind: ParticipantKind, secret: Option<String>) -> Result<(Wallet, Option<String>), ApiError> {
        let identity = self.ca.enroll(id);
        self.ledger()
            .register_member(identity.certificate().clone(), MemberKind::Client)?;
        let (secret, generated) = match secret {
            Some(s) => (s, None),
            None => {
                let s = random_secret();
                (s.clone(), Some(s))
            }
        };
        self.credentials
            .write()
            .insert(id.to_owned(), Credential::new(kind, &secret));
        self.keystore
            .lock()
            .certificates
            .push(identity.certificate().to_base64());
        self.persist_api()?;
        Ok((identity.to_wallet(), generated))
    }

    fn retire(&self, id: &str) -> Result<(), ApiError> {
        self.credentials.write().remove(id);
        self.limiter.forget(id);
        self.persist_api()
    }

    pub fn list_applications(&self, session: &Session) -> Result<Vec<ApplicationAsset>, ApiError> {
        self.require(session, ParticipantKind::Admin)?;
        Ok(self
            .read(store::list::<ApplicationAsset>)
            .into_iter()
            .map(|a| self.with_quota(a))
            .collect())
    }

    pub fn get_application(&self, session: &Session, id: &str) -> Result<ApplicationAsset, ApiError> {
        self.require(session, ParticipantKind::Admin)?;
        self.read(|s| store::load::<ApplicationAsset>(s, id))
            .map(|a| self.with_quota(a))
            .ok_or_else(|| not_found("application", id))
    }

    pub fn create_application(
        &self,
        session: &Session,
        body: NewApplication,
    ) -> Result<Enrollment<ApplicationAsset>, ApiError> {
        let admin = self.require(session, ParticipantKind::Admin)?;
        let asset: ApplicationAsset = self.commit_as(
            &admin,
            AssetTx::AddApplication(AddApplication {
                id: body.id.clone(),
                name: body.name,
                trust_index: body.trust_index.unwrap_or(i64::from(store::DEFAULT_TRUST_INDEX)),
                role_id: body.role_id,
            }),
        )?;
        let (wallet, secret) = self.enroll(&body.id, ParticipantKind::Application, body.secret)?;
        Ok(Enrollment { asset, wallet, secret })
    }

    pub fn update_application(
        &self,
        session: &Session,
        id: &str,
        body: ApplicationUpdate,
    ) -> Result<ApplicationAsset, ApiError> {
        let admin = self.require(session, ParticipantKind::Admin)?;
        if body.name.is_none() && body.role_id.is_none() {
            return Err(ApiError::BadRequest("nothing to update".to_owned()));
        }
        if let Some(name) = body.name {
            self.commit(
                &admin,
                AssetTx::UpdateApplication(UpdateApplication {
                    app_id: id.to_owned(),
                    name,
                }),
            )?;
        }
        if let Some(role_id) = body.role_id {
            self.commit(
                &admin,
                AssetTx::UpdateAppRole(UpdateAppRole {
                    app_id: id.to_owned(),
                    role_id,
                }),
            )?;
        }
        self.get_application(session, id)
    }

    pub fn remove_application(&self, session: &Session, id: &str) -> Result<Value, ApiError> {
        let admin = self.require(session, ParticipantKind::Admin)?;
        let removed = self.commit(&admin, AssetTx::RemoveApplication(RemoveApplication { app_id: id.to_owned() }))?;
        self.retire(id)?;
        Ok(removed)
    }

    pub fn recover_trust(&self, session: &Session, id: &str, value: i64) -> Result<ApplicationAsset, ApiError> {
        let admin = self.require(session, ParticipantKind::Admin)?;
        self.aaa.recover_trust(&admin, id, value)?;
        self.get_application(session, id)
    }

    pub fn list_controllers(&self, session: &Session) -> Result<Vec<ControllerAsset>, ApiError> {
        self.require(session, ParticipantKind::Admin)?;
        Ok(self.read(store::list::<ControllerAsset>))
    }

    pub fn get_controller(&self, session: &Session, id: &str) -> Result<ControllerAsset, ApiError> {
        self.require(session, ParticipantKind::Admin)?;
        self.read(|s| store::load(s, id))
            .ok_or_else(|| not_found("controller", id))
    }

    pub fn create_controller(
        &self,
        session: &Session,
        body: NewController,
    ) -> Result<Enrollment<ControllerAsset>, ApiError> {
        let admin = self.require(session, ParticipantKind::Admin)?;
        let asset: ControllerAsset = self.commit_as(
            &admin,
            AssetTx::AddController(AddController {
                id: body.id.clone(),
                name: body.name,
                permissions: body.permissions,
            }),
        )?;
        let (wallet, secret) = self.enroll(&body.id, ParticipantKind::Controller, body.secret)?;
        Ok(Enrollment { asset, wallet, secret })
    }

    pub fn update_controller(
        &self,
        session: &Session,
        id: &str,
        body: ControllerUpdate,
    ) -> Result<ControllerAsset, ApiError> {
        let admin = self.require(session, ParticipantKind::Admin)?;
        self.commit_as(
            &admin,
            AssetTx::UpdateController(UpdateController {
                controller_id: id.to_owned(),
                name: body.name,
                permissions: body.permissions,
            }),
        )
    }

    pub fn remove_controller(&self, session: &Session, id: &str) -> Result<Value, ApiError> {
        let admin = self.require(session, ParticipantKind::Admin)?;
        let removed = self.commit(
            &admin,
            AssetTx::RemoveController(RemoveController {
                controller_id: id.to_owned(),
            }),
        )?;
        self.retire(id)?;
        Ok(removed)
    }

    pub fn list_roles(&self, session: &Session) -> Result<Vec<RoleAsset>, ApiError> {
        self.require(session, ParticipantKind::Admin)?;
        Ok(self.read(store::list::<RoleAsset>))
    }

    pub fn get_role(&self, session: &Session, id: &str) -> Result<RoleAsset, ApiError> {
        self.require(session, ParticipantKind::Admin)?;
        self.read(|s| store::load(s, id)).ok_or_else(|| not_found("role", id))
    }

    pub fn create_role(&self, session: &Session, body: NewRole) -> Result<RoleAsset, ApiError> {
        let admin = self.require(session, ParticipantKind::Admin)?;
        self.commit_as(
            &admin,
            AssetTx::CreateRole(CreateRole {
                id: body.id,
                name: body.name,
                permissions: body.permissions,
                priority: body.priority,
            }),
        )
    }

    pub fn update_role(&self, session: &Session, id: &str, body: RoleUpdate) -> Result<RoleAsset, ApiError> {
        let admin = self.require(session, ParticipantKind::Admin)?;
        self.commit_as(
            &admin,
            AssetTx::UpdateRole(UpdateRole {
                role_id: id.to_owned(),
                name: body.name,
                permissions: body.permissions,
            }),
        )
    }

    pub fn list_permissions(&self, session: &Session) -> Result<Vec<PermissionAsset>, ApiError> {
        self.require(session, ParticipantKind::Admin)?;
        Ok(self.read(store::list::<PermissionAsset>))
    }

    pub fn get_permission(&self, session: &Session, id: &str) -> Result<PermissionAsset, ApiError> {
        self.require(session, ParticipantKind::Admin)?;
        self.read(|s| store::load(s, id))
            .ok_or_else(|| not_found("permission", id))
    }

    pub fn create_permission(&self, session: &Session, body: NewPermission) -> Result<PermissionAsset, ApiError> {
        let admin = self.require(session, ParticipantKind::Admin)?;
        self.commit_as(
            &admin,
            AssetTx::CreatePermission(CreatePermission {
                id: body.id,
                name: body.name,
                resource_object: body.resource_object,
            }),
        )
    }

    pub fn remove_permission(&self, session: &Session, id: &str) -> Result<Value, ApiError> {
        let admin = self.require(session, ParticipantKind::Admin)?;
        self.commit(
            &admin,
            AssetTx::RemovePermission(RemovePermission {
                permission_id: id.to_owned(),
            }),
        )
    }

    pub fn list_tokens(&self, session: &Session, query: &TokenQuery) -> Result<Vec<TokenAsset>, ApiError> {
        self.require(session, ParticipantKind::Admin)?;
        let mut tokens: Vec<TokenAsset> = self
            .read(store::list::<TokenAsset>)
            .into_iter()
            .filter(|t| query.status.is_none_or(|s| t.status == s))
            .collect();
        tokens.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        Ok(tokens)
    }

    pub fn issue_token(&self, session: &Session, id: &str) -> Result<TokenAsset, ApiError> {
        let admin = self.require(session, ParticipantKind::Admin)?;
        self.commit_as(&admin, AssetTx::IssueToken(IssueToken { token_id: id.to_owned() }))
    }

    pub fn expire_token(&self, session: &Session, id: &str) -> Result<TokenAsset, ApiError> {
        let admin = self.require(session, ParticipantKind::Admin)?;
        self.commit_as(&admin, AssetTx::ExpireToken(ExpireToken { token_id: id.to_owned() }))
    }

    pub fn thresholds(&self, session: &Session) -> Result<BTreeMap<ResourceObject, u8>, ApiError> {
        session.identity()?;
        Ok(self.aaa.policy().snapshot())
    }

    pub fn set_threshold(
        &self,
        session: &Session,
        object: &str,
        value: i64,
    ) -> Result<BTreeMap<ResourceObject, u8>, ApiError> {
        self.require(session, ParticipantKind::Admin)?;
        let object: ResourceObject = object
            .parse()
            .map_err(|e: nbguard_core::policy::PolicyError| ApiError::NotFound(e.to_string()))?;
        self.aaa
            .policy()
            .set_threshold(object, value)
            .map_err(|e| ApiError::BadRequest(e.to_string()))?;
        self.persist_api()?;
        Ok(self.aaa.policy().snapshot())
    }

    pub fn blocks(&self, session: &Session, query: &BlockQuery) -> Result<BlocksResponse, ApiError> {
        self.require(session, ParticipantKind::Admin)?;
        let from = query.from.unwrap_or(0);
        let limit = query.limit.unwrap_or(usize::MAX);
        let blocks = self
            .ledger()
            .blocks()
            .into_iter()
            .skip_while(|b| b.number < from)
            .take(limit)
            .map(|b| BlockSummary {
                number: b.number,
                hash: hex::encode(b.header_hash()),
                prev_hash: hex::encode(b.prev_hash),
                data_hash: hex::encode(b.data_hash),
                timestamp: b.timestamp,
                transactions: b
                    .transactions
                    .iter()
                    .enumerate()
                    .map(|(i, tx)| TxSummary {
                        proposal_id: tx.proposal.proposal_id,
                        tx_type: tx.proposal.tx_type,
                        submitter: tx.proposal.submitter.clone(),
                        validity: b.validity.get(i).copied(),
                    })
                    .collect(),
            })
            .collect();
        Ok(BlocksResponse {
            height: self.ledger().height(),
            chain_valid: self.ledger().verify_chain(),
            blocks,
        })
    }
}

fn not_found(kind: &str, id: &str) -> ApiError {
    ApiError::NotFound(format!("{kind} {id:?} not found"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn admin_logs_in_and_binds_its_card() {
        let gw = Gateway::in_memory(GatewayConfig::new("pw"));
        assert!(gw.login("admin", "nope").is_err());
        let login = gw.login("admin", "pw").unwrap();
        let session = gw.session(Some(&login.token)).unwrap();
        assert!(!session.has_wallet());
        gw.upload_wallet(&session, &gw.admin_wallet()).unwrap();
        assert!(gw.session(Some(&login.token)).unwrap().has_wallet());
        // a second login is a separate session
        let other = gw.login("admin", "pw").unwrap();
        assert!(!gw.session(Some(&other.token)).unwrap().has_wallet());
    }
}
