//! Execute–order–validate ledger.
//!
//! Proposals are simulated by every online peer against its copy of the
//! world state (execute), queued by a single FIFO orderer that cuts blocks
//! by size or timeout (order), and finally checked by each peer for
//! endorsement policy, MVCC read versions and duplicate ids before their
//! write sets are applied (validate). The ledger node keeps its own
//! committed view, which serves queries.

pub mod membership;
pub mod orderer;
pub mod state;
pub mod store;
pub mod types;
pub mod validate;

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Weak};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use chrono::Utc;
use parking_lot::{Condvar, Mutex, RwLock};
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;
use uuid::Uuid;

use crate::identity::{Certificate, CertificateAuthority, Identity};

pub use membership::{MemberKind, Membership};
pub use orderer::{order_all, Orderer, OrdererConfig};
pub use state::{TxContext, VersionedValue, WorldState};
pub use store::BlockFile;
pub use types::{
    Block, Endorsement, EndorsementStatus, Hash, Payload, ReadEntry, Transaction,
    TransactionProposal, TxType, TxValidity, WriteEntry, ZERO_HASH,
};
pub use validate::{required_endorsements, Validator};

pub const MAX_PEERS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LedgerError {
    #[error("unknown submitter {0}")]
    UnknownSubmitter(String),
    #[error("proposal signature does not verify")]
    InvalidSignature,
    #[error("certificate for {0} is not signed by the CA")]
    UntrustedCertificate(String),
    #[error("{0} is already registered as a different member kind")]
    MemberKindClash(String),
    #[error("invalid ledger configuration: {0}")]
    InvalidConfig(String),
    #[error("endorsement policy not met: {agreeing} agreeing of {required} required")]
    EndorsementPolicy {
        agreeing: usize,
        required: usize,
        reasons: Vec<String>,
    },
    #[error("transaction {proposal_id} invalidated in block {block}: {validity:?}")]
    Invalidated {
        proposal_id: Uuid,
        block: u64,
        validity: TxValidity,
    },
    #[error("block rejected: {0}")]
    BlockRejected(String),
    #[error("chain storage: {0}")]
    Storage(String),
    #[error("stored chain is invalid: {0}")]
    CorruptChain(#[from] ChainError),
    #[error("timed out waiting for commit")]
    Timeout,
    #[error("no peer with index {0}")]
    NoSuchPeer(usize),
}

impl LedgerError {
    pub fn is_mvcc_conflict(&self) -> bool {
        matches!(
            self,
            LedgerError::Invalidated {
                validity: TxValidity::MvccReadConflict,
                ..
            }
        )
    }
}

/// Failure of a submission: either the ledger refused it, or the chaincode
/// handler rejected it during endorsement.
#[derive(Debug, Error)]
pub enum SubmitError<E> {
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("{0}")]
    Chaincode(E),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChainError {
    #[error("chain has no genesis block")]
    Empty,
    #[error("block {0} does not decode")]
    Decode(usize),
    #[error("block {0} is not in canonical form")]
    NonCanonical(usize),
    #[error("genesis block is malformed")]
    Genesis,
    #[error("block at position {0} has the wrong number")]
    Number(usize),
    #[error("block {0} does not link to its predecessor")]
    Link(usize),
    #[error("block {0} data hash mismatch")]
    DataHash(usize),
    #[error("block {0} validity flags do not match replay")]
    Validity(usize),
}

/// Simulates proposals against a world state. Must be deterministic: the
/// result may depend only on the context's state and proposal.
pub trait Chaincode: Send + Sync + 'static {
    type Error: std::error::Error + Send + Sync + 'static;

    fn invoke(&self, ctx: &mut TxContext<'_>) -> Result<Value, Self::Error>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LedgerConfig {
    pub peer_count: usize,
    pub orderer: OrdererConfig,
}

impl Default for LedgerConfig {
    fn default() -> Self {
        LedgerConfig {
            peer_count: 3,
            orderer: OrdererConfig::default(),
        }
    }
}

impl LedgerConfig {
    pub fn with_peers(peer_count: usize) -> Self {
        LedgerConfig {
            peer_count,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommitReceipt {
    pub proposal_id: Uuid,
    pub block_number: u64,
    pub tx_index: usize,
    pub validity: TxValidity,
    pub response: Value,
}

struct Peer {
    identity: Identity,
    state: WorldState,
    seen: HashSet<Uuid>,
    height: u64,
    online: bool,
}

struct Committed {
    chain: Vec<Arc<Block>>,
    state: WorldState,
    seen: HashSet<Uuid>,
    receipts: HashMap<Uuid, CommitReceipt>,
}

struct Pipeline {
    orderer: Orderer,
    store: Option<BlockFile>,
}

pub struct Ledger<C: Chaincode> {
    chaincode: C,
    config: LedgerConfig,
    peer_ids: Vec<String>,
    membership: RwLock<Membership>,
    peers: Vec<RwLock<Peer>>,
    pipeline: Mutex<Pipeline>,
    committed: RwLock<Committed>,
    commits: Mutex<u64>,
    commit_cv: Condvar,
}

/// Result of replaying a chain from genesis.
#[derive(Debug)]
pub struct Replay {
    pub blocks: Vec<Block>,
    pub state: WorldState,
    pub seen: HashSet<Uuid>,
    pub receipts: HashMap<Uuid, CommitReceipt>,
}

/// Decodes and checks an encoded chain: canonical form, numbering, hash
/// links, data hashes, and validity flags re-derived by replay (which in
/// turn checks every proposal and endorsement signature).
pub fn replay_encoded(
    encoded: &[Vec<u8>],
    peer_ids: &[String],
    membership: &Membership,
) -> Result<Replay, ChainError> {
    if encoded.is_empty() {
        return Err(ChainError::Empty);
    }
    let validator = Validator {
        peers: peer_ids,
        membership,
    };
    let mut blocks = Vec::with_capacity(encoded.len());
    let mut state = WorldState::new();
    let mut seen = HashSet::new();
    let mut receipts = HashMap::new();
    for (i, bytes) in encoded.iter().enumerate() {
        let block = Block::decode(bytes).map_err(|_| ChainError::Decode(i))?;
        if block.encode() != *bytes {
            return Err(ChainError::NonCanonical(i));
        }
        if i == 0 {
            if block != Block::genesis() {
                return Err(ChainError::Genesis);
            }
        } else {
            let prev: &Block = &blocks[i - 1];
            if block.number != i as u64 {
                return Err(ChainError::Number(i));
            }
            if block.prev_hash != prev.header_hash() {
                return Err(ChainError::Link(i));
            }
            if !block.data_hash_matches() {
                return Err(ChainError::DataHash(i));
            }
            let results = validator.apply_block_detailed(&mut state, &mut seen, &block);
            if !results.iter().map(|(v, _)| v).eq(block.validity.iter()) {
                return Err(ChainError::Validity(i));
            }
            index_receipts(&mut receipts, &block, results);
        }
        blocks.push(block);
    }
    Ok(Replay {
        blocks,
        state,
        seen,
        receipts,
    })
}

impl<C: Chaincode> Ledger<C> {
    /// In-memory ledger whose peers are enrolled with `ca`.
    pub fn with_ca(
        config: LedgerConfig,
        chaincode: C,
        ca: &CertificateAuthority,
    ) -> Result<Self, LedgerError> {
        let peers = (0..config.peer_count)
            .map(|i| ca.enroll(&format!("peer{i}")))
            .collect();
        Self::new(config, chaincode, Membership::new(ca.public_key()), peers)
    }

    /// In-memory ledger with explicit peer identities; they are added to
    /// `membership` as peers.
    pub fn new(
        config: LedgerConfig,
        chaincode: C,
        membership: Membership,
        peers: Vec<Identity>,
    ) -> Result<Self, LedgerError> {
        Self::build(config, chaincode, membership, peers, None, Vec::new())
    }

    /// Ledger persisted to `path`. An existing chain file is verified and
    /// replayed to rebuild the world state.
    pub fn open(
        path: impl AsRef<Path>,
        config: LedgerConfig,
        chaincode: C,
        membership: Membership,
        peers: Vec<Identity>,
    ) -> Result<Self, LedgerError> {
        let (file, records) =
            BlockFile::open(path).map_err(|e| LedgerError::Storage(e.to_string()))?;
        Self::build(config, chaincode, membership, peers, Some(file), records)
    }

    fn build(
        config: LedgerConfig,
        chaincode: C,
        mut membership: Membership,
        peers: Vec<Identity>,
        mut store: Option<BlockFile>,
        records: Vec<Vec<u8>>,
    ) -> Result<Self, LedgerError> {
        if config.peer_count == 0 || config.peer_count > MAX_PEERS {
            return Err(LedgerError::InvalidConfig(format!(
                "peer count must be in 1..={MAX_PEERS}, got {}",
                config.peer_count
            )));
        }
        if peers.len() != config.peer_count {
            return Err(LedgerError::InvalidConfig(format!(
                "expected {} peer identities, got {}",
                config.peer_count,
                peers.len()
            )));
        }
        if config.orderer.max_block_size == 0 {
            return Err(LedgerError::InvalidConfig("block size must be positive".into()));
        }
        for peer in &peers {
            membership.register(peer.certificate().clone(), MemberKind::Peer)?;
        }
        let peer_ids: Vec<String> = peers.iter().map(|p| p.id().to_owned()).collect();

        let (blocks, state, seen, receipts) = if records.is_empty() {
            let genesis = Block::genesis();
            if let Some(file) = store.as_mut() {
                file.append(&genesis.encode())
                    .map_err(|e| LedgerError::Storage(e.to_string()))?;
            }
            (vec![genesis], WorldState::new(), HashSet::new(), HashMap::new())
        } else {
            let replay = replay_encoded(&records, &peer_ids, &membership)?;
            (replay.blocks, replay.state, replay.seen, replay.receipts)
        };
        let height = blocks.len() as u64;
        let tip = blocks.last().expect("genesis present").header_hash();
        let peers = peers
            .into_iter()
            .map(|identity| {
                RwLock::new(Peer {
                    identity,
                    state: state.clone(),
                    seen: seen.clone(),
                    height,
                    online: true,
                })
            })
            .collect();

        Ok(Ledger {
            chaincode,
            config,
            peer_ids,
            membership: RwLock::new(membership),
            peers,
            pipeline: Mutex::new(Pipeline {
                orderer: Orderer::new(config.orderer, height, tip),
                store,
            }),
            committed: RwLock::new(Committed {
                chain: blocks.into_iter().map(Arc::new).collect(),
                state,
                seen,
                receipts,
            }),
            commits: Mutex::new(0),
            commit_cv: Condvar::new(),
        })
    }

    pub fn config(&self) -> LedgerConfig {
        self.config
    }

    pub fn chaincode(&self) -> &C {
        &self.chaincode
    }

    pub fn peer_ids(&self) -> &[String] {
        &self.peer_ids
    }

    pub fn membership(&self) -> Membership {
        self.membership.read().clone()
    }

    pub fn register_member(
        &self,
        certificate: Certificate,
        kind: MemberKind,
    ) -> Result<(), LedgerError> {
        self.membership.write().register(certificate, kind)
    }

    pub fn is_member(&self, id: &str) -> bool {
        self.membership.read().contains(id)
    }

    /// Execute phase: checks the proposal signature, then has every online
    /// peer simulate it. World state is not modified.
    pub fn submit(&self, proposal: &TransactionProposal) -> Result<Vec<Endorsement>, LedgerError> {
        self.endorse(proposal).map(|(endorsements, _)| endorsements)
    }

    fn endorse(
        &self,
        proposal: &TransactionProposal,
    ) -> Result<(Vec<Endorsement>, Vec<C::Error>), LedgerError> {
        {
            let membership = self.membership.read();
            if membership.kind(&proposal.submitter) != Some(MemberKind::Client) {
                return Err(LedgerError::UnknownSubmitter(proposal.submitter.clone()));
            }
            if !membership.verify(&proposal.submitter, &proposal.signed_bytes(), &proposal.signature)
            {
                return Err(LedgerError::InvalidSignature);
            }
        }
        // Holding the committed view keeps all peers at the same height.
        let _view = self.committed.read();
        let mut endorsements = Vec::with_capacity(self.peers.len());
        let mut errors = Vec::new();
        for peer in &self.peers {
            let peer = peer.read();
            if !peer.online {
                continue;
            }
            let mut ctx = TxContext::new(&peer.state, proposal);
            let endorsement = match self.chaincode.invoke(&mut ctx) {
                Ok(response) => {
                    let (reads, writes) = ctx.into_sets();
                    Endorsement::signed(
                        &peer.identity,
                        proposal,
                        reads,
                        writes,
                        response,
                        EndorsementStatus::Endorsed,
                    )
                }
                Err(e) => {
                    let reason = e.to_string();
                    errors.push(e);
                    Endorsement::signed(
                        &peer.identity,
                        proposal,
                        Vec::new(),
                        Vec::new(),
                        Value::Null,
                        EndorsementStatus::Failed { reason },
                    )
                }
            };
            endorsements.push(endorsement);
        }
        Ok((endorsements, errors))
    }

    /// Endorses and checks the policy client-side, yielding a transaction
    /// ready for ordering.
    fn endorse_for_ordering(
        &self,
        proposal: TransactionProposal,
    ) -> Result<Transaction, SubmitError<C::Error>> {
        let (endorsements, mut errors) = self.endorse(&proposal)?;
        let tx = Transaction {
            proposal,
            endorsements,
        };
        let membership = self.membership.read();
        let validator = Validator {
            peers: &self.peer_ids,
            membership: &membership,
        };
        if validator.endorsement_majority(&tx).is_some() {
            drop(membership);
            return Ok(tx);
        }
        let endorsed = tx.endorsements.iter().filter(|e| e.is_endorsed()).count();
        if endorsed == 0 && !errors.is_empty() {
            return Err(SubmitError::Chaincode(errors.swap_remove(0)));
        }
        let reasons = tx
            .endorsements
            .iter()
            .filter_map(|e| match &e.status {
                EndorsementStatus::Failed { reason } => Some(format!("{}: {reason}", e.peer_id)),
                EndorsementStatus::Endorsed => None,
            })
            .collect();
        Err(SubmitError::Ledger(LedgerError::EndorsementPolicy {
            agreeing: endorsed,
            required: required_endorsements(self.peer_ids.len()),
            reasons,
        }))
    }

    /// Endorses and queues the transaction; it is committed when the
    /// orderer cuts its block (size limit, `tick` after the timeout, or
    /// `flush`).
    pub fn submit_async(&self, proposal: TransactionProposal) -> Result<Uuid, SubmitError<C::Error>> {
        let id = proposal.proposal_id;
        let tx = self.endorse_for_ordering(proposal)?;
        let mut pipeline = self.pipeline.lock();
        if let (_, Some(block)) = pipeline.orderer.enqueue(tx, Instant::now(), Utc::now()) {
            self.commit_block(&mut pipeline, block)?;
        }
        Ok(id)
    }

    /// Endorses, orders and commits in one call. The block is cut as soon as
    /// this transaction is queued, carrying any other pending transactions
    /// with it.
    pub fn submit_and_commit(
        &self,
        proposal: TransactionProposal,
    ) -> Result<CommitReceipt, SubmitError<C::Error>> {
        let id = proposal.proposal_id;
        let tx = self.endorse_for_ordering(proposal)?;
        let block = {
            let mut pipeline = self.pipeline.lock();
            let (_, cut) = pipeline.orderer.enqueue(tx, Instant::now(), Utc::now());
            let block = match cut {
                Some(block) => block,
                None => pipeline.orderer.cut(Utc::now()).expect("just enqueued"),
            };
            self.commit_block(&mut pipeline, block)?
        };
        // ours was queued last, so it is the last occurrence of the id
        let index = block
            .transactions
            .iter()
            .rposition(|t| t.proposal.proposal_id == id)
            .expect("transaction is in the cut block");
        let validity = block.validity[index];
        if !validity.is_valid() {
            return Err(SubmitError::Ledger(LedgerError::Invalidated {
                proposal_id: id,
                block: block.number,
                validity,
            }));
        }
        self.receipt(&id).ok_or(SubmitError::Ledger(LedgerError::Timeout))
    }

    /// Cuts a block if the oldest pending transaction has timed out.
    pub fn tick(&self) -> Result<Option<u64>, LedgerError> {
        let mut pipeline = self.pipeline.lock();
        match pipeline.orderer.ready_batch(Instant::now(), Utc::now()) {
            Some(block) => self.commit_block(&mut pipeline, block).map(|b| Some(b.number)),
            None => Ok(None),
        }
    }

    /// Cuts and commits everything pending.
    pub fn flush(&self) -> Result<Vec<u64>, LedgerError> {
        let mut pipeline = self.pipeline.lock();
        let blocks = pipeline.orderer.flush(Utc::now());
        let mut numbers = Vec::with_capacity(blocks.len());
        for block in blocks {
            numbers.push(self.commit_block(&mut pipeline, block)?.number);
        }
        Ok(numbers)
    }

    pub fn pending(&self) -> usize {
        self.pipeline.lock().orderer.pending_len()
    }

    /// Validate phase for an externally supplied block.
    pub fn validate_and_commit(&self, block: Block) -> Result<Vec<TxValidity>, LedgerError> {
        let mut pipeline = self.pipeline.lock();
        self.commit_block(&mut pipeline, block).map(|b| b.validity.clone())
    }

    fn commit_block(
        &self,
        pipeline: &mut Pipeline,
        mut block: Block,
    ) -> Result<Arc<Block>, LedgerError> {
        let membership = self.membership.read().clone();
        let validator = Validator {
            peers: &self.peer_ids,
            membership: &membership,
        };
        let mut committed = self.committed.write();
        let result = (|| {
            let tip = committed.chain.last().expect("genesis present");
            if block.number != tip.number + 1 {
                return Err(LedgerError::BlockRejected(format!(
                    "expected block {}, got {}",
                    tip.number + 1,
                    block.number
                )));
            }
            if block.prev_hash != tip.header_hash() {
                return Err(LedgerError::BlockRejected("previous hash mismatch".into()));
            }
            if !block.data_hash_matches() {
                return Err(LedgerError::BlockRejected("data hash mismatch".into()));
            }
            let Committed { state, seen, .. } = &mut *committed;
            let results = validator.apply_block_detailed(state, seen, &block);
            block.validity = results.iter().map(|(v, _)| *v).collect();
            let block = Arc::new(block);
            if let Some(file) = pipeline.store.as_mut() {
                file.append(&block.encode())
                    .map_err(|e| LedgerError::Storage(e.to_string()))?;
            }
            committed.chain.push(Arc::clone(&block));
            index_receipts(&mut committed.receipts, &block, results);
            Ok(block)
        })();
        let tip = committed.chain.last().expect("genesis present");
        pipeline.orderer.set_tip(tip.number + 1, tip.header_hash());
        let block = result?;

        for (i, peer) in self.peers.iter().enumerate() {
            let mut peer = peer.write();
            if !peer.online {
                continue;
            }
            let Peer { state, seen, .. } = &mut *peer;
            let flags = validator.apply_block(state, seen, &block);
            peer.height += 1;
            if flags != block.validity {
                tracing::error!(peer = i, block = block.number, "peer validation diverged; taking it offline");
                peer.online = false;
            }
        }
        drop(committed);

        *self.commits.lock() += 1;
        self.commit_cv.notify_all();
        tracing::debug!(block = block.number, txs = block.transactions.len(), "committed block");
        Ok(block)
    }

    pub fn receipt(&self, proposal_id: &Uuid) -> Option<CommitReceipt> {
        self.committed.read().receipts.get(proposal_id).cloned()
    }

    /// Blocks until `proposal_id` is committed or `timeout` elapses.
    pub fn wait(&self, proposal_id: &Uuid, timeout: Duration) -> Result<CommitReceipt, LedgerError> {
        let deadline = Instant::now() + timeout;
        let mut guard = self.commits.lock();
        loop {
            if let Some(receipt) = self.receipt(proposal_id) {
                return Ok(receipt);
            }
            if self.commit_cv.wait_until(&mut guard, deadline).timed_out() {
                return self.receipt(proposal_id).ok_or(LedgerError::Timeout);
            }
        }
    }

    /// Starts a thread that calls [`Ledger::tick`] every `interval`, so
    /// queued transactions are committed once the batch timeout passes.
    pub fn spawn_batcher(self: &Arc<Self>, interval: Duration) -> Batcher {
        let stop = Arc::new(AtomicBool::new(false));
        let weak: Weak<Self> = Arc::downgrade(self);
        let flag = Arc::clone(&stop);
        let handle = std::thread::Builder::new()
            .name("ledger-batcher".into())
            .spawn(move || {
                while !flag.load(Ordering::Relaxed) {
                    std::thread::sleep(interval);
                    let Some(ledger) = weak.upgrade() else { break };
                    if let Err(e) = ledger.tick() {
                        tracing::error!(error = %e, "batch commit failed");
                    }
                }
            })
            .expect("spawn batcher thread");
        Batcher {
            stop,
            handle: Some(handle),
        }
    }

    pub fn crash_peer(&self, index: usize) -> Result<(), LedgerError> {
        self.peers
            .get(index)
            .ok_or(LedgerError::NoSuchPeer(index))?
            .write()
            .online = false;
        Ok(())
    }

    /// Brings a peer back and replays the blocks it missed.
    pub fn restart_peer(&self, index: usize) -> Result<(), LedgerError> {
        let slot = self.peers.get(index).ok_or(LedgerError::NoSuchPeer(index))?;
        let membership = self.membership.read().clone();
        let validator = Validator {
            peers: &self.peer_ids,
            membership: &membership,
        };
        let committed = self.committed.read();
        let mut peer = slot.write();
        for block in &committed.chain[peer.height as usize..] {
            let Peer { state, seen, .. } = &mut *peer;
            validator.apply_block(state, seen, block);
            peer.height += 1;
        }
        peer.online = true;
        Ok(())
    }

    pub fn peer_online(&self, index: usize) -> bool {
        self.peers.get(index).is_some_and(|p| p.read().online)
    }

    pub fn peer_state_bytes(&self, index: usize) -> Option<Vec<u8>> {
        self.peers.get(index).map(|p| p.read().state.encode())
    }

    pub fn query_state(&self, key: &str) -> Option<(Value, u64)> {
        self.committed
            .read()
            .state
            .get(key)
            .map(|(v, version)| (v.clone(), version))
    }

    pub fn scan_state(&self, prefix: &str) -> Vec<(String, Value, u64)> {
        self.committed
            .read()
            .state
            .scan_prefix(prefix)
            .map(|(k, v, version)| (k.to_owned(), v.clone(), version))
            .collect()
    }

    /// Runs `f` against a consistent snapshot of the committed state.
    pub fn with_state<R>(&self, f: impl FnOnce(&WorldState) -> R) -> R {
        f(&self.committed.read().state)
    }

    pub fn state_bytes(&self) -> Vec<u8> {
        self.committed.read().state.encode()
    }

    /// Number of blocks, genesis included.
    pub fn height(&self) -> u64 {
        self.committed.read().chain.len() as u64
    }

    pub fn blocks(&self) -> Vec<Arc<Block>> {
        self.committed.read().chain.clone()
    }

    pub fn block(&self, number: u64) -> Option<Arc<Block>> {
        self.committed.read().chain.get(number as usize).cloned()
    }

    pub fn encoded_chain(&self) -> Vec<Vec<u8>> {
        self.blocks().iter().map(|b| b.encode()).collect()
    }

    /// Replays the whole chain on a fresh state.
    pub fn replay(&self) -> Result<Replay, ChainError> {
        let encoded = self.encoded_chain();
        replay_encoded(&encoded, &self.peer_ids, &self.membership())
    }

    /// True iff every hash link, data hash and signature holds from genesis
    /// to tip and replay reproduces the committed state.
    pub fn verify_chain(&self) -> bool {
        match self.replay() {
            Ok(replay) => replay.state.encode() == self.state_bytes(),
            Err(_) => false,
        }
    }
}

fn index_receipts(
    receipts: &mut HashMap<Uuid, CommitReceipt>,
    block: &Block,
    results: Vec<(TxValidity, Value)>,
) {
    for (i, (tx, (validity, response))) in block.transactions.iter().zip(results).enumerate() {
        // a later duplicate never replaces the original receipt
        receipts
            .entry(tx.proposal.proposal_id)
            .or_insert(CommitReceipt {
                proposal_id: tx.proposal.proposal_id,
                block_number: block.number,
                tx_index: i,
                validity,
                response,
            });
    }
}

/// Handle to the background batch-timeout thread; stops it on drop.
pub struct Batcher {
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl Drop for Batcher {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}
