use std::collections::VecDeque;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};

use super::types::{Block, Hash, Transaction};

pub const DEFAULT_MAX_BLOCK_SIZE: usize = 10;
pub const DEFAULT_BATCH_TIMEOUT: Duration = Duration::from_millis(500);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrdererConfig {
    pub max_block_size: usize,
    pub batch_timeout: Duration,
}

impl Default for OrdererConfig {
    fn default() -> Self {
        OrdererConfig {
            max_block_size: DEFAULT_MAX_BLOCK_SIZE,
            batch_timeout: DEFAULT_BATCH_TIMEOUT,
        }
    }
}

/// Single logical orderer: FIFO by arrival, a block is cut when
/// `max_block_size` transactions are pending or the oldest pending one has
/// waited `batch_timeout`.
#[derive(Debug)]
pub struct Orderer {
    config: OrdererConfig,
    pending: VecDeque<Transaction>,
    oldest_pending: Option<Instant>,
    next_number: u64,
    tip_hash: Hash,
    next_sequence: u64,
}

impl Orderer {
    pub fn new(config: OrdererConfig, next_number: u64, tip_hash: Hash) -> Self {
        assert!(config.max_block_size > 0, "block size must be positive");
        Orderer {
            config,
            pending: VecDeque::new(),
            oldest_pending: None,
            next_number,
            tip_hash,
            next_sequence: 0,
        }
    }

    pub fn config(&self) -> OrdererConfig {
        self.config
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Queues `tx` and returns its arrival sequence number, plus a block if
    /// the queue reached the size limit.
    pub fn enqueue(
        &mut self,
        tx: Transaction,
        now: Instant,
        wall: DateTime<Utc>,
    ) -> (u64, Option<Block>) {
        let seq = self.next_sequence;
        self.next_sequence += 1;
        self.pending.push_back(tx);
        self.oldest_pending.get_or_insert(now);
        let block = (self.pending.len() >= self.config.max_block_size).then(|| self.cut_block(wall));
        (seq, block)
    }

    /// Cuts a block if the oldest pending transaction timed out.
    pub fn ready_batch(&mut self, now: Instant, wall: DateTime<Utc>) -> Option<Block> {
        let oldest = self.oldest_pending?;
        (now.saturating_duration_since(oldest) >= self.config.batch_timeout).then(|| self.cut_block(wall))
    }

    /// Time until the pending batch times out, if anything is pending.
    pub fn time_to_timeout(&self, now: Instant) -> Option<Duration> {
        self.oldest_pending
            .map(|t| self.config.batch_timeout.saturating_sub(now.saturating_duration_since(t)))
    }

    /// Re-anchors numbering after blocks were committed by another path.
    pub fn set_tip(&mut self, next_number: u64, tip_hash: Hash) {
        self.next_number = next_number;
        self.tip_hash = tip_hash;
    }

    /// Cuts whatever is pending, up to one block's worth.
    pub fn cut(&mut self, wall: DateTime<Utc>) -> Option<Block> {
        (!self.pending.is_empty()).then(|| self.cut_block(wall))
    }

    /// Cuts everything pending into as many blocks as needed.
    pub fn flush(&mut self, wall: DateTime<Utc>) -> Vec<Block> {
        let mut blocks = Vec::new();
        while let Some(block) = self.cut(wall) {
            blocks.push(block);
        }
        blocks
    }

    fn cut_block(&mut self, wall: DateTime<Utc>) -> Block {
        let take = self.pending.len().min(self.config.max_block_size);
        let txs: Vec<Transaction> = self.pending.drain(..take).collect();
        // a remainder keeps the earlier deadline
        if self.pending.is_empty() {
            self.oldest_pending = None;
        }
        let block = Block::new(self.next_number, self.tip_hash, wall, txs);
        self.next_number += 1;
        self.tip_hash = block.header_hash();
        block
    }
}

/// Orders `txs` in one go: full blocks, then the remainder.
pub fn order_all(
    config: OrdererConfig,
    next_number: u64,
    tip_hash: Hash,
    txs: Vec<Transaction>,
    wall: DateTime<Utc>,
) -> Vec<Block> {
    let mut orderer = Orderer::new(config, next_number, tip_hash);
    let now = Instant::now();
    let mut blocks = Vec::new();
    for tx in txs {
        if let (_, Some(block)) = orderer.enqueue(tx, now, wall) {
            blocks.push(block);
        }
    }
    blocks.extend(orderer.flush(wall));
    blocks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::CertificateAuthority;
    use crate::ledger::types::{Payload, TransactionProposal, TxType, ZERO_HASH};

    fn txs(n: usize) -> Vec<Transaction> {
        let ca = CertificateAuthority::new("ca", "Org1MSP");
        let admin = ca.enroll("admin");
        (0..n)
            .map(|_| Transaction {
                proposal: TransactionProposal::new(&admin, TxType::CreateRole, Payload::new()),
                endorsements: Vec::new(),
            })
            .collect()
    }

    #[test]
    fn twenty_five_transactions_make_blocks_of_10_10_5() {
        let input = txs(25);
        let ids: Vec<_> = input.iter().map(|t| t.proposal.proposal_id).collect();
        let blocks = order_all(OrdererConfig::default(), 1, ZERO_HASH, input, Utc::now());
        let sizes: Vec<usize> = blocks.iter().map(|b| b.transactions.len()).collect();
        assert_eq!(sizes, [10, 10, 5]);
        let ordered: Vec<_> = blocks
            .iter()
            .flat_map(|b| b.transactions.iter().map(|t| t.proposal.proposal_id))
            .collect();
        assert_eq!(ordered, ids);
        assert_eq!(blocks[1].prev_hash, blocks[0].header_hash());
        assert_eq!(blocks[2].number, 3);
    }

    #[test]
    fn single_transaction_is_cut_after_timeout() {
        let mut orderer = Orderer::new(OrdererConfig::default(), 1, ZERO_HASH);
        let t0 = Instant::now();
        let (seq, block) = orderer.enqueue(txs(1).remove(0), t0, Utc::now());
        assert_eq!(seq, 0);
        assert!(block.is_none());
        assert!(orderer.ready_batch(t0 + Duration::from_millis(499), Utc::now()).is_none());
        let block = orderer
            .ready_batch(t0 + Duration::from_millis(500), Utc::now())
            .expect("timeout cut");
        assert_eq!(block.transactions.len(), 1);
        assert!(orderer.ready_batch(t0 + Duration::from_secs(5), Utc::now()).is_none());
    }

    #[test]
    fn size_cut_happens_before_timeout() {
        let mut orderer = Orderer::new(OrdererConfig::default(), 1, ZERO_HASH);
        let t0 = Instant::now();
        let mut cut = None;
        for (i, tx) in txs(10).into_iter().enumerate() {
            let (seq, block) = orderer.enqueue(tx, t0, Utc::now());
            assert_eq!(seq, i as u64);
            cut = cut.or(block);
        }
        assert_eq!(cut.expect("size cut").transactions.len(), 10);
        assert_eq!(orderer.pending_len(), 0);
        assert_eq!(orderer.time_to_timeout(t0), None);
    }
}
