use std::collections::HashSet;

use serde_json::Value;
use uuid::Uuid;

use super::membership::{MemberKind, Membership};
use super::state::WorldState;
use super::types::{Block, Endorsement, Transaction, TxValidity};

/// Strict majority of `peer_count`.
pub fn required_endorsements(peer_count: usize) -> usize {
    peer_count / 2 + 1
}

/// Commit-time checks shared by every peer and by chain replay.
pub struct Validator<'a> {
    pub peers: &'a [String],
    pub membership: &'a Membership,
}

impl<'a> Validator<'a> {
    pub fn proposal_signed(&self, tx: &Transaction) -> bool {
        let p = &tx.proposal;
        self.membership.kind(&p.submitter) == Some(MemberKind::Client)
            && self.membership.verify(&p.submitter, &p.signed_bytes(), &p.signature)
    }

    /// The agreed endorsement if a strict majority of distinct configured
    /// peers signed identical simulation results. Signature checks stop once
    /// the majority is reached.
    pub fn endorsement_majority<'t>(&self, tx: &'t Transaction) -> Option<&'t Endorsement> {
        let required = required_endorsements(self.peers.len());
        let mut counted: HashSet<&str> = HashSet::new();
        let mut groups: Vec<(&Endorsement, usize)> = Vec::new();
        for e in &tx.endorsements {
            if !e.is_endorsed()
                || e.proposal_id != tx.proposal.proposal_id
                || !self.peers.iter().any(|p| p == &e.peer_id)
                || counted.contains(e.peer_id.as_str())
                || self.membership.kind(&e.peer_id) != Some(MemberKind::Peer)
                || !self
                    .membership
                    .verify(&e.peer_id, &e.signed_bytes(&tx.proposal), &e.peer_signature)
            {
                continue;
            }
            counted.insert(&e.peer_id);
            let count = match groups.iter_mut().find(|(rep, _)| rep.agrees_with(e)) {
                Some((_, n)) => {
                    *n += 1;
                    *n
                }
                None => {
                    groups.push((e, 1));
                    1
                }
            };
            if count >= required {
                return groups.into_iter().find(|(rep, _)| rep.agrees_with(e)).map(|(r, _)| r);
            }
        }
        None
    }

    pub fn validate_tx<'t>(
        &self,
        state: &WorldState,
        seen: &HashSet<Uuid>,
        tx: &'t Transaction,
    ) -> (TxValidity, Option<&'t Endorsement>) {
        if seen.contains(&tx.proposal.proposal_id) {
            return (TxValidity::DuplicateProposal, None);
        }
        if !self.proposal_signed(tx) {
            return (TxValidity::BadProposalSignature, None);
        }
        let Some(agreed) = self.endorsement_majority(tx) else {
            return (TxValidity::EndorsementPolicyFailure, None);
        };
        if agreed.read_set.iter().any(|r| state.version(&r.key) != r.version) {
            return (TxValidity::MvccReadConflict, None);
        }
        (TxValidity::Valid, Some(agreed))
    }

    /// Validates the block's transactions in order, applying each valid
    /// write set before the next transaction is checked.
    pub fn apply_block(
        &self,
        state: &mut WorldState,
        seen: &mut HashSet<Uuid>,
        block: &Block,
    ) -> Vec<TxValidity> {
        self.apply_block_detailed(state, seen, block)
            .into_iter()
            .map(|(validity, _)| validity)
            .collect()
    }

    /// Like [`Validator::apply_block`], also returning the agreed chaincode
    /// response of each valid transaction.
    pub fn apply_block_detailed(
        &self,
        state: &mut WorldState,
        seen: &mut HashSet<Uuid>,
        block: &Block,
    ) -> Vec<(TxValidity, Value)> {
        let mut results = Vec::with_capacity(block.transactions.len());
        for tx in &block.transactions {
            let (validity, agreed) = self.validate_tx(state, seen, tx);
            let response = match agreed {
                Some(e) => {
                    state.apply(&e.write_set);
                    e.response.clone()
                }
                None => Value::Null,
            };
            seen.insert(tx.proposal.proposal_id);
            results.push((validity, response));
        }
        results
    }
}
