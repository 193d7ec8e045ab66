use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::types::{canonical, ReadEntry, TransactionProposal, WriteEntry};

/// A value and the number of committed writes to its key. Deletions leave a
/// tombstone so the version keeps counting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionedValue {
    pub value: Option<Value>,
    pub version: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    entries: BTreeMap<String, VersionedValue>,
}

impl WorldState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Live value and version; `None` for absent or deleted keys.
    pub fn get(&self, key: &str) -> Option<(&Value, u64)> {
        let entry = self.entries.get(key)?;
        entry.value.as_ref().map(|v| (v, entry.version))
    }

    /// Version of `key`, counting tombstones; 0 if it was never written.
    pub fn version(&self, key: &str) -> u64 {
        self.entries.get(key).map_or(0, |e| e.version)
    }

    pub fn apply(&mut self, writes: &[WriteEntry]) {
        for write in writes {
            let entry = self
                .entries
                .entry(write.key.clone())
                .or_insert(VersionedValue {
                    value: None,
                    version: 0,
                });
            entry.value = write.value.clone();
            entry.version += 1;
        }
    }

    /// Live entries whose key starts with `prefix`, in key order.
    pub fn scan_prefix<'a>(
        &'a self,
        prefix: &'a str,
    ) -> impl Iterator<Item = (&'a str, &'a Value, u64)> + 'a {
        self.entries
            .range(prefix.to_owned()..)
            .take_while(move |(k, _)| k.starts_with(prefix))
            .filter_map(|(k, e)| e.value.as_ref().map(|v| (k.as_str(), v, e.version)))
    }

    pub fn len(&self) -> usize {
        self.entries.values().filter(|e| e.value.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn encode(&self) -> Vec<u8> {
        canonical(self)
    }
}

/// Chaincode view of the world state during simulation. Reads record the
/// version seen; writes are buffered and visible to later reads in the same
/// transaction.
pub struct TxContext<'a> {
    state: &'a WorldState,
    proposal: &'a TransactionProposal,
    reads: BTreeMap<String, u64>,
    writes: BTreeMap<String, Option<Value>>,
}

impl<'a> TxContext<'a> {
    pub fn new(state: &'a WorldState, proposal: &'a TransactionProposal) -> Self {
        TxContext {
            state,
            proposal,
            reads: BTreeMap::new(),
            writes: BTreeMap::new(),
        }
    }

    pub fn proposal(&self) -> &TransactionProposal {
        self.proposal
    }

    pub fn get_state(&mut self, key: &str) -> Option<Value> {
        if let Some(pending) = self.writes.get(key) {
            return pending.clone();
        }
        self.reads
            .entry(key.to_owned())
            .or_insert_with(|| self.state.version(key));
        self.state.get(key).map(|(v, _)| v.clone())
    }

    pub fn put_state(&mut self, key: impl Into<String>, value: Value) {
        self.writes.insert(key.into(), Some(value));
    }

    pub fn del_state(&mut self, key: impl Into<String>) {
        self.writes.insert(key.into(), None);
    }

    /// Live entries under `prefix`, merged with this transaction's pending
    /// writes. Every committed key returned joins the read set.
    pub fn scan_prefix(&mut self, prefix: &str) -> Vec<(String, Value)> {
        let mut merged: BTreeMap<String, Value> = BTreeMap::new();
        for (key, value, version) in self.state.scan_prefix(prefix) {
            self.reads.entry(key.to_owned()).or_insert(version);
            merged.insert(key.to_owned(), value.clone());
        }
        for (key, pending) in self.writes.range(prefix.to_owned()..) {
            if !key.starts_with(prefix) {
                break;
            }
            match pending {
                Some(v) => merged.insert(key.clone(), v.clone()),
                None => merged.remove(key),
            };
        }
        merged.into_iter().collect()
    }

    pub fn into_sets(self) -> (Vec<ReadEntry>, Vec<WriteEntry>) {
        let reads = self
            .reads
            .into_iter()
            .map(|(key, version)| ReadEntry { key, version })
            .collect();
        let writes = self
            .writes
            .into_iter()
            .map(|(key, value)| WriteEntry { key, value })
            .collect();
        (reads, writes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::CertificateAuthority;
    use crate::ledger::types::{Payload, TxType};
    use serde_json::json;

    fn write(key: &str, value: Option<Value>) -> WriteEntry {
        WriteEntry {
            key: key.into(),
            value,
        }
    }

    #[test]
    fn versions_count_writes_and_deletes() {
        let mut state = WorldState::new();
        assert_eq!(state.version("a"), 0);
        state.apply(&[write("a", Some(json!(1)))]);
        state.apply(&[write("a", Some(json!(2)))]);
        assert_eq!(state.get("a"), Some((&json!(2), 2)));
        state.apply(&[write("a", None)]);
        assert_eq!(state.get("a"), None);
        assert_eq!(state.version("a"), 3);
        assert!(state.is_empty());
    }

    #[test]
    fn context_reads_its_own_writes_and_records_versions() {
        let ca = CertificateAuthority::new("ca", "Org1MSP");
        let admin = ca.enroll("admin");
        let proposal = TransactionProposal::new(&admin, TxType::CreateRole, Payload::new());
        let mut state = WorldState::new();
        state.apply(&[write("role/a", Some(json!("A"))), write("role/b", Some(json!("B")))]);

        let mut ctx = TxContext::new(&state, &proposal);
        assert_eq!(ctx.get_state("role/a"), Some(json!("A")));
        ctx.put_state("role/c", json!("C"));
        ctx.del_state("role/b");
        assert_eq!(ctx.get_state("role/c"), Some(json!("C")));
        assert_eq!(ctx.get_state("role/b"), None);
        let scanned: Vec<String> = ctx.scan_prefix("role/").into_iter().map(|(k, _)| k).collect();
        assert_eq!(scanned, ["role/a", "role/c"]);
        assert_eq!(ctx.get_state("missing"), None);

        let (reads, writes) = ctx.into_sets();
        assert_eq!(
            reads,
            vec![
                ReadEntry { key: "missing".into(), version: 0 },
                ReadEntry { key: "role/a".into(), version: 1 },
                ReadEntry { key: "role/b".into(), version: 1 },
            ]
        );
        assert_eq!(writes.len(), 2);
    }
}
