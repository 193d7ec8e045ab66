//! Flow-rule validation and conflict classification.
//!
//! Only protocol, destination, priority and action take part in the
//! comparison. The source block is parsed and kept but never compared.

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use ipnet::Ipv4Net;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub const MAX_RULE_PRIORITY: u32 = 65_535;

/// Body keys accepted by [`validate_rule`].
pub const RULE_FIELDS: [&str; 5] = ["nw-proto", "src-ip", "dst-ip", "priority", "action"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuleError {
    #[error("unsupported parameter {0:?}")]
    UnsupportedField(String),
    #[error("missing parameter {0:?}")]
    MissingField(&'static str),
    #[error("malformed CIDR {0:?}")]
    MalformedCidr(String),
    #[error("priority {0} outside 0..=65535")]
    PriorityRange(String),
    #[error("unsupported protocol {0:?}")]
    UnknownProtocol(String),
    #[error("unsupported action {0:?}")]
    UnknownAction(String),
    #[error("rule body must be a JSON object")]
    NotAnObject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Protocol {
    Tcp,
    Udp,
    Icmp,
    Any,
}

impl FromStr for Protocol {
    type Err = RuleError;

    fn from_str(s: &str) -> Result<Self, RuleError> {
        match s.to_ascii_uppercase().as_str() {
            "TCP" => Ok(Protocol::Tcp),
            "UDP" => Ok(Protocol::Udp),
            "ICMP" => Ok(Protocol::Icmp),
            "ANY" | "*" => Ok(Protocol::Any),
            _ => Err(RuleError::UnknownProtocol(s.to_owned())),
        }
    }
}

impl Protocol {
    /// ANY intersects every protocol.
    pub fn intersects(self, other: Protocol) -> bool {
        self == Protocol::Any || other == Protocol::Any || self == other
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RuleAction {
    Allow,
    Deny,
    Drop,
}

impl FromStr for RuleAction {
    type Err = RuleError;

    fn from_str(s: &str) -> Result<Self, RuleError> {
        match s.to_ascii_uppercase().as_str() {
            "ALLOW" => Ok(RuleAction::Allow),
            "DENY" => Ok(RuleAction::Deny),
            "DROP" => Ok(RuleAction::Drop),
            _ => Err(RuleError::UnknownAction(s.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowRule {
    pub protocol: Protocol,
    pub src: Ipv4Net,
    pub dst: Ipv4Net,
    pub priority: u32,
    pub action: RuleAction,
    #[serde(default)]
    pub owner_app: String,
    /// Role priority of the installing application.
    #[serde(default)]
    pub owner_priority: i64,
}

impl FlowRule {
    pub fn new(protocol: Protocol, src: &str, dst: &str, priority: u32, action: RuleAction) -> Result<Self, RuleError> {
        if priority > MAX_RULE_PRIORITY {
            return Err(RuleError::PriorityRange(priority.to_string()));
        }
        Ok(FlowRule {
            protocol,
            src: parse_cidr(src)?,
            dst: parse_cidr(dst)?,
            priority,
            action,
            owner_app: String::new(),
            owner_priority: 0,
        })
    }

    pub fn owned_by(mut self, app: impl Into<String>, role_priority: i64) -> Self {
        self.owner_app = app.into();
        self.owner_priority = role_priority;
        self
    }
}

fn parse_cidr(s: &str) -> Result<Ipv4Net, RuleError> {
    let net = if s.contains('/') {
        Ipv4Net::from_str(s).ok()
    } else {
        Ipv4Addr::from_str(s).ok().map(Ipv4Net::from)
    };
    net.map(|n| n.trunc())
        .ok_or_else(|| RuleError::MalformedCidr(s.to_owned()))
}

fn text<'a>(value: &'a Value, field: &'static str) -> Result<&'a str, RuleError> {
    value.as_str().ok_or(match field {
        "nw-proto" => RuleError::UnknownProtocol(value.to_string()),
        "action" => RuleError::UnknownAction(value.to_string()),
        _ => RuleError::MalformedCidr(value.to_string()),
    })
}

/// Parses an ACL/firewall request body. Absent addresses match everything,
/// an absent protocol is ANY and an absent priority is 0. The action is
/// required.
pub fn validate_rule(body: &Value) -> Result<FlowRule, RuleError> {
    let map: &Map<String, Value> = body.as_object().ok_or(RuleError::NotAnObject)?;
    if let Some(unknown) = map.keys().find(|k| !RULE_FIELDS.contains(&k.as_str())) {
        return Err(RuleError::UnsupportedField(unknown.clone()));
    }
    let protocol = match map.get("nw-proto") {
        Some(v) => text(v, "nw-proto")?.parse()?,
        None => Protocol::Any,
    };
    let src = match map.get("src-ip") {
        Some(v) => text(v, "src-ip")?,
        None => "0.0.0.0/0",
    };
    let dst = match map.get("dst-ip") {
        Some(v) => text(v, "dst-ip")?,
        None => "0.0.0.0/0",
    };
    let priority = match map.get("priority") {
        None => 0,
        Some(v) => {
            let n = match v {
                Value::Number(n) => n.as_u64(),
                Value::String(s) => s.trim().parse::<u64>().ok(),
                _ => None,
            };
            match n {
                Some(n) if n <= u64::from(MAX_RULE_PRIORITY) => n as u32,
                _ => return Err(RuleError::PriorityRange(v.to_string())),
            }
        }
    };
    let action = text(map.get("action").ok_or(RuleError::MissingField("action"))?, "action")?.parse()?;
    FlowRule::new(protocol, src, dst, priority, action)
}

/// An inclusive range of IPv4 addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AddrRange {
    pub first: u32,
    pub last: u32,
}

impl From<Ipv4Net> for AddrRange {
    fn from(net: Ipv4Net) -> Self {
        AddrRange {
            first: u32::from(net.network()),
            last: u32::from(net.broadcast()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DstRelation {
    Disjoint,
    Equal,
    SubsetOfB,
    SupersetOfB,
    Partial,
}

/// Set relation of `a` to `b`.
pub fn range_relation(a: AddrRange, b: AddrRange) -> DstRelation {
    if a.last < b.first || b.last < a.first {
        DstRelation::Disjoint
    } else if a == b {
        DstRelation::Equal
    } else if b.first <= a.first && a.last <= b.last {
        DstRelation::SubsetOfB
    } else if a.first <= b.first && b.last <= a.last {
        DstRelation::SupersetOfB
    } else {
        DstRelation::Partial
    }
}

pub fn dst_relation(a: Ipv4Net, b: Ipv4Net) -> DstRelation {
    range_relation(a.into(), b.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConflictType {
    Generalization,
    Redundancy,
    Correlation,
    Shadowing,
    Overlap,
}

impl fmt::Display for ConflictType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CheckResult {
    Success,
    Conflict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictReport {
    pub result: CheckResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conflict_type: Option<ConflictType>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterpart_rule: Option<String>,
    /// Store id given to the rule when it was accepted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule_id: Option<String>,
}

impl ConflictReport {
    pub fn success() -> Self {
        ConflictReport {
            result: CheckResult::Success,
            conflict_type: None,
            counterpart_rule: None,
            rule_id: None,
        }
    }

    pub fn conflict(kind: ConflictType, counterpart: Option<String>) -> Self {
        ConflictReport {
            result: CheckResult::Conflict,
            conflict_type: Some(kind),
            counterpart_rule: counterpart,
            rule_id: None,
        }
    }

    pub fn is_success(&self) -> bool {
        self.result == CheckResult::Success
    }
}

impl fmt::Display for ConflictReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.conflict_type {
            None => f.write_str("SUCCESS"),
            Some(kind) => write!(f, "CONFLICT: {kind}"),
        }
    }
}

/// The conflict `f` (the new rule) has with the installed rule `f_i`, if any.
pub fn conflict_type(f: &FlowRule, f_i: &FlowRule) -> Option<ConflictType> {
    if !f.protocol.intersects(f_i.protocol) {
        return None;
    }
    let same_action = f.action == f_i.action;
    match dst_relation(f.dst, f_i.dst) {
        DstRelation::Disjoint => None,
        DstRelation::Equal | DstRelation::SubsetOfB => Some(if same_action {
            ConflictType::Redundancy
        } else if f.priority < f_i.priority {
            ConflictType::Shadowing
        } else {
            // Equal priority is Correlation in the reference cases; a higher
            // priority for the new rule is classified the same way here.
            ConflictType::Correlation
        }),
        DstRelation::SupersetOfB => Some(if same_action {
            ConflictType::Overlap
        } else {
            ConflictType::Generalization
        }),
        // Unreachable for CIDR blocks, which nest or are disjoint.
        DstRelation::Partial => Some(ConflictType::Correlation),
    }
}

pub fn classify_conflict(f: &FlowRule, f_i: &FlowRule) -> ConflictReport {
    match conflict_type(f, f_i) {
        None => ConflictReport::success(),
        Some(kind) => ConflictReport::conflict(kind, None),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StoredRule {
    pub id: String,
    pub rule: FlowRule,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuleStoreError {
    #[error("no rule {0:?}")]
    NotFound(String),
    #[error("rule {id} belongs to a role with priority {owner_priority}, above {requester_priority}")]
    WriteProtected {
        id: String,
        owner_priority: i64,
        requester_priority: i64,
    },
}

/// Conflict-free installed rules, kept in insertion order.
#[derive(Debug, Clone, Default)]
pub struct RuleStore {
    rules: Vec<StoredRule>,
    next_id: u64,
}

impl RuleStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// First conflict with an installed rule, or SUCCESS after inserting `f`.
    pub fn check_against_store(&mut self, f: FlowRule) -> ConflictReport {
        if let Some(report) = self.find_conflict(&f) {
            return report;
        }
        self.next_id += 1;
        let id = self.next_id.to_string();
        self.rules.push(StoredRule { id: id.clone(), rule: f });
        ConflictReport {
            rule_id: Some(id),
            ..ConflictReport::success()
        }
    }

    /// The report [`check_against_store`](Self::check_against_store) would
    /// give, without inserting.
    pub fn find_conflict(&self, f: &FlowRule) -> Option<ConflictReport> {
        self.rules.iter().find_map(|stored| {
            conflict_type(f, &stored.rule).map(|kind| ConflictReport::conflict(kind, Some(stored.id.clone())))
        })
    }

    /// A role may not remove rules installed under a higher role priority.
    pub fn remove(&mut self, id: &str, requester_priority: i64) -> Result<FlowRule, RuleStoreError> {
        let index = self
            .rules
            .iter()
            .position(|r| r.id == id)
            .ok_or_else(|| RuleStoreError::NotFound(id.to_owned()))?;
        let owner_priority = self.rules[index].rule.owner_priority;
        if owner_priority > requester_priority {
            return Err(RuleStoreError::WriteProtected {
                id: id.to_owned(),
                owner_priority,
                requester_priority,
            });
        }
        Ok(self.rules.remove(index).rule)
    }

    pub fn rules(&self) -> &[StoredRule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn clear(&mut self) {
        self.rules.clear();
    }
}
