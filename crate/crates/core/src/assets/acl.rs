//! Blockchain-level access control list. Rules are evaluated in order, the
//! first match decides, and anything unmatched is denied.

use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ParticipantType {
    Admin,
    Application,
    Controller,
    /// Not registered as anything; matches no rule.
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Participant {
    pub kind: ParticipantType,
    pub id: String,
}

impl Participant {
    pub fn new(kind: ParticipantType, id: impl Into<String>) -> Self {
        Participant {
            kind,
            id: id.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Operation {
    Create,
    Read,
    Update,
    Delete,
}

impl Operation {
    pub const ALL: [Operation; 4] = [
        Operation::Create,
        Operation::Read,
        Operation::Update,
        Operation::Delete,
    ];
}

/// The object an operation targets, with the attributes rule conditions
/// inspect.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resource {
    Application { id: String },
    /// The trust index field of an application.
    ApplicationTrust { id: String },
    Controller { id: String },
    Permission { id: String },
    Role { id: String },
    Token { application_id: String, controller_id: String },
    /// The status of a token moving to EXPIRED.
    TokenExpiry { application_id: String, controller_id: String },
    LogEntry { controller_id: String },
    VerifyRequest,
}

impl fmt::Display for Resource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Resource::Application { id } => write!(f, "Application({id})"),
            Resource::ApplicationTrust { id } => write!(f, "Application({id}).trust_index"),
            Resource::Controller { id } => write!(f, "Controller({id})"),
            Resource::Permission { id } => write!(f, "Permission({id})"),
            Resource::Role { id } => write!(f, "Role({id})"),
            Resource::Token { application_id, controller_id } => {
                write!(f, "Token({application_id}, {controller_id})")
            }
            Resource::TokenExpiry { application_id, controller_id } => {
                write!(f, "Token({application_id}, {controller_id}).status")
            }
            Resource::LogEntry { controller_id } => write!(f, "LogEntry({controller_id})"),
            Resource::VerifyRequest => f.write_str("verifyRequest"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AclDecision {
    Allow,
    Deny,
}

pub struct AclRule {
    pub name: &'static str,
    pub participant: ParticipantType,
    /// `None` matches every operation.
    pub operation: Option<Operation>,
    pub applies: fn(&Participant, &Resource) -> bool,
}

fn any(_: &Participant, _: &Resource) -> bool {
    true
}

pub const ACL: &[AclRule] = &[
    AclRule {
        name: "AdminAll",
        participant: ParticipantType::Admin,
        operation: None,
        applies: any,
    },
    AclRule {
        name: "ApplicationReadsItself",
        participant: ParticipantType::Application,
        operation: Some(Operation::Read),
        applies: |p, r| matches!(r, Resource::Application { id } if *id == p.id),
    },
    AclRule {
        name: "ApplicationCreatesToken",
        participant: ParticipantType::Application,
        operation: Some(Operation::Create),
        applies: |p, r| matches!(r, Resource::Token { application_id, .. } if *application_id == p.id),
    },
    AclRule {
        name: "ApplicationReadsOwnToken",
        participant: ParticipantType::Application,
        operation: Some(Operation::Read),
        applies: |p, r| matches!(r, Resource::Token { application_id, .. } if *application_id == p.id),
    },
    AclRule {
        name: "ControllerReadsItself",
        participant: ParticipantType::Controller,
        operation: Some(Operation::Read),
        applies: |p, r| matches!(r, Resource::Controller { id } if *id == p.id),
    },
    AclRule {
        name: "ControllerCreatesVerifyRequest",
        participant: ParticipantType::Controller,
        operation: Some(Operation::Create),
        applies: |_, r| matches!(r, Resource::VerifyRequest),
    },
    // Controller rows of the transaction table: penalize, account, expire.
    AclRule {
        name: "ControllerUpdatesTrust",
        participant: ParticipantType::Controller,
        operation: Some(Operation::Update),
        applies: |_, r| matches!(r, Resource::ApplicationTrust { .. }),
    },
    AclRule {
        name: "ControllerCreatesOwnLog",
        participant: ParticipantType::Controller,
        operation: Some(Operation::Create),
        applies: |p, r| matches!(r, Resource::LogEntry { controller_id } if *controller_id == p.id),
    },
    AclRule {
        name: "ControllerExpiresOwnToken",
        participant: ParticipantType::Controller,
        operation: Some(Operation::Update),
        applies: |p, r| matches!(r, Resource::TokenExpiry { controller_id, .. } if *controller_id == p.id),
    },
];

/// The first matching rule's name, or `None` when the final DENY ALL applies.
pub fn matching_rule(
    participant: &Participant,
    operation: Operation,
    resource: &Resource,
) -> Option<&'static str> {
    ACL.iter()
        .find(|rule| {
            rule.participant == participant.kind
                && rule.operation.is_none_or(|op| op == operation)
                && (rule.applies)(participant, resource)
        })
        .map(|rule| rule.name)
}

pub fn check_acl(participant: &Participant, operation: Operation, resource: &Resource) -> AclDecision {
    match matching_rule(participant, operation, resource) {
        Some(_) => AclDecision::Allow,
        None => AclDecision::Deny,
    }
}
