//! Core of a ledger-backed authentication, authorization and accounting
//! (AAA) service for SDN northbound requests.
//!
//! The modules build on each other bottom-up:
//!
//! - [`identity`]: P-256 keys, ECDSA signatures, certificates.
//! - [`ledger`]: endorse, order, validate pipeline over a hash-chained block store.
//! - [`assets`]: the AAA chaincode (applications, controllers, roles, tokens, logs).
//! - [`policy`]: trust thresholds and the northbound route table.
//! - [`aaa`]: request authentication, authorization and accounting.
//! - [`conflict`]: flow-rule conflict classification.

pub mod aaa;
pub mod assets;
pub mod clock;
pub mod conflict;
pub mod identity;
pub mod ledger;
pub mod policy;
