//! HTTP gateway in front of the ledger-backed AAA service: participant
//! login, identity-card binding, token requests, controller verification
//! with a per-application quota, and the admin API.

pub mod auth;
pub mod client;
pub mod error;
pub mod http;
pub mod limiter;
pub mod service;

pub use error::ApiError;
pub use http::router;
pub use service::{Gateway, GatewayConfig, Session};
