//! Blocking HTTP client for the gateway API, used by the CLI and by remote
//! verifiers.

use std::time::Duration;

use nbguard_core::aaa::{Verdict, VerificationRequest};
use nbguard_core::identity::Wallet;
use reqwest::blocking::{Client, RequestBuilder};
use reqwest::Method;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::service::{ConflictNotice, LoginResponse};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("{status}: {message}")]
    Status { status: u16, message: String },
    #[error("unexpected response: {0}")]
    Decode(String),
}

impl ClientError {
    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Status { status, .. } => Some(*status),
            _ => None,
        }
    }
}

pub struct GatewayClient {
    base: String,
    http: Client,
    token: Option<String>,
}

impl GatewayClient {
    pub fn new(base_url: &str) -> Result<Self, ClientError> {
        let http = Client::builder().timeout(Duration::from_secs(30)).build()?;
        Ok(GatewayClient {
            base: base_url.trim_end_matches('/').to_owned(),
            http,
            token: None,
        })
    }

    pub fn token(&self) -> Option<&str> {
        self.token.as_deref()
    }

    pub fn set_token(&mut self, token: Option<String>) {
        self.token = token;
    }

    pub fn login(&mut self, id: &str, secret: &str) -> Result<LoginResponse, ClientError> {
        let resp: LoginResponse = self.call(Method::POST, "/auth/login", Some(&json!({ "id": id, "secret": secret })))?;
        self.token = Some(resp.token.clone());
        Ok(resp)
    }

    pub fn upload_wallet(&self, wallet: &Wallet) -> Result<Value, ClientError> {
        self.call(Method::POST, "/auth/wallet", Some(wallet))
    }

    /// Login followed by the identity card upload.
    pub fn connect(&mut self, id: &str, secret: &str, wallet: &Wallet) -> Result<(), ClientError> {
        self.login(id, secret)?;
        self.upload_wallet(wallet)?;
        Ok(())
    }

    pub fn verify(&self, req: &VerificationRequest) -> Result<Verdict, ClientError> {
        self.call(Method::POST, "/verify", Some(req))
    }

    pub fn report_conflict(&self, notice: &ConflictNotice) -> Result<Verdict, ClientError> {
        self.call(Method::POST, "/conflicts", Some(notice))
    }

    pub fn request_token(&self, controller_id: &str) -> Result<Value, ClientError> {
        self.call(Method::POST, "/tokens", Some(&json!({ "controllerId": controller_id })))
    }

    pub fn get(&self, path: &str) -> Result<Value, ClientError> {
        self.call::<Value, ()>(Method::GET, path, None)
    }

    pub fn delete(&self, path: &str) -> Result<Value, ClientError> {
        self.call::<Value, ()>(Method::DELETE, path, None)
    }

    pub fn post<B: Serialize>(&self, path: &str, body: &B) -> Result<Value, ClientError> {
        self.call(Method::POST, path, Some(body))
    }

    pub fn put<B: Serialize>(&self, path: &str, body: &B) -> Result<Value, ClientError> {
        self.call(Method::PUT, path, Some(body))
    }

    pub fn call<T: DeserializeOwned, B: Serialize + ?Sized>(
        &self,
        method: Method,
        path: &str,
        body: Option<&B>,
    ) -> Result<T, ClientError> {
        let mut req: RequestBuilder = self.http.request(method, format!("{}{}", self.base, path));
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        if let Some(b) = body {
            req = req.json(b);
        }
        let resp = req.send()?;
        let status = resp.status();
        let text = resp.text()?;
        if !status.is_success() {
            let message = serde_json::from_str::<Value>(&text)
                .ok()
                .and_then(|v| {
                    v.get("message")
                        .or_else(|| v.get("error"))
                        .and_then(Value::as_str)
                        .map(str::to_owned)
                })
                .unwrap_or(text);
            return Err(ClientError::Status {
                status: status.as_u16(),
                message,
            });
        }
        serde_json::from_str(&text).map_err(|e| ClientError::Decode(e.to_string()))
    }
}
