//! HTTP/JSON transport over [`Gateway`].

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use nbguard_core::aaa::VerificationRequest;
use nbguard_core::identity::Wallet;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::ApiError;
use crate::service::{
    ApplicationUpdate, BlockQuery, ConflictNotice, ControllerUpdate, Gateway, LogQuery,
    NewApplication, NewController, NewPermission, NewRole, RawTransaction, RoleUpdate, Session,
    TokenQuery, TokenRequest, ValueBody,
};

/// Every route as (method, path template).
pub const ROUTES: &[(&str, &str)] = &[
    ("POST", "/auth/login"),
    ("POST", "/auth/wallet"),
    ("POST", "/auth/authenticate"),
    ("GET", "/system/ping"),
    ("GET", "/tokens"),
    ("POST", "/tokens"),
    ("POST", "/transactions"),
    ("POST", "/verify"),
    ("POST", "/conflicts"),
    ("GET", "/logs"),
    ("GET", "/blocks"),
    ("GET", "/admin/tokens"),
    ("POST", "/admin/tokens/{id}/issue"),
    ("POST", "/admin/tokens/{id}/expire"),
    ("GET", "/admin/applications"),
    ("POST", "/admin/applications"),
    ("GET", "/admin/applications/{id}"),
    ("PUT", "/admin/applications/{id}"),
    ("DELETE", "/admin/applications/{id}"),
    ("POST", "/admin/applications/{id}/trust"),
    ("GET", "/admin/controllers"),
    ("POST", "/admin/controllers"),
    ("GET", "/admin/controllers/{id}"),
    ("PUT", "/admin/controllers/{id}"),
    ("DELETE", "/admin/controllers/{id}"),
    ("GET", "/admin/roles"),
    ("POST", "/admin/roles"),
    ("GET", "/admin/roles/{id}"),
    ("PUT", "/admin/roles/{id}"),
    ("GET", "/admin/permissions"),
    ("POST", "/admin/permissions"),
    ("GET", "/admin/permissions/{id}"),
    ("DELETE", "/admin/permissions/{id}"),
    ("GET", "/admin/thresholds"),
    ("PUT", "/admin/thresholds/{object}"),
];

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let body = if self.is_denial() {
            json!({ "action": "DENY", "message": self.to_string() })
        } else {
            json!({ "error": self.to_string() })
        };
        (status, Json(body)).into_response()
    }
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct LoginBody {
    id: String,
    secret: String,
}

fn bearer(headers: &HeaderMap) -> Option<String> {
    let value = headers.get(header::AUTHORIZATION)?;
    // a present but unusable header is a garbled token, not a missing one
    let token = value
        .to_str()
        .ok()
        .and_then(|v| v.strip_prefix("Bearer "))
        .unwrap_or_default();
    Some(token.trim().to_owned())
}

fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::BadRequest(format!("malformed body: {e}")))
}

fn query<T: DeserializeOwned>(uri: &Uri) -> Result<T, ApiError> {
    Query::<T>::try_from_uri(uri)
        .map(|q| q.0)
        .map_err(|e| ApiError::BadRequest(format!("malformed query: {e}")))
}

async fn blocking<T, F>(f: F) -> Response
where
    T: Serialize + Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(Ok(value)) => Json(value).into_response(),
        Ok(Err(e)) => e.into_response(),
        Err(e) => ApiError::Internal(e.to_string()).into_response(),
    }
}

/// Runs `f` on a blocking thread once the bearer token checks out.
async fn authed<T, F>(gw: Arc<Gateway>, headers: HeaderMap, f: F) -> Response
where
    T: Serialize + Send + 'static,
    F: FnOnce(&Gateway, &Session) -> Result<T, ApiError> + Send + 'static,
{
    let token = bearer(&headers);
    blocking(move || {
        let session = gw.session(token.as_deref())?;
        f(&gw, &session)
    })
    .await
}

type Gw = State<Arc<Gateway>>;

async fn login(State(gw): Gw, bytes: Bytes) -> Response {
    blocking(move || {
        let b: LoginBody = body(&bytes)?;
        gw.login(&b.id, &b.secret)
    })
    .await
}

async fn upload_wallet(State(gw): Gw, h: HeaderMap, bytes: Bytes) -> Response {
    authed(gw, h, move |gw, s| gw.upload_wallet(s, &body::<Wallet>(&bytes)?)).await
}

async fn authenticate(State(gw): Gw, h: HeaderMap, bytes: Bytes) -> Response {
    authed(gw, h, move |gw, s| {
        let b: TokenRequest = body(&bytes)?;
        Ok(gw.authenticate(s, &b.controller_id))
    })
    .await
}

async fn ping(State(gw): Gw, h: HeaderMap) -> Response {
    authed(gw, h, |gw, s| gw.ping(s)).await
}

async fn my_tokens(State(gw): Gw, h: HeaderMap) -> Response {
    authed(gw, h, |gw, s| gw.my_tokens(s)).await
}

async fn request_token(State(gw): Gw, h: HeaderMap, bytes: Bytes) -> Response {
    authed(gw, h, move |gw, s| {
        s.identity()?;
        let b: TokenRequest = body(&bytes)?;
        gw.request_token(s, &b.controller_id)
    })
    .await
}

async fn submit(State(gw): Gw, h: HeaderMap, bytes: Bytes) -> Response {
    authed(gw, h, move |gw, s| {
        s.identity()?;
        gw.submit(s, &body::<RawTransaction>(&bytes)?)
    })
    .await
}

async fn verify(State(gw): Gw, h: HeaderMap, bytes: Bytes) -> Response {
    authed(gw, h, move |gw, s| {
        s.identity()?;
        gw.verify(s, &body::<VerificationRequest>(&bytes)?)
    })
    .await
}

async fn conflicts(State(gw): Gw, h: HeaderMap, bytes: Bytes) -> Response {
    authed(gw, h, move |gw, s| {
        s.identity()?;
        gw.report_conflict(s, &body::<ConflictNotice>(&bytes)?)
    })
    .await
}

async fn logs(State(gw): Gw, h: HeaderMap, uri: Uri) -> Response {
    authed(gw, h, move |gw, s| gw.logs(s, &query::<LogQuery>(&uri)?)).await
}

async fn blocks(State(gw): Gw, h: HeaderMap, uri: Uri) -> Response {
    authed(gw, h, move |gw, s| gw.blocks(s, &query::<BlockQuery>(&uri)?)).await
}

async fn list_tokens(State(gw): Gw, h: HeaderMap, uri: Uri) -> Response {
    authed(gw, h, move |gw, s| gw.list_tokens(s, &query::<TokenQuery>(&uri)?)).await
}

async fn issue_token(State(gw): Gw, h: HeaderMap, Path(id): Path<String>) -> Response {
    authed(gw, h, move |gw, s| gw.issue_token(s, &id)).await
}

async fn expire_token(State(gw): Gw, h: HeaderMap, Path(id): Path<String>) -> Response {
    authed(gw, h, move |gw, s| gw.expire_token(s, &id)).await
}

async fn list_applications(State(gw): Gw, h: HeaderMap) -> Response {
    authed(gw, h, |gw, s| gw.list_applications(s)).await
}

async fn create_application(State(gw): Gw, h: HeaderMap, bytes: Bytes) -> Response {
    authed(gw, h, move |gw, s| {
        s.identity()?;
        gw.create_application(s, body::<NewApplication>(&bytes)?)
    })
    .await
}

async fn get_application(State(gw): Gw, h: HeaderMap, Path(id): Path<String>) -> Response {
    authed(gw, h, move |gw, s| gw.get_application(s, &id)).await
}

async fn update_application(State(gw): Gw, h: HeaderMap, Path(id): Path<String>, bytes: Bytes) -> Response {
    authed(gw, h, move |gw, s| {
        s.identity()?;
        gw.update_application(s, &id, body::<ApplicationUpdate>(&bytes)?)
    })
    .await
}

async fn remove_application(State(gw): Gw, h: HeaderMap, Path(id): Path<String>) -> Response {
    authed(gw, h, move |gw, s| gw.remove_application(s, &id)).await
}

async fn recover_trust(State(gw): Gw, h: HeaderMap, Path(id): Path<String>, bytes: Bytes) -> Response {
    authed(gw, h, move |gw, s| {
        s.identity()?;
        gw.recover_trust(s, &id, body::<ValueBody>(&bytes)?.value)
    })
    .await
}

async fn list_controllers(State(gw): Gw, h: HeaderMap) -> Response {
    authed(gw, h, |gw, s| gw.list_controllers(s)).await
}

async fn create_controller(State(gw): Gw, h: HeaderMap, bytes: Bytes) -> Response {
    authed(gw, h, move |gw, s| {
        s.identity()?;
        gw.create_controller(s, body::<NewController>(&bytes)?)
    })
    .await
}

async fn get_controller(State(gw): Gw, h: HeaderMap, Path(id): Path<String>) -> Response {
    authed(gw, h, move |gw, s| gw.get_controller(s, &id)).await
}

async fn update_controller(State(gw): Gw, h: HeaderMap, Path(id): Path<String>, bytes: Bytes) -> Response {
    authed(gw, h, move |gw, s| {
        s.identity()?;
        gw.update_controller(s, &id, body::<ControllerUpdate>(&bytes)?)
    })
    .await
}

async fn remove_controller(State(gw): Gw, h: HeaderMap, Path(id): Path<String>) -> Response {
    authed(gw, h, move |gw, s| gw.remove_controller(s, &id)).await
}

async fn list_roles(State(gw): Gw, h: HeaderMap) -> Response {
    authed(gw, h, |gw, s| gw.list_roles(s)).await
}

async fn create_role(State(gw): Gw, h: HeaderMap, bytes: Bytes) -> Response {
    authed(gw, h, move |gw, s| {
        s.identity()?;
        gw.create_role(s, body::<NewRole>(&bytes)?)
    })
    .await
}

async fn get_role(State(gw): Gw, h: HeaderMap, Path(id): Path<String>) -> Response {
    authed(gw, h, move |gw, s| gw.get_role(s, &id)).await
}

async fn update_role(State(gw): Gw, h: HeaderMap, Path(id): Path<String>, bytes: Bytes) -> Response {
    authed(gw, h, move |gw, s| {
        s.identity()?;
        gw.update_role(s, &id, body::<RoleUpdate>(&bytes)?)
    })
    .await
}

async fn list_permissions(State(gw): Gw, h: HeaderMap) -> Response {
    authed(gw, h, |gw, s| gw.list_permissions(s)).await
}

async fn create_permission(State(gw): Gw, h: HeaderMap, bytes: Bytes) -> Response {
    authed(gw, h, move |gw, s| {
        s.identity()?;
        gw.create_permission(s, body::<NewPermission>(&bytes)?)
    })
    .await
}

async fn get_permission(State(gw): Gw, h: HeaderMap, Path(id): Path<String>) -> Response {
    authed(gw, h, move |gw, s| gw.get_permission(s, &id)).await
}

async fn remove_permission(State(gw): Gw, h: HeaderMap, Path(id): Path<String>) -> Response {
    authed(gw, h, move |gw, s| gw.remove_permission(s, &id)).await
}

async fn thresholds(State(gw): Gw, h: HeaderMap) -> Response {
    authed(gw, h, |gw, s| gw.thresholds(s)).await
}

async fn set_threshold(State(gw): Gw, h: HeaderMap, Path(object): Path<String>, bytes: Bytes) -> Response {
    authed(gw, h, move |gw, s| {
        s.identity()?;
        gw.set_threshold(s, &object, body::<ValueBody>(&bytes)?.value)
    })
    .await
}

pub fn router(gateway: Arc<Gateway>) -> Router {
    Router::new()
        .route("/auth/login", post(login))
        .route("/auth/wallet", post(upload_wallet))
        .route("/auth/authenticate", post(authenticate))
        .route("/system/ping", get(ping))
        .route("/tokens", get(my_tokens).post(request_token))
        .route("/transactions", post(submit))
        .route("/verify", post(verify))
        .route("/conflicts", post(conflicts))
        .route("/logs", get(logs))
        .route("/blocks", get(blocks))
        .route("/admin/tokens", get(list_tokens))
        .route("/admin/tokens/{id}/issue", post(issue_token))
        .route("/admin/tokens/{id}/expire", post(expire_token))
        .route("/admin/applications", get(list_applications).post(create_application))
        .route(
            "/admin/applications/{id}",
            get(get_application).put(update_application).delete(remove_application),
        )
        .route("/admin/applications/{id}/trust", post(recover_trust))
        .route("/admin/controllers", get(list_controllers).post(create_controller))
        .route(
            "/admin/controllers/{id}",
            get(get_controller).put(update_controller).delete(remove_controller),
        )
        .route("/admin/roles", get(list_roles).post(create_role))
        .route("/admin/roles/{id}", get(get_role).put(update_role))
        .route("/admin/permissions", get(list_permissions).post(create_permission))
        .route("/admin/permissions/{id}", get(get_permission).delete(remove_permission))
        .route("/admin/thresholds", get(thresholds))
        .route("/admin/thresholds/{object}", put(set_threshold))
        .with_state(gateway)
}
