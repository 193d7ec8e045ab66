//! Mock Floodlight controller: parses the permission of each northbound
//! request, asks the verifier, caches GET verdicts, checks flow rules for
//! conflicts and serves the simulated network.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Sender};
use std::sync::Arc;
use std::thread::JoinHandle;

use chrono::{DateTime, Utc};
use nbguard_core::aaa::{Verdict, VerificationRequest};
use nbguard_core::assets::Action;
use nbguard_core::clock::{Clock, SystemClock};
use nbguard_core::conflict::{validate_rule, ConflictType, RuleStore, RuleStoreError, StoredRule};
use nbguard_core::policy::{ApiRoute, HttpMethod, PolicyError, RouteRegistry, RouteTable};
use nbguard_gateway::service::ConflictNotice;
use parking_lot::{Condvar, Mutex, RwLock};
use serde::Serialize;
use serde_json::{json, Value};

use crate::floodlight;
use crate::network::Network;
use crate::verifier::Verifier;

pub const MSG_FIREWALL_CHANGED: &str = "Firewall status is changed";

/// A northbound request from an application.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AppRequest {
    pub method: HttpMethod,
    pub url: String,
    pub body: Option<Value>,
    /// App-controller token; `None` when the application has none.
    pub token_id: Option<String>,
}

impl AppRequest {
    pub fn new(method: HttpMethod, url: impl Into<String>, body: Option<Value>, token_id: Option<&str>) -> Self {
        AppRequest {
            method,
            url: url.into(),
            body,
            token_id: token_id.map(str::to_owned),
        }
    }

    pub fn get(url: impl Into<String>, token_id: Option<&str>) -> Self {
        Self::new(HttpMethod::Get, url, None, token_id)
    }

    pub fn post(url: impl Into<String>, body: Value, token_id: Option<&str>) -> Self {
        Self::new(HttpMethod::Post, url, Some(body), token_id)
    }

    pub fn put(url: impl Into<String>, token_id: Option<&str>) -> Self {
        Self::new(HttpMethod::Put, url, Some(json!({})), token_id)
    }

    pub fn delete(url: impl Into<String>, body: Value, token_id: Option<&str>) -> Self {
        Self::new(HttpMethod::Delete, url, Some(body), token_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ControllerResponse {
    pub status: u16,
    pub body: Value,
    pub cache_hit: bool,
    /// The verdict the response was based on; `None` if verification
    /// failed outright.
    pub verdict: Option<Action>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conflict: Option<ConflictType>,
}

impl ControllerResponse {
    fn new(status: u16, body: Value, cache_hit: bool, verdict: Option<Action>) -> Self {
        ControllerResponse {
            status,
            body,
            cache_hit,
            verdict,
            conflict: None,
        }
    }

    pub fn accepted(&self) -> bool {
        self.verdict == Some(Action::Accept)
    }

    /// `message` of the body, if any.
    pub fn message(&self) -> Option<&str> {
        self.body.get("message").and_then(Value::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    token_id: String,
    method: HttpMethod,
    url: String,
}

#[derive(Debug, Clone)]
pub struct CacheEntry {
    pub verdict: Verdict,
    pub cached_at: DateTime<Utc>,
}

type Cache = Mutex<HashMap<CacheKey, CacheEntry>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub refreshes: u64,
    pub refresh_errors: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct ControllerOptions {
    pub caching: bool,
    /// Threads running background cache refreshes.
    pub refresh_workers: usize,
}

impl Default for ControllerOptions {
    fn default() -> Self {
        ControllerOptions {
            caching: true,
            refresh_workers: 16,
        }
    }
}

type Job = Box<dyn FnOnce() + Send>;

/// Fixed pool running background verifications, with a wait for idle.
struct Refresher {
    sender: Option<Sender<Job>>,
    workers: Vec<JoinHandle<()>>,
    pending: Arc<(Mutex<usize>, Condvar)>,
}

impl Refresher {
    fn new(workers: usize) -> Self {
        let (sender, receiver) = mpsc::channel::<Job>();
        let receiver = Arc::new(Mutex::new(receiver));
        let pending = Arc::new((Mutex::new(0usize), Condvar::new()));
        let workers = (0..workers.max(1))
            .map(|_| {
                let receiver = Arc::clone(&receiver);
                let pending = Arc::clone(&pending);
                std::thread::spawn(move || loop {
                    let job = receiver.lock().recv();
                    let Ok(job) = job else { break };
                    job();
                    let (count, idle) = &*pending;
                    let mut count = count.lock();
                    *count -= 1;
                    if *count == 0 {
                        idle.notify_all();
                    }
                })
            })
            .collect();
        Refresher {
            sender: Some(sender),
            workers,
            pending,
        }
    }

    fn spawn(&self, job: Job) {
        *self.pending.0.lock() += 1;
        if let Some(sender) = &self.sender {
            if sender.send(job).is_ok() {
                return;
            }
        }
        *self.pending.0.lock() -= 1;
    }

    fn wait_idle(&self) {
        let (count, idle) = &*self.pending;
        let mut count = count.lock();
        while *count > 0 {
            idle.wait(&mut count);
        }
    }
}

impl Drop for Refresher {
    fn drop(&mut self) {
        self.sender.take();
        for worker in self.workers.drain(..) {
            let _ = worker.join();
        }
    }
}

#[derive(Default)]
struct Counters {
    hits: AtomicU64,
    misses: AtomicU64,
    refreshes: AtomicU64,
    refresh_errors: AtomicU64,
}

pub struct MockController {
    id: String,
    routes: RouteRegistry,
    verifier: Arc<dyn Verifier>,
    cache: Option<Arc<Cache>>,
    rules: Mutex<RuleStore>,
    network: RwLock<Network>,
    refresher: Option<Refresher>,
    counters: Arc<Counters>,
    clock: Arc<dyn Clock>,
}

impl MockController {
    /// A controller over the bundled Floodlight routes and the default
    /// linear network.
    pub fn new(id: impl Into<String>, verifier: Arc<dyn Verifier>, options: ControllerOptions) -> Self {
        Self::with_routes(id, verifier, floodlight::route_table(), options)
    }

    pub fn with_routes(
        id: impl Into<String>,
        verifier: Arc<dyn Verifier>,
        routes: RouteTable,
        options: ControllerOptions,
    ) -> Self {
        MockController {
            id: id.into(),
            routes: RouteRegistry::new(routes),
            verifier,
            cache: options.caching.then(|| Arc::new(Mutex::new(HashMap::new()))),
            rules: Mutex::new(RuleStore::new()),
            network: RwLock::new(Network::default()),
            refresher: options.caching.then(|| Refresher::new(options.refresh_workers)),
            counters: Arc::new(Counters::default()),
            clock: Arc::new(SystemClock),
        }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn caching(&self) -> bool {
        self.cache.is_some()
    }

    pub fn register_route(
        &self,
        route: ApiRoute,
        permission_exists: impl Fn(&str) -> bool,
    ) -> Result<(), PolicyError> {
        self.routes.register(route, permission_exists)?;
        // cached verdicts were given for the permission the old table parsed
        if let Some(cache) = &self.cache {
            cache.lock().clear();
        }
        Ok(())
    }

    pub fn parse_permission(&self, method: HttpMethod, url: &str) -> Option<String> {
        self.routes.parse_permission(method, url)
    }

    pub fn rules(&self) -> Vec<StoredRule> {
        self.rules.lock().rules().to_vec()
    }

    /// Empties the rule store.
    pub fn reset_rules(&self) {
        *self.rules.lock() = RuleStore::new();
    }

    pub fn network(&self) -> Network {
        self.network.read().clone()
    }

    pub fn cached(&self, token_id: &str, url: &str) -> Option<CacheEntry> {
        let key = CacheKey {
            token_id: token_id.to_owned(),
            method: HttpMethod::Get,
            url: url.to_owned(),
        };
        self.cache.as_ref()?.lock().get(&key).cloned()
    }

    pub fn cache_stats(&self) -> CacheStats {
        let c = &self.counters;
        CacheStats {
            hits: c.hits.load(Ordering::Relaxed),
            misses: c.misses.load(Ordering::Relaxed),
            refreshes: c.refreshes.load(Ordering::Relaxed),
            refresh_errors: c.refresh_errors.load(Ordering::Relaxed),
        }
    }

    /// Blocks until every dispatched background verification has finished.
    pub fn drain(&self) {
        if let Some(refresher) = &self.refresher {
            refresher.wait_idle();
        }
    }

    pub fn handle(&self, req: &AppRequest) -> ControllerResponse {
        let permission = self.routes.parse_permission(req.method, &req.url).unwrap_or_default();
        let data = req.body.as_ref().map(Value::to_string).unwrap_or_default();
        let vreq = VerificationRequest::new(
            &req.url,
            data,
            req.token_id.clone().unwrap_or_default(),
            req.method,
            &permission,
        );
        let key = match (&self.cache, req.method) {
            (Some(_), HttpMethod::Get) => Some(CacheKey {
                token_id: vreq.token_id.clone(),
                method: req.method,
                url: req.url.clone(),
            }),
            _ => None,
        };

        if let (Some(cache), Some(key)) = (&self.cache, &key) {
            let hit = cache.lock().get(key).map(|e| e.verdict.clone());
            if let Some(verdict) = hit {
                self.counters.hits.fetch_add(1, Ordering::Relaxed);
                self.refresh(key.clone(), vreq.clone());
                return self.respond(req, &vreq, &verdict, true);
            }
            self.counters.misses.fetch_add(1, Ordering::Relaxed);
        }

        let verdict = match self.verifier.verify(&vreq) {
            Ok(v) => v,
            Err(e) => return ControllerResponse::new(502, json!({ "error": e.to_string() }), false, None),
        };
        if let (Some(cache), Some(key)) = (&self.cache, key) {
            cache.lock().insert(
                key,
                CacheEntry {
                    verdict: verdict.clone(),
                    cached_at: self.clock.now(),
                },
            );
        }
        self.respond(req, &vreq, &verdict, false)
    }

    /// Verifies again in the background and replaces the cached verdict.
    fn refresh(&self, key: CacheKey, vreq: VerificationRequest) {
        let (Some(refresher), Some(cache)) = (&self.refresher, &self.cache) else {
            return;
        };
        let verifier = Arc::clone(&self.verifier);
        let cache = Arc::clone(cache);
        let counters = Arc::clone(&self.counters);
        let clock = Arc::clone(&self.clock);
        refresher.spawn(Box::new(move || match verifier.verify(&vreq) {
            Ok(verdict) => {
                counters.refreshes.fetch_add(1, Ordering::Relaxed);
                cache.lock().insert(
                    key,
                    CacheEntry {
                        verdict,
                        cached_at: clock.now(),
                    },
                );
            }
            Err(e) => {
                counters.refresh_errors.fetch_add(1, Ordering::Relaxed);
                tracing::warn!(error = %e, "background verification failed");
                cache.lock().remove(&key);
            }
        }));
    }

    fn respond(&self, req: &AppRequest, vreq: &VerificationRequest, verdict: &Verdict, cache_hit: bool) -> ControllerResponse {
        if !verdict.accepted() {
            return ControllerResponse::new(
                403,
                json!({ "action": verdict.action, "message": verdict.message }),
                cache_hit,
                Some(verdict.action),
            );
        }
        let mut response = self.serve(req, vreq, verdict);
        response.cache_hit = cache_hit;
        response
    }

    fn serve(&self, req: &AppRequest, vreq: &VerificationRequest, verdict: &Verdict) -> ControllerResponse {
        use crate::floodlight::*;
        let ok = |body: Value| ControllerResponse::new(200, body, false, Some(Action::Accept));
        let permission = vreq.permission_id.as_str();
        if installs_rule(permission) {
            return self.install_rule(req, vreq, verdict);
        }
        match permission {
            FL_GET_SWITCH_JSON => ok(self.network.read().switches_json()),
            FL_GET_DEVICE => ok(self.network.read().devices_json()),
            FL_GET_SINGLE_SWITCH => self.switch_stats(&req.url),
            FL_GET_LINKS_JSON => ok(self.network.read().links_json()),
            FL_GET_EXERNALLINK_JSON => ok(json!([])),
            FL_GET_FW_RULES_JSON => ok(serde_json::to_value(self.rules()).expect("rules serialize")),
            FL_GET_FW_STATUS_JSON => {
                let enabled = self.network.read().firewall_enabled;
                ok(json!({ "result": if enabled { "firewall enabled" } else { "firewall disabled" } }))
            }
            FL_PUT_ENABLE_FIREWALL | FL_PUT_DISABLE_FIREWALL => {
                self.network.write().firewall_enabled = permission == FL_PUT_ENABLE_FIREWALL;
                ok(json!({ "status": "success", "message": MSG_FIREWALL_CHANGED }))
            }
            FL_DELETE_FIREWALL_RULE => self.delete_rule(req, verdict),
            _ => self.route_between(&req.url).unwrap_or_else(|| {
                ok(json!({ "status": "success", "permissionId": permission }))
            }),
        }
    }

    fn switch_stats(&self, url: &str) -> ControllerResponse {
        let segments: Vec<&str> = url.split('/').filter(|s| !s.is_empty()).collect();
        let network = self.network.read();
        let body = match segments.as_slice() {
            [_, _, _, dpid, stat, _] if *dpid != "all" => match network.switch(dpid) {
                Some(switch) => network.switch_stats_json(switch, stat),
                None => {
                    return ControllerResponse::new(404, json!({ "error": format!("no switch {dpid}") }), false, Some(Action::Accept))
                }
            },
            [_, _, _, _, stat, _] => {
                let mut all = serde_json::Map::new();
                for switch in &network.switches {
                    if let Value::Object(m) = network.switch_stats_json(switch, stat) {
                        all.extend(m);
                    }
                }
                Value::Object(all)
            }
            _ => network.switches_json(),
        };
        ControllerResponse::new(200, body, false, Some(Action::Accept))
    }

    /// Path between two switches of the chain, for
    /// `/wm/topology/route/{src}/{port}/{dst}/{port}/json`.
    fn route_between(&self, url: &str) -> Option<ControllerResponse> {
        let segments: Vec<&str> = url.split('/').filter(|s| !s.is_empty()).collect();
        let ["wm", "topology", "route", src, _, dst, _, "json"] = segments.as_slice() else {
            return None;
        };
        let network = self.network.read();
        let index = |dpid: &str| network.switches.iter().position(|s| s.dpid == dpid);
        let (Some(a), Some(b)) = (index(src), index(dst)) else {
            return Some(ControllerResponse::new(404, json!({ "error": "unknown switch" }), false, Some(Action::Accept)));
        };
        let hops: Vec<&str> = if a <= b {
            network.switches[a..=b].iter().map(|s| s.dpid.as_str()).collect()
        } else {
            network.switches[b..=a].iter().rev().map(|s| s.dpid.as_str()).collect()
        };
        Some(ControllerResponse::new(200, json!(hops), false, Some(Action::Accept)))
    }

    fn install_rule(&self, req: &AppRequest, vreq: &VerificationRequest, verdict: &Verdict) -> ControllerResponse {
        let body = req.body.clone().unwrap_or(Value::Null);
        let rule = match validate_rule(&body) {
            Ok(rule) => rule,
            Err(e) => {
                return ControllerResponse::new(
                    400,
                    json!({ "status": "ERROR", "message": e.to_string() }),
                    false,
                    Some(Action::Accept),
                )
            }
        };
        let owner = verdict.application_id.clone().unwrap_or_default();
        let priority = self.verifier.role_priority(&owner).unwrap_or(0);
        let rule = rule.owned_by(owner, priority);

        let mut store = self.rules.lock();
        let Some(report) = store.find_conflict(&rule) else {
            let report = store.check_against_store(rule);
            return ControllerResponse::new(
                200,
                json!({ "status": "SUCCESS", "ruleId": report.rule_id }),
                false,
                Some(Action::Accept),
            );
        };
        drop(store);

        let kind = report.conflict_type.expect("a conflict report names its type");
        let notice = ConflictNotice {
            request: vreq.clone(),
            conflict_type: kind,
            counterpart_rule: report.counterpart_rule.clone(),
        };
        let mut body = json!({
            "status": "CONFLICT",
            "conflictType": kind,
            "counterpartRule": report.counterpart_rule,
        });
        let action = match self.verifier.report_conflict(&notice) {
            Ok(v) => {
                body["message"] = json!(v.message);
                body["trustAfter"] = json!(v.trust_after);
                v.action
            }
            Err(e) => {
                body["message"] = json!(format!("CONFLICT: {kind}"));
                body["reportError"] = json!(e.to_string());
                Action::Deny
            }
        };
        ControllerResponse {
            conflict: Some(kind),
            ..ControllerResponse::new(403, body, false, Some(action))
        }
    }

    fn delete_rule(&self, req: &AppRequest, verdict: &Verdict) -> ControllerResponse {
        let id = req
            .body
            .as_ref()
            .and_then(|b| b.get("ruleid"))
            .and_then(|v| match v {
                Value::String(s) => Some(s.clone()),
                Value::Number(n) => Some(n.to_string()),
                _ => None,
            });
        let Some(id) = id else {
            return ControllerResponse::new(400, json!({ "status": "ERROR", "message": "ruleid is required" }), false, Some(Action::Accept));
        };
        let owner = verdict.application_id.as_deref().unwrap_or_default();
        let priority = self.verifier.role_priority(owner).unwrap_or(0);
        let result = self.rules.lock().remove(&id, priority);
        let (status, message) = match result {
            Ok(_) => (200, format!("Rule {id} deleted")),
            Err(e @ RuleStoreError::NotFound(_)) => (404, e.to_string()),
            Err(e @ RuleStoreError::WriteProtected { .. }) => (403, e.to_string()),
        };
        let state = if status == 200 { "success" } else { "ERROR" };
        ControllerResponse::new(status, json!({ "status": state, "message": message }), false, Some(Action::Accept))
    }
}
