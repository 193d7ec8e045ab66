//! The six evaluation scenarios, each run on a fresh deployment and
//! reported as JSON.

use nbguard_core::aaa::{MSG_AUTH_REQUIRED, MSG_QUOTA, MSG_UNAUTHORIZED};
use nbguard_core::assets::Action;
use nbguard_core::conflict::ConflictType;
use nbguard_core::policy::{ApiRoute, HttpMethod, ResourceObject};
use nbguard_gateway::service::{RawTransaction, MSG_PING};
use nbguard_gateway::ApiError;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::controller::{AppRequest, ControllerOptions, ControllerResponse, MSG_FIREWALL_CHANGED};
use crate::fixture::*;
use crate::network::dpid;

pub const SCENARIOS: [u8; 6] = [1, 2, 3, 4, 5, 6];

pub const ACL_URL: &str = "/wm/acl/rules/json";
pub const FIREWALL_ENABLE_URL: &str = "/wm/firewall/module/enable/json";

#[derive(Debug, Error, PartialEq, Eq)]
#[error("no scenario {0}; scenarios are 1..=6")]
pub struct UnknownScenario(pub u8);

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Step {
    pub label: String,
    pub expected: String,
    pub observed: String,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScenarioReport {
    pub scenario: u8,
    pub title: String,
    pub passed: bool,
    pub steps: Vec<Step>,
}

impl ScenarioReport {
    fn new(scenario: u8, title: &str) -> Self {
        ScenarioReport {
            scenario,
            title: title.to_owned(),
            passed: true,
            steps: Vec::new(),
        }
    }

    /// Records a step that passes when `observed` equals `expected`.
    fn expect(&mut self, label: impl Into<String>, expected: impl Into<String>, observed: impl Into<String>) {
        let (expected, observed) = (expected.into(), observed.into());
        let ok = expected == observed;
        self.record(label, expected, observed, ok);
    }

    fn record(&mut self, label: impl Into<String>, expected: impl Into<String>, observed: impl Into<String>, ok: bool) {
        self.passed &= ok;
        self.steps.push(Step {
            label: label.into(),
            expected: expected.into(),
            observed: observed.into(),
            ok,
        });
    }

    pub fn step(&self, label: &str) -> Option<&Step> {
        self.steps.iter().find(|s| s.label == label)
    }
}

fn outcome(action: Action, message: &str) -> String {
    format!("{action} ({message})")
}

fn denied(e: &ApiError) -> String {
    if e.is_denial() {
        outcome(Action::Deny, &e.to_string())
    } else {
        format!("ERROR {} ({e})", e.status())
    }
}

/// `ACCEPT (...)`/`DENY (...)` for a controller answer, using the
/// message or, for rule routes, the SUCCESS/CONFLICT status.
fn answer(r: &ControllerResponse) -> String {
    let action = r.verdict.map(|a| a.to_string()).unwrap_or_else(|| "ERROR".to_owned());
    let detail = match (r.body.get("status").and_then(Value::as_str), r.conflict) {
        (_, Some(kind)) => format!("CONFLICT ({kind})"),
        (Some("SUCCESS"), _) => "SUCCESS".to_owned(),
        _ => r.message().unwrap_or_default().to_owned(),
    };
    format!("{action} ({detail})")
}

pub fn run_scenario(n: u8) -> Result<ScenarioReport, UnknownScenario> {
    Ok(match n {
        1 => rest_authentication(),
        2 => token_status(),
        3 => permission_insertion(),
        4 => permission_authorization(),
        5 => request_quota(),
        6 => rule_conflicts(),
        _ => return Err(UnknownScenario(n)),
    })
}

pub fn run_all() -> Vec<ScenarioReport> {
    SCENARIOS.iter().map(|n| run_scenario(*n).expect("listed scenario")).collect()
}

/// MON_APP pings the gateway with nothing, with a JWT only, and with JWT
/// plus identity card.
fn rest_authentication() -> ScenarioReport {
    let mut report = ScenarioReport::new(1, "REST API authentication");
    let d = seed_fixture();
    let gw = &d.gateway;

    let case1 = gw.session(None).and_then(|s| gw.ping(&s));
    report.expect(
        "case 1: no access token",
        outcome(Action::Deny, MSG_AUTH_REQUIRED),
        case1.map_or_else(|e| denied(&e), |p| outcome(p.action, &p.message)),
    );

    let login = gw.login(MON_APP, PARTICIPANT_SECRET).expect("MON_APP logs in");
    let session = gw.session(Some(&login.token)).expect("fresh JWT");
    let case2 = gw.ping(&session);
    report.expect(
        "case 2: access token only",
        outcome(Action::Deny, MSG_AUTH_REQUIRED),
        case2.map_or_else(|e| denied(&e), |p| outcome(p.action, &p.message)),
    );

    let case3 = gw
        .upload_wallet(&session, &d.app(MON_APP).wallet)
        .and_then(|_| gw.session(Some(&login.token)))
        .and_then(|s| gw.ping(&s));
    let app_id = case3.as_ref().ok().and_then(|p| p.data.get("id").cloned());
    report.expect(
        "case 3: access token and identity card",
        outcome(Action::Accept, MSG_PING),
        case3.map_or_else(|e| denied(&e), |p| outcome(p.action, &p.message)),
    );
    report.expect("case 3: returned application", MON_APP, app_id.and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default());
    report
}

fn sample_acl_rule() -> Value {
    json!({ "nw-proto": "TCP", "src-ip": "10.0.0.1/32", "dst-ip": "10.0.0.2/32", "priority": 10, "action": "ALLOW" })
}

/// MON_APP adds an ACL rule while its token moves through every status.
fn token_status() -> ScenarioReport {
    let mut report = ScenarioReport::new(2, "App-controller token status");
    let mut d = seed_fixture();
    let ctrl = d.controller(ControllerOptions::default());
    let post = |token: Option<&str>| ctrl.handle(&AppRequest::post(ACL_URL, sample_acl_rule(), token));

    let r = post(None);
    report.expect("NULL token", "DENY", r.verdict.map(|a| a.to_string()).unwrap_or_default());
    report.expect("NULL token: status", "403", r.status.to_string());

    d.request_token(MON_APP);
    let r = post(d.token(MON_APP));
    report.expect("NEW token", "DENY", r.verdict.map(|a| a.to_string()).unwrap_or_default());
    report.expect("rules after denials", "0", ctrl.rules().len().to_string());

    d.issue_token(MON_APP);
    let r = post(d.token(MON_APP));
    report.expect("ISSUED token", "ACCEPT (SUCCESS)", answer(&r));

    d.expire_token(MON_APP);
    let r = post(d.token(MON_APP));
    report.expect("EXPIRED token", "DENY", r.verdict.map(|a| a.to_string()).unwrap_or_default());
    report.expect("rules installed", "1", ctrl.rules().len().to_string());
    report.expect("decisions accounted", "4", d.log_count().to_string());
    report
}

pub const NEW_PERMISSION: &str = "FL_GET_ROUTE_JSON";
pub const NEW_PERMISSION_URL: &str = "/wm/topology/route/{src}/{src_port}/{dst}/{dst_port}/json";

fn raw(tx_type: &str, payload: Value) -> RawTransaction {
    serde_json::from_value(json!({ "txType": tx_type, "payload": payload })).expect("well-formed transaction")
}

/// MON_APP tries to create a permission and put it into its own role; the
/// administrator submits the same transactions.
fn permission_insertion() -> ScenarioReport {
    let mut report = ScenarioReport::new(3, "Permission insertion through the ledger ACL");
    let mut d = seed_fixture();
    d.request_token(MON_APP);
    d.issue_token(MON_APP);
    let ctrl = d.controller(ControllerOptions::default());
    let url = format!("/wm/topology/route/{}/1/{}/1/json", dpid(1), dpid(4));
    let route = || ctrl.handle(&AppRequest::get(url.clone(), d.token(MON_APP)));

    report.expect("route query before insertion", "DENY", route().verdict.map(|a| a.to_string()).unwrap_or_default());

    let mut role: Vec<String> = MON_PERMISSIONS.iter().map(|p| (*p).to_owned()).collect();
    role.push(NEW_PERMISSION.to_owned());
    let create = raw(
        "createPermission",
        json!({ "id": NEW_PERMISSION, "name": "Route between switches", "resource-object": ResourceObject::Link }),
    );
    let grant = raw("updateRole", json!({ "role-id": "MON", "name": "MON", "permissions": role }));

    let app = d.app_session(MON_APP);
    let height = d.gateway.ledger().height();
    for (label, tx) in [("createPermission", &create), ("updateRole", &grant)] {
        let result = d.gateway.submit(&app, tx);
        report.record(
            format!("{label} by {MON_APP}"),
            "DENY",
            result.as_ref().map_or_else(denied, |_| "committed".to_owned()),
            matches!(result, Err(ApiError::Forbidden(_))),
        );
    }
    report.expect(
        "ledger height after declined insertions",
        height.to_string(),
        d.gateway.ledger().height().to_string(),
    );

    for (label, tx) in [("createPermission", &create), ("updateRole", &grant)] {
        let result = d.gateway.submit(&d.admin, tx);
        report.expect(
            format!("{label} by admin"),
            "committed",
            result.map_or_else(|e| denied(&e), |_| "committed".to_owned()),
        );
    }
    let registered = ctrl.register_route(
        ApiRoute {
            method: HttpMethod::Get,
            pattern: NEW_PERMISSION_URL.to_owned(),
            permission_id: NEW_PERMISSION.to_owned(),
        },
        |id| d.gateway.get_permission(&d.admin, id).is_ok(),
    );
    report.expect("route registered", "ok", registered.map_or_else(|e| e.to_string(), |_| "ok".to_owned()));
    let r = route();
    report.expect("route query after insertion", "ACCEPT", r.verdict.map(|a| a.to_string()).unwrap_or_default());
    report.expect("route hops", "4", r.body.as_array().map_or(0, Vec::len).to_string());
    report
}

/// FW_APP holds the firewall permission, MON_FW_APP does not.
fn permission_authorization() -> ScenarioReport {
    let mut report = ScenarioReport::new(4, "Authorization by permission");
    let d = seed_fixture();
    let ctrl = d.controller(ControllerOptions::default());
    let enable = |app: &str| ctrl.handle(&AppRequest::put(FIREWALL_ENABLE_URL, d.token(app)));

    let r = enable(MON_FW_APP);
    report.expect("MON_FW_APP enables firewall", outcome(Action::Deny, MSG_UNAUTHORIZED), answer(&r));
    report.expect("MON_FW_APP trust", "99", d.trust(MON_FW_APP).to_string());
    report.expect("firewall after denial", "false", ctrl.network().firewall_enabled.to_string());

    let r = enable(FW_APP);
    report.expect("FW_APP enables firewall", outcome(Action::Accept, MSG_FIREWALL_CHANGED), answer(&r));
    report.expect("FW_APP trust", "100", d.trust(FW_APP).to_string());
    report.expect("firewall after acceptance", "true", ctrl.network().firewall_enabled.to_string());
    report
}

/// FW_APP sends one request more than its quota within one window.
fn request_quota() -> ScenarioReport {
    let mut report = ScenarioReport::new(5, "Request quota");
    let d = seed_fixture();
    let quota = d.gateway.limiter().limit() as usize;
    // PUT is never answered from the cache, so every request is verified.
    let ctrl = d.controller(ControllerOptions::default());
    let request = AppRequest::put(FIREWALL_ENABLE_URL, d.token(FW_APP));

    let before = d.log_count();
    let accepted = (0..quota).filter(|_| ctrl.handle(&request).accepted()).count();
    report.expect("accepted within quota", quota.to_string(), accepted.to_string());
    let r = ctrl.handle(&request);
    report.expect(format!("request {}", quota + 1), outcome(Action::Deny, MSG_QUOTA), answer(&r));
    report.expect("decisions accounted", (quota + 1).to_string(), (d.log_count() - before).to_string());
    report.expect("FW_APP trust", "100", d.trust(FW_APP).to_string());

    d.clock.advance(d.gateway.limiter().window());
    let r = ctrl.handle(&request);
    report.expect("first request of the next window", outcome(Action::Accept, MSG_FIREWALL_CHANGED), answer(&r));
    report
}

/// A reference rule sample: name, body and expected controller answer.
pub struct RuleCase {
    pub sub_scenario: &'static str,
    pub rule: &'static str,
    pub body: Value,
    pub expected: Option<ConflictType>,
}

fn rule_case(
    sub_scenario: &'static str,
    rule: &'static str,
    proto: &str,
    src: &str,
    dst: &str,
    priority: u32,
    action: &str,
    expected: Option<ConflictType>,
) -> RuleCase {
    RuleCase {
        sub_scenario,
        rule,
        body: json!({ "nw-proto": proto, "src-ip": src, "dst-ip": dst, "priority": priority, "action": action }),
        expected,
    }
}

/// The conflict sub-scenarios; each starts on an empty rule store.
pub fn rule_cases() -> Vec<RuleCase> {
    use ConflictType::*;
    vec![
        rule_case("S1", "r1", "TCP", "10.0.0.0/24", "10.0.0.0/24", 51, "ALLOW", None),
        rule_case("S1", "r2", "TCP", "10.0.0.0/32", "10.0.0.2/32", 50, "ALLOW", Some(Redundancy)),
        rule_case("S2", "r3", "ICMP", "10.0.0.0/24", "10.0.0.0/24", 52, "ALLOW", None),
        rule_case("S2", "r4", "ICMP", "10.0.0.0/24", "10.0.0.2/32", 51, "DENY", Some(Shadowing)),
        rule_case("S3", "r5", "TCP", "10.0.0.0/24", "10.0.0.0/24", 50, "ALLOW", None),
        rule_case("S3", "r6", "TCP", "10.0.0.0/32", "10.0.0.2/32", 50, "DENY", Some(Correlation)),
        rule_case("S4", "r7", "UDP", "10.0.0.1/32", "10.0.0.2/32", 52, "ALLOW", None),
        rule_case("S4", "r8", "UDP", "10.0.0.0/24", "10.0.0.0/24", 53, "DENY", Some(Generalization)),
        rule_case("S5", "r9", "TCP", "10.0.0.0/28", "10.0.0.0/28", 51, "DROP", None),
        rule_case("S5", "r10", "TCP", "10.0.0.1/32", "10.0.0.0/24", 55, "DROP", Some(Overlap)),
        rule_case("S6", "r11", "TCP", "10.0.0.0/28", "10.0.0.0/28", 51, "DENY", None),
        rule_case("S6", "r12", "TCP", "10.0.0.16/29", "10.0.0.24/29", 52, "ALLOW", None),
        rule_case("S6", "r13", "ICMP", "10.0.0.1/32", "10.0.0.2/32", 55, "DENY", None),
    ]
}

pub fn expected_answer(expected: Option<ConflictType>) -> String {
    match expected {
        None => "SUCCESS".to_owned(),
        Some(kind) => format!("CONFLICT ({kind})"),
    }
}

/// MON_ACL_APP installs the reference ACL rules.
fn rule_conflicts() -> ScenarioReport {
    let mut report = ScenarioReport::new(6, "Flow rule conflicts");
    let d = seed_fixture();
    let ctrl = d.controller(ControllerOptions::default());
    let mut current = "";
    for case in rule_cases() {
        if case.sub_scenario != current {
            ctrl.reset_rules();
            current = case.sub_scenario;
        }
        let r = ctrl.handle(&AppRequest::post(ACL_URL, case.body.clone(), d.token(MON_ACL_APP)));
        let observed = match (r.status, r.conflict, r.body.get("status").and_then(Value::as_str)) {
            (200, None, Some("SUCCESS")) => "SUCCESS".to_owned(),
            (403, Some(kind), _) => format!("CONFLICT ({kind})"),
            _ => answer(&r),
        };
        report.expect(format!("{} {}", case.sub_scenario, case.rule), expected_answer(case.expected), observed);
    }
    let conflicts = rule_cases().iter().filter(|c| c.expected.is_some()).count();
    report.expect("MON_ACL_APP trust", (100 - conflicts).to_string(), d.trust(MON_ACL_APP).to_string());
    report
}
