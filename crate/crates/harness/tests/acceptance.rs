//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use nbguard_core::aaa::{MSG_AUTHENTICATED, MSG_AUTH_REQUIRED, MSG_LOW_TRUST, MSG_NO_TOKEN, MSG_TOKEN_EXPIRED, MSG_TOKEN_NEW};
use nbguard_core::assets::{self, Action, ApplicationAsset, AssetTx, PermissionAsset};
use nbguard_core::conflict::{validate_rule, ConflictType, RuleStore};
use nbguard_core::identity::Identity;
use nbguard_core::ledger::replay_encoded;
use nbguard_core::policy::{effective_permissions, ResourceObject};
use nbguard_gateway::client::GatewayClient;
use nbguard_gateway::{Gateway, GatewayConfig};
use nbguard_harness::controller::AppRequest;
use nbguard_harness::fixture::{seed_fixture, Deployment, ADMIN_SECRET, CONTROLLER_ID, MON_ACL_APP, MON_APP, PARTICIPANT_SECRET};
use nbguard_harness::floodlight::*;
use nbguard_harness::network::dpid;
use nbguard_harness::scenarios::ACL_URL;
use nbguard_harness::{compare_caching, run_scenario, BenchConfig, ControllerOptions, ScenarioReport};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

type Outcome = Result<String, String>;

fn ensure(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

fn scenario_passes(n: u8) -> Result<ScenarioReport, String> {
    let report = run_scenario(n).map_err(|e| e.to_string())?;
    let failed: Vec<String> = report
        .steps
        .iter()
        .filter(|s| !s.ok)
        .map(|s| format!("{}: expected {:?}, observed {:?}", s.label, s.expected, s.observed))
        .collect();
    ensure(report.passed, || format!("scenario {n}: {}", failed.join("; ")))?;
    Ok(report)
}

fn authentication_matrix() -> Outcome {
    scenario_passes(1)?;

    let d = seed_fixture();
    let server = common::serve(d.gateway.clone());
    let wallet = &d.app(MON_APP).wallet;

    let started = Instant::now();
    let mut client = GatewayClient::new(&server.url).map_err(|e| e.to_string())?;
    let case1 = client.get("/system/ping");
    client.login(MON_APP, PARTICIPANT_SECRET).map_err(|e| e.to_string())?;
    let case2 = client.get("/system/ping");
    client.upload_wallet(wallet).map_err(|e| e.to_string())?;
    let case3 = client.get("/system/ping");
    let elapsed = started.elapsed();

    for (label, case) in [("no token", &case1), ("token only", &case2)] {
        match case {
            Err(e) => ensure(e.status() == Some(401) && e.to_string().contains(MSG_AUTH_REQUIRED), || {
                format!("{label}: {e}")
            })?,
            Ok(v) => return Err(format!("{label}: accepted with {v}")),
        }
    }
    let body = case3.map_err(|e| format!("token and card: {e}"))?;
    ensure(body["action"] == "ACCEPT" && body["data"]["id"] == MON_APP, || {
        format!("token and card: {body}")
    })?;
    ensure(elapsed < Duration::from_secs(1), || format!("three cases took {elapsed:?}"))?;
    Ok(format!("3 cases over HTTP in {:.1} ms", elapsed.as_secs_f64() * 1e3))
}

fn token_lifecycle() -> Outcome {
    scenario_passes(2)?;

    let mut d = seed_fixture();
    let session = d.app_session(MON_APP);
    let mut seen = Vec::new();
    let mut check = |state: &str, action: Action, message: &str, d: &Deployment| -> Result<(), String> {
        let decision = d.gateway.authenticate(&session, CONTROLLER_ID);
        seen.push(format!("{state}={}", decision.action));
        ensure(decision.action == action && decision.message == message, || {
            format!("{state}: {} {:?}", decision.action, decision.message)
        })
    };
    check("NULL", Action::Deny, MSG_NO_TOKEN, &d)?;
    d.request_token(MON_APP);
    check("NEW", Action::Deny, MSG_TOKEN_NEW, &d)?;
    d.issue_token(MON_APP);
    check("ISSUED", Action::Accept, MSG_AUTHENTICATED, &d)?;
    d.expire_token(MON_APP);
    check("EXPIRED", Action::Deny, MSG_TOKEN_EXPIRED, &d)?;
    Ok(seen.join(" "))
}

fn blockchain_acl() -> Outcome {
    let report = scenario_passes(3)?;
    Ok(format!("{} steps", report.steps.len()))
}

fn authorization() -> Outcome {
    let report = scenario_passes(4)?;
    Ok(format!("{} steps", report.steps.len()))
}

fn trust_worked_example() -> Outcome {
    const APP: &str = "app5";
    let p1 = FL_POST_ADD_ACL;
    let p2 = FL_GET_FW_STATUS_JSON;
    let p3 = FL_GET_SINGLE_SWITCH;

    let mut d = seed_fixture();
    let thresholds = d.gateway.thresholds(&d.admin).map_err(|e| e.to_string())?;
    for (object, value) in [
        (ResourceObject::Flowmod, 80),
        (ResourceObject::Statistics, 75),
        (ResourceObject::Switch, 70),
    ] {
        ensure(thresholds.get(&object) == Some(&value), || format!("threshold of {object:?}"))?;
    }
    for (p, object) in [(p1, ResourceObject::Flowmod), (p2, ResourceObject::Statistics), (p3, ResourceObject::Switch)] {
        let asset = d.gateway.get_permission(&d.admin, p).map_err(|e| e.to_string())?;
        ensure(asset.resource_object == object, || format!("{p} is {:?}", asset.resource_object))?;
    }
    d.add_role("P123", &[p1, p2, p3], 1);
    d.add_app(APP, "P123_APP", "P123");
    d.request_token(APP);
    d.issue_token(APP);
    let token = d.token(APP).map(str::to_owned);
    let ctrl = d.controller(ControllerOptions {
        caching: false,
        ..ControllerOptions::default()
    });
    let effective = || -> BTreeSet<String> {
        let policy = d.gateway.aaa().policy();
        d.gateway.ledger().with_state(|s| {
            let app = assets::load::<ApplicationAsset>(s, APP).expect("app5 exists");
            effective_permissions(policy, s, &app)
        })
    };
    let set = |ps: &[&str]| ps.iter().map(|p| (*p).to_owned()).collect::<BTreeSet<_>>();

    let violation = AppRequest::get("/wm/device", token.as_deref());
    for i in 0..21 {
        let r = ctrl.handle(&violation);
        ensure(!r.accepted(), || format!("violation {i} accepted"))?;
    }
    ensure(d.trust(APP) == 79, || format!("trust after 21 violations is {}", d.trust(APP)))?;
    ensure(effective() == set(&[p2, p3]), || format!("effective at 79: {:?}", effective()))?;

    let acl = json!({"nw-proto": "TCP", "src-ip": "10.0.0.1/32", "dst-ip": "10.0.0.2/32", "action": "ALLOW"});
    let denied = ctrl.handle(&AppRequest::post(ACL_URL, acl.clone(), token.as_deref()));
    ensure(!denied.accepted() && denied.message() == Some(MSG_LOW_TRUST), || {
        format!("p1 at 79: {}", denied.body)
    })?;
    for req in [
        AppRequest::get("/wm/firewall/module/status/json", token.as_deref()),
        AppRequest::get(format!("/wm/core/switch/{}/port/json", dpid(1)), token.as_deref()),
    ] {
        let r = ctrl.handle(&req);
        ensure(r.accepted(), || format!("{} at low trust: {}", req.url, r.body))?;
    }

    d.gateway.recover_trust(&d.admin, APP, 100).map_err(|e| e.to_string())?;
    ensure(effective() == set(&[p1, p2, p3]), || format!("effective at 100: {:?}", effective()))?;
    let r = ctrl.handle(&AppRequest::post(ACL_URL, acl, token.as_deref()));
    ensure(r.accepted() && r.status == 200, || format!("p1 at 100: {}", r.body))?;
    Ok("79 disables flowmod only; recovery to 100 restores it".to_owned())
}

/// Dotted quad and prefix length, parsed by hand.
fn parse_block(cidr: &str) -> (u32, u32) {
    let (addr, len) = cidr.split_once('/').expect("cidr has a prefix");
    let addr = addr
        .split('.')
        .map(|o| o.parse::<u32>().expect("octet"))
        .fold(0u32, |acc, o| (acc << 8) | o);
    let len: u32 = len.parse().expect("prefix length");
    let size = 1u32 << (32 - len);
    (addr & !(size - 1), size)
}

fn hosts(cidr: &str) -> BTreeSet<u32> {
    let (base, size) = parse_block(cidr);
    (base..base + size).collect()
}

/// Conflict of `f` with the installed `g`, decided from explicit host sets.
fn oracle(f: &Value, g: &Value) -> Option<ConflictType> {
    let proto = |r: &Value| r["nw-proto"].as_str().unwrap().to_owned();
    let (pf, pg) = (proto(f), proto(g));
    if pf != "ANY" && pg != "ANY" && pf != pg {
        return None;
    }
    let hf = hosts(f["dst-ip"].as_str().unwrap());
    let hg = hosts(g["dst-ip"].as_str().unwrap());
    let same_action = f["action"] == g["action"];
    let prio = |r: &Value| r["priority"].as_u64().unwrap();
    if hf.is_disjoint(&hg) {
        None
    } else if hf.is_subset(&hg) {
        Some(if same_action {
            ConflictType::Redundancy
        } else if prio(f) < prio(g) {
            ConflictType::Shadowing
        } else {
            ConflictType::Correlation
        })
    } else if hf.is_superset(&hg) {
        Some(if same_action {
            ConflictType::Overlap
        } else {
            ConflictType::Generalization
        })
    } else {
        Some(ConflictType::Correlation)
    }
}

fn random_rule(rng: &mut StdRng) -> Value {
    let len = rng.gen_range(24..=32u32);
    let host = rng.gen_range(0..256u32);
    let base = host & !((1u32 << (32 - len)) - 1);
    let proto = ["TCP", "UDP", "ICMP", "ANY"][rng.gen_range(0..4)];
    let action = ["ALLOW", "DENY", "DROP"][rng.gen_range(0..3)];
    json!({
        "nw-proto": proto,
        "src-ip": format!("10.0.1.{}/32", rng.gen_range(0..256)),
        "dst-ip": format!("10.0.0.{base}/{len}"),
        "priority": rng.gen_range(0..4u64),
        "action": action,
    })
}

fn conflict_detection() -> Outcome {
    scenario_passes(6)?;

    let mut rng = StdRng::seed_from_u64(0x5eed);
    let mut kinds = BTreeSet::new();
    for i in 0..200 {
        let g = random_rule(&mut rng);
        let f = random_rule(&mut rng);
        let mut store = RuleStore::new();
        let installed = store.check_against_store(validate_rule(&g).map_err(|e| e.to_string())?);
        ensure(installed.is_success(), || format!("pair {i}: first rule refused"))?;
        let report = store.check_against_store(validate_rule(&f).map_err(|e| e.to_string())?);
        let expected = oracle(&f, &g);
        ensure(report.conflict_type == expected, || {
            format!("pair {i}: {f} against {g}: got {:?}, oracle {expected:?}", report.conflict_type)
        })?;
        kinds.insert(format!("{expected:?}"));
    }
    Ok(format!("200 random pairs agree with the host-set oracle ({} outcome kinds)", kinds.len()))
}

fn rate_limit() -> Outcome {
    let report = scenario_passes(5)?;
    Ok(format!("{} steps", report.steps.len()))
}

fn copy_dir(from: &Path, to: &Path) -> std::io::Result<()> {
    fs::create_dir_all(to)?;
    for entry in fs::read_dir(from)? {
        let entry = entry?;
        fs::copy(entry.path(), to.join(entry.file_name()))?;
    }
    Ok(())
}

fn tamper_evidence() -> Outcome {
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = work.path().join("node");
    let mut d = Deployment::open(&data, GatewayConfig::new(ADMIN_SECRET)).map_err(|e| e.to_string())?;
    d.add_role("MON_ACL", &[FL_GET_SWITCH_JSON, FL_POST_ADD_ACL], 1);
    d.add_app(MON_ACL_APP, "MON_ACL_APP", "MON_ACL");
    d.request_token(MON_ACL_APP);
    d.issue_token(MON_ACL_APP);
    let token = d.token(MON_ACL_APP).map(str::to_owned);
    let ctrl = d.controller(ControllerOptions {
        caching: false,
        ..ControllerOptions::default()
    });
    for i in 0..110 {
        let req = if i % 2 == 0 {
            AppRequest::get("/wm/core/controller/switches/json", token.as_deref())
        } else {
            AppRequest::get("/wm/device", token.as_deref())
        };
        ctrl.handle(&req);
        if d.trust(MON_ACL_APP) < 90 {
            d.gateway.recover_trust(&d.admin, MON_ACL_APP, 100).map_err(|e| e.to_string())?;
        }
    }

    let ledger = d.gateway.ledger();
    let transactions: usize = ledger.blocks().iter().map(|b| b.transactions.len()).sum();
    ensure(transactions >= 100, || format!("only {transactions} transactions"))?;
    ensure(ledger.verify_chain(), || "untouched chain fails verification".to_owned())?;

    let encoded = ledger.encoded_chain();
    let peers = ledger.peer_ids().to_vec();
    let membership = ledger.membership();
    let replay = replay_encoded(&encoded, &peers, &membership).map_err(|e| e.to_string())?;
    ensure(replay.state.encode() == ledger.state_bytes(), || "replay state differs".to_owned())?;

    let mut rng = StdRng::seed_from_u64(7);
    let mut flips = 0;
    for block in 0..encoded.len() {
        for _ in 0..2 {
            let mut mutated = encoded.clone();
            let bit = rng.gen_range(0..mutated[block].len() * 8);
            mutated[block][bit / 8] ^= 1 << (bit % 8);
            ensure(replay_encoded(&mutated, &peers, &membership).is_err(), || {
                format!("flip of bit {bit} in block {block} went unnoticed")
            })?;
            flips += 1;
        }
    }

    let state = ledger.state_bytes();
    let height = ledger.height();
    let config = || GatewayConfig::new(ADMIN_SECRET);
    let fresh = work.path().join("fresh");
    copy_dir(&data, &fresh).map_err(|e| e.to_string())?;
    let node = Gateway::open(&fresh, config()).map_err(|e| format!("fresh node: {e}"))?;
    ensure(node.ledger().height() == height && node.ledger().state_bytes() == state, || {
        "fresh node state differs".to_owned()
    })?;

    let corrupt = work.path().join("corrupt");
    copy_dir(&data, &corrupt).map_err(|e| e.to_string())?;
    let chain = corrupt.join("chain.log");
    let mut bytes = fs::read(&chain).map_err(|e| e.to_string())?;
    let at = bytes.len() / 2;
    bytes[at] ^= 0x04;
    fs::write(&chain, bytes).map_err(|e| e.to_string())?;
    ensure(Gateway::open(&corrupt, config()).is_err(), || "corrupt chain file opened".to_owned())?;

    Ok(format!(
        "{transactions} transactions in {height} blocks; {flips} bit flips rejected; fresh node identical"
    ))
}

fn caching() -> Outcome {
    let cmp = compare_caching(&BenchConfig {
        requests: 1000,
        ledger_delay: Duration::from_millis(100),
        concurrency: 8,
        ..BenchConfig::default()
    });
    let (off, on) = (&cmp.without_cache, &cmp.with_cache);
    let speedup = cmp.speedup.ok_or("no latency samples")?;
    ensure(off.accepted == 1000 && on.accepted == 1000, || {
        format!("accepted {} without cache, {} with", off.accepted, on.accepted)
    })?;
    ensure(off.log_entries == on.log_entries, || {
        format!("log entries {} without cache, {} with", off.log_entries, on.log_entries)
    })?;
    ensure(off.logs == on.logs, || "log multisets differ".to_owned())?;
    ensure(on.hit_ratio >= 0.99, || format!("hit ratio {}", on.hit_ratio))?;
    ensure(speedup >= 10.0, || format!("speedup {speedup:.1}"))?;
    let mean = |r: &nbguard_harness::BenchReport| r.stats.map_or(f64::NAN, |s| s.mean);
    Ok(format!(
        "mean {:.2} ms -> {:.3} ms, speedup {speedup:.0}x, hit ratio {:.3}, {} log entries each",
        mean(off),
        mean(on),
        on.hit_ratio,
        on.log_entries
    ))
}

fn scalability() -> Outcome {
    let mut lines = Vec::new();
    for peers in [3, 5, 6, 10] {
        let mut config = GatewayConfig::new(ADMIN_SECRET);
        config.peer_count = peers;
        let gw = Gateway::in_memory(config);
        let admin = Identity::from_wallet(&gw.admin_wallet()).map_err(|e| e.to_string())?;
        let ledger = gw.ledger();
        let block_size = ledger.config().orderer.max_block_size;
        let height = ledger.height();
        let started = Instant::now();
        let mut ids = Vec::with_capacity(1000);
        for i in 0..1000 {
            let tx = AssetTx::CreatePermission(nbguard_core::assets::tx::CreatePermission {
                id: format!("P{i:04}"),
                name: format!("permission {i}"),
                resource_object: ResourceObject::Statistics,
            });
            ids.push(ledger.submit_async(tx.propose(&admin)).map_err(|e| format!("{peers} peers: {e}"))?);
        }
        ledger.flush().map_err(|e| e.to_string())?;
        let elapsed = started.elapsed();

        let invalid = ids
            .iter()
            .filter(|id| !ledger.receipt(id).is_some_and(|r| r.validity.is_valid()))
            .count();
        ensure(invalid == 0, || format!("{peers} peers: {invalid} transactions not valid"))?;
        let expected = height + 1000u64.div_ceil(block_size as u64);
        ensure(ledger.height() == expected, || {
            format!("{peers} peers: height {} instead of {expected}", ledger.height())
        })?;
        let stored = ledger.with_state(|s| {
            (0..1000)
                .filter(|i| assets::load::<PermissionAsset>(s, &format!("P{i:04}")).is_some())
                .count()
        });
        ensure(stored == 1000, || format!("{peers} peers: {stored} permissions in state"))?;
        let state = ledger.state_bytes();
        for p in 0..peers {
            ensure(ledger.peer_state_bytes(p).as_deref() == Some(&state[..]), || {
                format!("{peers} peers: peer {p} diverges")
            })?;
        }
        ensure(ledger.verify_chain(), || format!("{peers} peers: chain fails verification"))?;
        lines.push(format!("{peers} peers {:.1} s", elapsed.as_secs_f64()));
    }
    Ok(lines.join(", "))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("authentication matrix", authentication_matrix),
        ("token lifecycle", token_lifecycle),
        ("ledger-backed permission insertion", blockchain_acl),
        ("authorization and trust decrement", authorization),
        ("trust thresholds and recovery", trust_worked_example),
        ("rule conflict detection", conflict_detection),
        ("request rate limit", rate_limit),
        ("tamper evidence and replay", tamper_evidence),
        ("verdict caching", caching),
        ("multi-peer consistency", scalability),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, criterion) in criteria {
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(criterion)).unwrap_or_else(|payload| {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| (*s).to_owned()))
                .unwrap_or_else(|| "panic".to_owned());
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.1} s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{secs:.1} s]");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
