use std::collections::{BTreeMap, BTreeSet};

use chrono::{TimeZone, Utc};
use nbguard_core::assets::tx::*;
use nbguard_core::assets::{
    self, live_token, ApplicationAsset, AssetChaincode, AssetError, AssetTx, ControllerAsset,
    LogEntryAsset, PermissionAsset, RoleAsset, TokenAsset, TokenStatus,
};
use nbguard_core::identity::{CertificateAuthority, Identity};
use nbguard_core::ledger::{Chaincode, Ledger, LedgerConfig, MemberKind, TxContext, WorldState};
use nbguard_core::policy::{HttpMethod, ResourceObject};
use proptest::prelude::*;

/// Runs the chaincode directly against a world state, applying the write
/// set on success. Skips endorsement so property tests stay fast.
struct Sim {
    cc: AssetChaincode,
    state: WorldState,
    ca: CertificateAuthority,
    ids: BTreeMap<String, Identity>,
}

impl Sim {
    fn new() -> Self {
        Sim {
            cc: AssetChaincode::new(["admin"]),
            state: WorldState::new(),
            ca: CertificateAuthority::new("ca", "Org1MSP"),
            ids: BTreeMap::new(),
        }
    }

    fn identity(&mut self, id: &str) -> Identity {
        if !self.ids.contains_key(id) {
            let identity = self.ca.enroll(id);
            self.ids.insert(id.to_owned(), identity);
        }
        self.ids[id].clone()
    }

    fn run(&mut self, who: &str, tx: AssetTx) -> Result<serde_json::Value, AssetError> {
        let identity = self.identity(who);
        let proposal = tx.propose(&identity);
        let mut ctx = TxContext::new(&self.state, &proposal);
        let out = self.cc.invoke(&mut ctx)?;
        let (_, writes) = ctx.into_sets();
        self.state.apply(&writes);
        Ok(out)
    }

    fn admin(&mut self, tx: AssetTx) -> serde_json::Value {
        self.run("admin", tx).expect("admin transaction")
    }

    fn app(&self, id: &str) -> ApplicationAsset {
        assets::load(&self.state, id).unwrap()
    }
}

fn permission(id: &str, object: ResourceObject) -> AssetTx {
    AssetTx::CreatePermission(CreatePermission {
        id: id.into(),
        name: id.into(),
        resource_object: object,
    })
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Two permissions, one role, controller c1 and applications app1, app2.
fn fixture() -> Sim {
    let mut sim = Sim::new();
    sim.admin(permission("P_SWITCH", ResourceObject::Switch));
    sim.admin(permission("P_FLOW", ResourceObject::Flowmod));
    sim.admin(AssetTx::CreateRole(CreateRole {
        id: "role1".into(),
        name: "r".into(),
        permissions: strings(&["P_SWITCH"]),
        priority: 1,
    }));
    sim.admin(AssetTx::AddController(AddController {
        id: "c1".into(),
        name: "floodlight".into(),
        permissions: strings(&["P_SWITCH", "P_FLOW"]),
    }));
    for app in ["app1", "app2"] {
        sim.admin(AssetTx::AddApplication(AddApplication {
            id: app.into(),
            name: app.into(),
            trust_index: 100,
            role_id: "role1".into(),
        }));
    }
    sim
}

fn request_token(controller: &str) -> AssetTx {
    AssetTx::RequestAppToken(RequestAppToken {
        controller_id: controller.into(),
    })
}

fn token_of(value: serde_json::Value) -> TokenAsset {
    serde_json::from_value(value).unwrap()
}

fn log_entry(id: &str, controller: &str) -> AssetTx {
    AssetTx::AddLogEntry(AddLogEntry {
        id: id.into(),
        created_time: Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
        resource_url: "/wm/core/controller/switches/json".into(),
        data: String::new(),
        token_id: "t".into(),
        http_method: HttpMethod::Get,
        permission_id: "P_SWITCH".into(),
        app_id: "app1".into(),
        controller_id: controller.into(),
        action: assets::Action::Accept,
        message: "ok".into(),
    })
}

#[test]
fn token_lifecycle_through_the_ledger() {
    let ca = CertificateAuthority::new("ca", "Org1MSP");
    let ledger = Ledger::with_ca(LedgerConfig::default(), AssetChaincode::new(["admin"]), &ca).unwrap();
    let ids: BTreeMap<&str, Identity> = ["admin", "app1", "c1"]
        .into_iter()
        .map(|id| (id, ca.enroll(id)))
        .collect();
    for identity in ids.values() {
        ledger
            .register_member(identity.certificate().clone(), MemberKind::Client)
            .unwrap();
    }
    let commit = |who: &str, tx: AssetTx| {
        ledger
            .submit_and_commit(tx.propose(&ids[who]))
            .map(|receipt| receipt.response)
    };
    commit("admin", permission("P_SWITCH", ResourceObject::Switch)).unwrap();
    commit(
        "admin",
        AssetTx::AddController(AddController {
            id: "c1".into(),
            name: "c".into(),
            permissions: strings(&["P_SWITCH"]),
        }),
    )
    .unwrap();
    commit(
        "admin",
        AssetTx::AddApplication(AddApplication {
            id: "app1".into(),
            name: "a".into(),
            trust_index: 100,
            role_id: String::new(),
        }),
    )
    .unwrap();

    let token = token_of(commit("app1", request_token("c1")).unwrap());
    assert_eq!(token.status, TokenStatus::New);
    assert_eq!(token.application_id, "app1");
    let again = token_of(commit("app1", request_token("c1")).unwrap());
    assert_eq!(again.id, token.id);

    let issue = AssetTx::IssueToken(IssueToken { token_id: token.id.clone() });
    assert!(commit("app1", issue.clone()).is_err());
    assert_eq!(token_of(commit("admin", issue).unwrap()).status, TokenStatus::Issued);

    let expire = AssetTx::ExpireToken(ExpireToken { token_id: token.id.clone() });
    assert_eq!(token_of(commit("c1", expire).unwrap()).status, TokenStatus::Expired);
    ledger.with_state(|s| assert!(live_token(s, "app1", "c1").is_none()));

    let fresh = token_of(commit("app1", request_token("c1")).unwrap());
    assert_ne!(fresh.id, token.id);
    assert!(ledger.verify_chain());
}

#[test]
fn token_requests_need_an_application_and_a_known_controller() {
    let mut sim = fixture();
    assert!(matches!(sim.run("admin", request_token("c1")), Err(AssetError::Denied { .. })));
    assert!(matches!(sim.run("c1", request_token("c1")), Err(AssetError::Denied { .. })));
    assert!(matches!(sim.run("stranger", request_token("c1")), Err(AssetError::Denied { .. })));
    assert_eq!(
        sim.run("app1", request_token("c9")),
        Err(AssetError::NotFound { kind: "controller", id: "c9".into() })
    );
    sim.run("app1", request_token("c1")).unwrap();
}

#[test]
fn removing_a_participant_expires_its_tokens() {
    let mut sim = fixture();
    let t1 = token_of(sim.run("app1", request_token("c1")).unwrap());
    let t2 = token_of(sim.run("app2", request_token("c1")).unwrap());
    sim.admin(AssetTx::RemoveApplication(RemoveApplication { app_id: "app1".into() }));
    let t1: TokenAsset = assets::load(&sim.state, &t1.id).unwrap();
    assert_eq!(t1.status, TokenStatus::Expired);
    assert!(assets::load::<ApplicationAsset>(&sim.state, "app1").is_none());
    assert_eq!(assets::load::<TokenAsset>(&sim.state, &t2.id).unwrap().status, TokenStatus::New);

    sim.admin(AssetTx::RemoveController(RemoveController { controller_id: "c1".into() }));
    assert_eq!(assets::load::<TokenAsset>(&sim.state, &t2.id).unwrap().status, TokenStatus::Expired);
    assert!(live_token(&sim.state, "app2", "c1").is_none());
}

#[test]
fn permissions_in_use_cannot_be_removed() {
    let mut sim = fixture();
    let remove = |id: &str| AssetTx::RemovePermission(RemovePermission { permission_id: id.into() });
    assert!(matches!(
        sim.run("admin", remove("P_SWITCH")),
        Err(AssetError::PermissionInUse { .. })
    ));
    assert!(matches!(sim.run("admin", remove("P_FLOW")), Err(AssetError::PermissionInUse { .. })));
    sim.admin(AssetTx::UpdateController(UpdateController {
        controller_id: "c1".into(),
        name: "c".into(),
        permissions: strings(&["P_SWITCH"]),
    }));
    sim.admin(remove("P_FLOW"));
    assert!(assets::load::<PermissionAsset>(&sim.state, "P_FLOW").is_none());
}

#[test]
fn ids_are_unique_across_participant_kinds() {
    let mut sim = fixture();
    let dup_app = AssetTx::AddApplication(AddApplication {
        id: "c1".into(),
        name: "x".into(),
        trust_index: 100,
        role_id: String::new(),
    });
    assert_eq!(sim.run("admin", dup_app), Err(AssetError::DuplicateId("c1".into())));
    let dup_ctrl = AssetTx::AddController(AddController {
        id: "admin".into(),
        name: "x".into(),
        permissions: vec![],
    });
    assert_eq!(sim.run("admin", dup_ctrl), Err(AssetError::DuplicateId("admin".into())));
    let bad = AssetTx::AddController(AddController {
        id: "a/b".into(),
        name: "x".into(),
        permissions: vec![],
    });
    assert_eq!(sim.run("admin", bad), Err(AssetError::InvalidId("a/b".into())));
}

#[test]
fn log_entries_are_write_once_and_owned_by_their_controller() {
    let mut sim = fixture();
    sim.run("c1", log_entry("log1", "c1")).unwrap();
    let stored: LogEntryAsset = assets::load(&sim.state, "log1").unwrap();
    assert_eq!(sim.run("c1", log_entry("log1", "c1")), Err(AssetError::LogExists("log1".into())));
    assert_eq!(sim.run("admin", log_entry("log1", "c1")), Err(AssetError::LogExists("log1".into())));
    assert_eq!(assets::load::<LogEntryAsset>(&sim.state, "log1").unwrap(), stored);
    assert!(matches!(sim.run("c1", log_entry("log2", "c2")), Err(AssetError::Denied { .. })));
    assert!(matches!(sim.run("app1", log_entry("log3", "c1")), Err(AssetError::Denied { .. })));
    // requests relayed by unregistered controllers are recorded by an admin
    sim.admin(log_entry("log4", "ghost"));
}

// Independent expectation of which (participant, transaction) pairs the
// ACL lets through, written as an allow list instead of rule evaluation.
#[derive(Debug, Clone, Copy)]
enum Probe {
    CreatePermission,
    AddApplication,
    UpdateApplication(usize),
    UpdateRole,
    TrustDown(usize),
    RequestToken,
    IssueToken,
    ExpireToken,
    AddLog(usize),
    RemoveController,
}

const ACTORS: [&str; 5] = ["admin", "app1", "app2", "c1", "nobody"];
const TARGET_APPS: [&str; 2] = ["app1", "app2"];
const LOG_OWNERS: [&str; 2] = ["c1", "c2"];

fn probe_strategy() -> impl Strategy<Value = Probe> {
    prop_oneof![
        Just(Probe::CreatePermission),
        Just(Probe::AddApplication),
        (0..2usize).prop_map(Probe::UpdateApplication),
        Just(Probe::UpdateRole),
        (0..2usize).prop_map(Probe::TrustDown),
        Just(Probe::RequestToken),
        Just(Probe::IssueToken),
        Just(Probe::ExpireToken),
        (0..2usize).prop_map(Probe::AddLog),
        Just(Probe::RemoveController),
    ]
}

fn expected_allowed(actor: &str, probe: Probe) -> bool {
    match (actor, probe) {
        ("admin", Probe::RequestToken) => false,
        ("admin", _) => true,
        ("app1", Probe::RequestToken) | ("app2", Probe::RequestToken) => true,
        ("c1", Probe::TrustDown(_)) | ("c1", Probe::ExpireToken) => true,
        ("c1", Probe::AddLog(owner)) => LOG_OWNERS[owner] == "c1",
        _ => false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn acl_denials_match_the_allow_list(actor in 0..ACTORS.len(), probe in probe_strategy()) {
        let mut sim = fixture();
        let token = token_of(sim.run("app1", request_token("c1")).unwrap());
        let actor = ACTORS[actor];
        let tx = match probe {
            Probe::CreatePermission => permission("P_NEW", ResourceObject::Host),
            Probe::AddApplication => AssetTx::AddApplication(AddApplication {
                id: "app9".into(), name: "n".into(), trust_index: 100, role_id: String::new(),
            }),
            Probe::UpdateApplication(i) => AssetTx::UpdateApplication(UpdateApplication {
                app_id: TARGET_APPS[i].into(), name: "renamed".into(),
            }),
            Probe::UpdateRole => AssetTx::UpdateRole(UpdateRole {
                role_id: "role1".into(), name: "r".into(), permissions: vec![],
            }),
            Probe::TrustDown(i) => AssetTx::UpdateAppTrustIndex(UpdateAppTrustIndex {
                app_id: TARGET_APPS[i].into(), trust_index: 99,
            }),
            Probe::RequestToken => request_token("c1"),
            Probe::IssueToken => AssetTx::IssueToken(IssueToken { token_id: token.id.clone() }),
            Probe::ExpireToken => AssetTx::ExpireToken(ExpireToken { token_id: token.id.clone() }),
            Probe::AddLog(owner) => log_entry("L1", LOG_OWNERS[owner]),
            Probe::RemoveController => AssetTx::RemoveController(RemoveController {
                controller_id: "c1".into(),
            }),
        };
        let before = sim.state.encode();
        let result = sim.run(actor, tx);
        let denied = matches!(result, Err(AssetError::Denied { .. }));
        prop_assert_eq!(!denied, expected_allowed(actor, probe), "{} {:?} -> {:?}", actor, probe, result);
        if denied {
            prop_assert_eq!(sim.state.encode(), before);
        }
    }

    #[test]
    fn controllers_only_lower_trust(steps in prop::collection::vec(-5i64..110, 1..12)) {
        let mut sim = fixture();
        let mut model = 100i64;
        for requested in steps {
            let tx = AssetTx::UpdateAppTrustIndex(UpdateAppTrustIndex {
                app_id: "app1".into(), trust_index: requested,
            });
            let result = sim.run("c1", tx);
            let ok = (0..=100).contains(&requested) && requested < model;
            prop_assert_eq!(result.is_ok(), ok, "{} from {}: {:?}", requested, model, result);
            if ok {
                model = requested;
            }
            prop_assert_eq!(i64::from(sim.app("app1").trust_index), model);
        }
    }

    #[test]
    fn token_status_follows_the_state_machine(ops in prop::collection::vec(0u8..4, 1..16)) {
        let mut sim = fixture();
        // Model: the current token id and its status, tracked independently.
        let mut current: Option<(String, TokenStatus)> = None;
        for op in ops {
            match op {
                0 => {
                    let token = token_of(sim.run("app1", request_token("c1")).unwrap());
                    match &current {
                        Some((id, status)) if *status != TokenStatus::Expired => {
                            prop_assert_eq!(&token.id, id);
                        }
                        _ => {
                            prop_assert_eq!(token.status, TokenStatus::New);
                            current = Some((token.id, TokenStatus::New));
                        }
                    }
                }
                1 | 2 => {
                    let Some((id, status)) = current.clone() else { continue };
                    let (who, next, tx) = if op == 1 {
                        ("admin", TokenStatus::Issued, AssetTx::IssueToken(IssueToken { token_id: id.clone() }))
                    } else {
                        ("c1", TokenStatus::Expired, AssetTx::ExpireToken(ExpireToken { token_id: id.clone() }))
                    };
                    let legal = matches!(
                        (status, next),
                        (TokenStatus::New, TokenStatus::Issued)
                            | (TokenStatus::New, TokenStatus::Expired)
                            | (TokenStatus::Issued, TokenStatus::Expired)
                    );
                    let result = sim.run(who, tx);
                    prop_assert_eq!(result.is_ok(), legal, "{:?} -> {:?}: {:?}", status, next, result);
                    if legal {
                        current = Some((id, next));
                    }
                }
                _ => {
                    let Some((id, status)) = current.clone() else { continue };
                    let replay = AssetTx::IssueToken(IssueToken { token_id: id.clone() });
                    if status != TokenStatus::New {
                        let illegal = matches!(sim.run("admin", replay), Err(AssetError::IllegalTransition { .. }));
                        prop_assert!(illegal);
                    }
                }
            }
            if let Some((id, status)) = &current {
                let stored: TokenAsset = assets::load(&sim.state, id).unwrap();
                prop_assert_eq!(stored.status, *status);
                let live = live_token(&sim.state, "app1", "c1").map(|t| t.id);
                prop_assert_eq!(live.as_ref() == Some(id), *status != TokenStatus::Expired);
            }
        }
    }

    #[test]
    fn references_stay_resolvable(ops in prop::collection::vec((0u8..8, 0usize..3, 0usize..3), 1..30)) {
        let mut sim = Sim::new();
        let perms = ["P0", "P1", "P2"];
        let roles = ["R0", "R1", "R2"];
        for (op, a, b) in ops {
            let tx = match op {
                0 => permission(perms[a], ResourceObject::ALL[a]),
                1 => AssetTx::RemovePermission(RemovePermission { permission_id: perms[a].into() }),
                2 => AssetTx::CreateRole(CreateRole {
                    id: roles[a].into(), name: "r".into(), permissions: strings(&[perms[b]]), priority: 0,
                }),
                3 => AssetTx::UpdateRole(UpdateRole {
                    role_id: roles[a].into(), name: "r".into(), permissions: strings(&perms[..b]),
                }),
                4 => AssetTx::AddController(AddController {
                    id: format!("C{a}"), name: "c".into(), permissions: strings(&[perms[b]]),
                }),
                5 => AssetTx::RemoveController(RemoveController { controller_id: format!("C{a}") }),
                6 => AssetTx::AddApplication(AddApplication {
                    id: format!("A{a}"), name: "a".into(), trust_index: 100, role_id: roles[b].into(),
                }),
                _ => AssetTx::UpdateAppRole(UpdateAppRole { app_id: format!("A{a}"), role_id: roles[b].into() }),
            };
            let before = sim.state.encode();
            if sim.run("admin", tx).is_err() {
                prop_assert_eq!(sim.state.encode(), before);
            }

            let permissions: BTreeSet<String> =
                assets::list::<PermissionAsset>(&sim.state).into_iter().map(|p| p.id).collect();
            let role_ids: BTreeSet<String> =
                assets::list::<RoleAsset>(&sim.state).into_iter().map(|r| r.id).collect();
            for role in assets::list::<RoleAsset>(&sim.state) {
                prop_assert!(role.permissions.is_subset(&permissions), "{:?}", role);
            }
            for controller in assets::list::<ControllerAsset>(&sim.state) {
                prop_assert!(controller.permissions.is_subset(&permissions), "{:?}", controller);
            }
            for app in assets::list::<ApplicationAsset>(&sim.state) {
                prop_assert!(app.role_id.is_empty() || role_ids.contains(&app.role_id), "{:?}", app);
            }
        }
    }
}
