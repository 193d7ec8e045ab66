//! A deployed world: gateway, administrator, one controller and the
//! evaluation applications.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use chrono::{TimeZone, Utc};
use nbguard_core::assets::TokenAsset;
use nbguard_core::clock::ManualClock;
use nbguard_core::identity::Wallet;
use nbguard_gateway::service::{NewApplication, NewController, NewPermission, NewRole};
use nbguard_gateway::{Gateway, GatewayConfig, Session};

use crate::controller::{ControllerOptions, MockController};
use crate::floodlight::{self, *};
use crate::verifier::{Delayed, InProcess, Verifier};

pub const ADMIN_SECRET: &str = "admin-secret";
pub const PARTICIPANT_SECRET: &str = "participant-secret";
pub const CONTROLLER_ID: &str = "ctrl1";

pub const MON_APP: &str = "app1";
pub const FW_APP: &str = "app2";
pub const MON_FW_APP: &str = "app3";
pub const MON_ACL_APP: &str = "app4";

pub const MON_PERMISSIONS: [&str; 6] = [
    FL_GET_SWITCH_JSON,
    FL_GET_DEVICE,
    FL_GET_SINGLE_SWITCH,
    FL_GET_LINKS_JSON,
    FL_GET_EXERNALLINK_JSON,
    FL_POST_ADD_ACL,
];
pub const FW_PERMISSIONS: [&str; 6] = [
    FL_GET_FW_RULES_JSON,
    FL_GET_FW_STATUS_JSON,
    FL_PUT_ENABLE_FIREWALL,
    FL_PUT_DISABLE_FIREWALL,
    FL_POST_FIREWALL_RULE,
    FL_DELETE_FIREWALL_RULE,
];
pub const MON_FW_PERMISSIONS: [&str; 2] = [FL_GET_FW_RULES_JSON, FL_GET_FW_STATUS_JSON];
pub const MON_ACL_PERMISSIONS: [&str; 2] = [FL_GET_SWITCH_JSON, FL_POST_ADD_ACL];

#[derive(Debug, Clone)]
pub struct AppHandle {
    pub id: String,
    pub wallet: Wallet,
    pub token_id: Option<String>,
}

pub struct Deployment {
    pub gateway: Arc<Gateway>,
    pub clock: Arc<ManualClock>,
    pub admin: Session,
    pub controller_session: Session,
    pub controller_wallet: Wallet,
    pub apps: BTreeMap<String, AppHandle>,
}

fn start_clock() -> Arc<ManualClock> {
    Arc::new(ManualClock::new(Utc.with_ymd_and_hms(2021, 1, 1, 0, 0, 0).unwrap()))
}

fn expect<T, E: std::fmt::Display>(what: &str, r: Result<T, E>) -> T {
    r.unwrap_or_else(|e| panic!("fixture: {what}: {e}"))
}

impl Deployment {
    /// Gateway on a manual clock with the Floodlight permission catalogue
    /// and controller ctrl1; no roles or applications.
    pub fn new(mut config: GatewayConfig) -> Self {
        config.admin_secret = ADMIN_SECRET.to_owned();
        let clock = start_clock();
        let gateway = Gateway::in_memory_with_clock(config, clock.clone());
        Self::deploy(gateway, clock)
    }

    /// As [`Deployment::new`], persisted under `dir`, which must be empty.
    pub fn open(dir: &Path, mut config: GatewayConfig) -> io::Result<Self> {
        config.admin_secret = ADMIN_SECRET.to_owned();
        let clock = start_clock();
        let gateway = Gateway::open_with_clock(dir, config, clock.clone())?;
        Ok(Self::deploy(gateway, clock))
    }

    fn deploy(gateway: Gateway, clock: Arc<ManualClock>) -> Self {
        let gateway = Arc::new(gateway);
        let admin = connect(&gateway, gateway.admin_id(), ADMIN_SECRET, &gateway.admin_wallet());
        for (id, name, object) in floodlight::PERMISSIONS {
            let body = NewPermission {
                id: id.to_owned(),
                name: name.to_owned(),
                resource_object: object,
            };
            expect("create permission", gateway.create_permission(&admin, body));
        }
        let enrollment = expect(
            "create controller",
            gateway.create_controller(
                &admin,
                NewController {
                    id: CONTROLLER_ID.to_owned(),
                    name: "Floodlight".to_owned(),
                    permissions: floodlight::PERMISSIONS.iter().map(|p| p.0.to_owned()).collect(),
                    secret: Some(PARTICIPANT_SECRET.to_owned()),
                },
            ),
        );
        let controller_session = connect(&gateway, CONTROLLER_ID, PARTICIPANT_SECRET, &enrollment.wallet);
        Deployment {
            gateway,
            clock,
            admin,
            controller_session,
            controller_wallet: enrollment.wallet,
            apps: BTreeMap::new(),
        }
    }

    pub fn add_role(&self, id: &str, permissions: &[&str], priority: i64) {
        let body = NewRole {
            id: id.to_owned(),
            name: id.to_owned(),
            permissions: permissions.iter().map(|p| (*p).to_owned()).collect(),
            priority,
        };
        expect("create role", self.gateway.create_role(&self.admin, body));
    }

    pub fn add_app(&mut self, id: &str, name: &str, role_id: &str) -> &AppHandle {
        let enrollment = expect(
            "create application",
            self.gateway.create_application(
                &self.admin,
                NewApplication {
                    id: id.to_owned(),
                    name: name.to_owned(),
                    role_id: role_id.to_owned(),
                    trust_index: None,
                    secret: Some(PARTICIPANT_SECRET.to_owned()),
                },
            ),
        );
        self.apps.insert(
            id.to_owned(),
            AppHandle {
                id: id.to_owned(),
                wallet: enrollment.wallet,
                token_id: None,
            },
        );
        &self.apps[id]
    }

    pub fn app(&self, id: &str) -> &AppHandle {
        self.apps.get(id).unwrap_or_else(|| panic!("no application {id}"))
    }

    pub fn token(&self, app_id: &str) -> Option<&str> {
        self.app(app_id).token_id.as_deref()
    }

    /// A session for the application with JWT and identity card.
    pub fn app_session(&self, app_id: &str) -> Session {
        connect(&self.gateway, app_id, PARTICIPANT_SECRET, &self.app(app_id).wallet)
    }

    /// The application asks for a ctrl1 token; it stays NEW.
    pub fn request_token(&mut self, app_id: &str) -> TokenAsset {
        let session = self.app_session(app_id);
        let token = expect("request token", self.gateway.request_token(&session, CONTROLLER_ID));
        self.apps.get_mut(app_id).expect("known app").token_id = Some(token.id.clone());
        token
    }

    pub fn issue_token(&self, app_id: &str) -> TokenAsset {
        let id = self.token(app_id).expect("token requested");
        expect("issue token", self.gateway.issue_token(&self.admin, id))
    }

    pub fn expire_token(&self, app_id: &str) -> TokenAsset {
        let id = self.token(app_id).expect("token requested");
        expect("expire token", self.gateway.expire_token(&self.admin, id))
    }

    pub fn trust(&self, app_id: &str) -> u8 {
        expect("read application", self.gateway.get_application(&self.admin, app_id)).trust_index
    }

    pub fn log_count(&self) -> usize {
        self.gateway.aaa().logs().len()
    }

    pub fn verifier(&self) -> InProcess {
        InProcess::new(Arc::clone(&self.gateway), self.controller_session.clone())
    }

    pub fn controller(&self, options: ControllerOptions) -> MockController {
        self.controller_with(Arc::new(self.verifier()), options)
    }

    /// A controller whose every verification first waits `delay`.
    pub fn delayed_controller(&self, delay: Duration, options: ControllerOptions) -> MockController {
        self.controller_with(Arc::new(Delayed::new(self.verifier(), delay)), options)
    }

    pub fn controller_with(&self, verifier: Arc<dyn Verifier>, options: ControllerOptions) -> MockController {
        MockController::new(CONTROLLER_ID, verifier, options).with_clock(self.clock.clone())
    }
}

/// Login plus identity card upload.
pub fn connect(gateway: &Gateway, id: &str, secret: &str, wallet: &Wallet) -> Session {
    let login = expect("login", gateway.login(id, secret));
    let session = expect("session", gateway.session(Some(&login.token)));
    expect("wallet upload", gateway.upload_wallet(&session, wallet));
    expect("session", gateway.session(Some(&login.token)))
}

/// The evaluation world: MON_APP without a token, FW_APP and MON_FW_APP
/// with issued tokens, and MON_ACL_APP (issued) for rule installation.
pub fn seed_fixture() -> Deployment {
    seed_fixture_with(GatewayConfig::new(ADMIN_SECRET))
}

pub fn seed_fixture_with(config: GatewayConfig) -> Deployment {
    let mut d = Deployment::new(config);
    d.add_role("MON", &MON_PERMISSIONS, 1);
    d.add_role("FW", &FW_PERMISSIONS, 3);
    d.add_role("MON_FW", &MON_FW_PERMISSIONS, 2);
    d.add_role("MON_ACL", &MON_ACL_PERMISSIONS, 1);
    d.add_app(MON_APP, "MON_APP", "MON");
    d.add_app(FW_APP, "FW_APP", "FW");
    d.add_app(MON_FW_APP, "MON_FW_APP", "MON_FW");
    d.add_app(MON_ACL_APP, "MON_ACL_APP", "MON_ACL");
    for app in [FW_APP, MON_FW_APP, MON_ACL_APP] {
        d.request_token(app);
        d.issue_token(app);
    }
    d
}
