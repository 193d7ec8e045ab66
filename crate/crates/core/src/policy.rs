//! Policy: the permission parser's route table, per-resource trust
//! thresholds, and resolution of an application's active permissions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assets::{self, ApplicationAsset, PermissionAsset, RoleAsset};
use crate::ledger::WorldState;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("unknown resource object {0:?}")]
    UnknownResourceObject(String),
    #[error("threshold {0} outside 0..=100")]
    ThresholdRange(i64),
    #[error("unknown http method {0:?}")]
    UnknownMethod(String),
    #[error("route {method} {pattern} is already registered")]
    DuplicateRoute { method: HttpMethod, pattern: String },
    #[error("route {method} {pattern} refers to unknown permission {permission_id}")]
    UnknownPermission {
        method: HttpMethod,
        pattern: String,
        permission_id: String,
    },
    #[error("invalid route pattern {0:?}")]
    InvalidPattern(String),
    #[error("malformed route file: {0}")]
    RouteFile(String),
}

/// Resource groups permissions are attached to; each has a trust threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResourceObject {
    Host,
    Switch,
    Link,
    Port,
    Flowmod,
    Group,
    Vlan,
    Statistics,
    Application,
    Controller,
}

impl ResourceObject {
    pub const ALL: [ResourceObject; 10] = [
        ResourceObject::Host,
        ResourceObject::Switch,
        ResourceObject::Link,
        ResourceObject::Port,
        ResourceObject::Flowmod,
        ResourceObject::Group,
        ResourceObject::Vlan,
        ResourceObject::Statistics,
        ResourceObject::Application,
        ResourceObject::Controller,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ResourceObject::Host => "host",
            ResourceObject::Switch => "switch",
            ResourceObject::Link => "link",
            ResourceObject::Port => "port",
            ResourceObject::Flowmod => "flowmod",
            ResourceObject::Group => "group",
            ResourceObject::Vlan => "vlan",
            ResourceObject::Statistics => "statistics",
            ResourceObject::Application => "application",
            ResourceObject::Controller => "controller",
        }
    }
}

impl fmt::Display for ResourceObject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ResourceObject {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ResourceObject::ALL
            .into_iter()
            .find(|o| o.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| PolicyError::UnknownResourceObject(s.to_owned()))
    }
}

pub const DEFAULT_THRESHOLD: u8 = 60;

pub fn default_threshold(object: ResourceObject) -> u8 {
    match object {
        ResourceObject::Flowmod => 80,
        ResourceObject::Statistics => 75,
        ResourceObject::Switch => 70,
        _ => DEFAULT_THRESHOLD,
    }
}

/// Minimum trust index per resource object. Reconfiguration is atomic with
/// respect to concurrent lookups.
#[derive(Debug)]
pub struct TrustPolicy {
    thresholds: RwLock<BTreeMap<ResourceObject, u8>>,
}

impl Default for TrustPolicy {
    fn default() -> Self {
        TrustPolicy {
            thresholds: RwLock::new(
                ResourceObject::ALL
                    .into_iter()
                    .map(|o| (o, default_threshold(o)))
                    .collect(),
            ),
        }
    }
}

impl TrustPolicy {
    pub fn threshold(&self, object: ResourceObject) -> u8 {
        self.thresholds.read()[&object]
    }

    pub fn threshold_by_name(&self, name: &str) -> Result<u8, PolicyError> {
        Ok(self.threshold(name.parse()?))
    }

    pub fn set_threshold(&self, object: ResourceObject, value: i64) -> Result<(), PolicyError> {
        let value = u8::try_from(value)
            .ok()
            .filter(|v| *v <= 100)
            .ok_or(PolicyError::ThresholdRange(value))?;
        self.thresholds.write().insert(object, value);
        Ok(())
    }

    pub fn snapshot(&self) -> BTreeMap<ResourceObject, u8> {
        self.thresholds.read().clone()
    }

    /// A permission is active iff `trust_index >= threshold`.
    pub fn is_active(&self, permission: &PermissionAsset, trust_index: u8) -> bool {
        trust_index >= self.threshold(permission.resource_object)
    }
}

/// Role permissions that exist and whose resource threshold `trust_index`
/// meets.
pub fn active_permissions<'a>(
    policy: &TrustPolicy,
    trust_index: u8,
    role_permissions: impl IntoIterator<Item = &'a String>,
    lookup: impl Fn(&str) -> Option<PermissionAsset>,
) -> BTreeSet<String> {
    role_permissions
        .into_iter()
        .filter(|id| lookup(id).is_some_and(|p| policy.is_active(&p, trust_index)))
        .cloned()
        .collect()
}

/// The application's effective permission set under the committed state.
pub fn effective_permissions(
    policy: &TrustPolicy,
    state: &WorldState,
    app: &ApplicationAsset,
) -> BTreeSet<String> {
    let Some(role) = assets::load::<RoleAsset>(state, &app.role_id) else {
        return BTreeSet::new();
    };
    active_permissions(policy, app.trust_index, &role.permissions, |id| {
        assets::load::<PermissionAsset>(state, id)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum HttpMethod {
    Get,
    Post,
    Put,
    Delete,
}

impl HttpMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            HttpMethod::Get => "GET",
            HttpMethod::Post => "POST",
            HttpMethod::Put => "PUT",
            HttpMethod::Delete => "DELETE",
        }
    }
}

impl fmt::Display for HttpMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HttpMethod {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [HttpMethod::Get, HttpMethod::Post, HttpMethod::Put, HttpMethod::Delete]
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| PolicyError::UnknownMethod(s.to_owned()))
    }
}

/// One controller API: method plus a path template whose `{var}` segments
/// match any single segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApiRoute {
    pub method: HttpMethod,
    pub pattern: String,
    pub permission_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Var,
}

#[derive(Debug, Clone)]
struct CompiledRoute {
    route: ApiRoute,
    segments: Vec<Segment>,
}

impl CompiledRoute {
    fn literal_prefix(&self) -> usize {
        self.segments
            .iter()
            .take_while(|s| matches!(s, Segment::Literal(_)))
            .count()
    }

    fn literal_count(&self) -> usize {
        self.segments
            .iter()
            .filter(|s| matches!(s, Segment::Literal(_)))
            .count()
    }

    fn matches(&self, path: &[&str]) -> bool {
        self.segments.len() == path.len()
            && self.segments.iter().zip(path).all(|(seg, part)| match seg {
                Segment::Literal(lit) => lit == part,
                Segment::Var => true,
            })
    }
}

/// Path segments with query/fragment stripped and empty segments dropped,
/// which also normalizes trailing and doubled slashes.
fn path_segments(url: &str) -> Vec<&str> {
    let path = url.split(['?', '#']).next().unwrap_or_default();
    path.split('/').filter(|s| !s.is_empty()).collect()
}

fn compile(pattern: &str) -> Result<Vec<Segment>, PolicyError> {
    path_segments(pattern)
        .into_iter()
        .map(|seg| {
            if seg.starts_with('{') && seg.ends_with('}') && seg.len() > 2 {
                Ok(Segment::Var)
            } else if seg.contains(['{', '}']) {
                Err(PolicyError::InvalidPattern(pattern.to_owned()))
            } else {
                Ok(Segment::Literal(seg.to_owned()))
            }
        })
        .collect()
}

/// The permission parser's registry.
#[derive(Debug, Clone, Default)]
pub struct RouteTable {
    routes: Vec<CompiledRoute>,
}

impl RouteTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        route: ApiRoute,
        permission_exists: impl Fn(&str) -> bool,
    ) -> Result<(), PolicyError> {
        if !permission_exists(&route.permission_id) {
            return Err(PolicyError::UnknownPermission {
                method: route.method,
                pattern: route.pattern,
                permission_id: route.permission_id,
            });
        }
        let segments = compile(&route.pattern)?;
        if self
            .routes
            .iter()
            .any(|r| r.route.method == route.method && r.segments == segments)
        {
            return Err(PolicyError::DuplicateRoute {
                method: route.method,
                pattern: route.pattern,
            });
        }
        self.routes.push(CompiledRoute { route, segments });
        Ok(())
    }

    /// Permission of the best matching route: longest literal prefix, then
    /// most literal segments, then earliest registered.
    pub fn parse_permission(&self, method: HttpMethod, url: &str) -> Option<&str> {
        let path = path_segments(url);
        self.routes
            .iter()
            .enumerate()
            .filter(|(_, r)| r.route.method == method && r.matches(&path))
            .max_by_key(|(i, r)| (r.literal_prefix(), r.literal_count(), std::cmp::Reverse(*i)))
            .map(|(_, r)| r.route.permission_id.as_str())
    }

    pub fn routes(&self) -> impl Iterator<Item = &ApiRoute> {
        self.routes.iter().map(|r| &r.route)
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    pub fn parse_route_file(json: &str) -> Result<Vec<ApiRoute>, PolicyError> {
        serde_json::from_str(json).map_err(|e| PolicyError::RouteFile(e.to_string()))
    }

    pub fn from_routes(
        routes: impl IntoIterator<Item = ApiRoute>,
        permission_exists: impl Fn(&str) -> bool,
    ) -> Result<Self, PolicyError> {
        let mut table = RouteTable::new();
        for route in routes {
            table.register(route, &permission_exists)?;
        }
        Ok(table)
    }
}

/// A [`RouteTable`] shared between request handlers and the administrator.
#[derive(Debug, Default)]
pub struct RouteRegistry {
    table: RwLock<RouteTable>,
}

impl RouteRegistry {
    pub fn new(table: RouteTable) -> Self {
        RouteRegistry {
            table: RwLock::new(table),
        }
    }

    pub fn register(
        &self,
        route: ApiRoute,
        permission_exists: impl Fn(&str) -> bool,
    ) -> Result<(), PolicyError> {
        self.table.write().register(route, permission_exists)
    }

    pub fn replace(&self, table: RouteTable) {
        *self.table.write() = table;
    }

    pub fn parse_permission(&self, method: HttpMethod, url: &str) -> Option<String> {
        self.table.read().parse_permission(method, url).map(str::to_owned)
    }

    pub fn snapshot(&self) -> RouteTable {
        self.table.read().clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn route(method: HttpMethod, pattern: &str, permission: &str) -> ApiRoute {
        ApiRoute {
            method,
            pattern: pattern.into(),
            permission_id: permission.into(),
        }
    }

    fn table() -> RouteTable {
        RouteTable::from_routes(
            [
                route(HttpMethod::Get, "/wm/core/switch", "FL_GET_SINGLE_SWITCH"),
                route(HttpMethod::Get, "/wm/core/switch/{switch}/{stat}/json", "FL_GET_SINGLE_SWITCH"),
                route(HttpMethod::Get, "/wm/core/switch/all/{stat}/json", "FL_GET_ALL_SWITCH"),
                route(HttpMethod::Post, "/wm/acl/rules/json", "FL_POST_ADD_ACL"),
            ],
            |_| true,
        )
        .unwrap()
    }

    #[test]
    fn parses_sample_verify_url_and_acl_post() {
        let t = table();
        assert_eq!(
            t.parse_permission(HttpMethod::Get, "/wm/core/switch/"),
            Some("FL_GET_SINGLE_SWITCH")
        );
        assert_eq!(
            t.parse_permission(HttpMethod::Post, "/wm/acl/rules/json"),
            Some("FL_POST_ADD_ACL")
        );
        assert_eq!(t.parse_permission(HttpMethod::Get, "/unknown/path"), None);
        assert_eq!(t.parse_permission(HttpMethod::Get, "/wm/acl/rules/json"), None);
    }

    #[test]
    fn longest_literal_prefix_wins_and_queries_are_ignored() {
        let t = table();
        assert_eq!(
            t.parse_permission(HttpMethod::Get, "/wm/core/switch/all/flow/json"),
            Some("FL_GET_ALL_SWITCH")
        );
        assert_eq!(
            t.parse_permission(HttpMethod::Get, "/wm/core/switch/00:01/flow/json?x=1"),
            Some("FL_GET_SINGLE_SWITCH")
        );
    }

    #[test]
    fn duplicate_and_dangling_routes_are_rejected() {
        let mut t = table();
        assert!(matches!(
            t.register(route(HttpMethod::Get, "/wm/core/switch/{a}/{b}/json/", "X"), |_| true),
            Err(PolicyError::DuplicateRoute { .. })
        ));
        assert!(matches!(
            t.register(route(HttpMethod::Get, "/new", "MISSING"), |_| false),
            Err(PolicyError::UnknownPermission { .. })
        ));
        assert!(matches!(
            t.register(route(HttpMethod::Get, "/bad{x}", "X"), |_| true),
            Err(PolicyError::InvalidPattern(_))
        ));
    }

    #[test]
    fn default_thresholds_and_reconfiguration() {
        let p = TrustPolicy::default();
        assert_eq!(p.threshold(ResourceObject::Flowmod), 80);
        assert_eq!(p.threshold(ResourceObject::Statistics), 75);
        assert_eq!(p.threshold(ResourceObject::Switch), 70);
        for o in [ResourceObject::Host, ResourceObject::Link, ResourceObject::Controller] {
            assert_eq!(p.threshold(o), 60);
        }
        assert_eq!(p.snapshot().len(), 10);
        assert!(matches!(
            p.threshold_by_name("router"),
            Err(PolicyError::UnknownResourceObject(_))
        ));
        p.set_threshold(ResourceObject::Flowmod, 90).unwrap();
        assert_eq!(p.threshold_by_name("flowmod"), Ok(90));
        assert_eq!(p.set_threshold(ResourceObject::Flowmod, 101), Err(PolicyError::ThresholdRange(101)));
    }

    #[test]
    fn activation_boundary_is_inclusive() {
        let p = TrustPolicy::default();
        let perm = PermissionAsset {
            id: "p".into(),
            name: "p".into(),
            resource_object: ResourceObject::Flowmod,
        };
        let role = [perm.id.clone()];
        let lookup = |_: &str| Some(perm.clone());
        assert_eq!(active_permissions(&p, 100, &role, lookup).len(), 1);
        assert_eq!(active_permissions(&p, 80, &role, lookup).len(), 1);
        assert!(active_permissions(&p, 79, &role, lookup).is_empty());
    }
}
