//! The Floodlight REST surface the mock controller exposes: permission
//! catalogue and route table.

use nbguard_core::policy::{ApiRoute, ResourceObject, RouteTable};

const ROUTE_FILE: &str = include_str!("../routes/floodlight.json");

pub const FL_GET_SWITCH_JSON: &str = "FL_GET_SWITCH_JSON";
pub const FL_GET_DEVICE: &str = "FL_GET_DEVICE";
pub const FL_GET_SINGLE_SWITCH: &str = "FL_GET_SINGLE_SWITCH";
pub const FL_GET_LINKS_JSON: &str = "FL_GET_LINKS_JSON";
pub const FL_GET_EXERNALLINK_JSON: &str = "FL_GET_EXERNALLINK_JSON";
pub const FL_POST_ADD_ACL: &str = "FL_POST_ADD_ACL";
pub const FL_GET_FW_RULES_JSON: &str = "FL_GET_FW_RULES_JSON";
pub const FL_GET_FW_STATUS_JSON: &str = "FL_GET_FW_STATUS_JSON";
pub const FL_PUT_ENABLE_FIREWALL: &str = "FL_PUT_ENABLE_FIREWALL";
pub const FL_PUT_DISABLE_FIREWALL: &str = "FL_PUT_DISABLE_FIREWALL";
pub const FL_POST_FIREWALL_RULE: &str = "FL_POST_FIREWALL_RULE";
pub const FL_DELETE_FIREWALL_RULE: &str = "FL_DELETE_FIREWALL_RULE";

/// Permission id, display name and resource object for every route in the
/// route file.
pub const PERMISSIONS: [(&str, &str, ResourceObject); 12] = [
    (FL_GET_SWITCH_JSON, "List switches", ResourceObject::Switch),
    (FL_GET_DEVICE, "List hosts", ResourceObject::Host),
    (FL_GET_SINGLE_SWITCH, "Read switch statistics", ResourceObject::Switch),
    (FL_GET_LINKS_JSON, "List links", ResourceObject::Link),
    (FL_GET_EXERNALLINK_JSON, "List external links", ResourceObject::Link),
    (FL_POST_ADD_ACL, "Add ACL rule", ResourceObject::Flowmod),
    (FL_GET_FW_RULES_JSON, "List firewall rules", ResourceObject::Statistics),
    (FL_GET_FW_STATUS_JSON, "Read firewall status", ResourceObject::Statistics),
    (FL_PUT_ENABLE_FIREWALL, "Enable firewall", ResourceObject::Flowmod),
    (FL_PUT_DISABLE_FIREWALL, "Disable firewall", ResourceObject::Flowmod),
    (FL_POST_FIREWALL_RULE, "Add firewall rule", ResourceObject::Flowmod),
    (FL_DELETE_FIREWALL_RULE, "Delete firewall rule", ResourceObject::Flowmod),
];

pub fn routes() -> Vec<ApiRoute> {
    RouteTable::parse_route_file(ROUTE_FILE).expect("bundled route file parses")
}

pub fn route_table() -> RouteTable {
    RouteTable::from_routes(routes(), |id| PERMISSIONS.iter().any(|(p, _, _)| *p == id))
        .expect("bundled routes refer to catalogued permissions")
}

/// Routes whose body is a flow rule that must pass the conflict check.
pub fn installs_rule(permission_id: &str) -> bool {
    matches!(permission_id, FL_POST_ADD_ACL | FL_POST_FIREWALL_RULE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nbguard_core::policy::HttpMethod;

    #[test]
    fn every_catalogued_permission_has_a_route() {
        let table = route_table();
        for (id, _, _) in PERMISSIONS {
            assert!(table.routes().any(|r| r.permission_id == id), "{id}");
        }
    }

    #[test]
    fn sample_urls_parse() {
        let table = route_table();
        assert_eq!(table.parse_permission(HttpMethod::Get, "/wm/core/switch/"), Some(FL_GET_SINGLE_SWITCH));
        assert_eq!(
            table.parse_permission(HttpMethod::Get, "/wm/core/switch/00:00:00:00:00:00:00:01/flow/json"),
            Some(FL_GET_SINGLE_SWITCH)
        );
        assert_eq!(table.parse_permission(HttpMethod::Post, "/wm/acl/rules/json"), Some(FL_POST_ADD_ACL));
        assert_eq!(
            table.parse_permission(HttpMethod::Put, "/wm/firewall/module/enable/json"),
            Some(FL_PUT_ENABLE_FIREWALL)
        );
        assert_eq!(table.parse_permission(HttpMethod::Get, "/wm/acl/rules/json"), None);
    }
}
