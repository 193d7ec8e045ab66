//! Simulated data plane behind the mock controller: a linear chain of
//! switches with the same number of hosts on each.

use serde::Serialize;
use serde_json::{json, Value};

pub const SWITCHES: usize = 16;
pub const HOSTS_PER_SWITCH: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Switch {
    pub dpid: String,
    /// Host ports first, then the ports towards the neighbours.
    pub ports: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Host {
    pub mac: String,
    pub ipv4: String,
    pub switch: String,
    pub port: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Link {
    pub src_switch: String,
    pub src_port: u16,
    pub dst_switch: String,
    pub dst_port: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Network {
    pub switches: Vec<Switch>,
    pub hosts: Vec<Host>,
    pub links: Vec<Link>,
    pub firewall_enabled: bool,
}

pub fn dpid(n: usize) -> String {
    let bytes = (n as u64).to_be_bytes();
    bytes.iter().map(|b| format!("{b:02x}")).collect::<Vec<_>>().join(":")
}

fn mac(n: usize) -> String {
    let bytes = (n as u64).to_be_bytes();
    bytes[2..].iter().map(|b| format!("{b:02x}")).collect::<Vec<_>>().join(":")
}

impl Network {
    /// `switches` in a chain, each with `hosts_per_switch` hosts.
    /// Switch `s` uses ports 1..=hosts for hosts, then one port to
    /// the left neighbour and one to the right.
    pub fn linear(switches: usize, hosts_per_switch: usize) -> Self {
        let host_ports = hosts_per_switch as u16;
        let mut net = Network {
            switches: Vec::with_capacity(switches),
            hosts: Vec::with_capacity(switches * hosts_per_switch),
            links: Vec::new(),
            firewall_enabled: false,
        };
        for s in 1..=switches {
            let neighbours = usize::from(s > 1) + usize::from(s < switches);
            net.switches.push(Switch {
                dpid: dpid(s),
                ports: (1..=host_ports + neighbours as u16).collect(),
            });
            for h in 1..=hosts_per_switch {
                let n = (s - 1) * hosts_per_switch + h;
                net.hosts.push(Host {
                    mac: mac(n),
                    ipv4: format!("10.0.0.{n}"),
                    switch: dpid(s),
                    port: h as u16,
                });
            }
        }
        for s in 1..switches {
            let right_port = host_ports + if s > 1 { 2 } else { 1 };
            net.links.push(Link {
                src_switch: dpid(s),
                src_port: right_port,
                dst_switch: dpid(s + 1),
                dst_port: host_ports + 1,
            });
        }
        net
    }

    pub fn switch(&self, dpid: &str) -> Option<&Switch> {
        self.switches.iter().find(|s| s.dpid == dpid)
    }

    pub fn switches_json(&self) -> Value {
        Value::Array(
            self.switches
                .iter()
                .map(|s| json!({ "switchDPID": s.dpid, "ports": s.ports }))
                .collect(),
        )
    }

    pub fn devices_json(&self) -> Value {
        json!({
            "devices": self.hosts.iter().map(|h| json!({
                "mac": [h.mac],
                "ipv4": [h.ipv4],
                "attachmentPoint": [{ "switch": h.switch, "port": h.port }],
            })).collect::<Vec<_>>()
        })
    }

    pub fn links_json(&self) -> Value {
        Value::Array(
            self.links
                .iter()
                .map(|l| {
                    json!({
                        "src-switch": l.src_switch, "src-port": l.src_port,
                        "dst-switch": l.dst_switch, "dst-port": l.dst_port,
                        "type": "internal", "direction": "bidirectional",
                    })
                })
                .collect(),
        )
    }

    /// Per-port counters for one switch; values are a pure function of
    /// the switch so repeated reads agree.
    pub fn switch_stats_json(&self, switch: &Switch, stat: &str) -> Value {
        json!({
            switch.dpid.clone(): {
                "stat": stat,
                "ports": switch.ports.iter().map(|p| json!({
                    "portNumber": p, "receivePackets": 0, "transmitPackets": 0,
                })).collect::<Vec<_>>(),
            }
        })
    }
}

impl Default for Network {
    fn default() -> Self {
        Network::linear(SWITCHES, HOSTS_PER_SWITCH)
    }
}
