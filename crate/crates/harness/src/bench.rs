//! Latency benchmark of the verification path, with and without the
//! controller's verdict cache.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use nbguard_core::assets::LogEntryAsset;
use nbguard_core::policy::HttpMethod;
use nbguard_gateway::GatewayConfig;
use serde::Serialize;

use crate::controller::{AppRequest, ControllerOptions};
use crate::fixture::{Deployment, ADMIN_SECRET};
use crate::floodlight::FL_GET_SINGLE_SWITCH;
use crate::network::dpid;

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub requests: usize,
    /// Applications app0..; request `i` comes from app `i % apps`.
    pub apps: usize,
    /// Added before every verification, foreground or background.
    pub ledger_delay: Duration,
    pub caching: bool,
    /// Clients sending requests in parallel.
    pub concurrency: usize,
    pub peers: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            requests: 1000,
            apps: 1,
            ledger_delay: Duration::ZERO,
            caching: true,
            concurrency: 1,
            peers: 3,
        }
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub request_index: usize,
    pub latency_ms: f64,
    pub cache_hit: bool,
    pub verdict: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl LatencyStats {
    /// `None` for an empty input.
    pub fn of(latencies: impl IntoIterator<Item = f64>) -> Option<Self> {
        let mut n = 0usize;
        let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for x in latencies {
            n += 1;
            min = min.min(x);
            max = max.max(x);
            sum += x;
        }
        (n > 0).then(|| LatencyStats {
            min,
            max,
            mean: sum / n as f64,
        })
    }
}

/// Log entries reduced to the fields a request determines, counted.
pub type LogMultiset = BTreeMap<[String; 7], usize>;

pub fn log_multiset(logs: &[LogEntryAsset]) -> LogMultiset {
    let mut set = LogMultiset::new();
    for l in logs {
        let key = [
            l.application_id.clone(),
            l.controller_id.clone(),
            l.http_method.to_string(),
            l.url.clone(),
            l.permission_id.clone(),
            l.action.to_string(),
            l.message.clone(),
        ];
        *set.entry(key).or_default() += 1;
    }
    set
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub requests: usize,
    pub caching: bool,
    pub stats: Option<LatencyStats>,
    pub hit_ratio: f64,
    pub accepted: usize,
    /// Log entries committed by the run, background refreshes included.
    pub log_entries: usize,
    #[serde(skip)]
    pub samples: Vec<Sample>,
    #[serde(skip)]
    pub logs: LogMultiset,
}

impl BenchReport {
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut writer = csv::Writer::from_writer(w);
        if self.samples.is_empty() {
            writer.write_record(["request_index", "latency_ms", "cache_hit", "verdict"])?;
        }
        for s in &self.samples {
            writer.serialize(s)?;
        }
        writer.flush()?;
        Ok(())
    }
}

pub fn bench_url() -> String {
    format!("/wm/core/switch/{}/flow/json", dpid(1))
}

/// Applications app0.. holding FL_GET_SINGLE_SWITCH with issued tokens.
/// The quota is lifted so every request is benign.
pub fn bench_deployment(apps: usize, peers: usize) -> Deployment {
    let mut config = GatewayConfig::new(ADMIN_SECRET);
    config.quota = u32::MAX;
    config.peer_count = peers;
    let mut d = Deployment::new(config);
    d.add_role("STATS", &[FL_GET_SINGLE_SWITCH], 1);
    for i in 0..apps {
        let id = format!("app{i}");
        d.add_app(&id, &id, "STATS");
        d.request_token(&id);
        d.issue_token(&id);
    }
    d
}

pub fn benchmark(config: &BenchConfig) -> BenchReport {
    let d = bench_deployment(config.apps.max(1), config.peers);
    let options = ControllerOptions {
        caching: config.caching,
        ..ControllerOptions::default()
    };
    let ctrl = d.delayed_controller(config.ledger_delay, options);
    let requests: Vec<AppRequest> = (0..config.apps.max(1))
        .map(|i| AppRequest::new(HttpMethod::Get, bench_url(), None, d.token(&format!("app{i}"))))
        .collect();
    let logs_before = d.log_count();

    let next = AtomicUsize::new(0);
    let mut samples: Vec<Sample> = std::thread::scope(|scope| {
        let workers: Vec<_> = (0..config.concurrency.max(1))
            .map(|_| {
                scope.spawn(|| {
                    let mut mine = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= config.requests {
                            break mine;
                        }
                        let started = Instant::now();
                        let r = ctrl.handle(&requests[i % requests.len()]);
                        let latency_ms = started.elapsed().as_secs_f64() * 1e3;
                        mine.push(Sample {
                            request_index: i,
                            latency_ms,
                            cache_hit: r.cache_hit,
                            verdict: r.verdict.map_or_else(|| "ERROR".to_owned(), |a| a.to_string()),
                        });
                    }
                })
            })
            .collect();
        workers.into_iter().flat_map(|w| w.join().expect("client thread")).collect()
    });
    ctrl.drain();
    samples.sort_by_key(|s| s.request_index);

    let logs = d.gateway.aaa().logs();
    let hits = samples.iter().filter(|s| s.cache_hit).count();
    BenchReport {
        requests: samples.len(),
        caching: config.caching,
        stats: LatencyStats::of(samples.iter().map(|s| s.latency_ms)),
        hit_ratio: if samples.is_empty() { 0.0 } else { hits as f64 / samples.len() as f64 },
        accepted: samples.iter().filter(|s| s.verdict == "ACCEPT").count(),
        log_entries: logs.len() - logs_before,
        samples,
        logs: log_multiset(&logs),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CachingComparison {
    pub without_cache: BenchReport,
    pub with_cache: BenchReport,
    /// Mean latency without the cache over mean latency with it.
    pub speedup: Option<f64>,
}

pub fn compare_caching(config: &BenchConfig) -> CachingComparison {
    let without_cache = benchmark(&BenchConfig {
        caching: false,
        ..config.clone()
    });
    let with_cache = benchmark(&BenchConfig {
        caching: true,
        ..config.clone()
    });
    let speedup = match (without_cache.stats, with_cache.stats) {
        (Some(off), Some(on)) if on.mean > 0.0 => Some(off.mean / on.mean),
        _ => None,
    };
    CachingComparison {
        without_cache,
        with_cache,
        speedup,
    }
}
