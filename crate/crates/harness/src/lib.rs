//! Evaluation harness: a mock Floodlight controller in front of the
//! verification gateway, the evaluation scenarios and a latency benchmark.

pub mod bench;
pub mod controller;
pub mod fixture;
pub mod floodlight;
pub mod network;
pub mod scenarios;
pub mod verifier;

pub use bench::{benchmark, compare_caching, BenchConfig, BenchReport};
pub use controller::{AppRequest, ControllerOptions, ControllerResponse, MockController};
pub use fixture::{seed_fixture, Deployment};
pub use scenarios::{run_scenario, ScenarioReport};
pub use verifier::{Delayed, Http, InProcess, Verifier};
