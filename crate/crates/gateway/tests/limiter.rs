use std::sync::Arc;
use std::time::Duration;

use chrono::Utc;
use nbguard_core::clock::ManualClock;
use nbguard_gateway::limiter::FixedWindowLimiter;
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Step {
    Request(usize),
    Wait(u64),
}

fn step() -> impl Strategy<Value = Step> {
    prop_oneof![
        8 => (0usize..3).prop_map(Step::Request),
        1 => (0u64..20_000).prop_map(Step::Wait),
    ]
}

proptest! {
    #[test]
    fn matches_a_per_app_window_model(limit in 0u32..6, steps in prop::collection::vec(step(), 0..200)) {
        let clock = ManualClock::new(Utc::now());
        let limiter = FixedWindowLimiter::new(limit, Duration::from_secs(10), Arc::new(clock.clone()));
        // model: per app, (window start in ms, count)
        let mut model: [Option<(u64, u32)>; 3] = [None; 3];
        let mut now_ms = 0u64;
        for s in steps {
            match s {
                Step::Wait(ms) => {
                    now_ms += ms;
                    clock.advance(Duration::from_millis(ms));
                }
                Step::Request(app) => {
                    let slot = &mut model[app];
                    let open = slot.filter(|(start, _)| now_ms < start + 10_000);
                    let (start, count) = open.unwrap_or((now_ms, 0));
                    let allowed = count < limit;
                    *slot = Some((start, count + u32::from(allowed)));
                    prop_assert_eq!(limiter.try_acquire(&format!("app{app}")), allowed);
                }
            }
            for (app, slot) in model.iter().enumerate() {
                let used = slot.filter(|(start, _)| now_ms < start + 10_000).map_or(0, |(_, c)| c);
                prop_assert!(used <= limit);
                prop_assert_eq!(limiter.used(&format!("app{app}")), used);
            }
        }
    }
}

#[test]
fn concurrent_acquisitions_never_exceed_the_limit() {
    let limiter = Arc::new(FixedWindowLimiter::new(
        1200,
        Duration::from_secs(3600),
        Arc::new(nbguard_core::clock::SystemClock),
    ));
    let granted: usize = std::thread::scope(|s| {
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let l = limiter.clone();
                s.spawn(move || (0..300).filter(|_| l.try_acquire("app")).count())
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).sum()
    });
    assert_eq!(granted, 1200);
    assert_eq!(limiter.used("app"), 1200);
}
