//! Per-application fixed-window request quota.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use nbguard_core::clock::Clock;
use parking_lot::Mutex;
use serde::Serialize;

pub const DEFAULT_QUOTA: u32 = 1200;
pub const DEFAULT_QUOTA_WINDOW: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct QuotaWindow {
    pub app_id: String,
    pub window_start: DateTime<Utc>,
    pub count: u32,
}

/// A window opens with the first request after the previous one closed and
/// lasts `window`. Requests beyond `limit` inside it are refused and not
/// counted.
pub struct FixedWindowLimiter {
    limit: u32,
    window: chrono::Duration,
    clock: Arc<dyn Clock>,
    windows: Mutex<HashMap<String, QuotaWindow>>,
}

impl FixedWindowLimiter {
    pub fn new(limit: u32, window: Duration, clock: Arc<dyn Clock>) -> Self {
        FixedWindowLimiter {
            limit,
            window: chrono::Duration::from_std(window).expect("window in range"),
            clock,
            windows: Mutex::new(HashMap::new()),
        }
    }

    pub fn limit(&self) -> u32 {
        self.limit
    }

    pub fn window(&self) -> Duration {
        self.window.to_std().expect("positive window")
    }

    /// Counts one request for `app_id`; false if the quota is spent.
    pub fn try_acquire(&self, app_id: &str) -> bool {
        let now = self.clock.now();
        let mut windows = self.windows.lock();
        let w = windows
            .entry(app_id.to_owned())
            .or_insert_with(|| QuotaWindow {
                app_id: app_id.to_owned(),
                window_start: now,
                count: 0,
            });
        if now >= w.window_start + self.window {
            w.window_start = now;
            w.count = 0;
        }
        if w.count >= self.limit {
            return false;
        }
        w.count += 1;
        true
    }

    /// The open window for `app_id`, if any.
    pub fn current(&self, app_id: &str) -> Option<QuotaWindow> {
        let now = self.clock.now();
        self.windows
            .lock()
            .get(app_id)
            .filter(|w| now < w.window_start + self.window)
            .cloned()
    }

    pub fn used(&self, app_id: &str) -> u32 {
        self.current(app_id).map_or(0, |w| w.count)
    }

    pub fn forget(&self, app_id: &str) {
        self.windows.lock().remove(app_id);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nbguard_core::clock::ManualClock;

    #[test]
    fn window_rolls_over() {
        let clock = ManualClock::new(Utc::now());
        let limiter = FixedWindowLimiter::new(3, Duration::from_secs(30), Arc::new(clock.clone()));
        assert!((0..3).all(|_| limiter.try_acquire("a")));
        assert!(!limiter.try_acquire("a"));
        assert_eq!(limiter.used("a"), 3);
        clock.advance(Duration::from_millis(29_999));
        assert!(!limiter.try_acquire("a"));
        clock.advance(Duration::from_millis(1));
        assert_eq!(limiter.used("a"), 0);
        assert!(limiter.try_acquire("a"));
        assert_eq!(limiter.used("a"), 1);
    }

    #[test]
    fn zero_limit_refuses_everything() {
        let limiter = FixedWindowLimiter::new(0, DEFAULT_QUOTA_WINDOW, Arc::new(nbguard_core::clock::SystemClock));
        assert!(!limiter.try_acquire("a"));
        assert_eq!(limiter.used("a"), 0);
    }
}
