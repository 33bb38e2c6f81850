use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Rate-limited progress lines on stderr.
#[derive(Debug)]
pub struct Progress {
    enabled: bool,
    interval: Duration,
    start: Instant,
    last: Mutex<Option<Instant>>,
}

impl Progress {
    pub fn new(enabled: bool, interval_secs: f64) -> Self {
        Progress {
            enabled,
            interval: Duration::from_secs_f64(interval_secs.max(0.0)),
            start: Instant::now(),
            last: Mutex::new(None),
        }
    }

    pub fn silent() -> Self {
        Progress::new(false, 0.0)
    }

    /// Prints `message()` unless a line went out less than one interval ago.
    pub fn tick(&self, message: impl FnOnce() -> String) {
        if !self.enabled {
            return;
        }
        let now = Instant::now();
        let mut last = self.last.lock().unwrap_or_else(|e| e.into_inner());
        if last.is_some_and(|t| now.duration_since(t) < self.interval) {
            return;
        }
        *last = Some(now);
        eprintln!("[{:8.1}s] {}", now.duration_since(self.start).as_secs_f64(), message());
    }

    /// Always printed unless silent.
    pub fn say(&self, message: impl FnOnce() -> String) {
        if self.enabled {
            eprintln!("[{:8.1}s] {}", self.start.elapsed().as_secs_f64(), message());
        }
    }
}
