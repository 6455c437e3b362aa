use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Spaces permits at least `1/rate` seconds apart (a token bucket of depth one).
///
/// Spacing is measured from the actual grant time, so a late wake-up never
/// lets the next caller through early. Any window of length `W` holds at
/// most `⌊W·rate⌋ + 1` permits. A rate of zero disables limiting.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Option<Duration>,
    last_grant: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(max_per_second: f64) -> Self {
        let interval = (max_per_second > 0.0 && max_per_second.is_finite())
            .then(|| Duration::from_secs_f64(1.0 / max_per_second));
        Self {
            interval,
            last_grant: Mutex::new(None),
        }
    }

    /// Blocks until the caller may issue one request.
    ///
    /// Waiters queue on the lock while the current holder sleeps.
    pub fn acquire(&self) {
        let Some(interval) = self.interval else {
            return;
        };
        let mut last = self.last_grant.lock().expect("rate limiter poisoned");
        if let Some(prev) = *last {
            let ready = prev + interval;
            let now = Instant::now();
            if ready > now {
                std::thread::sleep(ready - now);
            }
        }
        *last = Some(Instant::now());
    }
}
