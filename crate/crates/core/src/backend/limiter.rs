use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

pub trait Clock: Send + Sync {
    /// Time elapsed since an arbitrary fixed origin.
    fn now(&self) -> Duration;
    fn sleep(&self, duration: Duration);
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// Clock whose `sleep` advances time instantly.
#[derive(Debug, Default)]
pub struct VirtualClock {
    now: Mutex<Duration>,
}

impl VirtualClock {
    pub fn advance(&self, by: Duration) {
        *self.now.lock().unwrap() += by;
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> Duration {
        *self.now.lock().unwrap()
    }

    fn sleep(&self, duration: Duration) {
        self.advance(duration);
    }
}

/// Sliding-window limiter: at most `limit` acquisitions in any `window`.
pub struct RateLimiter {
    limit: usize,
    window: Duration,
    clock: Arc<dyn Clock>,
    stamps: Mutex<VecDeque<Duration>>,
}

impl RateLimiter {
    pub fn per_minute(limit: u32, clock: Arc<dyn Clock>) -> Self {
        Self::new(limit as usize, Duration::from_secs(60), clock)
    }

    pub fn new(limit: usize, window: Duration, clock: Arc<dyn Clock>) -> Self {
        assert!(limit > 0, "rate limit must be positive");
        Self {
            limit,
            window,
            clock,
            stamps: Mutex::new(VecDeque::with_capacity(limit)),
        }
    }

    /// Blocks until a request may be sent and records it. Returns the time of
    /// the recorded request.
    pub fn acquire(&self) -> Duration {
        loop {
            let wait = {
                let mut stamps = self.stamps.lock().unwrap();
                let now = self.clock.now();
                while stamps.front().is_some_and(|&t| t + self.window <= now) {
                    stamps.pop_front();
                }
                if stamps.len() < self.limit {
                    stamps.push_back(now);
                    return now;
                }
                *stamps.front().expect("full window") + self.window - now
            };
            self.clock.sleep(wait);
        }
    }
}

/// Counting semaphore bounding concurrent requests.
pub struct InFlight {
    max: usize,
    current: Mutex<usize>,
    freed: Condvar,
}

pub struct InFlightGuard<'a> {
    owner: &'a InFlight,
}

impl InFlight {
    pub fn new(max: usize) -> Self {
        Self {
            max: max.max(1),
            current: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn enter(&self) -> InFlightGuard<'_> {
        let mut current = self.current.lock().unwrap();
        while *current >= self.max {
            current = self.freed.wait(current).unwrap();
        }
        *current += 1;
        InFlightGuard { owner: self }
    }
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        *self.owner.current.lock().unwrap() -= 1;
        self.owner.freed.notify_one();
    }
}
