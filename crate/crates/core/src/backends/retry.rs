use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::BackendError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    #[serde(with = "millis")]
    pub base_delay: Duration,
    #[serde(with = "millis")]
    pub max_delay: Duration,
    /// Fraction of each nominal delay that is randomized; 1.0 is full jitter.
    pub jitter: f64,
    pub max_in_flight: usize,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
            jitter: 1.0,
            max_in_flight: 4,
        }
    }
}

impl RetryPolicy {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_attempts == 0 {
            return Err("max_attempts must be at least 1".into());
        }
        if self.base_delay.is_zero() || self.max_delay.is_zero() {
            return Err("retry delays must be positive".into());
        }
        if self.max_delay < self.base_delay {
            return Err("max_delay must not be below base_delay".into());
        }
        if !(0.0..=1.0).contains(&self.jitter) {
            return Err(format!("jitter {} outside [0, 1]", self.jitter));
        }
        if self.max_in_flight == 0 {
            return Err("max_in_flight must be at least 1".into());
        }
        Ok(())
    }

    /// Exponential backoff before retry number `retry` (0-based), capped.
    pub fn nominal_delay(&self, retry: u32) -> Duration {
        let factor = 2u32.saturating_pow(retry.min(31));
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }

    /// Jittered delay for `retry`, never below `previous` and never above `max_delay`.
    pub fn delay(&self, retry: u32, previous: Duration, unit_random: f64) -> Duration {
        let nominal = self.nominal_delay(retry).as_secs_f64();
        let jittered = nominal * (1.0 - self.jitter + self.jitter * unit_random.clamp(0.0, 1.0));
        Duration::from_secs_f64(jittered).max(previous).min(self.max_delay)
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, duration: Duration);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// Counting semaphore bounding simultaneous outstanding requests.
#[derive(Debug)]
pub struct ConcurrencyLimiter {
    capacity: usize,
    in_use: Mutex<usize>,
    freed: Condvar,
}

impl ConcurrencyLimiter {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            in_use: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut in_use = self.in_use.lock().expect("limiter lock");
        while *in_use >= self.capacity {
            in_use = self.freed.wait(in_use).expect("limiter lock");
        }
        *in_use += 1;
        Permit { limiter: self }
    }
}

pub struct Permit<'a> {
    limiter: &'a ConcurrencyLimiter,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut in_use = self.limiter.in_use.lock().expect("limiter lock");
        *in_use -= 1;
        self.limiter.freed.notify_one();
    }
}

/// Retry loop plus in-flight cap for one backend. Share it (it is `Sync`)
/// among every caller of that backend.
pub struct Retrier {
    policy: RetryPolicy,
    limiter: ConcurrencyLimiter,
    sleeper: Arc<dyn Sleeper>,
}

impl Retrier {
    pub fn new(policy: RetryPolicy) -> Self {
        Self::with_sleeper(policy, Arc::new(ThreadSleeper))
    }

    pub fn with_sleeper(policy: RetryPolicy, sleeper: Arc<dyn Sleeper>) -> Self {
        let limiter = ConcurrencyLimiter::new(policy.max_in_flight);
        Self {
            policy,
            limiter,
            sleeper,
        }
    }

    pub fn policy(&self) -> &RetryPolicy {
        &self.policy
    }

    /// Runs `op` until it succeeds, fails permanently, or exhausts
    /// `max_attempts`. Returns the value and the number of attempts made.
    /// The in-flight permit is held only while `op` runs, not while backing off.
    pub fn call<T>(
        &self,
        mut op: impl FnMut() -> Result<T, BackendError>,
    ) -> Result<(T, u32), BackendError> {
        let max_attempts = self.policy.max_attempts.max(1);
        let mut previous = Duration::ZERO;
        let mut attempt = 0;
        loop {
            attempt += 1;
            let outcome = {
                let _permit = self.limiter.acquire();
                op()
            };
            match outcome {
                Ok(value) => return Ok((value, attempt)),
                Err(err) if err.is_transient() => {
                    if attempt >= max_attempts {
                        return Err(BackendError::Unavailable {
                            attempts: attempt,
                            last: err.to_string(),
                        });
                    }
                    let delay = self.policy.delay(attempt - 1, previous, rand::random::<f64>());
                    previous = delay;
                    self.sleeper.sleep(delay);
                }
                Err(err) => return Err(err),
            }
        }
    }
}
