//! Retry with exponential backoff, and a request gate (concurrency cap plus
//! per-minute budget) shared by the HTTP clients.

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use tracing::debug;

/// Exponential backoff: before retry `i` (0-based) the client sleeps for a
/// random duration in `[base * factor^i, 2 * base * factor^i]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    #[serde(with = "millis")]
    pub base: Duration,
    pub factor: f64,
    /// Total attempts including the first one.
    pub max_attempts: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            base: Duration::from_secs(1),
            factor: 2.0,
            max_attempts: 5,
        }
    }
}

/// What one attempt produced.
pub enum Attempt<T, E> {
    Done(T),
    /// Transient failure; try again if attempts remain.
    Retry(E),
    /// Permanent failure; stop immediately.
    Fail(E),
}

#[derive(Debug)]
pub enum RetryError<E> {
    Exhausted { attempts: u32, last: E },
    Fatal(E),
}

impl RetryPolicy {
    pub fn nominal_delay(&self, retry: u32) -> Duration {
        self.base.mul_f64(self.factor.powi(retry as i32))
    }

    pub fn jittered_delay<R: Rng + ?Sized>(&self, retry: u32, rng: &mut R) -> Duration {
        let nominal = self.nominal_delay(retry);
        nominal.mul_f64(1.0 + rng.random::<f64>())
    }

    /// Runs `op` until it succeeds, fails permanently, or `max_attempts` is hit.
    /// `op` receives the 1-based attempt number.
    pub fn run<T, E, F>(&self, mut op: F) -> Result<T, RetryError<E>>
    where
        F: FnMut(u32) -> Attempt<T, E>,
    {
        let max = self.max_attempts.max(1);
        let mut rng = rand::rng();
        let mut attempt = 1;
        loop {
            match op(attempt) {
                Attempt::Done(v) => return Ok(v),
                Attempt::Fail(e) => return Err(RetryError::Fatal(e)),
                Attempt::Retry(e) => {
                    if attempt >= max {
                        return Err(RetryError::Exhausted {
                            attempts: attempt,
                            last: e,
                        });
                    }
                    let delay = self.jittered_delay(attempt - 1, &mut rng);
                    debug!(attempt, ?delay, "transient failure, backing off");
                    std::thread::sleep(delay);
                    attempt += 1;
                }
            }
        }
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

/// Blocks callers so that at most `max_in_flight` requests run at once and at
/// most `per_minute` start in any 60 s window.
#[derive(Debug)]
pub struct Gate {
    max_in_flight: usize,
    per_minute: Option<u32>,
    state: Mutex<GateState>,
    cv: Condvar,
}

#[derive(Debug, Default)]
struct GateState {
    in_flight: usize,
    started: VecDeque<Instant>,
}

pub struct Permit<'a> {
    gate: &'a Gate,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut state = self.gate.state.lock().unwrap_or_else(|p| p.into_inner());
        state.in_flight -= 1;
        self.gate.cv.notify_one();
    }
}

const WINDOW: Duration = Duration::from_secs(60);

impl Gate {
    pub fn new(max_in_flight: usize, per_minute: Option<u32>) -> Self {
        Gate {
            max_in_flight: max_in_flight.max(1),
            per_minute: per_minute.filter(|&n| n > 0),
            state: Mutex::new(GateState::default()),
            cv: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut state = self.state.lock().unwrap_or_else(|p| p.into_inner());
        loop {
            let now = Instant::now();
            while state
                .started
                .front()
                .is_some_and(|t| now.duration_since(*t) >= WINDOW)
            {
                state.started.pop_front();
            }
            let budget_wait = match self.per_minute {
                Some(limit) if state.started.len() >= limit as usize => state
                    .started
                    .front()
                    .map(|t| WINDOW - now.duration_since(*t)),
                _ => None,
            };
            if state.in_flight < self.max_in_flight && budget_wait.is_none() {
                state.in_flight += 1;
                state.started.push_back(now);
                return Permit { gate: self };
            }
            state = match budget_wait {
                Some(wait) => {
                    self.cv
                        .wait_timeout(state, wait)
                        .unwrap_or_else(|p| p.into_inner())
                        .0
                }
                None => self.cv.wait(state).unwrap_or_else(|p| p.into_inner()),
            };
        }
    }

    pub fn in_flight(&self) -> usize {
        self.state
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .in_flight
    }
}
