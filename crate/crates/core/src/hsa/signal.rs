use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use super::HsaError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SignalId(pub u64);

static NEXT_SIGNAL: AtomicU64 = AtomicU64::new(1);

#[derive(Debug)]
struct Inner {
    value: Mutex<i64>,
    changed: Condvar,
}

/// Completion counter. Initialized to the number of expected completions;
/// each retired packet decrements it by one.
#[derive(Debug, Clone)]
pub struct Signal {
    id: SignalId,
    inner: Arc<Inner>,
}

impl Signal {
    pub fn new(initial: i64) -> Self {
        Self {
            id: SignalId(NEXT_SIGNAL.fetch_add(1, Ordering::Relaxed)),
            inner: Arc::new(Inner { value: Mutex::new(initial), changed: Condvar::new() }),
        }
    }

    pub fn id(&self) -> SignalId {
        self.id
    }

    pub fn value(&self) -> i64 {
        *self.inner.value.lock().expect("signal poisoned")
    }

    /// Record one completion.
    pub fn complete_one(&self) {
        let mut v = self.inner.value.lock().expect("signal poisoned");
        *v -= 1;
        self.inner.changed.notify_all();
    }

    /// Block until the value is `<= target` or `timeout` elapses. Never
    /// modifies the signal.
    pub fn wait_le(&self, target: i64, timeout: Duration) -> Result<i64, HsaError> {
        let deadline = Instant::now() + timeout;
        let mut v = self.inner.value.lock().expect("signal poisoned");
        loop {
            if *v <= target {
                return Ok(*v);
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(HsaError::Timeout { value: *v });
            }
            v = self
                .inner
                .changed
                .wait_timeout(v, deadline - now)
                .expect("signal poisoned")
                .0;
        }
    }
}
