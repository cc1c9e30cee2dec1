use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use super::{ChatBackend, ChatRequest, ChatResponse, LlmError};

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

struct Bucket {
    capacity: f64,
    per_sec: f64,
    state: Mutex<(f64, Instant)>,
}

impl Bucket {
    fn take(&self) {
        loop {
            let wait = {
                let mut s = self.state.lock().unwrap_or_else(|e| e.into_inner());
                let now = Instant::now();
                s.0 = (s.0 + now.duration_since(s.1).as_secs_f64() * self.per_sec).min(self.capacity);
                s.1 = now;
                if s.0 >= 1.0 {
                    s.0 -= 1.0;
                    return;
                }
                (1.0 - s.0) / self.per_sec
            };
            std::thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

/// In-flight cap plus an optional requests-per-minute token bucket.
pub struct Limited<B> {
    inner: B,
    slots: Semaphore,
    bucket: Option<Bucket>,
}

impl<B: ChatBackend> Limited<B> {
    pub fn new(inner: B, max_concurrency: usize, requests_per_minute: Option<f64>) -> Self {
        Limited {
            inner,
            slots: Semaphore {
                free: Mutex::new(max_concurrency.max(1)),
                cv: Condvar::new(),
            },
            bucket: requests_per_minute.filter(|r| *r > 0.0).map(|rpm| Bucket {
                capacity: rpm.max(1.0),
                per_sec: rpm / 60.0,
                state: Mutex::new((rpm.max(1.0), Instant::now())),
            }),
        }
    }
}

impl<B: ChatBackend> ChatBackend for Limited<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn supports_images(&self) -> bool {
        self.inner.supports_images()
    }

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let _permit = self.slots.acquire();
        if let Some(b) = &self.bucket {
            b.take();
        }
        self.inner.complete(req)
    }
}
