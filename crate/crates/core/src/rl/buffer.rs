//! Bounded FIFO replay buffer shared between rollout workers and the learner.

use std::sync::Mutex;

use rand::Rng;

use super::Transition;
use crate::error::Result;

struct Inner {
    storage: Vec<Transition>,
    /// Next slot to overwrite once the ring is full.
    head: usize,
    inserted: u64,
}

/// Uniform-replay ring buffer. All methods take `&self`; interior mutability
/// makes it safe to share behind an `Arc` across producer threads.
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    inner: Mutex<Inner>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize) -> Self {
        assert!(capacity > 0, "replay buffer needs positive capacity");
        ReplayBuffer {
            capacity,
            obs_dim,
            inner: Mutex::new(Inner {
                storage: Vec::new(),
                head: 0,
                inserted: 0,
            }),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn push(&self, t: Transition) -> Result<()> {
        t.validate(self.obs_dim)?;
        let mut inner = self.inner.lock().unwrap();
        if inner.storage.len() < self.capacity {
            inner.storage.push(t);
        } else {
            let head = inner.head;
            inner.storage[head] = t;
            inner.head = (head + 1) % self.capacity;
        }
        inner.inserted += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Total insertions ever, including those that overwrote older entries.
    pub fn inserted(&self) -> u64 {
        self.inner.lock().unwrap().inserted
    }

    /// Uniform sample with replacement; `None` until at least `batch`
    /// transitions are stored.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Option<Vec<Transition>> {
        let inner = self.inner.lock().unwrap();
        if inner.storage.len() < batch {
            return None;
        }
        Some(
            (0..batch)
                .map(|_| inner.storage[rng.gen_range(0..inner.storage.len())].clone())
                .collect(),
        )
    }

    /// Snapshot of current contents in ring order (oldest first).
    pub fn contents(&self) -> Vec<Transition> {
        let inner = self.inner.lock().unwrap();
        if inner.storage.len() < self.capacity {
            inner.storage.clone()
        } else {
            let mut out = Vec::with_capacity(self.capacity);
            out.extend_from_slice(&inner.storage[inner.head..]);
            out.extend_from_slice(&inner.storage[..inner.head]);
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn item(tag: f64) -> Transition {
        Transition {
            s: vec![tag, 0.0],
            a: [0.0; 4],
            r: tag,
            s_next: vec![tag, 1.0],
            terminated: false,
        }
    }

    #[test]
    fn fifo_eviction_order() {
        let buf = ReplayBuffer::new(3, 2);
        for i in 0..5 {
            buf.push(item(i as f64)).unwrap();
        }
        assert_eq!(buf.len(), 3);
        assert_eq!(buf.inserted(), 5);
        let tags: Vec<f64> = buf.contents().iter().map(|t| t.r).collect();
        // 0 and 1 were the oldest and must be gone.
        assert_eq!(tags, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn sample_not_ready_until_batch_available() {
        let buf = ReplayBuffer::new(10, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        buf.push(item(1.0)).unwrap();
        assert!(buf.sample(2, &mut rng).is_none());
        buf.push(item(2.0)).unwrap();
        let batch = buf.sample(2, &mut rng).unwrap();
        assert_eq!(batch.len(), 2);
    }

    #[test]
    fn rejects_shape_mismatch_and_non_finite() {
        let buf = ReplayBuffer::new(4, 3);
        let bad_shape = item(1.0); // obs_dim 2 != 3
        assert!(buf.push(bad_shape).is_err());
        let mut bad_value = item(1.0);
        bad_value.s = vec![0.0, f64::NAN, 0.0];
        bad_value.s_next = vec![0.0; 3];
        assert!(buf.push(bad_value).is_err());
        assert_eq!(buf.len(), 0);
    }

    #[test]
    fn uniform_sampling_chi_squared() {
        let buf = ReplayBuffer::new(10, 2);
        for i in 0..10 {
            buf.push(item(i as f64)).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let draws = 100_000usize;
        let mut counts = [0usize; 10];
        for _ in 0..draws / 10 {
            for t in buf.sample(10, &mut rng).unwrap() {
                counts[t.r as usize] += 1;
            }
        }
        let expected = draws as f64 / 10.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // chi^2 critical value, 9 dof, alpha = 0.01.
        assert!(chi2 < 21.666, "chi2 = {chi2}");
    }

    #[test]
    fn concurrent_pushes_lose_nothing() {
        let producers = 8usize;
        let per_producer = 500usize;
        let buf = Arc::new(ReplayBuffer::new(producers * per_producer, 2));
        let handles: Vec<_> = (0..producers)
            .map(|p| {
                let buf = Arc::clone(&buf);
                std::thread::spawn(move || {
                    for i in 0..per_producer {
                        buf.push(item((p * per_producer + i) as f64)).unwrap();
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(buf.len(), producers * per_producer);
        assert_eq!(buf.inserted(), (producers * per_producer) as u64);
        // Every tagged item is present exactly once.
        let mut tags: Vec<u64> = buf.contents().iter().map(|t| t.r as u64).collect();
        tags.sort_unstable();
        let expect: Vec<u64> = (0..(producers * per_producer) as u64).collect();
        assert_eq!(tags, expect);
    }

    #[test]
    fn concurrent_overwrite_keeps_per_producer_order() {
        // With a small ring, surviving items from each producer must be its
        // most recent ones: the buffer may interleave producers arbitrarily
        // but must never reorder a single producer's inserts.
        let producers = 4usize;
        let per_producer = 1000usize;
        let buf = Arc::new(ReplayBuffer::new(64, 2));
        let handles: Vec<_> = (0..producers)
            .map(|p| {
                let buf = Arc::clone(&buf);
                std::thread::spawn(move || {
                    for i in 0..per_producer {
                        let tag = (p * 1_000_000 + i) as f64;
                        buf.push(item(tag)).unwrap();
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(buf.len(), 64);
        assert_eq!(buf.inserted(), (producers * per_producer) as u64);
        let contents = buf.contents();
        for p in 0..producers {
            let seq: Vec<u64> = contents
                .iter()
                .map(|t| t.r as u64)
                .filter(|tag| (tag / 1_000_000) as usize == p)
                .collect();
            assert!(seq.windows(2).all(|w| w[0] < w[1]), "producer {p} reordered: {seq:?}");
        }
    }
}
