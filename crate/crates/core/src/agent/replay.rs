use rand::seq::index;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity ring of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    cursor: usize,
    obs_len: usize,
    act_len: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_len: usize, act_len: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            items: Vec::new(),
            capacity,
            cursor: 0,
            obs_len,
            act_len,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Panics when the transition's dimensions differ from the buffer's.
    pub fn push(&mut self, t: Transition) {
        assert!(
            t.s.len() == self.obs_len && t.s_next.len() == self.obs_len,
            "observation length {} / {} does not match {}",
            t.s.len(),
            t.s_next.len(),
            self.obs_len
        );
        assert_eq!(t.a.len(), self.act_len, "action length mismatch");
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// `batch` distinct indices drawn uniformly. `None` while the buffer
    /// holds fewer than `batch` transitions.
    pub fn sample_indices(&self, batch: usize, rng: &mut ChaCha8Rng) -> Option<Vec<usize>> {
        if self.items.len() < batch || batch == 0 {
            return None;
        }
        Some(index::sample(rng, self.items.len(), batch).into_vec())
    }

    pub fn sample(&self, batch: usize, rng: &mut ChaCha8Rng) -> Option<Vec<&Transition>> {
        self.sample_indices(batch, rng)
            .map(|ix| ix.into_iter().map(|i| &self.items[i]).collect())
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn t(x: f64) -> Transition {
        Transition {
            s: vec![x],
            a: vec![0.0],
            r: x,
            s_next: vec![x],
            done: false,
        }
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut buf = ReplayBuffer::new(3, 1, 1);
        for i in 0..5 {
            buf.push(t(i as f64));
        }
        assert_eq!(buf.len(), 3);
        let rs: Vec<f64> = (0..3).map(|i| buf.get(i).unwrap().r).collect();
        assert_eq!(rs, vec![3.0, 4.0, 2.0]);
    }

    #[test]
    fn no_sample_before_batch() {
        let mut buf = ReplayBuffer::new(10, 1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        buf.push(t(0.0));
        assert!(buf.sample(2, &mut rng).is_none());
        buf.push(t(1.0));
        assert_eq!(buf.sample(2, &mut rng).unwrap().len(), 2);
    }

    #[test]
    fn batch_has_no_repeats() {
        let mut buf = ReplayBuffer::new(64, 1, 1);
        for i in 0..64 {
            buf.push(t(i as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let mut ix = buf.sample_indices(32, &mut rng).unwrap();
            ix.sort_unstable();
            ix.dedup();
            assert_eq!(ix.len(), 32);
        }
    }

    #[test]
    #[should_panic]
    fn rejects_wrong_dimensions() {
        let mut buf = ReplayBuffer::new(4, 2, 1);
        buf.push(t(0.0));
    }
}
