//! Proportional prioritized replay backed by a sum-tree.

use rand::Rng;

use crate::environment::ActionMask;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    /// Feasible actions at `next_obs`; bootstrap targets maximize over these.
    pub next_mask: ActionMask,
}

/// Binary tree over a power-of-two number of leaves; every internal node
/// holds the sum of its two children. Unused leaves are zero.
#[derive(Clone, Debug)]
pub struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        Self {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    pub fn set(&mut self, i: usize, value: f64) {
        let mut k = self.leaves + i;
        self.nodes[k] = value;
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Leaf whose cumulative range contains `mass`.
    pub fn find(&self, mut mass: f64) -> usize {
        let mut k = 1;
        while k < self.leaves {
            let left = self.nodes[2 * k];
            if mass < left || self.nodes[2 * k + 1] == 0.0 {
                k *= 2;
            } else {
                mass -= left;
                k = 2 * k + 1;
            }
        }
        k - self.leaves
    }

    /// Largest relative mismatch between an internal node and its children.
    pub fn max_inconsistency(&self) -> f64 {
        (1..self.leaves)
            .map(|k| {
                let sum = self.nodes[2 * k] + self.nodes[2 * k + 1];
                let scale = self.nodes[k].abs().max(sum.abs()).max(f64::MIN_POSITIVE);
                (self.nodes[k] - sum).abs() / scale
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample<'a> {
    pub transitions: Vec<&'a Transition>,
    pub indices: Vec<usize>,
    pub probabilities: Vec<f64>,
    /// Importance weights, normalized by the largest weight over the buffer.
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    alpha: f64,
    eps_priority: f64,
    data: Vec<Transition>,
    /// Raw priorities `p_i`; the tree stores `p_i^alpha`.
    priorities: Vec<f64>,
    tree: SumTree,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, alpha: f64, eps_priority: f64) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            alpha,
            eps_priority,
            data: Vec::with_capacity(capacity),
            priorities: Vec::with_capacity(capacity),
            tree: SumTree::new(capacity),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    pub fn priority(&self, i: usize) -> f64 {
        self.priorities[i]
    }

    pub fn transition(&self, i: usize) -> &Transition {
        &self.data[i]
    }

    /// Stores a transition at the current maximum priority (1 when empty),
    /// overwriting the oldest entry once full. Returns the slot used.
    pub fn insert(&mut self, tr: Transition) -> usize {
        let p = self.priorities.iter().copied().fold(f64::NAN, f64::max);
        let p = if p.is_nan() { 1.0 } else { p };
        let slot = self.next;
        if self.data.len() < self.capacity {
            self.data.push(tr);
            self.priorities.push(p);
        } else {
            self.data[slot] = tr;
            self.priorities[slot] = p;
        }
        self.tree.set(slot, p.powf(self.alpha));
        self.next = (self.next + 1) % self.capacity;
        slot
    }

    /// Sampling probability of slot `i`.
    pub fn probability(&self, i: usize) -> f64 {
        self.tree.get(i) / self.tree.total()
    }

    /// Stratified proportional sample of `batch` transitions, or `None` while
    /// fewer than `batch` are stored.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, beta: f64, rng: &mut R) -> Option<Sample<'_>> {
        let n = self.data.len();
        if batch == 0 || n < batch {
            return None;
        }
        let total = self.tree.total();
        let segment = total / batch as f64;
        // (1/(N P_i))^beta / max_j (1/(N P_j))^beta = (P_min / P_i)^beta
        let min_mass = (0..n).map(|i| self.tree.get(i)).fold(f64::INFINITY, f64::min);

        let mut out = Sample {
            transitions: Vec::with_capacity(batch),
            indices: Vec::with_capacity(batch),
            probabilities: Vec::with_capacity(batch),
            weights: Vec::with_capacity(batch),
        };
        for k in 0..batch {
            let u: f64 = rng.random();
            let mass = ((k as f64 + u) * segment).min(total);
            let mut i = self.tree.find(mass);
            if i >= n {
                i = n - 1;
            }
            let leaf = self.tree.get(i);
            out.transitions.push(&self.data[i]);
            out.indices.push(i);
            out.probabilities.push(leaf / total);
            out.weights.push((min_mass / leaf).powf(beta));
        }
        Some(out)
    }

    /// Sets `p_i = |td_i| + eps_priority` for each sampled slot.
    pub fn update_priorities(&mut self, indices: &[usize], td_errors: &[f64]) {
        assert_eq!(indices.len(), td_errors.len());
        for (&i, &td) in indices.iter().zip(td_errors) {
            let p = td.abs() + self.eps_priority;
            self.priorities[i] = p;
            self.tree.set(i, p.powf(self.alpha));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(tag: f64) -> Transition {
        Transition {
            obs: vec![tag],
            action: 0,
            reward: tag,
            next_obs: vec![tag],
            next_mask: ActionMask::all(1),
        }
    }

    #[test]
    fn first_insert_has_unit_priority() {
        let mut b = ReplayBuffer::new(8, 0.2, 1e-5);
        b.insert(tr(0.0));
        assert_eq!(b.priority(0), 1.0);
        assert_eq!(b.tree().total(), 1.0);
    }

    #[test]
    fn inserts_take_current_max_priority() {
        let mut b = ReplayBuffer::new(8, 1.0, 1e-5);
        b.insert(tr(0.0));
        b.insert(tr(1.0));
        b.update_priorities(&[0, 1], &[4.0, -0.5]);
        b.insert(tr(2.0));
        assert!((b.priority(2) - (4.0 + 1e-5)).abs() < 1e-12);
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut b = ReplayBuffer::new(4000, 0.2, 1e-5);
        for k in 0..4001 {
            b.insert(tr(k as f64));
        }
        assert_eq!(b.len(), 4000);
        assert_eq!(b.transition(0).reward, 4000.0);
        assert!((0..4000).all(|i| b.transition(i).reward != 0.0));
    }

    #[test]
    fn underfilled_buffer_is_not_ready() {
        let mut b = ReplayBuffer::new(64, 0.2, 1e-5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for k in 0..31 {
            b.insert(tr(k as f64));
        }
        assert!(b.sample(32, 0.6, &mut rng).is_none());
        b.insert(tr(31.0));
        assert_eq!(b.sample(32, 0.6, &mut rng).unwrap().indices.len(), 32);
    }

    #[test]
    fn alpha_zero_is_uniform() {
        let mut b = ReplayBuffer::new(16, 0.0, 1e-5);
        for k in 0..10 {
            b.insert(tr(k as f64));
        }
        b.update_priorities(&[0, 3, 7], &[100.0, 0.001, 5.0]);
        for i in 0..10 {
            assert!((b.probability(i) - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn probabilities_follow_priorities() {
        let mut b = ReplayBuffer::new(2, 1.0, 0.0);
        b.insert(tr(0.0));
        b.insert(tr(1.0));
        b.update_priorities(&[0, 1], &[1.0, 3.0]);
        assert_eq!(b.probability(0), 0.25);
        assert_eq!(b.probability(1), 0.75);
    }

    #[test]
    fn zero_td_error_gets_the_priority_floor() {
        let mut b = ReplayBuffer::new(4, 0.2, 1e-5);
        b.insert(tr(0.0));
        b.update_priorities(&[0], &[0.0]);
        assert_eq!(b.priority(0), 1e-5);
    }

    #[test]
    fn uniform_priorities_give_unit_weights() {
        let mut b = ReplayBuffer::new(50, 0.2, 1e-5);
        for k in 0..50 {
            b.insert(tr(k as f64));
        }
        let idx: Vec<usize> = (0..50).collect();
        b.update_priorities(&idx, &[0.7; 50]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for beta in [0.0, 0.6, 1.0] {
            let s = b.sample(32, beta, &mut rng).unwrap();
            assert!(s.weights.iter().all(|&w| w == 1.0));
        }
    }

    #[test]
    fn weights_lie_in_unit_interval() {
        let mut b = ReplayBuffer::new(100, 0.6, 1e-5);
        for k in 0..100 {
            b.insert(tr(k as f64));
        }
        let idx: Vec<usize> = (0..100).collect();
        let tds: Vec<f64> = (0..100).map(|k| (k as f64 * 0.37).sin() * 10.0).collect();
        b.update_priorities(&idx, &tds);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = b.sample(32, 0.8, &mut rng).unwrap();
        assert!(s.weights.iter().all(|&w| w > 0.0 && w <= 1.0));
    }

    proptest! {
        #[test]
        fn tree_stays_consistent(ops in prop::collection::vec((0usize..3, 0usize..64, 0.0f64..50.0), 1..400)) {
            let mut b = ReplayBuffer::new(37, 0.2, 1e-5);
            for (kind, slot, td) in ops {
                if kind == 0 || b.is_empty() {
                    b.insert(tr(td));
                } else {
                    let i = slot % b.len();
                    b.update_priorities(&[i], &[td]);
                }
                let leaves: f64 = (0..b.len()).map(|i| b.tree().get(i)).sum();
                let root = b.tree().total();
                prop_assert!((root - leaves).abs() <= 1e-9 * leaves.max(1.0));
                prop_assert!(b.tree().max_inconsistency() <= 1e-12);
                prop_assert!((0..b.len()).all(|i| b.priority(i) > 0.0));
            }
        }
    }
}
