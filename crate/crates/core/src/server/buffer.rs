use rand::Rng as _;

use crate::rng::Rng;
use crate::stream::Sample;

/// Fixed-capacity replay memory. Once full, every incoming sample
/// overwrites a uniformly chosen sample of the current majority class.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: Vec<Sample<T>>,
    /// Slot indices holding each label.
    slots: [Vec<usize>; 2],
    rng: Rng,
}

impl<T: Clone> ReplayBuffer<T> {
    pub fn new(capacity: usize, rng: Rng) -> Self {
        ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            slots: [Vec::new(), Vec::new()],
            rng,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.items.len() >= self.capacity
    }

    pub fn items(&self) -> &[Sample<T>] {
        &self.items
    }

    pub fn count_label(&self, label: u8) -> usize {
        self.slots[usize::from(label.min(1))].len()
    }

    /// Label with the most samples; ties go to class 0.
    pub fn majority_label(&self) -> u8 {
        u8::from(self.slots[1].len() > self.slots[0].len())
    }

    pub fn insert(&mut self, sample: Sample<T>) {
        if self.capacity == 0 {
            return;
        }
        let label = usize::from(sample.label.min(1));
        if !self.is_full() {
            self.slots[label].push(self.items.len());
            self.items.push(sample);
            return;
        }
        let majority = usize::from(self.majority_label());
        let slot = if self.slots[majority].is_empty() {
            // Unreachable with capacity > 0, kept for the degenerate case.
            let slot = self.rng.random_range(0..self.items.len());
            let owner = usize::from(self.items[slot].label.min(1));
            let pos = self.slots[owner].iter().position(|&s| s == slot).expect("slot index");
            self.slots[owner].swap_remove(pos);
            slot
        } else {
            let pos = self.rng.random_range(0..self.slots[majority].len());
            self.slots[majority].swap_remove(pos)
        };
        self.items[slot] = sample;
        self.slots[label].push(slot);
    }

    pub fn extend(&mut self, samples: impl IntoIterator<Item = Sample<T>>) {
        for s in samples {
            self.insert(s);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn sample(label: u8, id: usize) -> Sample<f64> {
        Sample {
            features: vec![id as f64],
            label,
            round: 0,
            index_in_batch: id,
        }
    }

    #[test]
    fn appends_until_full() {
        let mut b = ReplayBuffer::new(3, substream(0, 0));
        b.extend([sample(0, 0), sample(1, 1)]);
        assert_eq!(b.len(), 2);
        assert_eq!(b.items()[0].features, vec![0.0]);
        assert_eq!(b.items()[1].features, vec![1.0]);
    }

    #[test]
    fn anomaly_evicts_a_normal() {
        for seed in 0..30 {
            let mut b = ReplayBuffer::new(3, substream(seed, 0));
            b.extend([sample(0, 0), sample(0, 1), sample(1, 2)]);
            b.insert(sample(1, 3));
            assert_eq!(b.len(), 3);
            assert_eq!(b.count_label(1), 2);
            let ids: Vec<f64> = b.items().iter().map(|s| s.features[0]).collect();
            assert!(ids.contains(&2.0) && ids.contains(&3.0));
        }
    }

    #[test]
    fn capacity_holds() {
        let mut b = ReplayBuffer::new(3000, substream(1, 0));
        let mut rng = substream(1, 1);
        for i in 0..5000 {
            b.insert(sample(u8::from(rng.random_bool(0.07)), i));
            assert_eq!(b.len(), (i + 1).min(3000));
        }
    }

    #[test]
    fn slot_index_stays_consistent() {
        let mut b = ReplayBuffer::new(50, substream(2, 0));
        let mut rng = substream(2, 1);
        for i in 0..2000 {
            b.insert(sample(u8::from(rng.random_bool(0.6)), i));
            let zeros = b.items().iter().filter(|s| s.label == 0).count();
            assert_eq!(zeros, b.count_label(0));
            assert_eq!(b.len() - zeros, b.count_label(1));
        }
    }

    #[test]
    fn zero_capacity_ignores_inserts() {
        let mut b = ReplayBuffer::new(0, substream(0, 0));
        b.insert(sample(0, 0));
        assert!(b.is_empty());
    }
}
