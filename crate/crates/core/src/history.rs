//! Stamped storage used by the decoupled engines: per-module input history
//! rings and the one-slot mailboxes that carry error gradients between
//! adjacent modules across iterations.

use std::collections::VecDeque;

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Ring buffer of `(iteration stamp, tensor)` with fixed capacity. Pushing
/// past capacity evicts the oldest entry. Stamps are pushed in strictly
/// increasing order.
#[derive(Debug, Clone)]
pub struct StampedRing<S: Scalar> {
    capacity: usize,
    entries: VecDeque<(i64, Tensor<S>)>,
}

impl<S: Scalar> StampedRing<S> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "ring capacity must be positive");
        Self { capacity, entries: VecDeque::with_capacity(capacity) }
    }

    pub fn push(&mut self, stamp: i64, value: Tensor<S>) {
        if let Some(&(last, _)) = self.entries.back() {
            debug_assert!(stamp > last, "stamps must increase: {last} then {stamp}");
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((stamp, value));
    }

    pub fn lookup(&self, stamp: i64) -> Option<&Tensor<S>> {
        self.entries.iter().find(|(s, _)| *s == stamp).map(|(_, v)| v)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &(i64, Tensor<S>)> {
        self.entries.iter()
    }

    pub fn float_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

/// Per-module feature history: module `k` of `K` keeps its last `K - k + 1`
/// boundary inputs so the backward phase can replay them.
pub type FeatureHistory<S> = StampedRing<S>;

/// Capacity of module `k`'s history in a `K`-module split (both 1-based).
pub fn history_capacity(module_count: usize, k: usize) -> usize {
    debug_assert!(k >= 1 && k <= module_count);
    module_count - k + 1
}

/// Single-slot mailbox carrying the stale error gradient between adjacent
/// modules. Written exactly once per iteration by the upstream module and
/// consumed exactly once per iteration by the downstream one.
#[derive(Debug, Clone, Default)]
pub struct DeltaSlot<S: Scalar> {
    pending: Option<(i64, Tensor<S>)>,
}

impl<S: Scalar> DeltaSlot<S> {
    pub fn empty() -> Self {
        Self { pending: None }
    }

    /// Deposit a gradient for the next iteration. Depositing on an occupied
    /// slot means the consumer skipped an iteration, which the engines never
    /// allow.
    pub fn put(&mut self, stamp: i64, value: Tensor<S>) -> Result<()> {
        if self.pending.is_some() {
            return Err(CoreError::Invariant(
                "delta slot written twice without an intervening consume".into(),
            ));
        }
        self.pending = Some((stamp, value));
        Ok(())
    }

    pub fn take(&mut self) -> Option<(i64, Tensor<S>)> {
        self.pending.take()
    }

    pub fn restore(&mut self, stamp: i64, value: Tensor<S>) {
        self.pending = Some((stamp, value));
    }

    pub fn peek(&self) -> Option<&(i64, Tensor<S>)> {
        self.pending.as_ref()
    }

    pub fn float_count(&self) -> usize {
        self.pending.as_ref().map_or(0, |(_, t)| t.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: f64) -> Tensor<f64> {
        Tensor::scalar(v)
    }

    #[test]
    fn ring_evicts_oldest_at_capacity() {
        let mut ring: StampedRing<f64> = StampedRing::new(3);
        for stamp in 0..5 {
            ring.push(stamp, t(stamp as f64));
            assert_eq!(ring.len(), (stamp as usize + 1).min(3));
        }
        assert!(ring.lookup(0).is_none());
        assert!(ring.lookup(1).is_none());
        for stamp in 2..5 {
            assert_eq!(ring.lookup(stamp).unwrap().data()[0], stamp as f64);
        }
    }

    #[test]
    fn steady_state_lookup_of_oldest_needed_stamp() {
        // Module k of K keeps K-k+1 entries; at iteration t it must find
        // stamp t+k-K, the oldest retained one.
        let (module_count, k) = (4, 2);
        let mut ring: StampedRing<f64> = StampedRing::new(history_capacity(module_count, k));
        for iter in 0..20i64 {
            ring.push(iter, t(iter as f64));
            let wanted = iter + k as i64 - module_count as i64;
            if wanted >= 0 {
                assert!(ring.lookup(wanted).is_some(), "t={iter} stamp {wanted}");
            }
        }
        assert_eq!(ring.len(), history_capacity(module_count, k));
    }

    #[test]
    fn delta_slot_is_write_once_per_consume() {
        let mut slot: DeltaSlot<f64> = DeltaSlot::empty();
        assert!(slot.take().is_none());
        slot.put(0, t(1.0)).unwrap();
        assert!(slot.put(1, t(2.0)).is_err());
        let (stamp, v) = slot.take().unwrap();
        assert_eq!((stamp, v.data()[0]), (0, 1.0));
        slot.put(1, t(2.0)).unwrap();
    }
}
