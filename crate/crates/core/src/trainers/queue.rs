use std::borrow::Cow;
use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Bounded FIFO of detached key records. New batches go to the back; once
/// the buffer exceeds `capacity` the oldest records are evicted from the
/// front.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeQueue<T> {
    capacity: usize,
    items: VecDeque<T>,
    inserted: u64,
}

impl<T: Clone> NegativeQueue<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("queue capacity must be positive"));
        }
        Ok(Self { capacity, items: VecDeque::with_capacity(capacity), inserted: 0 })
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

    /// Total number of records ever enqueued.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    /// Appends `batch` and evicts from the front down to capacity.
    /// Returns the evicted records, oldest first.
    pub fn enqueue(&mut self, batch: &[T]) -> Result<Vec<T>> {
        if batch.len() > self.capacity {
            return Err(Error::config(format!(
                "batch of {} keys exceeds queue capacity {}",
                batch.len(),
                self.capacity
            )));
        }
        self.items.extend(batch.iter().cloned());
        self.inserted += batch.len() as u64;
        Ok(self.dequeue_to_capacity())
    }

    fn dequeue_to_capacity(&mut self) -> Vec<T> {
        let excess = self.items.len().saturating_sub(self.capacity);
        self.items.drain(..excess).collect()
    }

    /// Removes up to `n` of the oldest records.
    pub fn dequeue(&mut self, n: usize) -> Vec<T> {
        let n = n.min(self.items.len());
        self.items.drain(..n).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    /// Contents oldest first, borrowed when the ring buffer is not wrapped.
    pub fn contents(&self) -> Cow<'_, [T]> {
        match self.items.as_slices() {
            (front, []) => Cow::Borrowed(front),
            _ => Cow::Owned(self.to_vec()),
        }
    }

    /// Unwraps the ring buffer so [`Self::contents`] borrows.
    pub fn make_contiguous(&mut self) {
        self.items.make_contiguous();
    }

    /// Contents oldest first.
    pub fn to_vec(&self) -> Vec<T> {
        self.items.iter().cloned().collect()
    }

    pub(crate) fn restore(capacity: usize, items: Vec<T>, inserted: u64) -> Result<Self> {
        if items.len() > capacity {
            return Err(Error::config("restored queue exceeds its capacity"));
        }
        let mut q = Self::new(capacity)?;
        q.items.extend(items);
        q.inserted = inserted;
        Ok(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifo_eviction() {
        let mut q = NegativeQueue::new(3).unwrap();
        assert!(q.enqueue(&[1, 2]).unwrap().is_empty());
        assert_eq!(q.enqueue(&[3, 4]).unwrap(), vec![1]);
        assert_eq!(q.to_vec(), vec![2, 3, 4]);
        assert_eq!(q.enqueue(&[5, 6, 7]).unwrap(), vec![2, 3, 4]);
        assert_eq!(q.inserted(), 7);
        assert_eq!(q.dequeue(2), vec![5, 6]);
        assert_eq!(q.len(), 1);
    }

    #[test]
    fn oversized_batch_rejected() {
        let mut q = NegativeQueue::new(2).unwrap();
        assert!(q.enqueue(&[1, 2, 3]).is_err());
        assert!(NegativeQueue::<u8>::new(0).is_err());
    }
}
