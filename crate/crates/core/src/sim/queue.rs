//! Drop-tail FIFO with a packet-count limit.

use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub struct DropTailQueue<T> {
    items: VecDeque<T>,
    capacity: usize,
    drop_count: u64,
    high_water: usize,
}

impl<T> DropTailQueue<T> {
    pub fn new(capacity: usize) -> Self {
        Self {
            items: VecDeque::with_capacity(capacity.min(1024)),
            capacity,
            drop_count: 0,
            high_water: 0,
        }
    }

    /// Accepts iff the queue held fewer than `capacity` packets; a refused
    /// item is handed back.
    pub fn enqueue(&mut self, item: T) -> Result<(), T> {
        if self.items.len() >= self.capacity {
            self.drop_count += 1;
            return Err(item);
        }
        self.items.push_back(item);
        self.high_water = self.high_water.max(self.items.len());
        Ok(())
    }

    pub fn dequeue(&mut self) -> Option<T> {
        self.items.pop_front()
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

    pub fn drop_count(&self) -> u64 {
        self.drop_count
    }

    /// Largest occupancy seen so far.
    pub fn high_water(&self) -> usize {
        self.high_water
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }
}
