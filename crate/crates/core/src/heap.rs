//! Array-backed binary max heap.
//!
//! A small replacement for `std::collections::BinaryHeap` that exposes its
//! storage for auditing and keeps its allocation across `clear` calls, which
//! the per-frame integrator relies on.

#[derive(Debug, Clone)]
pub struct MaxHeap<T> {
    items: Vec<T>,
}

impl<T: Ord> Default for MaxHeap<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Ord> MaxHeap<T> {
    pub fn new() -> Self {
        Self { items: Vec::new() }
    }

    pub fn with_capacity(cap: usize) -> Self {
        Self {
            items: Vec::with_capacity(cap),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }

    pub fn peek(&self) -> Option<&T> {
        self.items.first()
    }

    /// Unordered view of the stored entries.
    pub fn as_slice(&self) -> &[T] {
        &self.items
    }

    pub fn push(&mut self, item: T) {
        self.items.push(item);
        let mut i = self.items.len() - 1;
        while i > 0 {
            let parent = (i - 1) / 2;
            if self.items[i] <= self.items[parent] {
                break;
            }
            self.items.swap(i, parent);
            i = parent;
        }
    }

    pub fn pop(&mut self) -> Option<T> {
        let last = self.items.len().checked_sub(1)?;
        self.items.swap(0, last);
        let top = self.items.pop();
        self.sift_down(0);
        top
    }

    fn sift_down(&mut self, mut i: usize) {
        let n = self.items.len();
        loop {
            let l = 2 * i + 1;
            if l >= n {
                return;
            }
            let r = l + 1;
            let child = if r < n && self.items[r] > self.items[l] {
                r
            } else {
                l
            };
            if self.items[child] <= self.items[i] {
                return;
            }
            self.items.swap(i, child);
            i = child;
        }
    }
}

impl<T: Ord> Extend<T> for MaxHeap<T> {
    fn extend<I: IntoIterator<Item = T>>(&mut self, iter: I) {
        for item in iter {
            self.push(item);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_pop() {
        let mut h: MaxHeap<i32> = MaxHeap::new();
        assert_eq!(h.pop(), None);
        assert!(h.peek().is_none());
    }

    proptest! {
        #[test]
        fn pops_in_descending_order(values in prop::collection::vec(-1000i32..1000, 0..200)) {
            let mut h = MaxHeap::with_capacity(values.len());
            h.extend(values.iter().copied());
            let mut sorted = values.clone();
            sorted.sort_unstable_by(|a, b| b.cmp(a));
            let mut popped = Vec::new();
            while let Some(v) = h.pop() {
                popped.push(v);
            }
            prop_assert_eq!(popped, sorted);
        }

        #[test]
        fn interleaved_pop_is_maximum(ops in prop::collection::vec(prop::option::of(0u16..500), 1..300)) {
            let mut h = MaxHeap::new();
            for op in ops {
                match op {
                    Some(v) => h.push(v),
                    None => {
                        let max = h.as_slice().iter().copied().max();
                        prop_assert_eq!(h.pop(), max);
                    }
                }
            }
        }
    }
}
