use std::cmp::Ordering;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeapKind {
    Min,
    Max,
}

/// Array-embedded binary heap keyed by `f64` with an ordered payload.
///
/// Equal keys are ordered by payload, smallest payload first, in both kinds.
#[derive(Debug, Clone)]
pub struct Heap<P> {
    kind: HeapKind,
    nodes: Vec<(f64, P)>,
    comparisons: usize,
}

impl<P: Ord + Clone> Heap<P> {
    /// Builds a heap bottom-up in O(n).
    pub fn generate(kind: HeapKind, items: impl IntoIterator<Item = (f64, P)>) -> Self {
        let mut heap = Self {
            kind,
            nodes: items.into_iter().collect(),
            comparisons: 0,
        };
        for i in (0..heap.nodes.len() / 2).rev() {
            heap.sift_down(i);
        }
        heap
    }

    pub fn kind(&self) -> HeapKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of key comparisons performed so far.
    pub fn comparisons(&self) -> usize {
        self.comparisons
    }

    pub fn peek(&self) -> Result<(f64, &P)> {
        self.nodes
            .first()
            .map(|(k, p)| (*k, p))
            .ok_or(Error::EmptyHeap)
    }

    pub fn extract(&mut self) -> Result<(f64, P)> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyHeap);
        }
        let root = self.nodes.swap_remove(0);
        if !self.nodes.is_empty() {
            self.sift_down(0);
        }
        Ok(root)
    }

    /// Overwrites the root and restores heap order.
    pub fn replace_root(&mut self, key: f64, payload: P) -> Result<()> {
        let root = self.nodes.first_mut().ok_or(Error::EmptyHeap)?;
        *root = (key, payload);
        self.sift_down(0);
        Ok(())
    }

    /// True if every parent precedes both of its children.
    pub fn is_heap_ordered(&self) -> bool {
        (1..self.nodes.len()).all(|c| {
            let p = (c - 1) / 2;
            self.order(&self.nodes[p], &self.nodes[c]) != Ordering::Greater
        })
    }

    pub fn into_vec(self) -> Vec<(f64, P)> {
        self.nodes
    }

    /// `Less` means `a` belongs nearer the root.
    fn order(&self, a: &(f64, P), b: &(f64, P)) -> Ordering {
        let by_key = match self.kind {
            HeapKind::Min => a.0.total_cmp(&b.0),
            HeapKind::Max => b.0.total_cmp(&a.0),
        };
        by_key.then_with(|| a.1.cmp(&b.1))
    }

    fn precedes(&mut self, a: usize, b: usize) -> bool {
        self.comparisons += 1;
        self.order(&self.nodes[a], &self.nodes[b]) == Ordering::Less
    }

    fn sift_down(&mut self, mut i: usize) {
        let n = self.nodes.len();
        loop {
            let (l, r) = (2 * i + 1, 2 * i + 2);
            let mut best = i;
            if l < n && self.precedes(l, best) {
                best = l;
            }
            if r < n && self.precedes(r, best) {
                best = r;
            }
            if best == i {
                return;
            }
            self.nodes.swap(i, best);
            i = best;
        }
    }
}
