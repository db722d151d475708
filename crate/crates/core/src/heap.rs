//! Indexed binary min-heap over dense integer ids with O(log n) key updates.

/// Min-heap of `(key, id)` pairs. Each id appears at most once; ties on the
/// key are broken by the smaller id.
#[derive(Debug, Clone)]
pub struct IndexedMinHeap<K> {
    heap: Vec<(K, u32)>,
    pos: Vec<usize>,
}

const ABSENT: usize = usize::MAX;

impl<K: Ord + Copy> IndexedMinHeap<K> {
    /// Heap accepting ids in `0..capacity`.
    pub fn with_capacity(capacity: usize) -> Self {
        IndexedMinHeap {
            heap: Vec::new(),
            pos: vec![ABSENT; capacity],
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn contains(&self, id: u32) -> bool {
        self.pos.get(id as usize).is_some_and(|&p| p != ABSENT)
    }

    pub fn key(&self, id: u32) -> Option<K> {
        let p = *self.pos.get(id as usize)?;
        (p != ABSENT).then(|| self.heap[p].0)
    }

    pub fn peek(&self) -> Option<(u32, K)> {
        self.heap.first().map(|&(k, id)| (id, k))
    }

    /// Inserts `id`, or updates its key when already present.
    pub fn push(&mut self, id: u32, key: K) {
        if self.contains(id) {
            self.change_key(id, key);
            return;
        }
        if id as usize >= self.pos.len() {
            self.pos.resize(id as usize + 1, ABSENT);
        }
        self.heap.push((key, id));
        let i = self.heap.len() - 1;
        self.pos[id as usize] = i;
        self.sift_up(i);
    }

    /// Changes the key of a present id in either direction. Returns false if absent.
    pub fn change_key(&mut self, id: u32, key: K) -> bool {
        let Some(&i) = self.pos.get(id as usize) else {
            return false;
        };
        if i == ABSENT {
            return false;
        }
        let old = self.heap[i].0;
        self.heap[i].0 = key;
        if key < old {
            self.sift_up(i);
        } else {
            self.sift_down(i);
        }
        true
    }

    pub fn pop(&mut self) -> Option<(u32, K)> {
        let (id, _) = self.peek()?;
        self.remove(id).map(|k| (id, k))
    }

    pub fn remove(&mut self, id: u32) -> Option<K> {
        let i = *self.pos.get(id as usize)?;
        if i == ABSENT {
            return None;
        }
        let last = self.heap.len() - 1;
        self.swap(i, last);
        let (key, _) = self.heap.pop().unwrap();
        self.pos[id as usize] = ABSENT;
        if i < self.heap.len() {
            self.sift_down(i);
            self.sift_up(i);
        }
        Some(key)
    }

    #[inline]
    fn less(&self, a: usize, b: usize) -> bool {
        self.heap[a] < self.heap[b]
    }

    fn swap(&mut self, a: usize, b: usize) {
        self.heap.swap(a, b);
        self.pos[self.heap[a].1 as usize] = a;
        self.pos[self.heap[b].1 as usize] = b;
    }

    fn sift_up(&mut self, mut i: usize) {
        while i > 0 {
            let parent = (i - 1) / 2;
            if !self.less(i, parent) {
                break;
            }
            self.swap(i, parent);
            i = parent;
        }
    }

    fn sift_down(&mut self, mut i: usize) {
        let n = self.heap.len();
        loop {
            let l = 2 * i + 1;
            let r = l + 1;
            let mut smallest = i;
            if l < n && self.less(l, smallest) {
                smallest = l;
            }
            if r < n && self.less(r, smallest) {
                smallest = r;
            }
            if smallest == i {
                break;
            }
            self.swap(i, smallest);
            i = smallest;
        }
    }
}
