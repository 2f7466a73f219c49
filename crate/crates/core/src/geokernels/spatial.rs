//! Exact kd-tree for nearest-neighbour queries in 3-D.
//!
//! Results are identical to a brute-force scan: distances are compared as
//! squared Euclidean distances computed in the same order, and ties resolve to
//! the smaller point index.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::cloud::{dist2, Point3};

const LEAF_SIZE: usize = 8;

#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<Point3>,
    /// Permutation of point indices; each subtree is a contiguous range.
    order: Vec<usize>,
    /// Split axis for each internal range, keyed by the range midpoint.
    axes: Vec<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KdTree {
    pub fn new(points: &[Point3]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            axes: vec![0; points.len()],
        };
        tree.build(0, points.len());
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build(&mut self, lo: usize, hi: usize) {
        if hi - lo <= LEAF_SIZE {
            return;
        }
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        for &i in &self.order[lo..hi] {
            for a in 0..3 {
                min[a] = min[a].min(self.points[i][a]);
                max[a] = max[a].max(self.points[i][a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (max[a] - min[a]).total_cmp(&(max[b] - min[b])).then(b.cmp(&a)))
            .unwrap();
        let mid = (lo + hi) / 2;
        let pts = &self.points;
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b))
        });
        self.axes[mid] = axis as u8;
        self.build(lo, mid);
        self.build(mid + 1, hi);
    }

    /// Index and squared distance of the nearest point.
    pub fn nearest(&self, q: &Point3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = Candidate {
            d2: f64::INFINITY,
            index: usize::MAX,
        };
        self.nearest_in(q, 0, self.points.len(), &mut best);
        Some((best.index, best.d2))
    }

    fn nearest_in(&self, q: &Point3, lo: usize, hi: usize, best: &mut Candidate) {
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                let c = Candidate {
                    d2: dist2(q, &self.points[i]),
                    index: i,
                };
                if c < *best {
                    *best = c;
                }
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let pivot = self.order[mid];
        let c = Candidate {
            d2: dist2(q, &self.points[pivot]),
            index: pivot,
        };
        if c < *best {
            *best = c;
        }
        let axis = self.axes[mid] as usize;
        let diff = q[axis] - self.points[pivot][axis];
        let (first, second) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.nearest_in(q, first.0, first.1, best);
        if diff * diff <= best.d2 {
            self.nearest_in(q, second.0, second.1, best);
        }
    }

    /// The `k` nearest points as `(index, squared distance)`, ascending by
    /// distance then index.
    pub fn knn(&self, q: &Point3, k: usize) -> Vec<(usize, f64)> {
        let k = k.min(self.points.len());
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_in(q, k, 0, self.points.len(), &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        out.into_iter().map(|c| (c.index, c.d2)).collect()
    }

    fn offer(heap: &mut BinaryHeap<Candidate>, k: usize, c: Candidate) {
        if heap.len() < k {
            heap.push(c);
        } else if c < *heap.peek().unwrap() {
            heap.pop();
            heap.push(c);
        }
    }

    fn knn_in(&self, q: &Point3, k: usize, lo: usize, hi: usize, heap: &mut BinaryHeap<Candidate>) {
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                Self::offer(
                    heap,
                    k,
                    Candidate {
                        d2: dist2(q, &self.points[i]),
                        index: i,
                    },
                );
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let pivot = self.order[mid];
        Self::offer(
            heap,
            k,
            Candidate {
                d2: dist2(q, &self.points[pivot]),
                index: pivot,
            },
        );
        let axis = self.axes[mid] as usize;
        let diff = q[axis] - self.points[pivot][axis];
        let (first, second) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.knn_in(q, k, first.0, first.1, heap);
        let worst = if heap.len() < k {
            f64::INFINITY
        } else {
            heap.peek().unwrap().d2
        };
        if diff * diff <= worst {
            self.knn_in(q, k, second.0, second.1, heap);
        }
    }
}
