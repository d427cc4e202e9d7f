//! Static k-d tree for k-nearest-neighbor queries with deterministic ties:
//! candidates are ranked by `(squared distance, index)`.

use crate::points::{dist2, Points};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

const LEAF_SIZE: usize = 16;

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

pub struct KdTree<'a> {
    points: &'a Points,
    idx: Vec<usize>,
    root: Node,
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then(self.index.cmp(&other.index))
    }
}

impl<'a> KdTree<'a> {
    /// Builds a tree over `points[0..count]`.
    pub fn build(points: &'a Points, count: usize) -> Self {
        let mut idx: Vec<usize> = (0..count).collect();
        let root = Self::build_node(points, &mut idx, 0, count);
        KdTree { points, idx, root }
    }

    fn build_node(points: &Points, idx: &mut [usize], start: usize, end: usize) -> Node {
        if end - start <= LEAF_SIZE {
            return Node::Leaf { start, end };
        }
        let dim = points.dim();
        let slice = &mut idx[start..end];
        let mut best_axis = 0;
        let mut best_spread = f64::NEG_INFINITY;
        for axis in 0..dim {
            let (lo, hi) = slice
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    let v = points.point(i)[axis];
                    (lo.min(v), hi.max(v))
                });
            if hi - lo > best_spread {
                best_spread = hi - lo;
                best_axis = axis;
            }
        }
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |&a, &b| {
            points.point(a)[best_axis]
                .total_cmp(&points.point(b)[best_axis])
                .then(a.cmp(&b))
        });
        let value = points.point(slice[mid])[best_axis];
        let left = Self::build_node(points, idx, start, start + mid);
        let right = Self::build_node(points, idx, start + mid, end);
        Node::Split {
            axis: best_axis,
            value,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// The `k` nearest tree points to `q` as `(squared distance, index)`,
    /// sorted ascending.
    pub fn nearest(&self, q: &[f64], k: usize) -> Vec<(f64, usize)> {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        if k > 0 {
            self.search(&self.root, q, k, &mut heap);
        }
        let mut out: Vec<(f64, usize)> = heap.into_iter().map(|c| (c.d2, c.index)).collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out
    }

    fn search(&self, node: &Node, q: &[f64], k: usize, heap: &mut BinaryHeap<Candidate>) {
        match node {
            Node::Leaf { start, end } => {
                for &i in &self.idx[*start..*end] {
                    let c = Candidate {
                        d2: dist2(q, self.points.point(i)),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[*axis] - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, q, k, heap);
                let plane = diff * diff;
                if heap.len() < k || plane <= heap.peek().map_or(f64::INFINITY, |c| c.d2) {
                    self.search(far, q, k, heap);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let coords: Vec<f64> = (0..2 * 500).map(|_| rng.random::<f64>()).collect();
        let pts = Points::new(2, coords).unwrap();
        let tree = KdTree::build(&pts, 400);
        for qi in 400..500 {
            let q = pts.point(qi);
            let got = tree.nearest(q, 7);
            let mut all: Vec<(f64, usize)> =
                (0..400).map(|i| (dist2(q, pts.point(i)), i)).collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            assert_eq!(got, all[..7].to_vec());
        }
    }
}
