//! Exact nearest-neighbor queries over a static 3D point set.
//!
//! Implicit median-split layout: the node for index range `[lo, hi)` sits at
//! `mid = (lo + hi) / 2` with its split axis stored at the same slot.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::Vec3;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    order: Vec<usize>,
    axes: Vec<u8>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
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
        let mut min = Vec3::repeat(f64::INFINITY);
        let mut max = Vec3::repeat(f64::NEG_INFINITY);
        for &i in &self.order[lo..hi] {
            min = min.inf(&self.points[i]);
            max = max.sup(&self.points[i]);
        }
        let axis = (max - min).imax();
        let mid = (lo + hi) / 2;
        let points = &self.points;
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |a, b| {
            points[*a][axis].total_cmp(&points[*b][axis])
        });
        self.axes[mid] = axis as u8;
        self.build(lo, mid);
        self.build(mid + 1, hi);
    }

    /// Index and distance of the closest point, `None` on an empty tree.
    pub fn nearest(&self, query: &Vec3) -> Option<(usize, f64)> {
        let mut heap = BinaryHeap::with_capacity(2);
        self.search(query, 1, 0, self.points.len(), &mut heap);
        heap.pop().map(|c| (c.index, c.dist2.sqrt()))
    }

    /// The `k` closest points sorted by increasing distance.
    pub fn knn(&self, query: &Vec3, k: usize) -> Vec<(usize, f64)> {
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(query, k, 0, self.points.len(), &mut heap);
        heap.into_sorted_vec()
            .into_iter()
            .map(|c| (c.index, c.dist2.sqrt()))
            .collect()
    }

    fn offer(&self, query: &Vec3, index: usize, k: usize, heap: &mut BinaryHeap<Candidate>) {
        let dist2 = (self.points[index] - query).norm_squared();
        let cand = Candidate { dist2, index };
        if heap.len() < k {
            heap.push(cand);
        } else if let Some(worst) = heap.peek() {
            if cand < *worst {
                heap.pop();
                heap.push(cand);
            }
        }
    }

    fn search(
        &self,
        query: &Vec3,
        k: usize,
        lo: usize,
        hi: usize,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        if hi <= lo {
            return;
        }
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                self.offer(query, i, k, heap);
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let index = self.order[mid];
        let axis = self.axes[mid] as usize;
        self.offer(query, index, k, heap);
        let diff = query[axis] - self.points[index][axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(query, k, near.0, near.1, heap);
        let must_visit = heap.len() < k || heap.peek().is_some_and(|w| diff * diff <= w.dist2);
        if must_visit {
            self.search(query, k, far.0, far.1, heap);
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
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<Vec3> = (0..500)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random::<f64>().round(),
                )
            })
            .collect();
        let tree = KdTree::new(&pts);
        for _ in 0..200 {
            let q = Vec3::new(
                rng.random_range(-1.2..1.2),
                rng.random_range(-1.2..1.2),
                rng.random_range(-0.5..1.5),
            );
            let mut brute: Vec<(usize, f64)> = pts
                .iter()
                .enumerate()
                .map(|(i, p)| (i, (p - q).norm()))
                .collect();
            brute.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            let got = tree.knn(&q, 7);
            for (g, b) in got.iter().zip(&brute) {
                assert_eq!(g.1, b.1);
            }
            assert_eq!(tree.nearest(&q).unwrap().1, brute[0].1);
        }
    }

    #[test]
    fn duplicate_points_and_tiny_sets() {
        let pts = vec![Vec3::zeros(); 100];
        let tree = KdTree::new(&pts);
        assert_eq!(tree.knn(&Vec3::x(), 5).len(), 5);
        assert!(KdTree::new(&[]).nearest(&Vec3::zeros()).is_none());
        let tree = KdTree::new(&[Vec3::x()]);
        assert_eq!(tree.knn(&Vec3::zeros(), 3).len(), 1);
    }
}
