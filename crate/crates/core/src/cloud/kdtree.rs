use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::Point3;
use crate::error::{GqaError, Result};

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Immutable k-d tree over a point set.
///
/// Results are identical to a brute-force scan: candidates are ordered by
/// `(squared distance, point index)`, so equal distances resolve to the lower index.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    points: Vec<Point3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    idx: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, o: &Self) -> Ordering {
        self.d2.total_cmp(&o.d2).then(self.idx.cmp(&o.idx))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl NeighborIndex {
    pub fn build(points: &[Point3]) -> Self {
        let mut index = NeighborIndex { points: points.to_vec(), order: (0..points.len()).collect(), nodes: Vec::new() };
        if !points.is_empty() {
            index.build_node(0, points.len());
        }
        index
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let (mut lo, mut hi) = (self.points[self.order[start]], self.points[self.order[start]]);
        for &i in &self.order[start..end] {
            lo = lo.min(self.points[i]);
            hi = hi.max(self.points[i]);
        }
        let ext = hi - lo;
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let mid = start + (end - start) / 2;
        let pts = &self.points;
        self.order[start..end]
            .select_nth_unstable_by(mid - start, |&a, &b| pts[a].coord(axis).total_cmp(&pts[b].coord(axis)));
        let value = self.points[self.order[mid]].coord(axis);
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    /// Indices of the `k` points nearest to `query`, nearest first.
    pub fn knn(&self, query: Point3, k: usize) -> Result<Vec<usize>> {
        Ok(self.knn_with_dist2(query, k)?.into_iter().map(|(i, _)| i).collect())
    }

    /// Like [`knn`](Self::knn) but also returns squared distances.
    pub fn knn_with_dist2(&self, query: Point3, k: usize) -> Result<Vec<(usize, f64)>> {
        if k > self.points.len() {
            return Err(GqaError::InvalidArgument(format!("k = {k} exceeds cloud size {}", self.points.len())));
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_node(0, query, k, &mut heap);
        let mut out = heap.into_vec();
        out.sort();
        Ok(out.into_iter().map(|c| (c.idx, c.d2)).collect())
    }

    fn knn_node(&self, node: usize, q: Point3, k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &idx in &self.order[start..end] {
                    let c = Candidate { d2: q.dist2(self.points[idx]), idx };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("non-empty heap") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q.coord(axis) - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.knn_node(near, q, k, heap);
                // `<=` keeps equal-distance candidates with smaller indices reachable
                if heap.len() < k || diff * diff <= heap.peek().expect("non-empty heap").d2 {
                    self.knn_node(far, q, k, heap);
                }
            }
        }
    }

    /// Indices `j` with `|p_j - center| < radius`, ascending.
    pub fn ball_query(&self, center: Point3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if self.points.is_empty() || !(radius > 0.0) {
            return out;
        }
        self.ball_node(0, center, radius * radius, &mut out);
        out.sort_unstable();
        out
    }

    fn ball_node(&self, node: usize, q: Point3, r2: f64, out: &mut Vec<usize>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                out.extend(self.order[start..end].iter().copied().filter(|&i| q.dist2(self.points[i]) < r2));
            }
            Node::Split { axis, value, left, right } => {
                let diff = q.coord(axis) - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.ball_node(near, q, r2, out);
                if diff * diff < r2 {
                    self.ball_node(far, q, r2, out);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{brute_ball, brute_knn, random_cloud};
    use proptest::prelude::*;

    #[test]
    fn knn_exhaustive_returns_all() {
        let cloud = random_cloud(50, 1);
        let idx = NeighborIndex::build(cloud.points());
        let mut all = idx.knn(Point3::new(0.5, 0.5, 0.5), 50).unwrap();
        all.sort();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
        assert!(idx.knn(Point3::ORIGIN, 51).is_err());
    }

    #[test]
    fn knn_coincident_query() {
        let cloud = random_cloud(200, 2);
        let idx = NeighborIndex::build(cloud.points());
        assert_eq!(idx.knn(cloud.points()[17], 1).unwrap(), vec![17]);
    }

    #[test]
    fn knn_matches_oracle_500() {
        let cloud = random_cloud(500, 3);
        let idx = NeighborIndex::build(cloud.points());
        for q in random_cloud(20, 4).points() {
            assert_eq!(idx.knn(*q, 10).unwrap(), brute_knn(cloud.points(), *q, 10));
        }
    }

    #[test]
    fn ties_break_by_index() {
        // eight coincident points plus one far away
        let mut pts = vec![Point3::new(1.0, 1.0, 1.0); 30];
        pts.push(Point3::ORIGIN);
        let idx = NeighborIndex::build(&pts);
        assert_eq!(idx.knn(Point3::new(1.0, 1.0, 1.0), 5).unwrap(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn ball_query_extremes() {
        let cloud = random_cloud(100, 5);
        let idx = NeighborIndex::build(cloud.points());
        assert_eq!(idx.ball_query(Point3::new(0.5, 0.5, 0.5), 10.0), (0..100).collect::<Vec<_>>());
        assert!(idx.ball_query(Point3::new(0.5, 0.5, 0.5), 1e-9).is_empty());
    }

    #[test]
    fn ball_query_is_strict() {
        let pts = vec![Point3::ORIGIN, Point3::new(1.0, 0.0, 0.0)];
        let idx = NeighborIndex::build(&pts);
        assert_eq!(idx.ball_query(Point3::ORIGIN, 1.0), vec![0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn queries_equal_brute_force(seed in any::<u64>(), n in 1usize..300, k in 1usize..16, r in 0.01f64..0.6) {
            let cloud = random_cloud(n, seed);
            let idx = NeighborIndex::build(cloud.points());
            let q = random_cloud(1, seed ^ 0xabcdef).points()[0];
            let k = k.min(n);
            prop_assert_eq!(idx.knn(q, k).unwrap(), brute_knn(cloud.points(), q, k));
            prop_assert_eq!(idx.ball_query(q, r), brute_ball(cloud.points(), q, r));
        }
    }
}
