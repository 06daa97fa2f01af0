//! Nearest-neighbour and range queries over a fixed point set.

use crate::geometry::Point2;
use crate::scalar::Real;
use rstar::primitives::GeomWithData;
use rstar::RTree;

type Entry = GeomWithData<[f64; 2], usize>;

/// R-tree over point indices. Coordinates are kept in `f64`.
pub struct PointIndex {
    tree: RTree<Entry>,
}

impl PointIndex {
    pub fn new<T: Real>(points: &[Point2<T>]) -> Self {
        let entries = points
            .iter()
            .enumerate()
            .map(|(i, p)| Entry::new([p.x.as_f64(), p.y.as_f64()], i))
            .collect();
        PointIndex {
            tree: RTree::bulk_load(entries),
        }
    }

    pub fn len(&self) -> usize {
        self.tree.size()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.size() == 0
    }

    /// Nearest point; ties resolve to the lowest index.
    pub fn nearest(&self, p: [f64; 2]) -> Option<(usize, f64)> {
        let mut iter = self.tree.nearest_neighbor_iter_with_distance_2(&p);
        let (first, d0) = iter.next()?;
        let mut best = first.data;
        for (e, d2) in iter {
            if d2 > d0 {
                break;
            }
            best = best.min(e.data);
        }
        Some((best, d0.sqrt()))
    }

    /// Distance from `p` to its `k`-th nearest indexed point (1-based).
    pub fn kth_distance(&self, p: [f64; 2], k: usize) -> Option<f64> {
        self.tree
            .nearest_neighbor_iter_with_distance_2(&p)
            .nth(k.checked_sub(1)?)
            .map(|(_, d2)| d2.sqrt())
    }

    /// Distance from point `i` (located at `p`) to the nearest other point.
    pub fn nearest_other(&self, i: usize, p: [f64; 2]) -> Option<f64> {
        self.tree
            .nearest_neighbor_iter_with_distance_2(&p)
            .find(|(e, _)| e.data != i)
            .map(|(_, d2)| d2.sqrt())
    }

    /// Indices of points with distance strictly below `r`, sorted.
    pub fn within(&self, p: [f64; 2], r: f64) -> Vec<usize> {
        let r2 = r * r;
        let mut out: Vec<usize> = self
            .tree
            .locate_within_distance(p, r2)
            .filter(|e| {
                let [x, y] = *e.geom();
                (x - p[0]).powi(2) + (y - p[1]).powi(2) < r2
            })
            .map(|e| e.data)
            .collect();
        out.sort_unstable();
        out
    }
}

/// Largest nearest-neighbour gap of a point set (0 for fewer than two points).
pub fn max_nearest_gap<T: Real>(points: &[Point2<T>]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let index = PointIndex::new(points);
    points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| index.nearest_other(i, [p.x.as_f64(), p.y.as_f64()]))
        .fold(0.0, f64::max)
}
