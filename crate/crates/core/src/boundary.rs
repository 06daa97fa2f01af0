//! Dirichlet values for the boundary nodes.
//!
//! The trace kept per boundary node is `(c, g1, g2, proxy)`; the `w` value
//! handed to the solver is `−α · proxy`, so the trace survives changes of
//! `α` between iterations.

use crate::error::{Error, Result};
use crate::geometry::{Point2, TriMesh};
use crate::saddle::BoundaryValues;
use crate::scalar::Real;
use crate::tps::TpsModel;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    TpsApproximation,
    NodalAverage,
    Constant,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BoundaryStrategy<T> {
    /// Every boundary node, old or new, is evaluated from the TPS.
    TpsApproximation(TpsModel<T>),
    /// Initial boundary from the TPS, new boundary nodes average the
    /// endpoints of the bisected edge.
    NodalAverage(TpsModel<T>),
    /// `c` fixed to a value, derivatives and `w` zero.
    Constant(T),
}

impl<T: Real> BoundaryStrategy<T> {
    pub fn kind(&self) -> BoundaryKind {
        match self {
            BoundaryStrategy::TpsApproximation(_) => BoundaryKind::TpsApproximation,
            BoundaryStrategy::NodalAverage(_) => BoundaryKind::NodalAverage,
            BoundaryStrategy::Constant(_) => BoundaryKind::Constant,
        }
    }

    /// Trace value at a point not created by bisection.
    fn initial_trace(&self, p: Point2<T>) -> [T; 4] {
        match self {
            BoundaryStrategy::TpsApproximation(tps) | BoundaryStrategy::NodalAverage(tps) => tps_trace(tps, p),
            BoundaryStrategy::Constant(v) => [*v, T::zero(), T::zero(), T::zero()],
        }
    }
}

/// `(t, ∂t/∂x₁, ∂t/∂x₂, proxy)` at `p`.
pub fn tps_trace<T: Real>(tps: &TpsModel<T>, p: Point2<T>) -> [T; 4] {
    let g = tps.eval_grad(p);
    [tps.eval(p), g[0], g[1], tps.eval_laplacian_proxy(p)]
}

#[inline]
fn with_alpha<T: Real>(trace: [T; 4], alpha: T) -> [T; 4] {
    [trace[0], trace[1], trace[2], -alpha * trace[3]]
}

pub fn initial_boundary_values<T: Real>(mesh: &TriMesh<T>, tps: &TpsModel<T>, alpha: T) -> BoundaryValues<T> {
    BoundaryValues::from_fn(mesh, |i| with_alpha(tps_trace(tps, mesh.node(i)), alpha))
}

/// Trace for a boundary node created by bisecting the edge between
/// `neighbors` (their traces). The last slot is the proxy, not `w`.
pub fn new_boundary_node_values<T: Real>(
    strategy: &BoundaryStrategy<T>,
    mesh: &TriMesh<T>,
    new_node: usize,
    neighbors: &[[T; 4]],
) -> Result<[T; 4]> {
    if neighbors.is_empty() {
        return Err(Error::NoNeighbors);
    }
    Ok(match strategy {
        BoundaryStrategy::NodalAverage(_) => {
            let k = T::from_usize_lossy(neighbors.len());
            let mut m = [T::zero(); 4];
            for v in neighbors {
                for (a, b) in m.iter_mut().zip(v) {
                    *a += *b;
                }
            }
            m.map(|a| a / k)
        }
        _ => strategy.initial_trace(mesh.node(new_node)),
    })
}

/// Boundary trace of a mesh, maintained through refinement.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryTrace<T> {
    values: Vec<Option<[T; 4]>>,
}

impl<T: Real> BoundaryTrace<T> {
    pub fn initial(mesh: &TriMesh<T>, strategy: &BoundaryStrategy<T>) -> Self {
        let values = (0..mesh.num_nodes())
            .map(|i| mesh.is_boundary(i).then(|| strategy.initial_trace(mesh.node(i))))
            .collect();
        BoundaryTrace { values }
    }

    /// Fill in nodes added to `mesh` since the trace was last updated.
    /// `new_nodes` must be in creation order so endpoints are known first.
    pub fn extend(&mut self, mesh: &TriMesh<T>, strategy: &BoundaryStrategy<T>, new_nodes: &[usize]) -> Result<()> {
        self.values.resize(mesh.num_nodes(), None);
        for &i in new_nodes {
            if !mesh.is_boundary(i) {
                continue;
            }
            let ends = mesh.origin(i).ok_or(Error::NoNeighbors)?;
            let nb: Vec<[T; 4]> = ends.iter().filter_map(|&e| self.get(e)).collect();
            let v = new_boundary_node_values(strategy, mesh, i, &nb)?;
            self.values[i] = Some(v);
        }
        Ok(())
    }

    pub fn get(&self, node: usize) -> Option<[T; 4]> {
        self.values.get(node).copied().flatten()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self, alpha: T) -> BoundaryValues<T> {
        BoundaryValues::from_options(self.values.iter().map(|v| v.map(|t| with_alpha(t, alpha))).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tps::fit_tps;

    fn affine_tps() -> TpsModel<f64> {
        let c = vec![
            Point2::new(0.1, 0.1),
            Point2::new(0.9, 0.2),
            Point2::new(0.4, 0.8),
            Point2::new(0.6, 0.5),
        ];
        let y: Vec<f64> = c.iter().map(|p| 0.3 + p.x - 0.5 * p.y).collect();
        fit_tps(&c, &y, 0.0).unwrap()
    }

    #[test]
    fn affine_tps_gives_zero_w() {
        let mesh = TriMesh::<f64>::square(1);
        let bv = initial_boundary_values(&mesh, &affine_tps(), 0.1);
        for i in mesh.boundary_nodes() {
            let v = bv.get(i).unwrap();
            let p = mesh.node(i);
            assert!((v[0] - (0.3 + p.x - 0.5 * p.y)).abs() < 1e-10);
            assert!(v[3].abs() < 1e-10);
        }
        bv.validate(&mesh).unwrap();
    }

    #[test]
    fn tps_center_on_boundary_node_is_interpolated() {
        let mesh = TriMesh::<f64>::square(0);
        let c = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.3, 0.7),
            Point2::new(0.6, 0.2),
        ];
        let y = vec![0.7, -0.1, 0.4, 0.25];
        let tps = fit_tps(&c, &y, 0.0).unwrap();
        let bv = initial_boundary_values(&mesh, &tps, 0.5);
        let node = (0..mesh.num_nodes())
            .find(|&i| mesh.node(i) == Point2::new(0.0, 0.0))
            .unwrap();
        assert!((bv.get(node).unwrap()[0] - 0.7).abs() < 1e-10);
    }

    #[test]
    fn average_of_endpoints() {
        let mesh = TriMesh::<f64>::square(0);
        let s = BoundaryStrategy::NodalAverage(affine_tps());
        let v = new_boundary_node_values(&s, &mesh, 0, &[[0.2, 1.0, 0.0, 2.0], [0.4, 3.0, 1.0, 0.0]]).unwrap();
        assert!((v[0] - 0.3).abs() < 1e-15);
        assert_eq!(&v[1..], &[2.0, 0.5, 1.0]);
        assert!(matches!(
            new_boundary_node_values(&s, &mesh, 0, &[]),
            Err(Error::NoNeighbors)
        ));
    }

    #[test]
    fn nodal_average_keeps_the_piecewise_linear_trace() {
        let mut mesh = TriMesh::<f64>::square(0);
        let tps = {
            let c: Vec<Point2<f64>> = [(0.1, 0.2), (0.8, 0.3), (0.5, 0.9), (0.3, 0.6), (0.7, 0.7)]
                .iter()
                .map(|&(x, y)| Point2::new(x, y))
                .collect();
            let y: Vec<f64> = c.iter().map(|p| (4.0 * p.x).sin() + p.y * p.y).collect();
            fit_tps(&c, &y, 0.0).unwrap()
        };
        let s = BoundaryStrategy::NodalAverage(tps);
        let mut trace = BoundaryTrace::initial(&mesh, &s);
        let before: Vec<(Point2<f64>, f64)> = mesh
            .boundary_nodes()
            .into_iter()
            .map(|i| (mesh.node(i), trace.get(i).unwrap()[0]))
            .collect();
        for _ in 0..4 {
            let created = mesh.uniform_pass();
            trace.extend(&mesh, &s, &created).unwrap();
        }
        for &(p, v) in &before {
            let i = (0..mesh.num_nodes()).find(|&i| mesh.node(i) == p).unwrap();
            assert_eq!(trace.get(i).unwrap()[0], v);
        }
        // New boundary values are exact chord values of their edge.
        for i in mesh.boundary_nodes() {
            if let Some([a, b]) = mesh.origin(i) {
                let expect = 0.5 * (trace.get(a).unwrap()[0] + trace.get(b).unwrap()[0]);
                assert_eq!(trace.get(i).unwrap()[0], expect);
            }
        }
        trace.values(1e-3).validate(&mesh).unwrap();
    }

    #[test]
    fn strategies_agree_for_affine_tps() {
        let tps = affine_tps();
        let a = BoundaryStrategy::NodalAverage(tps.clone());
        let b = BoundaryStrategy::TpsApproximation(tps);
        let mut mesh = TriMesh::<f64>::square(1);
        let mut ta = BoundaryTrace::initial(&mesh, &a);
        let mut tb = BoundaryTrace::initial(&mesh, &b);
        for _ in 0..3 {
            let created = mesh.uniform_pass();
            ta.extend(&mesh, &a, &created).unwrap();
            tb.extend(&mesh, &b, &created).unwrap();
        }
        for i in mesh.boundary_nodes() {
            let (x, y) = (ta.get(i).unwrap(), tb.get(i).unwrap());
            for k in 0..4 {
                assert!((x[k] - y[k]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn alpha_scales_w_only() {
        let mesh = TriMesh::<f64>::square(0);
        let c: Vec<Point2<f64>> = [(0.1, 0.2), (0.8, 0.3), (0.5, 0.9), (0.3, 0.6)]
            .iter()
            .map(|&(x, y)| Point2::new(x, y))
            .collect();
        let tps = fit_tps(&c, &[0.0, 1.0, 0.0, 2.0], 0.0).unwrap();
        let trace = BoundaryTrace::initial(&mesh, &BoundaryStrategy::TpsApproximation(tps.clone()));
        let v1 = trace.values(1.0);
        let v2 = trace.values(2.0);
        let direct = initial_boundary_values(&mesh, &tps, 2.0);
        for i in mesh.boundary_nodes() {
            let (a, b) = (v1.get(i).unwrap(), v2.get(i).unwrap());
            assert_eq!(a[..3], b[..3]);
            assert!((2.0 * a[3] - b[3]).abs() < 1e-12);
            assert_eq!(direct.get(i).unwrap(), b);
        }
    }
}
