//! The Lagrange-multiplier system for `(c, g1, g2, w)` and the fitted smoother.
//!
//! Unknowns are interleaved per node as `[c, g1, g2, w]`. For interior nodes
//! `p, q` the 4×4 block is
//!
//! ```text
//! [ A_pq   0       0       L_pq   ]
//! [ 0      αL_pq   0      -G1_qp  ]
//! [ 0      0       αL_pq  -G2_qp  ]
//! [ L_pq  -G1_pq  -G2_pq   0      ]
//! ```
//!
//! Boundary nodes carry Dirichlet values for all four fields; their columns
//! are moved to the right-hand side.

use crate::assembly::{spmv, FemSystem};
use crate::error::{Error, Result};
use crate::geometry::{barycentric, Locator, Point2, TriMesh};
use crate::scalar::Real;
use crate::solver::{nested_dissection, solve_refined, BlockLdl, BlockMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sprs::CsMat;
use std::collections::BTreeMap;
use std::time::Instant;

/// Dirichlet values `[c, g1, g2, w]`, present exactly on boundary nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryValues<T> {
    values: Vec<Option<[T; 4]>>,
}

impl<T: Real> BoundaryValues<T> {
    pub fn from_fn(mesh: &TriMesh<T>, mut f: impl FnMut(usize) -> [T; 4]) -> Self {
        let values = (0..mesh.num_nodes())
            .map(|i| mesh.is_boundary(i).then(|| f(i)))
            .collect();
        BoundaryValues { values }
    }

    pub fn zeros(mesh: &TriMesh<T>) -> Self {
        Self::from_fn(mesh, |_| [T::zero(); 4])
    }

    pub fn from_options(values: Vec<Option<[T; 4]>>) -> Self {
        BoundaryValues { values }
    }

    pub fn get(&self, node: usize) -> Option<[T; 4]> {
        self.values.get(node).copied().flatten()
    }

    pub fn set(&mut self, node: usize, v: [T; 4]) {
        if node >= self.values.len() {
            self.values.resize(node + 1, None);
        }
        self.values[node] = Some(v);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Check that values are defined on exactly the boundary nodes.
    pub fn validate(&self, mesh: &TriMesh<T>) -> Result<()> {
        if self.values.len() != mesh.num_nodes() {
            return Err(Error::DimensionMismatch(format!(
                "boundary values for {} nodes, mesh has {}",
                self.values.len(),
                mesh.num_nodes()
            )));
        }
        for (i, v) in self.values.iter().enumerate() {
            if v.is_some() != mesh.is_boundary(i) {
                return Err(Error::DimensionMismatch(format!(
                    "boundary value presence mismatch at node {i}"
                )));
            }
        }
        Ok(())
    }
}

/// Interior-only saddle system after Dirichlet elimination.
#[derive(Clone, Debug)]
pub struct SaddleSystem<T> {
    pub matrix: BlockMatrix<T>,
    /// `[d; 0; 0; 0] - h` restricted to interior nodes, interleaved.
    pub rhs: Vec<T>,
    /// Eliminated boundary contributions `h`, interleaved per interior node.
    pub h: Vec<T>,
    interior: Vec<usize>,
    fixed: Vec<[T; 4]>,
    coords: Vec<[f64; 2]>,
    pub alpha: T,
}

#[inline]
fn block_mul_add<T: Real>(acc: &mut [T], b: &[T; 16], x: &[T; 4]) {
    for r in 0..4 {
        for c in 0..4 {
            acc[r] += b[r * 4 + c] * x[c];
        }
    }
}

impl<T: Real> SaddleSystem<T> {
    pub fn build(mesh: &TriMesh<T>, fem: &FemSystem<T>, alpha: T, bv: &BoundaryValues<T>) -> Result<Self> {
        let n = mesh.num_nodes();
        for (name, m) in [("A", &fem.a), ("L", &fem.l), ("G1", &fem.g1), ("G2", &fem.g2)] {
            if m.rows() != n || m.cols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{name} is {}x{}, mesh has {n} nodes",
                    m.rows(),
                    m.cols()
                )));
            }
        }
        if fem.d.len() != n {
            return Err(Error::DimensionMismatch("d length".into()));
        }
        if !(alpha > T::zero()) || !alpha.is_finite_value() {
            return Err(Error::InvalidConfig(format!("alpha must be positive, got {alpha}")));
        }
        bv.validate(mesh)?;
        let interior = mesh.interior_nodes();
        if interior.is_empty() {
            return Err(Error::SingularSystem("no interior nodes; every unknown is fixed".into()));
        }
        let mut index = vec![usize::MAX; n];
        for (i, &p) in interior.iter().enumerate() {
            index[p] = i;
        }
        let fixed: Vec<[T; 4]> = (0..n).map(|i| bv.get(i).unwrap_or([T::zero(); 4])).collect();
        let g1t: CsMat<T> = fem.g1.transpose_view().to_csr();
        let g2t: CsMat<T> = fem.g2.transpose_view().to_csr();

        let rows: Vec<(Vec<(usize, Vec<T>)>, [T; 4])> = interior
            .par_iter()
            .map(|&p| {
                let mut blocks: BTreeMap<usize, [T; 16]> = BTreeMap::new();
                let mut put = |m: &CsMat<T>, f: &mut dyn FnMut(&mut [T; 16], T)| {
                    if let Some(row) = m.outer_view(p) {
                        for (q, &v) in row.iter() {
                            f(blocks.entry(q).or_insert([T::zero(); 16]), v);
                        }
                    }
                };
                put(&fem.l, &mut |b, v| {
                    b[3] = v;
                    b[12] = v;
                    b[5] = alpha * v;
                    b[10] = alpha * v;
                });
                put(&fem.a, &mut |b, v| b[0] = v);
                put(&fem.g1, &mut |b, v| b[13] = -v);
                put(&g1t, &mut |b, v| b[7] = -v);
                put(&fem.g2, &mut |b, v| b[14] = -v);
                put(&g2t, &mut |b, v| b[11] = -v);
                let mut h = [T::zero(); 4];
                let mut row = Vec::with_capacity(blocks.len());
                for (q, b) in blocks {
                    if index[q] == usize::MAX {
                        block_mul_add(&mut h, &b, &fixed[q]);
                    } else {
                        row.push((index[q], b.to_vec()));
                    }
                }
                (row, h)
            })
            .collect();

        let mut matrix_rows = Vec::with_capacity(rows.len());
        let mut rhs = Vec::with_capacity(4 * rows.len());
        let mut h_all = Vec::with_capacity(4 * rows.len());
        for ((row, h), &p) in rows.into_iter().zip(&interior) {
            matrix_rows.push(row);
            rhs.extend_from_slice(&[fem.d[p] - h[0], -h[1], -h[2], -h[3]]);
            h_all.extend_from_slice(&h);
        }
        let coords = interior
            .iter()
            .map(|&p| {
                let x = mesh.node(p);
                [x.x.as_f64(), x.y.as_f64()]
            })
            .collect();
        Ok(SaddleSystem {
            matrix: BlockMatrix::from_rows(4, matrix_rows)?,
            rhs,
            h: h_all,
            interior,
            fixed,
            coords,
            alpha,
        })
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    /// Right-hand side `[v; 0; 0; 0]` for a nodal data vector `v` with no
    /// boundary contribution.
    pub fn homogeneous_rhs(&self, v: &[T]) -> Vec<T> {
        let mut rhs = vec![T::zero(); 4 * self.interior.len()];
        for (i, &p) in self.interior.iter().enumerate() {
            rhs[4 * i] = v[p];
        }
        rhs
    }

    pub fn factor(&self) -> Result<SaddleFactor<T>> {
        let perm = nested_dissection(&self.matrix, &self.coords);
        let ldl = BlockLdl::factor(&self.matrix, &perm)?;
        Ok(SaddleFactor { ldl })
    }

    /// Nodal fields from an interior solution; boundary nodes keep their
    /// Dirichlet values (zero when `homogeneous`).
    pub fn expand(&self, x: &[T], homogeneous: bool) -> [Vec<T>; 4] {
        let n = self.fixed.len();
        let mut out: [Vec<T>; 4] = std::array::from_fn(|_| vec![T::zero(); n]);
        if !homogeneous {
            for (p, v) in self.fixed.iter().enumerate() {
                for k in 0..4 {
                    out[k][p] = v[k];
                }
            }
        }
        for (i, &p) in self.interior.iter().enumerate() {
            for k in 0..4 {
                out[k][p] = x[4 * i + k];
            }
        }
        out
    }

    pub fn max_iterations(&self) -> usize {
        20 * self.fixed.len().max(1)
    }
}

/// Factorization of a [`SaddleSystem`] reusable across right-hand sides.
#[derive(Clone, Debug)]
pub struct SaddleFactor<T> {
    ldl: BlockLdl<T>,
}

impl<T: Real> SaddleFactor<T> {
    pub fn solve(&self, system: &SaddleSystem<T>, rhs: &[T]) -> Result<(Vec<T>, crate::solver::SolveInfo)> {
        solve_refined(
            &system.matrix,
            &self.ldl,
            rhs,
            T::solve_tolerance(),
            system.max_iterations(),
        )
    }

    pub fn factor_nnz(&self) -> usize {
        self.ldl.factor_nnz()
    }
}

/// Diagnostics of one smoother fit.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub relative_residual: f64,
    pub refinement_steps: usize,
    pub minres_iterations: usize,
    pub system_nnz: usize,
    pub factor_nnz: usize,
    pub constraint_residual: f64,
    /// Wall time of factorization and solve, in seconds.
    pub solve_time_s: f64,
}

/// Fitted smoother `s(x) = b(x)ᵀ c` with gradient surrogates `g1, g2`.
#[derive(Clone, Debug)]
pub struct Smoother<T> {
    mesh: TriMesh<T>,
    locator: Locator<T>,
    pub c: Vec<T>,
    pub g1: Vec<T>,
    pub g2: Vec<T>,
    pub w: Vec<T>,
    pub alpha: T,
    pub diagnostics: SolveDiagnostics,
}

impl<T: Real> Smoother<T> {
    /// Build, factor and solve the system for one `alpha`.
    pub fn fit(mesh: &TriMesh<T>, fem: &FemSystem<T>, alpha: T, bv: &BoundaryValues<T>) -> Result<Self> {
        let system = SaddleSystem::build(mesh, fem, alpha, bv)?;
        let start = Instant::now();
        let factor = system.factor()?;
        Self::from_factor(mesh, fem, &system, &factor, start)
    }

    /// Solve with an existing factorization of `system`.
    pub fn from_factor(
        mesh: &TriMesh<T>,
        fem: &FemSystem<T>,
        system: &SaddleSystem<T>,
        factor: &SaddleFactor<T>,
        start: Instant,
    ) -> Result<Self> {
        let (x, info) = factor.solve(system, &system.rhs)?;
        let solve_time_s = start.elapsed().as_secs_f64();
        let [c, g1, g2, w] = system.expand(&x, false);
        let mut s = Smoother {
            mesh: mesh.clone(),
            locator: Locator::new(mesh),
            c,
            g1,
            g2,
            w,
            alpha: system.alpha,
            diagnostics: SolveDiagnostics {
                relative_residual: info.relative_residual,
                refinement_steps: info.refinement_steps,
                minres_iterations: info.minres_iterations,
                system_nnz: system.matrix.nnz(),
                factor_nnz: factor.factor_nnz(),
                constraint_residual: 0.0,
                solve_time_s,
            },
        };
        s.diagnostics.constraint_residual = s.constraint_residual(fem).as_f64();
        Ok(s)
    }

    /// Assemble from given nodal fields (no solve).
    pub fn from_fields(mesh: &TriMesh<T>, fields: [Vec<T>; 4], alpha: T) -> Result<Self> {
        if fields.iter().any(|f| f.len() != mesh.num_nodes()) {
            return Err(Error::DimensionMismatch("field length".into()));
        }
        let [c, g1, g2, w] = fields;
        Ok(Smoother {
            mesh: mesh.clone(),
            locator: Locator::new(mesh),
            c,
            g1,
            g2,
            w,
            alpha,
            diagnostics: SolveDiagnostics::default(),
        })
    }

    pub fn mesh(&self) -> &TriMesh<T> {
        &self.mesh
    }

    pub fn locator(&self) -> &Locator<T> {
        &self.locator
    }

    /// Nodal values `[c, g1, g2, w]` of node `i`.
    pub fn node_values(&self, i: usize) -> [T; 4] {
        [self.c[i], self.g1[i], self.g2[i], self.w[i]]
    }

    fn interpolate(&self, p: Point2<T>, field: &[T]) -> Result<T> {
        let (t, l) = self.locator.locate_with_bary(&self.mesh, p).ok_or(Error::OutsideDomain)?;
        let nodes = self.mesh.triangle(t).nodes;
        Ok((0..3).map(|k| l[k] * field[nodes[k]]).sum())
    }

    pub fn evaluate(&self, p: Point2<T>) -> Result<T> {
        self.interpolate(p, &self.c)
    }

    /// Interpolated gradient surrogate `(u1, u2)`.
    pub fn evaluate_grad(&self, p: Point2<T>) -> Result<(T, T)> {
        Ok((self.interpolate(p, &self.g1)?, self.interpolate(p, &self.g2)?))
    }

    /// Piecewise-constant gradient of `s` on triangle `t`.
    pub fn element_gradient(&self, t: usize) -> Result<[T; 2]> {
        element_gradient(&self.mesh, &self.c, t)
    }

    /// `s` at each data point (`None` outside the domain).
    pub fn predict(&self, points: &[Point2<T>]) -> Vec<Option<T>> {
        points.iter().map(|&p| self.evaluate(p).ok()).collect()
    }

    pub fn rmse(&self, points: &[Point2<T>], values: &[T]) -> T {
        let (sum, count) = self
            .predict(points)
            .iter()
            .zip(values)
            .filter_map(|(s, y)| s.map(|s| (s - *y) * (s - *y)))
            .fold((T::zero(), 0usize), |(a, n), e| (a + e, n + 1));
        if count == 0 {
            T::zero()
        } else {
            (sum / T::from_usize_lossy(count)).sqrt()
        }
    }

    pub fn max_abs_residual(&self, points: &[Point2<T>], values: &[T]) -> T {
        self.predict(points)
            .iter()
            .zip(values)
            .filter_map(|(s, y)| s.map(|s| (s - *y).abs()))
            .fold(T::zero(), |a, e| a.max(e))
    }

    /// `‖L c − G1 g1 − G2 g2‖∞` over interior rows.
    pub fn constraint_residual(&self, fem: &FemSystem<T>) -> T {
        let lc = spmv(&fem.l, &self.c);
        let a = spmv(&fem.g1, &self.g1);
        let b = spmv(&fem.g2, &self.g2);
        (0..lc.len())
            .filter(|&i| !self.mesh.is_boundary(i))
            .map(|i| (lc[i] - a[i] - b[i]).abs())
            .fold(T::zero(), |m, v| m.max(v))
    }
}

/// Gradient of the piecewise linear interpolant of `field` on triangle `t`.
pub fn element_gradient<T: Real>(mesh: &TriMesh<T>, field: &[T], t: usize) -> Result<[T; 2]> {
    let (g, _) = crate::assembly::basis_gradients(mesh, t)?;
    let nodes = mesh.triangle(t).nodes;
    let mut out = [T::zero(); 2];
    for k in 0..3 {
        out[0] += g[k][0] * field[nodes[k]];
        out[1] += g[k][1] * field[nodes[k]];
    }
    Ok(out)
}

/// Linear interpolation of nodal values inside triangle `t`.
pub fn interpolate_in<T: Real>(mesh: &TriMesh<T>, field: &[T], t: usize, p: Point2<T>) -> T {
    let [a, b, c] = mesh.vertices(t);
    let l = barycentric(a, b, c, p);
    let nodes = mesh.triangle(t).nodes;
    (0..3).map(|k| l[k] * field[nodes[k]]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DataSet;
    use crate::geometry::Triangle;
    use nalgebra::{DMatrix, DVector};

    fn to_dense(m: &CsMat<f64>) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(m.rows(), m.cols());
        for (i, row) in m.outer_iterator().enumerate() {
            for (j, &v) in row.iter() {
                d[(i, j)] += v;
            }
        }
        d
    }

    /// Full 4n system solved densely with boundary rows replaced by identity.
    fn dense_oracle(mesh: &TriMesh<f64>, fem: &FemSystem<f64>, alpha: f64, bv: &BoundaryValues<f64>) -> Vec<[f64; 4]> {
        let n = mesh.num_nodes();
        let (a, l, g1, g2) = (to_dense(&fem.a), to_dense(&fem.l), to_dense(&fem.g1), to_dense(&fem.g2));
        let mut m = DMatrix::zeros(4 * n, 4 * n);
        let mut rhs = DVector::zeros(4 * n);
        for p in 0..n {
            if mesh.is_boundary(p) {
                let v = bv.get(p).unwrap();
                for k in 0..4 {
                    m[(4 * p + k, 4 * p + k)] = 1.0;
                    rhs[4 * p + k] = v[k];
                }
                continue;
            }
            rhs[4 * p] = fem.d[p];
            for q in 0..n {
                m[(4 * p, 4 * q)] = a[(p, q)];
                m[(4 * p, 4 * q + 3)] = l[(p, q)];
                m[(4 * p + 1, 4 * q + 1)] = alpha * l[(p, q)];
                m[(4 * p + 1, 4 * q + 3)] = -g1[(q, p)];
                m[(4 * p + 2, 4 * q + 2)] = alpha * l[(p, q)];
                m[(4 * p + 2, 4 * q + 3)] = -g2[(q, p)];
                m[(4 * p + 3, 4 * q)] = l[(p, q)];
                m[(4 * p + 3, 4 * q + 1)] = -g1[(p, q)];
                m[(4 * p + 3, 4 * q + 2)] = -g2[(p, q)];
            }
        }
        let x = m.lu().solve(&rhs).unwrap();
        (0..n).map(|p| [x[4 * p], x[4 * p + 1], x[4 * p + 2], x[4 * p + 3]]).collect()
    }

    fn linear_data(a: f64, b: f64, c: f64, n: usize) -> DataSet<f64> {
        let pts: Vec<Point2<f64>> = (0..n)
            .map(|i| {
                let t = i as f64;
                Point2::new((t * 0.618_034).fract(), (t * 0.754_878 + 0.1).fract())
            })
            .collect();
        let vals = pts.iter().map(|p| a + b * p.x + c * p.y).collect();
        DataSet::new(pts, vals).unwrap()
    }

    #[test]
    fn symmetric_and_zero_h_for_zero_boundary() {
        let mesh = TriMesh::<f64>::square(0);
        let data = linear_data(0.1, 0.2, 0.3, 200);
        let fem = FemSystem::assemble(&mesh, &Locator::new(&mesh), &data).unwrap();
        let sys = SaddleSystem::build(&mesh, &fem, 0.01, &BoundaryValues::zeros(&mesh)).unwrap();
        assert_eq!(sys.matrix.asymmetry(), 0.0, "{:e}", sys.matrix.asymmetry());
        assert!(sys.h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_dense_oracle() {
        let mesh = TriMesh::<f64>::square(0);
        let data = linear_data(0.3, -1.0, 2.0, 50);
        let data = DataSet::new(
            data.points.clone(),
            data.values.iter().enumerate().map(|(i, v)| v + (i as f64).sin() * 0.1).collect(),
        )
        .unwrap();
        let fem = FemSystem::assemble(&mesh, &Locator::new(&mesh), &data).unwrap();
        let bv = BoundaryValues::from_fn(&mesh, |i| {
            let p = mesh.node(i);
            [p.x * p.y, 0.3, -0.2, 0.01 * p.x]
        });
        for alpha in [1e-6, 1e-2, 1.0] {
            let s = Smoother::fit(&mesh, &fem, alpha, &bv).unwrap();
            let oracle = dense_oracle(&mesh, &fem, alpha, &bv);
            for p in 0..mesh.num_nodes() {
                let got = s.node_values(p);
                for k in 0..4 {
                    let o = oracle[p][k];
                    assert!((got[k] - o).abs() <= 1e-10 * (1.0 + o.abs()), "node {p} field {k}: {} vs {o}", got[k]);
                }
            }
        }
    }

    #[test]
    fn single_point_near_interpolation() {
        let mesh = TriMesh::<f64>::square(0);
        let k = (0..mesh.num_nodes())
            .find(|&i| mesh.node(i) == Point2::new(0.5, 0.5))
            .unwrap();
        let data = DataSet::new(vec![mesh.node(k)], vec![1.0]).unwrap();
        let fem = FemSystem::assemble(&mesh, &Locator::new(&mesh), &data).unwrap();
        let bv = BoundaryValues::zeros(&mesh);
        let s = Smoother::fit(&mesh, &fem, 1e-8, &bv).unwrap();
        let oracle = dense_oracle(&mesh, &fem, 1e-8, &bv);
        assert!((s.c[k] - oracle[k][0]).abs() < 1e-10);
        assert!((s.c[k] - 1.0).abs() < 1e-3, "{}", s.c[k]);
    }

    #[test]
    fn reproduces_linear_field() {
        for (k, (a, b, c)) in [(0.5, 1.0, -2.0), (-1.0, 0.3, 0.7), (2.0, -4.0, 1.5)].into_iter().enumerate() {
            let mut mesh = TriMesh::<f64>::square(0);
            for _ in 0..k {
                mesh.uniform_pass();
            }
            let data = linear_data(a, b, c, 300);
            let fem = FemSystem::assemble(&mesh, &Locator::new(&mesh), &data).unwrap();
            let bv = BoundaryValues::from_fn(&mesh, |i| {
                let p = mesh.node(i);
                [a + b * p.x + c * p.y, b, c, 0.0]
            });
            for alpha in [1e-8, 1e-4, 1.0] {
                let s = Smoother::fit(&mesh, &fem, alpha, &bv).unwrap();
                for i in 0..mesh.num_nodes() {
                    let p = mesh.node(i);
                    assert!((s.c[i] - (a + b * p.x + c * p.y)).abs() < 1e-8);
                }
                assert!(s.rmse(&data.points, &data.values) < 1e-8);
                assert!(s.diagnostics.constraint_residual <= 1e-8 * (1.0 + 3.0));
            }
        }
    }

    #[test]
    fn no_interior_nodes_is_singular() {
        let mesh = TriMesh::from_parts(
            vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)],
            vec![Triangle::new([0, 1, 2], 0)],
        )
        .unwrap();
        let data = DataSet::new(vec![Point2::new(0.2, 0.2)], vec![1.0]).unwrap();
        let fem = FemSystem::assemble(&mesh, &Locator::new(&mesh), &data).unwrap();
        assert!(matches!(
            Smoother::fit(&mesh, &fem, 1.0, &BoundaryValues::zeros(&mesh)),
            Err(Error::SingularSystem(_))
        ));
    }

    #[test]
    fn evaluation_at_nodes_and_midpoints() {
        let mesh = TriMesh::<f64>::square(0);
        let c: Vec<f64> = (0..mesh.num_nodes()).map(|i| (i as f64 * 0.7).sin()).collect();
        let z = vec![0.0; mesh.num_nodes()];
        let s = Smoother::from_fields(&mesh, [c.clone(), z.clone(), z.clone(), z], 1.0).unwrap();
        for i in 0..mesh.num_nodes() {
            assert!((s.evaluate(mesh.node(i)).unwrap() - c[i]).abs() < 1e-14);
        }
        for e in mesh.edge_keys() {
            let [a, b] = e.nodes();
            let m = mesh.node(a).midpoint(mesh.node(b));
            assert!((s.evaluate(m).unwrap() - 0.5 * (c[a] + c[b])).abs() < 1e-14);
        }
        assert!(matches!(s.evaluate(Point2::new(2.0, 0.0)), Err(Error::OutsideDomain)));
    }

    #[test]
    fn constant_smoother_rmse() {
        let mesh = TriMesh::<f64>::square(0);
        let z = vec![0.0; mesh.num_nodes()];
        let s = Smoother::from_fields(&mesh, [z.clone(), z.clone(), z.clone(), z], 1.0).unwrap();
        let pts = vec![Point2::new(0.3, 0.3), Point2::new(0.6, 0.1)];
        assert_eq!(s.rmse(&pts, &[0.5, 0.5]), 0.5);
        assert_eq!(s.max_abs_residual(&pts, &[0.5, 0.5]), 0.5);
    }
}
