//! Piecewise linear basis functions and the sparse matrices of the smoother.
//!
//! All element integrals are closed form: for linear elements the basis
//! gradients are constant per triangle and `∫ b_p = area / 3`.

use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::geometry::{barycentric, orient2, Locator, Point2, TriMesh, BARY_TOL};
use crate::scalar::Real;
use sprs::{CsMat, TriMat};

/// Coordinate direction of a gradient operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X1,
    X2,
}

impl Axis {
    fn index(self) -> usize {
        match self {
            Axis::X1 => 0,
            Axis::X2 => 1,
        }
    }
}

/// Values and gradients of the three nodal basis functions of one triangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BasisEval<T> {
    pub values: [T; 3],
    pub grads: [[T; 2]; 3],
}

/// Constant gradients of the barycentric coordinates and the triangle area.
pub fn basis_gradients<T: Real>(mesh: &TriMesh<T>, t: usize) -> Result<([[T; 2]; 3], T)> {
    let [a, b, c] = mesh.vertices(t);
    let det = orient2(a, b, c);
    let area = det * T::lit(0.5);
    if area < T::lit(1e-14) {
        return Err(Error::DegenerateTriangle {
            tri: t,
            area: area.as_f64(),
        });
    }
    let g = [
        [(b.y - c.y) / det, (c.x - b.x) / det],
        [(c.y - a.y) / det, (a.x - c.x) / det],
        [(a.y - b.y) / det, (b.x - a.x) / det],
    ];
    Ok((g, area))
}

pub fn basis_eval<T: Real>(mesh: &TriMesh<T>, t: usize, p: Point2<T>) -> Result<BasisEval<T>> {
    let [a, b, c] = mesh.vertices(t);
    let values = barycentric(a, b, c, p);
    if values.iter().any(|&v| v < -T::lit(BARY_TOL)) {
        return Err(Error::OutsideTriangle(t));
    }
    let (grads, _) = basis_gradients(mesh, t)?;
    Ok(BasisEval { values, grads })
}

/// Stiffness matrix `L_pq = ∫ ∇b_p · ∇b_q`.
pub fn assemble_laplacian<T: Real>(mesh: &TriMesh<T>) -> Result<CsMat<T>> {
    let n = mesh.num_nodes();
    let mut tri = TriMat::with_capacity((n, n), 9 * mesh.num_triangles());
    for t in 0..mesh.num_triangles() {
        let (g, area) = basis_gradients(mesh, t)?;
        let nodes = mesh.triangle(t).nodes;
        for i in 0..3 {
            for j in 0..3 {
                let v = area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                tri.add_triplet(nodes[i], nodes[j], v);
            }
        }
    }
    Ok(mirror_upper(&tri.to_csr()))
}

/// Copy the upper triangle onto the lower one so that the matrix is
/// symmetric bit for bit, whatever order duplicates were summed in.
fn mirror_upper<T: Real>(m: &CsMat<T>) -> CsMat<T> {
    let mut tri = TriMat::with_capacity((m.rows(), m.cols()), m.nnz());
    for (i, row) in m.outer_iterator().enumerate() {
        for (j, &v) in row.iter() {
            let v = if i <= j { v } else { *m.get(j, i).unwrap_or(&v) };
            tri.add_triplet(i, j, v);
        }
    }
    tri.to_csr()
}

/// Gradient matrix `(G_j)_pq = ∫ b_p ∂_j b_q`.
pub fn assemble_gradient<T: Real>(mesh: &TriMesh<T>, axis: Axis) -> Result<CsMat<T>> {
    let n = mesh.num_nodes();
    let k = axis.index();
    let third = T::one() / T::lit(3.0);
    let mut tri = TriMat::with_capacity((n, n), 9 * mesh.num_triangles());
    for t in 0..mesh.num_triangles() {
        let (g, area) = basis_gradients(mesh, t)?;
        let nodes = mesh.triangle(t).nodes;
        for p in 0..3 {
            for q in 0..3 {
                tri.add_triplet(nodes[p], nodes[q], area * third * g[q][k]);
            }
        }
    }
    Ok(tri.to_csr())
}

/// Location of each data point in the mesh (`None` when outside the domain).
#[derive(Clone, Debug)]
pub struct DataProjection<T> {
    pub located: Vec<Option<(usize, [T; 3])>>,
    pub used: usize,
    pub dropped: usize,
}

impl<T: Real> DataProjection<T> {
    pub fn new(mesh: &TriMesh<T>, locator: &Locator<T>, points: &[Point2<T>]) -> Self {
        let located: Vec<_> = points
            .iter()
            .map(|&p| locator.locate_with_bary(mesh, p))
            .collect();
        let used = located.iter().filter(|l| l.is_some()).count();
        let dropped = located.len() - used;
        if dropped > 0 {
            log::warn!("{dropped} data point(s) outside the mesh domain were excluded");
        }
        DataProjection {
            located,
            used,
            dropped,
        }
    }

    /// Indices of points located in each triangle.
    pub fn points_per_triangle(&self, n_tris: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); n_tris];
        for (i, l) in self.located.iter().enumerate() {
            if let Some((t, _)) = l {
                out[*t].push(i);
            }
        }
        out
    }

    /// `B^T v / n`: data-space vector projected onto the nodes.
    pub fn project(&self, mesh: &TriMesh<T>, values: &[T]) -> Vec<T> {
        let inv_n = T::one() / T::from_usize_lossy(self.used.max(1));
        let mut d = vec![T::zero(); mesh.num_nodes()];
        for (l, &y) in self.located.iter().zip(values) {
            if let Some((t, bary)) = l {
                let nodes = mesh.triangle(*t).nodes;
                for k in 0..3 {
                    d[nodes[k]] += bary[k] * y * inv_n;
                }
            }
        }
        d
    }

    /// `B c`: nodal field evaluated at the data points (zero for dropped points).
    pub fn evaluate(&self, mesh: &TriMesh<T>, field: &[T]) -> Vec<T> {
        self.located
            .iter()
            .map(|l| match l {
                Some((t, bary)) => {
                    let nodes = mesh.triangle(*t).nodes;
                    (0..3).map(|k| bary[k] * field[nodes[k]]).sum()
                }
                None => T::zero(),
            })
            .collect()
    }
}

/// Data matrix `A = (1/n) Σ b(x_i) b(x_i)^T` and vector `d = (1/n) Σ b(x_i) y_i`
/// over the located points.
pub fn assemble_data<T: Real>(
    mesh: &TriMesh<T>,
    projection: &DataProjection<T>,
    values: &[T],
) -> Result<(CsMat<T>, Vec<T>)> {
    if projection.located.len() != values.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} points but {} values",
            projection.located.len(),
            values.len()
        )));
    }
    if projection.used == 0 {
        return Err(Error::NoDataInDomain);
    }
    let n = mesh.num_nodes();
    let inv_n = T::one() / T::from_usize_lossy(projection.used);
    let mut tri = TriMat::with_capacity((n, n), 9 * projection.used);
    for (l, _) in projection.located.iter().zip(values) {
        if let Some((t, bary)) = l {
            let nodes = mesh.triangle(*t).nodes;
            for i in 0..3 {
                for j in 0..3 {
                    tri.add_triplet(nodes[i], nodes[j], bary[i] * bary[j] * inv_n);
                }
            }
        }
    }
    let d = projection.project(mesh, values);
    Ok((mirror_upper(&tri.to_csr()), d))
}

/// Sparse matrices and data projection of the smoothing problem on one mesh.
#[derive(Clone, Debug)]
pub struct FemSystem<T> {
    pub a: CsMat<T>,
    pub d: Vec<T>,
    pub l: CsMat<T>,
    pub g1: CsMat<T>,
    pub g2: CsMat<T>,
    pub projection: DataProjection<T>,
    /// Response values of all data points (including dropped ones).
    pub values: Vec<T>,
}

impl<T: Real> FemSystem<T> {
    pub fn assemble(mesh: &TriMesh<T>, locator: &Locator<T>, data: &DataSet<T>) -> Result<Self> {
        let projection = DataProjection::new(mesh, locator, &data.points);
        Self::with_projection(mesh, projection, data.values.clone())
    }

    pub fn with_projection(
        mesh: &TriMesh<T>,
        projection: DataProjection<T>,
        values: Vec<T>,
    ) -> Result<Self> {
        let (a, d) = assemble_data(mesh, &projection, &values)?;
        Ok(FemSystem {
            a,
            d,
            l: assemble_laplacian(mesh)?,
            g1: assemble_gradient(mesh, Axis::X1)?,
            g2: assemble_gradient(mesh, Axis::X2)?,
            projection,
            values,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.d.len()
    }
}

/// `y = M x` for a CSR matrix.
pub fn spmv<T: Real>(m: &CsMat<T>, x: &[T]) -> Vec<T> {
    m.outer_iterator()
        .map(|row| row.iter().map(|(j, &v)| v * x[j]).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Triangle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_triangle() -> TriMesh<f64> {
        TriMesh::from_parts(
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(0.0, 1.0),
            ],
            vec![Triangle::new([0, 1, 2], 0)],
        )
        .unwrap()
    }

    fn two_triangle_square() -> TriMesh<f64> {
        TriMesh::from_parts(
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(1.0, 1.0),
                Point2::new(0.0, 1.0),
            ],
            vec![Triangle::new([1, 2, 0], 0), Triangle::new([3, 0, 2], 0)],
        )
        .unwrap()
    }

    fn dense(m: &CsMat<f64>) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; m.cols()]; m.rows()];
        for (i, row) in m.outer_iterator().enumerate() {
            for (j, &v) in row.iter() {
                out[i][j] += v;
            }
        }
        out
    }

    /// Degree-5, 7-point rule on the reference triangle (weights sum to 1).
    fn gauss7() -> Vec<([f64; 3], f64)> {
        let a1 = 0.059_715_871_789_770;
        let b1 = 0.470_142_064_105_115;
        let a2 = 0.797_426_985_353_087;
        let b2 = 0.101_286_507_323_456;
        let w1 = 0.132_394_152_788_506;
        let w2 = 0.125_939_180_544_827;
        vec![
            ([1.0 / 3.0; 3], 0.225),
            ([a1, b1, b1], w1),
            ([b1, a1, b1], w1),
            ([b1, b1, a1], w1),
            ([a2, b2, b2], w2),
            ([b2, a2, b2], w2),
            ([b2, b2, a2], w2),
        ]
    }

    #[test]
    fn basis_values_at_vertex_and_centroid() {
        let m = unit_triangle();
        let v = basis_eval(&m, 0, Point2::new(0.0, 0.0)).unwrap();
        assert_eq!(v.values, [1.0, 0.0, 0.0]);
        let c = basis_eval(&m, 0, m.centroid(0)).unwrap();
        for x in c.values {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(c.grads[0], [-1.0, -1.0]);
        assert_eq!(c.grads[1], [1.0, 0.0]);
        assert_eq!(c.grads[2], [0.0, 1.0]);
        assert!(matches!(
            basis_eval(&m, 0, Point2::new(1.0, 1.0)),
            Err(Error::OutsideTriangle(0))
        ));
    }

    #[test]
    fn laplacian_corner_entry_and_null_space() {
        let m = two_triangle_square();
        let l = assemble_laplacian(&m).unwrap();
        let ld = dense(&l);
        // Node 1 belongs only to the first triangle (right angle, legs 1).
        assert!((ld[1][1] - 1.0).abs() < 1e-15);
        for row in &ld {
            assert!(row.iter().sum::<f64>().abs() < 1e-15);
        }
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(ld[i][j], ld[j][i]);
            }
        }
    }

    #[test]
    fn gradient_single_triangle_entry() {
        let m = unit_triangle();
        let g1 = dense(&assemble_gradient(&m, Axis::X1).unwrap());
        assert!((g1[0][0] + 1.0 / 6.0).abs() < 1e-15);
        for row in &g1 {
            assert!(row.iter().sum::<f64>().abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_matches_quadrature_on_random_triangles() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let pts: Vec<Point2<f64>> = (0..3)
                .map(|_| Point2::new(rng.random::<f64>(), rng.random::<f64>()))
                .collect();
            if orient2(pts[0], pts[1], pts[2]).abs() < 1e-3 {
                continue;
            }
            let m = TriMesh::from_parts(pts.clone(), vec![Triangle::new([0, 1, 2], 0)]).unwrap();
            let [a, b, c] = m.vertices(0);
            let area = m.area(0);
            for axis in [Axis::X1, Axis::X2] {
                let g = dense(&assemble_gradient(&m, axis).unwrap());
                let nodes = m.triangle(0).nodes;
                // Oracle: quadrature of b_p times finite-difference derivative of b_q.
                let h = 1e-6;
                let centre = m.centroid(0);
                let shift = match axis {
                    Axis::X1 => Point2::new(centre.x + h, centre.y),
                    Axis::X2 => Point2::new(centre.x, centre.y + h),
                };
                let l0 = barycentric(a, b, c, centre);
                let l1 = barycentric(a, b, c, shift);
                for p in 0..3 {
                    for q in 0..3 {
                        let dq = (l1[q] - l0[q]) / h;
                        let integral: f64 = gauss7().iter().map(|(l, w)| w * l[p] * dq).sum::<f64>() * area;
                        assert!(
                            (g[nodes[p]][nodes[q]] - integral).abs() < 1e-8,
                            "{} vs {integral}",
                            g[nodes[p]][nodes[q]]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn data_matrix_single_point_cases() {
        let m = two_triangle_square();
        let loc = Locator::new(&m);
        let proj = DataProjection::new(&m, &loc, &[Point2::new(1.0, 0.0)]);
        let (a, d) = assemble_data(&m, &proj, &[1.0]).unwrap();
        let ad = dense(&a);
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == 1 && j == 1 { 1.0 } else { 0.0 };
                assert_eq!(ad[i][j], e);
            }
        }
        assert_eq!(d, vec![0.0, 1.0, 0.0, 0.0]);

        let c = m.centroid(0);
        let proj = DataProjection::new(&m, &loc, &[c]);
        let (a, _) = assemble_data(&m, &proj, &[0.0]).unwrap();
        let ad = dense(&a);
        for &i in &m.triangle(0).nodes {
            for &j in &m.triangle(0).nodes {
                assert!((ad[i][j] - 1.0 / 9.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn no_data_in_domain() {
        let m = two_triangle_square();
        let loc = Locator::new(&m);
        let proj = DataProjection::new(&m, &loc, &[Point2::new(3.0, 3.0)]);
        assert_eq!(proj.dropped, 1);
        assert!(matches!(
            assemble_data(&m, &proj, &[1.0]),
            Err(Error::NoDataInDomain)
        ));
    }
}
