//! Refinement indicators and marking.

use crate::assembly::{basis_gradients, DataProjection, FemSystem};
use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::geometry::{barycentric, EdgeKey, Locator, TriMesh};
use crate::saddle::{element_gradient, BoundaryValues, Smoother};
use crate::scalar::Real;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const DEFAULT_GAMMA: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndicatorKind {
    Auxiliary,
    Recovery,
}

/// Indicator values keyed by edge (auxiliary) or triangle (recovery).
#[derive(Clone, Debug, PartialEq)]
pub struct IndicatorField<T> {
    pub kind: IndicatorKind,
    pub edges: BTreeMap<EdgeKey, T>,
    pub triangles: Vec<T>,
}

impl<T: Real> IndicatorField<T> {
    pub fn is_empty(&self) -> bool {
        self.edges.is_empty() && self.triangles.is_empty()
    }

    pub fn from_edges(kind: IndicatorKind, edges: BTreeMap<EdgeKey, T>) -> Self {
        IndicatorField {
            kind,
            edges,
            triangles: Vec::new(),
        }
    }

    /// Values per refinable edge. Triangle values go to the triangle's base
    /// edge, taking the larger value when two triangles share it.
    pub fn edge_values(&self, mesh: &TriMesh<T>) -> BTreeMap<EdgeKey, T> {
        match self.triangles.is_empty() {
            true => self.edges.clone(),
            false => {
                let mut out: BTreeMap<EdgeKey, T> = BTreeMap::new();
                for (t, &v) in self.triangles.iter().enumerate() {
                    let e = mesh.triangle(t).base_edge();
                    let slot = out.entry(e).or_insert(v);
                    if v > *slot {
                        *slot = v;
                    }
                }
                out
            }
        }
    }

    pub fn summary(&self) -> IndicatorSummary {
        let vals: Vec<f64> = match self.triangles.is_empty() {
            true => self.edges.values().map(|v| v.as_f64()).collect(),
            false => self.triangles.iter().map(|v| v.as_f64()).collect(),
        };
        IndicatorSummary::of(&vals)
    }
}

/// Histogram of `η / max η` in ten equal bins.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSummary {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub histogram: Vec<usize>,
}

impl IndicatorSummary {
    pub fn of(vals: &[f64]) -> Self {
        if vals.is_empty() {
            return IndicatorSummary::default();
        }
        let max = vals.iter().copied().fold(0.0, f64::max);
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let mut histogram = vec![0; 10];
        for v in vals {
            let b = if max > 0.0 { ((v / max) * 10.0) as usize } else { 0 };
            histogram[b.min(9)] += 1;
        }
        IndicatorSummary {
            count: vals.len(),
            min,
            max,
            mean,
            histogram,
        }
    }
}

/// Maximum strategy: every edge with `η ≥ γ · max η`, in key order.
pub fn mark<T: Real>(mesh: &TriMesh<T>, field: &IndicatorField<T>, gamma: f64) -> Result<Vec<EdgeKey>> {
    if field.is_empty() {
        return Err(Error::EmptyField);
    }
    let values = field.edge_values(mesh);
    let max = values.values().copied().fold(T::zero(), |a, b| a.max(b));
    let cut = max * T::lit(gamma);
    Ok(values.into_iter().filter(|(_, v)| *v >= cut).map(|(e, _)| e).collect())
}

/// Nodal gradients from the lumped-mass projection of the elementwise gradient:
/// the area-weighted mean over the triangles around each node.
pub fn recovered_gradient<T: Real>(mesh: &TriMesh<T>, c: &[T]) -> Result<Vec<[T; 2]>> {
    let n = mesh.num_nodes();
    let mut acc = vec![[T::zero(); 2]; n];
    let mut weight = vec![T::zero(); n];
    for t in 0..mesh.num_triangles() {
        let g = element_gradient(mesh, c, t)?;
        let a = mesh.area(t);
        for &p in &mesh.triangle(t).nodes {
            acc[p][0] += a * g[0];
            acc[p][1] += a * g[1];
            weight[p] += a;
        }
    }
    Ok(acc
        .into_iter()
        .zip(weight)
        .map(|(g, w)| if w > T::zero() { [g[0] / w, g[1] / w] } else { g })
        .collect())
}

/// `∫_τ |D̂ − D|²` for a linear field `D̂` with nodal values `rec` and a
/// constant `D`, per component: `area/12 · (Σ vᵢ² + (Σ vᵢ)²)` with `vᵢ = D̂ᵢ − D`.
fn recovery_eta2<T: Real>(mesh: &TriMesh<T>, c: &[T], rec: &[[T; 2]], t: usize) -> Result<T> {
    let g = element_gradient(mesh, c, t)?;
    let a = mesh.area(t);
    let mut total = T::zero();
    for k in 0..2 {
        let v: Vec<T> = mesh.triangle(t).nodes.iter().map(|&p| rec[p][k] - g[k]).collect();
        let sq: T = v.iter().map(|x| *x * *x).sum();
        let s: T = v.iter().copied().sum();
        total += a / T::lit(12.0) * (sq + s * s);
    }
    Ok(total)
}

pub fn recovery_indicator<T: Real>(s: &Smoother<T>, tri: usize) -> Result<T> {
    let rec = recovered_gradient(s.mesh(), &s.c)?;
    Ok(recovery_eta2(s.mesh(), &s.c, &rec, tri)?.sqrt())
}

pub fn recovery_field<T: Real>(s: &Smoother<T>) -> Result<IndicatorField<T>> {
    let mesh = s.mesh();
    let rec = recovered_gradient(mesh, &s.c)?;
    let triangles = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| recovery_eta2(mesh, &s.c, &rec, t).map(|v| v.sqrt()))
        .collect::<Result<Vec<T>>>()?;
    Ok(IndicatorField {
        kind: IndicatorKind::Recovery,
        edges: BTreeMap::new(),
        triangles,
    })
}

/// Shared inputs for auxiliary indicators on one smoother.
pub struct AuxiliaryContext<'a, T> {
    pub smoother: &'a Smoother<T>,
    pub data: &'a DataSet<T>,
    pub alpha: T,
    per_triangle: Vec<Vec<usize>>,
}

impl<'a, T: Real> AuxiliaryContext<'a, T> {
    pub fn new(smoother: &'a Smoother<T>, data: &'a DataSet<T>, alpha: T) -> Self {
        let mesh = smoother.mesh();
        let proj = DataProjection::new(mesh, smoother.locator(), &data.points);
        AuxiliaryContext {
            smoother,
            data,
            alpha,
            per_triangle: proj.points_per_triangle(mesh.num_triangles()),
        }
    }
}

/// `η_e` from a local smoother on the once-refined patch around `edge`.
///
/// The patch is the incident triangles plus their edge neighbours; the local
/// fit uses the data inside it and takes Dirichlet values from `s`. Returns
/// zero when the patch has no data or no interior node.
pub fn auxiliary_indicator<T: Real>(ctx: &AuxiliaryContext<'_, T>, edge: EdgeKey) -> Result<T> {
    let s = ctx.smoother;
    let mesh = s.mesh();
    let incident: Vec<usize> = mesh.edge_triangles(edge).to_vec();
    if incident.is_empty() {
        return Err(Error::NotRefinable(format!("edge {edge:?} has no triangle")));
    }
    let mut patch = incident.clone();
    for &t in &incident {
        patch.extend(mesh.neighbors(t));
    }
    patch.sort_unstable();
    patch.dedup();

    let idx: Vec<usize> = patch.iter().flat_map(|&t| ctx.per_triangle[t].iter().copied()).collect();
    if idx.is_empty() {
        return Ok(T::zero());
    }

    let (mut local, old_of_new) = mesh.extract(&patch);
    let n_old = local.num_nodes();
    let created = local.uniform_pass();
    let mut vals: Vec<[T; 4]> = old_of_new.iter().map(|&i| s.node_values(i)).collect();
    vals.resize(local.num_nodes(), [T::zero(); 4]);
    for &i in &created {
        let [a, b] = local.origin(i).expect("bisection node has an origin");
        debug_assert!(a < vals.len() && b < vals.len());
        let half = T::lit(0.5);
        vals[i] = std::array::from_fn(|k| (vals[a][k] + vals[b][k]) * half);
    }
    debug_assert!(created.iter().all(|&i| i >= n_old));
    if local.interior_nodes().is_empty() {
        return Ok(T::zero());
    }

    let points: Vec<_> = idx.iter().map(|&i| ctx.data.points[i]).collect();
    let values: Vec<T> = idx.iter().map(|&i| ctx.data.values[i]).collect();
    let locator = Locator::new(&local);
    let projection = DataProjection::new(&local, &locator, &points);
    if projection.used == 0 {
        return Ok(T::zero());
    }
    let fem = FemSystem::with_projection(&local, projection, values)?;
    let bv = BoundaryValues::from_fn(&local, |i| vals[i]);
    let local_fit = Smoother::fit(&local, &fem, ctx.alpha, &bv)?;

    let parents: Vec<([_; 3], [T; 2])> = incident
        .iter()
        .map(|&t| Ok((mesh.vertices(t), s.element_gradient(t)?)))
        .collect::<Result<_>>()?;
    let tol = T::lit(-1e-9);
    let mut eta2 = T::zero();
    for t in 0..local.num_triangles() {
        let cen = local.centroid(t);
        let Some((_, gp)) = parents.iter().find(|(v, _)| {
            let l = barycentric(v[0], v[1], v[2], cen);
            l.iter().all(|x| *x >= tol)
        }) else {
            continue;
        };
        let (gl, area) = {
            let (g, a) = basis_gradients(&local, t)?;
            let nodes = local.triangle(t).nodes;
            let mut out = [T::zero(); 2];
            for k in 0..3 {
                out[0] += g[k][0] * local_fit.c[nodes[k]];
                out[1] += g[k][1] * local_fit.c[nodes[k]];
            }
            (out, a)
        };
        let dx = gp[0] - gl[0];
        let dy = gp[1] - gl[1];
        eta2 += area * (dx * dx + dy * dy);
    }
    Ok(eta2.sqrt())
}

/// Auxiliary indicators for the listed edges, in parallel.
pub fn auxiliary_values<T: Real>(ctx: &AuxiliaryContext<'_, T>, edges: &[EdgeKey]) -> Result<Vec<T>> {
    edges.par_iter().map(|&e| auxiliary_indicator(ctx, e)).collect()
}

pub fn auxiliary_field<T: Real>(ctx: &AuxiliaryContext<'_, T>) -> Result<IndicatorField<T>> {
    let edges = ctx.smoother.mesh().refinable_edges();
    let vals = auxiliary_values(ctx, &edges)?;
    Ok(IndicatorField {
        kind: IndicatorKind::Auxiliary,
        edges: edges.into_iter().zip(vals).collect(),
        triangles: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mesh41() -> TriMesh<f64> {
        let mut m = TriMesh::square(0);
        m.uniform_pass();
        m
    }

    #[test]
    fn recovery_vanishes_for_linear_field() {
        let m = mesh41();
        let c: Vec<f64> = m.nodes().iter().map(|p| 0.5 + 2.0 * p.x - p.y).collect();
        let s = Smoother::from_fields(&m, [c, vec![0.0; 41], vec![0.0; 41], vec![0.0; 41]], 0.1).unwrap();
        let f = recovery_field(&s).unwrap();
        assert!(f.triangles.iter().all(|v| *v < 1e-12));
    }

    #[test]
    fn recovery_is_symmetric_for_a_hat() {
        let m = TriMesh::<f64>::square(0);
        let centre = (0..m.num_nodes())
            .find(|&i| m.node(i) == Point2::new(0.5, 0.5))
            .unwrap();
        let mut c = vec![0.0; m.num_nodes()];
        c[centre] = 1.0;
        let n = m.num_nodes();
        let s = Smoother::from_fields(&m, [c, vec![0.0; n], vec![0.0; n], vec![0.0; n]], 0.1).unwrap();
        let f = recovery_field(&s).unwrap();
        // The grid and its diagonals are symmetric under a half turn about
        // the centre and under reflection in x = y.
        let find = |p: Point2<f64>| {
            (0..m.num_triangles())
                .find(|&t| m.centroid(t).dist(p) < 1e-12)
                .unwrap()
        };
        let mut checked = 0;
        for t in 0..m.num_triangles() {
            let q = m.centroid(t);
            for image in [Point2::new(1.0 - q.x, 1.0 - q.y), Point2::new(q.y, q.x)] {
                let u = find(image);
                assert!((f.triangles[t] - f.triangles[u]).abs() < 1e-12);
                checked += usize::from(f.triangles[t] > 0.0);
            }
        }
        assert!(checked > 0);
    }

    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for k in i..=j {
                r[idx[k]] = (i + j) as f64 / 2.0;
            }
            i = j + 1;
        }
        r
    }

    fn spearman(a: &[f64], b: &[f64]) -> f64 {
        let (ra, rb) = (ranks(a), ranks(b));
        let n = a.len() as f64;
        let ma = ra.iter().sum::<f64>() / n;
        let mb = rb.iter().sum::<f64>() / n;
        let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    /// Consistent-mass projection solved densely; η by 3-point edge-midpoint quadrature
    /// (exact for quadratics).
    fn consistent_oracle(m: &TriMesh<f64>, c: &[f64]) -> Vec<f64> {
        let n = m.num_nodes();
        let mut mass = DMatrix::zeros(n, n);
        let mut rhs = [DVector::zeros(n), DVector::zeros(n)];
        for t in 0..m.num_triangles() {
            let a = m.area(t);
            let g = element_gradient(m, c, t).unwrap();
            let nodes = m.triangle(t).nodes;
            for i in 0..3 {
                for j in 0..3 {
                    mass[(nodes[i], nodes[j])] += if i == j { a / 6.0 } else { a / 12.0 };
                }
                rhs[0][nodes[i]] += a / 3.0 * g[0];
                rhs[1][nodes[i]] += a / 3.0 * g[1];
            }
        }
        let lu = mass.lu();
        let rec: Vec<DVector<f64>> = rhs.iter().map(|r| lu.solve(r).unwrap()).collect();
        (0..m.num_triangles())
            .map(|t| {
                let a = m.area(t);
                let g = element_gradient(m, c, t).unwrap();
                let nodes = m.triangle(t).nodes;
                let mut e = 0.0;
                for k in 0..2 {
                    for (i, j) in [(0, 1), (1, 2), (2, 0)] {
                        let mid = 0.5 * (rec[k][nodes[i]] + rec[k][nodes[j]]) - g[k];
                        e += a / 3.0 * mid * mid;
                    }
                }
                e.sqrt()
            })
            .collect()
    }

    /// About 50 nodes: the 41-node mesh with a wave of bisections near a corner.
    fn mesh50() -> TriMesh<f64> {
        let mut m = mesh41();
        let marked: Vec<EdgeKey> = m
            .refinable_edges()
            .into_iter()
            .filter(|e| {
                let [a, b] = e.nodes();
                m.node(a).midpoint(m.node(b)).dist(Point2::new(0.0, 0.0)) < 0.45
            })
            .collect();
        m.refine_wave(&marked).unwrap();
        m
    }

    #[test]
    fn lumped_and_consistent_rankings_agree() {
        // Median over random fields; single fields scatter around 0.9.
        let m = mesh50();
        let n = m.num_nodes();
        assert!((45..=60).contains(&n), "{n} nodes");
        let mut rhos: Vec<f64> = (0..20)
            .map(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let s = Smoother::from_fields(&m, [c.clone(), vec![0.0; n], vec![0.0; n], vec![0.0; n]], 0.1).unwrap();
                spearman(&recovery_field(&s).unwrap().triangles, &consistent_oracle(&m, &c))
            })
            .collect();
        rhos.sort_by(f64::total_cmp);
        let median = 0.5 * (rhos[9] + rhos[10]);
        println!("spearman median {median:.3}, min {:.3}", rhos[0]);
        assert!(median >= 0.9, "median spearman {median}");
    }

    #[test]
    fn quadrature_matches_closed_form() {
        // The midpoint rule in the oracle and the closed form agree on a linear field.
        let m = mesh41();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c: Vec<f64> = (0..m.num_nodes()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rec = recovered_gradient(&m, &c).unwrap();
        for t in 0..m.num_triangles() {
            let a = m.area(t);
            let g = element_gradient(&m, &c, t).unwrap();
            let nodes = m.triangle(t).nodes;
            let mut e = 0.0;
            for k in 0..2 {
                for (i, j) in [(0, 1), (1, 2), (2, 0)] {
                    let mid = 0.5 * (rec[nodes[i]][k] + rec[nodes[j]][k]) - g[k];
                    e += a / 3.0 * mid * mid;
                }
            }
            assert!((e - recovery_eta2(&m, &c, &rec, t).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn marking() {
        let m = mesh41();
        let n = m.num_triangles();
        let flat = IndicatorField {
            kind: IndicatorKind::Recovery,
            edges: BTreeMap::new(),
            triangles: vec![1.0; n],
        };
        let all = m.refinable_edges();
        assert_eq!(mark(&m, &flat, 0.5).unwrap(), all);
        let mut spike = flat.clone();
        spike.triangles = vec![0.1; n];
        spike.triangles[7] = 5.0;
        assert_eq!(mark(&m, &spike, 0.5).unwrap(), vec![m.triangle(7).base_edge()]);
        assert_eq!(mark(&m, &spike, 0.0).unwrap(), all);
        let empty = IndicatorField::<f64> {
            kind: IndicatorKind::Auxiliary,
            edges: BTreeMap::new(),
            triangles: Vec::new(),
        };
        assert!(matches!(mark(&m, &empty, 0.5), Err(Error::EmptyField)));
    }

    fn linear_setup() -> (TriMesh<f64>, DataSet<f64>, Smoother<f64>) {
        let mut m = TriMesh::square(0);
        m.uniform_pass();
        m.uniform_pass();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Point2<f64>> = (0..400)
            .map(|_| Point2::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)))
            .collect();
        let f = |p: Point2<f64>| 0.2 + 0.7 * p.x - 0.4 * p.y;
        let vals = pts.iter().map(|&p| f(p)).collect();
        let data = DataSet::new(pts, vals).unwrap();
        let loc = Locator::new(&m);
        let fem = FemSystem::assemble(&m, &loc, &data).unwrap();
        let bv = BoundaryValues::from_fn(&m, |i| [f(m.node(i)), 0.7, -0.4, 0.0]);
        let s = Smoother::fit(&m, &fem, 1e-3, &bv).unwrap();
        (m, data, s)
    }

    #[test]
    fn auxiliary_vanishes_on_linear_data() {
        let (_, data, s) = linear_setup();
        let ctx = AuxiliaryContext::new(&s, &data, 1e-3);
        let f = auxiliary_field(&ctx).unwrap();
        assert!(!f.edges.is_empty());
        for v in f.edges.values() {
            assert!(*v <= 1e-8, "{v}");
        }
    }

    #[test]
    fn auxiliary_is_zero_without_local_data() {
        let (m, _, s) = linear_setup();
        let far = DataSet::new(vec![Point2::new(0.01, 0.01)], vec![1.0]).unwrap();
        let ctx = AuxiliaryContext::new(&s, &far, 1e-3);
        // Edges far from the single point see no data.
        let e = m
            .refinable_edges()
            .into_iter()
            .find(|e| {
                let [a, b] = e.nodes();
                m.node(a).x > 0.6 && m.node(b).x > 0.6
            })
            .unwrap();
        assert_eq!(auxiliary_indicator(&ctx, e).unwrap(), 0.0);
    }
}
