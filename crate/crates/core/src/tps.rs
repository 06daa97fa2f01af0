//! Dense thin plate spline on a small sample of the data.
//!
//! `t(x) = a₀ + a₁x₁ + a₂x₂ + Σ wᵢ φ(|x − xᵢ|)` with `φ(r) = r² log r` and
//! the side conditions `Σ wᵢ = Σ wᵢxᵢ₁ = Σ wᵢxᵢ₂ = 0`. The finite element
//! smoother uses it to produce Dirichlet values on the boundary.

use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::gcv::{search_alpha, GcvConfig, GcvEval, GcvSelection};
use crate::geometry::{Point2, Rect};
use crate::scalar::Real;
use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const MIN_SAMPLE: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStrategy {
    Random,
    Quadtree,
    QuadtreeBoundaryBand,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub strategy: SampleStrategy,
    pub count: usize,
    /// Inner rectangle whose points are excluded by the band strategy.
    pub band: Option<Rect<f64>>,
}

impl SamplePlan {
    pub fn quadtree(count: usize) -> Self {
        SamplePlan {
            strategy: SampleStrategy::Quadtree,
            count,
            band: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count < MIN_SAMPLE {
            return Err(Error::InvalidConfig(format!("TPS sample needs at least {MIN_SAMPLE} points")));
        }
        if self.strategy == SampleStrategy::QuadtreeBoundaryBand && self.band.is_none() {
            return Err(Error::InvalidConfig("band sampling needs an inner rectangle".into()));
        }
        Ok(())
    }
}

/// Sorted indices of the sampled points.
pub fn sample_indices<T: Real>(points: &[Point2<T>], plan: &SamplePlan, seed: u64) -> Result<Vec<usize>> {
    plan.validate()?;
    let candidates: Vec<usize> = match (plan.strategy, plan.band) {
        (SampleStrategy::QuadtreeBoundaryBand, Some(band)) => (0..points.len())
            .filter(|&i| !band.contains(points[i].cast::<f64>()))
            .collect(),
        _ => (0..points.len()).collect(),
    };
    let want = plan.count;
    if want > candidates.len() {
        return Err(Error::InsufficientData {
            requested: want,
            available: candidates.len(),
        });
    }
    if want == candidates.len() {
        return Ok(candidates);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = match plan.strategy {
        SampleStrategy::Random => index::sample(&mut rng, candidates.len(), want)
            .into_iter()
            .map(|k| candidates[k])
            .collect(),
        _ => quadtree_pick(points, candidates, want, &mut rng),
    };
    out.sort_unstable();
    Ok(out)
}

pub fn sample<T: Real>(data: &DataSet<T>, plan: &SamplePlan, seed: u64) -> Result<DataSet<T>> {
    let idx = sample_indices(&data.points, plan, seed)?;
    data.subset(&idx)
}

fn quadtree_pick<T: Real>(points: &[Point2<T>], candidates: Vec<usize>, want: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let cap = (4 * candidates.len()).div_ceil(want).max(1);
    let xy = |i: usize| (points[i].x.as_f64(), points[i].y.as_f64());
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &i in &candidates {
        let (x, y) = xy(i);
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let mut leaves: Vec<Vec<usize>> = Vec::new();
    let mut stack = vec![(candidates, [x0, y0, x1, y1], 0u32)];
    while let Some((pts, b, depth)) = stack.pop() {
        if pts.len() <= cap || depth >= 30 {
            if !pts.is_empty() {
                leaves.push(pts);
            }
            continue;
        }
        let mx = 0.5 * (b[0] + b[2]);
        let my = 0.5 * (b[1] + b[3]);
        let mut quads: [Vec<usize>; 4] = Default::default();
        for i in pts {
            let (x, y) = xy(i);
            quads[usize::from(x > mx) + 2 * usize::from(y > my)].push(i);
        }
        let boxes = [
            [b[0], b[1], mx, my],
            [mx, b[1], b[2], my],
            [b[0], my, mx, b[3]],
            [mx, my, b[2], b[3]],
        ];
        for (q, bb) in quads.into_iter().zip(boxes).rev() {
            stack.push((q, bb, depth + 1));
        }
    }
    // Largest leaves first; stable so ties keep traversal order.
    leaves.sort_by(|a, b| b.len().cmp(&a.len()));
    let mut out = Vec::with_capacity(want);
    'outer: loop {
        let mut progressed = false;
        for leaf in leaves.iter_mut() {
            if out.len() == want {
                break 'outer;
            }
            if leaf.is_empty() {
                continue;
            }
            let k = rng.random_range(0..leaf.len());
            out.push(leaf.swap_remove(k));
            progressed = true;
        }
        if !progressed {
            break;
        }
    }
    out
}

#[inline]
fn kernel<T: Real>(r2: T) -> T {
    if r2 > T::zero() {
        T::lit(0.5) * r2 * r2.ln()
    } else {
        T::zero()
    }
}

/// `∂φ/∂x` divided by `(x − xᵢ)`: `2 log r + 1`, zero at `r = 0`.
#[inline]
fn kernel_grad_factor<T: Real>(r2: T) -> T {
    if r2 > T::zero() {
        r2.ln() + T::one()
    } else {
        T::zero()
    }
}

/// The `w` kernel `−log r − 4` with `r ≥ 1e−12`.
#[inline]
fn proxy_kernel<T: Real>(r2: T) -> T {
    let floor = T::lit(1e-24);
    let r2 = if r2 > floor { r2 } else { floor };
    -T::lit(0.5) * r2.ln() - T::lit(4.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TpsModel<T> {
    pub centers: Vec<Point2<T>>,
    pub weights: Vec<T>,
    pub affine: [T; 3],
    pub alpha: T,
}

impl<T: Real> TpsModel<T> {
    pub fn eval(&self, p: Point2<T>) -> T {
        let mut v = self.affine[0] + self.affine[1] * p.x + self.affine[2] * p.y;
        for (c, w) in self.centers.iter().zip(&self.weights) {
            v += *w * kernel(p.dist2(*c));
        }
        v
    }

    pub fn eval_grad(&self, p: Point2<T>) -> [T; 2] {
        let (mut gx, mut gy) = (self.affine[1], self.affine[2]);
        for (c, w) in self.centers.iter().zip(&self.weights) {
            let f = *w * kernel_grad_factor(p.dist2(*c));
            gx += f * (p.x - c.x);
            gy += f * (p.y - c.y);
        }
        [gx, gy]
    }

    /// `Σ wᵢ (−log rᵢ − 4)`; no affine contribution.
    pub fn eval_laplacian_proxy(&self, p: Point2<T>) -> T {
        self.centers
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| *w * proxy_kernel(p.dist2(*c)))
            .sum()
    }

    /// `(Σ wᵢ, Σ wᵢxᵢ₁, Σ wᵢxᵢ₂)`.
    pub fn moments(&self) -> [T; 3] {
        let mut m = [T::zero(); 3];
        for (c, w) in self.centers.iter().zip(&self.weights) {
            m[0] += *w;
            m[1] += *w * c.x;
            m[2] += *w * c.y;
        }
        m
    }

    /// The affine polynomial alone, e.g. for a planar fit.
    pub fn affine_only(centers: Vec<Point2<T>>, affine: [T; 3]) -> Self {
        let n = centers.len();
        TpsModel {
            centers,
            weights: vec![T::zero(); n],
            affine,
            alpha: T::zero(),
        }
    }
}

fn check_geometry<T: Real>(points: &[Point2<T>]) -> Result<()> {
    if points.len() < 3 {
        return Err(Error::DegenerateGeometry);
    }
    let n = points.len() as f64;
    let (mut mx, mut my) = (0.0, 0.0);
    for p in points {
        mx += p.x.as_f64();
        my += p.y.as_f64();
    }
    mx /= n;
    my /= n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in points {
        let dx = p.x.as_f64() - mx;
        let dy = p.y.as_f64() - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let det = sxx * syy - sxy * sxy;
    let tr = sxx + syy;
    if !(tr > 0.0) || det <= 1e-12 * tr * tr {
        return Err(Error::DegenerateGeometry);
    }
    Ok(())
}

fn kernel_matrix<T: Real>(centers: &[Point2<T>]) -> DMatrix<T> {
    let n = centers.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = kernel(centers[i].dist2(centers[j]));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

pub fn fit_tps<T: Real>(centers: &[Point2<T>], values: &[T], alpha: T) -> Result<TpsModel<T>> {
    if centers.len() != values.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} centers, {} values",
            centers.len(),
            values.len()
        )));
    }
    if !(alpha >= T::zero()) || !alpha.is_finite_value() {
        return Err(Error::InvalidConfig(format!("TPS alpha must be finite and >= 0, got {alpha}")));
    }
    check_geometry(centers)?;
    let n = centers.len();
    let k = kernel_matrix(centers);
    let shift = T::from_usize_lossy(n) * alpha;
    let mut m = DMatrix::zeros(n + 3, n + 3);
    m.view_mut((0, 0), (n, n)).copy_from(&k);
    for i in 0..n {
        m[(i, i)] += shift;
        let row = [T::one(), centers[i].x, centers[i].y];
        for (j, v) in row.into_iter().enumerate() {
            m[(i, n + j)] = v;
            m[(n + j, i)] = v;
        }
    }
    let mut rhs = DVector::zeros(n + 3);
    for i in 0..n {
        rhs[i] = values[i];
    }
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSystem("dense TPS system".into()))?;
    if sol.iter().any(|v| !v.is_finite_value()) {
        return Err(Error::SingularSystem("dense TPS system".into()));
    }
    Ok(TpsModel {
        centers: centers.to_vec(),
        weights: sol.rows(0, n).iter().copied().collect(),
        affine: [sol[n], sol[n + 1], sol[n + 2]],
        alpha,
    })
}

/// Spectral form of the smoothing TPS for closed-form GCV scores.
///
/// With `Q = [Q₁ Q₂]` from a QR factorization of the polynomial matrix `P`,
/// residuals are `n α Q₂ (B + n α I)⁻¹ Q₂ᵀ y` where `B = Q₂ᵀ K Q₂`.
struct TpsSpectrum {
    n: usize,
    eigenvalues: Vec<f64>,
    coeffs: Vec<f64>,
}

impl TpsSpectrum {
    fn new<T: Real>(centers: &[Point2<T>], values: &[T]) -> Result<Self> {
        check_geometry(centers)?;
        let n = centers.len();
        let to = |v: T| v.as_f64();
        let mut k = kernel_matrix(centers).map(to);
        let mut p = DMatrix::from_fn(n, 3, |i, j| match j {
            0 => 1.0,
            1 => to(centers[i].x),
            _ => to(centers[i].y),
        });
        let mut y = DVector::from_iterator(n, values.iter().map(|v| to(*v)));
        // Householder reflections applied to P, K (both sides) and y.
        for c in 0..3 {
            let x = p.view((c, c), (n - c, 1)).clone_owned();
            let norm = x.norm();
            if norm == 0.0 {
                return Err(Error::DegenerateGeometry);
            }
            let mut v = x;
            let s = if v[0] >= 0.0 { 1.0 } else { -1.0 };
            v[0] += s * norm;
            let vv = v.dot(&v);
            let reflect_rows = |m: &mut DMatrix<f64>| {
                let mut sub = m.rows_mut(c, n - c);
                let t = (v.transpose() * &sub) * (2.0 / vv);
                sub -= &v * t;
            };
            reflect_rows(&mut p);
            reflect_rows(&mut k);
            let mut sub = k.columns_mut(c, n - c);
            let t = (&sub * &v) * (2.0 / vv);
            sub -= t * v.transpose();
            let mut ys = y.rows_mut(c, n - c);
            let f = v.dot(&ys) * (2.0 / vv);
            ys -= &v * f;
        }
        let mut b = k.view((3, 3), (n - 3, n - 3)).clone_owned();
        b = (&b + b.transpose()) * 0.5;
        let z2 = y.rows(3, n - 3).clone_owned();
        let eig = b.symmetric_eigen();
        let coeffs = (eig.eigenvectors.transpose() * z2).iter().copied().collect();
        Ok(TpsSpectrum {
            n,
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
            coeffs,
        })
    }

    fn score(&self, alpha: f64) -> GcvEval {
        let na = self.n as f64 * alpha;
        let (mut rss, mut tr) = (0.0, 0.0);
        for (l, z) in self.eigenvalues.iter().zip(&self.coeffs) {
            let f = na / (l + na);
            rss += f * f * z * z;
            tr += f;
        }
        let overflow = !(tr > 0.0);
        let score = if overflow {
            f64::INFINITY
        } else {
            self.n as f64 * rss / (tr * tr)
        };
        GcvEval {
            alpha,
            score: if score.is_finite() { score } else { f64::INFINITY },
            rss,
            trace: self.n as f64 - tr,
            trace_overflow: overflow,
        }
    }
}

/// GCV over the TPS smoothing parameter with the exact trace.
pub fn select_tps_alpha<T: Real>(centers: &[Point2<T>], values: &[T], cfg: &GcvConfig) -> Result<GcvSelection> {
    if centers.len() != values.len() {
        return Err(Error::DimensionMismatch("TPS centers and values".into()));
    }
    if centers.len() <= 3 {
        return Err(Error::InsufficientData {
            requested: 4,
            available: centers.len(),
        });
    }
    let spec = TpsSpectrum::new(centers, values)?;
    search_alpha(cfg, |a| Ok(spec.score(a)))
}

/// Sample, choose `α` by GCV and fit.
pub fn fit_tps_gcv<T: Real>(
    data: &DataSet<T>,
    plan: &SamplePlan,
    cfg: &GcvConfig,
    seed: u64,
) -> Result<(TpsModel<T>, GcvSelection)> {
    let count = plan.count.min(data.len());
    let plan = SamplePlan { count, ..plan.clone() };
    let s = sample(data, &plan, seed)?;
    let sel = select_tps_alpha(&s.points, &s.values, cfg)?;
    let model = fit_tps(&s.points, &s.values, T::lit(sel.alpha))?;
    Ok((model, sel))
}
