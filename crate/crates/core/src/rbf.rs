//! Radial basis function baselines: global TPS and compactly supported
//! kernels (Buhmann, Wendland) at control points snapped to a grid.

use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::gcv::{select_alpha, GcvConfig, GcvProblem};
use crate::geometry::Point2;
use crate::scalar::Real;
use crate::solver::{nested_dissection, solve_refined, BlockLdl, BlockMatrix};
use crate::spatial::PointIndex;
use crate::tps::{fit_tps, select_tps_alpha, TpsModel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsrbfKernel {
    Buhmann,
    Wendland,
}

impl CsrbfKernel {
    /// Kernel at scaled distance `r = d / ρ`; zero for `r ≥ 1`.
    pub fn eval<T: Real>(self, r: T) -> T {
        if r >= T::one() {
            return T::zero();
        }
        let l = T::lit;
        match self {
            CsrbfKernel::Buhmann => {
                let r2 = r * r;
                let r3 = r2 * r;
                let log_term = if r > T::zero() { l(2.0) * r2 * r.ln() } else { T::zero() };
                l(1.0 / 15.0) + l(19.0 / 6.0) * r2 - l(16.0 / 3.0) * r3 + l(3.0) * r2 * r2 - l(16.0 / 15.0) * r2 * r3
                    + l(1.0 / 6.0) * r3 * r3
                    + log_term
            }
            CsrbfKernel::Wendland => {
                let a = T::one() - r;
                let a2 = a * a;
                a2 * a2 * (l(4.0) * r + T::one())
            }
        }
    }
}

/// Uniform grid spacing `h̄`; data further than `h̄/3` from every node is ignored.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlPointPlan {
    pub spacing: f64,
}

impl ControlPointPlan {
    pub fn tolerance(&self) -> f64 {
        self.spacing / 3.0
    }
}

/// Sorted indices of the data points nearest to grid nodes (within `h̄/3`).
pub fn snap_control_points<T: Real>(data: &DataSet<T>, plan: &ControlPointPlan) -> Result<Vec<usize>> {
    if !(plan.spacing > 0.0 && plan.spacing.is_finite()) {
        return Err(Error::InvalidConfig("grid spacing must be positive".into()));
    }
    let bb = data.bounding_box();
    let (x0, y0) = (bb.min.x.as_f64(), bb.min.y.as_f64());
    let nx = ((bb.max.x.as_f64() - x0) / plan.spacing).ceil() as usize;
    let ny = ((bb.max.y.as_f64() - y0) / plan.spacing).ceil() as usize;
    let index = PointIndex::new(&data.points);
    let tol = plan.tolerance();
    let mut out: Vec<usize> = (0..=ny)
        .flat_map(|j| (0..=nx).map(move |i| [x0 + i as f64 * plan.spacing, y0 + j as f64 * plan.spacing]))
        .filter_map(|node| index.nearest(node).filter(|(_, d)| *d <= tol).map(|(i, _)| i))
        .collect();
    out.sort_unstable();
    out.dedup();
    if out.is_empty() {
        return Err(Error::NoControlPoints);
    }
    Ok(out)
}

/// Median over `centers` of the distance to the `k`-th nearest data point.
/// A zero median is replaced by the smallest positive data spacing.
pub fn choose_rho<T: Real>(centers: &[Point2<T>], data: &[Point2<T>], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidConfig("cover count must be at least 1".into()));
    }
    if centers.is_empty() {
        return Err(Error::NoControlPoints);
    }
    if data.len() < k {
        return Err(Error::InsufficientData {
            requested: k,
            available: data.len(),
        });
    }
    let index = PointIndex::new(data);
    let mut d: Vec<f64> = centers
        .iter()
        .map(|c| index.kth_distance([c.x.as_f64(), c.y.as_f64()], k).unwrap_or(0.0))
        .collect();
    d.sort_by(f64::total_cmp);
    let m = d.len();
    let median = if m % 2 == 1 { d[m / 2] } else { 0.5 * (d[m / 2 - 1] + d[m / 2]) };
    if median > 0.0 {
        return Ok(median);
    }
    let smallest = data
        .iter()
        .enumerate()
        .filter_map(|(i, p)| index.nearest_other(i, [p.x.as_f64(), p.y.as_f64()]))
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    if smallest.is_finite() {
        Ok(smallest)
    } else {
        Err(Error::DegenerateGeometry)
    }
}

/// Kernel matrix `Φ` on the centres; entries only for pairs closer than `ρ`.
pub fn kernel_matrix<T: Real>(kernel: CsrbfKernel, centers: &[Point2<T>], rho: f64) -> Result<BlockMatrix<T>> {
    let index = PointIndex::new(centers);
    let rows = centers
        .par_iter()
        .map(|c| {
            index
                .within([c.x.as_f64(), c.y.as_f64()], rho)
                .into_iter()
                .map(|j| (j, vec![kernel.eval(c.dist(centers[j]) / T::lit(rho))]))
                .collect()
        })
        .collect();
    BlockMatrix::from_rows(1, rows)
}

fn shifted<T: Real>(phi: &BlockMatrix<T>, shift: T) -> Result<BlockMatrix<T>> {
    let rows = (0..phi.num_blocks())
        .map(|i| {
            phi.row(i)
                .iter()
                .map(|(j, v)| (*j, vec![if *j == i { v[0] + shift } else { v[0] }]))
                .collect()
        })
        .collect();
    BlockMatrix::from_rows(1, rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsrbfModel<T> {
    pub kernel: CsrbfKernel,
    pub centers: Vec<Point2<T>>,
    pub rho: f64,
    pub weights: Vec<T>,
    pub alpha: T,
    /// Nonzeros of the assembled system.
    pub nonzeros: usize,
}

impl<T: Real> CsrbfModel<T> {
    pub fn eval(&self, p: Point2<T>) -> T {
        let r = T::lit(self.rho);
        self.centers
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| *w * self.kernel.eval(p.dist(*c) / r))
            .sum()
    }

    /// Values at many points through a range query per point.
    pub fn eval_many(&self, points: &[Point2<T>]) -> Vec<T> {
        let index = PointIndex::new(&self.centers);
        let r = T::lit(self.rho);
        points
            .par_iter()
            .map(|p| {
                index
                    .within([p.x.as_f64(), p.y.as_f64()], self.rho)
                    .into_iter()
                    .map(|j| self.weights[j] * self.kernel.eval(p.dist(self.centers[j]) / r))
                    .sum()
            })
            .collect()
    }
}

struct Ridge<'a, T> {
    phi: &'a BlockMatrix<T>,
    coords: Vec<[f64; 2]>,
    values: &'a [T],
}

struct RidgeFit<T> {
    matrix: BlockMatrix<T>,
    factor: BlockLdl<T>,
    shift: T,
}

impl<T: Real> Ridge<'_, T> {
    fn weights(&self, fit: &RidgeFit<T>, b: &[T]) -> Result<Vec<T>> {
        let max_iter = 20 * b.len().max(1);
        Ok(solve_refined(&fit.matrix, &fit.factor, b, T::solve_tolerance(), max_iter)?.0)
    }
}

impl<T: Real> GcvProblem<T> for Ridge<'_, T> {
    type Fit = RidgeFit<T>;

    fn responses(&self) -> &[T] {
        self.values
    }

    fn prepare(&self, alpha: T) -> Result<RidgeFit<T>> {
        let shift = T::from_usize_lossy(self.values.len()) * alpha;
        let matrix = shifted(self.phi, shift)?;
        let perm = nested_dissection(&matrix, &self.coords);
        let factor = BlockLdl::factor(&matrix, &perm)?;
        Ok(RidgeFit { matrix, factor, shift })
    }

    // Φw = v − n̄αw, so fitted values need no extra product with Φ.
    fn fitted(&self, fit: &RidgeFit<T>) -> Result<Vec<T>> {
        let w = self.weights(fit, self.values)?;
        Ok(self.values.iter().zip(&w).map(|(v, w)| *v - fit.shift * *w).collect())
    }

    fn influence(&self, fit: &RidgeFit<T>, z: &[T]) -> Result<Vec<T>> {
        let w = self.weights(fit, z)?;
        Ok(z.iter().zip(&w).map(|(v, w)| *v - fit.shift * *w).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaSpec {
    Gcv,
    Fixed(f64),
}

/// Ridge collocation `(Φ + n̄αI) w = v` at the centres.
pub fn fit_csrbf<T: Real>(
    kernel: CsrbfKernel,
    centers: &[Point2<T>],
    values: &[T],
    rho: f64,
    alpha: AlphaSpec,
    gcv: &GcvConfig,
) -> Result<CsrbfModel<T>> {
    if centers.len() != values.len() {
        return Err(Error::DimensionMismatch("CSRBF centres and values".into()));
    }
    if centers.is_empty() {
        return Err(Error::NoControlPoints);
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidConfig("support radius must be positive".into()));
    }
    let phi = kernel_matrix(kernel, centers, rho)?;
    let problem = Ridge {
        phi: &phi,
        coords: centers.iter().map(|p| [p.x.as_f64(), p.y.as_f64()]).collect(),
        values,
    };
    let alpha = match alpha {
        AlphaSpec::Fixed(a) => a,
        AlphaSpec::Gcv => select_alpha(&problem, gcv)?.alpha,
    };
    let fit = problem.prepare(T::lit(alpha))?;
    let weights = problem.weights(&fit, values)?;
    Ok(CsrbfModel {
        kernel,
        centers: centers.to_vec(),
        rho,
        weights,
        alpha: T::lit(alpha),
        nonzeros: fit.matrix.nnz(),
    })
}

/// Dense TPS through the control points, `α` by exact GCV.
pub fn fit_global_tps<T: Real>(centers: &[Point2<T>], values: &[T], gcv: &GcvConfig) -> Result<TpsModel<T>> {
    let sel = select_tps_alpha(centers, values, gcv)?;
    fit_tps(centers, values, T::lit(sel.alpha))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sparsity {
    pub nonzeros: usize,
    /// Nonzeros over `n̄²`.
    pub ratio: f64,
}

pub fn report_sparsity<T: Real>(model: &CsrbfModel<T>) -> Sparsity {
    let n = model.centers.len() as f64;
    Sparsity {
        nonzeros: model.nonzeros,
        ratio: model.nonzeros as f64 / (n * n),
    }
}

/// The global TPS kernel matrix is dense.
pub fn tps_sparsity<T: Real>(model: &TpsModel<T>) -> Sparsity {
    let n = model.centers.len();
    Sparsity {
        nonzeros: n * n,
        ratio: 1.0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    Tps,
    Buhmann,
    Wendland,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    /// `ρ` covering this many data points (median over centres).
    Cover(usize),
    Radius(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub method: BaselineMethod,
    pub grid: ControlPointPlan,
    pub support: Support,
    pub alpha: AlphaSpec,
    pub gcv: GcvConfig,
    pub reproducible: bool,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            method: BaselineMethod::Wendland,
            grid: ControlPointPlan { spacing: 0.02 },
            support: Support::Cover(100),
            alpha: AlphaSpec::Gcv,
            gcv: GcvConfig::default(),
            reproducible: false,
        }
    }
}

/// One baseline fit with the columns of the comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub method: BaselineMethod,
    pub basis: usize,
    pub rho: Option<f64>,
    pub alpha: f64,
    pub nonzeros: usize,
    pub ratio: f64,
    pub solve_time_s: Option<f64>,
    pub rmse: f64,
    pub max: f64,
}

pub fn run_baseline<T: Real>(data: &DataSet<T>, cfg: &BaselineConfig) -> Result<BaselineReport> {
    let idx = snap_control_points(data, &cfg.grid)?;
    let centers: Vec<Point2<T>> = idx.iter().map(|&i| data.points[i]).collect();
    let values: Vec<T> = idx.iter().map(|&i| data.values[i]).collect();
    let start = Instant::now();
    let (pred, rho, alpha, sp) = match cfg.method {
        BaselineMethod::Tps => {
            let gcv = GcvConfig {
                exact_trace: true,
                ..cfg.gcv.clone()
            };
            let model = match cfg.alpha {
                AlphaSpec::Gcv => fit_global_tps(&centers, &values, &gcv)?,
                AlphaSpec::Fixed(a) => fit_tps(&centers, &values, T::lit(a))?,
            };
            let elapsed = start.elapsed().as_secs_f64();
            let pred: Vec<T> = data.points.par_iter().map(|p| model.eval(*p)).collect();
            ((pred, elapsed), None, model.alpha.as_f64(), tps_sparsity(&model))
        }
        BaselineMethod::Buhmann | BaselineMethod::Wendland => {
            let kernel = if cfg.method == BaselineMethod::Buhmann {
                CsrbfKernel::Buhmann
            } else {
                CsrbfKernel::Wendland
            };
            let rho = match cfg.support {
                Support::Cover(k) => choose_rho(&centers, &data.points, k)?,
                Support::Radius(r) => r,
            };
            let start = Instant::now();
            let model = fit_csrbf(kernel, &centers, &values, rho, cfg.alpha, &cfg.gcv)?;
            let elapsed = start.elapsed().as_secs_f64();
            let pred = model.eval_many(&data.points);
            ((pred, elapsed), Some(rho), model.alpha.as_f64(), report_sparsity(&model))
        }
    };
    let (pred, elapsed) = pred;
    let (mut sum, mut max) = (0.0f64, 0.0f64);
    for (p, y) in pred.iter().zip(&data.values) {
        let e = (*p - *y).as_f64();
        sum += e * e;
        max = max.max(e.abs());
    }
    Ok(BaselineReport {
        method: cfg.method,
        basis: centers.len(),
        rho,
        alpha,
        nonzeros: sp.nonzeros,
        ratio: sp.ratio,
        solve_time_s: (!cfg.reproducible).then_some(elapsed),
        rmse: (sum / data.len() as f64).sqrt(),
        max,
    })
}
