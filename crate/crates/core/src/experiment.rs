//! Boundary accuracy of the TPS fit on peaks data, per sampling strategy
//! and sample size.

use crate::data::peaks::{self, PeaksSpec};
use crate::error::Result;
use crate::gcv::GcvConfig;
use crate::geometry::{Point2, Rect};
use crate::spatial::PointIndex;
use crate::tps::{fit_tps, sample_indices, select_tps_alpha, SamplePlan, SampleStrategy};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub spec: PeaksSpec,
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub strategies: Vec<SampleStrategy>,
    pub gcv: GcvConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            spec: PeaksSpec::default(),
            sizes: vec![100, 200, 300, 400, 500, 600],
            seeds: (0..10).collect(),
            strategies: vec![
                SampleStrategy::Quadtree,
                SampleStrategy::QuadtreeBoundaryBand,
                SampleStrategy::Random,
            ],
            gcv: GcvConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub seed: u64,
    pub strategy: SampleStrategy,
    pub count: usize,
    pub alpha: f64,
    /// Largest distance from a data point to its nearest sampled point.
    pub fill_distance: f64,
    pub test_points: usize,
    pub rmse_f: f64,
    pub rmse_dx1: f64,
    pub rmse_dx2: f64,
    /// `−4 · proxy` against the exact Laplacian.
    pub rmse_laplacian: f64,
}

/// Mean of each error column over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub strategy: SampleStrategy,
    pub count: usize,
    pub rmse_f: f64,
    pub rmse_dx1: f64,
    pub rmse_dx2: f64,
    pub rmse_laplacian: f64,
    pub fill_distance: f64,
}

fn rmse(errs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = errs.fold((0.0, 0usize), |(s, n), e| (s + e * e, n + 1));
    if n == 0 {
        0.0
    } else {
        (s / n as f64).sqrt()
    }
}

fn band(spec: &PeaksSpec) -> Rect<f64> {
    let h = spec.band_half;
    Rect::new(Point2::new(-h, -h), Point2::new(h, h))
}

fn one_run(
    cfg: &ExperimentConfig,
    seed: u64,
    points: &[Point2<f64>],
    values: &[f64],
    test: &[Point2<f64>],
    strategy: SampleStrategy,
    count: usize,
) -> Result<ExperimentRow> {
    let plan = SamplePlan {
        strategy,
        count,
        band: (strategy == SampleStrategy::QuadtreeBoundaryBand).then(|| band(&cfg.spec)),
    };
    let idx = sample_indices(points, &plan, seed)?;
    let c: Vec<Point2<f64>> = idx.iter().map(|&i| points[i]).collect();
    let y: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
    let sel = select_tps_alpha(&c, &y, &cfg.gcv)?;
    let m = fit_tps(&c, &y, sel.alpha)?;

    let index = PointIndex::new(&c);
    let fill = points
        .iter()
        .filter_map(|p| index.nearest([p.x, p.y]).map(|(_, d)| d))
        .fold(0.0, f64::max);

    Ok(ExperimentRow {
        seed,
        strategy,
        count,
        alpha: sel.alpha,
        fill_distance: fill,
        test_points: test.len(),
        rmse_f: rmse(test.iter().map(|p| m.eval(*p) - peaks::value(p.x, p.y))),
        rmse_dx1: rmse(test.iter().map(|p| m.eval_grad(*p)[0] - peaks::gradient(p.x, p.y)[0])),
        rmse_dx2: rmse(test.iter().map(|p| m.eval_grad(*p)[1] - peaks::gradient(p.x, p.y)[1])),
        rmse_laplacian: rmse(
            test.iter()
                .map(|p| -4.0 * m.eval_laplacian_proxy(*p) - peaks::laplacian(p.x, p.y)),
        ),
    })
}

/// One row per (seed, strategy, size), ordered by seed, then strategy, then
/// size. Data and test points are the raw peaks coordinates.
pub fn experiment_boundary_accuracy(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    let jobs: Vec<(u64, SampleStrategy, usize)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| {
            cfg.strategies
                .iter()
                .flat_map(move |&st| cfg.sizes.iter().map(move |&n| (s, st, n)))
        })
        .collect();
    let datasets: Vec<(u64, Vec<Point2<f64>>, Vec<f64>, Vec<Point2<f64>>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let raw = peaks::generate(&cfg.spec, seed);
            let pts: Vec<Point2<f64>> = raw.iter().map(|r| Point2::new(r[0], r[1])).collect();
            let vals = raw.iter().map(|r| r[2]).collect();
            let h = cfg.spec.test_half;
            let test = pts
                .iter()
                .copied()
                .filter(|p| p.x.abs() > h || p.y.abs() > h)
                .collect();
            (seed, pts, vals, test)
        })
        .collect();
    jobs.par_iter()
        .map(|&(seed, strategy, count)| {
            let (_, pts, vals, test) = datasets.iter().find(|d| d.0 == seed).expect("seed generated");
            one_run(cfg, seed, pts, vals, test, strategy, count)
        })
        .collect()
}

pub fn summarize(rows: &[ExperimentRow]) -> Vec<ExperimentSummary> {
    let mut keys: Vec<(SampleStrategy, usize)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.strategy, r.count)) {
            keys.push((r.strategy, r.count));
        }
    }
    keys.into_iter()
        .map(|(strategy, count)| {
            let sel: Vec<&ExperimentRow> = rows
                .iter()
                .filter(|r| r.strategy == strategy && r.count == count)
                .collect();
            let mean = |f: fn(&ExperimentRow) -> f64| sel.iter().map(|r| f(r)).sum::<f64>() / sel.len() as f64;
            ExperimentSummary {
                strategy,
                count,
                rmse_f: mean(|r| r.rmse_f),
                rmse_dx1: mean(|r| r.rmse_dx1),
                rmse_dx2: mean(|r| r.rmse_dx2),
                rmse_laplacian: mean(|r| r.rmse_laplacian),
                fill_distance: mean(|r| r.fill_distance),
            }
        })
        .collect()
}

/// CSV of the per-run rows.
pub fn rows_csv(rows: &[ExperimentRow]) -> String {
    let mut out = String::from("seed,strategy,count,alpha,fill_distance,test_points,rmse_f,rmse_dx1,rmse_dx2,rmse_laplacian\n");
    for r in rows {
        let st = serde_json::to_value(r.strategy)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.seed, st, r.count, r.alpha, r.fill_distance, r.test_points, r.rmse_f, r.rmse_dx1, r.rmse_dx2, r.rmse_laplacian
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            spec: PeaksSpec {
                n: 2000,
                ..PeaksSpec::default()
            },
            sizes: vec![50, 150],
            seeds: vec![3, 4],
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn rows_are_complete_and_deterministic() {
        let cfg = small();
        let a = experiment_boundary_accuracy(&cfg).unwrap();
        assert_eq!(a.len(), 2 * 3 * 2);
        assert_eq!((a[0].seed, a[0].strategy, a[0].count), (3, SampleStrategy::Quadtree, 50));
        let b = experiment_boundary_accuracy(&cfg).unwrap();
        assert_eq!(a, b);
        for r in &a {
            assert!(r.rmse_f.is_finite() && r.rmse_laplacian.is_finite());
            assert!(r.test_points > 0);
        }
        assert_eq!(rows_csv(&a).lines().count(), 13);
    }

    #[test]
    fn larger_samples_fit_better() {
        let s = summarize(&experiment_boundary_accuracy(&small()).unwrap());
        let q = |n| s.iter().find(|x| x.strategy == SampleStrategy::Quadtree && x.count == n).unwrap();
        assert!(q(150).rmse_f < q(50).rmse_f);
        assert!(q(150).fill_distance < q(50).fill_distance);
    }
}
