//! The iterative fit / indicate / mark / refine loop.

use crate::assembly::FemSystem;
use crate::boundary::{BoundaryKind, BoundaryStrategy, BoundaryTrace};
use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::gcv::{select_alpha, FemGcv, GcvConfig};
use crate::geometry::{trim_to_data, trim_to_polygon, EdgeKey, Locator, Point2, Polygon, TriMesh};
use crate::indicators::{
    auxiliary_values, mark, recovery_field, AuxiliaryContext, IndicatorField, IndicatorKind, IndicatorSummary,
    DEFAULT_GAMMA,
};
use crate::saddle::Smoother;
use crate::scalar::Real;
use crate::tps::{fit_tps, fit_tps_gcv, SamplePlan, TpsModel};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainSpec {
    Square,
    /// The square mesh at `trim_level` with data-free triangles removed.
    Irregular,
    /// The square mesh at `trim_level` restricted to a polygon.
    Polygon { loops: Vec<Vec<[f64; 2]>> },
}

impl DomainSpec {
    pub fn is_square(&self) -> bool {
        matches!(self, DomainSpec::Square)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Refinement {
    Uniform,
    Adaptive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaChoice {
    Gcv,
    Fixed(f64),
}

/// Stop when the relative RMSE improvement stays below `threshold` for
/// `patience` consecutive iterations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stagnation {
    pub threshold: f64,
    pub patience: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StagnationSetting {
    /// The default rule for adaptive runs, none for uniform runs.
    #[default]
    Auto,
    Off,
    On(Stagnation),
}

impl Default for Stagnation {
    fn default() -> Self {
        Stagnation {
            threshold: 0.1,
            patience: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub domain: DomainSpec,
    pub trim_level: usize,
    pub refinement: Refinement,
    pub indicator: IndicatorKind,
    pub boundary: BoundaryKind,
    /// Value for the constant strategy; the mean response when absent.
    pub constant_value: Option<f64>,
    pub alpha: AlphaChoice,
    pub gcv: GcvConfig,
    pub tps_sample: SamplePlan,
    pub tps_gcv: GcvConfig,
    /// Defaults depend on domain and refinement.
    pub max_iters: Option<usize>,
    pub rmse_tolerance: Option<f64>,
    pub stagnation: StagnationSetting,
    pub gamma: f64,
    pub near_boundary_radius: f64,
    pub seed: u64,
    /// Leave wall-clock timings out of the records.
    pub reproducible: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            domain: DomainSpec::Square,
            trim_level: 1,
            refinement: Refinement::Adaptive,
            indicator: IndicatorKind::Recovery,
            boundary: BoundaryKind::NodalAverage,
            constant_value: None,
            alpha: AlphaChoice::Gcv,
            gcv: GcvConfig::default(),
            tps_sample: SamplePlan::quadtree(300),
            tps_gcv: GcvConfig {
                exact_trace: true,
                ..GcvConfig::default()
            },
            max_iters: None,
            rmse_tolerance: None,
            stagnation: StagnationSetting::Auto,
            gamma: DEFAULT_GAMMA,
            near_boundary_radius: 0.005,
            seed: 0,
            reproducible: false,
        }
    }
}

impl RunConfig {
    pub fn max_iters(&self) -> usize {
        self.max_iters.unwrap_or(match (self.domain.is_square(), self.refinement) {
            (true, Refinement::Uniform) => 10,
            (true, Refinement::Adaptive) => 8,
            (false, Refinement::Uniform) => 8,
            (false, Refinement::Adaptive) => 7,
        })
    }

    pub fn stagnation_rule(&self) -> Option<Stagnation> {
        match (self.stagnation, self.refinement) {
            (StagnationSetting::On(rule), _) => Some(rule),
            (StagnationSetting::Auto, Refinement::Adaptive) => Some(Stagnation::default()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == Some(0) {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if let AlphaChoice::Fixed(a) = self.alpha {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::InvalidConfig(format!("alpha must be positive, got {a}")));
            }
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig("gamma must lie in [0, 1]".into()));
        }
        if !(self.near_boundary_radius > 0.0) {
            return Err(Error::InvalidConfig("near-boundary radius must be positive".into()));
        }
        self.gcv.validate()?;
        self.tps_gcv.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub nodes: usize,
    pub triangles: usize,
    pub alpha: f64,
    pub gcv_score: Option<f64>,
    pub rmse: f64,
    pub max_residual: f64,
    pub solve_time_s: Option<f64>,
    pub near_boundary_ratio: Option<f64>,
    /// Edges marked and bisected to reach this mesh from the previous one.
    pub marked_edges: usize,
    pub refined_edges: usize,
    pub waves: usize,
    pub dropped_points: usize,
    pub system_nnz: usize,
    pub constraint_residual: f64,
    pub indicator: Option<IndicatorSummary>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIterations,
    Tolerance,
    Stagnation,
    RefinementStalled,
}

pub struct RunOutcome<T> {
    pub smoother: Smoother<T>,
    pub records: Vec<IterationRecord>,
    pub stop: StopReason,
    pub tps: Option<TpsModel<T>>,
}

pub fn initial_mesh<T: Real>(data: &DataSet<T>, cfg: &RunConfig) -> Result<TriMesh<T>> {
    match &cfg.domain {
        DomainSpec::Square => Ok(TriMesh::square(0)),
        DomainSpec::Irregular => trim_to_data(&TriMesh::square(cfg.trim_level), &data.points),
        DomainSpec::Polygon { loops } => {
            let poly = Polygon::new(
                loops
                    .iter()
                    .map(|l| l.iter().map(|p| Point2::new(T::lit(p[0]), T::lit(p[1]))).collect())
                    .collect(),
            )?;
            trim_to_polygon(&TriMesh::square(cfg.trim_level), &poly)
        }
    }
}

/// Boundary strategy for a run; fits the TPS when the strategy needs one.
pub fn boundary_strategy<T: Real>(data: &DataSet<T>, cfg: &RunConfig) -> Result<BoundaryStrategy<T>> {
    if cfg.boundary == BoundaryKind::Constant {
        let v = cfg.constant_value.map(T::lit).unwrap_or_else(|| {
            data.values.iter().copied().sum::<T>() / T::from_usize_lossy(data.len())
        });
        return Ok(BoundaryStrategy::Constant(v));
    }
    let tps = fit_boundary_tps(data, cfg)?;
    Ok(match cfg.boundary {
        BoundaryKind::TpsApproximation => BoundaryStrategy::TpsApproximation(tps),
        _ => BoundaryStrategy::NodalAverage(tps),
    })
}

fn fit_boundary_tps<T: Real>(data: &DataSet<T>, cfg: &RunConfig) -> Result<TpsModel<T>> {
    if data.len() <= cfg.tps_sample.count {
        if data.len() <= 3 {
            // Too few points for GCV; interpolate.
            return fit_tps(&data.points, &data.values, T::zero());
        }
        let sel = crate::tps::select_tps_alpha(&data.points, &data.values, &cfg.tps_gcv)?;
        return fit_tps(&data.points, &data.values, T::lit(sel.alpha));
    }
    let (model, sel) = fit_tps_gcv(data, &cfg.tps_sample, &cfg.tps_gcv, cfg.seed)?;
    log::info!("boundary TPS: {} centres, alpha {:e}", model.centers.len(), sel.alpha);
    Ok(model)
}

pub fn run<T: Real>(data: &DataSet<T>, cfg: &RunConfig) -> Result<RunOutcome<T>> {
    run_with(data, cfg, |_| {})
}

/// [`run`], reporting each record as soon as it is complete.
pub fn run_with<T: Real>(
    data: &DataSet<T>,
    cfg: &RunConfig,
    mut on_record: impl FnMut(&IterationRecord),
) -> Result<RunOutcome<T>> {
    cfg.validate()?;
    let max_iters = cfg.max_iters();
    let strategy = boundary_strategy(data, cfg)?;
    let tps = match &strategy {
        BoundaryStrategy::TpsApproximation(t) | BoundaryStrategy::NodalAverage(t) => Some(t.clone()),
        BoundaryStrategy::Constant(_) => None,
    };
    let mut mesh = initial_mesh(data, cfg).map_err(|e| e.at_iteration(0))?;
    let mut trace = BoundaryTrace::initial(&mesh, &strategy);
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut refinement = RefineStats::default();
    let mut stagnant = 0usize;
    let mut k = 0usize;
    loop {
        let (smoother, record) = fit_iteration(data, cfg, &mesh, &trace, k, &refinement).map_err(|e| e.at_iteration(k))?;
        on_record(&record);
        let rmse = record.rmse;
        records.push(record);

        let mut stop = None;
        if let Some(tol) = cfg.rmse_tolerance {
            if rmse <= tol {
                stop = Some(StopReason::Tolerance);
            }
        }
        if stop.is_none() && k > 0 {
            if let Some(rule) = cfg.stagnation_rule() {
                let prev = records[k - 1].rmse;
                let improved = prev > 0.0 && (prev - rmse) / prev >= rule.threshold;
                stagnant = if improved { 0 } else { stagnant + 1 };
                if stagnant >= rule.patience {
                    stop = Some(StopReason::Stagnation);
                }
            }
        }
        if stop.is_none() && k >= max_iters {
            stop = Some(StopReason::MaxIterations);
        }
        if let Some(stop) = stop {
            return Ok(RunOutcome {
                smoother,
                records,
                stop,
                tps,
            });
        }

        k += 1;
        let before = mesh.num_nodes();
        refinement = match cfg.refinement {
            Refinement::Uniform => {
                let created = mesh.uniform_pass();
                trace.extend(&mesh, &strategy, &created).map_err(|e| e.at_iteration(k))?;
                RefineStats {
                    marked: 0,
                    refined: created.len(),
                    waves: 1,
                    summary: None,
                }
            }
            Refinement::Adaptive => refine_adaptive(data, cfg, &smoother, &mut mesh, &mut trace, &strategy)
                .map_err(|e| e.at_iteration(k))?,
        };
        if mesh.num_nodes() == before {
            log::warn!("iteration {k}: refinement added no nodes");
            return Ok(RunOutcome {
                smoother,
                records,
                stop: StopReason::RefinementStalled,
                tps,
            });
        }
    }
}

#[derive(Clone, Debug, Default)]
struct RefineStats {
    marked: usize,
    refined: usize,
    waves: usize,
    summary: Option<IndicatorSummary>,
}

fn fit_iteration<T: Real>(
    data: &DataSet<T>,
    cfg: &RunConfig,
    mesh: &TriMesh<T>,
    trace: &BoundaryTrace<T>,
    k: usize,
    refinement: &RefineStats,
) -> Result<(Smoother<T>, IterationRecord)> {
    let locator = Locator::new(mesh);
    let fem = FemSystem::assemble(mesh, &locator, data)?;
    let (alpha, gcv_score) = match cfg.alpha {
        AlphaChoice::Fixed(a) => (a, None),
        AlphaChoice::Gcv => {
            let problem = FemGcv::with_boundary_fn(mesh, &fem, |a| trace.values(a));
            let sel = select_alpha(&problem, &cfg.gcv)?;
            (sel.alpha, Some(sel.score))
        }
    };
    let alpha_t = T::lit(alpha);
    let smoother = Smoother::fit(mesh, &fem, alpha_t, &trace.values(alpha_t))?;
    let record = IterationRecord {
        iteration: k,
        nodes: mesh.num_nodes(),
        triangles: mesh.num_triangles(),
        alpha,
        gcv_score,
        rmse: smoother.rmse(&data.points, &data.values).as_f64(),
        max_residual: smoother.max_abs_residual(&data.points, &data.values).as_f64(),
        solve_time_s: (!cfg.reproducible).then_some(smoother.diagnostics.solve_time_s),
        near_boundary_ratio: mesh
            .near_boundary_ratio(T::lit(cfg.near_boundary_radius))
            .ok()
            .map(|r| r.as_f64()),
        marked_edges: refinement.marked,
        refined_edges: refinement.refined,
        waves: refinement.waves,
        dropped_points: fem.projection.dropped,
        system_nnz: smoother.diagnostics.system_nnz,
        constraint_residual: smoother.diagnostics.constraint_residual,
        indicator: refinement.summary.clone(),
    };
    log::info!(
        "iteration {k}: {} nodes, alpha {alpha:e}, rmse {:e}",
        record.nodes,
        record.rmse
    );
    Ok((smoother, record))
}

/// Mark and bisect until the node count at least doubles.
///
/// After each wave the smoother is carried to the refined mesh by linear
/// interpolation (new boundary nodes take the boundary strategy's value).
/// Auxiliary values of surviving edges are kept; only new refinable edges are
/// evaluated. Recovery values are recomputed on the carried smoother.
fn refine_adaptive<T: Real>(
    data: &DataSet<T>,
    cfg: &RunConfig,
    smoother: &Smoother<T>,
    mesh: &mut TriMesh<T>,
    trace: &mut BoundaryTrace<T>,
    strategy: &BoundaryStrategy<T>,
) -> Result<RefineStats> {
    let alpha = smoother.alpha;
    let target = 2 * mesh.num_nodes();
    let mut field = match cfg.indicator {
        IndicatorKind::Recovery => recovery_field(smoother)?,
        IndicatorKind::Auxiliary => {
            let ctx = AuxiliaryContext::new(smoother, data, alpha);
            let edges = mesh.refinable_edges();
            let vals = auxiliary_values(&ctx, &edges)?;
            IndicatorField {
                kind: IndicatorKind::Auxiliary,
                edges: edges.into_iter().zip(vals).collect(),
                triangles: Vec::new(),
            }
        }
    };
    let mut stats = RefineStats {
        summary: Some(field.summary()),
        ..RefineStats::default()
    };
    let mut fields = [
        smoother.c.clone(),
        smoother.g1.clone(),
        smoother.g2.clone(),
        smoother.w.clone(),
    ];
    while mesh.num_nodes() < target {
        let old = field.edge_values(mesh);
        let marked = mark(mesh, &field, cfg.gamma)?;
        let report = mesh.refine_wave(&marked)?;
        stats.waves += 1;
        log::debug!("wave {} marked {} nodes {}", stats.waves, marked.len(), mesh.num_nodes());
        stats.marked += marked.len();
        stats.refined += report.bisected;
        if report.new_nodes.is_empty() {
            log::warn!("refinement wave added no nodes; stopping the inner loop");
            break;
        }
        trace.extend(mesh, strategy, &report.new_nodes)?;
        if mesh.num_nodes() >= target {
            break;
        }
        for f in fields.iter_mut() {
            f.resize(mesh.num_nodes(), T::zero());
        }
        for &i in &report.new_nodes {
            let v = match trace.get(i) {
                Some(t) => [t[0], t[1], t[2], -alpha * t[3]],
                None => {
                    let [a, b] = mesh.origin(i).ok_or(Error::NoNeighbors)?;
                    let half = T::lit(0.5);
                    std::array::from_fn(|k| (fields[k][a] + fields[k][b]) * half)
                }
            };
            for kk in 0..4 {
                fields[kk][i] = v[kk];
            }
        }
        let carried = Smoother::from_fields(mesh, fields.clone(), alpha)?;
        // Surviving edges keep their values; only edges created by this
        // wave are evaluated on the carried smoother.
        let fresh: Vec<EdgeKey> = mesh
            .refinable_edges()
            .into_iter()
            .filter(|e| !old.contains_key(e))
            .collect();
        let mut edges: BTreeMap<EdgeKey, T> = mesh
            .refinable_edges()
            .into_iter()
            .filter_map(|e| old.get(&e).map(|v| (e, *v)))
            .collect();
        match cfg.indicator {
            IndicatorKind::Recovery => {
                let all = recovery_field(&carried)?.edge_values(mesh);
                edges.extend(fresh.into_iter().filter_map(|e| all.get(&e).map(|v| (e, *v))));
            }
            IndicatorKind::Auxiliary => {
                let ctx = AuxiliaryContext::new(&carried, data, alpha);
                let vals = auxiliary_values(&ctx, &fresh)?;
                edges.extend(fresh.into_iter().zip(vals));
            }
        }
        field = IndicatorField::from_edges(cfg.indicator, edges);
    }
    Ok(stats)
}
