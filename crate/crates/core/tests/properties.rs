use proptest::prelude::*;
use tpsfem::assembly::FemSystem;
use tpsfem::boundary::{BoundaryStrategy, BoundaryTrace};
use tpsfem::data::{DataSet, Normalization};
use tpsfem::driver::{IterationRecord, RunConfig, StopReason};
use tpsfem::geometry::{EdgeKey, Locator, Point2, TriMesh};
use tpsfem::indicators::{mark, recovery_field};
use tpsfem::rbf::CsrbfKernel;
use tpsfem::report::{FinalMetrics, RunReport};
use tpsfem::saddle::{BoundaryValues, Smoother};
use tpsfem::tps::fit_tps;

fn arb_points(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), n)
}

fn is_right_isosceles(angles: [f64; 3]) -> bool {
    let mut a = angles;
    a.sort_by(f64::total_cmp);
    (a[0] - 45.0).abs() < 1e-9 && (a[1] - 45.0).abs() < 1e-9 && (a[2] - 90.0).abs() < 1e-9
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_waves_keep_mesh_laws(picks in prop::collection::vec(prop::collection::vec(any::<prop::sample::Index>(), 1..12), 1..8)) {
        let mut mesh = TriMesh::<f64>::square(0);
        for wave in picks {
            let edges = mesh.refinable_edges();
            let mut marked: Vec<EdgeKey> = wave.iter().map(|i| edges[i.index(edges.len())]).collect();
            marked.sort_unstable();
            marked.dedup();
            let before = mesh.num_nodes();
            let r = mesh.refine_wave(&marked).unwrap();
            prop_assert_eq!(mesh.num_nodes(), before + r.new_nodes.len());
            prop_assert!(mesh.check_conformity().is_ok());
        }
        prop_assert!((mesh.total_area() - 1.0).abs() < 1e-12);
        for t in 0..mesh.num_triangles() {
            prop_assert!(is_right_isosceles(mesh.angles_deg(t)));
        }
    }

    #[test]
    fn constraint_holds_for_random_data(pts in arb_points(5..80), seed in 0u64..1000, log_alpha in -8.0..0.0f64, passes in 0usize..3) {
        let mut mesh = TriMesh::<f64>::square(0);
        for _ in 0..passes {
            mesh.uniform_pass();
        }
        let points: Vec<Point2<f64>> = pts.iter().map(|&(x, y)| Point2::new(x, y)).collect();
        let values: Vec<f64> = points.iter().enumerate().map(|(i, p)| (p.x * 5.0 + seed as f64).sin() + 0.1 * i as f64 % 0.7).collect();
        let data = DataSet::new(points, values).unwrap();
        let fem = FemSystem::assemble(&mesh, &Locator::new(&mesh), &data).unwrap();
        let bv = BoundaryValues::from_fn(&mesh, |i| {
            let p = mesh.node(i);
            [p.x - p.y, 1.0, -1.0, 0.0]
        });
        let s = Smoother::fit(&mesh, &fem, 10f64.powf(log_alpha), &bv).unwrap();
        let cmax = s.c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(s.constraint_residual(&fem) <= 1e-8 * (1.0 + cmax));
    }

    #[test]
    fn data_order_does_not_matter(pts in arb_points(10..60), rot in 1usize..9) {
        let mesh = TriMesh::<f64>::square(0);
        let points: Vec<Point2<f64>> = pts.iter().map(|&(x, y)| Point2::new(x, y)).collect();
        let values: Vec<f64> = points.iter().map(|p| p.x * p.y + p.x).collect();
        let mut p2 = points.clone();
        let mut v2 = values.clone();
        let k = rot % points.len();
        p2.rotate_left(k);
        v2.rotate_left(k);
        let bv = BoundaryValues::zeros(&mesh);
        let fit = |p: Vec<Point2<f64>>, v: Vec<f64>| {
            let data = DataSet::new(p, v).unwrap();
            let fem = FemSystem::assemble(&mesh, &Locator::new(&mesh), &data).unwrap();
            Smoother::fit(&mesh, &fem, 1e-3, &bv).unwrap()
        };
        let (a, b) = (fit(points, values), fit(p2, v2));
        for i in 0..mesh.num_nodes() {
            prop_assert!((a.c[i] - b.c[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn tps_reproduces_affine(pts in arb_points(4..40), a in -2.0..2.0f64, b in -2.0..2.0f64, c in -2.0..2.0f64, log_alpha in -6.0..0.0f64) {
        let centers: Vec<Point2<f64>> = pts.iter().map(|&(x, y)| Point2::new(x, y)).collect();
        // Skip nearly collinear or coincident draws.
        let (mx, my) = centers.iter().fold((0.0, 0.0), |s, p| (s.0 + p.x, s.1 + p.y));
        let (mx, my) = (mx / centers.len() as f64, my / centers.len() as f64);
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for p in &centers {
            sxx += (p.x - mx).powi(2);
            syy += (p.y - my).powi(2);
            sxy += (p.x - mx) * (p.y - my);
        }
        prop_assume!(sxx * syy - sxy * sxy > 1e-3);
        let y: Vec<f64> = centers.iter().map(|p| a + b * p.x + c * p.y).collect();
        let m = fit_tps(&centers, &y, 10f64.powf(log_alpha)).unwrap();
        for p in [Point2::new(0.3, 0.7), Point2::new(-0.5, 1.2), Point2::new(0.9, 0.1)] {
            prop_assert!((m.eval(p) - (a + b * p.x + c * p.y)).abs() < 1e-8);
            let g = m.eval_grad(p);
            prop_assert!((g[0] - b).abs() < 1e-7 && (g[1] - c).abs() < 1e-7);
        }
    }

    #[test]
    fn marking_is_monotone_in_gamma(vals in prop::collection::vec(0.0..1.0f64, 32), g1 in 0.0..1.0f64, g2 in 0.0..1.0f64) {
        let mesh = TriMesh::<f64>::square(0);
        let z = vec![0.0; mesh.num_nodes()];
        let c: Vec<f64> = (0..mesh.num_nodes()).map(|i| vals[i % vals.len()]).collect();
        let s = Smoother::from_fields(&mesh, [c, z.clone(), z.clone(), z], 1.0).unwrap();
        let field = recovery_field(&s).unwrap();
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let wide = mark(&mesh, &field, lo).unwrap();
        let narrow = mark(&mesh, &field, hi).unwrap();
        prop_assert!(narrow.iter().all(|e| wide.contains(e)));
        prop_assert!(!narrow.is_empty());
    }

    #[test]
    fn csrbf_kernels_are_compact_and_nonnegative(r in 0.0..3.0f64) {
        for k in [CsrbfKernel::Buhmann, CsrbfKernel::Wendland] {
            let v = k.eval(r);
            prop_assert!(v >= -1e-15);
            if r >= 1.0 {
                prop_assert_eq!(v, 0.0);
            }
            prop_assert!(k.eval(r) <= k.eval(0.0) + 1e-15);
        }
    }

    #[test]
    fn normalization_round_trips(pts in prop::collection::vec((-1e3..1e3f64, -1e3..1e3f64, -50.0..50.0f64), 2..30)) {
        let xy: Vec<[f64; 2]> = pts.iter().map(|p| [p.0, p.1]).collect();
        let y: Vec<f64> = pts.iter().map(|p| p.2).collect();
        prop_assume!(Normalization::fit(&xy, &y).is_ok());
        let n = Normalization::fit(&xy, &y).unwrap();
        for (p, v) in xy.iter().zip(&y) {
            let q = n.point(*p);
            prop_assert!(q[0] >= 0.2 - 1e-12 && q[0] <= 0.8 + 1e-12 && q[1] >= 0.2 - 1e-12 && q[1] <= 0.8 + 1e-12);
            let back = n.point_inverse(q);
            prop_assert!((back[0] - p[0]).abs() < 1e-9 && (back[1] - p[1]).abs() < 1e-9);
            prop_assert!((n.value_inverse(n.value(*v)) - v).abs() < 1e-9);
        }
    }

    #[test]
    fn reports_round_trip(rmse in any::<f64>().prop_filter("finite", |v| v.is_finite()), alpha in 1e-12..1.0f64, nodes in 1usize..100_000, seed in any::<u64>()) {
        let rec = IterationRecord {
            iteration: 0,
            nodes,
            triangles: 2 * nodes,
            alpha,
            gcv_score: Some(alpha * 3.1),
            rmse,
            max_residual: rmse.abs(),
            solve_time_s: Some(0.1 + alpha),
            near_boundary_ratio: None,
            marked_edges: 0,
            refined_edges: 0,
            waves: 0,
            dropped_points: 0,
            system_nnz: nodes * 7,
            constraint_residual: alpha * 1e-9,
            indicator: None,
        };
        let mut rep = RunReport::new("fit", &RunConfig { seed, ..RunConfig::default() }, seed).unwrap();
        rep.final_metrics = Some(FinalMetrics::from_record(&rec));
        rep.records.push(rec);
        rep.stop = Some(StopReason::Stagnation);
        let back = RunReport::from_jsonl(&rep.to_jsonl().unwrap()).unwrap();
        prop_assert_eq!(back, rep);
    }

    #[test]
    fn nodal_average_keeps_affine_boundary(a in -1.0..1.0f64, b in -1.0..1.0f64, c in -1.0..1.0f64, waves in 1usize..5) {
        let centers = vec![Point2::new(0.1, 0.1), Point2::new(0.9, 0.2), Point2::new(0.4, 0.8), Point2::new(0.7, 0.6)];
        let y: Vec<f64> = centers.iter().map(|p| a + b * p.x + c * p.y).collect();
        let strategy = BoundaryStrategy::NodalAverage(fit_tps(&centers, &y, 0.0).unwrap());
        let mut mesh = TriMesh::<f64>::square(0);
        let mut trace = BoundaryTrace::initial(&mesh, &strategy);
        for k in 0..waves {
            let edges = mesh.refinable_edges();
            let marked: Vec<EdgeKey> = edges.iter().copied().step_by(k + 2).collect();
            let r = mesh.refine_wave(&marked).unwrap();
            trace.extend(&mesh, &strategy, &r.new_nodes).unwrap();
        }
        for i in mesh.boundary_nodes() {
            let p = mesh.node(i);
            let t = trace.get(i).unwrap();
            prop_assert!((t[0] - (a + b * p.x + c * p.y)).abs() < 1e-9);
        }
    }
}
