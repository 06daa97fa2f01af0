//! Point location over a uniform background bin grid.

use super::mesh::TriMesh;
use super::point::{orient2, Point2, Rect};
use crate::scalar::Real;

/// Barycentric coordinates of `p` in triangle `(a, b, c)`.
#[inline]
pub fn barycentric<T: Real>(a: Point2<T>, b: Point2<T>, c: Point2<T>, p: Point2<T>) -> [T; 3] {
    let det = orient2(a, b, c);
    let l0 = orient2(p, b, c) / det;
    let l1 = orient2(a, p, c) / det;
    [l0, l1, T::one() - l0 - l1]
}

/// Containment tolerance on barycentric coordinates.
pub const BARY_TOL: f64 = 1e-12;

/// Bin index over a fixed mesh. Rebuild after the mesh changes.
#[derive(Clone, Debug)]
pub struct Locator<T> {
    origin: Point2<T>,
    bin: T,
    nx: usize,
    ny: usize,
    bins: Vec<Vec<u32>>,
    n_tris: usize,
}

impl<T: Real> Locator<T> {
    pub fn new(mesh: &TriMesh<T>) -> Self {
        let bbox = Rect::bounding(mesh.nodes()).unwrap_or(Rect::new(
            Point2::new(T::zero(), T::zero()),
            Point2::new(T::one(), T::one()),
        ));
        let w = bbox.width().max(bbox.height()).max(T::lit(1e-300));
        let n_tris = mesh.num_triangles().max(1);
        // Bins at least as large as the shortest edge, and never more than
        // about one bin per triangle.
        let area_scale = (bbox.width().max(w * T::lit(1e-6)) * bbox.height().max(w * T::lit(1e-6))
            / T::from_usize_lossy(n_tris))
        .sqrt();
        let bin = mesh.min_edge_length().max(area_scale).max(w * T::lit(1e-6));
        let nx = ((bbox.width() / bin).as_f64().floor() as usize + 1).max(1);
        let ny = ((bbox.height() / bin).as_f64().floor() as usize + 1).max(1);
        let mut bins = vec![Vec::new(); nx * ny];
        let mut loc = Locator {
            origin: bbox.min,
            bin,
            nx,
            ny,
            bins: Vec::new(),
            n_tris: mesh.num_triangles(),
        };
        for t in 0..mesh.num_triangles() {
            let r = Rect::bounding(&mesh.vertices(t)).expect("three vertices");
            let (i0, j0) = loc.cell_clamped(r.min);
            let (i1, j1) = loc.cell_clamped(r.max);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    bins[j * nx + i].push(t as u32);
                }
            }
        }
        loc.bins = bins;
        loc
    }

    fn cell_clamped(&self, p: Point2<T>) -> (usize, usize) {
        let fx = ((p.x - self.origin.x) / self.bin).as_f64().floor();
        let fy = ((p.y - self.origin.y) / self.bin).as_f64().floor();
        let cx = fx.clamp(0.0, (self.nx - 1) as f64) as usize;
        let cy = fy.clamp(0.0, (self.ny - 1) as f64) as usize;
        (cx, cy)
    }

    /// Number of triangles the index was built for.
    pub fn num_triangles(&self) -> usize {
        self.n_tris
    }

    /// Lowest-id triangle whose closed hull contains `p`.
    pub fn locate(&self, mesh: &TriMesh<T>, p: Point2<T>) -> Option<usize> {
        self.locate_with_bary(mesh, p).map(|(t, _)| t)
    }

    /// Like [`Locator::locate`], also returning the barycentric coordinates.
    pub fn locate_with_bary(&self, mesh: &TriMesh<T>, p: Point2<T>) -> Option<(usize, [T; 3])> {
        if !p.is_finite() {
            return None;
        }
        let fx = ((p.x - self.origin.x) / self.bin).as_f64();
        let fy = ((p.y - self.origin.y) / self.bin).as_f64();
        let tol = T::lit(BARY_TOL);
        let slack = 1e-9;
        if fx < -slack || fy < -slack || fx > self.nx as f64 + slack || fy > self.ny as f64 + slack
        {
            return None;
        }
        // A point on a bin border may belong to triangles registered only in
        // the neighbouring bin, so scan every bin the point touches.
        let mut best: Option<(usize, [T; 3])> = None;
        let xs = candidates(fx, self.nx);
        let ys = candidates(fy, self.ny);
        for &j in ys.iter().flatten() {
            for &i in xs.iter().flatten() {
                for &t in &self.bins[j * self.nx + i] {
                    let t = t as usize;
                    if best.is_some_and(|(b, _)| b <= t) {
                        break;
                    }
                    let [a, b, c] = mesh.vertices(t);
                    let l = barycentric(a, b, c, p);
                    if l.iter().all(|&v| v >= -tol) {
                        best = Some((t, l));
                        break;
                    }
                }
            }
        }
        best
    }
}

fn candidates(f: f64, n: usize) -> [Option<usize>; 2] {
    let base = f.floor();
    let idx = (base.max(0.0) as usize).min(n - 1);
    let frac = f - base;
    let eps = 1e-9;
    let mut out = [Some(idx), None];
    if frac < eps && idx > 0 && base as usize == idx {
        out[1] = Some(idx - 1);
    } else if frac > 1.0 - eps && idx + 1 < n {
        out[1] = Some(idx + 1);
    }
    out
}
