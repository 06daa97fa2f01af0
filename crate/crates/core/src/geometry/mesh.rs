//! Conforming triangular meshes refined by newest-node bisection.
//!
//! Triangles are stored counter-clockwise with one vertex labelled as the
//! newest node; the edge opposite that vertex is the triangle's base edge.
//! Bisecting a triangle joins its newest node to the midpoint of the base
//! edge, and the midpoint becomes the newest node of both children.

use super::point::{orient2, Point2};
use crate::error::{Error, Result};
use crate::scalar::Real;
use std::collections::{BTreeMap, HashMap};

/// Undirected edge identified by its two node ids (smaller id first).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeKey(usize, usize);

impl EdgeKey {
    pub fn new(a: usize, b: usize) -> Self {
        if a < b {
            EdgeKey(a, b)
        } else {
            EdgeKey(b, a)
        }
    }

    pub fn nodes(self) -> [usize; 2] {
        [self.0, self.1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Triangle {
    pub nodes: [usize; 3],
    /// Index (0, 1 or 2) into `nodes` of the newest node.
    pub newest: u8,
    /// Number of bisections separating this triangle from the initial mesh.
    pub generation: u32,
    uid: u64,
}

impl Triangle {
    pub fn new(nodes: [usize; 3], newest: u8) -> Self {
        Triangle {
            nodes,
            newest,
            generation: 0,
            uid: 0,
        }
    }

    pub fn newest_node(&self) -> usize {
        self.nodes[self.newest as usize]
    }

    pub fn base_edge(&self) -> EdgeKey {
        let k = self.newest as usize;
        EdgeKey::new(self.nodes[(k + 1) % 3], self.nodes[(k + 2) % 3])
    }

    pub fn edges(&self) -> [EdgeKey; 3] {
        let [a, b, c] = self.nodes;
        [EdgeKey::new(a, b), EdgeKey::new(b, c), EdgeKey::new(c, a)]
    }
}

/// Triangles incident to an edge (one for boundary edges, two otherwise).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Incidence {
    tris: [usize; 2],
    count: u8,
}

impl Incidence {
    fn one(t: usize) -> Self {
        Incidence {
            tris: [t, usize::MAX],
            count: 1,
        }
    }

    pub fn triangles(&self) -> &[usize] {
        &self.tris[..self.count as usize]
    }

    pub fn other(&self, t: usize) -> Option<usize> {
        self.triangles().iter().copied().find(|&s| s != t)
    }

    fn push(&mut self, t: usize) -> Result<()> {
        if self.count >= 2 {
            return Err(Error::NotRefinable(
                "edge shared by more than two triangles".into(),
            ));
        }
        self.tris[self.count as usize] = t;
        self.count += 1;
        Ok(())
    }

    fn remove(&mut self, t: usize) {
        if self.count == 2 && self.tris[0] == t {
            self.tris[0] = self.tris[1];
        }
        self.tris[1] = usize::MAX;
        self.count -= 1;
    }
}

/// Refinement flags of an edge.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EdgeFlags {
    /// Base edge of every incident triangle (a triangle pair, or a boundary base edge).
    pub base: bool,
    /// Base edge of exactly one of its two incident triangles.
    pub interface_base: bool,
    pub boundary: bool,
}

impl EdgeFlags {
    pub fn refinable(&self) -> bool {
        self.base || self.interface_base
    }
}

/// Result of bisecting a list of marked edges.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WaveReport {
    pub bisected: usize,
    pub skipped: usize,
    pub new_nodes: Vec<usize>,
}

const MAX_RECURSION: usize = 256;

#[derive(Clone, Debug)]
pub struct TriMesh<T> {
    nodes: Vec<Point2<T>>,
    boundary: Vec<bool>,
    origin: Vec<Option<EdgeKey>>,
    tris: Vec<Triangle>,
    edges: BTreeMap<EdgeKey, Incidence>,
    next_uid: u64,
    max_recursion_seen: usize,
}

impl<T: Real> TriMesh<T> {
    /// Build a mesh from raw nodes and labelled triangles.
    ///
    /// Clockwise triangles are reoriented; boundary flags are derived from
    /// edge incidence.
    pub fn from_parts(nodes: Vec<Point2<T>>, triangles: Vec<Triangle>) -> Result<Self> {
        let mut tris = Vec::with_capacity(triangles.len());
        for (id, mut t) in triangles.into_iter().enumerate() {
            if t.nodes.iter().any(|&n| n >= nodes.len()) || t.newest > 2 {
                return Err(Error::DimensionMismatch(format!(
                    "triangle {id} references a missing node"
                )));
            }
            let [a, b, c] = t.nodes;
            let o = orient2(nodes[a], nodes[b], nodes[c]);
            if o.abs() <= T::lit(1e-14) {
                return Err(Error::DegenerateTriangle {
                    tri: id,
                    area: o.as_f64() / 2.0,
                });
            }
            if o < T::zero() {
                t.nodes.swap(1, 2);
                t.newest = match t.newest {
                    1 => 2,
                    2 => 1,
                    k => k,
                };
            }
            t.uid = id as u64;
            tris.push(t);
        }
        let n_nodes = nodes.len();
        let mut mesh = TriMesh {
            nodes,
            boundary: vec![false; n_nodes],
            origin: vec![None; n_nodes],
            next_uid: tris.len() as u64,
            tris,
            edges: BTreeMap::new(),
            max_recursion_seen: 0,
        };
        mesh.rebuild_edges()?;
        mesh.recompute_boundary_flags();
        Ok(mesh)
    }

    /// Right-isosceles triangulation of `[0,1]^2` on a 5x5 node grid,
    /// followed by `level` uniform refinements (each doubling resolution).
    pub fn square(level: usize) -> Self {
        let k = 4usize;
        let h = T::one() / T::from_usize_lossy(k);
        let mut nodes = Vec::with_capacity((k + 1) * (k + 1));
        for j in 0..=k {
            for i in 0..=k {
                nodes.push(Point2::new(
                    h * T::from_usize_lossy(i),
                    h * T::from_usize_lossy(j),
                ));
            }
        }
        let id = |i: usize, j: usize| j * (k + 1) + i;
        let mut tris = Vec::with_capacity(2 * k * k);
        for j in 0..k {
            for i in 0..k {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                // Diagonal a-c is the hypotenuse of both halves; the right-angle
                // corner is the newest node.
                tris.push(Triangle::new([b, c, a], 0));
                tris.push(Triangle::new([d, a, c], 0));
            }
        }
        let mut mesh = Self::from_parts(nodes, tris).expect("square mesh is valid");
        for _ in 0..level {
            mesh.uniform_refine();
        }
        mesh
    }

    fn rebuild_edges(&mut self) -> Result<()> {
        self.edges.clear();
        for (t, tri) in self.tris.iter().enumerate() {
            for e in tri.edges() {
                match self.edges.get_mut(&e) {
                    Some(inc) => inc.push(t)?,
                    None => {
                        self.edges.insert(e, Incidence::one(t));
                    }
                }
            }
        }
        Ok(())
    }

    /// Mark every node touching an edge with a single incident triangle.
    pub fn recompute_boundary_flags(&mut self) {
        self.boundary.iter_mut().for_each(|b| *b = false);
        for (e, inc) in &self.edges {
            if inc.count == 1 {
                self.boundary[e.0] = true;
                self.boundary[e.1] = true;
            }
        }
    }

    pub(crate) fn set_boundary_flags(&mut self, flags: Vec<bool>) -> Result<()> {
        if flags.len() != self.nodes.len() {
            return Err(Error::DimensionMismatch("boundary flag count".into()));
        }
        self.boundary = flags;
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.tris.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, i: usize) -> Point2<T> {
        self.nodes[i]
    }

    pub fn nodes(&self) -> &[Point2<T>] {
        &self.nodes
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.boundary[i]).collect()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| !self.boundary[i]).collect()
    }

    /// Endpoints of the edge whose bisection created node `i`, if any.
    pub fn origin(&self, i: usize) -> Option<[usize; 2]> {
        self.origin[i].map(EdgeKey::nodes)
    }

    pub fn triangle(&self, t: usize) -> &Triangle {
        &self.tris[t]
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.tris
    }

    pub fn vertices(&self, t: usize) -> [Point2<T>; 3] {
        let [a, b, c] = self.tris[t].nodes;
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn area(&self, t: usize) -> T {
        let [a, b, c] = self.vertices(t);
        orient2(a, b, c) * T::lit(0.5)
    }

    pub fn total_area(&self) -> T {
        (0..self.tris.len()).map(|t| self.area(t)).sum()
    }

    pub fn centroid(&self, t: usize) -> Point2<T> {
        let [a, b, c] = self.vertices(t);
        let third = T::one() / T::lit(3.0);
        Point2::new((a.x + b.x + c.x) * third, (a.y + b.y + c.y) * third)
    }

    pub fn edge_keys(&self) -> impl Iterator<Item = EdgeKey> + '_ {
        self.edges.keys().copied()
    }

    pub fn has_edge(&self, e: EdgeKey) -> bool {
        self.edges.contains_key(&e)
    }

    pub fn edge_triangles(&self, e: EdgeKey) -> &[usize] {
        self.edges.get(&e).map(|i| i.triangles()).unwrap_or(&[])
    }

    pub fn edge_length(&self, e: EdgeKey) -> T {
        self.nodes[e.0].dist(self.nodes[e.1])
    }

    pub fn min_edge_length(&self) -> T {
        self.edges
            .keys()
            .map(|&e| self.edge_length(e))
            .fold(T::infinity(), |a, b| a.min(b))
    }

    pub fn edge_flags(&self, e: EdgeKey) -> EdgeFlags {
        let Some(inc) = self.edges.get(&e) else {
            return EdgeFlags::default();
        };
        let based = inc
            .triangles()
            .iter()
            .filter(|&&t| self.tris[t].base_edge() == e)
            .count();
        let n = inc.count as usize;
        EdgeFlags {
            base: based == n,
            interface_base: n == 2 && based == 1,
            boundary: n == 1,
        }
    }

    /// Edges that are the base edge of at least one incident triangle.
    pub fn refinable_edges(&self) -> Vec<EdgeKey> {
        let mut out: Vec<EdgeKey> = self.tris.iter().map(Triangle::base_edge).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Triangles sharing an edge with `t`.
    pub fn neighbors(&self, t: usize) -> impl Iterator<Item = usize> + '_ {
        self.tris[t]
            .edges()
            .into_iter()
            .filter_map(move |e| self.edges[&e].other(t))
    }

    /// Deepest interface-edge recursion reached by any bisection so far.
    pub fn max_recursion_depth(&self) -> usize {
        self.max_recursion_seen
    }

    /// Bisect a base or interface base edge, recursively refining coarser
    /// neighbours first. Returns the ids of all nodes created.
    pub fn bisect(&mut self, e: EdgeKey) -> Result<Vec<usize>> {
        let inc = *self
            .edges
            .get(&e)
            .ok_or_else(|| Error::NotRefinable(format!("edge {e:?} not in mesh")))?;
        let t = inc
            .triangles()
            .iter()
            .copied()
            .filter(|&t| self.tris[t].base_edge() == e)
            .min()
            .ok_or_else(|| {
                Error::NotRefinable(format!("edge {e:?} is not a base edge of any triangle"))
            })?;
        self.refine_triangle(t)
    }

    /// Bisect triangle `t` along its base edge (with any required recursion).
    pub fn refine_triangle(&mut self, t: usize) -> Result<Vec<usize>> {
        if t >= self.tris.len() {
            return Err(Error::NotRefinable(format!("triangle {t} not in mesh")));
        }
        let mut created = Vec::new();
        self.refine_rec(t, 0, &mut created)?;
        Ok(created)
    }

    fn refine_rec(&mut self, t: usize, depth: usize, created: &mut Vec<usize>) -> Result<()> {
        if depth > MAX_RECURSION {
            return Err(Error::NotRefinable(
                "interface base-edge recursion did not terminate".into(),
            ));
        }
        self.max_recursion_seen = self.max_recursion_seen.max(depth);
        let base = self.tris[t].base_edge();
        match self.edges[&base].other(t) {
            None => {
                let m = self.add_midpoint(base);
                created.push(m);
                self.split(t, m);
            }
            Some(n) if self.tris[n].base_edge() == base => {
                let m = self.add_midpoint(base);
                created.push(m);
                self.split(t, m);
                self.split(n, m);
            }
            Some(n) => {
                // Coarser neighbour: refine it so that its child across `base`
                // shares it as base edge, then retry.
                self.refine_rec(n, depth + 1, created)?;
                self.refine_rec(t, depth, created)?;
            }
        }
        Ok(())
    }

    fn add_midpoint(&mut self, e: EdgeKey) -> usize {
        let m = self.nodes.len();
        self.nodes.push(self.nodes[e.0].midpoint(self.nodes[e.1]));
        self.boundary.push(self.edges[&e].count == 1);
        self.origin.push(Some(e));
        m
    }

    fn split(&mut self, t: usize, m: usize) {
        let tri = self.tris[t];
        let k = tri.newest as usize;
        let apex = tri.nodes[k];
        let b1 = tri.nodes[(k + 1) % 3];
        let b2 = tri.nodes[(k + 2) % 3];
        for e in tri.edges() {
            let inc = self.edges.get_mut(&e).expect("edge of live triangle");
            inc.remove(t);
            if inc.count == 0 {
                self.edges.remove(&e);
            }
        }
        let generation = tri.generation + 1;
        let left = Triangle {
            nodes: [apex, b1, m],
            newest: 2,
            generation,
            uid: self.next_uid,
        };
        let right = Triangle {
            nodes: [apex, m, b2],
            newest: 1,
            generation,
            uid: self.next_uid + 1,
        };
        self.next_uid += 2;
        let r = self.tris.len();
        self.tris[t] = left;
        self.tris.push(right);
        for (id, child) in [(t, left), (r, right)] {
            for e in child.edges() {
                match self.edges.get_mut(&e) {
                    Some(inc) => inc.push(id).expect("conforming bisection"),
                    None => {
                        self.edges.insert(e, Incidence::one(id));
                    }
                }
            }
        }
    }

    /// Bisect every triangle once along its base edge.
    pub fn uniform_pass(&mut self) -> Vec<usize> {
        let start_uid = self.next_uid;
        let mut created = Vec::new();
        let mut t = 0;
        while t < self.tris.len() {
            if self.tris[t].uid < start_uid {
                self.refine_rec(t, 0, &mut created)
                    .expect("uniform bisection of a conforming mesh");
            }
            t += 1;
        }
        created
    }

    /// One uniform refinement level: two bisection passes, halving the mesh size.
    pub fn uniform_refine(&mut self) -> Vec<usize> {
        let mut created = self.uniform_pass();
        created.extend(self.uniform_pass());
        created
    }

    /// Bisect each marked edge in order, skipping edges already consumed by
    /// recursive refinement earlier in the same wave.
    pub fn refine_wave(&mut self, marked: &[EdgeKey]) -> Result<WaveReport> {
        let mut report = WaveReport::default();
        for &e in marked {
            if !self.edges.contains_key(&e) || !self.edge_flags(e).refinable() {
                report.skipped += 1;
                continue;
            }
            let created = self.bisect(e)?;
            report.bisected += 1;
            report.new_nodes.extend(created);
        }
        Ok(report)
    }

    /// Validate edge incidence, orientation and absence of hanging nodes.
    pub fn check_conformity(&self) -> std::result::Result<(), String> {
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        let mut incidence: BTreeMap<EdgeKey, usize> = BTreeMap::new();
        for (t, tri) in self.tris.iter().enumerate() {
            if self.area(t) <= T::zero() {
                return Err(format!("triangle {t} has non-positive area"));
            }
            let [a, b, c] = tri.nodes;
            for (u, v) in [(a, b), (b, c), (c, a)] {
                if directed.insert((u, v), t).is_some() {
                    return Err(format!("directed edge {u}->{v} used twice"));
                }
                *incidence.entry(EdgeKey::new(u, v)).or_default() += 1;
            }
        }
        if incidence.len() != self.edges.len() {
            return Err("stored edge map is stale".into());
        }
        let mut coords: HashMap<(u64, u64), usize> = HashMap::new();
        for (i, p) in self.nodes.iter().enumerate() {
            coords.insert((p.x.as_f64().to_bits(), p.y.as_f64().to_bits()), i);
        }
        for (e, &count) in &incidence {
            let Some(stored) = self.edges.get(e) else {
                return Err(format!("edge {e:?} missing from edge map"));
            };
            if stored.count as usize != count {
                return Err(format!("edge {e:?} incidence mismatch"));
            }
            match count {
                2 => {
                    let [u, v] = e.nodes();
                    if !(directed.contains_key(&(u, v)) && directed.contains_key(&(v, u))) {
                        return Err(format!("edge {e:?} has inconsistent orientation"));
                    }
                }
                1 => {
                    let m = self.nodes[e.0].midpoint(self.nodes[e.1]);
                    if coords.contains_key(&(m.x.as_f64().to_bits(), m.y.as_f64().to_bits())) {
                        return Err(format!("hanging node on edge {e:?}"));
                    }
                    if !(self.boundary[e.0] && self.boundary[e.1]) {
                        return Err(format!("boundary edge {e:?} has interior endpoint"));
                    }
                }
                _ => return Err(format!("edge {e:?} shared by {count} triangles")),
            }
        }
        Ok(())
    }

    /// Interior angles (degrees) of triangle `t`.
    pub fn angles_deg(&self, t: usize) -> [f64; 3] {
        let v = self.vertices(t).map(|p| p.cast::<f64>());
        let mut out = [0.0; 3];
        for i in 0..3 {
            let a = v[i];
            let b = v[(i + 1) % 3];
            let c = v[(i + 2) % 3];
            let (ux, uy) = (b.x - a.x, b.y - a.y);
            let (wx, wy) = (c.x - a.x, c.y - a.y);
            let cos = (ux * wx + uy * wy) / ((ux * ux + uy * uy).sqrt() * (wx * wx + wy * wy).sqrt());
            out[i] = cos.clamp(-1.0, 1.0).acos().to_degrees();
        }
        out
    }

    /// Smallest and largest interior angle over the mesh, in degrees.
    pub fn angle_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for t in 0..self.tris.len() {
            for a in self.angles_deg(t) {
                lo = lo.min(a);
                hi = hi.max(a);
            }
        }
        (lo, hi)
    }

    /// Fraction of interior nodes lying closer than `radius` to some boundary node.
    pub fn near_boundary_ratio(&self, radius: T) -> Result<T> {
        if radius <= T::zero() {
            return Err(Error::InvalidConfig("radius must be positive".into()));
        }
        let interior = self.interior_nodes();
        if interior.is_empty() {
            return Err(Error::ZeroInterior);
        }
        let r = radius.as_f64();
        let cell = |p: Point2<T>| {
            (
                (p.x.as_f64() / r).floor() as i64,
                (p.y.as_f64() / r).floor() as i64,
            )
        };
        let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for i in self.boundary_nodes() {
            grid.entry(cell(self.nodes[i])).or_default().push(i);
        }
        let r2 = radius * radius;
        let close = interior
            .iter()
            .filter(|&&i| {
                let p = self.nodes[i];
                let (cx, cy) = cell(p);
                (-1..=1).any(|dx| {
                    (-1..=1).any(|dy| {
                        grid.get(&(cx + dx, cy + dy)).is_some_and(|bucket| {
                            bucket.iter().any(|&b| self.nodes[b].dist2(p) < r2)
                        })
                    })
                })
            })
            .count();
        Ok(T::from_usize_lossy(close) / T::from_usize_lossy(interior.len()))
    }

    /// Mesh made of the listed triangles, with nodes renumbered in increasing
    /// order of their old ids and boundary flags recomputed.
    ///
    /// Returns the new mesh and the old id of each new node.
    pub fn extract(&self, tri_ids: &[usize]) -> (Self, Vec<usize>) {
        let mut ids: Vec<usize> = tri_ids.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let mut used = vec![false; self.nodes.len()];
        for &t in &ids {
            for n in self.tris[t].nodes {
                used[n] = true;
            }
        }
        let mut new_id = vec![usize::MAX; self.nodes.len()];
        let mut old_of_new = Vec::new();
        for (i, &u) in used.iter().enumerate() {
            if u {
                new_id[i] = old_of_new.len();
                old_of_new.push(i);
            }
        }
        let nodes = old_of_new.iter().map(|&i| self.nodes[i]).collect();
        let tris: Vec<Triangle> = ids
            .iter()
            .enumerate()
            .map(|(uid, &t)| {
                let tri = self.tris[t];
                Triangle {
                    nodes: tri.nodes.map(|n| new_id[n]),
                    newest: tri.newest,
                    generation: tri.generation,
                    uid: uid as u64,
                }
            })
            .collect();
        let mut mesh = TriMesh {
            nodes,
            boundary: vec![false; old_of_new.len()],
            origin: vec![None; old_of_new.len()],
            next_uid: tris.len() as u64,
            tris,
            edges: BTreeMap::new(),
            max_recursion_seen: 0,
        };
        mesh.rebuild_edges().expect("subset of a conforming mesh");
        mesh.recompute_boundary_flags();
        (mesh, old_of_new)
    }
}
