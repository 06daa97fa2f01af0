//! Irregular domains built by removing triangles from a square mesh.

use super::locate::Locator;
use super::mesh::TriMesh;
use super::point::Point2;
use crate::error::{Error, Result};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Square,
    Irregular,
}

/// Closed polylines; the first loop is the outer boundary, the rest are holes.
#[derive(Clone, Debug, PartialEq)]
pub struct Polygon<T> {
    pub loops: Vec<Vec<Point2<T>>>,
}

impl<T: Real> Polygon<T> {
    pub fn new(loops: Vec<Vec<Point2<T>>>) -> Result<Self> {
        if loops.is_empty() || loops.iter().any(|l| l.len() < 3) {
            return Err(Error::InvalidConfig(
                "polygon loops need at least three vertices".into(),
            ));
        }
        Ok(Polygon { loops })
    }

    /// Even-odd containment over all loops.
    pub fn contains(&self, p: Point2<T>) -> bool {
        let mut inside = false;
        for ring in &self.loops {
            let n = ring.len();
            let mut j = n - 1;
            for i in 0..n {
                let (a, b) = (ring[i], ring[j]);
                if (a.y > p.y) != (b.y > p.y) {
                    let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                    if p.x < x {
                        inside = !inside;
                    }
                }
                j = i;
            }
        }
        inside
    }

    pub fn map_points(&self, f: impl Fn(Point2<T>) -> Point2<T>) -> Self {
        Polygon {
            loops: self
                .loops
                .iter()
                .map(|l| l.iter().map(|&p| f(p)).collect())
                .collect(),
        }
    }

    /// Parse `loop K` headers each followed by `K` lines of `x y`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut loops = Vec::new();
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        while let Some((ln, header)) = lines.next() {
            let mut parts = header.split_whitespace();
            if parts.next() != Some("loop") {
                return Err(Error::parse(ln, "expected `loop K`"));
            }
            let k: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::parse(ln, "bad vertex count"))?;
            let mut ring = Vec::with_capacity(k);
            for _ in 0..k {
                let (ln, l) = lines
                    .next()
                    .ok_or_else(|| Error::parse(ln, "polygon loop truncated"))?;
                let v: Vec<f64> = l
                    .split_whitespace()
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::parse(ln, e.to_string()))?;
                if v.len() != 2 {
                    return Err(Error::parse(ln, "expected two coordinates"));
                }
                ring.push(Point2::new(T::lit(v[0]), T::lit(v[1])));
            }
            loops.push(ring);
        }
        Polygon::new(loops)
    }
}

/// Remove triangles without data, keeping the result edge-connected.
///
/// Triangles that contain a data point are kept. Components of kept
/// triangles are joined to the largest data-bearing component through
/// shortest bridges of otherwise empty triangles.
pub fn trim_to_data<T: Real>(mesh: &TriMesh<T>, points: &[Point2<T>]) -> Result<TriMesh<T>> {
    let loc = Locator::new(mesh);
    let mut weight = vec![0usize; mesh.num_triangles()];
    for &p in points {
        if let Some(t) = loc.locate(mesh, p) {
            weight[t] += 1;
        }
    }
    let kept = connect_components(mesh, &weight)?;
    Ok(mesh.extract(&kept).0)
}

/// Keep triangles whose centroid lies inside `polygon`, then bridge components.
pub fn trim_to_polygon<T: Real>(mesh: &TriMesh<T>, polygon: &Polygon<T>) -> Result<TriMesh<T>> {
    let weight: Vec<usize> = (0..mesh.num_triangles())
        .map(|t| usize::from(polygon.contains(mesh.centroid(t))))
        .collect();
    let kept = connect_components(mesh, &weight)?;
    Ok(mesh.extract(&kept).0)
}

/// Triangles with positive weight plus bridges making them edge-connected.
fn connect_components<T: Real>(mesh: &TriMesh<T>, weight: &[usize]) -> Result<Vec<usize>> {
    let n = mesh.num_triangles();
    let seeds: Vec<usize> = (0..n).filter(|&t| weight[t] > 0).collect();
    if seeds.is_empty() {
        return Err(Error::EmptyResult);
    }
    // Components of the seed set.
    let mut comp = vec![usize::MAX; n];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    for &s in &seeds {
        if comp[s] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut members = vec![s];
        comp[s] = id;
        let mut head = 0;
        while head < members.len() {
            let t = members[head];
            head += 1;
            for nb in mesh.neighbors(t) {
                if weight[nb] > 0 && comp[nb] == usize::MAX {
                    comp[nb] = id;
                    members.push(nb);
                }
            }
        }
        comps.push(members);
    }
    let main = (0..comps.len())
        .max_by(|&a, &b| {
            let wa: usize = comps[a].iter().map(|&t| weight[t]).sum();
            let wb: usize = comps[b].iter().map(|&t| weight[t]).sum();
            wa.cmp(&wb)
                .then(comps[a].len().cmp(&comps[b].len()))
                .then(b.cmp(&a))
        })
        .expect("non-empty");
    let mut in_set = vec![false; n];
    for &t in &comps[main] {
        in_set[t] = true;
    }
    let mut remaining = comps.len() - 1;
    while remaining > 0 {
        // Multi-source BFS from the connected set to the nearest outside component.
        let mut pred = vec![usize::MAX; n];
        let mut seen = in_set.clone();
        let mut queue: VecDeque<usize> = (0..n).filter(|&t| in_set[t]).collect();
        let mut hit = None;
        'bfs: while let Some(t) = queue.pop_front() {
            for nb in mesh.neighbors(t) {
                if seen[nb] {
                    continue;
                }
                seen[nb] = true;
                pred[nb] = t;
                if comp[nb] != usize::MAX {
                    hit = Some(nb);
                    break 'bfs;
                }
                queue.push_back(nb);
            }
        }
        let Some(target) = hit else {
            log::warn!("{remaining} data-bearing component(s) unreachable; dropped");
            break;
        };
        let mut t = pred[target];
        while !in_set[t] {
            in_set[t] = true;
            t = pred[t];
        }
        for &m in &comps[comp[target]] {
            in_set[m] = true;
        }
        remaining -= 1;
    }
    Ok((0..n).filter(|&t| in_set[t]).collect())
}
