//! Text mesh format (`tpsfem-mesh v1`).
//!
//! ```text
//! tpsfem-mesh v1
//! nodes N
//! id x1 x2 boundary(0|1)
//! tris M
//! id n0 n1 n2 newest_idx(0|1|2)
//! ```

use super::mesh::{Triangle, TriMesh};
use super::point::Point2;
use crate::error::{Error, Result};
use crate::scalar::Real;
use std::fmt::Write as _;

pub const MESH_HEADER: &str = "tpsfem-mesh v1";

impl<T: Real> TriMesh<T> {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{MESH_HEADER}").unwrap();
        writeln!(s, "nodes {}", self.num_nodes()).unwrap();
        for (i, p) in self.nodes().iter().enumerate() {
            writeln!(
                s,
                "{i} {} {} {}",
                p.x.as_f64(),
                p.y.as_f64(),
                u8::from(self.is_boundary(i))
            )
            .unwrap();
        }
        writeln!(s, "tris {}", self.num_triangles()).unwrap();
        for (i, t) in self.triangles().iter().enumerate() {
            let [a, b, c] = t.nodes;
            writeln!(s, "{i} {a} {b} {c} {}", t.newest).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (ln, header) = lines.next().ok_or_else(|| Error::parse(1, "empty mesh file"))?;
        if header != MESH_HEADER {
            return Err(Error::parse(ln, format!("expected `{MESH_HEADER}`")));
        }
        let n_nodes = section(&mut lines, "nodes")?;
        let mut nodes = Vec::with_capacity(n_nodes);
        let mut flags = Vec::with_capacity(n_nodes);
        for expect in 0..n_nodes {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| Error::parse(0, "node list truncated"))?;
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 4 {
                return Err(Error::parse(ln, "expected `id x1 x2 boundary`"));
            }
            check_id(ln, f[0], expect)?;
            let x: f64 = num(ln, f[1])?;
            let y: f64 = num(ln, f[2])?;
            let b: u8 = num(ln, f[3])?;
            if b > 1 {
                return Err(Error::parse(ln, "boundary flag must be 0 or 1"));
            }
            nodes.push(Point2::new(T::lit(x), T::lit(y)));
            flags.push(b == 1);
        }
        let n_tris = section(&mut lines, "tris")?;
        let mut tris = Vec::with_capacity(n_tris);
        for expect in 0..n_tris {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| Error::parse(0, "triangle list truncated"))?;
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 5 {
                return Err(Error::parse(ln, "expected `id n0 n1 n2 newest_idx`"));
            }
            check_id(ln, f[0], expect)?;
            let v: [usize; 3] = [num(ln, f[1])?, num(ln, f[2])?, num(ln, f[3])?];
            let newest: u8 = num(ln, f[4])?;
            if newest > 2 {
                return Err(Error::parse(ln, "newest index must be 0, 1 or 2"));
            }
            tris.push(Triangle::new(v, newest));
        }
        let mut mesh = TriMesh::from_parts(nodes, tris)?;
        mesh.set_boundary_flags(flags)?;
        Ok(mesh)
    }
}

fn section<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, name: &str) -> Result<usize> {
    let (ln, l) = lines
        .next()
        .ok_or_else(|| Error::parse(0, format!("missing `{name}` section")))?;
    let mut parts = l.split_whitespace();
    if parts.next() != Some(name) {
        return Err(Error::parse(ln, format!("expected `{name} COUNT`")));
    }
    parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::parse(ln, "bad count"))
}

fn num<V: std::str::FromStr>(ln: usize, s: &str) -> Result<V>
where
    V::Err: std::fmt::Display,
{
    s.parse().map_err(|e: V::Err| Error::parse(ln, e.to_string()))
}

fn check_id(ln: usize, s: &str, expect: usize) -> Result<()> {
    let id: usize = num(ln, s)?;
    if id != expect {
        return Err(Error::parse(ln, format!("expected id {expect}, found {id}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_refined_mesh() {
        let mut m = TriMesh::<f64>::square(0);
        m.uniform_pass();
        m.refine_triangle(3).unwrap();
        let text = m.to_text();
        let back = TriMesh::<f64>::from_text(&text).unwrap();
        assert_eq!(back.nodes(), m.nodes());
        assert_eq!(back.boundary_flags(), m.boundary_flags());
        for (a, b) in back.triangles().iter().zip(m.triangles()) {
            assert_eq!(a.nodes, b.nodes);
            assert_eq!(a.newest, b.newest);
        }
        back.check_conformity().unwrap();
    }

    #[test]
    fn bad_header_and_truncation() {
        assert!(matches!(
            TriMesh::<f64>::from_text("mesh v2\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        let text = "tpsfem-mesh v1\nnodes 2\n0 0 0 1\n";
        assert!(TriMesh::<f64>::from_text(text).is_err());
        let text = "tpsfem-mesh v1\nnodes 1\n0 0 zero 1\n";
        assert!(matches!(
            TriMesh::<f64>::from_text(text),
            Err(Error::Parse { line: 3, .. })
        ));
    }
}
