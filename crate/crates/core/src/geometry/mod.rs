//! Triangular meshes, point location and irregular domain construction.

mod domain;
mod io;
mod locate;
mod mesh;
mod point;

pub use domain::{trim_to_data, trim_to_polygon, DomainKind, Polygon};
pub use io::MESH_HEADER;
pub use locate::{barycentric, Locator, BARY_TOL};
pub use mesh::{EdgeFlags, EdgeKey, Incidence, TriMesh, Triangle, WaveReport};
pub use point::{orient2, Point2, Rect};
