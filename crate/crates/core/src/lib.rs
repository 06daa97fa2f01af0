//! Finite element thin plate spline smoothing of scattered 2D data.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases
//! at the crate root fix the scalar to `f64`, which is what the command
//! line tool uses.

pub mod assembly;
pub mod boundary;
pub mod data;
pub mod driver;
pub mod error;
pub mod experiment;
pub mod gcv;
pub mod geometry;
pub mod indicators;
pub mod rbf;
pub mod report;
pub mod saddle;
pub mod scalar;
pub mod solver;
pub mod spatial;
pub mod tps;

pub use error::{Error, Result};
pub use scalar::Real;

pub type TriMesh = geometry::TriMesh<f64>;
pub type DataSet = data::DataSet<f64>;
pub type Smoother = saddle::Smoother<f64>;
pub type TpsModel = tps::TpsModel<f64>;
pub type CsrbfModel = rbf::CsrbfModel<f64>;
pub type BoundaryStrategy = boundary::BoundaryStrategy<f64>;
pub type RunOutcome = driver::RunOutcome<f64>;
