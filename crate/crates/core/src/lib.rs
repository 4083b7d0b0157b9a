//! Semi-discrete Carleman convexification for 2-D electrical impedance tomography.

pub mod carleman;
pub mod data_transform;
pub mod discrete_ops;
pub mod error;
pub mod forward;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod minimize;
pub mod phantoms;
pub mod pipeline;
pub mod real;
pub mod recover;
pub mod verify;

pub use error::{Error, Result};
pub use real::Real;

pub type Domain = geometry::DomainSpec<f64>;
pub type Grid = geometry::GridSpec<f64>;
pub type Ring = geometry::SourceRing<f64>;
pub type Field = discrete_ops::ScalarField<f64>;
pub type Mesh = forward::TriMesh<f64>;
pub type Dataset = forward::BoundaryDataset<f64>;
