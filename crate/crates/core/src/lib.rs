//! Super-localized orthogonal decomposition (SLOD) for heterogeneous linear
//! elasticity on the unit square, with LOD and coarse FEM baselines.
//!
//! The pipeline: build a [`mesh::MeshHierarchy`] and a
//! [`coeff::CoefficientField`], compute one localized basis function per
//! coarse cell and displacement component ([`lod`], [`slod`]), assemble and
//! solve the coarse Galerkin system ([`coarse`]), and compare against a fine
//! reference solution ([`fem`]).

pub mod coarse;
pub mod coeff;
pub mod error;
pub mod experiment;
pub mod fem;
pub mod linalg;
pub mod lod;
pub mod mesh;
pub mod slod;

pub use error::{Error, Result};
