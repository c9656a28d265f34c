//! Shape optimisation of particle-laden channel flows against wall erosion.
//!
//! The forward model couples steady incompressible Navier-Stokes, an
//! Eulerian particle momentum equation with Schiller-Naumann drag and a
//! particle volume-fraction transport equation. Wall erosion follows the
//! Oka correlation. Shape gradients come from a discrete adjoint and a
//! volumetric shape derivative, and are turned into mesh deformations by an
//! elasticity-based gradient flow.

pub mod ad;
pub mod error;
pub mod exec;
pub mod fem;
pub mod mesh;

pub use error::{Error, Result};
pub mod flow;
pub mod kernels;
pub mod newton;
pub mod params;
pub mod particle;
pub mod erosion;
pub mod forward;
pub mod adjoint;
pub mod shape;
pub mod problem;
pub mod gradient;
pub mod optimizer;
pub mod config;
pub mod study;
pub mod verify;
