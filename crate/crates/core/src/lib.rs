//! Curvature-preserving G-deformations of surfaces with boundary in a Riemannian 3-space.

pub mod ambient;
pub mod cdot;
pub mod cli;
pub mod flow;
pub mod gdef;
pub mod grid;
pub mod kpres;
pub mod surface;
pub mod vekua;
