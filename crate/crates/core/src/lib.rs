//! Residual networks trained through a discontinuous-Galerkin finite-element
//! energy for the Poisson problem `-Δu = f`, `u = g` on `∂Ω`.
//!
//! The network only enters the loss through its values at the P2 Lagrange
//! nodes, so the loss is an exactly quadratic form in those nodal values and
//! is assembled once ([`dg_energy::QuadraticEnergyForm`]). Training then costs
//! one batched forward pass and one vector-Jacobian product per epoch.
//!
//! Modules, bottom-up:
//! - [`mesh`]: structured triangulations of the unit square and the L-shape.
//! - [`quadrature`]: symmetric triangle rules and Gauss rules on edges.
//! - [`fe_space`]: the conforming P2 space, interpolation and evaluation.
//! - [`dg_energy`]: assembly of the interior-penalty energy.
//! - [`lifting`]: lifting operator and discrete Laplacian (verification only).
//! - [`resnet`]: the residual network, its VJP and its Laplacian jets.
//! - [`training`]: Adam, FE-interpolation training and collocation training.
//! - [`oracle`]: manufactured problems, CG minimiser and L2 errors.
//! - [`experiment`], [`heatmap`], [`verify`]: the harness behind the CLI.

mod activation;
pub mod dg_energy;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod fe_space;
pub mod heatmap;
pub mod lifting;
pub mod mesh;
pub mod oracle;
pub mod par;
pub mod quadrature;
pub mod resnet;
pub mod sparse;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
