//! Compressible-flow simulation and reinforcement-learning control toolkit.
//!
//! The solver side is a nodal spectral discontinuous Galerkin discretization of
//! the 2-D compressible Navier-Stokes equations on a quadtree forest with
//! adaptive refinement, advanced in time with SSPRK(5,4). On top of it sits a
//! microjet-actuated hypersonic-inlet control environment, off-policy deep RL
//! agents (TD3 and SAC) with a shared replay buffer, and data-driven sparse
//! sensor placement via pivoted QR on SVD modes.

pub mod amr;
pub mod cli;
pub mod config;
pub mod env;
pub mod error;
pub mod field;
pub mod gas;
pub mod inlet;
pub mod limiter;
pub mod mesh;
pub mod reference;
pub mod residual;
pub mod rl;
pub mod sensors;
pub mod solver;
pub mod timestepping;
pub mod verification;

pub use error::{Error, Result};
pub use gas::{ConservativeState, GasModel, GradientState, PrimitiveState};
