//! Monte Carlo toolkit for stochastic reaction networks.
//!
//! Simulation kernels: exact SSA, explicit tau-leap, and coupled
//! coarse/fine tau-leap pairs (split-propensity coupling) with an
//! optional pathwise importance-sampling change of measure that boosts
//! the residual Poisson rates on steps where the coupled observables
//! still coincide. A multilevel engine allocates samples across grid
//! levels, fits convergence rates, and drives the bundled benchmark
//! models; the harness emits plot-ready CSV studies.

pub mod harness;
pub mod kernels;
pub mod mlmc;
pub mod models;
pub mod network;
pub mod rng;
