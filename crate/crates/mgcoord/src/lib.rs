//! Decentralized Gauss-Seidel coordination of partitioned convex quadratic
//! programs, accelerated by multi-grid coarsening.
//!
//! The library is organized around a small pipeline:
//!
//! 1. [`qp`] represents coupled convex QPs with equality constraints and
//!    provides the centralized saddle-point oracle.
//! 2. [`lifting`] partitions a problem into per-partition blocks with
//!    duplicated interface variables tied by coupling constraints.
//! 3. [`coordination`] runs Gauss-Seidel sweeps over the lifted problem,
//!    assembles the sweep's iteration operator `w -> S w + r`, and certifies
//!    convergence through the spectral radius of `S`.
//! 4. [`ordering`] builds coordination orders (lexicographic, red-black,
//!    spiral, ...), including parallel group structure.
//! 5. [`coarsening`] builds restriction/aggregation transfers between grid
//!    resolutions and drives multi-level warm-started coordination.
//! 6. [`cases`] generates the temporal storage-control and spatial diffusion
//!    benchmark problems.

pub mod cases;
pub mod coarsening;
pub mod coordination;
pub mod error;
pub mod lifting;
pub mod ordering;
pub mod qp;

pub use error::{Error, Result};
