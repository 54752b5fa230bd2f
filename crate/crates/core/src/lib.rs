//! Time evolution of a quantum particle in three dimensions under a finite
//! set of point interactions that move along prescribed smooth curves.
//!
//! The wavefunction is never propagated on a spatial grid. Instead the
//! problem is reduced to a system of Volterra equations for the complex
//! "charges" `q_j(t)` carried by each interaction center; the wavefunction
//! is then rebuilt in momentum space from the charges.
//!
//! Units: `ħ = 1`, `2m = 1`, so the free equation reads `i ∂ψ/∂t = −Δψ`.
//!
//! Module map:
//!
//! * [`trajectories`] – admissible center curves and their separation certificate
//! * [`special`] – Fresnel-type integrals, the kernel functions `w`, `A`, `B`
//!   and the free propagator
//! * [`kernels`] – the composite Volterra kernels `C_j` and `D_jl`
//! * [`initial_data`] – Gaussian packet superpositions with closed-form free flow
//! * [`volterra`] – the Abel operator, the datum and the marching solvers
//! * [`wavefunction`] – momentum-space reconstruction, norms and inner products

pub mod error;
pub mod initial_data;
pub mod kernels;
pub mod quadrature;
pub mod special;
pub mod trajectories;
pub mod volterra;
pub mod wavefunction;

pub use num_complex::Complex64;

/// Points and vectors in R³.
pub type Vec3 = nalgebra::Vector3<f64>;

pub use error::{Error, Result};
pub use initial_data::{ClearanceReport, GaussianPacket, InitialDatum};
pub use kernels::KernelOptions;
pub use special::BranchConvention;
pub use trajectories::{SeparationCertificate, Trajectory, TrajectorySet};
pub use volterra::{ChargeSolution, Direction, SolverOptions, TimeGrid};
pub use wavefunction::{Domain, KGrid, WaveField};
