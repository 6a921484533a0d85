//! Gaussian-packet geometry of the classical-quantum correspondence and GUE
//! random walks on the space of states.
//!
//! * [`grid`]: discretized Hilbert space, operators and unitary steps.
//! * [`manifold`]: packet embedding of phase space and its Fubini-Study geometry.
//! * [`dynamics`]: Schrodinger velocity at packets, Ehrenfest projections and a
//!   Newtonian comparator.
//! * [`walk`]: GUE sampling, unconstrained and translation-constrained walks.
//! * [`stats`]: normality, isotropy, Born-frequency and diffusion estimators.
//! * [`macro_est`]: Stokes-Einstein chain for macroscopic "freezing".

pub mod dynamics;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod macro_est;
pub mod manifold;
pub mod seed;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
pub use grid::{GridSpec, HamiltonianSpec, Potential, StateVector};
pub use manifold::PacketParams;
