//! Hamiltonian deformations of the zero section in `T*S¹` and `T*T²`.
//!
//! The crate follows the pipeline
//! Hamiltonian → time-one Lagrangian curve → wave front → filtered Floer
//! complex → spectral numbers, and on top of it the basic phase function
//! (graph selector), the two-dimensional cliff-wall cycle and the capacity
//! estimates for supported Hamiltonians.
//!
//! The core is `no_std` (it needs `alloc`). Enabling `parallel` fans out
//! independent trajectory and fiber computations over rayon.
#![cfg_attr(not(any(test, feature = "std")), no_std)]
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod capacity;
pub mod cliffwall;
pub mod error;
pub mod floer;
pub mod flow;
pub mod front;
pub mod math;
pub mod phase_space;
pub mod report;
pub mod selector;
pub mod spectral;

pub use error::{Error, Result};
