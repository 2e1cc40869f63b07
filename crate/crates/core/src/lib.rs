// SPDX-License-Identifier: Apache-2.0

//! Dipolar spin dynamics and dynamical quantum-state storage.
//!
//! The crate builds dense spin-1/2 dipolar Hamiltonians, propagates states
//! exactly under piecewise-constant schedules, and runs time-reversal storage
//! protocols: the exact chain reversal, the planar three-orientation cycle and
//! the pulse-sequence cycle, together with bipartite applications (frozen
//! subsystem, transfer-and-store delay line, impurity decoupling switch).
//!
//! All numerics are generic over the scalar type ([`Real`], implemented for
//! `f32` and `f64`); the aliases at the crate root fix it to `f64`.

// `!(x > 0)` is used deliberately so that NaN is rejected along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod avg_hamiltonian;
pub mod cli;
pub mod error;
pub mod evolution;
pub mod operators;
pub mod protocols;
pub mod scalar;
pub mod spin_system;

pub use error::{Error, Result};
pub use scalar::Real;

/// Largest spin count accepted by the dense simulator.
pub const MAX_SPINS: usize = 13;

pub type Geometry = spin_system::Geometry<f64>;
pub type CouplingMatrix = spin_system::CouplingMatrix<f64>;
pub type FieldOrientation = spin_system::FieldOrientation<f64>;
pub type HermitianOperator = operators::HermitianOperator<f64>;
pub type Unitary = evolution::Unitary<f64>;
pub type DensityMatrix = evolution::DensityMatrix<f64>;
pub type Schedule = evolution::Schedule<f64>;
pub type ReversalScheme = protocols::ReversalScheme<f64>;
pub type StorageReport = protocols::StorageReport<f64>;
pub type TransferPlan = protocols::TransferPlan<f64>;
pub type ImpuritySwitch = protocols::ImpuritySwitch<f64>;
pub type ScalingFit = avg_hamiltonian::ScalingFit<f64>;
