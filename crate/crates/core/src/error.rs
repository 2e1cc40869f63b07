// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

use crate::MAX_SPINS;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate geometry: sites {0} and {1} coincide")]
    DegenerateGeometry(usize, usize),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("operator is not unitary (max deviation {0:e})")]
    NotUnitary(f64),

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("{0} spins requested, dense simulation is limited to {MAX_SPINS}")]
    TooManySpins(usize),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
