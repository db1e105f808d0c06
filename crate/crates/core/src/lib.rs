//! Mean-value exergy model of a turbocharged diesel engine.
//!
//! The pipeline runs from species properties ([`thermo`]) and intake/exhaust
//! mixtures ([`mixture`]) through calibration maps ([`maps`]) and the
//! single-zone cylinder model ([`cylinder`]) to the eight-term exergy
//! balance ([`exergy`]) and drive-cycle sweeps over ambient temperature and
//! EGR rate ([`sweep`]).

// `!(x > 0.0)` guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod cylinder;
pub mod engine;
pub mod exergy;
pub mod maps;
pub mod mixture;
pub mod model;
pub mod sweep;
pub mod thermo;

pub use cylinder::{CylinderError, MeanValueMaps};
pub use engine::{EngineGeometry, EngineSpec};
pub use exergy::{ExergyError, ExergyRates, ExergyTotals, OperatingPoint, PercentBreakdown, Term};
pub use maps::{EngineMaps, MapError, MapGrid};
pub use mixture::{Composition, IntakeState, MixtureError, ReferenceState};
pub use model::EngineModel;
pub use sweep::{CycleTrace, SweepError, SweepGrid, SweepResult};
pub use thermo::{FuelThermo, Species, ThermoError};

/// Any failure of the pipeline, grouped for exit-code mapping.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error(transparent)]
    Thermo(#[from] ThermoError),
    #[error(transparent)]
    Mixture(#[from] MixtureError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Cylinder(#[from] CylinderError),
    #[error(transparent)]
    Exergy(#[from] ExergyError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

/// How a failure should be reported to a shell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Validation,
    Domain,
    Numerical,
}

impl FailureKind {
    pub fn exit_code(self) -> i32 {
        match self {
            FailureKind::Validation => 2,
            FailureKind::Domain => 3,
            FailureKind::Numerical => 4,
        }
    }
}

impl Error {
    pub fn kind(&self) -> FailureKind {
        use FailureKind::*;
        match self {
            Error::Validation(_) | Error::Io { .. } | Error::Json(_) => Validation,
            Error::Thermo(e) => thermo_kind(e),
            Error::Mixture(e) => mixture_kind(e),
            Error::Map(e) => map_kind(e),
            Error::Cylinder(e) => cylinder_kind(e),
            Error::Exergy(e) => exergy_kind(e),
            Error::Sweep(e) => e.kind(),
        }
    }
}

pub(crate) fn thermo_kind(e: &ThermoError) -> FailureKind {
    match e {
        ThermoError::OutOfRange { .. } => FailureKind::Domain,
        _ => FailureKind::Validation,
    }
}

pub(crate) fn mixture_kind(e: &MixtureError) -> FailureKind {
    match e {
        MixtureError::NoConvergence { .. } => FailureKind::Numerical,
        MixtureError::InvalidComposition(_) | MixtureError::InvalidState(_) => {
            FailureKind::Validation
        }
        MixtureError::Thermo(t) => thermo_kind(t),
        _ => FailureKind::Domain,
    }
}

pub(crate) fn map_kind(e: &MapError) -> FailureKind {
    match e {
        MapError::Domain { .. } => FailureKind::Domain,
        _ => FailureKind::Validation,
    }
}

pub(crate) fn cylinder_kind(e: &CylinderError) -> FailureKind {
    match e {
        CylinderError::Numerical { .. } | CylinderError::MapGeneration { .. } => {
            FailureKind::Numerical
        }
        CylinderError::InvalidParams(_) | CylinderError::Window { .. } => FailureKind::Validation,
        CylinderError::NoFuel(_) => FailureKind::Domain,
        CylinderError::Map(m) => map_kind(m),
        CylinderError::Mixture(m) => mixture_kind(m),
        CylinderError::Thermo(t) => thermo_kind(t),
    }
}

pub(crate) fn exergy_kind(e: &ExergyError) -> FailureKind {
    match e {
        ExergyError::NonFinite(_) => FailureKind::Numerical,
        ExergyError::EmptyTrace | ExergyError::BadTimestep(_) | ExergyError::EgrMismatch { .. } => {
            FailureKind::Validation
        }
        ExergyError::Thermo(t) => thermo_kind(t),
        ExergyError::Mixture(m) => mixture_kind(m),
        ExergyError::Map(m) => map_kind(m),
        _ => FailureKind::Domain,
    }
}
