//! Emission-rate estimation for fugitive particulate sources.
//!
//! A Gaussian-plume forward model with settling and ground deposition maps
//! time-varying source rates to sensor readings through a linear observation
//! operator. Rates are then estimated in three stages (constant, smooth,
//! smooth and non-negative) and the resulting uncertainty is pushed onto a
//! ground deposition grid.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod inversion;
pub mod observation;
pub mod plume;
pub mod sampling;
mod special;
pub mod uqprop;
pub mod windprep;

pub use error::{Error, Result};
pub use observation::{MeasurementSet, ObservationOperator, SensorKind, SensorSpec, TimeGrid};
pub use plume::{KernelOptions, ParticleProperties, PlumeModel, SourceSite, StabilityClass};
pub use windprep::{RawWindRecord, WindSeries};
