//! Simulation of a fiber-pigtailed type-II parametric down-conversion source
//! in a periodically poled lithium niobate waveguide.
//!
//! The crate is organised bottom-up: [`dispersion`] supplies refractive
//! indices, [`phasematch`] the quasi-phasematching conditions, [`jsa`] the
//! two-photon spectrum, [`components`] the passive loss budget and
//! [`counting`] the photon-counting Monte Carlo with its estimators.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod components;
pub mod counting;
pub mod dispersion;
pub mod error;
mod io;
pub mod jsa;
pub mod phasematch;
pub mod spectrum;

pub use components::{ComponentChain, GaussianMode, OpticalElement, PropagationLength, WaveguideLoss};
pub use counting::{
    ArmDetectors, BackgroundCorrection, CountRecord, DetectorModel, Estimate, ExperimentConfig, PairStatistics,
    SourceState, Topology,
};
pub use dispersion::{Axis, MaterialCatalog, MaterialModel};
pub use error::{Error, Result};
pub use jsa::{
    Arm, FilterProfile, JointSpectralAmplitude, PumpEnvelope, PumpShape, SchmidtDecomposition, SpectralFilter,
    SpectralGridAxes,
};
pub use phasematch::{Polarization, PolarizationMap, TuningCurve, WaveMode, WaveguideSpec};
