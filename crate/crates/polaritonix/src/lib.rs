//! Elastic polariton response of a driven molecule-cavity system with
//! Brownian vibrational dissipation.
//!
//! The engine builds the vibrational P(E) function in closed form as a
//! [`lineshape::Mixture`] of Lorentzian components, convolves it with the
//! electronic susceptibility into the absorption function A, and feeds that
//! into the cavity response `r(omega_d)`. The [`analysis`] module extracts the
//! observables experiments report: Rabi splitting, polariton linewidths and
//! their asymmetries, and peak intensity ratios. The [`oracle`] module is an
//! independent brute-force path (direct quadrature of the noise integral plus
//! a discrete Fourier transform) used to validate every closed-form result.
//!
//! Units: `hbar = k_B = 1`; every frequency, rate and temperature shares one
//! common unit, conventionally the vibrational frequency.

pub mod analysis;
pub mod config;
pub mod error;
pub mod lineshape;
pub mod oracle;
pub mod pe;
pub mod response;
pub mod runner;

pub use analysis::PolaritonFeatures;
pub use error::{Error, Result};
pub use lineshape::{eval_f, eval_g, Mixture, PoleAtom};
pub use pe::{
    classify_regime, exp_correlator_transform, matsubara_coefficients, matsubara_expansion,
    residue_coefficients, total_pe, vibronic_expansion, Regime, ResidueCoefficients,
    SeriesControl, ThermalEnv, VibrationalMode,
};
pub use response::{
    absorption_mixture, cavity_frequency_from_geometry, coupled_oscillator_reference,
    effective_kappa_m, elastic_spectrum, response_function, AbsorptionFunction, CavityParams,
    MoleculeParams, Spectrum,
};
