//! Numerical engine for multimode phonon-polaritons in the ultrastrong
//! coupling regime.
//!
//! The crate models one cavity mode coupled to N optical phonon modes,
//! diagonalizes the resulting quadratic bosonic Hamiltonian into polariton
//! branches with symplectically normalized Hopfield coefficients, and
//! evaluates thermal anomalous correlators and equal-time second-order
//! phonon correlation functions. It also contains the THz time-domain
//! spectroscopy reduction chain (transmission, Lorentzian peak extraction,
//! thin-film Tinkham conductivity) and a least-squares fit of the effective
//! ion plasma frequencies to measured polariton peaks.
//!
//! # Units
//!
//! Every frequency crossing an interface is an *ordinary* frequency in THz
//! (the quantity usually written omega/2pi). All model formulas are
//! homogeneous of degree one in frequency, so the angular/ordinary
//! convention cancels everywhere except in thermal occupation factors,
//! which use `h*f/(k_B*T)` with `f` in Hz. Quadratic-form matrix entries
//! are frequencies in THz with hbar factored out.

pub mod bogoliubov;
pub mod constants;
pub mod correlations;
pub mod fitting;
pub mod fockcheck;
pub mod model;
pub mod numeric;
pub mod spectra;

use num_traits::{FromPrimitive, ToPrimitive};

/// Scalar trait for the numerical core.
///
/// Everything in the crate is generic over the working precision; `f64` is
/// the precision used by the CLI and the concrete aliases below, `f32`
/// compiles against the same code for callers that want it.
pub trait Real: nalgebra::RealField + FromPrimitive + ToPrimitive + Copy + Default {}

impl<T> Real for T where T: nalgebra::RealField + FromPrimitive + ToPrimitive + Copy + Default {}

/// Convert an `f64` constant into the working scalar type.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant must be representable in the scalar type")
}

pub type Complex64 = num_complex::Complex<f64>;

pub type PhononMode = model::PhononMode<f64>;
pub type CavityMode = model::CavityMode<f64>;
pub type HybridSystem = model::HybridSystem<f64>;
pub type QuadraticForm = model::QuadraticForm<f64>;
pub type SqueezedPhononParams = model::SqueezedPhononParams<f64>;
pub type EffectiveHamiltonian = model::EffectiveHamiltonian<f64>;
pub type PolaritonBranch = bogoliubov::PolaritonBranch<f64>;
pub type PolaritonBasis = bogoliubov::PolaritonBasis<f64>;
pub type PolaritonWeights = bogoliubov::PolaritonWeights<f64>;
pub type ThermalState = correlations::ThermalState<f64>;
pub type CorrelationSet = correlations::CorrelationSet<f64>;
pub type G2Matrix = correlations::G2Matrix<f64>;
pub type ComplexSpectrum = spectra::ComplexSpectrum<f64>;
pub type TimeTrace = spectra::TimeTrace<f64>;
pub type PeakRecord = spectra::PeakRecord<f64>;
pub type PeakTable = fitting::PeakTable<f64>;
pub type FitResult = fitting::FitResult<f64>;
