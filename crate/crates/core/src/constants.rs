//! Pinned physical constants (2019 SI exact values where applicable).

use crate::{real, Real};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT_M_PER_S: f64 = 2.99792458e8;
/// Planck constant, J*s.
pub const PLANCK_J_S: f64 = 6.62607015e-34;
/// Boltzmann constant, J/K.
pub const BOLTZMANN_J_PER_K: f64 = 1.380649e-23;
/// Vacuum permittivity, F/m.
pub const VACUUM_PERMITTIVITY_F_PER_M: f64 = 8.8541878128e-12;
/// Vacuum impedance, Ohm.
pub const VACUUM_IMPEDANCE_OHM: f64 = 376.730313668;

/// `h*f/(k_B*T)` for an ordinary frequency `f` in THz and temperature in K.
///
/// Returns `+inf` at `t_k == 0` so that Bose factors underflow to zero.
pub fn thermal_ratio<T: Real>(f_thz: T, t_k: T) -> T {
    if t_k <= T::zero() {
        return real(f64::INFINITY);
    }
    let hf = real::<T>(PLANCK_J_S) * f_thz * real(1e12);
    hf / (real::<T>(BOLTZMANN_J_PER_K) * t_k)
}
