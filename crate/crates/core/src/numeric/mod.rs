//! Shared numerical machinery: scalar root bracketing, damped least
//! squares, and a Lanczos eigensolver for large sparse problems.

mod brent;
mod lanczos;
mod lm;

pub use brent::{brent, BracketError};
pub use lanczos::lanczos_lowest;
pub use lm::{levenberg_marquardt, LmOptions, LmOutcome};

/// Format a number with 12 significant digits for CSV/JSON artifacts.
///
/// Scientific notation, '.' decimal separator, locale independent; chosen so
/// repeated runs produce byte-identical output files.
pub fn fmt_sig12(x: f64) -> String {
    format!("{x:.11e}")
}

/// Standard normal draw via Box-Muller on the rng's uniform output.
pub fn standard_normal<R: rand::Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
