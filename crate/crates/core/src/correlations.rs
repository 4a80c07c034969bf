//! Thermal polariton populations, anomalous phonon correlators, and
//! equal-time second-order phonon correlation functions, exact and in the
//! perturbative low-coupling expansion, with cavity-frequency and
//! temperature sweeps.

use crate::bogoliubov::{self, BogoliubovError, PolaritonBasis};
use crate::constants::thermal_ratio;
use crate::model::{build_minimal_coupling, HybridSystem};
use crate::numeric::fmt_sig12;
use crate::{real, Real};
use nalgebra::DMatrix;
use num_complex::Complex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorrelationError {
    #[error("frequency must be positive for a thermal population, got {0} THz")]
    NonPositiveFrequency(f64),
    #[error("temperature must be nonnegative, got {0} K")]
    NegativeTemperature(f64),
    #[error("population vector has {got} entries for {expected} branches")]
    BranchCountMismatch { got: usize, expected: usize },
    #[error("correlator matrices must be square with matching sizes")]
    ShapeMismatch,
    #[error("<b b^+> = {0} violates the >= 1 bound; correlation set is unphysical")]
    UnphysicalDenominator(f64),
    #[error(
        "g2[{l}][{lp}] = {value} outside [{lo}, 3]; correlator input is not a physical \
         Gaussian state"
    )]
    G2OutOfBounds { l: usize, lp: usize, value: f64, lo: f64 },
    #[error("g2 imaginary residue {0} exceeds 1e-10; correlator input is inconsistent")]
    ImaginaryResidue(f64),
    #[error("g2 diagonal failed to decrease monotonically in omega_c at index {0}")]
    MonotonicityViolation(usize),
    #[error(transparent)]
    Bogoliubov(#[from] BogoliubovError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// Bose-Einstein occupation of a mode at ordinary frequency `omega` (THz).
/// Exactly zero at `t_k == 0`.
pub fn thermal_population<T: Real>(omega: T, t_k: T) -> Result<T, CorrelationError> {
    if omega <= T::zero() {
        return Err(CorrelationError::NonPositiveFrequency(to_f64(omega)));
    }
    if t_k < T::zero() {
        return Err(CorrelationError::NegativeTemperature(to_f64(t_k)));
    }
    if t_k == T::zero() {
        return Ok(T::zero());
    }
    let x = thermal_ratio(omega, t_k);
    Ok(T::one() / x.exp_m1())
}

/// Polariton thermal state: per-branch Bose populations at a temperature.
#[derive(Debug, Clone)]
pub struct ThermalState<T: Real> {
    pub temperature_k: T,
    pub populations: Vec<T>,
}

impl<T: Real> ThermalState<T> {
    pub fn new(basis: &PolaritonBasis<T>, t_k: T) -> Result<Self, CorrelationError> {
        let populations = basis
            .branches
            .iter()
            .map(|b| thermal_population(b.omega, t_k))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ThermalState {
            temperature_k: t_k,
            populations,
        })
    }
}

/// Thermal phonon correlator matrices `<b_l^+ b_l'>` (normal) and
/// `<b_l b_l'>` (anomalous).
#[derive(Debug, Clone)]
pub struct CorrelationSet<T: Real> {
    pub normal: DMatrix<Complex<T>>,
    pub anomalous: DMatrix<Complex<T>>,
    pub temperature_k: T,
}

impl<T: Real> CorrelationSet<T> {
    pub fn n_phonons(&self) -> usize {
        self.normal.nrows()
    }

    /// `<b_l b_l'^+> = <b_l'^+ b_l> + delta_{l l'}`.
    pub fn b_bdag(&self, l: usize, lp: usize) -> Complex<T> {
        let delta = if l == lp { T::one() } else { T::zero() };
        self.normal[(lp, l)] + Complex::new(delta, T::zero())
    }
}

/// Thermal expectation values in the polariton state: for branch
/// populations `n_a`,
/// `<b_l^+ b_l'> = sum_a conj(Xt_l^a) Xt_l'^a (1+n_a) + X_l^a conj(X_l'^a) n_a`
/// and
/// `<b_l b_l'> = -sum_a conj(X_l^a) Xt_l'^a (1+n_a) - conj(X_l'^a) Xt_l^a n_a`.
pub fn correlators<T: Real>(
    basis: &PolaritonBasis<T>,
    state: &ThermalState<T>,
) -> Result<CorrelationSet<T>, CorrelationError> {
    if state.populations.len() != basis.branches.len() {
        return Err(CorrelationError::BranchCountMismatch {
            got: state.populations.len(),
            expected: basis.branches.len(),
        });
    }
    let n = basis.n_phonons();
    let mut normal = DMatrix::zeros(n, n);
    let mut anomalous = DMatrix::zeros(n, n);
    for (branch, &pop) in basis.branches.iter().zip(&state.populations) {
        let occupied = Complex::new(pop, T::zero());
        let vacuum = Complex::new(T::one() + pop, T::zero());
        for l in 0..n {
            for lp in 0..n {
                normal[(l, lp)] += branch.x_tilde[l].conj() * branch.x_tilde[lp] * vacuum
                    + branch.x[l] * branch.x[lp].conj() * occupied;
                anomalous[(l, lp)] -= branch.x[l].conj() * branch.x_tilde[lp] * vacuum
                    + branch.x[lp].conj() * branch.x_tilde[l] * occupied;
            }
        }
    }
    Ok(CorrelationSet {
        normal,
        anomalous,
        temperature_k: state.temperature_k,
    })
}

/// Real symmetric matrix of equal-time second-order correlations
/// `g2_{l l'}(0)`.
#[derive(Debug, Clone)]
pub struct G2Matrix<T: Real> {
    values: DMatrix<T>,
}

impl<T: Real> G2Matrix<T> {
    pub fn n_phonons(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, l: usize, lp: usize) -> T {
        self.values[(l, lp)]
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.values
    }
}

/// Equal-time correlations from the correlator set:
/// `g2_{ll} = 2 + <b_l b_l><b_l^+ b_l^+> / <b_l b_l^+>^2` on the diagonal and
/// `g2_{ll'} = 1 + <b_l b_l'^+><b_l' b_l^+>/(<b_l b_l^+><b_l' b_l'^+>)
///            + <b_l b_l'><b_l'^+ b_l^+>/(<b_l b_l^+><b_l' b_l'^+>)` off it.
pub fn g2_equal_time<T: Real>(corr: &CorrelationSet<T>) -> Result<G2Matrix<T>, CorrelationError> {
    let n = corr.n_phonons();
    if corr.anomalous.nrows() != n || !corr.normal.is_square() || !corr.anomalous.is_square() {
        return Err(CorrelationError::ShapeMismatch);
    }
    let mut values = DMatrix::zeros(n, n);
    let one = Complex::new(T::one(), T::zero());
    // 1e-10 at working precision; scaled up for coarser scalar types
    let tol = real::<T>(1e-10).max(T::default_epsilon() * real(2e3));
    let denom_slack = real::<T>(1e-9).max(T::default_epsilon() * real(2e3));
    for l in 0..n {
        let d = corr.b_bdag(l, l);
        if d.re < T::one() - denom_slack {
            return Err(CorrelationError::UnphysicalDenominator(to_f64(d.re)));
        }
        for lp in 0..n {
            let val = if l == lp {
                let bb = corr.anomalous[(l, l)];
                Complex::new(real::<T>(2.0), T::zero()) + bb * bb.conj() / (d * d)
            } else {
                let dp = corr.b_bdag(lp, lp);
                let cross = corr.b_bdag(l, lp) * corr.b_bdag(lp, l);
                let anom = corr.anomalous[(l, lp)] * corr.anomalous[(lp, l)].conj();
                one + (cross + anom) / (d * dp)
            };
            if val.im.abs() > tol {
                return Err(CorrelationError::ImaginaryResidue(to_f64(val.im)));
            }
            // any physical Gaussian state keeps the diagonal in [2, 3] and
            // the off-diagonal in [1, 3] (Cauchy-Schwarz on the moments)
            let lo = if l == lp { real::<T>(2.0) } else { T::one() };
            if val.re < lo - denom_slack || val.re > real::<T>(3.0) + denom_slack {
                return Err(CorrelationError::G2OutOfBounds {
                    l,
                    lp,
                    value: to_f64(val.re),
                    lo: to_f64(lo),
                });
            }
            values[(l, lp)] = val.re;
        }
    }
    // symmetrize exactly; the two off-diagonal expressions are conjugate
    for l in 0..n {
        for lp in l + 1..n {
            let s = (values[(l, lp)] + values[(lp, l)]) / real::<T>(2.0);
            values[(l, lp)] = s;
            values[(lp, l)] = s;
        }
    }
    Ok(G2Matrix { values })
}

/// Second-order perturbative expansion of the equal-time correlations,
/// valid for weak coupling `(nu_l/omega_l) sqrt(omega_l/omega_c) << 1`:
/// `g2_{ll} ~ 2 + (g_l/w_l)^4 ((1+2n_LP)/(1+n_l))^2` and
/// `g2_{ll'} ~ 1 + 2 (g_l/w_l)^2 (g_l'/w_l')^2 (1+2n_LP)^2 /
/// ((1+n_l)(1+n_l'))`, where `n_l` is the population of the branch
/// dominated by phonon `l`.
#[derive(Debug, Clone)]
pub struct PerturbativeG2<T: Real> {
    pub matrix: G2Matrix<T>,
    /// Cleared when any expansion parameter reaches 0.3.
    pub valid_regime: bool,
}

pub fn g2_perturbative<T: Real>(
    system: &HybridSystem<T>,
    state: &ThermalState<T>,
) -> Result<PerturbativeG2<T>, CorrelationError> {
    let n = system.n_phonons();
    if state.populations.len() != n + 1 {
        return Err(CorrelationError::BranchCountMismatch {
            got: state.populations.len(),
            expected: n + 1,
        });
    }
    let n_lp = state.populations[0];
    let ratios: Vec<T> = system
        .coupling_strengths()
        .iter()
        .zip(system.phonons())
        .map(|(g, p)| *g / p.omega)
        .collect();

    let mut values = DMatrix::zeros(n, n);
    let one = T::one();
    let two = real::<T>(2.0);
    for l in 0..n {
        let n_l = state.populations[l + 1];
        let r2 = ratios[l] * ratios[l];
        values[(l, l)] = two + r2 * r2 * ((one + two * n_lp) / (one + n_l)).powi(2);
        for lp in 0..n {
            if lp == l {
                continue;
            }
            let n_lp_branch = state.populations[lp + 1];
            values[(l, lp)] = one
                + two * ratios[l] * ratios[l] * ratios[lp] * ratios[lp] * (one + two * n_lp).powi(2)
                    / ((one + n_l) * (one + n_lp_branch));
        }
    }
    // expansion parameter is (nu/omega) sqrt(omega/omega_c) = 2 g/omega
    let valid_regime = ratios
        .iter()
        .all(|r| real::<T>(2.0) * *r < real(0.3));
    Ok(PerturbativeG2 {
        matrix: G2Matrix { values },
        valid_regime,
    })
}

/// One grid point of a correlation sweep.
#[derive(Debug, Clone)]
pub struct G2Point<T: Real> {
    pub omega_c: T,
    pub temperature_k: T,
    pub branch_labels: Vec<String>,
    pub frequencies: Vec<T>,
    pub populations: Vec<T>,
    pub g2: G2Matrix<T>,
}

/// Evaluate g2 over the cross product of a cavity-frequency grid and a
/// temperature grid. Rows are ordered temperature-major, then omega_c. The
/// model guarantees the diagonal entries decrease with omega_c at fixed
/// temperature; this is checked with 1e-9 slack.
pub fn g2_sweep<T: Real>(
    system: &HybridSystem<T>,
    omega_c_grid: &[T],
    temperature_grid_k: &[T],
) -> Result<Vec<G2Point<T>>, CorrelationError> {
    bogoliubov::validate_grid(omega_c_grid)?;
    if temperature_grid_k.is_empty() {
        return Err(BogoliubovError::BadGrid.into());
    }
    let mut out = Vec::with_capacity(omega_c_grid.len() * temperature_grid_k.len());
    let slack = real::<T>(1e-9);
    for &t in temperature_grid_k {
        let mut prev_diag: Option<Vec<T>> = None;
        for (i, &wc) in omega_c_grid.iter().enumerate() {
            let sys = system.with_cavity_frequency(wc)?;
            let basis = bogoliubov::diagonalize(&build_minimal_coupling(&sys))?;
            let state = ThermalState::new(&basis, t)?;
            let corr = correlators(&basis, &state)?;
            let g2 = g2_equal_time(&corr)?;
            let n = g2.n_phonons();
            let diag: Vec<T> = (0..n).map(|l| g2.get(l, l)).collect();
            if let Some(prev) = &prev_diag {
                for (l, (now, before)) in diag.iter().zip(prev).enumerate() {
                    if *now > *before + slack {
                        let _ = l;
                        return Err(CorrelationError::MonotonicityViolation(i));
                    }
                }
            }
            prev_diag = Some(diag);
            out.push(G2Point {
                omega_c: wc,
                temperature_k: t,
                branch_labels: basis.branches.iter().map(|b| b.label.clone()).collect(),
                frequencies: basis.frequencies(),
                populations: state.populations,
                g2,
            });
        }
    }
    Ok(out)
}

/// CSV rendering of a sweep. For two phonon modes the header is
/// `omega_c_thz,temperature_K,g2_11,g2_22,g2_12,n_LP,n_MP,n_UP`; for other
/// mode counts the same schema generalizes over all pairs and branches.
pub fn g2_csv(points: &[G2Point<f64>]) -> String {
    let Some(first) = points.first() else {
        return String::new();
    };
    let n = first.g2.n_phonons();
    let mut header = String::from("omega_c_thz,temperature_K");
    for l in 1..=n {
        header.push_str(&format!(",g2_{l}{l}"));
    }
    for l in 1..=n {
        for lp in l + 1..=n {
            header.push_str(&format!(",g2_{l}{lp}"));
        }
    }
    for label in &first.branch_labels {
        header.push_str(&format!(",n_{label}"));
    }
    header.push('\n');

    let mut out = header;
    for p in points {
        out.push_str(&fmt_sig12(p.omega_c));
        out.push(',');
        out.push_str(&fmt_sig12(p.temperature_k));
        for l in 0..n {
            out.push_str(&format!(",{}", fmt_sig12(p.g2.get(l, l))));
        }
        for l in 0..n {
            for lp in l + 1..n {
                out.push_str(&format!(",{}", fmt_sig12(p.g2.get(l, lp))));
            }
        }
        for v in &p.populations {
            out.push_str(&format!(",{}", fmt_sig12(*v)));
        }
        out.push('\n');
    }
    out
}

fn to_f64<T: Real>(x: T) -> f64 {
    num_traits::ToPrimitive::to_f64(&x).unwrap_or(f64::NAN)
}
