//! Physical parameter types and the quadratic Hamiltonian forms of the
//! multimode phonon-photon model, in the minimal-coupling and dipole-gauge
//! (PZW) representations, plus derived closed-form quantities.

use crate::constants::SPEED_OF_LIGHT_M_PER_S;
use crate::{real, Real};
use nalgebra::DMatrix;
use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("phonon mode `{label}` must have omega > 0, got {omega}")]
    NonPositivePhononFrequency { label: String, omega: f64 },
    #[error("phonon mode `{label}` must have nu >= 0, got {nu}")]
    NegativePlasmaFrequency { label: String, nu: f64 },
    #[error("duplicate phonon label `{0}`")]
    DuplicateLabel(String),
    #[error("a hybrid system needs at least one phonon mode")]
    NoPhonons,
    #[error("cavity frequency must be positive, got {0}")]
    NonPositiveCavityFrequency(f64),
    #[error("slot length must be positive, got {0} um")]
    NonPositiveSlotLength(f64),
    #[error("substrate permittivity must be >= 1, got {0}")]
    InvalidSubstratePermittivity(f64),
    #[error("temperature must be nonnegative, got {0} K")]
    NegativeTemperature(f64),
    #[error("quadratic form is not Hermitian: relative defect {0}")]
    NotHermitian(f64),
    #[error("config error: {0}")]
    Config(String),
}

/// One transverse optical phonon mode: resonance frequency `omega` and
/// effective ion plasma frequency `nu`, both ordinary frequencies in THz.
#[derive(Debug, Clone, PartialEq)]
pub struct PhononMode<T: Real> {
    pub label: String,
    pub omega: T,
    pub nu: T,
}

impl<T: Real> PhononMode<T> {
    pub fn new(label: impl Into<String>, omega: T, nu: T) -> Result<Self, ModelError> {
        let label = label.into();
        if omega <= T::zero() {
            return Err(ModelError::NonPositivePhononFrequency {
                label,
                omega: to_f64(omega),
            });
        }
        if nu < T::zero() {
            return Err(ModelError::NegativePlasmaFrequency {
                label,
                nu: to_f64(nu),
            });
        }
        Ok(PhononMode { label, omega, nu })
    }
}

/// Geometry record kept when the cavity frequency was derived from a
/// nanoslot length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotGeometry<T> {
    pub slot_length_um: T,
    pub eps_sub: T,
    pub eps_air: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CavityMode<T: Real> {
    pub omega_c: T,
    pub geometry: Option<SlotGeometry<T>>,
}

impl<T: Real> CavityMode<T> {
    pub fn new(omega_c: T) -> Result<Self, ModelError> {
        if omega_c <= T::zero() {
            return Err(ModelError::NonPositiveCavityFrequency(to_f64(omega_c)));
        }
        Ok(CavityMode {
            omega_c,
            geometry: None,
        })
    }

    /// Half-wave nanoslot resonance `c0 / (2 l sqrt(eps_avg))` with
    /// `eps_avg = (eps_air + eps_sub)/2`, returned in THz.
    pub fn from_slot_length(
        slot_length_um: T,
        eps_sub: T,
        eps_air: T,
    ) -> Result<Self, ModelError> {
        let omega_c = cavity_frequency_from_length(slot_length_um, eps_sub, eps_air)?;
        Ok(CavityMode {
            omega_c,
            geometry: Some(SlotGeometry {
                slot_length_um,
                eps_sub,
                eps_air,
            }),
        })
    }
}

/// See [`CavityMode::from_slot_length`].
pub fn cavity_frequency_from_length<T: Real>(
    slot_length_um: T,
    eps_sub: T,
    eps_air: T,
) -> Result<T, ModelError> {
    if slot_length_um <= T::zero() {
        return Err(ModelError::NonPositiveSlotLength(to_f64(slot_length_um)));
    }
    if eps_sub < T::one() {
        return Err(ModelError::InvalidSubstratePermittivity(to_f64(eps_sub)));
    }
    let eps_avg = (eps_air + eps_sub) / real(2.0);
    let length_m = slot_length_um * real(1e-6);
    let f_hz = real::<T>(SPEED_OF_LIGHT_M_PER_S) / (real::<T>(2.0) * length_m * eps_avg.sqrt());
    Ok(f_hz * real(1e-12))
}

/// Light-matter coupling strength `g = (nu/2) sqrt(omega/omega_c)` in THz.
pub fn coupling_strength<T: Real>(mode: &PhononMode<T>, omega_c: T) -> Result<T, ModelError> {
    if omega_c <= T::zero() {
        return Err(ModelError::NonPositiveCavityFrequency(to_f64(omega_c)));
    }
    Ok(mode.nu / real::<T>(2.0) * (mode.omega / omega_c).sqrt())
}

/// One cavity mode plus an ordered list of phonon modes and a nominal
/// temperature. Phonons are kept sorted by ascending frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridSystem<T: Real> {
    cavity: CavityMode<T>,
    phonons: Vec<PhononMode<T>>,
    temperature_k: T,
}

impl<T: Real> HybridSystem<T> {
    pub fn new(
        cavity: CavityMode<T>,
        mut phonons: Vec<PhononMode<T>>,
        temperature_k: T,
    ) -> Result<Self, ModelError> {
        if phonons.is_empty() {
            return Err(ModelError::NoPhonons);
        }
        if temperature_k < T::zero() {
            return Err(ModelError::NegativeTemperature(to_f64(temperature_k)));
        }
        phonons.sort_by(|a, b| a.omega.partial_cmp(&b.omega).unwrap());
        let mut labels: Vec<&str> = phonons.iter().map(|p| p.label.as_str()).collect();
        labels.sort_unstable();
        for pair in labels.windows(2) {
            if pair[0] == pair[1] {
                return Err(ModelError::DuplicateLabel(pair[0].to_string()));
            }
        }
        Ok(HybridSystem {
            cavity,
            phonons,
            temperature_k,
        })
    }

    pub fn cavity(&self) -> &CavityMode<T> {
        &self.cavity
    }

    pub fn omega_c(&self) -> T {
        self.cavity.omega_c
    }

    pub fn phonons(&self) -> &[PhononMode<T>] {
        &self.phonons
    }

    pub fn n_phonons(&self) -> usize {
        self.phonons.len()
    }

    pub fn temperature_k(&self) -> T {
        self.temperature_k
    }

    /// Same phonons and temperature with the cavity retuned to `omega_c`.
    pub fn with_cavity_frequency(&self, omega_c: T) -> Result<Self, ModelError> {
        Ok(HybridSystem {
            cavity: CavityMode::new(omega_c)?,
            phonons: self.phonons.clone(),
            temperature_k: self.temperature_k,
        })
    }

    pub fn with_temperature(&self, temperature_k: T) -> Result<Self, ModelError> {
        if temperature_k < T::zero() {
            return Err(ModelError::NegativeTemperature(to_f64(temperature_k)));
        }
        Ok(HybridSystem {
            cavity: self.cavity.clone(),
            phonons: self.phonons.clone(),
            temperature_k,
        })
    }

    /// Same cavity and temperature with every plasma frequency rescaled,
    /// e.g. to move into a perturbative regime.
    pub fn with_scaled_couplings(&self, factor: T) -> Self {
        let mut sys = self.clone();
        for p in &mut sys.phonons {
            p.nu *= factor;
        }
        sys
    }

    /// Coupling strengths `g_lambda` at the current cavity frequency.
    pub fn coupling_strengths(&self) -> Vec<T> {
        self.phonons
            .iter()
            .map(|p| coupling_strength(p, self.omega_c()).expect("omega_c > 0 by construction"))
            .collect()
    }
}

/// Which representation a quadratic form was built in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Representation {
    MinimalCoupling,
    Pzw,
}

/// Coefficient matrix of a quadratic bosonic Hamiltonian `H = 1/2 v^H M v`
/// (up to a constant) in the ordered operator basis
/// `(b_1 .. b_N, a, b_1^+ .. b_N^+, a^+)`.
///
/// With `M = [[A, B], [conj(B), conj(A)]]` and `A` Hermitian, `B` symmetric,
/// the full matrix is Hermitian; the bosonic metric
/// `eta = diag(+1 x (N+1), -1 x (N+1))` is implied by the basis ordering.
/// Entries are frequencies in THz (hbar factored out).
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm<T: Real> {
    matrix: DMatrix<Complex<T>>,
    representation: Representation,
}

impl<T: Real> QuadraticForm<T> {
    pub fn new(
        matrix: DMatrix<Complex<T>>,
        representation: Representation,
    ) -> Result<Self, ModelError> {
        let form = QuadraticForm {
            matrix,
            representation,
        };
        let defect = form.hermiticity_defect();
        if defect > real(1e-12) {
            return Err(ModelError::NotHermitian(to_f64(defect)));
        }
        Ok(form)
    }

    pub fn matrix(&self) -> &DMatrix<Complex<T>> {
        &self.matrix
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    /// Total dimension `2 (N+1)`.
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Number of bosonic modes `N+1`.
    pub fn n_modes(&self) -> usize {
        self.dim() / 2
    }

    /// `|M - M^H| / |M|` in the Frobenius norm.
    pub fn hermiticity_defect(&self) -> T {
        let diff = &self.matrix - self.matrix.adjoint();
        let norm = self.matrix.norm();
        if norm == T::zero() {
            T::zero()
        } else {
            diff.norm() / norm
        }
    }
}

/// Assemble `M = [[A, B], [conj(B), conj(A)]]` from the normal block `A`
/// (coefficients of `c_i^+ c_j`) and anomalous block `B` (of `c_i^+ c_j^+`).
fn bdg_matrix<T: Real>(a: &DMatrix<Complex<T>>, b: &DMatrix<Complex<T>>) -> DMatrix<Complex<T>> {
    let m = a.nrows();
    let mut full = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        for j in 0..m {
            full[(i, j)] = a[(i, j)];
            full[(i, j + m)] = b[(i, j)];
            full[(i + m, j)] = b[(i, j)].conj();
            full[(i + m, j + m)] = a[(i, j)].conj();
        }
    }
    full
}

/// Minimal-coupling Hamiltonian: bare modes, interaction
/// `-i g_l (b_l^+ - b_l)(a + a^+)` and the diamagnetic term
/// `(g_l^2/omega_l)(a + a^+)^2`.
pub fn build_minimal_coupling<T: Real>(system: &HybridSystem<T>) -> QuadraticForm<T> {
    let n = system.n_phonons();
    let m = n + 1;
    let c = n; // cavity index within a block
    let mut a = DMatrix::<Complex<T>>::zeros(m, m);
    let mut b = DMatrix::<Complex<T>>::zeros(m, m);

    let omega_c = system.omega_c();
    let couplings = system.coupling_strengths();
    let mut a2 = T::zero();
    for (l, (p, g)) in system.phonons().iter().zip(&couplings).enumerate() {
        a[(l, l)] = Complex::new(p.omega, T::zero());
        a[(l, c)] = Complex::new(T::zero(), -*g);
        a[(c, l)] = Complex::new(T::zero(), *g);
        b[(l, c)] = Complex::new(T::zero(), -*g);
        b[(c, l)] = Complex::new(T::zero(), -*g);
        a2 += *g * *g / p.omega;
    }
    let two = real::<T>(2.0);
    a[(c, c)] = Complex::new(omega_c + two * a2, T::zero());
    b[(c, c)] = Complex::new(two * a2, T::zero());

    QuadraticForm::new(bdg_matrix(&a, &b), Representation::MinimalCoupling)
        .expect("construction is Hermitian")
}

/// Dipole-gauge (PZW) Hamiltonian: interaction
/// `-i (nu_l/2) sqrt(omega_c/omega_l) (b_l + b_l^+)(a - a^+)` and the
/// polarization self-energy
/// `(nu_l nu_l' / 4 sqrt(omega_l omega_l')) (b_l + b_l^+)(b_l' + b_l'^+)`.
///
/// With `include_cross_terms` the spectrum matches the minimal-coupling
/// representation; without it the `l != l'` polarization couplings are
/// dropped (single-mode physics is unaffected).
pub fn build_pzw<T: Real>(system: &HybridSystem<T>, include_cross_terms: bool) -> QuadraticForm<T> {
    let n = system.n_phonons();
    let m = n + 1;
    let c = n;
    let mut a = DMatrix::<Complex<T>>::zeros(m, m);
    let mut b = DMatrix::<Complex<T>>::zeros(m, m);

    let omega_c = system.omega_c();
    let quarter = real::<T>(0.25);
    let two = real::<T>(2.0);
    a[(c, c)] = Complex::new(omega_c, T::zero());
    for (l, p) in system.phonons().iter().enumerate() {
        a[(l, l)] = Complex::new(p.omega, T::zero());
        let gp = p.nu / two * (omega_c / p.omega).sqrt();
        a[(l, c)] = Complex::new(T::zero(), -gp);
        a[(c, l)] = Complex::new(T::zero(), gp);
        b[(l, c)] = Complex::new(T::zero(), gp);
        b[(c, l)] = Complex::new(T::zero(), gp);
        for (lp, q) in system.phonons().iter().enumerate() {
            if l != lp && !include_cross_terms {
                continue;
            }
            let coeff = quarter * p.nu * q.nu / (p.omega * q.omega).sqrt();
            a[(l, lp)] += Complex::new(two * coeff, T::zero());
            b[(l, lp)] += Complex::new(two * coeff, T::zero());
        }
    }

    QuadraticForm::new(bdg_matrix(&a, &b), Representation::Pzw).expect("construction is Hermitian")
}

/// Squeezed-phonon parameters of one mode after absorbing its own
/// polarization self-energy: blueshifted frequency, coupling to the cavity,
/// and the Bogoliubov squeeze coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SqueezedMode<T> {
    pub label: String,
    /// `sqrt(omega^2 + nu^2)`, THz.
    pub omega_tilde: T,
    /// `(nu/2) sqrt(omega_c/omega_tilde)`, THz.
    pub g_tilde: T,
    /// `(omega_tilde + omega) / (2 sqrt(omega omega_tilde))`.
    pub cosh_coeff: T,
    /// `(omega_tilde - omega) / (2 sqrt(omega omega_tilde))`.
    pub sinh_coeff: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SqueezedPhononParams<T> {
    pub modes: Vec<SqueezedMode<T>>,
}

pub fn squeezed_params<T: Real>(system: &HybridSystem<T>) -> SqueezedPhononParams<T> {
    let two = real::<T>(2.0);
    let omega_c = system.omega_c();
    let modes = system
        .phonons()
        .iter()
        .map(|p| {
            let omega_tilde = (p.omega * p.omega + p.nu * p.nu).sqrt();
            let g_tilde = p.nu / two * (omega_c / omega_tilde).sqrt();
            let denom = two * (p.omega * omega_tilde).sqrt();
            SqueezedMode {
                label: p.label.clone(),
                omega_tilde,
                g_tilde,
                cosh_coeff: (omega_tilde + p.omega) / denom,
                sinh_coeff: (omega_tilde - p.omega) / denom,
            }
        })
        .collect();
    SqueezedPhononParams { modes }
}

/// Effective Hamiltonian after decoupling the cavity in the low cavity
/// frequency regime: the cavity renormalization coefficient and the
/// cavity-mediated phonon-phonon coupling matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveHamiltonian<T: Real> {
    /// `sum_l g_tilde_l^2 / omega_tilde_l`, THz.
    pub cavity_renormalization: T,
    /// `K_{ll'} = (g_tilde_l g_tilde_l' / 2) (omega_tilde_l + omega_tilde_l')
    /// / (omega_tilde_l omega_tilde_l')`, THz.
    pub phonon_coupling: DMatrix<T>,
    /// Set when `omega_c / min omega_l > 1/2`, outside the derivation regime.
    pub regime_warning: bool,
}

pub fn schrieffer_wolff<T: Real>(system: &HybridSystem<T>) -> EffectiveHamiltonian<T> {
    let squeezed = squeezed_params(system);
    let n = squeezed.modes.len();
    let two = real::<T>(2.0);
    let mut renorm = T::zero();
    let mut k = DMatrix::zeros(n, n);
    for (i, mi) in squeezed.modes.iter().enumerate() {
        renorm += mi.g_tilde * mi.g_tilde / mi.omega_tilde;
        for (j, mj) in squeezed.modes.iter().enumerate() {
            k[(i, j)] = mi.g_tilde * mj.g_tilde / two * (mi.omega_tilde + mj.omega_tilde)
                / (mi.omega_tilde * mj.omega_tilde);
        }
    }
    let min_omega = system
        .phonons()
        .iter()
        .map(|p| p.omega)
        .fold(real::<T>(f64::INFINITY), |a, b| a.min(b));
    EffectiveHamiltonian {
        cavity_renormalization: renorm,
        phonon_coupling: k,
        regime_warning: system.omega_c() / min_omega > real(0.5),
    }
}

// ---------------------------------------------------------------------------
// JSON system configuration

/// Cavity part of a system configuration document: either a frequency or a
/// nanoslot geometry it is derived from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CavityConfig {
    Frequency {
        omega_c_thz: f64,
    },
    Geometry {
        slot_length_um: f64,
        eps_sub: f64,
        #[serde(default = "default_eps_air")]
        eps_air: f64,
    },
}

fn default_eps_air() -> f64 {
    1.0
}

fn default_temperature() -> f64 {
    300.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhononConfig {
    pub label: String,
    pub omega_thz: f64,
    pub nu_thz: f64,
}

/// System definition as read from a JSON document:
/// `{"cavity": {...}, "phonons": [...], "temperature_K": ...}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemConfig {
    pub cavity: CavityConfig,
    pub phonons: Vec<PhononConfig>,
    #[serde(rename = "temperature_K", default = "default_temperature")]
    pub temperature_k: f64,
}

impl SystemConfig {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Config(e.to_string()))
    }

    pub fn build<T: Real>(&self) -> Result<HybridSystem<T>, ModelError> {
        let cavity = match &self.cavity {
            CavityConfig::Frequency { omega_c_thz } => CavityMode::new(real(*omega_c_thz))?,
            CavityConfig::Geometry {
                slot_length_um,
                eps_sub,
                eps_air,
            } => CavityMode::from_slot_length(real(*slot_length_um), real(*eps_sub), real(*eps_air))?,
        };
        let phonons = self
            .phonons
            .iter()
            .map(|p| PhononMode::new(p.label.clone(), real(p.omega_thz), real(p.nu_thz)))
            .collect::<Result<Vec<_>, _>>()?;
        HybridSystem::new(cavity, phonons, real(self.temperature_k))
    }
}

fn to_f64<T: Real>(x: T) -> f64 {
    num_traits::ToPrimitive::to_f64(&x).unwrap_or(f64::NAN)
}
