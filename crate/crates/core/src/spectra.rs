//! Experimental data-reduction chain: time-domain traces to complex
//! transmission, Lorentzian peak extraction, thin-film Tinkham conductivity
//! and the dielectric function, plus synthetic spectrum generation for
//! end-to-end tests.

use crate::constants::{VACUUM_IMPEDANCE_OHM, VACUUM_PERMITTIVITY_F_PER_M};
use crate::model::HybridSystem;
use crate::numeric::{levenberg_marquardt, LmOptions};
use crate::{real, Real};
use num_complex::Complex;
use rustfft::{FftNum, FftPlanner};
use thiserror::Error;

/// Reference-spectrum bins below this fraction of the peak are masked in a
/// transmission ratio.
pub const REFERENCE_DYNAMIC_FLOOR: f64 = 1e-3;
/// Transmission magnitudes below this are masked in the Tinkham inversion.
pub const TRANSMISSION_FLOOR: f64 = 1e-6;
/// Normalized-column condition of the normal matrix above which a peak fit
/// is flagged as ill-conditioned.
pub const ILL_CONDITION_THRESHOLD: f64 = 1e8;

#[derive(Debug, Error)]
pub enum SpectraError {
    #[error("time trace needs at least 64 samples, got {0}")]
    TooFewSamples(usize),
    #[error("sample spacing must be positive, got {0} ps")]
    BadSpacing(f64),
    #[error("traces have different sample spacings ({0} vs {1} ps)")]
    SpacingMismatch(f64, f64),
    #[error("every spectral bin fell below the reference dynamic floor")]
    AllMasked,
    #[error("frequency grid must be strictly ascending and finite")]
    BadGrid,
    #[error("expected a {expected} spectrum, got {got}")]
    KindMismatch { expected: String, got: String },
    #[error("window [{0}, {1}] THz contains too few points ({2}) for {3} parameters")]
    WindowTooNarrow(f64, f64, usize, usize),
    #[error("no peaks found in the fit window")]
    NoPeaks,
    #[error("linewidths must be positive")]
    BadLinewidth,
    #[error("film thickness must be positive, got {0} m")]
    BadThickness(f64),
    #[error("least-squares failure: {0}")]
    LeastSquares(String),
    #[error(transparent)]
    Bogoliubov(#[from] crate::bogoliubov::BogoliubovError),
}

/// Uniformly sampled electric-field trace vs delay time.
#[derive(Debug, Clone)]
pub struct TimeTrace<T> {
    pub label: String,
    /// Sample spacing, ps.
    pub dt_ps: T,
    pub field: Vec<T>,
}

impl<T: Real> TimeTrace<T> {
    pub fn new(label: impl Into<String>, dt_ps: T, field: Vec<T>) -> Result<Self, SpectraError> {
        if field.len() < 64 {
            return Err(SpectraError::TooFewSamples(field.len()));
        }
        if dt_ps <= T::zero() {
            return Err(SpectraError::BadSpacing(to_f64(dt_ps)));
        }
        Ok(TimeTrace {
            label: label.into(),
            dt_ps,
            field,
        })
    }

    /// Total energy `sum E_t^2`, for Parseval checks.
    pub fn energy(&self) -> T {
        self.field.iter().fold(T::zero(), |a, &e| a + e * e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumKind {
    Field,
    Transmission,
    /// S/m.
    Conductivity,
    Dielectric,
}

impl std::fmt::Display for SpectrumKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SpectrumKind::Field => "field",
            SpectrumKind::Transmission => "transmission",
            SpectrumKind::Conductivity => "conductivity",
            SpectrumKind::Dielectric => "dielectric",
        };
        f.write_str(s)
    }
}

/// Complex amplitude on a strictly ascending frequency grid (THz).
#[derive(Debug, Clone)]
pub struct ComplexSpectrum<T: Real> {
    pub kind: SpectrumKind,
    pub freqs_thz: Vec<T>,
    pub values: Vec<Complex<T>>,
}

impl<T: Real> ComplexSpectrum<T> {
    pub fn new(
        kind: SpectrumKind,
        freqs_thz: Vec<T>,
        values: Vec<Complex<T>>,
    ) -> Result<Self, SpectraError> {
        if freqs_thz.len() != values.len() || freqs_thz.is_empty() {
            return Err(SpectraError::BadGrid);
        }
        for w in freqs_thz.windows(2) {
            if w[1] <= w[0] {
                return Err(SpectraError::BadGrid);
            }
        }
        if freqs_thz.iter().any(|f| !f.is_finite())
            || values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(SpectraError::BadGrid);
        }
        Ok(ComplexSpectrum {
            kind,
            freqs_thz,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.freqs_thz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs_thz.is_empty()
    }

    fn expect_kind(&self, expected: SpectrumKind) -> Result<(), SpectraError> {
        if self.kind != expected {
            return Err(SpectraError::KindMismatch {
                expected: expected.to_string(),
                got: self.kind.to_string(),
            });
        }
        Ok(())
    }

    /// Scale every amplitude by a (real) factor.
    pub fn scaled(&self, factor: T) -> Self {
        let mut s = self.clone();
        for v in &mut s.values {
            *v *= Complex::new(factor, T::zero());
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowFn {
    None,
    Hann,
}

/// Full complex DFT of a trace (no window).
pub(crate) fn dft<T: Real + FftNum>(field: &[T]) -> Vec<Complex<T>> {
    let mut buf: Vec<Complex<T>> = field
        .iter()
        .map(|&e| Complex::new(e, T::zero()))
        .collect();
    FftPlanner::new()
        .plan_fft_forward(buf.len())
        .process(&mut buf);
    buf
}

fn windowed_field<T: Real>(trace: &TimeTrace<T>, window: WindowFn) -> Vec<T> {
    match window {
        WindowFn::None => trace.field.clone(),
        WindowFn::Hann => {
            let n = trace.field.len();
            trace
                .field
                .iter()
                .enumerate()
                .map(|(i, &e)| {
                    let phase = real::<T>(std::f64::consts::TAU) * real::<T>(i as f64)
                        / real::<T>((n - 1) as f64);
                    e * real::<T>(0.5) * (T::one() - phase.cos())
                })
                .collect()
        }
    }
}

/// Positive-frequency field spectrum of one trace; grid in THz
/// (`1/ps == THz`).
pub fn field_spectrum<T: Real + FftNum>(
    trace: &TimeTrace<T>,
) -> Result<ComplexSpectrum<T>, SpectraError> {
    let spec = dft(&trace.field);
    let n = trace.field.len();
    let df = T::one() / (real::<T>(n as f64) * trace.dt_ps);
    let bins = n / 2;
    let freqs = (1..=bins).map(|k| real::<T>(k as f64) * df).collect();
    let values = (1..=bins).map(|k| spec[k]).collect();
    ComplexSpectrum::new(SpectrumKind::Field, freqs, values)
}

/// Complex transmission `E_sample(f) / E_ref(f)` on the positive-frequency
/// DFT grid. The shorter trace is zero-padded to the longer length; bins
/// where the reference magnitude falls below `1e-3` of its peak are masked
/// (dropped from the grid).
pub fn transmission<T: Real + FftNum>(
    sample: &TimeTrace<T>,
    reference: &TimeTrace<T>,
) -> Result<ComplexSpectrum<T>, SpectraError> {
    transmission_with(sample, reference, WindowFn::None)
}

pub fn transmission_with<T: Real + FftNum>(
    sample: &TimeTrace<T>,
    reference: &TimeTrace<T>,
    window: WindowFn,
) -> Result<ComplexSpectrum<T>, SpectraError> {
    let rel = ((sample.dt_ps - reference.dt_ps) / reference.dt_ps).abs();
    if rel > real(1e-12) {
        return Err(SpectraError::SpacingMismatch(
            to_f64(sample.dt_ps),
            to_f64(reference.dt_ps),
        ));
    }
    let n = sample.field.len().max(reference.field.len());
    let mut s_field = windowed_field(sample, window);
    let mut r_field = windowed_field(reference, window);
    s_field.resize(n, T::zero());
    r_field.resize(n, T::zero());

    let s_spec = dft(&s_field);
    let r_spec = dft(&r_field);

    let peak = r_spec
        .iter()
        .take(n / 2 + 1)
        .fold(T::zero(), |a, v| a.max(v.norm_sqr().sqrt()));
    if peak == T::zero() {
        return Err(SpectraError::AllMasked);
    }
    let floor = real::<T>(REFERENCE_DYNAMIC_FLOOR) * peak;

    let df = T::one() / (real::<T>(n as f64) * sample.dt_ps);
    let mut freqs = Vec::new();
    let mut values = Vec::new();
    for k in 1..=n / 2 {
        if r_spec[k].norm_sqr().sqrt() < floor {
            continue;
        }
        freqs.push(real::<T>(k as f64) * df);
        values.push(s_spec[k] / r_spec[k]);
    }
    if freqs.is_empty() {
        return Err(SpectraError::AllMasked);
    }
    ComplexSpectrum::new(SpectrumKind::Transmission, freqs, values)
}

/// One extracted resonance line.
#[derive(Debug, Clone)]
pub struct PeakRecord<T> {
    /// Center frequency, THz.
    pub center: T,
    /// Full width at half maximum, THz.
    pub fwhm: T,
    /// Peak height above the fitted baseline (in `|T|^2` units).
    pub amplitude: T,
    /// Norm of the full fit residual.
    pub residual_norm: T,
    pub branch: Option<String>,
}

/// Outcome of a multi-Lorentzian fit.
#[derive(Debug, Clone)]
pub struct PeakFit<T> {
    /// Records sorted by center frequency.
    pub peaks: Vec<PeakRecord<T>>,
    pub baseline: T,
    pub converged: bool,
    /// Condition number of the column-normalized normal matrix at the
    /// optimum.
    pub condition: T,
    /// Set when `condition` exceeds [`ILL_CONDITION_THRESHOLD`], e.g. for
    /// peaks overlapping within half a linewidth.
    pub ill_conditioned: bool,
}

/// Nonlinear least-squares fit of `|T|^2` in `[window.0, window.1]` with a
/// constant baseline plus up to `max_peaks` Lorentzians
/// `A (w/2)^2 / ((f-c)^2 + (w/2)^2)`, initialized from local maxima.
/// Non-convergence is reported through `PeakFit::converged`, not an error.
pub fn extract_peaks<T: Real>(
    spec: &ComplexSpectrum<T>,
    max_peaks: usize,
    window: (T, T),
) -> Result<PeakFit<T>, SpectraError> {
    let mut f = Vec::new();
    let mut y = Vec::new();
    for (freq, val) in spec.freqs_thz.iter().zip(&spec.values) {
        if *freq >= window.0 && *freq <= window.1 {
            f.push(*freq);
            y.push(val.norm_sqr());
        }
    }
    let guesses = initial_peaks(&f, &y, max_peaks);
    if guesses.is_empty() {
        return Err(SpectraError::NoPeaks);
    }
    let n_par = 1 + 3 * guesses.len();
    if f.len() < n_par + 2 {
        return Err(SpectraError::WindowTooNarrow(
            to_f64(window.0),
            to_f64(window.1),
            f.len(),
            n_par,
        ));
    }

    let baseline0 = y.iter().fold(real::<T>(f64::INFINITY), |a, &b| a.min(b));
    let mut x0: Vec<T> = vec![baseline0.max(T::zero())];
    let mut lower: Vec<T> = vec![T::zero()];
    let mut upper: Vec<T> = vec![real(f64::INFINITY)];
    let span = window.1 - window.0;
    let min_width = (f[1] - f[0]).max(span * real(1e-6));
    for (c, a, w) in &guesses {
        x0.extend_from_slice(&[(*a - baseline0).max(real(1e-12)), *c, *w]);
        lower.extend_from_slice(&[T::zero(), window.0, min_width]);
        upper.extend_from_slice(&[real(f64::INFINITY), window.1, span]);
    }

    let model = |p: &[T], out: &mut Vec<T>| -> Result<(), String> {
        for (fi, yi) in f.iter().zip(&y) {
            let mut v = p[0];
            for k in 0..(p.len() - 1) / 3 {
                let (a, c, w) = (p[1 + 3 * k], p[2 + 3 * k], p[3 + 3 * k]);
                let hw = w / real::<T>(2.0);
                let d = *fi - c;
                v += a * hw * hw / (d * d + hw * hw);
            }
            out.push(v - *yi);
        }
        Ok(())
    };

    let sol = levenberg_marquardt(&model, &x0, &lower, &upper, &LmOptions::default())
        .map_err(|e| SpectraError::LeastSquares(e.to_string()))?;

    // collinearity measure: condition of the normal matrix with
    // unit-normalized Jacobian columns, so parameter units do not mix;
    // overlapping peaks produce nearly parallel columns and a huge value
    let mut jac = sol.jacobian.clone();
    for j in 0..jac.ncols() {
        let nrm = jac.column(j).norm();
        if nrm > T::zero() {
            let mut col = jac.column_mut(j);
            col /= nrm;
        }
    }
    let jtj = jac.transpose() * &jac;
    let eig = jtj.symmetric_eigen().eigenvalues;
    let (mut lo, mut hi) = (real::<T>(f64::INFINITY), T::zero());
    for v in eig.iter() {
        lo = lo.min(v.abs());
        hi = hi.max(v.abs());
    }
    let condition = if lo > T::zero() {
        hi / lo
    } else {
        real(f64::INFINITY)
    };

    let residual_norm = sol.cost.sqrt();
    let mut peaks: Vec<PeakRecord<T>> = (0..guesses.len())
        .map(|k| PeakRecord {
            center: sol.params[2 + 3 * k],
            fwhm: sol.params[3 + 3 * k],
            amplitude: sol.params[1 + 3 * k],
            residual_norm,
            branch: None,
        })
        .collect();
    peaks.sort_by(|a, b| a.center.partial_cmp(&b.center).unwrap());

    Ok(PeakFit {
        peaks,
        baseline: sol.params[0],
        converged: sol.converged,
        condition,
        ill_conditioned: condition > real(ILL_CONDITION_THRESHOLD),
    })
}

/// Local maxima of a lightly smoothed copy, tallest first, separated by at
/// least two grid steps; returns `(center, height, width guess)`.
fn initial_peaks<T: Real>(f: &[T], y: &[T], max_peaks: usize) -> Vec<(T, T, T)> {
    let n = y.len();
    if n < 3 || max_peaks == 0 {
        return Vec::new();
    }
    let third = T::one() / real::<T>(3.0);
    let smooth: Vec<T> = (0..n)
        .map(|i| {
            if i == 0 || i == n - 1 {
                y[i]
            } else {
                (y[i - 1] + y[i] + y[i + 1]) * third
            }
        })
        .collect();
    let mut candidates: Vec<usize> = (1..n - 1)
        .filter(|&i| smooth[i] > smooth[i - 1] && smooth[i] >= smooth[i + 1])
        .collect();
    candidates.sort_by(|&a, &b| smooth[b].partial_cmp(&smooth[a]).unwrap());

    let floor = smooth.iter().fold(real::<T>(f64::INFINITY), |a, &b| a.min(b));
    // keep maxima separated by a fraction of the window so one noisy line
    // does not seed several components
    let min_sep = (f[n - 1] - f[0]) / real::<T>((4 * max_peaks) as f64);
    let mut picked: Vec<usize> = Vec::new();
    for i in candidates {
        if picked.len() >= max_peaks {
            break;
        }
        if picked.iter().any(|&p| (f[p] - f[i]).abs() < min_sep) {
            continue;
        }
        picked.push(i);
    }
    let mut guesses: Vec<(T, T, T)> = picked
        .into_iter()
        .map(|i| {
            let height = y[i];
            let half = floor + (height - floor) / real::<T>(2.0);
            let mut left = i;
            while left > 0 && y[left] > half {
                left -= 1;
            }
            let mut right = i;
            while right < n - 1 && y[right] > half {
                right += 1;
            }
            let width = (f[right] - f[left]).max(f[1] - f[0]);
            (f[i], height, width)
        })
        .collect();

    // fewer maxima than requested components: split the widest guess in
    // two, which lets the fit resolve blended lines (and exposes their
    // degeneracy through the condition number)
    let grid_step = f[1] - f[0];
    while guesses.len() < max_peaks {
        let widest = match guesses
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .2.partial_cmp(&b.1 .2).unwrap())
        {
            Some((i, g)) if g.2 > real::<T>(4.0) * grid_step => i,
            _ => break,
        };
        let (c, h, w) = guesses.remove(widest);
        let quarter = w / real::<T>(4.0);
        let half_w = w / real::<T>(2.0);
        guesses.push((c - quarter, h, half_w));
        guesses.push((c + quarter, h, half_w));
    }
    guesses
}

/// Thin-film conductivity from complex transmission:
/// `sigma(f) = (1 + n_sub)(1/t - 1) / (Z0 d)` in S/m. Bins with
/// `|t| < 1e-6` are masked.
pub fn tinkham_conductivity<T: Real>(
    t: &ComplexSpectrum<T>,
    n_sub: T,
    thickness_m: T,
) -> Result<ComplexSpectrum<T>, SpectraError> {
    t.expect_kind(SpectrumKind::Transmission)?;
    if thickness_m <= T::zero() {
        return Err(SpectraError::BadThickness(to_f64(thickness_m)));
    }
    let z0d = real::<T>(VACUUM_IMPEDANCE_OHM) * thickness_m;
    let scale = (T::one() + n_sub) / z0d;
    let mut freqs = Vec::new();
    let mut values = Vec::new();
    for (f, v) in t.freqs_thz.iter().zip(&t.values) {
        if v.norm_sqr().sqrt() < real(TRANSMISSION_FLOOR) {
            continue;
        }
        freqs.push(*f);
        let inv = Complex::new(T::one(), T::zero()) / *v;
        values.push((inv - Complex::new(T::one(), T::zero())) * Complex::new(scale, T::zero()));
    }
    if freqs.is_empty() {
        return Err(SpectraError::AllMasked);
    }
    ComplexSpectrum::new(SpectrumKind::Conductivity, freqs, values)
}

/// Forward Tinkham map `t = (1 + n_sub)/(1 + n_sub + Z0 sigma d)`, the
/// algebraic inverse of [`tinkham_conductivity`].
pub fn tinkham_transmission<T: Real>(
    sigma: &ComplexSpectrum<T>,
    n_sub: T,
    thickness_m: T,
) -> Result<ComplexSpectrum<T>, SpectraError> {
    sigma.expect_kind(SpectrumKind::Conductivity)?;
    if thickness_m <= T::zero() {
        return Err(SpectraError::BadThickness(to_f64(thickness_m)));
    }
    let z0d = real::<T>(VACUUM_IMPEDANCE_OHM) * thickness_m;
    let one_plus = Complex::new(T::one() + n_sub, T::zero());
    let values = sigma
        .values
        .iter()
        .map(|s| one_plus / (one_plus + *s * Complex::new(z0d, T::zero())))
        .collect();
    ComplexSpectrum::new(SpectrumKind::Transmission, sigma.freqs_thz.clone(), values)
}

/// Dielectric function `eps(f) = eps_inf + i sigma / (2 pi f * 1e12 eps_0)`
/// from a conductivity spectrum. Nonpositive-frequency bins are dropped.
pub fn dielectric_function<T: Real>(
    sigma: &ComplexSpectrum<T>,
    eps_inf: T,
) -> Result<ComplexSpectrum<T>, SpectraError> {
    sigma.expect_kind(SpectrumKind::Conductivity)?;
    let mut freqs = Vec::new();
    let mut values = Vec::new();
    let i_unit = Complex::new(T::zero(), T::one());
    for (f, s) in sigma.freqs_thz.iter().zip(&sigma.values) {
        if *f <= T::zero() {
            continue;
        }
        let omega = real::<T>(std::f64::consts::TAU) * *f * real(1e12);
        let denom = Complex::new(omega * real(VACUUM_PERMITTIVITY_F_PER_M), T::zero());
        freqs.push(*f);
        values.push(Complex::new(eps_inf, T::zero()) + i_unit * *s / denom);
    }
    if freqs.is_empty() {
        return Err(SpectraError::AllMasked);
    }
    ComplexSpectrum::new(SpectrumKind::Dielectric, freqs, values)
}

/// Test fixture: complex transmission with one Lorentzian component per
/// polariton branch, its height set by the branch's photon weight, the way
/// cavity-like resonances show up in a transmission measurement. Dark
/// branches (zero photon content) therefore leave no line. `linewidths_thz`
/// supplies one FWHM per branch, or a single value reused for all.
pub fn synthesize_polariton_spectrum<T: Real>(
    system: &HybridSystem<T>,
    linewidths_thz: &[T],
    grid_thz: &[T],
) -> Result<ComplexSpectrum<T>, SpectraError> {
    if grid_thz.is_empty() || grid_thz[0] <= T::zero() {
        return Err(SpectraError::BadGrid);
    }
    if linewidths_thz.is_empty() || linewidths_thz.iter().any(|w| *w <= T::zero()) {
        return Err(SpectraError::BadLinewidth);
    }
    let basis = crate::bogoliubov::diagonalize(&crate::model::build_minimal_coupling(system))?;
    let centers = basis.frequencies();
    let heights: Vec<T> = basis.branches.iter().map(|b| b.photon_weight()).collect();
    let widths: Vec<T> = if linewidths_thz.len() == 1 {
        vec![linewidths_thz[0]; centers.len()]
    } else {
        if linewidths_thz.len() != centers.len() {
            return Err(SpectraError::BadLinewidth);
        }
        linewidths_thz.to_vec()
    };
    let i_unit = Complex::new(T::zero(), T::one());
    let values = grid_thz
        .iter()
        .map(|&f| {
            let mut t = Complex::new(T::zero(), T::zero());
            for ((c, w), h) in centers.iter().zip(&widths).zip(&heights) {
                let hw = *w / real::<T>(2.0);
                t += Complex::new(*h, T::zero()) * i_unit * Complex::new(hw, T::zero())
                    / (Complex::new(f - *c, T::zero()) + i_unit * Complex::new(hw, T::zero()));
            }
            t
        })
        .collect();
    ComplexSpectrum::new(SpectrumKind::Transmission, grid_thz.to_vec(), values)
}

/// Test fixture: a broadband single-cycle reference pulse and the sample
/// trace obtained by filtering it through `transmission_of(f_thz)`;
/// both returned as time traces ready for [`transmission`].
pub fn synthesize_trace_pair<T: Real + FftNum>(
    transmission_of: &dyn Fn(T) -> Complex<T>,
    n_samples: usize,
    dt_ps: T,
    pulse_center_ps: T,
    pulse_width_ps: T,
) -> Result<(TimeTrace<T>, TimeTrace<T>), SpectraError> {
    if n_samples < 64 {
        return Err(SpectraError::TooFewSamples(n_samples));
    }
    if dt_ps <= T::zero() {
        return Err(SpectraError::BadSpacing(to_f64(dt_ps)));
    }
    // derivative-of-Gaussian pulse: broadband, no DC component
    let reference_field: Vec<T> = (0..n_samples)
        .map(|i| {
            let t = real::<T>(i as f64) * dt_ps - pulse_center_ps;
            let arg = t / pulse_width_ps;
            -arg * (-arg * arg / real::<T>(2.0)).exp()
        })
        .collect();

    let mut spec = dft(&reference_field);
    let df = T::one() / (real::<T>(n_samples as f64) * dt_ps);
    // multiply by T(f) with Hermitian symmetry so the sample trace is real
    for k in 1..=n_samples / 2 {
        let t = transmission_of(real::<T>(k as f64) * df);
        spec[k] *= t;
        let mirror = n_samples - k;
        if mirror != k {
            spec[mirror] *= t.conj();
        } else {
            // Nyquist bin must stay real
            spec[k] = Complex::new(spec[k].re, T::zero());
        }
    }
    let mut buf = spec;
    FftPlanner::new()
        .plan_fft_inverse(buf.len())
        .process(&mut buf);
    let norm = T::one() / real::<T>(n_samples as f64);
    let sample_field: Vec<T> = buf.iter().map(|v| v.re * norm).collect();

    Ok((
        TimeTrace::new("reference", dt_ps, reference_field)?,
        TimeTrace::new("sample", dt_ps, sample_field)?,
    ))
}

/// Additive Gaussian noise with standard deviation `relative * max |field|`.
pub fn add_trace_noise<R: rand::Rng>(trace: &mut TimeTrace<f64>, relative: f64, rng: &mut R) {
    let scale = relative
        * trace
            .field
            .iter()
            .fold(0.0f64, |a, &b| a.max(b.abs()));
    for v in &mut trace.field {
        *v += scale * crate::numeric::standard_normal(rng);
    }
}

/// Additive complex Gaussian noise with standard deviation
/// `relative * max |value|` per quadrature.
pub fn add_spectrum_noise<R: rand::Rng>(
    spec: &mut ComplexSpectrum<f64>,
    relative: f64,
    rng: &mut R,
) {
    let scale = relative
        * spec
            .values
            .iter()
            .fold(0.0f64, |a, v| a.max(v.norm()));
    for v in &mut spec.values {
        *v += Complex::new(
            scale * crate::numeric::standard_normal(rng),
            scale * crate::numeric::standard_normal(rng),
        );
    }
}

fn to_f64<T: Real>(x: T) -> f64 {
    num_traits::ToPrimitive::to_f64(&x).unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CavityMode, HybridSystem, PhononMode};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pulse(n: usize) -> TimeTrace<f64> {
        let field = (0..n)
            .map(|i| {
                let t = i as f64 * 0.05 - 5.0;
                (-t * t / 2.0).exp() * (2.0 * t).cos()
            })
            .collect();
        TimeTrace::new("pulse", 0.05, field).unwrap()
    }

    #[test]
    fn identical_traces_give_unit_transmission() {
        let p = pulse(512);
        let t = transmission(&p, &p).unwrap();
        for v in &t.values {
            assert_relative_eq!(v.re, 1.0, epsilon = 1e-12);
            assert!(v.im.abs() < 1e-12);
        }
        // linearity: half-amplitude sample gives a flat 0.5
        let mut half = p.clone();
        for v in &mut half.field {
            *v *= 0.5;
        }
        let t = transmission(&half, &p).unwrap();
        for v in &t.values {
            assert_relative_eq!(v.re, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn parseval_energy_is_preserved() {
        let p = pulse(512);
        let spec = dft(&p.field);
        let freq_energy: f64 = spec.iter().map(|v| v.norm_sqr()).sum::<f64>() / 512.0;
        assert_relative_eq!(p.energy(), freq_energy, max_relative = 1e-9);
    }

    #[test]
    fn trace_validation() {
        assert!(TimeTrace::new("x", 0.05, vec![0.0; 10]).is_err());
        assert!(TimeTrace::new("x", -0.05, vec![0.0; 128]).is_err());
        let a = TimeTrace::new("a", 0.05, vec![1.0; 128]).unwrap();
        let b = TimeTrace::new("b", 0.06, vec![1.0; 128]).unwrap();
        assert!(matches!(
            transmission(&a, &b),
            Err(SpectraError::SpacingMismatch(..))
        ));
        // silent reference: every bin is masked
        let silent = TimeTrace::new("z", 0.05, vec![0.0; 128]).unwrap();
        assert!(matches!(
            transmission(&a, &silent),
            Err(SpectraError::AllMasked)
        ));
    }

    #[test]
    fn masking_and_no_peak_errors() {
        // transmission magnitudes below the floor vanish from the grid
        let t = ComplexSpectrum::new(
            SpectrumKind::Transmission,
            vec![1.0, 2.0],
            vec![Complex::new(0.5, 0.0), Complex::new(1e-9, 0.0)],
        )
        .unwrap();
        let sigma = tinkham_conductivity(&t, 2.1, 200e-9).unwrap();
        assert_eq!(sigma.len(), 1);
        let dead = ComplexSpectrum::new(
            SpectrumKind::Transmission,
            vec![1.0],
            vec![Complex::new(1e-9, 0.0)],
        )
        .unwrap();
        assert!(matches!(
            tinkham_conductivity(&dead, 2.1, 200e-9),
            Err(SpectraError::AllMasked)
        ));

        // featureless spectrum in the window: nothing to fit
        let flat: Vec<Complex<f64>> = (0..200).map(|i| Complex::new(1.0 + i as f64 * 1e-3, 0.0)).collect();
        let grid: Vec<f64> = (0..200).map(|i| 0.5 + i as f64 * 0.01).collect();
        let spec = ComplexSpectrum::new(SpectrumKind::Transmission, grid, flat).unwrap();
        assert!(matches!(
            extract_peaks(&spec, 2, (0.6, 2.0)),
            Err(SpectraError::NoPeaks)
        ));

        // kind checks guard the unit conventions
        let field = ComplexSpectrum::new(
            SpectrumKind::Field,
            vec![1.0],
            vec![Complex::new(0.5, 0.0)],
        )
        .unwrap();
        assert!(matches!(
            tinkham_conductivity(&field, 2.1, 200e-9),
            Err(SpectraError::KindMismatch { .. })
        ));
    }

    #[test]
    fn synthetic_three_lorentzian_round_trip() {
        let t_of = |f: f64| -> Complex<f64> {
            let mut t = Complex::new(0.0, 0.0);
            for (c, w) in [(0.8, 0.15), (1.4, 0.2), (2.3, 0.25)] {
                let hw = w / 2.0;
                t += Complex::new(0.0, hw) / (Complex::new(f - c, 0.0) + Complex::new(0.0, hw));
            }
            t
        };
        let (reference, sample) =
            synthesize_trace_pair(&t_of, 2048, 0.05, 20.0, 0.35).unwrap();
        let recovered = transmission(&sample, &reference).unwrap();
        for (f, v) in recovered.freqs_thz.iter().zip(&recovered.values) {
            assert!(
                (v - t_of(*f)).norm() < 1e-6,
                "at {f} THz: {v} vs {}",
                t_of(*f)
            );
        }
    }

    #[test]
    fn single_lorentzian_self_fit() {
        let grid: Vec<f64> = (1..2000).map(|i| i as f64 * 0.002).collect();
        let values: Vec<Complex<f64>> = grid
            .iter()
            .map(|&f| {
                let hw = 0.1;
                Complex::new(0.0, hw) / (Complex::new(f - 1.2, 0.0) + Complex::new(0.0, hw))
            })
            .collect();
        let spec = ComplexSpectrum::new(SpectrumKind::Transmission, grid, values).unwrap();
        let fit = extract_peaks(&spec, 1, (0.5, 2.5)).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.peaks.len(), 1);
        assert!((fit.peaks[0].center - 1.2).abs() < 1e-6);
        assert!((fit.peaks[0].fwhm - 0.2).abs() < 1e-6);
        assert!((fit.peaks[0].amplitude - 1.0).abs() < 1e-6);
        assert!(!fit.ill_conditioned);
    }

    /// `|T|^2` that is an exact sum of real Lorentzian lines.
    fn lorentzian_intensity_spectrum(
        grid: &[f64],
        lines: &[(f64, f64, f64)],
        noise: f64,
        rng: &mut ChaCha8Rng,
    ) -> ComplexSpectrum<f64> {
        let values: Vec<Complex<f64>> = grid
            .iter()
            .map(|&f| {
                let mut y = 0.0;
                for &(c, w, a) in lines {
                    let hw = w / 2.0;
                    y += a * hw * hw / ((f - c).powi(2) + hw * hw);
                }
                y += noise * crate::numeric::standard_normal(rng);
                Complex::new(y.max(0.0).sqrt(), 0.0)
            })
            .collect();
        ComplexSpectrum::new(SpectrumKind::Transmission, grid.to_vec(), values).unwrap()
    }

    #[test]
    fn three_noisy_peaks_recovered_across_seeds() {
        let lines = [(0.8, 0.16, 1.0), (1.4, 0.16, 1.0), (2.3, 0.16, 1.0)];
        let grid: Vec<f64> = (1..1500).map(|i| i as f64 * 0.002).collect();
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = lorentzian_intensity_spectrum(&grid, &lines, 0.01, &mut rng);
            let fit = extract_peaks(&spec, 3, (0.3, 2.9)).unwrap();
            assert_eq!(fit.peaks.len(), 3);
            for (peak, (c, _, _)) in fit.peaks.iter().zip(lines) {
                assert!(
                    (peak.center - c).abs() < 0.01,
                    "seed {seed}: {} vs {c}",
                    peak.center
                );
            }
        }
    }

    #[test]
    fn overlapping_peaks_flag_ill_conditioned() {
        // separation 0.04 THz < FWHM/2 = 0.1 THz; seed noise so the blended
        // top carries two local maxima and the fit takes both components
        let lines = [(1.40, 0.2, 1.0), (1.44, 0.2, 1.0)];
        let grid: Vec<f64> = (1..3000).map(|i| i as f64 * 0.001).collect();
        let mut flagged = 0;
        let mut attempts = 0;
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = lorentzian_intensity_spectrum(&grid, &lines, 0.002, &mut rng);
            let fit = extract_peaks(&spec, 2, (0.8, 2.0)).unwrap();
            if fit.peaks.len() == 2 {
                attempts += 1;
                if fit.ill_conditioned {
                    flagged += 1;
                }
            }
        }
        assert!(
            attempts == 0 || flagged == attempts,
            "{flagged}/{attempts} degenerate two-peak fits flagged"
        );

        // well-separated control: never flagged
        let lines = [(1.0, 0.2, 1.0), (2.0, 0.2, 1.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = lorentzian_intensity_spectrum(&grid, &lines, 0.0, &mut rng);
        let fit = extract_peaks(&spec, 2, (0.5, 2.5)).unwrap();
        assert_eq!(fit.peaks.len(), 2);
        assert!(!fit.ill_conditioned, "condition = {}", fit.condition);
    }

    #[test]
    fn peak_extraction_is_scale_invariant() {
        let grid: Vec<f64> = (1..1000).map(|i| i as f64 * 0.003).collect();
        let values: Vec<Complex<f64>> = grid
            .iter()
            .map(|&f| {
                let hw = 0.09;
                Complex::new(0.0, hw) / (Complex::new(f - 1.1, 0.0) + Complex::new(0.0, hw))
            })
            .collect();
        let spec = ComplexSpectrum::new(SpectrumKind::Transmission, grid, values).unwrap();
        let base = extract_peaks(&spec, 1, (0.4, 2.2)).unwrap();
        let scaled = extract_peaks(&spec.scaled(37.5), 1, (0.4, 2.2)).unwrap();
        assert_relative_eq!(base.peaks[0].center, scaled.peaks[0].center, epsilon = 1e-9);
        assert_relative_eq!(base.peaks[0].fwhm, scaled.peaks[0].fwhm, epsilon = 1e-9);
    }

    #[test]
    fn tinkham_worked_scalar_and_round_trip() {
        let spec: ComplexSpectrum<f64> = ComplexSpectrum::new(
            SpectrumKind::Transmission,
            vec![1.0],
            vec![Complex::new(0.5, 0.0)],
        )
        .unwrap();
        let sigma = tinkham_conductivity(&spec, 2.1, 200e-9).unwrap();
        assert_relative_eq!(sigma.values[0].re, 4.1144e4, max_relative = 1e-4);
        assert!(sigma.values[0].im.abs() < 1e-9);

        // unit transmission means no film response
        let unit: ComplexSpectrum<f64> = ComplexSpectrum::new(
            SpectrumKind::Transmission,
            vec![1.0],
            vec![Complex::new(1.0, 0.0)],
        )
        .unwrap();
        let s = tinkham_conductivity(&unit, 2.1, 200e-9).unwrap();
        assert!(s.values[0].norm() < 1e-9);

        // sigma -> t -> sigma is an algebraic involution
        let grid: Vec<f64> = (1..50).map(|i| i as f64 * 0.05).collect();
        let values: Vec<Complex<f64>> = grid
            .iter()
            .map(|&f| Complex::new(3e4 * (1.0 + 0.2 * f), -1e4 * f))
            .collect();
        let sigma = ComplexSpectrum::new(SpectrumKind::Conductivity, grid, values).unwrap();
        let t = tinkham_transmission(&sigma, 2.1, 200e-9).unwrap();
        let back = tinkham_conductivity(&t, 2.1, 200e-9).unwrap();
        for (a, b) in back.values.iter().zip(&sigma.values) {
            assert!((a - b).norm() <= 1e-12 * b.norm());
        }
    }

    #[test]
    fn dielectric_function_limits() {
        let grid: Vec<f64> = (1..40).map(|i| i as f64 * 0.1).collect();
        let zeros = vec![Complex::new(0.0, 0.0); grid.len()];
        let sigma = ComplexSpectrum::new(SpectrumKind::Conductivity, grid.clone(), zeros).unwrap();
        let eps = dielectric_function(&sigma, 5.0).unwrap();
        for v in &eps.values {
            assert_relative_eq!(v.re, 5.0, epsilon = 1e-12);
            assert!(v.im.abs() < 1e-12);
        }

        // purely imaginary sigma = -i w eps0 chi shifts the real part by chi
        let chi = 2.5;
        let values: Vec<Complex<f64>> = grid
            .iter()
            .map(|&f| {
                let w = std::f64::consts::TAU * f * 1e12;
                Complex::new(0.0, -w * VACUUM_PERMITTIVITY_F_PER_M * chi)
            })
            .collect();
        let sigma = ComplexSpectrum::new(SpectrumKind::Conductivity, grid, values).unwrap();
        let eps = dielectric_function(&sigma, 5.0).unwrap();
        for v in &eps.values {
            assert_relative_eq!(v.re, 5.0 + chi, max_relative = 1e-12);
        }
    }

    #[test]
    fn dielectric_matches_lorentz_oscillator_closed_form() {
        let eps_inf = 5.0;
        let modes = [(0.96, 0.5376, 0.05), (1.9, 1.596, 0.08)]; // (f0, nu, gamma) THz
        let grid: Vec<f64> = (1..60).map(|i| i as f64 * 0.05).collect();
        let ang = |f: f64| std::f64::consts::TAU * f * 1e12;
        let closed = |f: f64| -> Complex<f64> {
            let w = ang(f);
            let mut eps = Complex::new(1.0, 0.0);
            for (f0, nu, g) in modes {
                eps += Complex::new(ang(nu).powi(2), 0.0)
                    / Complex::new(ang(f0).powi(2) - w * w, -ang(g) * w);
            }
            eps * eps_inf
        };
        let values: Vec<Complex<f64>> = grid
            .iter()
            .map(|&f| {
                let w = ang(f);
                // sigma chosen so eps_inf + i sigma/(w eps0) equals the closed form
                (closed(f) - eps_inf) * Complex::new(0.0, -w * VACUUM_PERMITTIVITY_F_PER_M)
            })
            .collect();
        let sigma = ComplexSpectrum::new(SpectrumKind::Conductivity, grid.clone(), values).unwrap();
        let eps = dielectric_function(&sigma, eps_inf).unwrap();
        for (f, v) in eps.freqs_thz.iter().zip(&eps.values) {
            assert!(
                (v - closed(*f)).norm() <= 1e-10 * closed(*f).norm(),
                "at {f} THz"
            );
        }
    }

    #[test]
    fn polariton_spectrum_has_one_peak_per_branch() {
        let phonons = vec![
            PhononMode::new("TO1", 0.96, 0.5376).unwrap(),
            PhononMode::new("TO2", 1.9, 1.596).unwrap(),
        ];
        let sys =
            HybridSystem::new(CavityMode::new(1.14).unwrap(), phonons, 300.0).unwrap();
        let grid: Vec<f64> = (1..1600).map(|i| i as f64 * 0.002).collect();
        let spec = synthesize_polariton_spectrum(&sys, &[0.05], &grid).unwrap();
        let fit = extract_peaks(&spec, 3, (0.2, 3.1)).unwrap();
        assert_eq!(fit.peaks.len(), 3);
        // three peaks straddle the two bare phonon frequencies
        assert!(fit.peaks[0].center < 0.96);
        assert!(fit.peaks[1].center > 0.96 && fit.peaks[1].center < 1.9);
        assert!(fit.peaks[2].center > 1.9);

        // single decoupled cavity: one peak at omega_c
        let free = HybridSystem::new(
            CavityMode::new(1.14).unwrap(),
            vec![PhononMode::new("TO1", 0.96, 0.0).unwrap()],
            300.0,
        )
        .unwrap();
        let spec = synthesize_polariton_spectrum(&free, &[0.05], &grid).unwrap();
        let fit = extract_peaks(&spec, 1, (1.0, 1.3)).unwrap();
        assert!((fit.peaks[0].center - 1.14).abs() < 1e-6);
    }
}
