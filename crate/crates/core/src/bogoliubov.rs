//! Bogoliubov diagonalization of the quadratic forms into polariton
//! branches with symplectically normalized Hopfield coefficients, plus the
//! secular-equation cross-check, branch weights, low-frequency asymptotics,
//! and cavity-frequency sweeps.

use crate::model::{HybridSystem, ModelError, QuadraticForm, Representation};
use crate::numeric::{brent, fmt_sig12, BracketError};
use crate::{real, Real};
use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BogoliubovError {
    #[error(
        "system is dynamically unstable: quadrature form has eigenvalue {min_eigenvalue} <= 0 \
         (normal-mode frequency would be complex)"
    )]
    DynamicallyUnstable { min_eigenvalue: f64 },
    #[error("near-zero polariton frequency {omega} THz: spectrum is degenerate at this point")]
    NearZeroFrequency { omega: f64 },
    #[error("quadrature form has imaginary residue {0}; form is not a bosonic quadratic form")]
    BadQuadratureForm(f64),
    #[error("eigenvector pairing failed: {0}")]
    Pairing(String),
    #[error("secular root search failed in [{lo}, {hi}] THz^2: {source}")]
    SecularBracket {
        lo: f64,
        hi: f64,
        #[source]
        source: BracketError,
    },
    #[error("omega_c grid must be positive and strictly ascending")]
    BadGrid,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One polariton branch: frequency and the Hopfield coefficients of its
/// annihilation operator `p = sum_l X_l b_l + sum_l Xt_l b_l^+ + Y a + Yt a^+`.
#[derive(Debug, Clone)]
pub struct PolaritonBranch<T: Real> {
    pub label: String,
    /// Branch frequency, THz.
    pub omega: T,
    /// Coefficients of the phonon annihilation operators `b_l`.
    pub x: Vec<Complex<T>>,
    /// Anomalous coefficients of `b_l^+`.
    pub x_tilde: Vec<Complex<T>>,
    /// Coefficient of the photon annihilation operator `a`.
    pub y: Complex<T>,
    /// Anomalous coefficient of `a^+`.
    pub y_tilde: Complex<T>,
}

impl<T: Real> PolaritonBranch<T> {
    /// `sum_l (|X_l|^2 - |Xt_l|^2) + |Y|^2 - |Yt|^2`; +1 for a normalized
    /// annihilation operator.
    pub fn symplectic_norm(&self) -> T {
        let mut s = self.y.norm_sqr() - self.y_tilde.norm_sqr();
        for (x, xt) in self.x.iter().zip(&self.x_tilde) {
            s += x.norm_sqr() - xt.norm_sqr();
        }
        s
    }

    /// Phonon weights `W_l = |X_l|^2 - |Xt_l|^2`.
    pub fn phonon_weights(&self) -> Vec<T> {
        self.x
            .iter()
            .zip(&self.x_tilde)
            .map(|(x, xt)| x.norm_sqr() - xt.norm_sqr())
            .collect()
    }

    /// Photon weight `W_c = |Y|^2 - |Yt|^2`.
    pub fn photon_weight(&self) -> T {
        self.y.norm_sqr() - self.y_tilde.norm_sqr()
    }

    /// Multiply every coefficient by a unit phase. Physical bilinears are
    /// unchanged; exposed for gauge-invariance tests.
    pub fn with_phase(&self, phase: Complex<T>) -> Self {
        let mut b = self.clone();
        for v in b.x.iter_mut().chain(b.x_tilde.iter_mut()) {
            *v *= phase;
        }
        b.y *= phase;
        b.y_tilde *= phase;
        b
    }
}

/// All `N+1` branches of one system, ascending in frequency.
#[derive(Debug, Clone)]
pub struct PolaritonBasis<T: Real> {
    pub branches: Vec<PolaritonBranch<T>>,
    pub representation: Representation,
}

impl<T: Real> PolaritonBasis<T> {
    pub fn n_phonons(&self) -> usize {
        self.branches.first().map_or(0, |b| b.x.len())
    }

    pub fn frequencies(&self) -> Vec<T> {
        self.branches.iter().map(|b| b.omega).collect()
    }

    /// Symplectic Gram product between two branches; `delta_ab` for a
    /// properly normalized basis.
    pub fn symplectic_gram(&self, a: usize, b: usize) -> Complex<T> {
        let ba = &self.branches[a];
        let bb = &self.branches[b];
        let mut s = ba.y.conj() * bb.y - ba.y_tilde.conj() * bb.y_tilde;
        for l in 0..ba.x.len() {
            s += ba.x[l].conj() * bb.x[l] - ba.x_tilde[l].conj() * bb.x_tilde[l];
        }
        s
    }
}

/// Per-branch phonon and photon weights; each branch sums to one.
#[derive(Debug, Clone)]
pub struct PolaritonWeights<T> {
    pub branches: Vec<BranchWeights<T>>,
}

#[derive(Debug, Clone)]
pub struct BranchWeights<T> {
    pub label: String,
    pub omega: T,
    pub phonon: Vec<T>,
    pub photon: T,
}

pub fn weights<T: Real>(basis: &PolaritonBasis<T>) -> PolaritonWeights<T> {
    PolaritonWeights {
        branches: basis
            .branches
            .iter()
            .map(|b| BranchWeights {
                label: b.label.clone(),
                omega: b.omega,
                phonon: b.phonon_weights(),
                photon: b.photon_weight(),
            })
            .collect(),
    }
}

/// Branch naming: LP/MP/UP for two phonon modes, P1..P{N+1} otherwise.
pub fn branch_labels(n_phonons: usize) -> Vec<String> {
    if n_phonons == 2 {
        vec!["LP".into(), "MP".into(), "UP".into()]
    } else {
        (1..=n_phonons + 1).map(|i| format!("P{i}")).collect()
    }
}

const NEAR_ZERO_THZ: f64 = 1e-9;

/// Diagonalize a quadratic form into its polariton basis.
///
/// The Hermitian form is first rewritten in Hermitian quadratures
/// `q_j = (b_j + b_j^+)/sqrt(2)`, `p_j = -i(b_j - b_j^+)/sqrt(2)`, where it
/// becomes a real symmetric matrix `V`. A Cholesky factor `V = L L^T` turns
/// the equations of motion into rotations generated by the antisymmetric
/// `K = L^T Omega L`: eigenvalues of `K K^T` are the squared branch
/// frequencies, and each invariant plane of `K` yields one normal-mode
/// annihilation operator with symplectic norm +1 by construction. Cholesky
/// failure means the form is not positive definite, i.e. the system is
/// dynamically unstable.
pub fn diagonalize<T: Real>(form: &QuadraticForm<T>) -> Result<PolaritonBasis<T>, BogoliubovError> {
    let m = form.n_modes();
    let v = quadrature_form(form)?;

    let chol = match Cholesky::new(v.clone()) {
        Some(c) => c,
        None => {
            let eig = v.symmetric_eigen();
            let min = eig
                .eigenvalues
                .iter()
                .cloned()
                .fold(real::<T>(f64::INFINITY), |a, b| a.min(b));
            return Err(BogoliubovError::DynamicallyUnstable {
                min_eigenvalue: to_f64(min),
            });
        }
    };
    let l = chol.l();

    // K = L^T Omega L with Omega = [[0, I], [-I, 0]]
    let omega_l = {
        let mut o = DMatrix::<T>::zeros(2 * m, 2 * m);
        for i in 0..m {
            for j in 0..2 * m {
                o[(i, j)] = l[(m + i, j)];
                o[(m + i, j)] = -l[(i, j)];
            }
        }
        o
    };
    let k = l.transpose() * omega_l;
    let c = &k * k.transpose();

    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..2 * m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());

    let scale = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(T::zero(), |a, b| a.max(b.abs()));
    let cluster_tol = T::default_epsilon().sqrt() * (T::one() + scale);

    let mut branches: Vec<PolaritonBranch<T>> = Vec::with_capacity(m);
    let mut idx = 0;
    while idx < order.len() {
        // gather the cluster of (numerically) equal eigenvalues
        let lambda = eig.eigenvalues[order[idx]];
        let mut cluster = vec![order[idx]];
        let mut j = idx + 1;
        while j < order.len() && (eig.eigenvalues[order[j]] - lambda).abs() <= cluster_tol {
            cluster.push(order[j]);
            j += 1;
        }
        if !cluster.len().is_multiple_of(2) {
            return Err(BogoliubovError::Pairing(format!(
                "eigenvalue {} of the stability matrix has odd multiplicity {}",
                to_f64(lambda),
                cluster.len()
            )));
        }
        let lambda_mean = cluster
            .iter()
            .map(|&i| eig.eigenvalues[i])
            .fold(T::zero(), |a, b| a + b)
            / real::<T>(cluster.len() as f64);
        if lambda_mean <= T::zero() {
            return Err(BogoliubovError::DynamicallyUnstable {
                min_eigenvalue: to_f64(lambda_mean),
            });
        }
        let omega = lambda_mean.sqrt();
        if omega < real(NEAR_ZERO_THZ) {
            return Err(BogoliubovError::NearZeroFrequency {
                omega: to_f64(omega),
            });
        }

        let cols: Vec<DVector<T>> = cluster
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect();
        let mut planes: Vec<DVector<T>> = Vec::new(); // accepted f vectors
        for _pair in 0..cluster.len() / 2 {
            let f1 = next_orthogonal(&cols, &planes).ok_or_else(|| {
                BogoliubovError::Pairing("exhausted cluster basis before pairing finished".into())
            })?;
            let mut f2 = &k * &f1 / omega;
            for q in &planes {
                let c = q.dot(&f2);
                f2.axpy(-c, q, T::one());
            }
            let n2 = f2.norm();
            if (n2 - T::one()).abs() > real(1e-6) {
                return Err(BogoliubovError::Pairing(format!(
                    "rotation pair norm {} deviates from 1 at omega {}",
                    to_f64(n2),
                    to_f64(omega)
                )));
            }
            f2 /= n2;
            branches.push(branch_from_plane(&l, &f1, &f2, omega, m));
            planes.push(f1);
            planes.push(f2);
        }
        idx = j;
    }

    branches.sort_by(|a, b| a.omega.partial_cmp(&b.omega).unwrap());
    // the norm guard scales with the spectral conditioning: a genuine
    // construction bug produces O(1) defects, while a far-detuned cavity
    // legitimately costs eps * (w_max/w_min)^2
    let cond = {
        let lo = branches.first().map_or(T::one(), |b| b.omega);
        let hi = branches.last().map_or(T::one(), |b| b.omega);
        (hi / lo).powi(2)
    };
    let norm_tol = real::<T>(1e-10)
        .max(T::default_epsilon() * cond * real(1e2))
        .max(T::default_epsilon() * real(1e4));
    for (branch, label) in branches.iter_mut().zip(branch_labels(m - 1)) {
        branch.label = label;
        let norm = branch.symplectic_norm();
        let defect = (norm - T::one()).abs();
        if defect > norm_tol {
            return Err(BogoliubovError::Pairing(format!(
                "branch at {} THz has symplectic norm defect {}",
                to_f64(branch.omega),
                to_f64(defect)
            )));
        }
        // remove the residual so the basis is normalized exactly
        let rescale = Complex::new(T::one() / norm.sqrt(), T::zero());
        for v in branch.x.iter_mut().chain(branch.x_tilde.iter_mut()) {
            *v *= rescale;
        }
        branch.y *= rescale;
        branch.y_tilde *= rescale;
    }
    Ok(PolaritonBasis {
        branches,
        representation: form.representation(),
    })
}

/// First cluster column with a significant component outside `accepted`,
/// orthonormalized against it.
fn next_orthogonal<T: Real>(
    cols: &[DVector<T>],
    accepted: &[DVector<T>],
) -> Option<DVector<T>> {
    for col in cols {
        let mut v = col.clone();
        for q in accepted {
            let c = q.dot(&v);
            v.axpy(-c, q, T::one());
        }
        let n = v.norm();
        if n > real(1e-3) {
            return Some(v / n);
        }
    }
    None
}

/// Hopfield coefficients of the annihilation operator living on one
/// invariant rotation plane `(f1, f2)`: `p = g^T r` with
/// `g = L (f1 - i f2) / sqrt(2 omega)`, mapped back to the ladder basis.
fn branch_from_plane<T: Real>(
    l: &DMatrix<T>,
    f1: &DVector<T>,
    f2: &DVector<T>,
    omega: T,
    m: usize,
) -> PolaritonBranch<T> {
    let norm = (real::<T>(2.0) * omega).sqrt();
    let gq_gp: Vec<Complex<T>> = {
        let lf1 = l * f1;
        let lf2 = l * f2;
        (0..2 * m)
            .map(|i| Complex::new(lf1[i], -lf2[i]) / norm)
            .collect()
    };
    // w_b = (g_q - i g_p)/sqrt(2), w_b+ = (g_q + i g_p)/sqrt(2)
    let s2 = real::<T>(2.0).sqrt();
    let mut x = Vec::with_capacity(m - 1);
    let mut x_tilde = Vec::with_capacity(m - 1);
    let i_unit = Complex::new(T::zero(), T::one());
    let mut annih = Vec::with_capacity(m);
    let mut creat = Vec::with_capacity(m);
    for j in 0..m {
        let gq = gq_gp[j];
        let gp = gq_gp[m + j];
        annih.push((gq - i_unit * gp) / s2);
        creat.push((gq + i_unit * gp) / s2);
    }
    for j in 0..m - 1 {
        x.push(annih[j]);
        x_tilde.push(creat[j]);
    }
    let mut branch = PolaritonBranch {
        label: String::new(),
        omega,
        x,
        x_tilde,
        y: annih[m - 1],
        y_tilde: creat[m - 1],
    };
    fix_phase(&mut branch);
    branch
}

/// Global phase convention: the largest-magnitude coefficient of each
/// branch is made real and positive.
fn fix_phase<T: Real>(branch: &mut PolaritonBranch<T>) {
    let mut best = branch.y;
    let mut best_norm = branch.y.norm_sqr();
    for v in branch
        .x
        .iter()
        .chain(branch.x_tilde.iter())
        .chain([&branch.y_tilde])
    {
        let n = v.norm_sqr();
        if n > best_norm {
            best_norm = n;
            best = *v;
        }
    }
    if best_norm == T::zero() {
        return;
    }
    let phase = best / best.norm_sqr().sqrt();
    let rot = phase.conj();
    for v in branch.x.iter_mut().chain(branch.x_tilde.iter_mut()) {
        *v *= rot;
    }
    branch.y *= rot;
    branch.y_tilde *= rot;
}

/// Real symmetric quadrature representation of a Hermitian ladder-basis
/// form (the operator-ordering constant is dropped).
fn quadrature_form<T: Real>(form: &QuadraticForm<T>) -> Result<DMatrix<T>, BogoliubovError> {
    let m = form.n_modes();
    let dim = 2 * m;
    let s2inv = T::one() / real::<T>(2.0).sqrt();
    // v = U r with b_j = (q_j + i p_j)/sqrt(2)
    let mut u = DMatrix::<Complex<T>>::zeros(dim, dim);
    for j in 0..m {
        u[(j, j)] = Complex::new(s2inv, T::zero());
        u[(j, m + j)] = Complex::new(T::zero(), s2inv);
        u[(m + j, j)] = Complex::new(s2inv, T::zero());
        u[(m + j, m + j)] = Complex::new(T::zero(), -s2inv);
    }
    let vc = u.adjoint() * form.matrix() * &u;
    let sym = (&vc + vc.transpose()) / Complex::new(real::<T>(2.0), T::zero());
    let mut v = DMatrix::<T>::zeros(dim, dim);
    let mut residue = T::zero();
    for i in 0..dim {
        for j in 0..dim {
            residue = residue.max(sym[(i, j)].im.abs());
            v[(i, j)] = sym[(i, j)].re;
        }
    }
    let scale = T::one() + v.norm();
    if residue > real::<T>(1e-10) * scale {
        return Err(BogoliubovError::BadQuadratureForm(to_f64(residue)));
    }
    Ok(v)
}

/// Polariton frequencies from the secular equation
/// `omega^2 (1 + sum_l nu_l^2/(omega_l^2 - omega^2)) = omega_c^2`,
/// solved by bracketed root finding independent of the eigensolver.
///
/// Poles are cleared first, giving the polynomial
/// `P(x) = (x - wc^2) prod_m (wm^2 - x) + x sum_l nu_l^2 prod_{m!=l} (wm^2 - x)`
/// in `x = omega^2`, whose roots interlace the phonon poles; modes with
/// `nu = 0` and exact frequency duplicates split off as dark modes at the
/// bare frequency.
pub fn secular_frequencies<T: Real>(system: &HybridSystem<T>) -> Result<Vec<T>, BogoliubovError> {
    let mut dark: Vec<T> = Vec::new();
    let mut coupled: Vec<(T, T)> = Vec::new(); // (omega^2, nu^2), merged duplicates
    for p in system.phonons() {
        if p.nu == T::zero() {
            dark.push(p.omega);
            continue;
        }
        let w2 = p.omega * p.omega;
        match coupled.iter_mut().find(|(w, _)| *w == w2) {
            Some((_, nu2)) => {
                *nu2 += p.nu * p.nu;
                dark.push(p.omega);
            }
            None => coupled.push((w2, p.nu * p.nu)),
        }
    }
    coupled.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let wc2 = system.omega_c() * system.omega_c();
    let poly = |x: T| -> T {
        let mut p = (x - wc2)
            * coupled
                .iter()
                .fold(T::one(), |acc, (w2, _)| acc * (*w2 - x));
        for (l, (_, nu2)) in coupled.iter().enumerate() {
            let mut term = x * *nu2;
            for (m, (w2, _)) in coupled.iter().enumerate() {
                if m != l {
                    term *= *w2 - x;
                }
            }
            p += term;
        }
        p
    };

    let mut roots = dark;
    if coupled.is_empty() {
        roots.push(system.omega_c());
    } else {
        // Gershgorin-style upper bound on the largest squared frequency
        let mut hi = wc2
            + coupled
                .iter()
                .fold(T::zero(), |a, (w2, nu2)| a + *nu2 + (*w2 * *nu2).sqrt());
        for (w2, nu2) in &coupled {
            hi = hi.max(*w2 + (*w2 * *nu2).sqrt());
        }
        hi = hi * real(1.000001) + T::one();
        let sign_expected = if coupled.len().is_multiple_of(2) {
            T::one()
        } else {
            -T::one()
        };
        let mut guard = 0;
        while poly(hi) * sign_expected <= T::zero() && guard < 60 {
            hi *= real::<T>(2.0);
            guard += 1;
        }

        let mut endpoints = vec![T::zero()];
        endpoints.extend(coupled.iter().map(|(w2, _)| *w2));
        endpoints.push(hi);
        for win in endpoints.windows(2) {
            let (lo, hi) = (win[0], win[1]);
            let x = brent(&poly, lo, hi, real(1e-15), 300).map_err(|e| {
                BogoliubovError::SecularBracket {
                    lo: to_f64(lo),
                    hi: to_f64(hi),
                    source: e,
                }
            })?;
            roots.push(x.sqrt());
        }
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(roots)
}

/// Closed-form low-cavity-frequency Hopfield coefficients.
///
/// Lower branch: `X_l = Xt_l = -i nu_l / (2 sqrt(wc w_l))`, `Y = 1`,
/// `Yt = 0`; the branch dominated by phonon `l`: `X_l = 1`,
/// `Y = Yt = -i nu_l / (2 sqrt(wc w_l))`. Frequencies carry the zeroth-order
/// values (`omega_c`, then each bare phonon frequency).
#[derive(Debug, Clone)]
pub struct AsymptoticCoefficients<T: Real> {
    pub branches: Vec<PolaritonBranch<T>>,
    /// Set when `omega_c <= 0.2 min_l omega_l`, the regime where the
    /// expansion is meaningful.
    pub valid_regime: bool,
}

pub fn asymptotic_coefficients<T: Real>(system: &HybridSystem<T>) -> AsymptoticCoefficients<T> {
    let n = system.n_phonons();
    let omega_c = system.omega_c();
    let labels = branch_labels(n);
    let two = real::<T>(2.0);
    let amp = |p: &crate::model::PhononMode<T>| {
        Complex::new(T::zero(), -p.nu / (two * (omega_c * p.omega).sqrt()))
    };

    let mut branches = Vec::with_capacity(n + 1);
    let lp = PolaritonBranch {
        label: labels[0].clone(),
        omega: omega_c,
        x: system.phonons().iter().map(&amp).collect(),
        x_tilde: system.phonons().iter().map(&amp).collect(),
        y: Complex::new(T::one(), T::zero()),
        y_tilde: Complex::new(T::zero(), T::zero()),
    };
    branches.push(lp);
    for (l, p) in system.phonons().iter().enumerate() {
        let mut x = vec![Complex::new(T::zero(), T::zero()); n];
        x[l] = Complex::new(T::one(), T::zero());
        branches.push(PolaritonBranch {
            label: labels[l + 1].clone(),
            omega: p.omega,
            x,
            x_tilde: vec![Complex::new(T::zero(), T::zero()); n],
            y: amp(p),
            y_tilde: amp(p),
        });
    }

    let min_omega = system
        .phonons()
        .iter()
        .map(|p| p.omega)
        .fold(real::<T>(f64::INFINITY), |a, b| a.min(b));
    AsymptoticCoefficients {
        branches,
        valid_regime: omega_c <= real::<T>(0.2) * min_omega,
    }
}

/// One point of a cavity-frequency sweep.
#[derive(Debug, Clone)]
pub struct DispersionPoint<T: Real> {
    pub omega_c: T,
    pub basis: PolaritonBasis<T>,
    pub weights: PolaritonWeights<T>,
}

/// Diagonalize the system across an ascending cavity-frequency grid.
/// Branch labels stay continuous along the sweep because branches are
/// ordered by frequency and never cross.
pub fn dispersion_sweep<T: Real>(
    system: &HybridSystem<T>,
    omega_c_grid: &[T],
) -> Result<Vec<DispersionPoint<T>>, BogoliubovError> {
    validate_grid(omega_c_grid)?;
    omega_c_grid
        .iter()
        .map(|&wc| {
            let sys = system.with_cavity_frequency(wc)?;
            let basis = diagonalize(&crate::model::build_minimal_coupling(&sys))?;
            let w = weights(&basis);
            Ok(DispersionPoint {
                omega_c: wc,
                basis,
                weights: w,
            })
        })
        .collect()
}

pub(crate) fn validate_grid<T: Real>(grid: &[T]) -> Result<(), BogoliubovError> {
    if grid.is_empty() || grid[0] <= T::zero() {
        return Err(BogoliubovError::BadGrid);
    }
    for w in grid.windows(2) {
        if w[1] <= w[0] {
            return Err(BogoliubovError::BadGrid);
        }
    }
    Ok(())
}

/// CSV rendering of a dispersion sweep:
/// `omega_c_thz, branch, omega_thz, re/im of each coefficient, W_1..W_N, W_c`.
pub fn dispersion_csv(points: &[DispersionPoint<f64>]) -> String {
    let n = points
        .first()
        .map_or(0, |p| p.basis.n_phonons());
    let mut header = String::from("omega_c_thz,branch,omega_thz");
    for l in 1..=n {
        header.push_str(&format!(",re_X_{l},im_X_{l}"));
    }
    for l in 1..=n {
        header.push_str(&format!(",re_Xt_{l},im_Xt_{l}"));
    }
    header.push_str(",re_Y,im_Y,re_Yt,im_Yt");
    for l in 1..=n {
        header.push_str(&format!(",W_{l}"));
    }
    header.push_str(",W_c\n");

    let mut out = header;
    for point in points {
        for branch in &point.basis.branches {
            out.push_str(&fmt_sig12(point.omega_c));
            out.push(',');
            out.push_str(&branch.label);
            out.push(',');
            out.push_str(&fmt_sig12(branch.omega));
            for v in &branch.x {
                out.push_str(&format!(",{},{}", fmt_sig12(v.re), fmt_sig12(v.im)));
            }
            for v in &branch.x_tilde {
                out.push_str(&format!(",{},{}", fmt_sig12(v.re), fmt_sig12(v.im)));
            }
            out.push_str(&format!(
                ",{},{},{},{}",
                fmt_sig12(branch.y.re),
                fmt_sig12(branch.y.im),
                fmt_sig12(branch.y_tilde.re),
                fmt_sig12(branch.y_tilde.im)
            ));
            for w in branch.phonon_weights() {
                out.push_str(&format!(",{}", fmt_sig12(w)));
            }
            out.push_str(&format!(",{}\n", fmt_sig12(branch.photon_weight())));
        }
    }
    out
}

/// CSV rendering of the per-branch weights only.
pub fn weights_csv(points: &[DispersionPoint<f64>]) -> String {
    let n = points.first().map_or(0, |p| p.basis.n_phonons());
    let mut out = String::from("omega_c_thz,branch,omega_thz");
    for l in 1..=n {
        out.push_str(&format!(",W_{l}"));
    }
    out.push_str(",W_c\n");
    for point in points {
        for bw in &point.weights.branches {
            out.push_str(&fmt_sig12(point.omega_c));
            out.push(',');
            out.push_str(&bw.label);
            out.push(',');
            out.push_str(&fmt_sig12(bw.omega));
            for w in &bw.phonon {
                out.push_str(&format!(",{}", fmt_sig12(*w)));
            }
            out.push_str(&format!(",{}\n", fmt_sig12(bw.photon)));
        }
    }
    out
}

fn to_f64<T: Real>(x: T) -> f64 {
    num_traits::ToPrimitive::to_f64(&x).unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        build_minimal_coupling, build_pzw, CavityMode, HybridSystem, PhononMode,
    };
    use approx::assert_relative_eq;

    fn system(omega_c: f64, modes: &[(f64, f64)]) -> HybridSystem<f64> {
        let phonons = modes
            .iter()
            .enumerate()
            .map(|(i, &(w, nu))| PhononMode::new(format!("M{i}"), w, nu).unwrap())
            .collect();
        HybridSystem::new(CavityMode::new(omega_c).unwrap(), phonons, 300.0).unwrap()
    }

    fn mapbi3(omega_c: f64) -> HybridSystem<f64> {
        system(omega_c, &[(0.96, 0.5376), (1.9, 1.596)])
    }

    /// Positive roots of `w^4 - (wc^2 + w1^2 + nu^2) w^2 + wc^2 w1^2 = 0`,
    /// the closed-form single-mode dispersion.
    fn single_mode_quartic(omega1: f64, nu: f64, omega_c: f64) -> (f64, f64) {
        let b = omega_c * omega_c + omega1 * omega1 + nu * nu;
        let c = omega_c * omega_c * omega1 * omega1;
        let disc = (b * b - 4.0 * c).sqrt();
        (((b - disc) / 2.0).sqrt(), ((b + disc) / 2.0).sqrt())
    }

    #[test]
    fn decoupled_system_returns_bare_modes() {
        let sys = system(1.23, &[(0.96, 0.0), (1.9, 0.0)]);
        let basis = diagonalize(&build_minimal_coupling(&sys)).unwrap();
        let freqs = basis.frequencies();
        assert_relative_eq!(freqs[0], 0.96, max_relative = 1e-12);
        assert_relative_eq!(freqs[1], 1.23, max_relative = 1e-12);
        assert_relative_eq!(freqs[2], 1.9, max_relative = 1e-12);
        // unit coefficient vectors, no anomalous admixture
        for b in &basis.branches {
            assert_relative_eq!(b.symplectic_norm(), 1.0, epsilon = 1e-12);
            for xt in &b.x_tilde {
                assert!(xt.norm() < 1e-12);
            }
            assert!(b.y_tilde.norm() < 1e-12);
        }
        assert!((basis.branches[1].y.re - 1.0).abs() < 1e-12);
        assert!((basis.branches[0].x[0].re - 1.0).abs() < 1e-12);
        assert!((basis.branches[2].x[1].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_mode_matches_closed_form_quartic() {
        let sys = system(1.0, &[(1.0, 0.2)]);
        let basis = diagonalize(&build_minimal_coupling(&sys)).unwrap();
        let (lp, up) = single_mode_quartic(1.0, 0.2, 1.0);
        assert_relative_eq!(lp, 0.90499, epsilon = 1e-5);
        assert_relative_eq!(up, 1.10499, epsilon = 1e-5);
        assert_relative_eq!(basis.branches[0].omega, lp, max_relative = 1e-12);
        assert_relative_eq!(basis.branches[1].omega, up, max_relative = 1e-12);
    }

    #[test]
    fn symplectic_orthonormality() {
        let basis = diagonalize(&build_minimal_coupling(&mapbi3(0.1))).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let g = basis.symplectic_gram(a, b);
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!(
                    (g.re - expect).abs() < 1e-9 && g.im.abs() < 1e-9,
                    "gram({a},{b}) = {g}"
                );
            }
        }
    }

    #[test]
    fn phase_convention_largest_coefficient_real_positive() {
        let basis = diagonalize(&build_minimal_coupling(&mapbi3(0.5))).unwrap();
        for b in &basis.branches {
            let mut best = b.y;
            for v in b.x.iter().chain(b.x_tilde.iter()).chain([&b.y_tilde]) {
                if v.norm() > best.norm() {
                    best = *v;
                }
            }
            assert!(best.im.abs() < 1e-10 * best.norm());
            assert!(best.re > 0.0);
        }
    }

    #[test]
    fn secular_matches_diagonalization() {
        for wc in [0.05, 0.1, 0.5, 0.96, 1.4, 1.9, 3.0, 20.0] {
            let sys = mapbi3(wc);
            let eig = diagonalize(&build_minimal_coupling(&sys)).unwrap();
            let sec = secular_frequencies(&sys).unwrap();
            assert_eq!(sec.len(), 3);
            for (a, b) in eig.frequencies().iter().zip(&sec) {
                assert_relative_eq!(a, b, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn secular_handles_dark_and_duplicate_modes() {
        let sys = system(1.5, &[(0.96, 0.0), (1.9, 0.5)]);
        let roots = secular_frequencies(&sys).unwrap();
        assert!(roots.iter().any(|r| (r - 0.96).abs() < 1e-12));
        let eig = diagonalize(&build_minimal_coupling(&sys)).unwrap();
        for (a, b) in eig.frequencies().iter().zip(&roots) {
            assert_relative_eq!(a, b, max_relative = 1e-9);
        }

        let dup = system(1.0, &[(0.9, 0.3), (0.9, 0.4)]);
        let roots = secular_frequencies(&dup).unwrap();
        assert!(roots.iter().any(|r| (r - 0.9).abs() < 1e-12));
        let eig = diagonalize(&build_minimal_coupling(&dup)).unwrap();
        for (a, b) in eig.frequencies().iter().zip(&roots) {
            assert_relative_eq!(a, b, max_relative = 1e-9);
        }
    }

    #[test]
    fn pzw_same_spectrum_as_minimal_coupling() {
        let sys = mapbi3(0.7);
        let mc = diagonalize(&build_minimal_coupling(&sys)).unwrap();
        let pzw = diagonalize(&build_pzw(&sys, true)).unwrap();
        for (a, b) in mc.frequencies().iter().zip(pzw.frequencies().iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-10);
        }
    }

    #[test]
    fn single_mode_pzw_cross_terms_irrelevant() {
        let sys = system(1.0, &[(1.0, 0.2)]);
        let with = diagonalize(&build_pzw(&sys, true)).unwrap();
        let without = diagonalize(&build_pzw(&sys, false)).unwrap();
        let mc = diagonalize(&build_minimal_coupling(&sys)).unwrap();
        for ((a, b), c) in with
            .frequencies()
            .iter()
            .zip(without.frequencies().iter())
            .zip(mc.frequencies().iter())
        {
            assert_relative_eq!(a, b, max_relative = 1e-12);
            assert_relative_eq!(a, c, max_relative = 1e-12);
        }
    }

    #[test]
    fn interlacing_of_branches() {
        for wc in [0.05, 0.3, 0.96, 1.4, 2.5] {
            let basis = diagonalize(&build_minimal_coupling(&mapbi3(wc))).unwrap();
            let f = basis.frequencies();
            assert!(f[0] < 0.96 && 0.96 < f[1], "LP < w1 < MP at wc={wc}");
            assert!(f[1] < 1.9 && 1.9 < f[2], "MP < w2 < UP at wc={wc}");
        }
    }

    #[test]
    fn polariton_gap_limits_in_weak_cross_coupling_regime() {
        // the closed-form gap edges hold when nu1 nu2/(w2^2-w1^2) << 1
        let sys = mapbi3(0.96 * 1e-3).with_scaled_couplings(0.2);
        let basis = diagonalize(&build_minimal_coupling(&sys)).unwrap();
        let sq = crate::model::squeezed_params(&sys);
        assert_relative_eq!(
            basis.branches[1].omega,
            sq.modes[0].omega_tilde,
            max_relative = 1e-3
        );
        assert_relative_eq!(
            basis.branches[2].omega,
            sq.modes[1].omega_tilde,
            max_relative = 1e-3
        );
    }

    #[test]
    fn weights_reproduce_reported_values_at_low_cavity_frequency() {
        // oscillator strengths nu1 = 0.55 w1, nu2 = 0.6 w2 at omega_c = 0.1 THz
        let sys = system(0.1, &[(0.96, 0.55 * 0.96), (1.9, 0.6 * 1.9)]);
        let basis = diagonalize(&build_minimal_coupling(&sys)).unwrap();
        let w = weights(&basis);
        let lp = &w.branches[0];
        let mp = &w.branches[1];
        let up = &w.branches[2];
        assert_relative_eq!(lp.photon, 0.6, epsilon = 0.05);
        assert_relative_eq!(lp.phonon[0], 0.2, epsilon = 0.05);
        assert_relative_eq!(lp.phonon[1], 0.2, epsilon = 0.05);
        assert_relative_eq!(mp.phonon[0], 0.8, epsilon = 0.05);
        assert_relative_eq!(up.phonon[1], 0.7, epsilon = 0.05);
        assert_relative_eq!(up.photon, 0.3, epsilon = 0.05);
        for bw in &w.branches {
            let total: f64 = bw.phonon.iter().sum::<f64>() + bw.photon;
            assert_relative_eq!(total, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn decoupled_weights_are_one_hot() {
        let sys = system(1.23, &[(0.96, 0.0), (1.9, 0.0)]);
        let w = weights(&diagonalize(&build_minimal_coupling(&sys)).unwrap());
        assert_relative_eq!(w.branches[0].phonon[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(w.branches[1].photon, 1.0, epsilon = 1e-12);
        assert_relative_eq!(w.branches[2].phonon[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn asymptotic_coefficients_scaling_and_agreement() {
        // |X_1,LP| scales as 1/sqrt(omega_c)
        let a1 = asymptotic_coefficients(&mapbi3(0.04));
        let a2 = asymptotic_coefficients(&mapbi3(0.01));
        let r = a1.branches[0].x[0].norm() / a2.branches[0].x[0].norm();
        assert_relative_eq!(r, 0.5, max_relative = 1e-12);
        assert!(a2.valid_regime);
        assert!(!asymptotic_coefficients(&mapbi3(0.5)).valid_regime);

        // small-coupling regime: asymptotics match the exact LP coefficients
        let sys = system(0.05 * 0.96, &[(0.96, 0.05 * 0.96), (1.9, 0.05 * 1.9)]);
        let exact = diagonalize(&build_minimal_coupling(&sys)).unwrap();
        let approx = asymptotic_coefficients(&sys);
        for l in 0..2 {
            let e = exact.branches[0].x[l].norm();
            let a = approx.branches[0].x[l].norm();
            assert_relative_eq!(e, a, max_relative = 0.05);
        }

        // nu = 0 reduces to the bare operators
        let free = asymptotic_coefficients(&system(0.1, &[(0.96, 0.0), (1.9, 0.0)]));
        assert_eq!(free.branches[0].y.re, 1.0);
        assert_eq!(free.branches[0].x[0].norm(), 0.0);
        assert_eq!(free.branches[1].y.norm(), 0.0);
    }

    #[test]
    fn sweep_labels_and_band_edges() {
        let grid: Vec<f64> = (1..=40).map(|i| 0.08 * i as f64).collect();
        let sys = mapbi3(1.0);
        let points = dispersion_sweep(&sys, &grid).unwrap();
        assert_eq!(points.len(), grid.len());
        // polariton gaps: the zeros of 1 + sum nu^2/(w^2 - x) bound MP and
        // UP from below at every cavity tuning (the branches reach the gap
        // edge only as omega_c -> 0)
        let (nu1, nu2) = (sys.phonons()[0].nu, sys.phonons()[1].nu);
        let (wt1_sq, wt2_sq) = (0.96f64.powi(2) + nu1 * nu1, 1.9f64.powi(2) + nu2 * nu2);
        let s = wt1_sq + wt2_sq;
        let p = wt1_sq * wt2_sq - (nu1 * nu2).powi(2);
        let disc = (s * s - 4.0 * p).sqrt();
        let gap_edge_1 = ((s - disc) / 2.0).sqrt();
        let gap_edge_2 = ((s + disc) / 2.0).sqrt();
        for point in &points {
            let f = point.basis.frequencies();
            assert!(f[0] < 0.96);
            assert!(f[1] >= gap_edge_1 * (1.0 - 1e-12) && f[1] < 1.9);
            assert!(f[2] >= gap_edge_2 * (1.0 - 1e-12));
            assert_eq!(point.basis.branches[0].label, "LP");
            assert_eq!(point.basis.branches[2].label, "UP");
        }
        // decoupled sweep: branches are the sorted bare frequencies
        let free = system(1.0, &[(0.96, 0.0), (1.9, 0.0)]);
        let pts = dispersion_sweep(&free, &[0.5, 0.96 / 2.0 + 0.96, 2.5]).unwrap();
        let f = pts[0].basis.frequencies();
        assert_relative_eq!(f[0], 0.5, max_relative = 1e-12);
        let f = pts[2].basis.frequencies();
        assert_relative_eq!(f[2], 2.5, max_relative = 1e-12);
        assert!(dispersion_sweep(&free, &[0.5, 0.4]).is_err());
        assert!(dispersion_sweep(&free, &[]).is_err());
    }

    #[test]
    fn high_cavity_frequency_limit_recovers_bare_phonons() {
        let basis = diagonalize(&build_minimal_coupling(&mapbi3(20.0))).unwrap();
        let f = basis.frequencies();
        assert_relative_eq!(f[0], 0.96, max_relative = 0.01);
        assert_relative_eq!(f[1], 1.9, max_relative = 0.01);
    }

    #[test]
    fn degenerate_decoupled_spectrum_still_diagonalizes() {
        // cavity exactly on a dark phonon: a four-fold degenerate pair of
        // rotation planes
        let sys = system(0.96, &[(0.96, 0.0), (1.9, 0.0)]);
        let basis = diagonalize(&build_minimal_coupling(&sys)).unwrap();
        let f = basis.frequencies();
        assert_relative_eq!(f[0], 0.96, max_relative = 1e-12);
        assert_relative_eq!(f[1], 0.96, max_relative = 1e-12);
        assert_relative_eq!(f[2], 1.9, max_relative = 1e-12);
        for a in 0..3 {
            for b in 0..3 {
                let g = basis.symplectic_gram(a, b);
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((g.re - expect).abs() < 1e-9 && g.im.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn unstable_form_is_rejected_with_diagnostic() {
        // H = w b^+ b + (w/2)(b^2 + b^+2) has a flat (unstable) quadrature
        use nalgebra::DMatrix;
        use num_complex::Complex;
        let w = 1.0;
        let b = 1.2 * w; // anomalous part exceeding the normal one
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex::new(w, 0.0),
                Complex::new(b, 0.0),
                Complex::new(b, 0.0),
                Complex::new(w, 0.0),
            ],
        );
        let form = crate::model::QuadraticForm::new(m, crate::model::Representation::MinimalCoupling)
            .unwrap();
        match diagonalize(&form) {
            Err(BogoliubovError::DynamicallyUnstable { min_eigenvalue }) => {
                assert!(min_eigenvalue < 0.0);
            }
            other => panic!("expected instability, got {other:?}"),
        }
    }

    #[test]
    fn near_zero_frequency_is_a_degeneracy_error() {
        use nalgebra::DMatrix;
        use num_complex::Complex;
        // squeezing tuned within one ulp of criticality: one quadrature
        // keeps O(eps) stiffness and the mode frequency collapses
        let s = 1e-4;
        let b = s * (1.0 - f64::EPSILON);
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex::new(s, 0.0),
                Complex::new(b, 0.0),
                Complex::new(b, 0.0),
                Complex::new(s, 0.0),
            ],
        );
        let form = crate::model::QuadraticForm::new(m, crate::model::Representation::MinimalCoupling)
            .unwrap();
        assert!(matches!(
            diagonalize(&form),
            Err(BogoliubovError::NearZeroFrequency { .. })
        ));
    }

    #[test]
    fn csv_headers_are_stable() {
        let pts = dispersion_sweep(&mapbi3(1.0), &[0.5, 1.0]).unwrap();
        let csv = dispersion_csv(&pts);
        assert!(csv.starts_with(
            "omega_c_thz,branch,omega_thz,re_X_1,im_X_1,re_X_2,im_X_2,re_Xt_1,im_Xt_1,re_Xt_2,im_Xt_2,re_Y,im_Y,re_Yt,im_Yt,W_1,W_2,W_c\n"
        ));
        assert_eq!(csv.lines().count(), 1 + 2 * 3);
        let wcsv = weights_csv(&pts);
        assert!(wcsv.starts_with("omega_c_thz,branch,omega_thz,W_1,W_2,W_c\n"));
    }
}
