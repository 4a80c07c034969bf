//! Brute-force oracle: exact diagonalization of the minimal-coupling
//! Hamiltonian in a truncated Fock basis, used to validate polariton
//! spectra and ground-state correlators against the quadratic-form route.
//!
//! The phonon operators are rotated by a phase (`b -> i b`) so that the
//! coupling `-i g (b^+ - b)(a + a^+)` becomes `-g (b + b^+)(a + a^+)` and
//! the Hamiltonian matrix is real symmetric. Diagonal correlators are
//! unaffected; anomalous ones pick up a sign that is undone on return.

use crate::model::HybridSystem;
use crate::numeric::lanczos_lowest;
use crate::Real;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use thiserror::Error;

/// Product-basis size above which all eigensolves are refused.
pub const MAX_BASIS_SIZE: usize = 200_000;
/// Dense eigensolve below this dimension, Lanczos above.
const DENSE_LIMIT: usize = 400;

#[derive(Debug, Error)]
pub enum FockError {
    #[error(
        "truncated basis of size {size} exceeds the {limit} guard; \
         reduce cutoffs to about {suggested} per mode"
    )]
    BasisTooLarge {
        size: usize,
        limit: usize,
        suggested: usize,
    },
    #[error("need one cutoff per mode ({expected}), got {got}")]
    CutoffCountMismatch { got: usize, expected: usize },
    #[error("every cutoff must be at least 2, got {0}")]
    CutoffTooSmall(usize),
}

/// Truncation: number of Fock levels kept per mode, phonons first, cavity
/// last. Observables are recomputed at `cutoff + 2` to estimate
/// truncation error.
#[derive(Debug, Clone)]
pub struct FockConfig {
    pub cutoffs: Vec<usize>,
}

impl FockConfig {
    pub fn uniform(n_modes: usize, cutoff: usize) -> Self {
        FockConfig {
            cutoffs: vec![cutoff; n_modes],
        }
    }

    fn validate(&self, n_modes: usize) -> Result<(), FockError> {
        if self.cutoffs.len() != n_modes {
            return Err(FockError::CutoffCountMismatch {
                got: self.cutoffs.len(),
                expected: n_modes,
            });
        }
        if let Some(&c) = self.cutoffs.iter().find(|&&c| c < 2) {
            return Err(FockError::CutoffTooSmall(c));
        }
        let size = self.basis_size();
        if size > MAX_BASIS_SIZE {
            let suggested = (MAX_BASIS_SIZE as f64)
                .powf(1.0 / n_modes as f64)
                .floor() as usize;
            return Err(FockError::BasisTooLarge {
                size,
                limit: MAX_BASIS_SIZE,
                suggested,
            });
        }
        Ok(())
    }

    pub fn basis_size(&self) -> usize {
        self.cutoffs.iter().product()
    }

    fn enlarged(&self) -> Self {
        FockConfig {
            cutoffs: self.cutoffs.iter().map(|c| c + 2).collect(),
        }
    }
}

/// Sparse real symmetric Hamiltonian in the occupation basis.
struct FockHamiltonian {
    dim: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl FockHamiltonian {
    fn matvec(&self, x: &DVector<f64>, y: &mut DVector<f64>) {
        for (i, row) in self.rows.iter().enumerate() {
            let mut acc = 0.0;
            for &(j, v) in row {
                acc += v * x[j];
            }
            y[i] = acc;
        }
    }

    fn dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                m[(i, j)] += v;
            }
        }
        m
    }
}

/// Mixed-radix occupation index bookkeeping.
struct Basis {
    cutoffs: Vec<usize>,
    strides: Vec<usize>,
    dim: usize,
}

impl Basis {
    fn new(cutoffs: &[usize]) -> Self {
        let mut strides = vec![0usize; cutoffs.len()];
        let mut acc = 1;
        for (s, c) in strides.iter_mut().zip(cutoffs).rev() {
            *s = acc;
            acc *= c;
        }
        Basis {
            cutoffs: cutoffs.to_vec(),
            strides,
            dim: acc,
        }
    }

    fn occupation(&self, index: usize, mode: usize) -> usize {
        index / self.strides[mode] % self.cutoffs[mode]
    }
}

fn assemble<T: Real>(system: &HybridSystem<T>, cutoffs: &[usize]) -> FockHamiltonian {
    let n = system.n_phonons();
    let cavity = n;
    let basis = Basis::new(cutoffs);
    let omegas: Vec<f64> = system.phonons().iter().map(|p| to_f64(p.omega)).collect();
    let omega_c = to_f64(system.omega_c());
    let couplings: Vec<f64> = system
        .coupling_strengths()
        .iter()
        .map(|g| to_f64(*g))
        .collect();
    let diamagnetic: f64 = couplings
        .iter()
        .zip(&omegas)
        .map(|(g, w)| g * g / w)
        .sum();

    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); basis.dim];
    for i in 0..basis.dim {
        let nc = basis.occupation(i, cavity);
        // bare modes plus the diamagnetic diagonal D (2 n_c + 1)
        let mut diag = omega_c * nc as f64 + diamagnetic * (2 * nc + 1) as f64;
        for (l, w) in omegas.iter().enumerate() {
            diag += w * basis.occupation(i, l) as f64;
        }
        rows[i].push((i, diag));

        // D a^2 lowers the photon number by two (mirrored for a^+^2)
        if nc >= 2 {
            let j = i - 2 * basis.strides[cavity];
            let v = diamagnetic * ((nc * (nc - 1)) as f64).sqrt();
            rows[j].push((i, v));
            rows[i].push((j, v));
        }

        // -g (b + b^+)(a + a^+): four rung combinations; emit the two that
        // lower the flattened index and mirror them
        for (l, g) in couplings.iter().enumerate() {
            let nl = basis.occupation(i, l);
            if nl >= 1 {
                // b_l a^+ : needs nc + 1 within cutoff
                if nc + 1 < basis.cutoffs[cavity] {
                    let j = i - basis.strides[l] + basis.strides[cavity];
                    let v = -g * (nl as f64).sqrt() * ((nc + 1) as f64).sqrt();
                    rows[i].push((j, v));
                    rows[j].push((i, v));
                }
                // b_l a
                if nc >= 1 {
                    let j = i - basis.strides[l] - basis.strides[cavity];
                    let v = -g * (nl as f64).sqrt() * (nc as f64).sqrt();
                    rows[i].push((j, v));
                    rows[j].push((i, v));
                }
            }
        }
    }
    FockHamiltonian {
        dim: basis.dim,
        rows,
    }
}

/// Lowest eigenpairs of the assembled Hamiltonian.
fn low_spectrum(h: &FockHamiltonian, k: usize) -> (Vec<f64>, DVector<f64>) {
    if h.dim <= DENSE_LIMIT {
        let eig = h.dense().symmetric_eigen();
        let mut order: Vec<usize> = (0..h.dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
        let vals = order
            .iter()
            .take(k)
            .map(|&i| eig.eigenvalues[i])
            .collect();
        let ground = eig.eigenvectors.column(order[0]).into_owned();
        (vals, ground)
    } else {
        let mv = |x: &DVector<f64>, y: &mut DVector<f64>| h.matvec(x, y);
        let (vals, vecs) = lanczos_lowest(h.dim, &mv, k, 320, 1e-11);
        (vals, vecs.into_iter().next().expect("k >= 1"))
    }
}

/// Excitation spectrum of the truncated model with a truncation-error
/// estimate from rerunning at enlarged cutoffs.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    /// Eigenvalues minus the ground energy, ascending, THz.
    pub excitations: Vec<f64>,
    /// Ground energy relative to the decoupled ground energy, THz.
    pub ground_energy_shift: f64,
    /// Max shift of the reported excitations between cutoff and cutoff+2;
    /// `None` when the enlarged basis would exceed the size guard.
    pub convergence: Option<f64>,
    pub basis_size: usize,
}

/// Sorted low excitation energies of the system in a truncated Fock basis.
/// `n_levels` counts the eigenvalues kept (ground state included).
pub fn exact_spectrum<T: Real>(
    system: &HybridSystem<T>,
    config: &FockConfig,
    n_levels: usize,
) -> Result<SpectrumReport, FockError> {
    let n_modes = system.n_phonons() + 1;
    config.validate(n_modes)?;
    let large = config.enlarged();

    let run = |cutoffs: &[usize]| -> (Vec<f64>, f64) {
        let h = assemble(system, cutoffs);
        let (vals, _) = low_spectrum(&h, n_levels.max(2));
        let e0 = vals[0];
        (vals.iter().skip(1).map(|v| v - e0).collect(), e0)
    };

    let (exc, e0) = run(&config.cutoffs);
    // the convergence rerun is skipped when it would exceed the guard
    let (exc_big, e0_big, convergence) = if large.basis_size() <= MAX_BASIS_SIZE {
        let (exc_big, e0_big) = run(&large.cutoffs);
        let shift = exc
            .iter()
            .zip(&exc_big)
            .map(|(a, b)| (a - b).abs())
            .fold((e0 - e0_big).abs(), f64::max);
        (exc_big, e0_big, Some(shift))
    } else {
        (exc, e0, None)
    };

    // decoupled ground energy is zero by construction (normal ordering),
    // so the shift is the raw ground eigenvalue minus the diamagnetic
    // constant D
    let diamagnetic: f64 = system
        .coupling_strengths()
        .iter()
        .zip(system.phonons())
        .map(|(g, p)| to_f64(*g * *g / p.omega))
        .sum();
    Ok(SpectrumReport {
        excitations: exc_big,
        ground_energy_shift: e0_big - diamagnetic,
        convergence,
        basis_size: config.basis_size(),
    })
}

/// Ground-state phonon correlators from the numeric eigenvector.
#[derive(Debug, Clone)]
pub struct GroundCorrelators {
    pub normal: DMatrix<Complex<f64>>,
    pub anomalous: DMatrix<Complex<f64>>,
    /// Max entry shift between cutoff and cutoff+2; `None` when the
    /// enlarged basis would exceed the size guard.
    pub convergence: Option<f64>,
    pub basis_size: usize,
}

pub fn exact_ground_correlators<T: Real>(
    system: &HybridSystem<T>,
    config: &FockConfig,
) -> Result<GroundCorrelators, FockError> {
    let n = system.n_phonons();
    let n_modes = n + 1;
    config.validate(n_modes)?;

    let run = |cutoffs: &[usize]| -> (DMatrix<f64>, DMatrix<f64>) {
        let h = assemble(system, cutoffs);
        let (_, ground) = low_spectrum(&h, 2);
        let basis = Basis::new(cutoffs);
        // lowered vectors v_l = b_l psi and raised w_l = b_l^+ psi
        let mut lowered = Vec::with_capacity(n);
        let mut raised = Vec::with_capacity(n);
        for l in 0..n {
            let mut lv = DVector::zeros(basis.dim);
            let mut rv = DVector::zeros(basis.dim);
            for i in 0..basis.dim {
                let nl = basis.occupation(i, l);
                if nl >= 1 {
                    lv[i - basis.strides[l]] += (nl as f64).sqrt() * ground[i];
                }
                if nl + 1 < basis.cutoffs[l] {
                    rv[i + basis.strides[l]] += ((nl + 1) as f64).sqrt() * ground[i];
                }
            }
            lowered.push(lv);
            raised.push(rv);
        }
        let mut normal = DMatrix::zeros(n, n);
        let mut anom = DMatrix::zeros(n, n);
        for l in 0..n {
            for m in 0..n {
                normal[(l, m)] = lowered[l].dot(&lowered[m]);
                anom[(l, m)] = raised[l].dot(&lowered[m]);
            }
        }
        (normal, anom)
    };

    let (n1, a1) = run(&config.cutoffs);
    let large = config.enlarged();
    let (n2, a2, convergence) = if large.basis_size() <= MAX_BASIS_SIZE {
        let (n2, a2) = run(&large.cutoffs);
        let shift = (&n1 - &n2)
            .iter()
            .chain((&a1 - &a2).iter())
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        (n2, a2, Some(shift))
    } else {
        (n1, a1, None)
    };

    // undo the b -> i b gauge: <b b> = -<b~ b~>, normal part unchanged
    let to_complex = |m: &DMatrix<f64>, sign: f64| {
        DMatrix::from_fn(n, n, |i, j| Complex::new(sign * m[(i, j)], 0.0))
    };
    Ok(GroundCorrelators {
        normal: to_complex(&n2, 1.0),
        anomalous: to_complex(&a2, -1.0),
        convergence,
        basis_size: config.basis_size(),
    })
}

fn to_f64<T: Real>(x: T) -> f64 {
    num_traits::ToPrimitive::to_f64(&x).unwrap_or(f64::NAN)
}
