//! Least-squares estimation of the effective ion plasma frequencies (and
//! optionally the bare phonon frequencies) from a table of measured
//! polariton peak frequencies across cavity tunings.

use crate::bogoliubov::{branch_labels, diagonalize, BogoliubovError};
use crate::model::{
    build_minimal_coupling, cavity_frequency_from_length, HybridSystem, ModelError,
};
use crate::numeric::{fmt_sig12, levenberg_marquardt, LmOptions};
use crate::{real, Real};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("peak table is empty")]
    EmptyTable,
    #[error("unknown branch label `{0}` (expected one of {1})")]
    UnknownBranch(String, String),
    #[error("peak table row {row}: {message}")]
    BadRow { row: usize, message: String },
    #[error(
        "free parameter `{0}` is not identifiable: fewer than two rows respond to it"
    )]
    NotIdentifiable(String),
    #[error("no free parameters selected")]
    NothingToFit,
    #[error("mask length {got} does not match {expected} phonon modes")]
    MaskLength { got: usize, expected: usize },
    #[error("figure of merit needs at least two phonon modes")]
    TooFewModes,
    #[error("least-squares failure: {0}")]
    LeastSquares(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Bogoliubov(#[from] BogoliubovError),
}

/// One observed polariton peak at a given cavity tuning.
#[derive(Debug, Clone)]
pub struct PeakObservation<T> {
    pub omega_c: T,
    pub branch: String,
    pub omega_obs: T,
    pub weight: T,
}

#[derive(Debug, Clone, Default)]
pub struct PeakTable<T> {
    pub rows: Vec<PeakObservation<T>>,
}

impl<T: Real> PeakTable<T> {
    /// Parse the CSV schema `omega_c_thz,branch,omega_obs_thz[,weight]` or
    /// `slot_length_um,eps_sub,branch,omega_obs_thz[,weight]`; lines
    /// starting with `#` are skipped.
    pub fn from_csv(text: &str) -> Result<Self, FitError> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or(FitError::EmptyTable)?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let by_length = match cols.first() {
            Some(&"omega_c_thz") => false,
            Some(&"slot_length_um") => true,
            _ => {
                return Err(FitError::BadRow {
                    row: 0,
                    message: format!("unrecognized header `{header}`"),
                })
            }
        };
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parse = |s: &str| -> Result<T, FitError> {
                s.parse::<f64>().map(real).map_err(|e| FitError::BadRow {
                    row: i + 1,
                    message: format!("bad number `{s}`: {e}"),
                })
            };
            let need = |n: usize| -> Result<(), FitError> {
                if fields.len() < n {
                    Err(FitError::BadRow {
                        row: i + 1,
                        message: format!("expected at least {n} fields, got {}", fields.len()),
                    })
                } else {
                    Ok(())
                }
            };
            let (omega_c, branch_idx) = if by_length {
                need(4)?;
                let length = parse(fields[0])?;
                let eps_sub = parse(fields[1])?;
                let wc = cavity_frequency_from_length(length, eps_sub, T::one())?;
                (wc, 2)
            } else {
                need(3)?;
                (parse(fields[0])?, 1)
            };
            let weight = if fields.len() > branch_idx + 2 {
                parse(fields[branch_idx + 2])?
            } else {
                T::one()
            };
            rows.push(PeakObservation {
                omega_c,
                branch: fields[branch_idx].to_string(),
                omega_obs: parse(fields[branch_idx + 1])?,
                weight,
            });
        }
        if rows.is_empty() {
            return Err(FitError::EmptyTable);
        }
        Ok(PeakTable { rows })
    }
}

impl PeakTable<f64> {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("omega_c_thz,branch,omega_obs_thz,weight\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt_sig12(r.omega_c),
                r.branch,
                fmt_sig12(r.omega_obs),
                fmt_sig12(r.weight)
            ));
        }
        out
    }
}

/// Which parameters the fit may vary.
#[derive(Debug, Clone)]
pub struct FitSettings {
    /// One flag per phonon mode; `true` frees `nu_l`.
    pub free_nu: Vec<bool>,
    /// One flag per phonon mode; `true` frees `omega_l` as well.
    pub free_omega: Vec<bool>,
}

impl FitSettings {
    pub fn free_all_nu(n: usize) -> Self {
        FitSettings {
            free_nu: vec![true; n],
            free_omega: vec![false; n],
        }
    }
}

/// Normalized coupling ratios `g_l/omega_l` under the two resonance
/// conventions: the cavity tuned to the bare phonon frequency
/// (`omega_c = omega_l`, where `g/omega = nu/(2 omega)`) or to the
/// blueshifted gap edge (`omega_c = sqrt(omega^2 + nu^2)`).
#[derive(Debug, Clone)]
pub struct CouplingRatios<T> {
    pub bare: Vec<T>,
    pub blueshifted: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct FitResult<T: Real> {
    /// Fitted plasma frequencies, THz (all modes; frozen ones keep their
    /// template values).
    pub nu: Vec<T>,
    /// Standard errors from the residual Jacobian (zero for frozen
    /// parameters or when there are no spare degrees of freedom).
    pub nu_stderr: Vec<T>,
    /// Phonon frequencies after the fit, THz.
    pub omega: Vec<T>,
    pub omega_stderr: Vec<T>,
    pub residuals: Vec<T>,
    pub residual_norm: T,
    pub degrees_of_freedom: usize,
    pub ratios: CouplingRatios<T>,
    pub converged: bool,
    /// Final cost of every multi-start, for diagnosing the start grid.
    pub start_costs: Vec<T>,
}

struct ParamLayout {
    nu_slots: Vec<usize>,
    omega_slots: Vec<usize>,
    n_params: usize,
}

fn layout(settings: &FitSettings, n: usize) -> Result<ParamLayout, FitError> {
    if settings.free_nu.len() != n || settings.free_omega.len() != n {
        return Err(FitError::MaskLength {
            got: settings.free_nu.len().max(settings.free_omega.len()),
            expected: n,
        });
    }
    let mut nu_slots = vec![usize::MAX; n];
    let mut omega_slots = vec![usize::MAX; n];
    let mut k = 0;
    for l in 0..n {
        if settings.free_nu[l] {
            nu_slots[l] = k;
            k += 1;
        }
    }
    for l in 0..n {
        if settings.free_omega[l] {
            omega_slots[l] = k;
            k += 1;
        }
    }
    if k == 0 {
        return Err(FitError::NothingToFit);
    }
    Ok(ParamLayout {
        nu_slots,
        omega_slots,
        n_params: k,
    })
}

fn apply_params<T: Real>(
    template: &HybridSystem<T>,
    lay: &ParamLayout,
    p: &[T],
) -> Result<HybridSystem<T>, ModelError> {
    let mut phonons = template.phonons().to_vec();
    for (l, ph) in phonons.iter_mut().enumerate() {
        if lay.nu_slots[l] != usize::MAX {
            ph.nu = p[lay.nu_slots[l]];
        }
        if lay.omega_slots[l] != usize::MAX {
            ph.omega = p[lay.omega_slots[l]];
        }
    }
    HybridSystem::new(template.cavity().clone(), phonons, template.temperature_k())
}

/// Weighted least squares of the polariton dispersion against a peak table.
///
/// The model frequency for each row is obtained by diagonalizing the
/// minimal-coupling form at the row's cavity frequency. Optimization is a
/// bound-constrained damped least-squares from a fixed multi-start grid
/// (`nu/omega` in {0.1, 0.3, 0.6, 0.9}), keeping the lowest-cost solution,
/// which makes the result deterministic.
pub fn fit_plasma_frequencies<T: Real>(
    table: &PeakTable<T>,
    template: &HybridSystem<T>,
    settings: &FitSettings,
) -> Result<FitResult<T>, FitError> {
    if table.rows.is_empty() {
        return Err(FitError::EmptyTable);
    }
    let n = template.n_phonons();
    let lay = layout(settings, n)?;
    let labels = branch_labels(n);

    let branch_index = |name: &str| -> Result<usize, FitError> {
        labels
            .iter()
            .position(|l| l == name)
            .ok_or_else(|| FitError::UnknownBranch(name.to_string(), labels.join("/")))
    };
    let rows: Vec<(T, usize, T, T)> = table
        .rows
        .iter()
        .map(|r| Ok((r.omega_c, branch_index(&r.branch)?, r.omega_obs, r.weight)))
        .collect::<Result<_, FitError>>()?;

    let residual = |p: &[T], out: &mut Vec<T>| -> Result<(), String> {
        let sys = apply_params(template, &lay, p).map_err(|e| e.to_string())?;
        for &(wc, branch, obs, weight) in &rows {
            let tuned = sys.with_cavity_frequency(wc).map_err(|e| e.to_string())?;
            let basis = diagonalize(&build_minimal_coupling(&tuned)).map_err(|e| e.to_string())?;
            out.push((basis.branches[branch].omega - obs) * weight.sqrt());
        }
        Ok(())
    };

    // start point from the template, used for the identifiability probe
    let mut x0 = vec![T::zero(); lay.n_params];
    let mut lower = vec![T::zero(); lay.n_params];
    let upper = vec![real::<T>(f64::INFINITY); lay.n_params];
    for (l, ph) in template.phonons().iter().enumerate() {
        if lay.nu_slots[l] != usize::MAX {
            x0[lay.nu_slots[l]] = ph.nu;
        }
        if lay.omega_slots[l] != usize::MAX {
            let s = lay.omega_slots[l];
            x0[s] = ph.omega;
            lower[s] = real(1e-6);
        }
    }
    check_identifiable(&residual, &x0, &lay, template, &rows)?;

    // multi-start over nu ratios; frozen and omega parameters start at the
    // template values
    let ratio_grid: [f64; 4] = [0.1, 0.3, 0.6, 0.9];
    let free_nu_count = lay.nu_slots.iter().filter(|&&s| s != usize::MAX).count();
    let starts: Vec<Vec<T>> = if free_nu_count == 0 {
        vec![x0.clone()]
    } else if free_nu_count <= 3 {
        let mut all = Vec::new();
        let mut idx = vec![0usize; free_nu_count];
        loop {
            let mut start = x0.clone();
            let mut k = 0;
            for (l, ph) in template.phonons().iter().enumerate() {
                if lay.nu_slots[l] != usize::MAX {
                    start[lay.nu_slots[l]] = ph.omega * real(ratio_grid[idx[k]]);
                    k += 1;
                }
            }
            all.push(start);
            let mut carry = free_nu_count;
            for (j, ix) in idx.iter_mut().enumerate() {
                *ix += 1;
                if *ix < ratio_grid.len() {
                    carry = j;
                    break;
                }
                *ix = 0;
            }
            if carry == free_nu_count {
                break;
            }
        }
        all
    } else {
        ratio_grid
            .iter()
            .map(|&r| {
                let mut start = x0.clone();
                for (l, ph) in template.phonons().iter().enumerate() {
                    if lay.nu_slots[l] != usize::MAX {
                        start[lay.nu_slots[l]] = ph.omega * real(r);
                    }
                }
                start
            })
            .collect()
    };

    let opts = LmOptions::default();
    let mut best: Option<crate::numeric::LmOutcome<T>> = None;
    let mut start_costs = Vec::with_capacity(starts.len());
    for start in &starts {
        let outcome = levenberg_marquardt(&residual, start, &lower, &upper, &opts)
            .map_err(|e| FitError::LeastSquares(e.to_string()))?;
        start_costs.push(outcome.cost);
        let better = match &best {
            None => true,
            Some(b) => outcome.cost < b.cost,
        };
        if better {
            best = Some(outcome);
        }
    }
    let best = best.expect("at least one start");

    let covariance = best.covariance();
    let stderr_of = |slot: usize| -> T {
        if slot == usize::MAX {
            return T::zero();
        }
        covariance
            .as_ref()
            .map(|c| c[(slot, slot)].max(T::zero()).sqrt())
            .unwrap_or_else(T::zero)
    };

    let fitted = apply_params(template, &lay, &best.params)?;
    let nu: Vec<T> = fitted.phonons().iter().map(|p| p.nu).collect();
    let omega: Vec<T> = fitted.phonons().iter().map(|p| p.omega).collect();
    let nu_stderr: Vec<T> = (0..n).map(|l| stderr_of(lay.nu_slots[l])).collect();
    let omega_stderr: Vec<T> = (0..n).map(|l| stderr_of(lay.omega_slots[l])).collect();

    let two = real::<T>(2.0);
    let bare: Vec<T> = nu.iter().zip(&omega).map(|(v, w)| *v / (two * *w)).collect();
    let blueshifted: Vec<T> = nu
        .iter()
        .zip(&omega)
        .map(|(v, w)| {
            let wt = (*w * *w + *v * *v).sqrt();
            *v / (two * *w) * (*w / wt).sqrt()
        })
        .collect();

    let dof = best.residuals.len().saturating_sub(lay.n_params);
    Ok(FitResult {
        nu,
        nu_stderr,
        omega,
        omega_stderr,
        residuals: best.residuals.iter().cloned().collect(),
        residual_norm: best.cost.sqrt(),
        degrees_of_freedom: dof,
        ratios: CouplingRatios { bare, blueshifted },
        converged: best.converged,
        start_costs,
    })
}

fn check_identifiable<T: Real>(
    residual: &dyn Fn(&[T], &mut Vec<T>) -> Result<(), String>,
    x0: &[T],
    lay: &ParamLayout,
    template: &HybridSystem<T>,
    rows: &[(T, usize, T, T)],
) -> Result<(), FitError> {
    let mut base = Vec::new();
    residual(x0, &mut base).map_err(FitError::LeastSquares)?;
    for (l, ph) in template.phonons().iter().enumerate() {
        for (slot, name) in [
            (lay.nu_slots[l], format!("nu[{}]", ph.label)),
            (lay.omega_slots[l], format!("omega[{}]", ph.label)),
        ] {
            if slot == usize::MAX {
                continue;
            }
            let mut probe = x0.to_vec();
            let h = real::<T>(1e-4) * probe[slot].abs().max(real(0.1));
            probe[slot] += h;
            let mut shifted = Vec::new();
            residual(&probe, &mut shifted).map_err(FitError::LeastSquares)?;
            let sensitive = base
                .iter()
                .zip(&shifted)
                .zip(rows)
                .filter(|((a, b), (_, _, obs, _))| {
                    (**b - **a).abs() > real::<T>(1e-8) * (T::one() + obs.abs())
                })
                .count();
            if sensitive < 2 {
                return Err(FitError::NotIdentifiable(name));
            }
        }
    }
    Ok(())
}

/// Multimode figure of merit over the two lowest phonon modes.
///
/// With `omega_c = None` this is the product of the resonant ratios as
/// fitted, `(nu_1/2 omega_1)(nu_2/2 omega_2)` (bare-resonance convention);
/// with a cavity frequency it is `(g_1/omega_1)(g_2/omega_2)` evaluated at
/// that common tuning.
pub fn figure_of_merit<T: Real>(
    result: &FitResult<T>,
    omega_c: Option<T>,
) -> Result<T, FitError> {
    if result.nu.len() < 2 {
        return Err(FitError::TooFewModes);
    }
    match omega_c {
        None => Ok(result.ratios.bare[0] * result.ratios.bare[1]),
        Some(wc) => {
            let two = real::<T>(2.0);
            let r = |l: usize| {
                result.nu[l] / (two * result.omega[l]) * (result.omega[l] / wc).sqrt()
            };
            Ok(r(0) * r(1))
        }
    }
}

/// Synthetic peak table: the model's own branch frequencies at each grid
/// cavity frequency, optionally perturbed by Gaussian noise of relative
/// size `noise` (deterministic under a seeded rng).
pub fn synthetic_peak_table<R: rand::Rng>(
    system: &HybridSystem<f64>,
    omega_c_grid: &[f64],
    noise: f64,
    rng: &mut R,
) -> Result<PeakTable<f64>, FitError> {
    let mut rows = Vec::new();
    for &wc in omega_c_grid {
        let tuned = system.with_cavity_frequency(wc)?;
        let basis = diagonalize(&build_minimal_coupling(&tuned))?;
        for b in &basis.branches {
            let jitter = if noise > 0.0 {
                1.0 + noise * crate::numeric::standard_normal(rng)
            } else {
                1.0
            };
            rows.push(PeakObservation {
                omega_c: wc,
                branch: b.label.clone(),
                omega_obs: b.omega * jitter,
                weight: 1.0,
            });
        }
    }
    Ok(PeakTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CavityMode, PhononMode};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn template(nu1: f64, nu2: f64) -> HybridSystem<f64> {
        let phonons = vec![
            PhononMode::new("TO1", 0.96, nu1).unwrap(),
            PhononMode::new("TO2", 1.9, nu2).unwrap(),
        ];
        HybridSystem::new(CavityMode::new(1.0).unwrap(), phonons, 300.0).unwrap()
    }

    fn seven_length_grid() -> Vec<f64> {
        // nanoslot lengths 30..160 um on quartz
        [30.0, 40.0, 50.0, 60.0, 80.0, 120.0, 160.0]
            .iter()
            .rev()
            .map(|&l| cavity_frequency_from_length(l, 4.41, 1.0).unwrap())
            .collect()
    }

    #[test]
    fn csv_round_trip_and_length_header() {
        let table = PeakTable {
            rows: vec![PeakObservation {
                omega_c: 1.0,
                branch: "LP".into(),
                omega_obs: 0.8,
                weight: 1.0,
            }],
        };
        let parsed = PeakTable::<f64>::from_csv(&table.to_csv()).unwrap();
        assert_eq!(parsed.rows.len(), 1);
        assert_eq!(parsed.rows[0].branch, "LP");

        let by_length = "slot_length_um,eps_sub,branch,omega_obs_thz\n50,4.41,MP,1.1\n";
        let parsed = PeakTable::<f64>::from_csv(by_length).unwrap();
        assert_relative_eq!(parsed.rows[0].omega_c, 1.8228, epsilon = 5e-4);
        assert_eq!(parsed.rows[0].weight, 1.0);

        assert!(PeakTable::<f64>::from_csv("bogus,header\n1,2\n").is_err());
    }

    #[test]
    fn noise_free_table_recovers_exactly() {
        let truth = template(0.5376, 1.596);
        let grid = seven_length_grid();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let table = synthetic_peak_table(&truth, &grid, 0.0, &mut rng).unwrap();

        let start = template(0.3, 0.9);
        let fit = fit_plasma_frequencies(&table, &start, &FitSettings::free_all_nu(2)).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.nu[0], 0.5376, max_relative = 1e-6);
        assert_relative_eq!(fit.nu[1], 1.596, max_relative = 1e-6);
        assert!(fit.residual_norm < 1e-9);
        assert_relative_eq!(fit.ratios.bare[0], 0.28, max_relative = 1e-5);
        assert_relative_eq!(fit.ratios.bare[1], 0.42, max_relative = 1e-5);
        // the blueshifted-crossing convention reads lower:
        // g(omega_tilde)/omega = (nu/2 omega) sqrt(omega/omega_tilde)
        assert_relative_eq!(fit.ratios.blueshifted[0], 0.2616, epsilon = 1e-4);
        assert_relative_eq!(fit.ratios.blueshifted[1], 0.3675, epsilon = 1e-4);
    }

    #[test]
    fn residuals_orthogonal_to_jacobian_at_optimum() {
        let truth = template(0.5376, 1.596);
        let grid = seven_length_grid();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let table = synthetic_peak_table(&truth, &grid, 0.005, &mut rng).unwrap();
        let fit =
            fit_plasma_frequencies(&table, &template(0.3, 0.9), &FitSettings::free_all_nu(2))
                .unwrap();
        assert!(fit.converged);
        // first-order optimality through an independent finite-difference probe
        let residual = |p: &[f64], out: &mut Vec<f64>| -> Result<(), String> {
            let sys = template(p[0], p[1]);
            for row in &table.rows {
                let tuned = sys.with_cavity_frequency(row.omega_c).unwrap();
                let basis = diagonalize(&build_minimal_coupling(&tuned)).unwrap();
                let idx = branch_labels(2).iter().position(|l| *l == row.branch).unwrap();
                out.push(basis.branches[idx].omega - row.omega_obs);
            }
            Ok(())
        };
        let p = [fit.nu[0], fit.nu[1]];
        let h = 1e-6;
        for j in 0..2 {
            let mut pp = p;
            pp[j] += h;
            let mut rp = Vec::new();
            residual(&pp, &mut rp).unwrap();
            pp[j] -= 2.0 * h;
            let mut rm = Vec::new();
            residual(&pp, &mut rm).unwrap();
            let mut r0 = Vec::new();
            residual(&p, &mut r0).unwrap();
            let grad: f64 = r0
                .iter()
                .zip(rp.iter().zip(&rm))
                .map(|(r, (a, b))| r * (a - b) / (2.0 * h))
                .sum();
            assert!(grad.abs() < 1e-6, "gradient component {j} = {grad}");
        }
    }

    #[test]
    fn noisy_recovery_within_two_percent_median() {
        let truth = template(0.5376, 1.596);
        let grid = seven_length_grid();
        let mut errs1 = Vec::new();
        let mut errs2 = Vec::new();
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let table = synthetic_peak_table(&truth, &grid, 0.005, &mut rng).unwrap();
            let fit =
                fit_plasma_frequencies(&table, &template(0.3, 0.9), &FitSettings::free_all_nu(2))
                    .unwrap();
            errs1.push(((fit.nu[0] - 0.5376) / 0.5376).abs());
            errs2.push(((fit.nu[1] - 1.596) / 1.596).abs());
        }
        errs1.sort_by(|a, b| a.partial_cmp(b).unwrap());
        errs2.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(errs1[10] < 0.02, "median nu1 error {}", errs1[10]);
        assert!(errs2[10] < 0.02, "median nu2 error {}", errs2[10]);
    }

    #[test]
    fn scaling_all_frequencies_scales_nu() {
        let truth = template(0.5376, 1.596);
        let grid = seven_length_grid();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let table = synthetic_peak_table(&truth, &grid, 0.0, &mut rng).unwrap();
        let s = 2.5;
        let scaled_table = PeakTable {
            rows: table
                .rows
                .iter()
                .map(|r| PeakObservation {
                    omega_c: r.omega_c * s,
                    branch: r.branch.clone(),
                    omega_obs: r.omega_obs * s,
                    weight: r.weight,
                })
                .collect(),
        };
        let scaled_template = HybridSystem::new(
            CavityMode::new(1.0 * s).unwrap(),
            vec![
                PhononMode::new("TO1", 0.96 * s, 0.3 * s).unwrap(),
                PhononMode::new("TO2", 1.9 * s, 0.9 * s).unwrap(),
            ],
            300.0,
        )
        .unwrap();
        let base =
            fit_plasma_frequencies(&table, &template(0.3, 0.9), &FitSettings::free_all_nu(2))
                .unwrap();
        let scaled = fit_plasma_frequencies(
            &scaled_table,
            &scaled_template,
            &FitSettings::free_all_nu(2),
        )
        .unwrap();
        for l in 0..2 {
            assert_relative_eq!(scaled.nu[l], base.nu[l] * s, max_relative = 1e-6);
            assert_relative_eq!(
                scaled.ratios.bare[l],
                base.ratios.bare[l],
                max_relative = 1e-6
            );
        }
    }

    #[test]
    fn figure_of_merit_values() {
        let truth = template(0.5376, 1.596);
        let grid = seven_length_grid();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let table = synthetic_peak_table(&truth, &grid, 0.0, &mut rng).unwrap();
        let fit =
            fit_plasma_frequencies(&table, &template(0.3, 0.9), &FitSettings::free_all_nu(2))
                .unwrap();
        let fom = figure_of_merit(&fit, None).unwrap();
        assert_relative_eq!(fom, 0.12, epsilon = 0.01);
        // at a common detuned cavity the product grows as 1/omega_c
        let at_01 = figure_of_merit(&fit, Some(0.1)).unwrap();
        let at_004 = figure_of_merit(&fit, Some(0.4)).unwrap();
        assert_relative_eq!(at_01 / at_004, 4.0, max_relative = 1e-9);
        // nu = 0 collapses it
        let free_fit = FitResult {
            nu: vec![0.0, 0.0],
            nu_stderr: vec![0.0, 0.0],
            omega: vec![0.96, 1.9],
            omega_stderr: vec![0.0, 0.0],
            residuals: vec![],
            residual_norm: 0.0,
            degrees_of_freedom: 0,
            ratios: CouplingRatios {
                bare: vec![0.0, 0.0],
                blueshifted: vec![0.0, 0.0],
            },
            converged: true,
            start_costs: vec![],
        };
        assert_eq!(figure_of_merit(&free_fit, None).unwrap(), 0.0);
    }

    #[test]
    fn frees_phonon_frequencies_on_request() {
        // truth has shifted bare frequencies; fit recovers both nu and omega
        let truth = HybridSystem::new(
            CavityMode::new(1.0).unwrap(),
            vec![
                PhononMode::new("TO1", 0.93, 0.50).unwrap(),
                PhononMode::new("TO2", 1.95, 1.40).unwrap(),
            ],
            300.0,
        )
        .unwrap();
        let grid = seven_length_grid();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let table = synthetic_peak_table(&truth, &grid, 0.0, &mut rng).unwrap();
        let settings = FitSettings {
            free_nu: vec![true, true],
            free_omega: vec![true, true],
        };
        let fit = fit_plasma_frequencies(&table, &template(0.3, 0.9), &settings).unwrap();
        assert_relative_eq!(fit.nu[0], 0.50, max_relative = 1e-5);
        assert_relative_eq!(fit.nu[1], 1.40, max_relative = 1e-5);
        assert_relative_eq!(fit.omega[0], 0.93, max_relative = 1e-5);
        assert_relative_eq!(fit.omega[1], 1.95, max_relative = 1e-5);
    }

    #[test]
    fn rejects_non_identifiable_and_unknown_branches() {
        let table = PeakTable {
            rows: vec![PeakObservation {
                omega_c: 1.0,
                branch: "LP".into(),
                omega_obs: 0.8,
                weight: 1.0,
            }],
        };
        let err = fit_plasma_frequencies(&table, &template(0.3, 0.9), &FitSettings::free_all_nu(2));
        assert!(matches!(err, Err(FitError::NotIdentifiable(_))));

        let table = PeakTable {
            rows: vec![PeakObservation {
                omega_c: 1.0,
                branch: "XX".into(),
                omega_obs: 0.8,
                weight: 1.0,
            }],
        };
        assert!(matches!(
            fit_plasma_frequencies(&table, &template(0.3, 0.9), &FitSettings::free_all_nu(2)),
            Err(FitError::UnknownBranch(..))
        ));
    }
}
