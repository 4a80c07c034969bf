//! One function per subcommand; each consumes the run configuration and
//! writes its CSV/JSON artifacts into the output directory.

use crate::config::RunConfig;
use crate::io;
use anyhow::{bail, Context, Result};
use polaritonics::bogoliubov::{
    asymptotic_coefficients, diagonalize, dispersion_csv, dispersion_sweep, secular_frequencies,
    weights, weights_csv,
};
use polaritonics::correlations::{correlators, g2_csv, g2_equal_time, g2_sweep, ThermalState};
use polaritonics::fitting::{
    figure_of_merit, fit_plasma_frequencies, synthetic_peak_table, FitSettings, PeakTable,
};
use polaritonics::fockcheck::{exact_ground_correlators, exact_spectrum, FockConfig};
use polaritonics::model::{build_minimal_coupling, CavityMode, PhononMode};
use polaritonics::numeric::fmt_sig12;
use polaritonics::spectra::{
    add_spectrum_noise, add_trace_noise, dielectric_function, extract_peaks,
    synthesize_polariton_spectrum, synthesize_trace_pair, tinkham_conductivity, transmission,
    SpectrumKind,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use std::path::Path;

pub struct Ctx<'a> {
    pub config: &'a RunConfig,
    pub base: &'a Path,
    pub out: &'a Path,
    pub seed: u64,
    pub quiet: bool,
}

impl Ctx<'_> {
    fn say(&self, msg: &str) {
        if !self.quiet {
            println!("{msg}");
        }
    }

    fn resolve(&self, p: &Path) -> std::path::PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn write_json(&self, name: &str, value: &serde_json::Value) -> Result<()> {
        let path = self.out.join(name);
        io::write_file(&path, &format!("{}\n", serde_json::to_string_pretty(value)?))?;
        self.say(&format!("wrote {}", path.display()));
        Ok(())
    }

    fn write_text(&self, name: &str, contents: &str) -> Result<()> {
        let path = self.out.join(name);
        io::write_file(&path, contents)?;
        self.say(&format!("wrote {}", path.display()));
        Ok(())
    }
}

pub fn cmd_dispersion(ctx: &Ctx) -> Result<()> {
    let system = ctx.config.build_system()?;
    let grid = ctx.config.omega_c_grid()?;
    let points = dispersion_sweep(&system, &grid)?;
    ctx.write_text("dispersion.csv", &dispersion_csv(&points))?;
    ctx.write_text("weights.csv", &weights_csv(&points))?;
    Ok(())
}

pub fn cmd_hopfield(ctx: &Ctx) -> Result<()> {
    let system = ctx.config.build_system()?;
    let basis = diagonalize(&build_minimal_coupling(&system))?;
    let w = weights(&basis);
    let secular = secular_frequencies(&system)?;
    let max_secular_dev = basis
        .frequencies()
        .iter()
        .zip(&secular)
        .map(|(a, b)| (a - b).abs() / b.abs())
        .fold(0.0f64, f64::max);
    let asym = asymptotic_coefficients(&system);

    let point = vec![polaritonics::bogoliubov::DispersionPoint {
        omega_c: system.omega_c(),
        basis: basis.clone(),
        weights: w.clone(),
    }];
    ctx.write_text("hopfield.csv", &dispersion_csv(&point))?;

    let branch_json = |b: &polaritonics::PolaritonBranch| {
        json!({
            "label": b.label,
            "omega_thz": b.omega,
            "X": b.x.iter().map(|v| json!({"re": v.re, "im": v.im})).collect::<Vec<_>>(),
            "X_tilde": b.x_tilde.iter().map(|v| json!({"re": v.re, "im": v.im})).collect::<Vec<_>>(),
            "Y": {"re": b.y.re, "im": b.y.im},
            "Y_tilde": {"re": b.y_tilde.re, "im": b.y_tilde.im},
            "phonon_weights": b.phonon_weights(),
            "photon_weight": b.photon_weight(),
        })
    };
    let summary = json!({
        "omega_c_thz": system.omega_c(),
        "branches": basis.branches.iter().map(branch_json).collect::<Vec<_>>(),
        "secular_frequencies_thz": secular,
        "max_secular_relative_deviation": max_secular_dev,
        "asymptotic_low_cavity": {
            "valid_regime": asym.valid_regime,
            "branches": asym.branches.iter().map(branch_json).collect::<Vec<_>>(),
        },
    });
    ctx.write_json("hopfield.json", &summary)?;
    ctx.say(&format!(
        "branches at omega_c = {} THz: {}",
        fmt_sig12(system.omega_c()),
        basis
            .branches
            .iter()
            .map(|b| format!("{} = {} THz", b.label, fmt_sig12(b.omega)))
            .collect::<Vec<_>>()
            .join(", ")
    ));
    Ok(())
}

pub fn cmd_g2(ctx: &Ctx) -> Result<()> {
    let system = ctx.config.build_system()?;
    let grid = ctx.config.omega_c_grid()?;
    let temps = ctx.config.temperature_grid()?;
    let points = g2_sweep(&system, &grid, &temps)?;
    ctx.write_text("g2.csv", &g2_csv(&points))?;

    if let Some(reference) = &ctx.config.g2_reference {
        let tuned = system.with_cavity_frequency(reference.omega_c_thz)?;
        let basis = diagonalize(&build_minimal_coupling(&tuned))?;
        let state = ThermalState::new(&basis, reference.temperature_k)?;
        let g2 = g2_equal_time(&correlators(&basis, &state)?)?;
        let entries = [
            ("g2_11", g2.get(0, 0), reference.expected_g2_11),
            ("g2_22", g2.get(1, 1), reference.expected_g2_22),
            ("g2_12", g2.get(0, 1), reference.expected_g2_12),
        ];
        let mut all_pass = true;
        for (name, got, expect) in entries {
            let pass = (got - expect).abs() <= reference.tolerance;
            all_pass &= pass;
            println!(
                "{name} = {got:.4} (expected {expect} +- {}): {}",
                reference.tolerance,
                if pass { "PASS" } else { "FAIL" }
            );
        }
        let summary = json!({
            "omega_c_thz": reference.omega_c_thz,
            "temperature_K": reference.temperature_k,
            "g2_11": g2.get(0, 0),
            "g2_22": g2.get(1, 1),
            "g2_12": g2.get(0, 1),
            "populations": state.populations,
            "branch_frequencies_thz": basis.frequencies(),
            "expected": {
                "g2_11": reference.expected_g2_11,
                "g2_22": reference.expected_g2_22,
                "g2_12": reference.expected_g2_12,
                "tolerance": reference.tolerance,
            },
            "pass": all_pass,
        });
        ctx.write_json("g2_summary.json", &summary)?;
        if !all_pass {
            bail!("g2 reference check failed");
        }
    }
    Ok(())
}

pub fn cmd_fit(ctx: &Ctx) -> Result<()> {
    let system = ctx.config.build_system()?;
    let section = ctx
        .config
        .fit
        .as_ref()
        .context("config is missing the `fit` section")?;
    let path = ctx.resolve(&section.peaks_csv);
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading peak table {}", path.display()))?;
    let table = PeakTable::from_csv(&text)?;
    let n = system.n_phonons();
    let settings = FitSettings {
        free_nu: section.free_nu.clone(),
        free_omega: if section.free_omega.is_empty() {
            vec![false; n]
        } else {
            section.free_omega.clone()
        },
    };
    let result = fit_plasma_frequencies(&table, &system, &settings)?;
    let fom_bare = if n >= 2 {
        Some(figure_of_merit(&result, None)?)
    } else {
        None
    };

    let summary = json!({
        "nu_thz": result.nu,
        "nu_stderr_thz": result.nu_stderr,
        "omega_thz": result.omega,
        "omega_stderr_thz": result.omega_stderr,
        "residuals": result.residuals,
        "residual_norm": result.residual_norm,
        "degrees_of_freedom": result.degrees_of_freedom,
        "converged": result.converged,
        "coupling_ratios": {
            "convention_bare_resonance": result.ratios.bare,
            "convention_blueshifted_resonance": result.ratios.blueshifted,
        },
        "figure_of_merit_bare": fom_bare,
        "rows": table.rows.len(),
    });
    ctx.write_json("fit.json", &summary)?;
    ctx.say(&format!(
        "fitted nu = [{}] THz, residual norm {}",
        result
            .nu
            .iter()
            .map(|v| fmt_sig12(*v))
            .collect::<Vec<_>>()
            .join(", "),
        fmt_sig12(result.residual_norm)
    ));
    if let Some(fom) = fom_bare {
        ctx.say(&format!("figure of merit g1 g2/(w1 w2) = {}", fmt_sig12(fom)));
    }
    Ok(())
}

pub fn cmd_peaks(ctx: &Ctx) -> Result<()> {
    let section = ctx
        .config
        .spectrum
        .as_ref()
        .context("config is missing the `spectrum` section")?;
    let inputs = ctx.config.inputs.as_ref();
    let spec = if let Some(t_path) = inputs.and_then(|i| i.transmission_csv.as_ref()) {
        io::read_spectrum(&ctx.resolve(t_path), SpectrumKind::Transmission)?
    } else {
        let sample = inputs
            .and_then(|i| i.sample_csv.as_ref())
            .context("peaks needs `inputs.transmission_csv` or sample+reference traces")?;
        let reference = inputs
            .and_then(|i| i.reference_csv.as_ref())
            .context("peaks needs `inputs.reference_csv` next to `inputs.sample_csv`")?;
        let sample = io::read_time_trace(&ctx.resolve(sample), "sample")?;
        let reference = io::read_time_trace(&ctx.resolve(reference), "reference")?;
        transmission(&sample, &reference)?
    };
    let fit = extract_peaks(&spec, section.max_peaks, section.window_thz)?;
    ctx.write_text("peaks.csv", &io::peaks_csv(&fit))?;
    let summary = json!({
        "peaks": fit.peaks.iter().map(|p| json!({
            "center_thz": p.center,
            "fwhm_thz": p.fwhm,
            "amplitude": p.amplitude,
        })).collect::<Vec<_>>(),
        "baseline": fit.baseline,
        "converged": fit.converged,
        "condition": fit.condition,
        "ill_conditioned": fit.ill_conditioned,
        "residual_norm": fit.peaks.first().map(|p| p.residual_norm),
    });
    ctx.write_json("peaks.json", &summary)?;
    for p in &fit.peaks {
        ctx.say(&format!(
            "peak at {} THz, FWHM {} THz",
            fmt_sig12(p.center),
            fmt_sig12(p.fwhm)
        ));
    }
    Ok(())
}

pub fn cmd_tinkham(ctx: &Ctx) -> Result<()> {
    let section = ctx
        .config
        .tinkham
        .as_ref()
        .context("config is missing the `tinkham` section")?;
    let t_path = ctx
        .config
        .inputs
        .as_ref()
        .and_then(|i| i.transmission_csv.as_ref())
        .context("tinkham needs `inputs.transmission_csv`")?;
    let t = io::read_spectrum(&ctx.resolve(t_path), SpectrumKind::Transmission)?;
    let sigma = tinkham_conductivity(&t, section.n_sub, section.thickness_m)?;
    io::write_spectrum(&ctx.out.join("conductivity.csv"), &sigma)?;
    ctx.say(&format!(
        "wrote {} ({} bins)",
        ctx.out.join("conductivity.csv").display(),
        sigma.len()
    ));
    let eps = dielectric_function(&sigma, section.eps_inf)?;
    if eps.len() != sigma.len() {
        ctx.say(&format!(
            "dropped {} nonpositive-frequency bins from the dielectric function",
            sigma.len() - eps.len()
        ));
    }
    io::write_spectrum(&ctx.out.join("dielectric.csv"), &eps)?;
    ctx.say(&format!(
        "wrote {}",
        ctx.out.join("dielectric.csv").display()
    ));
    Ok(())
}

pub fn cmd_oracle(ctx: &Ctx) -> Result<()> {
    let system = ctx.config.build_system()?;
    let section = ctx
        .config
        .oracle
        .as_ref()
        .context("config is missing the `oracle` section")?;

    // replace oscillator strengths so the truncated basis is converged
    let phonons: Vec<PhononMode<f64>> = system
        .phonons()
        .iter()
        .map(|p| {
            PhononMode::new(p.label.clone(), p.omega, section.nu_over_omega * p.omega)
                .expect("valid mode")
        })
        .collect();
    let omega_c = section
        .omega_c_thz
        .unwrap_or_else(|| system.phonons()[0].omega);
    let reduced = polaritonics::model::HybridSystem::new(
        CavityMode::new(omega_c)?,
        phonons,
        system.temperature_k(),
    )?;

    let n_modes = reduced.n_phonons() + 1;
    let cfg = FockConfig::uniform(n_modes, section.cutoff);
    let spectrum = exact_spectrum(&reduced, &cfg, section.levels)?;
    let basis = diagonalize(&build_minimal_coupling(&reduced))?;

    let mut freq_rows = Vec::new();
    let mut max_freq_delta = 0.0f64;
    for (branch, freq) in basis.branches.iter().zip(basis.frequencies()) {
        let (best, delta) = spectrum
            .excitations
            .iter()
            .map(|e| (*e, (e - freq).abs() / freq))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap_or((f64::NAN, f64::INFINITY));
        max_freq_delta = max_freq_delta.max(delta);
        freq_rows.push(json!({
            "branch": branch.label,
            "hopfield_thz": freq,
            "fock_thz": best,
            "relative_delta": delta,
        }));
    }

    let fock = exact_ground_correlators(&reduced, &cfg)?;
    let state = ThermalState::new(&basis, 0.0)?;
    let analytic = correlators(&basis, &state)?;
    let n = reduced.n_phonons();
    let mut max_corr_delta = 0.0f64;
    let mut corr_rows = Vec::new();
    for l in 0..n {
        for m in 0..n {
            let dn = (fock.normal[(l, m)] - analytic.normal[(l, m)]).norm();
            let da = (fock.anomalous[(l, m)] - analytic.anomalous[(l, m)]).norm();
            max_corr_delta = max_corr_delta.max(dn).max(da);
            corr_rows.push(json!({
                "pair": [l, m],
                "normal_fock": {"re": fock.normal[(l, m)].re, "im": fock.normal[(l, m)].im},
                "normal_hopfield": {"re": analytic.normal[(l, m)].re, "im": analytic.normal[(l, m)].im},
                "anomalous_fock": {"re": fock.anomalous[(l, m)].re, "im": fock.anomalous[(l, m)].im},
                "anomalous_hopfield": {"re": analytic.anomalous[(l, m)].re, "im": analytic.anomalous[(l, m)].im},
                "delta_normal": dn,
                "delta_anomalous": da,
            }));
        }
    }

    let report = json!({
        "omega_c_thz": omega_c,
        "nu_over_omega": section.nu_over_omega,
        "cutoffs": cfg.cutoffs,
        "basis_size": spectrum.basis_size,
        "excitations_thz": spectrum.excitations,
        "convergence_estimate_thz": spectrum.convergence,
        "frequencies": freq_rows,
        "max_frequency_relative_delta": max_freq_delta,
        "ground_correlators": corr_rows,
        "max_correlator_delta": max_corr_delta,
        "correlator_convergence": fock.convergence,
    });
    ctx.write_json("oracle.json", &report)?;
    println!(
        "oracle max deltas: frequencies {max_freq_delta:.3e} (relative), \
         correlators {max_corr_delta:.3e} (absolute)"
    );
    Ok(())
}

pub fn cmd_synth(ctx: &Ctx) -> Result<()> {
    let system = ctx.config.build_system()?;
    let section = ctx
        .config
        .spectrum
        .as_ref()
        .context("config is missing the `spectrum` section")?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);

    let grid = section.grid_thz.expand()?;
    let mut spec = synthesize_polariton_spectrum(&system, &section.linewidths_thz, &grid)?;
    if section.noise_relative > 0.0 {
        add_spectrum_noise(&mut spec, section.noise_relative, &mut rng);
    }
    io::write_spectrum(&ctx.out.join("transmission_synth.csv"), &spec)?;
    ctx.say(&format!(
        "wrote {}",
        ctx.out.join("transmission_synth.csv").display()
    ));

    // a matching time-domain pair driven through the same polariton response
    let clean = synthesize_polariton_spectrum(&system, &section.linewidths_thz, &grid)?;
    let t_of = move |f: f64| -> num_complex::Complex<f64> {
        // piecewise-constant lookup on the synthesis grid
        match clean
            .freqs_thz
            .binary_search_by(|probe| probe.partial_cmp(&f).unwrap())
        {
            Ok(i) => clean.values[i],
            Err(0) => clean.values[0],
            Err(i) if i >= clean.len() => num_complex::Complex::new(0.0, 0.0),
            Err(i) => clean.values[i - 1],
        }
    };
    let (mut reference, mut sample) = synthesize_trace_pair(&t_of, 4096, 0.05, 40.0, 0.4)?;
    if section.noise_relative > 0.0 {
        add_trace_noise(&mut reference, section.noise_relative, &mut rng);
        add_trace_noise(&mut sample, section.noise_relative, &mut rng);
    }
    io::write_time_trace(&ctx.out.join("trace_reference.csv"), &reference)?;
    io::write_time_trace(&ctx.out.join("trace_sample.csv"), &sample)?;
    ctx.say(&format!(
        "wrote {} and {}",
        ctx.out.join("trace_reference.csv").display(),
        ctx.out.join("trace_sample.csv").display()
    ));

    if let Ok(grid) = ctx.config.omega_c_grid() {
        let table = synthetic_peak_table(&system, &grid, section.noise_relative, &mut rng)?;
        ctx.write_text("peak_table_synth.csv", &table.to_csv())?;
    }
    Ok(())
}
