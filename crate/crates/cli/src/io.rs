//! CSV readers/writers for traces, spectra, and peak records.

use anyhow::{bail, Context, Result};
use num_complex::Complex;
use polaritonics::numeric::fmt_sig12;
use polaritonics::spectra::{ComplexSpectrum, PeakFit, SpectrumKind, TimeTrace};
use std::path::Path;

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// `time_ps,field` rows; `#` lines are comments.
pub fn read_time_trace(path: &Path, label: &str) -> Result<TimeTrace<f64>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut times = Vec::new();
    let mut fields = Vec::new();
    for (i, line) in data_lines(&text, &["time_ps"]) {
        let mut parts = line.split(',');
        let t: f64 = next_field(&mut parts, i, "time_ps")?;
        let e: f64 = next_field(&mut parts, i, "field")?;
        times.push(t);
        fields.push(e);
    }
    if times.len() < 2 {
        bail!("{}: need at least two samples", path.display());
    }
    let dt = times[1] - times[0];
    for w in times.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs() {
            bail!("{}: nonuniform sampling", path.display());
        }
    }
    Ok(TimeTrace::new(label, dt, fields)?)
}

pub fn write_time_trace(path: &Path, trace: &TimeTrace<f64>) -> Result<()> {
    let mut out = String::from("time_ps,field\n");
    for (i, v) in trace.field.iter().enumerate() {
        out.push_str(&format!(
            "{},{}\n",
            fmt_sig12(i as f64 * trace.dt_ps),
            fmt_sig12(*v)
        ));
    }
    write_file(path, &out)
}

/// `freq_thz,re,im` rows.
pub fn read_spectrum(path: &Path, kind: SpectrumKind) -> Result<ComplexSpectrum<f64>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut freqs = Vec::new();
    let mut values = Vec::new();
    for (i, line) in data_lines(&text, &["freq_thz"]) {
        let mut parts = line.split(',');
        freqs.push(next_field(&mut parts, i, "freq_thz")?);
        let re: f64 = next_field(&mut parts, i, "re")?;
        let im: f64 = next_field(&mut parts, i, "im")?;
        values.push(Complex::new(re, im));
    }
    Ok(ComplexSpectrum::new(kind, freqs, values)?)
}

pub fn write_spectrum(path: &Path, spec: &ComplexSpectrum<f64>) -> Result<()> {
    let mut out = String::from("freq_thz,re,im\n");
    for (f, v) in spec.freqs_thz.iter().zip(&spec.values) {
        out.push_str(&format!(
            "{},{},{}\n",
            fmt_sig12(*f),
            fmt_sig12(v.re),
            fmt_sig12(v.im)
        ));
    }
    write_file(path, &out)
}

pub fn peaks_csv(fit: &PeakFit<f64>) -> String {
    let mut out = String::from("center_thz,fwhm_thz,amplitude,residual_norm,branch\n");
    for p in &fit.peaks {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_sig12(p.center),
            fmt_sig12(p.fwhm),
            fmt_sig12(p.amplitude),
            fmt_sig12(p.residual_norm),
            p.branch.as_deref().unwrap_or("")
        ));
    }
    out
}

fn data_lines<'a>(
    text: &'a str,
    header_tokens: &'a [&'a str],
) -> impl Iterator<Item = (usize, &'a str)> + 'a {
    text.lines().enumerate().filter_map(move |(i, raw)| {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            return None;
        }
        if header_tokens.iter().any(|t| line.starts_with(t)) {
            return None;
        }
        Some((i, line))
    })
}

fn next_field<'a>(
    parts: &mut impl Iterator<Item = &'a str>,
    line: usize,
    name: &str,
) -> Result<f64> {
    let raw = parts
        .next()
        .with_context(|| format!("line {}: missing field {name}", line + 1))?;
    raw.trim()
        .parse()
        .with_context(|| format!("line {}: bad {name} value `{raw}`", line + 1))
}
