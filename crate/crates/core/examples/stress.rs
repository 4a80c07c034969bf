//! Numerics stress harness: cross-checks the eigensolver, the secular
//! roots, both representations, and the downstream correlation pipeline
//! over a large random parameter sweep that includes near-degenerate
//! phonon pairs and far-detuned cavities. Not part of the test suite;
//! run with `cargo run --release -p polaritonics --example stress`.
use polaritonics::bogoliubov::{diagonalize, secular_frequencies, weights};
use polaritonics::correlations::{correlators, g2_equal_time, ThermalState};
use polaritonics::model::{build_minimal_coupling, build_pzw, CavityMode, HybridSystem, PhononMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    let mut worst_sec: f64 = 0.0;
    let mut worst_pzw: f64 = 0.0;
    let mut worst_gram: f64 = 0.0;
    let mut worst_wsum: f64 = 0.0;
    let mut g2_violations = 0u32;
    let n_draws = 50_000;
    for draw in 0..n_draws {
        let nasty = draw % 5 == 0;
        let w1: f64 = rng.gen_range(0.1..3.0);
        let gap: f64 = if nasty { rng.gen_range(1e-6..1e-2) } else { rng.gen_range(0.01..2.0) };
        let n_modes = if draw % 7 == 0 { 3 } else { 2 };
        let mut phonons = vec![
            PhononMode::new("A", w1, rng.gen_range(0.0..3.0)).unwrap(),
            PhononMode::new("B", w1 + gap, rng.gen_range(0.0..3.0)).unwrap(),
        ];
        if n_modes == 3 {
            phonons.push(PhononMode::new("C", rng.gen_range(0.1..5.0), rng.gen_range(0.0..2.0)).unwrap());
        }
        let wc: f64 = if nasty { rng.gen_range(1e-3..0.05) } else { rng.gen_range(0.05..5.0) };
        let t: f64 = [0.0, 4.0, 300.0][draw % 3];
        let sys = match HybridSystem::new(CavityMode::new(wc).unwrap(), phonons, t) {
            Ok(s) => s,
            Err(_) => continue,
        };
        let basis = match diagonalize(&build_minimal_coupling(&sys)) {
            Ok(b) => b,
            Err(e) => { println!("draw {draw}: diagonalize failed: {e}"); std::process::exit(1); }
        };
        let sec = match secular_frequencies(&sys) {
            Ok(s) => s,
            Err(e) => { println!("draw {draw}: secular failed: {e} (wc={wc}, sys={sys:?})"); std::process::exit(1); }
        };
        for (a, b) in basis.frequencies().iter().zip(&sec) {
            worst_sec = worst_sec.max((a - b).abs() / b.max(1e-6));
        }
        let pzw = diagonalize(&build_pzw(&sys, true)).unwrap();
        for (a, b) in basis.frequencies().iter().zip(pzw.frequencies().iter()) {
            worst_pzw = worst_pzw.max((a - b).abs() / b.max(1e-6));
        }
        let nb = basis.branches.len();
        for i in 0..nb {
            for j in 0..nb {
                let g = basis.symplectic_gram(i, j);
                let expect = if i == j { 1.0 } else { 0.0 };
                worst_gram = worst_gram.max((g.re - expect).abs().max(g.im.abs()));
            }
        }
        for bw in weights(&basis).branches {
            let s: f64 = bw.phonon.iter().sum::<f64>() + bw.photon;
            worst_wsum = worst_wsum.max((s - 1.0).abs());
        }
        let state = ThermalState::new(&basis, t).unwrap();
        match correlators(&basis, &state).and_then(|c| g2_equal_time(&c)) {
            Ok(_) => {}
            Err(e) => { println!("draw {draw}: g2 failed: {e} (wc={wc:.2e}, T={t})"); g2_violations += 1; }
        }
    }
    println!("draws: {n_draws}");
    println!("worst secular-vs-eigen relative deviation: {worst_sec:.3e}");
    println!("worst PZW-vs-MC relative deviation:        {worst_pzw:.3e}");
    println!("worst symplectic gram defect:              {worst_gram:.3e}");
    println!("worst weight-sum defect:                   {worst_wsum:.3e}");
    println!("g2 evaluation failures:                    {g2_violations}");
}
