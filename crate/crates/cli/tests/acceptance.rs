//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI, TAU};
use std::process::Command;
use std::time::Instant;

use idlertomo_cli::verify::{overcoherent_min_eigenvalue, random_config, run_verify};
use idlertomo_cli::SweepRow;
use idlertomo_core::acquisition::{derive_seed, PhotonRng};
use idlertomo_core::interferometer::{idler_reduced_state, post_interaction_idler};
use idlertomo_core::qcore::{eigenvalues_hermitian, fidelity_mixed, is_positive_semidefinite, ComplexMatrix, DensityMatrix, PSD_TOL};
use idlertomo_core::states::phase_difference;
use idlertomo_core::{
    fit_sinusoid, mle_reconstruct, report_fidelity, run_calibration, run_scan, IdlerStateParams, InterferometerConfig,
    ScanPlan, ScanRecord, SignalSetting, SourceQ2Params, C64,
};
use rayon::prelude::*;

const NOISELESS_N: u64 = 1_000_000_000;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_idlertomo"))
}

fn run_bin(args: &[&str]) -> Result<String, String> {
    let out = bin().args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn scan_pair(cfg: &InterferometerConfig, n: u64, seed: u64, noiseless: bool) -> (ScanRecord, ScanRecord) {
    let h = run_scan(cfg, &ScanPlan::uniform(20, n, SignalSetting::H, seed, noiseless).unwrap());
    let v = run_scan(cfg, &ScanPlan::uniform(20, n, SignalSetting::V, seed, noiseless).unwrap());
    (h, v)
}

fn visibility(r: &ScanRecord) -> f64 {
    let ys: Vec<f64> = r.counts_primary().iter().map(|&k| k as f64).collect();
    fit_sinusoid(r.phases(), &ys).unwrap().visibility
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let report = match run_verify(2024, 1000) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let secs = start.elapsed().as_secs_f64();
    let rates = &report.checks[0];
    outcome(
        rates.passed && secs < 10.0,
        format!("max |closed - exact| = {:.2e} over 1000 configs x 8 phases x 2 settings, {secs:.2} s", rates.value),
    )
}

fn visibility_law() -> Outcome {
    let mut grid = Vec::new();
    for i in 1..=9 {
        for j in 1..=5 {
            for k in 1..=5 {
                grid.push((i as f64 / 10.0, j as f64 / 5.0, k as f64 / 5.0));
            }
        }
    }
    let worst = grid
        .par_iter()
        .map(|&(p_h, purity, t)| {
            let idler = IdlerStateParams::new(p_h, 0.9, purity).unwrap();
            let cfg = InterferometerConfig::balanced(idler, t, t).unwrap();
            let (h, v) = scan_pair(&cfg, NOISELESS_N, 0, true);
            let dh = (visibility(&h) - t * p_h.sqrt()).abs();
            let dv = (visibility(&v) - purity * t * (1.0 - p_h).sqrt()).abs();
            dh.max(dv)
        })
        .reduce(|| 0.0, f64::max);
    outcome(worst <= 1e-6, format!("max visibility error {worst:.2e} over 225 noiseless scans"))
}

fn calibration() -> Outcome {
    let noiseless = run_bin(&[
        "calibrate", "--t-h", "0.85", "--t-v", "0.73", "--noiseless", "--n", "1000000000", "--seed", "1", "--format",
        "json",
    ]);
    let (t_h, t_v) = match noiseless.map(|s| serde_json::from_str::<serde_json::Value>(&s)) {
        Ok(Ok(v)) => (v["t_h"].as_f64().unwrap_or(f64::NAN), v["t_v"].as_f64().unwrap_or(f64::NAN)),
        Ok(Err(e)) => return outcome(false, e.to_string()),
        Err(e) => return outcome(false, e),
    };
    let exact_ok = (t_h - 0.85).abs() <= 1e-6 && (t_v - 0.73).abs() <= 1e-6;

    let cfg = InterferometerConfig::balanced(IdlerStateParams::horizontal(), 0.85, 0.73).unwrap();
    let trials = 200u64;
    let covered = (0..trials)
        .into_par_iter()
        .filter(|&t| {
            let plan = ScanPlan::uniform(20, 1000, SignalSetting::H, derive_seed(1729, t), false).unwrap();
            let (cal, _, _) = run_calibration(&cfg, &plan).unwrap();
            (cal.t_h - 0.85).abs() <= 3.0 * cal.t_h_stderr && (cal.t_v - 0.73).abs() <= 3.0 * cal.t_v_stderr
        })
        .count();
    outcome(
        exact_ok && covered as f64 >= 0.95 * trials as f64,
        format!("noiseless ({t_h:.9}, {t_v:.9}); noisy coverage {covered}/{trials} within 3 sigma"),
    )
}

fn round_trip() -> Outcome {
    let mut states = Vec::new();
    for i in 1..=9 {
        for j in 0..8 {
            for k in 1..=5 {
                states.push((i as f64 / 10.0, TAU * j as f64 / 8.0, k as f64 / 5.0));
            }
        }
    }
    let results: Vec<(f64, f64, bool)> = states
        .par_iter()
        .map(|&(p_h, xi, purity)| {
            let truth = IdlerStateParams::new(p_h, xi, purity).unwrap();
            let cfg = InterferometerConfig::balanced(truth, 1.0, 1.0).unwrap();
            let (h, v) = scan_pair(&cfg, NOISELESS_N, 0, true);
            let mut r = match mle_reconstruct(&h, &v, 1.0, 1.0, None) {
                Ok(r) => r,
                Err(_) => return (f64::INFINITY, 0.0, false),
            };
            let f = report_fidelity(&mut r, &truth).unwrap();
            let err = (r.params.p_h() - p_h)
                .abs()
                .max(phase_difference(r.params.xi(), xi).abs())
                .max((r.params.purity() - purity).abs());
            (err, f, true)
        })
        .collect();
    let worst = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let min_f = results.iter().map(|r| r.1).fold(1.0, f64::min);
    let all_ok = results.iter().all(|r| r.2);
    outcome(
        all_ok && worst <= 1e-4 && min_f >= 0.999,
        format!("{} states: max parameter error {worst:.2e}, min fidelity {min_f:.8}", states.len()),
    )
}

fn degeneracy() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for (name, a, b) in [("D/A", 0.0, PI), ("R/L", FRAC_PI_2, 3.0 * FRAC_PI_2)] {
        let recon = |xi: f64| {
            let truth = IdlerStateParams::pure(0.5, xi).unwrap();
            let cfg = InterferometerConfig::balanced(truth, 1.0, 1.0).unwrap();
            let (h, v) = scan_pair(&cfg, NOISELESS_N, 0, true);
            let r = mle_reconstruct(&h, &v, 1.0, 1.0, None).unwrap();
            (visibility(&h), visibility(&v), r.params.xi())
        };
        let (ha, va, xa) = recon(a);
        let (hb, vb, xb) = recon(b);
        let dv = (ha - hb).abs().max((va - vb).abs());
        let dxi = (phase_difference(xa, xb).abs() - PI).abs();
        ok &= dv <= 1e-6 && dxi <= 1e-3;
        details.push(format!("{name}: visibility gap {dv:.1e}, |xi gap - pi| {dxi:.1e}"));
    }
    outcome(ok, details.join("; "))
}

fn sweep_rows(args: &[&str]) -> Result<Vec<SweepRow>, String> {
    let mut full = vec!["sweep", "--noiseless", "--n", "1000000000", "--seed", "3", "--format", "json"];
    full.extend_from_slice(args);
    let text = run_bin(&full)?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn sweep_curves() -> Outcome {
    let angles = "0,5,10,15,20,22.5,25,30,35,40,45";
    let check = || -> Result<(f64, f64, f64, f64), String> {
        let unit = sweep_rows(&["--plate", "hwp", "--angles", angles])?;
        let mut err_unit: f64 = 0.0;
        let mut min_f: f64 = 1.0;
        for r in &unit {
            let a = r.angle_deg.to_radians();
            err_unit = err_unit.max((r.v_h - (2.0 * a).cos().abs()).abs()).max((r.v_v - (2.0 * a).sin().abs()).abs());
            min_f = min_f.min(r.fidelity);
        }
        let qwp = sweep_rows(&["--plate", "qwp", "--angles", "45"])?;
        let err_qwp = (qwp[0].v_h - FRAC_1_SQRT_2).abs().max((qwp[0].v_v - FRAC_1_SQRT_2).abs());
        min_f = min_f.min(qwp[0].fidelity);
        let scaled = sweep_rows(&["--plate", "hwp", "--angles", angles, "--t-h", "0.85", "--t-v", "0.73"])?;
        let mut err_scaled: f64 = 0.0;
        for r in &scaled {
            let a = r.angle_deg.to_radians();
            err_scaled = err_scaled
                .max((r.v_h - 0.85 * (2.0 * a).cos().abs()).abs())
                .max((r.v_v - 0.73 * (2.0 * a).sin().abs()).abs())
                .max((r.v_h - r.v_h_theory).abs())
                .max((r.v_v - r.v_v_theory).abs());
            min_f = min_f.min(r.fidelity);
        }
        Ok((err_unit, err_qwp, err_scaled, min_f))
    };
    match check() {
        Ok((u, q, s, f)) => outcome(
            u <= 1e-6 && q <= 1e-6 && s <= 1e-6 && f >= 0.999,
            format!("|T|=1 HWP error {u:.1e}; QWP 45 deg error {q:.1e}; scaled error {s:.1e}; min fidelity {f:.8}"),
        ),
        Err(e) => outcome(false, e),
    }
}

fn post_interaction() -> Outcome {
    let mut rng = PhotonRng::new(19, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let idler = IdlerStateParams::pure(rng.uniform(), TAU * rng.uniform()).unwrap();
        let q2 = SourceQ2Params::new(0.5, TAU * rng.uniform()).unwrap();
        let one = C64::new(1.0, 0.0);
        let cfg = InterferometerConfig::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2, one, one, idler, q2)
            .unwrap()
            .with_phi(TAU * rng.uniform());
        // Exact evolution, idler modes after the second source.
        let full = idler_reduced_state(&cfg).unwrap();
        let block = ComplexMatrix::from_fn(2, 2, |i, j| full[(2 + i, 2 + j)]);
        let exact = DensityMatrix::new(block, vec!["H".into(), "V".into()]).unwrap();
        let ev = eigenvalues_hermitian(exact.matrix()).unwrap();
        let f = fidelity_mixed(&exact, &idler.state_vector()).unwrap();
        let formula = post_interaction_idler(&cfg).unwrap();
        worst = worst
            .max((ev[0] - 0.25).abs())
            .max((ev[1] - 0.75).abs())
            .max((f - 0.75).abs())
            .max(formula.matrix().max_abs_diff(exact.matrix()));
    }
    outcome(worst <= 1e-12, format!("max deviation {worst:.2e} over 100 pure idler states"))
}

fn psd_boundary() -> Outcome {
    let mut rng = PhotonRng::new(8, 0);
    let mut all_psd = true;
    for _ in 0..300 {
        let cfg = random_config(&mut rng);
        for purity in [0.0, 0.5, 1.0] {
            let idler = IdlerStateParams::new(cfg.idler().p_h(), cfg.idler().xi(), purity).unwrap();
            let m = idlertomo_core::interferometer::total_state_matrix(&cfg.clone().with_idler(idler));
            all_psd &= is_positive_semidefinite(&m, PSD_TOL);
        }
    }
    let min_eig = overcoherent_min_eigenvalue().unwrap();
    outcome(
        all_psd && min_eig <= -1e-4,
        format!("900 boundary states positive: {all_psd}; coherence 1.2 min eigenvalue {min_eig:.4e}"),
    )
}

fn noise_scaling() -> Outcome {
    let truth = IdlerStateParams::new(0.4, 1.0, 0.8).unwrap();
    let cfg = InterferometerConfig::balanced(truth, 1.0, 1.0).unwrap();
    let rms = |n: u64| -> [f64; 3] {
        let trials = 100u64;
        let sq: Vec<[f64; 3]> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let (h, v) = scan_pair(&cfg, n, derive_seed(n ^ 0x5eed, t), false);
                let r = mle_reconstruct(&h, &v, 1.0, 1.0, None).unwrap();
                [
                    (r.params.p_h() - truth.p_h()).powi(2),
                    phase_difference(r.params.xi(), truth.xi()).powi(2),
                    (r.params.purity() - truth.purity()).powi(2),
                ]
            })
            .collect();
        std::array::from_fn(|i| (sq.iter().map(|e| e[i]).sum::<f64>() / trials as f64).sqrt())
    };
    let r: Vec<[f64; 3]> = [100, 1000, 10_000].into_iter().map(rms).collect();
    let ok = (0..3).all(|p| r[0][p] > r[1][p] && r[1][p] > r[2][p]);
    let fmt = |i: usize| format!("({:.2e}, {:.2e}, {:.2e})", r[i][0], r[i][1], r[i][2]);
    outcome(ok, format!("RMS (P_H, xi, I): n=100 {}, n=1000 {}, n=10000 {}", fmt(0), fmt(1), fmt(2)))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("oracle equivalence", oracle_equivalence),
        ("visibility law", visibility_law),
        ("calibration reproduction", calibration),
        ("round-trip tomography", round_trip),
        ("degeneracy disambiguation", degeneracy),
        ("waveplate sweep curves", sweep_curves),
        ("post-interaction state", post_interaction),
        ("positivity boundary", psd_boundary),
        ("noise scaling", noise_scaling),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = std::panic::catch_unwind(check).unwrap_or_else(|_| outcome(false, "panicked"));
        if !o.passed {
            failures += 1;
        }
        println!("{} {}. {name}: {}", if o.passed { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    if failures > 0 {
        eprintln!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
