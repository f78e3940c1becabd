//! From fringe data to the idler density matrix.
//!
//! Two estimators share the balanced rate model
//!
//! ```text
//! R_H(phi) = (1 + t_h sqrt(P_H) cos(phi)) / 3
//! R_V(phi) = (1 + I t_v sqrt(P_V) cos(phi - xi)) / 3
//! ```
//!
//! (H-setting D1 and V-setting D2, `theta = 0`):
//!
//! * fringe extraction reads `P_H`, `I` and `xi` off the fitted visibilities
//!   and fringe phases;
//! * the least-squares estimator minimizes the squared count residuals over
//!   `(P_H, xi, I)` with a box-constrained Nelder-Mead search.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::acquisition::ScanRecord;
use crate::error::{Error, Result};
use crate::interferometer::SignalSetting;
use crate::optimize::{nelder_mead, reflect_into, NelderMeadOptions};
use crate::qcore::{fidelity_mixed, fidelity_pure, fidelity_qubit, DensityMatrix, C64};
use crate::states::{wrap_phase, IdlerStateParams};

/// Fitted amplitudes below this fraction of the offset count as zero.
const AMPLITUDE_FLOOR: f64 = 1e-9;
/// Significance threshold, in standard errors.
const SIGNIFICANCE: f64 = 3.0;
/// Smallest allowance above 1 for a calibrated visibility ratio. Keeps
/// count rounding in noiseless scans, whose residual spread can be far below
/// the rounding bias, from tripping the calibration check.
const RATIO_SLACK: f64 = 1e-6;
/// Below this `P_V` the V fringe carries no information on `I` or `xi`.
const P_V_FLOOR: f64 = 1e-9;
/// Below this `I sqrt(P_V)` the fringe phase, and so `xi`, is not identified.
const DEGENERATE_COHERENCE: f64 = 1e-6;

/// `A + B cos(phi + delta)` fitted by linear least squares in
/// `A + C cos(phi) + S sin(phi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinusoidFit {
    pub offset: f64,
    pub amplitude: f64,
    /// `delta` in `[0, 2pi)`.
    pub phase: f64,
    pub visibility: f64,
    pub offset_stderr: f64,
    pub amplitude_stderr: f64,
    /// Infinite when the amplitude vanishes.
    #[serde(with = "nonfinite")]
    pub phase_stderr: f64,
    pub visibility_stderr: f64,
    pub residual_sum_squares: f64,
    pub points: usize,
}

impl SinusoidFit {
    /// Amplitude distinguishable from zero at three standard errors.
    pub fn amplitude_significant(&self) -> bool {
        self.amplitude > AMPLITUDE_FLOOR * self.offset.abs()
            && self.amplitude > SIGNIFICANCE * self.amplitude_stderr
    }
}

/// Infinite standard errors are written as JSON `null`.
mod nonfinite {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

fn invert_3x3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let adj = [
        [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
        [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
        [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
    ];
    let det = m[0][0] * adj[0][0] + m[0][1] * adj[1][0] + m[0][2] * adj[2][0];
    let trace = m[0][0] + m[1][1] + m[2][2];
    if !(det > 1e-12 * trace.powi(3)) {
        return None;
    }
    Some(adj.map(|row| row.map(|x| x / det)))
}

/// Least-squares sinusoid through `(phases, values)`.
///
/// Standard errors are `s^2 (X^T X)^-1` with `s^2 = RSS / (N - 3)`,
/// propagated to amplitude, phase and visibility to first order.
pub fn fit_sinusoid(phases: &[f64], values: &[f64]) -> Result<SinusoidFit> {
    if phases.len() != values.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} phases but {} values",
            phases.len(),
            values.len()
        )));
    }
    let n = phases.len();
    if n < 5 {
        return Err(Error::DegenerateFit(format!("need at least 5 points, got {n}")));
    }
    let (lo, hi) = phases
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| (lo.min(p), hi.max(p)));
    if hi - lo < PI {
        return Err(Error::DegenerateFit(format!(
            "phases span {:.4} rad, less than half a period",
            hi - lo
        )));
    }

    let mut normal = [[0.0; 3]; 3];
    let mut rhs = [0.0; 3];
    for (&phi, &y) in phases.iter().zip(values) {
        let row = [1.0, phi.cos(), phi.sin()];
        for i in 0..3 {
            rhs[i] += row[i] * y;
            for j in 0..3 {
                normal[i][j] += row[i] * row[j];
            }
        }
    }
    let inv = invert_3x3(&normal)
        .ok_or_else(|| Error::DegenerateFit("singular normal equations for this phase grid".into()))?;
    let beta: [f64; 3] = std::array::from_fn(|i| (0..3).map(|j| inv[i][j] * rhs[j]).sum());
    let [a, cc, ss] = beta;

    let rss: f64 = phases
        .iter()
        .zip(values)
        .map(|(&phi, &y)| (y - a - cc * phi.cos() - ss * phi.sin()).powi(2))
        .sum();
    let s2 = rss / (n - 3) as f64;
    let cov = inv.map(|row| row.map(|x| x * s2));
    let propagate = |g: [f64; 3]| -> f64 {
        let mut v = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                v += g[i] * cov[i][j] * g[j];
            }
        }
        v.max(0.0).sqrt()
    };

    let b = cc.hypot(ss);
    if !(a > 0.0) {
        return Err(Error::DegenerateFit(format!("fitted offset {a} is not positive")));
    }
    let vanishing = b <= AMPLITUDE_FLOOR * a;
    let (amplitude_stderr, phase_stderr, visibility_stderr) = if vanishing {
        let sb = cov[1][1].max(cov[2][2]).max(0.0).sqrt();
        (sb, f64::INFINITY, sb / a)
    } else {
        (
            propagate([0.0, cc / b, ss / b]),
            propagate([0.0, ss / (b * b), -cc / (b * b)]),
            propagate([-b / (a * a), cc / (a * b), ss / (a * b)]),
        )
    };
    Ok(SinusoidFit {
        offset: a,
        amplitude: b,
        phase: if vanishing { 0.0 } else { wrap_phase((-ss).atan2(cc)) },
        visibility: b / a,
        offset_stderr: cov[0][0].max(0.0).sqrt(),
        amplitude_stderr,
        phase_stderr,
        visibility_stderr,
        residual_sum_squares: rss,
        points: n,
    })
}

/// [`fit_sinusoid`] on integer counts.
pub fn fit_sinusoid_counts(phases: &[f64], counts: &[u64]) -> Result<SinusoidFit> {
    let values: Vec<f64> = counts.iter().map(|&k| k as f64).collect();
    fit_sinusoid(phases, &values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconstructionMethod {
    FringeExtraction,
    Mle,
}

/// Conditions met while estimating. Clamping happens when noise pushes an
/// estimate past a physical bound; "undefined" marks a parameter the data do
/// not constrain, reported at its conventional value (`I = 1`, `xi = 0`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconstructionFlags {
    pub p_h_clamped: bool,
    pub purity_clamped: bool,
    pub purity_undefined: bool,
    pub xi_undefined: bool,
}

/// First-order standard errors of the extracted parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterStderr {
    pub p_h: f64,
    #[serde(with = "nonfinite")]
    pub xi: f64,
    #[serde(with = "nonfinite")]
    pub purity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    pub params: IdlerStateParams,
    pub rho: DensityMatrix,
    /// Squared count residual of the balanced model at `params`.
    pub cost: f64,
    pub fidelity_vs_reference: Option<f64>,
    pub method: ReconstructionMethod,
    pub flags: ReconstructionFlags,
    pub stderr: Option<ParameterStderr>,
    pub fit_h: Option<SinusoidFit>,
    pub fit_v: Option<SinusoidFit>,
    /// Cost evaluations used by the optimizer.
    pub evaluations: Option<usize>,
}

impl ReconstructionResult {
    fn assemble(
        params: IdlerStateParams,
        cost: f64,
        method: ReconstructionMethod,
        flags: ReconstructionFlags,
    ) -> Self {
        let rho = params.to_density_matrix();
        debug_assert!(rho.purity() <= 1.0 + 1e-12);
        ReconstructionResult {
            params,
            rho,
            cost,
            fidelity_vs_reference: None,
            method,
            flags,
            stderr: None,
            fit_h: None,
            fit_v: None,
            evaluations: None,
        }
    }

    /// `sqrt(P_H)|H> + e^{i xi} sqrt(P_V)|V>` from the recovered populations
    /// and phase, ignoring the recovered purity.
    pub fn pure_part(&self) -> [C64; 2] {
        IdlerStateParams::pure(self.params.p_h(), self.params.xi())
            .expect("recovered parameters are in range")
            .state_vector()
    }

    /// Fidelity of the pure part with a pure reference.
    pub fn pure_part_fidelity(&self, reference: &IdlerStateParams) -> Result<f64> {
        fidelity_pure(&reference.state_vector(), &self.pure_part())
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check_inputs(data_h: &ScanRecord, data_v: &ScanRecord, t_h: f64, t_v: f64) -> Result<()> {
    if data_h.setting() != SignalSetting::H {
        return Err(Error::InvalidParameter("first scan must use the H signal setting".into()));
    }
    if data_v.setting() != SignalSetting::V {
        return Err(Error::InvalidParameter("second scan must use the V signal setting".into()));
    }
    for (name, t) in [("t_h", t_h), ("t_v", t_v)] {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::InvalidParameter(format!("{name} = {t} must lie in (0, 1]")));
        }
    }
    Ok(())
}

fn balanced_rates(phi: f64, p_h: f64, xi: f64, purity: f64, t_h: f64, t_v: f64) -> (f64, f64) {
    let r_h = (1.0 + t_h * p_h.sqrt() * phi.cos()) / 3.0;
    let r_v = (1.0 + purity * t_v * (1.0 - p_h).max(0.0).sqrt() * (phi - xi).cos()) / 3.0;
    (r_h, r_v)
}

fn cost_raw(data_h: &ScanRecord, data_v: &ScanRecord, p_h: f64, xi: f64, purity: f64, t_h: f64, t_v: f64) -> f64 {
    let n_h = data_h.counts_per_point() as f64;
    let n_v = data_v.counts_per_point() as f64;
    let h: f64 = data_h
        .phases()
        .iter()
        .zip(data_h.counts_primary())
        .map(|(&phi, &k)| (n_h * balanced_rates(phi, p_h, xi, purity, t_h, t_v).0 - k as f64).powi(2))
        .sum();
    let v: f64 = data_v
        .phases()
        .iter()
        .zip(data_v.counts_primary())
        .map(|(&phi, &k)| (n_v * balanced_rates(phi, p_h, xi, purity, t_h, t_v).1 - k as f64).powi(2))
        .sum();
    h + v
}

/// `sum_k (n R_H(phi_k) - h_k)^2 + sum_k (n R_V(phi_k) - v_k)^2` with each
/// scan's own `n`.
pub fn mle_cost(
    data_h: &ScanRecord,
    data_v: &ScanRecord,
    candidate: &IdlerStateParams,
    t_h: f64,
    t_v: f64,
) -> f64 {
    cost_raw(data_h, data_v, candidate.p_h(), candidate.xi(), candidate.purity(), t_h, t_v)
}

/// Reads `(P_H, xi, I)` off the fitted fringes:
/// `P_H = (V_H / t_h)^2`, `I = (V_V / t_v) / sqrt(P_V)`, `xi = delta_H - delta_V`.
pub fn extract_parameters(
    scan_h: &ScanRecord,
    scan_v: &ScanRecord,
    t_h: f64,
    t_v: f64,
) -> Result<ReconstructionResult> {
    check_inputs(scan_h, scan_v, t_h, t_v)?;
    let fit_h = fit_sinusoid_counts(scan_h.phases(), scan_h.counts_primary())?;
    let fit_v = fit_sinusoid_counts(scan_v.phases(), scan_v.counts_primary())?;
    let mut flags = ReconstructionFlags::default();

    let ratio_h = fit_h.visibility / t_h;
    let ratio_h_err = fit_h.visibility_stderr / t_h;
    if ratio_h > 1.0 + (SIGNIFICANCE * ratio_h_err).max(RATIO_SLACK) {
        return Err(Error::Calibration(format!(
            "H visibility {:.6} exceeds t_h = {t_h} by more than three standard errors",
            fit_h.visibility
        )));
    }
    let mut p_h = ratio_h * ratio_h;
    if p_h > 1.0 {
        p_h = 1.0;
        flags.p_h_clamped = true;
    }
    let p_h_err = 2.0 * ratio_h * ratio_h_err;
    let p_v = 1.0 - p_h;

    let ratio_v = fit_v.visibility / t_v;
    let ratio_v_err = fit_v.visibility_stderr / t_v;
    if ratio_v > 1.0 + (SIGNIFICANCE * ratio_v_err).max(RATIO_SLACK) {
        return Err(Error::Calibration(format!(
            "V visibility {:.6} exceeds t_v = {t_v} by more than three standard errors",
            fit_v.visibility
        )));
    }

    let v_significant = fit_v.amplitude_significant();
    let (purity, purity_err) = if p_v < P_V_FLOOR.max(SIGNIFICANCE * p_h_err) {
        if v_significant {
            return Err(Error::Inconsistent(format!(
                "V fringe of visibility {:.3e} with P_V = {p_v:.3e} indistinguishable from zero",
                fit_v.visibility
            )));
        }
        flags.purity_undefined = true;
        (1.0, f64::INFINITY)
    } else {
        let raw = ratio_v / p_v.sqrt();
        let err = (ratio_v_err.powi(2) / p_v + raw.powi(2) * p_h_err.powi(2) / (4.0 * p_v * p_v)).sqrt();
        if raw > 1.0 {
            flags.purity_clamped = true;
        }
        (raw.min(1.0), err)
    };

    let (xi, xi_err) = if v_significant && !flags.purity_undefined {
        let (delta_h, delta_h_err) = if fit_h.amplitude_significant() {
            (fit_h.phase, fit_h.phase_stderr)
        } else {
            (0.0, 0.0)
        };
        (
            wrap_phase(delta_h - fit_v.phase),
            delta_h_err.hypot(fit_v.phase_stderr),
        )
    } else {
        flags.xi_undefined = true;
        (0.0, f64::INFINITY)
    };

    let params = IdlerStateParams::new(p_h, xi, purity)?;
    let cost = mle_cost(scan_h, scan_v, &params, t_h, t_v);
    let mut result = ReconstructionResult::assemble(params, cost, ReconstructionMethod::FringeExtraction, flags);
    result.stderr = Some(ParameterStderr {
        p_h: p_h_err,
        xi: xi_err,
        purity: purity_err,
    });
    result.fit_h = Some(fit_h);
    result.fit_v = Some(fit_v);
    Ok(result)
}

struct Search {
    x: [f64; 3],
    cost: f64,
    evaluations: usize,
    converged: bool,
}

fn search(data_h: &ScanRecord, data_v: &ScanRecord, t_h: f64, t_v: f64, start: [f64; 3], steps: [f64; 3]) -> Search {
    let project = |x: &mut [f64]| {
        x[0] = reflect_into(x[0], 0.0, 1.0);
        x[2] = reflect_into(x[2], 0.0, 1.0);
    };
    let out = nelder_mead(
        |x| cost_raw(data_h, data_v, x[0], x[1], x[2], t_h, t_v),
        project,
        &start,
        &steps,
        &NelderMeadOptions::default(),
    );
    Search {
        x: [out.x[0], out.x[1], out.x[2]],
        cost: out.value,
        evaluations: out.evaluations,
        converged: out.converged,
    }
}

fn on_degenerate_manifold(x: &[f64; 3]) -> bool {
    x[2] * (1.0 - x[0]).max(0.0).sqrt() < DEGENERATE_COHERENCE
}

/// Least-squares reconstruction over `(P_H, xi, I)` in
/// `[0, 1] x R x [0, 1]`, started from `init` or from fringe extraction.
///
/// The search is restarted once from the best point with a fresh simplex to
/// confirm the optimum, with larger steps if it ended where `xi` is not
/// identified (`I sqrt(P_V)` near zero).
pub fn mle_reconstruct(
    data_h: &ScanRecord,
    data_v: &ScanRecord,
    t_h: f64,
    t_v: f64,
    init: Option<IdlerStateParams>,
) -> Result<ReconstructionResult> {
    check_inputs(data_h, data_v, t_h, t_v)?;
    let extracted = extract_parameters(data_h, data_v, t_h, t_v).ok();
    let start = init
        .or_else(|| extracted.as_ref().map(|r| r.params))
        .unwrap_or_else(|| IdlerStateParams::new(0.5, 0.0, 0.5).expect("in range"));

    let first = search(
        data_h,
        data_v,
        t_h,
        t_v,
        [start.p_h(), start.xi(), start.purity()],
        [0.1, 0.3, 0.1],
    );
    let restart_steps = if on_degenerate_manifold(&first.x) {
        [0.2, FRAC_PI_2, 0.2]
    } else {
        [0.05, 0.1, 0.05]
    };
    let second = search(data_h, data_v, t_h, t_v, first.x, restart_steps);
    let evaluations = first.evaluations + second.evaluations;
    let best = if second.cost <= first.cost { &second } else { &first };
    let converged = second.converged || (first.converged && best.cost == first.cost);

    let params = IdlerStateParams::new(best.x[0], best.x[1], best.x[2])?;
    if !converged {
        return Err(Error::NotConverged {
            evaluations,
            cost: best.cost,
            best: params,
        });
    }
    let flags = ReconstructionFlags {
        purity_undefined: params.p_v() < P_V_FLOOR,
        xi_undefined: on_degenerate_manifold(&best.x),
        ..Default::default()
    };
    let mut result = ReconstructionResult::assemble(params, best.cost, ReconstructionMethod::Mle, flags);
    assert!(
        DensityMatrix::new(result.rho.matrix().clone(), result.rho.basis_labels().to_vec()).is_ok(),
        "parametrized state must be a valid density matrix"
    );
    result.evaluations = Some(evaluations);
    if let Some(ex) = extracted {
        result.fit_h = ex.fit_h;
        result.fit_v = ex.fit_v;
    }
    Ok(result)
}

/// Fidelity of the reconstructed state with `reference`, stored in the
/// result: `<psi|rho|psi>` for a pure reference (`|<psi|phi>|^2` when both are
/// pure), the Uhlmann fidelity otherwise.
pub fn report_fidelity(result: &mut ReconstructionResult, reference: &IdlerStateParams) -> Result<f64> {
    let f = if reference.is_pure() {
        fidelity_mixed(&result.rho, &reference.state_vector())?
    } else {
        fidelity_qubit(&result.rho, &reference.to_density_matrix())?
    };
    result.fidelity_vs_reference = Some(f);
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::{run_scan, ScanPlan};
    use crate::interferometer::InterferometerConfig;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::TAU;

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|k| TAU * k as f64 / n as f64).collect()
    }

    fn scans(truth: IdlerStateParams, t_h: f64, t_v: f64, n: u64) -> (ScanRecord, ScanRecord) {
        let cfg = InterferometerConfig::balanced(truth, t_h, t_v).unwrap();
        let h = run_scan(&cfg, &ScanPlan::uniform(20, n, SignalSetting::H, 1, true).unwrap());
        let v = run_scan(&cfg, &ScanPlan::uniform(20, n, SignalSetting::V, 1, true).unwrap());
        (h, v)
    }

    #[test]
    fn fit_examples() {
        let phases = grid(20);
        let ys: Vec<f64> = phases.iter().map(|p| 10.0 + 5.0 * p.cos()).collect();
        let fit = fit_sinusoid(&phases, &ys).unwrap();
        assert_abs_diff_eq!(fit.offset, 10.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.amplitude, 5.0, epsilon = 1e-9);
        assert!(fit.phase.min(TAU - fit.phase) < 1e-9);

        let flat = vec![7.0; 20];
        let fit = fit_sinusoid(&phases, &flat).unwrap();
        assert!(fit.amplitude < 1e-9);
        assert!(fit.phase_stderr.is_infinite());

        let ys: Vec<f64> = phases.iter().map(|p| 8.0 + 4.0 * (p + 1.3).cos()).collect();
        assert_abs_diff_eq!(fit_sinusoid(&phases, &ys).unwrap().phase, 1.3, epsilon = 1e-9);
    }

    #[test]
    fn fit_rejects_degenerate_grids() {
        let short = [0.0, 0.1, 0.2, 0.3];
        assert!(matches!(fit_sinusoid(&short, &[1.0; 4]), Err(Error::DegenerateFit(_))));
        let narrow = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5];
        assert!(matches!(fit_sinusoid(&narrow, &[1.0; 6]), Err(Error::DegenerateFit(_))));
        // Two distinct phases only: cos and sin columns are collinear with 1.
        let two = [0.0, PI, 0.0 + TAU - 1e-300, PI, PI];
        assert!(fit_sinusoid(&two, &[1.0, 2.0, 1.0, 2.0, 2.0]).is_err());
    }

    #[test]
    fn fit_json_keeps_infinite_stderr() {
        let fit = fit_sinusoid(&grid(10), &[3.0; 10]).unwrap();
        let json = serde_json::to_string(&fit).unwrap();
        assert!(json.contains("\"phase_stderr\":null"));
        let back: SinusoidFit = serde_json::from_str(&json).unwrap();
        assert!(back.phase_stderr.is_infinite());
    }

    #[test]
    fn extraction_edge_state_h() {
        let (h, v) = scans(IdlerStateParams::horizontal(), 1.0, 1.0, 1_000_000_000);
        let r = extract_parameters(&h, &v, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(r.params.p_h(), 1.0, epsilon = 1e-6);
        assert!(r.flags.purity_undefined);
        assert!(r.flags.xi_undefined);
    }

    #[test]
    fn extraction_right_circular() {
        let truth = IdlerStateParams::pure(0.5, FRAC_PI_2).unwrap();
        let (h, v) = scans(truth, 1.0, 1.0, 1_000_000_000);
        let r = extract_parameters(&h, &v, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(r.params.p_h(), 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(r.params.xi(), FRAC_PI_2, epsilon = 1e-6);
        assert_abs_diff_eq!(r.params.purity(), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn extraction_partial_purity() {
        let truth = IdlerStateParams::new(0.5, 0.0, 0.5).unwrap();
        let (h, v) = scans(truth, 0.9, 0.8, 1_000_000_000);
        let r = extract_parameters(&h, &v, 0.9, 0.8).unwrap();
        assert_abs_diff_eq!(r.params.purity(), 0.5, epsilon = 1e-6);
        assert!(!r.flags.purity_clamped);
    }

    #[test]
    fn extraction_detects_bad_calibration() {
        let (h, v) = scans(IdlerStateParams::pure(0.8, 0.3).unwrap(), 1.0, 1.0, 1_000_000);
        assert!(matches!(extract_parameters(&h, &v, 0.5, 1.0), Err(Error::Calibration(_))));
        assert!(extract_parameters(&v, &h, 1.0, 1.0).is_err());
        assert!(extract_parameters(&h, &v, 0.0, 1.0).is_err());
    }

    #[test]
    fn extraction_detects_inconsistent_v_fringe() {
        // H data from |H>, V data from a state with a strong V fringe.
        let (h, _) = scans(IdlerStateParams::horizontal(), 1.0, 1.0, 1_000_000);
        let (_, v) = scans(IdlerStateParams::pure(0.5, 0.0).unwrap(), 1.0, 1.0, 1_000_000);
        assert!(matches!(extract_parameters(&h, &v, 1.0, 1.0), Err(Error::Inconsistent(_))));
    }

    #[test]
    fn cost_properties() {
        let truth = IdlerStateParams::new(0.3, 1.2, 0.9).unwrap();
        let (h, v) = scans(truth, 0.9, 0.8, 1000);
        let at_truth = mle_cost(&h, &v, &truth, 0.9, 0.8);
        assert!(at_truth <= 0.25 * 40.0);
        let off = IdlerStateParams::new(0.4, 1.2, 0.9).unwrap();
        assert!(mle_cost(&h, &v, &off, 0.9, 0.8) > at_truth);
        let shifted = cost_raw(&h, &v, 0.3, 1.2 + TAU, 0.9, 0.9, 0.8);
        assert_abs_diff_eq!(shifted, at_truth, epsilon = 1e-9 * at_truth.max(1.0));
    }

    #[test]
    fn mle_noiseless_round_trip() {
        let truth = IdlerStateParams::new(0.3, 1.2, 0.9).unwrap();
        let (h, v) = scans(truth, 0.9, 0.8, 1_000_000);
        let r = mle_reconstruct(&h, &v, 0.9, 0.8, None).unwrap();
        assert_abs_diff_eq!(r.params.p_h(), 0.3, epsilon = 1e-4);
        assert_abs_diff_eq!(r.params.xi(), 1.2, epsilon = 1e-4);
        assert_abs_diff_eq!(r.params.purity(), 0.9, epsilon = 1e-4);
        assert_eq!(r.method, ReconstructionMethod::Mle);

        // Starting far away reaches the same point.
        let far = IdlerStateParams::new(0.9, 4.0, 0.2).unwrap();
        let r2 = mle_reconstruct(&h, &v, 0.9, 0.8, Some(far)).unwrap();
        assert_abs_diff_eq!(r2.params.p_h(), 0.3, epsilon = 1e-4);
        assert_abs_diff_eq!(r2.params.xi(), 1.2, epsilon = 1e-4);
    }

    #[test]
    fn diagonal_and_antidiagonal_differ_by_pi() {
        let (hd, vd) = scans(IdlerStateParams::pure(0.5, 0.0).unwrap(), 1.0, 1.0, 1_000_000);
        let (ha, va) = scans(IdlerStateParams::pure(0.5, PI).unwrap(), 1.0, 1.0, 1_000_000);
        let d = mle_reconstruct(&hd, &vd, 1.0, 1.0, None).unwrap();
        let a = mle_reconstruct(&ha, &va, 1.0, 1.0, None).unwrap();
        let diff = crate::states::phase_difference(a.params.xi(), d.params.xi());
        assert_abs_diff_eq!(diff.abs(), PI, epsilon = 1e-3);
    }

    #[test]
    fn fidelity_reporting() {
        let d = IdlerStateParams::pure(0.5, 0.0).unwrap();
        let a = IdlerStateParams::pure(0.5, PI).unwrap();
        let mut r = ReconstructionResult::assemble(d, 0.0, ReconstructionMethod::Mle, Default::default());
        assert_abs_diff_eq!(report_fidelity(&mut r, &d).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(report_fidelity(&mut r, &a).unwrap(), 0.0, epsilon = 1e-12);
        assert_eq!(r.fidelity_vs_reference, Some(r.fidelity_vs_reference.unwrap()));

        let mixed = IdlerStateParams::new(0.5, 0.0, 0.0).unwrap();
        let mut m = ReconstructionResult::assemble(mixed, 0.0, ReconstructionMethod::Mle, Default::default());
        assert_abs_diff_eq!(report_fidelity(&mut m, &mixed).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(report_fidelity(&mut m, &d).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn result_json_round_trip() {
        let truth = IdlerStateParams::new(0.3, 1.2, 0.9).unwrap();
        let (h, v) = scans(truth, 0.9, 0.8, 10_000);
        let mut r = extract_parameters(&h, &v, 0.9, 0.8).unwrap();
        report_fidelity(&mut r, &truth).unwrap();
        let json = r.to_json_pretty().unwrap();
        let back: ReconstructionResult = serde_json::from_str(&json).unwrap();
        assert_eq!(back.params, r.params);
        assert_eq!(back.method, ReconstructionMethod::FringeExtraction);
        assert_eq!(back.rho, r.rho);
    }
}
