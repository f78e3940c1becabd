use idlertomo_core::acquisition::derive_seed;
use idlertomo_core::interferometer::visibilities_closed_form;
use idlertomo_core::states::prepared_idler_params;
use idlertomo_core::{
    extract_parameters, mle_reconstruct, report_fidelity, run_calibration, run_scan, Calibration,
    InterferometerConfig, ReconstructionResult, Result, ScanPlan, SignalSetting, WaveplateKind, WaveplateSetting,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::MethodArg;

/// Columns of `sweep.csv`, in order.
pub const SWEEP_HEADER: [&str; 9] =
    ["angle_deg", "v_h", "v_v", "p_h", "xi", "purity", "fidelity", "v_h_theory", "v_v_theory"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub angle_deg: f64,
    pub v_h: f64,
    pub v_v: f64,
    pub p_h: f64,
    pub xi: f64,
    pub purity: f64,
    pub fidelity: f64,
    pub v_h_theory: f64,
    pub v_v_theory: f64,
}

impl SweepRow {
    pub fn values(&self) -> [f64; 9] {
        [
            self.angle_deg,
            self.v_h,
            self.v_v,
            self.p_h,
            self.xi,
            self.purity,
            self.fidelity,
            self.v_h_theory,
            self.v_v_theory,
        ]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub angle_deg: f64,
    pub plate: WaveplateSetting,
    pub result: ReconstructionResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepOutput {
    pub calibration: Calibration,
    pub points: Vec<SweepPoint>,
    #[serde(skip)]
    pub rows: Vec<SweepRow>,
}

pub fn default_angles() -> Vec<f64> {
    (0..=9).map(|k| 5.0 * k as f64).collect()
}

pub fn reconstruct_with(
    method: MethodArg,
    h: &idlertomo_core::ScanRecord,
    v: &idlertomo_core::ScanRecord,
    t_h: f64,
    t_v: f64,
) -> Result<ReconstructionResult> {
    match method {
        MethodArg::Fringe => extract_parameters(h, v, t_h, t_v),
        MethodArg::Mle => mle_reconstruct(h, v, t_h, t_v, None),
    }
}

/// Noise can push a calibrated transmission slightly above one; the
/// reconstruction needs it in `(0, 1]`.
pub fn clamp_transmission(t: f64) -> f64 {
    t.min(1.0)
}

/// Calibrates once, then for each angle prepares the idler with the plate
/// acting on `|H>`, scans both settings and reconstructs. Angles are scanned
/// with seeds derived from their index, so results do not depend on thread
/// scheduling.
#[allow(clippy::too_many_arguments)]
pub fn run_sweep(
    cfg: &InterferometerConfig,
    kind: WaveplateKind,
    angles_deg: &[f64],
    method: MethodArg,
    points: usize,
    n: u64,
    seed: u64,
    noiseless: bool,
) -> Result<SweepOutput> {
    let cal_plan = ScanPlan::uniform(points, n, SignalSetting::H, derive_seed(seed, 0), noiseless)?;
    let (calibration, _, _) = run_calibration(cfg, &cal_plan)?;
    let t_h = clamp_transmission(calibration.t_h);
    let t_v = clamp_transmission(calibration.t_v);

    let computed: Vec<(SweepPoint, SweepRow)> = angles_deg
        .par_iter()
        .enumerate()
        .map(|(i, &deg)| {
            let plate = WaveplateSetting::from_degrees(kind, deg);
            let idler = prepared_idler_params(&[plate]);
            let point_cfg = cfg.clone().with_idler(idler);
            let s = derive_seed(seed, i as u64 + 1);
            let h = run_scan(&point_cfg, &ScanPlan::uniform(points, n, SignalSetting::H, s, noiseless)?);
            let v = run_scan(&point_cfg, &ScanPlan::uniform(points, n, SignalSetting::V, s, noiseless)?);
            let mut result = reconstruct_with(method, &h, &v, t_h, t_v)?;
            let fidelity = report_fidelity(&mut result, &idler)?;
            let fit = |r: &idlertomo_core::ScanRecord| {
                idlertomo_core::reconstruct::fit_sinusoid_counts(r.phases(), r.counts_primary())
            };
            let (fit_h, fit_v) = (fit(&h)?, fit(&v)?);
            let (v_h_theory, v_v_theory) = visibilities_closed_form(&point_cfg);
            let row = SweepRow {
                angle_deg: deg,
                v_h: fit_h.visibility,
                v_v: fit_v.visibility,
                p_h: result.params.p_h(),
                xi: result.params.xi(),
                purity: result.params.purity(),
                fidelity,
                v_h_theory,
                v_v_theory,
            };
            Ok((SweepPoint { angle_deg: deg, plate, result }, row))
        })
        .collect::<Result<_>>()?;

    let (points, rows) = computed.into_iter().unzip();
    Ok(SweepOutput { calibration, points, rows })
}

pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut s = SWEEP_HEADER.join(",");
    s.push('\n');
    for r in rows {
        let cells: Vec<String> = r.values().iter().map(|x| format!("{x}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}
