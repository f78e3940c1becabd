//! Synthetic phase scans with Poisson shot noise, calibration scans, and the
//! scan file formats.
//!
//! Random numbers come from xoshiro256++ seeded through SplitMix64
//! (`seed_from_u64`). A scan draws from stream `s` of its seed, where stream
//! `s` is the generator advanced by `s` calls to `jump()` (2^128 steps each):
//! stream 0 for H-setting scans, 1 for V-setting scans, 2 and 3 for the two
//! calibration scans. Uniform deviates are the top 53 bits of `next_u64`
//! scaled by 2^-53. Given the seed, the stream layout and the samplers below,
//! the counts are fully determined.

use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand_xoshiro::rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::interferometer::{
    rates_closed_form, visibilities_closed_form, DetectionRates, InterferometerConfig,
    SignalSetting,
};
use crate::qcore::ONE;
use crate::reconstruct::{fit_sinusoid_counts, SinusoidFit};
use crate::states::IdlerStateParams;

pub const MIN_SCAN_POINTS: usize = 5;
pub const DEFAULT_SCAN_POINTS: usize = 20;
pub const DEFAULT_COUNTS_PER_POINT: u64 = 1000;

const STREAM_SCAN_H: u32 = 0;
const STREAM_SCAN_V: u32 = 1;
const STREAM_CALIBRATION_H: u32 = 2;
const STREAM_CALIBRATION_V: u32 = 3;

/// Above this mean the Poisson sampler switches from inversion to PTRS.
const POISSON_INVERSION_LIMIT: f64 = 30.0;

/// Phase grid, count budget and noise model for one scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlanRepr", into = "PlanRepr")]
pub struct ScanPlan {
    phases: Vec<f64>,
    counts_per_point: u64,
    setting: SignalSetting,
    seed: u64,
    noiseless: bool,
}

#[derive(Serialize, Deserialize)]
struct PlanRepr {
    phases: Vec<f64>,
    counts_per_point: u64,
    setting: SignalSetting,
    seed: u64,
    #[serde(default)]
    noiseless: bool,
}

impl From<ScanPlan> for PlanRepr {
    fn from(p: ScanPlan) -> Self {
        PlanRepr {
            phases: p.phases,
            counts_per_point: p.counts_per_point,
            setting: p.setting,
            seed: p.seed,
            noiseless: p.noiseless,
        }
    }
}

impl TryFrom<PlanRepr> for ScanPlan {
    type Error = Error;

    fn try_from(r: PlanRepr) -> Result<Self> {
        ScanPlan::new(r.phases, r.counts_per_point, r.setting, r.seed, r.noiseless)
    }
}

impl ScanPlan {
    /// Requires at least five finite phases, strictly increasing, spanning
    /// less than one period.
    pub fn new(
        phases: Vec<f64>,
        counts_per_point: u64,
        setting: SignalSetting,
        seed: u64,
        noiseless: bool,
    ) -> Result<Self> {
        if phases.len() < MIN_SCAN_POINTS {
            return Err(Error::InvalidParameter(format!(
                "a scan needs at least {MIN_SCAN_POINTS} phase points, got {}",
                phases.len()
            )));
        }
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("scan phases must be finite".into()));
        }
        if phases.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("scan phases must be strictly increasing".into()));
        }
        if phases[phases.len() - 1] - phases[0] >= TAU {
            return Err(Error::InvalidParameter("scan phases must lie within one period".into()));
        }
        if counts_per_point == 0 {
            return Err(Error::InvalidParameter("counts per point must be positive".into()));
        }
        Ok(ScanPlan {
            phases,
            counts_per_point,
            setting,
            seed,
            noiseless,
        })
    }

    /// `points` equally spaced phases over `[0, 2pi)`.
    pub fn uniform(
        points: usize,
        counts_per_point: u64,
        setting: SignalSetting,
        seed: u64,
        noiseless: bool,
    ) -> Result<Self> {
        let phases = (0..points).map(|k| TAU * k as f64 / points as f64).collect();
        Self::new(phases, counts_per_point, setting, seed, noiseless)
    }

    pub fn with_setting(mut self, setting: SignalSetting) -> Self {
        self.setting = setting;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn counts_per_point(&self) -> u64 {
        self.counts_per_point
    }

    pub fn setting(&self) -> SignalSetting {
        self.setting
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn noiseless(&self) -> bool {
        self.noiseless
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }
}

/// Counts from one scan: the fringing detector (D1 for the H setting, D2 for
/// the V setting) and the other, constant one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RecordRepr", into = "RecordRepr")]
pub struct ScanRecord {
    plan: ScanPlan,
    counts_primary: Vec<u64>,
    counts_constant: Vec<u64>,
    truth: Option<InterferometerConfig>,
}

#[derive(Serialize, Deserialize)]
struct RecordRepr {
    plan: ScanPlan,
    counts_primary: Vec<u64>,
    counts_constant: Vec<u64>,
    #[serde(default)]
    truth: Option<InterferometerConfig>,
}

impl From<ScanRecord> for RecordRepr {
    fn from(r: ScanRecord) -> Self {
        RecordRepr {
            plan: r.plan,
            counts_primary: r.counts_primary,
            counts_constant: r.counts_constant,
            truth: r.truth,
        }
    }
}

impl TryFrom<RecordRepr> for ScanRecord {
    type Error = Error;

    fn try_from(r: RecordRepr) -> Result<Self> {
        ScanRecord::new(r.plan, r.counts_primary, r.counts_constant, r.truth)
    }
}

const CSV_HEADER: [&str; 3] = ["phi_rad", "counts_fringe", "counts_const"];

#[derive(Serialize, Deserialize)]
struct CsvRow {
    phi_rad: f64,
    counts_fringe: u64,
    counts_const: u64,
}

impl ScanRecord {
    pub fn new(
        plan: ScanPlan,
        counts_primary: Vec<u64>,
        counts_constant: Vec<u64>,
        truth: Option<InterferometerConfig>,
    ) -> Result<Self> {
        if counts_primary.len() != plan.len() || counts_constant.len() != plan.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} phases but {} fringe and {} constant counts",
                plan.len(),
                counts_primary.len(),
                counts_constant.len()
            )));
        }
        Ok(ScanRecord {
            plan,
            counts_primary,
            counts_constant,
            truth,
        })
    }

    pub fn plan(&self) -> &ScanPlan {
        &self.plan
    }

    pub fn phases(&self) -> &[f64] {
        &self.plan.phases
    }

    pub fn setting(&self) -> SignalSetting {
        self.plan.setting
    }

    pub fn counts_per_point(&self) -> u64 {
        self.plan.counts_per_point
    }

    pub fn counts_primary(&self) -> &[u64] {
        &self.counts_primary
    }

    pub fn counts_constant(&self) -> &[u64] {
        &self.counts_constant
    }

    pub fn truth(&self) -> Option<&InterferometerConfig> {
        self.truth.as_ref()
    }

    /// Writes the CSV form. The noiseless flag and the true configuration are
    /// not part of it; use JSON to keep them.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# setting={} seed={} n={}",
            self.plan.setting.as_str(),
            self.plan.seed,
            self.plan.counts_per_point
        )?;
        let mut w = csv::Writer::from_writer(out);
        for k in 0..self.plan.len() {
            w.serialize(CsvRow {
                phi_rad: self.plan.phases[k],
                counts_fringe: self.counts_primary[k],
                counts_const: self.counts_constant[k],
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = BufReader::new(input);
        let mut first = String::new();
        reader.read_line(&mut first)?;
        let (setting, seed, n) = parse_csv_comment(first.trim_end())?;

        let mut rows = csv::Reader::from_reader(reader);
        let header: Vec<String> = rows.headers()?.iter().map(str::to_string).collect();
        if header != CSV_HEADER {
            return Err(Error::Format(format!(
                "expected columns {}, found {}",
                CSV_HEADER.join(","),
                header.join(",")
            )));
        }
        let (mut phases, mut fringe, mut constant) = (Vec::new(), Vec::new(), Vec::new());
        for row in rows.deserialize() {
            let row: CsvRow = row?;
            phases.push(row.phi_rad);
            fringe.push(row.counts_fringe);
            constant.push(row.counts_const);
        }
        let plan = ScanPlan::new(phases, n, setting, seed, false)?;
        ScanRecord::new(plan, fringe, constant, None)
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(BufWriter::new(File::create(path)?))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(File::open(path)?)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    /// Loads either format, chosen by extension (`.json`, otherwise CSV).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::load_json(path),
            _ => Self::load_csv(path),
        }
    }
}

fn parse_csv_comment(line: &str) -> Result<(SignalSetting, u64, u64)> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| Error::Format(format!("missing '# setting=... seed=... n=...' line, got {line:?}")))?;
    let (mut setting, mut seed, mut n) = (None, None, None);
    for field in body.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("malformed header field {field:?}")))?;
        let bad = |_| Error::Format(format!("malformed value in {field:?}"));
        match key {
            "setting" => setting = Some(value.parse::<SignalSetting>()?),
            "seed" => seed = Some(value.parse::<u64>().map_err(bad)?),
            "n" => n = Some(value.parse::<u64>().map_err(bad)?),
            _ => return Err(Error::Format(format!("unknown header field {key:?}"))),
        }
    }
    match (setting, seed, n) {
        (Some(s), Some(seed), Some(n)) => Ok((s, seed, n)),
        _ => Err(Error::Format(format!("header must give setting, seed and n: {line:?}"))),
    }
}

/// SplitMix64 finalizer applied to `base + index * golden`; used to derive
/// independent per-trial or per-angle seeds from one user seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// xoshiro256++ stream with the uniform and Poisson samplers used for counts.
#[derive(Debug, Clone)]
pub struct PhotonRng {
    inner: Xoshiro256PlusPlus,
}

impl PhotonRng {
    pub fn new(seed: u64, stream: u32) -> Self {
        let mut inner = Xoshiro256PlusPlus::seed_from_u64(seed);
        for _ in 0..stream {
            inner.jump();
        }
        PhotonRng { inner }
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Poisson deviate with mean `mu`: inversion by sequential search below
    /// mean 30, Hormann's transformed rejection with squeeze (PTRS) above.
    pub fn poisson(&mut self, mu: f64) -> u64 {
        assert!(mu >= 0.0 && mu.is_finite(), "Poisson mean must be finite and nonnegative, got {mu}");
        if mu == 0.0 {
            0
        } else if mu < POISSON_INVERSION_LIMIT {
            self.poisson_inversion(mu)
        } else {
            self.poisson_ptrs(mu)
        }
    }

    fn poisson_inversion(&mut self, mu: f64) -> u64 {
        let u = self.uniform();
        let mut k = 0u64;
        let mut p = (-mu).exp();
        let mut cdf = p;
        // The cap only matters if rounding leaves the CDF short of u.
        let cap = (mu + 40.0 * mu.sqrt() + 40.0) as u64;
        while u >= cdf && k < cap {
            k += 1;
            p *= mu / k as f64;
            cdf += p;
        }
        k
    }

    fn poisson_ptrs(&mut self, mu: f64) -> u64 {
        let slam = mu.sqrt();
        let loglam = mu.ln();
        let b = 0.931 + 2.53 * slam;
        let a = -0.059 + 0.02483 * b;
        let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        let vr = 0.9277 - 3.6224 / (b - 2.0);
        loop {
            let u = self.uniform() - 0.5;
            let v = self.uniform();
            let us = 0.5 - u.abs();
            let k = ((2.0 * a / us + b) * u + mu + 0.43).floor();
            if us >= 0.07 && v <= vr {
                return k as u64;
            }
            if k < 0.0 || (us < 0.013 && v > us) {
                continue;
            }
            let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
            let rhs = -mu + k * loglam - ln_gamma(k + 1.0);
            if lhs <= rhs {
                return k as u64;
            }
        }
    }
}

fn stream_for(setting: SignalSetting) -> u32 {
    match setting {
        SignalSetting::H => STREAM_SCAN_H,
        SignalSetting::V => STREAM_SCAN_V,
    }
}

fn fringing_split(setting: SignalSetting, r: DetectionRates) -> (f64, f64) {
    match setting {
        SignalSetting::H => (r.rate_h, r.rate_v),
        SignalSetting::V => (r.rate_v, r.rate_h),
    }
}

fn scan_on_stream(cfg: &InterferometerConfig, plan: &ScanPlan, stream: u32) -> ScanRecord {
    let n = plan.counts_per_point as f64;
    let mut rng = PhotonRng::new(plan.seed, stream);
    let mut fringe = Vec::with_capacity(plan.len());
    let mut constant = Vec::with_capacity(plan.len());
    for &phi in &plan.phases {
        let point = cfg.clone().with_setting(plan.setting).with_phi(phi);
        let (rate_f, rate_c) = fringing_split(plan.setting, rates_closed_form(&point));
        let (mean_f, mean_c) = ((n * rate_f).max(0.0), (n * rate_c).max(0.0));
        if plan.noiseless {
            fringe.push(mean_f.round() as u64);
            constant.push(mean_c.round() as u64);
        } else {
            fringe.push(rng.poisson(mean_f));
            constant.push(rng.poisson(mean_c));
        }
    }
    let truth = cfg.clone().with_setting(plan.setting);
    ScanRecord::new(plan.clone(), fringe, constant, Some(truth)).expect("one count per phase")
}

/// Simulates one scan in the plan's signal setting. The configuration's own
/// phase and setting are ignored.
pub fn run_scan(cfg: &InterferometerConfig, plan: &ScanPlan) -> ScanRecord {
    scan_on_stream(cfg, plan, stream_for(plan.setting))
}

/// Result of the two calibration scans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub t_h: f64,
    pub t_h_stderr: f64,
    pub t_v: f64,
    pub t_v_stderr: f64,
    pub fit_h: SinusoidFit,
    pub fit_v: SinusoidFit,
}

/// Estimates `|T_H|` and `|T_V|` from an H-setting scan with the idler set to
/// `|H>` and a V-setting scan with the idler set to `|V>`. Each fitted
/// visibility is divided by the visibility the same arrangement would show
/// with `|T| = 1`, which is 1 for the balanced arrangement. The plan's own
/// setting is ignored.
pub fn run_calibration(
    cfg_template: &InterferometerConfig,
    plan: &ScanPlan,
) -> Result<(Calibration, ScanRecord, ScanRecord)> {
    let cfg_h = cfg_template.clone().with_idler(IdlerStateParams::horizontal());
    let cfg_v = cfg_template.clone().with_idler(IdlerStateParams::vertical());
    let scan_h = scan_on_stream(&cfg_h, &plan.clone().with_setting(SignalSetting::H), STREAM_CALIBRATION_H);
    let scan_v = scan_on_stream(&cfg_v, &plan.clone().with_setting(SignalSetting::V), STREAM_CALIBRATION_V);

    let ideal_h = visibilities_closed_form(&cfg_h.with_transmissions(ONE, ONE)?).0;
    let ideal_v = visibilities_closed_form(&cfg_v.with_transmissions(ONE, ONE)?).1;
    if !(ideal_h > 0.0 && ideal_v > 0.0) {
        return Err(Error::Calibration(
            "arrangement shows no interference even with perfect alignment".into(),
        ));
    }
    let fit_h = fit_sinusoid_counts(scan_h.phases(), scan_h.counts_primary())?;
    let fit_v = fit_sinusoid_counts(scan_v.phases(), scan_v.counts_primary())?;
    let calibration = Calibration {
        t_h: fit_h.visibility / ideal_h,
        t_h_stderr: fit_h.visibility_stderr / ideal_h,
        t_v: fit_v.visibility / ideal_v,
        t_v_stderr: fit_v.visibility_stderr / ideal_v,
        fit_h,
        fit_v,
    };
    Ok((calibration, scan_h, scan_v))
}
