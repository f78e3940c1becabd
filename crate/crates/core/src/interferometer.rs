//! Two-source induced-coherence interferometer.
//!
//! Two independent routes to the signal count rates are provided:
//!
//! * the exact route builds the 8x8 two-photon state, rotates the signal
//!   polarization for the chosen setting, applies the idler alignment as an
//!   isometry into a 12-dimensional space (idler path `w` added), traces out
//!   the idler, recombines the signal paths on a 50/50 beam splitter, and
//!   reads the detector populations;
//! * the closed-form route evaluates the fringe formulas directly and is what
//!   the reconstruction inverts.
//!
//! The recombining beam splitter is `H ⊗ 1` with `H = [[1, 1], [1, -1]]/sqrt(2)`
//! acting on the path index `{a, b}`. Its first output row `(a + b)/sqrt(2)`
//! (labelled path `c`) feeds the polarizing beam splitter and detectors D1/D2;
//! on that port the fringe term enters with `+cos(phi)`. The second output row
//! (`d`) carries the complementary `-cos(phi)` fringe and is not detected.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{
    c, kron, partial_trace, partial_trace_matrix, ComplexMatrix, DensityMatrix, C64, ONE, ZERO,
};
use crate::states::{
    waveplate_unitary, wrap_phase, IdlerStateParams, SourceQ2Params, WaveplateSetting,
};

/// Tolerance on `b1^2 + |b2|^2 = 1`.
pub const PUMP_NORM_TOL: f64 = 1e-12;

/// Two-photon basis of the emitted state.
pub const TOTAL_BASIS: [&str; 8] = [
    "H_Sa⊗H_Ib'",
    "H_Sa⊗V_Ib'",
    "V_Sa⊗H_Ib'",
    "V_Sa⊗V_Ib'",
    "H_Sb⊗H_Ib",
    "H_Sb⊗V_Ib",
    "V_Sb⊗H_Ib",
    "V_Sb⊗V_Ib",
];

/// Two-photon basis after alignment: the Q1 idler is split between the
/// auxiliary path `w` and the shared path `b`.
pub const ALIGNED_BASIS: [&str; 12] = [
    "H_Sa⊗H_Iw",
    "H_Sa⊗V_Iw",
    "V_Sa⊗H_Iw",
    "V_Sa⊗V_Iw",
    "H_Sa⊗H_Ib",
    "H_Sa⊗V_Ib",
    "V_Sa⊗H_Ib",
    "V_Sa⊗V_Ib",
    "H_Sb⊗H_Ib",
    "H_Sb⊗V_Ib",
    "V_Sb⊗H_Ib",
    "V_Sb⊗V_Ib",
];

pub const SIGNAL_BASIS: [&str; 4] = ["H_Sa", "V_Sa", "H_Sb", "V_Sb"];
pub const IDLER_BASIS: [&str; 4] = ["H_Iw", "V_Iw", "H_Ib", "V_Ib"];
/// Beam-splitter outputs; `c` is the detected port.
pub const OUTPUT_BASIS: [&str; 4] = ["H_Sc", "V_Sc", "H_Sd", "V_Sd"];

const DETECTED_H: usize = 0;
const DETECTED_V: usize = 1;

fn labels<const N: usize>(l: [&str; N]) -> Vec<String> {
    l.iter().map(|s| s.to_string()).collect()
}

/// Polarization of the signal photon in path `a`, set by the signal
/// half-wave plate at 0 or 45 degrees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum SignalSetting {
    #[default]
    H,
    V,
}

impl SignalSetting {
    pub fn waveplate(self) -> WaveplateSetting {
        match self {
            SignalSetting::H => WaveplateSetting::half_wave(0.0),
            SignalSetting::V => WaveplateSetting::half_wave(std::f64::consts::FRAC_PI_4),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SignalSetting::H => "H",
            SignalSetting::V => "V",
        }
    }
}

impl std::str::FromStr for SignalSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "H" | "h" => Ok(SignalSetting::H),
            "V" | "v" => Ok(SignalSetting::V),
            other => Err(Error::InvalidParameter(format!(
                "signal setting must be H or V, got {other:?}"
            ))),
        }
    }
}

/// Transmission coefficient in JSON: a bare number for real values, or
/// `[re, im]`.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TransmissionRepr {
    Real(f64),
    Complex([f64; 2]),
}

impl From<C64> for TransmissionRepr {
    fn from(t: C64) -> Self {
        if t.im == 0.0 {
            TransmissionRepr::Real(t.re)
        } else {
            TransmissionRepr::Complex([t.re, t.im])
        }
    }
}

impl From<TransmissionRepr> for C64 {
    fn from(t: TransmissionRepr) -> Self {
        match t {
            TransmissionRepr::Real(x) => c(x, 0.0),
            TransmissionRepr::Complex([re, im]) => c(re, im),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ConfigRepr {
    b1: f64,
    b2_mag: f64,
    #[serde(default)]
    phi: f64,
    t_h: TransmissionRepr,
    t_v: TransmissionRepr,
    idler: IdlerStateParams,
    #[serde(default)]
    q2: SourceQ2Params,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coherence_l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coherence_lp: Option<f64>,
    #[serde(default)]
    signal_setting: SignalSetting,
}

/// All physical knobs of the interferometer.
///
/// `b1` is the real Q1 pump amplitude and `b2_mag e^{i phi}` the Q2 amplitude.
/// The cross-source coherences `L`, `L'` follow the idler purity unless set
/// explicitly with [`InterferometerConfig::with_coherences`]; only equal
/// values in `[0, 1]` give a physical state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConfigRepr", into = "ConfigRepr")]
pub struct InterferometerConfig {
    b1: f64,
    b2_mag: f64,
    phi: f64,
    t_h: C64,
    t_v: C64,
    idler: IdlerStateParams,
    q2: SourceQ2Params,
    coherence_l: Option<f64>,
    coherence_lp: Option<f64>,
    signal_setting: SignalSetting,
}

impl From<InterferometerConfig> for ConfigRepr {
    fn from(cfg: InterferometerConfig) -> Self {
        ConfigRepr {
            b1: cfg.b1,
            b2_mag: cfg.b2_mag,
            phi: cfg.phi,
            t_h: cfg.t_h.into(),
            t_v: cfg.t_v.into(),
            idler: cfg.idler,
            q2: cfg.q2,
            coherence_l: cfg.coherence_l,
            coherence_lp: cfg.coherence_lp,
            signal_setting: cfg.signal_setting,
        }
    }
}

impl TryFrom<ConfigRepr> for InterferometerConfig {
    type Error = Error;

    fn try_from(r: ConfigRepr) -> Result<Self> {
        let mut cfg = InterferometerConfig::new(
            r.b1,
            r.b2_mag,
            r.t_h.into(),
            r.t_v.into(),
            r.idler,
            r.q2,
        )?
        .with_phi(r.phi)
        .with_setting(r.signal_setting);
        cfg.coherence_l = r.coherence_l;
        cfg.coherence_lp = r.coherence_lp;
        Ok(cfg)
    }
}

impl InterferometerConfig {
    pub fn new(
        b1: f64,
        b2_mag: f64,
        t_h: C64,
        t_v: C64,
        idler: IdlerStateParams,
        q2: SourceQ2Params,
    ) -> Result<Self> {
        if !(b1 >= 0.0 && b2_mag >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "pump amplitudes must be nonnegative, got b1 = {b1}, |b2| = {b2_mag}"
            )));
        }
        if (b1 * b1 + b2_mag * b2_mag - 1.0).abs() > PUMP_NORM_TOL {
            return Err(Error::InvalidParameter(format!(
                "b1^2 + |b2|^2 = {} (must be 1)",
                b1 * b1 + b2_mag * b2_mag
            )));
        }
        for (name, t) in [("t_h", t_h), ("t_v", t_v)] {
            if !(t.re.is_finite() && t.im.is_finite()) || t.norm() > 1.0 + 1e-12 {
                return Err(Error::InvalidParameter(format!("|{name}| = {} exceeds 1", t.norm())));
            }
        }
        Ok(InterferometerConfig {
            b1,
            b2_mag,
            phi: 0.0,
            t_h,
            t_v,
            idler,
            q2,
            coherence_l: None,
            coherence_lp: None,
            signal_setting: SignalSetting::H,
        })
    }

    /// Pump weights normalized from arbitrary nonnegative amplitudes.
    pub fn from_pump_ratio(
        b1: f64,
        b2_mag: f64,
        t_h: C64,
        t_v: C64,
        idler: IdlerStateParams,
        q2: SourceQ2Params,
    ) -> Result<Self> {
        let norm = (b1 * b1 + b2_mag * b2_mag).sqrt();
        if !(norm > 0.0) {
            return Err(Error::InvalidParameter("both pump amplitudes are zero".into()));
        }
        Self::new(b1 / norm, b2_mag / norm, t_h, t_v, idler, q2)
    }

    /// The experimental arrangement `b2 = sqrt(2) b1` with the maximally
    /// entangled reference, real transmissions.
    pub fn balanced(idler: IdlerStateParams, t_h: f64, t_v: f64) -> Result<Self> {
        Self::new(
            (1.0f64 / 3.0).sqrt(),
            (2.0f64 / 3.0).sqrt(),
            c(t_h, 0.0),
            c(t_v, 0.0),
            idler,
            SourceQ2Params::default(),
        )
    }

    pub fn with_phi(mut self, phi: f64) -> Self {
        self.phi = phi;
        self
    }

    pub fn with_setting(mut self, setting: SignalSetting) -> Self {
        self.signal_setting = setting;
        self
    }

    pub fn with_idler(mut self, idler: IdlerStateParams) -> Self {
        self.idler = idler;
        self
    }

    pub fn with_q2(mut self, q2: SourceQ2Params) -> Self {
        self.q2 = q2;
        self
    }

    pub fn with_transmissions(mut self, t_h: C64, t_v: C64) -> Result<Self> {
        let checked = Self::new(self.b1, self.b2_mag, t_h, t_v, self.idler, self.q2)?;
        self.t_h = checked.t_h;
        self.t_v = checked.t_v;
        Ok(self)
    }

    /// Overrides the cross-source coherences `L` and `L'`. Values other than
    /// the idler purity describe unphysical states and exist for probing the
    /// positivity boundary.
    pub fn with_coherences(mut self, l: f64, lp: f64) -> Self {
        self.coherence_l = Some(l);
        self.coherence_lp = Some(lp);
        self
    }

    pub fn b1(&self) -> f64 {
        self.b1
    }

    pub fn b2_mag(&self) -> f64 {
        self.b2_mag
    }

    /// `b2 = |b2| e^{i phi}`
    pub fn b2(&self) -> C64 {
        C64::from_polar(self.b2_mag, self.phi)
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn t_h(&self) -> C64 {
        self.t_h
    }

    pub fn t_v(&self) -> C64 {
        self.t_v
    }

    /// `|R_H| = sqrt(1 - |T_H|^2)`
    pub fn r_h(&self) -> f64 {
        (1.0 - self.t_h.norm_sqr()).max(0.0).sqrt()
    }

    pub fn r_v(&self) -> f64 {
        (1.0 - self.t_v.norm_sqr()).max(0.0).sqrt()
    }

    pub fn idler(&self) -> &IdlerStateParams {
        &self.idler
    }

    pub fn q2(&self) -> &SourceQ2Params {
        &self.q2
    }

    pub fn coherence_l(&self) -> f64 {
        self.coherence_l.unwrap_or(self.idler.purity())
    }

    pub fn coherence_lp(&self) -> f64 {
        self.coherence_lp.unwrap_or(self.idler.purity())
    }

    pub fn signal_setting(&self) -> SignalSetting {
        self.signal_setting
    }
}

/// Detector rates as probabilities per emitted pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRates {
    pub rate_h: f64,
    pub rate_v: f64,
}

/// Entries of the emitted two-photon state in [`TOTAL_BASIS`], independent of
/// the signal setting. Not validated: unphysical coherences give a matrix with
/// negative eigenvalues.
pub fn total_state_matrix(cfg: &InterferometerConfig) -> ComplexMatrix {
    let (p_h, p_v) = (cfg.idler.p_h(), cfg.idler.p_v());
    let (p_h2, p_v2) = (cfg.q2.p_h2(), cfg.q2.p_v2());
    let (xi, theta) = (cfg.idler.xi(), cfg.q2.theta());
    let i_coh = cfg.idler.purity();
    let (l, lp) = (cfg.coherence_l(), cfg.coherence_lp());
    let b1 = c(cfg.b1, 0.0);
    let b2 = cfg.b2();
    let b1sq = cfg.b1 * cfg.b1;
    let b2sq = cfg.b2_mag * cfg.b2_mag;
    let cross = b1 * b2.conj();
    let e = |x: f64| C64::from_polar(1.0, x);
    let r = |x: f64| c(x, 0.0);

    let mut m = ComplexMatrix::zeros(8, 8);
    m[(0, 0)] = r(b1sq * p_h);
    m[(0, 1)] = b1sq * i_coh * (p_h * p_v).sqrt() * e(-xi);
    m[(0, 4)] = cross * (p_h * p_h2).sqrt();
    m[(0, 7)] = cross * (p_h * p_v2).sqrt() * e(-theta);
    m[(1, 1)] = r(b1sq * p_v);
    m[(1, 4)] = cross * l * (p_v * p_h2).sqrt() * e(xi);
    m[(1, 7)] = cross * lp * (p_v * p_v2).sqrt() * e(-(theta - xi));
    m[(4, 4)] = r(b2sq * p_h2);
    m[(4, 7)] = b2sq * (p_h2 * p_v2).sqrt() * e(-theta);
    m[(7, 7)] = r(b2sq * p_v2);
    for i in 0..8 {
        for j in 0..i {
            m[(i, j)] = m[(j, i)].conj();
        }
    }
    m
}

/// The emitted two-photon state, validated.
pub fn total_state(cfg: &InterferometerConfig) -> Result<DensityMatrix> {
    DensityMatrix::new(total_state_matrix(cfg), labels(TOTAL_BASIS))
}

fn check_basis(rho: &DensityMatrix, expected: &[&str]) -> Result<()> {
    if rho.basis_labels().iter().map(String::as_str).ne(expected.iter().copied()) {
        return Err(Error::BasisMismatch {
            expected: expected.join(", "),
            found: rho.basis_labels().join(", "),
        });
    }
    Ok(())
}

/// Rotates the path-`a` signal polarization with the setting's half-wave plate.
pub fn apply_signal_setting(rho: &DensityMatrix, setting: SignalSetting) -> Result<DensityMatrix> {
    check_basis(rho, &TOTAL_BASIS)?;
    let hwp = waveplate_unitary(&setting.waveplate());
    let path_a = kron(&hwp, &ComplexMatrix::identity(2));
    let u = ComplexMatrix::from_fn(8, 8, |i, j| match (i < 4, j < 4) {
        (true, true) => path_a[(i, j)],
        (false, false) if i == j => ONE,
        _ => ZERO,
    });
    DensityMatrix::new(rho.matrix().conjugate_by(&u)?, labels(TOTAL_BASIS))
}

/// Isometry from [`TOTAL_BASIS`] into [`ALIGNED_BASIS`]:
/// `|H_Ib'> -> R_H|H_Iw> + T_H|H_Ib>`, `|V_Ib'> -> R_V|V_Iw> + T_V|V_Ib>`.
pub fn alignment_isometry(cfg: &InterferometerConfig) -> ComplexMatrix {
    let reflect = [c(cfg.r_h(), 0.0), c(cfg.r_v(), 0.0)];
    let transmit = [cfg.t_h, cfg.t_v];
    let mut w = ComplexMatrix::zeros(12, 8);
    for col in 0..4 {
        let idler_pol = col % 2;
        w[(col, col)] = reflect[idler_pol];
        w[(4 + col, col)] = transmit[idler_pol];
    }
    for col in 4..8 {
        w[(col + 4, col)] = ONE;
    }
    w
}

/// Alignment of the Q1 idler onto the Q2 idler path.
pub fn apply_alignment(rho: &DensityMatrix, cfg: &InterferometerConfig) -> Result<DensityMatrix> {
    check_basis(rho, &TOTAL_BASIS)?;
    let aligned = rho.matrix().conjugate_by(&alignment_isometry(cfg))?;
    DensityMatrix::new(aligned, labels(ALIGNED_BASIS))
}

/// Embeds the 12-dimensional aligned space into signal ⊗ idler
/// ([`SIGNAL_BASIS`] ⊗ [`IDLER_BASIS`]); the `Sb ⊗ Iw` block stays empty.
fn embed_signal_idler(m: &ComplexMatrix) -> ComplexMatrix {
    let target = |k: usize| -> usize {
        let (sig, idl) = match k {
            0..=3 => (k / 2, k % 2),
            4..=7 => ((k - 4) / 2, 2 + (k - 4) % 2),
            _ => (2 + (k - 8) / 2, 2 + (k - 8) % 2),
        };
        sig * 4 + idl
    };
    let mut out = ComplexMatrix::zeros(16, 16);
    for i in 0..12 {
        for j in 0..12 {
            out[(target(i), target(j))] = m[(i, j)];
        }
    }
    out
}

fn embedded_labels() -> Vec<String> {
    SIGNAL_BASIS
        .iter()
        .flat_map(|s| IDLER_BASIS.iter().map(move |i| format!("{s}⊗{i}")))
        .collect()
}

/// Signal state after tracing out the idler from an aligned state.
pub fn signal_marginal(aligned: &DensityMatrix) -> Result<DensityMatrix> {
    check_basis(aligned, &ALIGNED_BASIS)?;
    let joint = DensityMatrix::new(embed_signal_idler(aligned.matrix()), embedded_labels())?;
    partial_trace(&joint, &[4, 4], &[0])
}

/// Idler state after tracing out the signal from an aligned state.
pub fn idler_marginal(aligned: &DensityMatrix) -> Result<DensityMatrix> {
    check_basis(aligned, &ALIGNED_BASIS)?;
    let reduced = partial_trace_matrix(&embed_signal_idler(aligned.matrix()), &[4, 4], &[1])?;
    DensityMatrix::new(reduced, labels(IDLER_BASIS))
}

fn aligned_state(cfg: &InterferometerConfig) -> Result<DensityMatrix> {
    let emitted = total_state(cfg)?;
    let rotated = apply_signal_setting(&emitted, cfg.signal_setting)?;
    apply_alignment(&rotated, cfg)
}

/// Signal reduced state in [`SIGNAL_BASIS`] by exact evolution of the full
/// two-photon state.
pub fn signal_reduced_state(cfg: &InterferometerConfig) -> Result<DensityMatrix> {
    signal_marginal(&aligned_state(cfg)?)
}

/// Signal reduced state written down directly: diagonal `|b1|^2` on the
/// setting's path-`a` mode and `|b2|^2 P_H2`, `|b2|^2 P_V2` on path `b`, with
/// coherences `T_H b1 b2* sqrt(P_H P_H2)` and
/// `T_V b1 b2* L' sqrt(P_V P_V2) e^{i(xi - theta)}`.
pub fn signal_reduced_state_closed_form(cfg: &InterferometerConfig) -> Result<DensityMatrix> {
    let a = match cfg.signal_setting {
        SignalSetting::H => 0,
        SignalSetting::V => 1,
    };
    let cross = c(cfg.b1, 0.0) * cfg.b2().conj();
    let (p_h, p_v) = (cfg.idler.p_h(), cfg.idler.p_v());
    let (p_h2, p_v2) = (cfg.q2.p_h2(), cfg.q2.p_v2());
    let rho_12 = cfg.t_h * cross * (p_h * p_h2).sqrt();
    let rho_14 = cfg.t_v
        * cross
        * cfg.coherence_lp()
        * (p_v * p_v2).sqrt()
        * C64::from_polar(1.0, cfg.idler.xi() - cfg.q2.theta());
    let b2sq = cfg.b2_mag * cfg.b2_mag;
    let mut m = ComplexMatrix::zeros(4, 4);
    m[(a, a)] = c(cfg.b1 * cfg.b1, 0.0);
    m[(2, 2)] = c(b2sq * p_h2, 0.0);
    m[(3, 3)] = c(b2sq * p_v2, 0.0);
    m[(a, 2)] = rho_12;
    m[(2, a)] = rho_12.conj();
    m[(a, 3)] = rho_14;
    m[(3, a)] = rho_14.conj();
    DensityMatrix::new(m, labels(SIGNAL_BASIS))
}

/// The recombining beam splitter `H ⊗ 1_2`.
pub fn beam_splitter() -> ComplexMatrix {
    let s = c(FRAC_1_SQRT_2, 0.0);
    let h = ComplexMatrix::from_rows(&[vec![s, s], vec![s, -s]]).expect("2x2");
    kron(&h, &ComplexMatrix::identity(2))
}

/// `BS · rho · BS^dagger`, relabelled onto the output ports.
pub fn recombine(rho_s: &DensityMatrix) -> Result<DensityMatrix> {
    check_basis(rho_s, &SIGNAL_BASIS)?;
    DensityMatrix::new(rho_s.matrix().conjugate_by(&beam_splitter())?, labels(OUTPUT_BASIS))
}

/// Rates on both beam-splitter outputs `[c, d]` via the exact route.
pub fn port_rates_exact(cfg: &InterferometerConfig) -> Result<[DetectionRates; 2]> {
    let out = recombine(&signal_reduced_state(cfg)?)?;
    let pop = |i: usize| out.population(i);
    Ok([
        DetectionRates {
            rate_h: pop(DETECTED_H),
            rate_v: pop(DETECTED_V),
        },
        DetectionRates {
            rate_h: pop(2),
            rate_v: pop(3),
        },
    ])
}

/// Detector rates via the exact route.
pub fn rates_exact(cfg: &InterferometerConfig) -> Result<DetectionRates> {
    Ok(port_rates_exact(cfg)?[0])
}

/// Detector rates from the fringe formulas.
///
/// H setting: `R_H = (b1^2 + b2^2 P_H2 + 2 b1 b2 |T_H| sqrt(P_H P_H2) cos(phi - arg T_H)) / 2`,
/// `R_V = b2^2 P_V2 / 2`.
/// V setting: `R_V = (b1^2 + b2^2 P_V2 + 2 L' b1 b2 |T_V| sqrt(P_V P_V2) cos(phi + theta - xi - arg T_V)) / 2`,
/// `R_H = b2^2 P_H2 / 2`.
///
/// Transmission phases only shift the fringes; for real positive `T` the
/// shifts vanish.
pub fn rates_closed_form(cfg: &InterferometerConfig) -> DetectionRates {
    let (b1, b2) = (cfg.b1, cfg.b2_mag);
    let (p_h2, p_v2) = (cfg.q2.p_h2(), cfg.q2.p_v2());
    let phi = cfg.phi;
    match cfg.signal_setting {
        SignalSetting::H => {
            let fringe = 2.0
                * b1
                * b2
                * cfg.t_h.norm()
                * (cfg.idler.p_h() * p_h2).sqrt()
                * (phi - cfg.t_h.arg()).cos();
            DetectionRates {
                rate_h: 0.5 * (b1 * b1 + b2 * b2 * p_h2 + fringe),
                rate_v: 0.5 * b2 * b2 * p_v2,
            }
        }
        SignalSetting::V => {
            let shift = cfg.q2.theta() - cfg.idler.xi() - cfg.t_v.arg();
            let fringe = 2.0
                * cfg.coherence_lp()
                * b1
                * b2
                * cfg.t_v.norm()
                * (cfg.idler.p_v() * p_v2).sqrt()
                * (phi + shift).cos();
            DetectionRates {
                rate_h: 0.5 * b2 * b2 * p_h2,
                rate_v: 0.5 * (b1 * b1 + b2 * b2 * p_v2 + fringe),
            }
        }
    }
}

/// Fringe visibilities `(V_H, V_V)` of the H-setting D1 and V-setting D2 rates.
pub fn visibilities_closed_form(cfg: &InterferometerConfig) -> (f64, f64) {
    let (b1, b2) = (cfg.b1, cfg.b2_mag);
    let (p_h2, p_v2) = (cfg.q2.p_h2(), cfg.q2.p_v2());
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
    let v_h = ratio(
        2.0 * b1 * b2 * cfg.t_h.norm() * (cfg.idler.p_h() * p_h2).sqrt(),
        b1 * b1 + b2 * b2 * p_h2,
    );
    let v_v = ratio(
        2.0 * cfg.coherence_lp() * b1 * b2 * cfg.t_v.norm() * (cfg.idler.p_v() * p_v2).sqrt(),
        b1 * b1 + b2 * b2 * p_v2,
    );
    (v_h, v_v)
}

/// Phase `delta` of each fringe written as `A + B cos(phi + delta)`, for the
/// H-setting D1 and V-setting D2 rates.
pub fn fringe_phases_closed_form(cfg: &InterferometerConfig) -> (f64, f64) {
    (
        wrap_phase(-cfg.t_h.arg()),
        wrap_phase(cfg.q2.theta() - cfg.idler.xi() - cfg.t_v.arg()),
    )
}

/// Idler state after the interaction, `|psi><psi|/2 + 1/4`, for a pure idler.
///
/// This equals the exact idler marginal after the second source when the
/// pumping is equal, `|T_H| = |T_V| = 1` and Q2 emits with `P_H2 = 1/2`, so
/// that its own idler is maximally mixed. Other configurations are not
/// checked; compare with [`idler_reduced_state`] for those.
pub fn post_interaction_idler(cfg: &InterferometerConfig) -> Result<DensityMatrix> {
    if !cfg.idler.is_pure() {
        return Err(Error::InvalidParameter(format!(
            "post-interaction state needs a pure idler, purity = {}",
            cfg.idler.purity()
        )));
    }
    let projector = ComplexMatrix::outer(&cfg.idler.state_vector());
    let m = &projector.scale(c(0.5, 0.0)) + &ComplexMatrix::from_real_diag(&[0.25, 0.25]);
    DensityMatrix::new(m, vec!["H_I".into(), "V_I".into()])
}

/// Idler reduced state in [`IDLER_BASIS`] by exact evolution.
pub fn idler_reduced_state(cfg: &InterferometerConfig) -> Result<DensityMatrix> {
    idler_marginal(&aligned_state(cfg)?)
}
