//! Polarization-state parametrizations and waveplate preparation.
//!
//! Jones conventions used throughout the crate, with `R(a)` the real rotation
//! by `a`:
//!
//! * half-wave plate: `HWP(a) = R(a) · diag(1, -1) · R(-a)`
//! * quarter-wave plate: `QWP(a) = R(a) · diag(1, i) · R(-a)`
//!
//! A pure idler state is `sqrt(P_H)|H> + e^{i xi} sqrt(P_V)|V>`, so
//! `xi = +pi/2` is labelled right-circular and `xi = 3pi/2` left-circular.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{c, ComplexMatrix, DensityMatrix, C64, ONE, ZERO};

/// Amplitudes smaller than this are treated as absent when reading a phase
/// off a state vector.
const PHASE_AMPLITUDE_FLOOR: f64 = 1e-12;

pub fn wrap_phase(x: f64) -> f64 {
    let w = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Signed distance between two phases, in `(-pi, pi]`.
pub fn phase_difference(a: f64, b: f64) -> f64 {
    let d = wrap_phase(a - b);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

fn check_probability(name: &str, x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidParameter(format!("{name} = {x} is outside [0, 1]")));
    }
    Ok(())
}

/// `(P_H, xi, purity)` parametrization of an idler polarization state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IdlerRepr", into = "IdlerRepr")]
pub struct IdlerStateParams {
    p_h: f64,
    xi: f64,
    purity: f64,
}

#[derive(Serialize, Deserialize)]
struct IdlerRepr {
    p_h: f64,
    xi: f64,
    purity: f64,
}

impl From<IdlerStateParams> for IdlerRepr {
    fn from(p: IdlerStateParams) -> Self {
        IdlerRepr {
            p_h: p.p_h,
            xi: p.xi,
            purity: p.purity,
        }
    }
}

impl TryFrom<IdlerRepr> for IdlerStateParams {
    type Error = Error;

    fn try_from(r: IdlerRepr) -> Result<Self> {
        IdlerStateParams::new(r.p_h, r.xi, r.purity)
    }
}

impl IdlerStateParams {
    /// Validates the probability bounds and wraps `xi` into `[0, 2pi)`.
    pub fn new(p_h: f64, xi: f64, purity: f64) -> Result<Self> {
        check_probability("p_h", p_h)?;
        check_probability("purity", purity)?;
        if !xi.is_finite() {
            return Err(Error::InvalidParameter(format!("xi = {xi} is not finite")));
        }
        Ok(IdlerStateParams {
            p_h,
            xi: wrap_phase(xi),
            purity,
        })
    }

    pub fn pure(p_h: f64, xi: f64) -> Result<Self> {
        Self::new(p_h, xi, 1.0)
    }

    pub fn horizontal() -> Self {
        IdlerStateParams {
            p_h: 1.0,
            xi: 0.0,
            purity: 1.0,
        }
    }

    pub fn vertical() -> Self {
        IdlerStateParams {
            p_h: 0.0,
            xi: 0.0,
            purity: 1.0,
        }
    }

    pub fn p_h(&self) -> f64 {
        self.p_h
    }

    pub fn p_v(&self) -> f64 {
        1.0 - self.p_h
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn purity(&self) -> f64 {
        self.purity
    }

    /// Magnitude of the off-diagonal element, `purity * sqrt(P_H P_V)`.
    pub fn coherence(&self) -> f64 {
        self.purity * (self.p_h * self.p_v()).sqrt()
    }

    pub fn is_pure(&self) -> bool {
        (self.purity - 1.0).abs() <= 1e-12
    }

    /// The 2x2 density matrix in the `{H, V}` basis.
    pub fn to_density_matrix(&self) -> DensityMatrix {
        let off = C64::from_polar(self.coherence(), -self.xi);
        let m = ComplexMatrix::from_rows(&[
            vec![c(self.p_h, 0.0), off],
            vec![off.conj(), c(self.p_v(), 0.0)],
        ])
        .expect("2x2");
        DensityMatrix::new(m, vec!["H".into(), "V".into()])
            .expect("parametrized idler state is always a valid density matrix")
    }

    /// Reads `(P_H, xi, purity)` back off a qubit density matrix. `xi` is 0
    /// and `purity` is 1 where they are undefined (no off-diagonal support).
    pub fn from_density_matrix(rho: &DensityMatrix) -> Result<Self> {
        if rho.dim() != 2 {
            return Err(Error::DimensionMismatch(format!(
                "idler state must be 2-dimensional, got {}",
                rho.dim()
            )));
        }
        let p_h = rho[(0, 0)].re.clamp(0.0, 1.0);
        let below = rho[(1, 0)];
        let scale = (p_h * (1.0 - p_h)).sqrt();
        if scale <= PHASE_AMPLITUDE_FLOOR {
            return Self::new(p_h, 0.0, 1.0);
        }
        let purity = (below.norm() / scale).min(1.0);
        let xi = if below.norm() > PHASE_AMPLITUDE_FLOOR {
            below.arg()
        } else {
            0.0
        };
        Self::new(p_h, xi, purity)
    }

    /// `sqrt(P_H)|H> + e^{i xi} sqrt(P_V)|V>`; the polarization this state has
    /// when pure, which for mixed states is the direction of its Bloch vector
    /// only when `purity = 1`.
    pub fn state_vector(&self) -> [C64; 2] {
        [
            c(self.p_h.sqrt(), 0.0),
            C64::from_polar(self.p_v().sqrt(), self.xi),
        ]
    }

    /// Pure-state parameters of a normalized polarization vector, global
    /// phase discarded.
    pub fn from_state_vector(psi: [C64; 2]) -> Result<Self> {
        let norm = (psi[0].norm_sqr() + psi[1].norm_sqr()).sqrt();
        if (norm - 1.0).abs() > crate::qcore::NORM_TOL {
            return Err(Error::NotNormalized { norm });
        }
        let p_h = psi[0].norm_sqr().clamp(0.0, 1.0);
        let xi = if psi[0].norm() > PHASE_AMPLITUDE_FLOOR && psi[1].norm() > PHASE_AMPLITUDE_FLOOR
        {
            psi[1].arg() - psi[0].arg()
        } else {
            0.0
        };
        Self::new(p_h, xi, 1.0)
    }
}

/// Source Q2 polarization-entangled pair
/// `sqrt(P_H2)|H_S H_I> + e^{i theta} sqrt(P_V2)|V_S V_I>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Q2Repr", into = "Q2Repr")]
pub struct SourceQ2Params {
    p_h2: f64,
    theta: f64,
}

#[derive(Serialize, Deserialize)]
struct Q2Repr {
    p_h2: f64,
    #[serde(default)]
    theta: f64,
}

impl From<SourceQ2Params> for Q2Repr {
    fn from(p: SourceQ2Params) -> Self {
        Q2Repr {
            p_h2: p.p_h2,
            theta: p.theta,
        }
    }
}

impl TryFrom<Q2Repr> for SourceQ2Params {
    type Error = Error;

    fn try_from(r: Q2Repr) -> Result<Self> {
        SourceQ2Params::new(r.p_h2, r.theta)
    }
}

impl Default for SourceQ2Params {
    /// The maximally entangled reference `(|HH> + |VV>)/sqrt(2)`.
    fn default() -> Self {
        SourceQ2Params {
            p_h2: 0.5,
            theta: 0.0,
        }
    }
}

impl SourceQ2Params {
    pub fn new(p_h2: f64, theta: f64) -> Result<Self> {
        check_probability("p_h2", p_h2)?;
        if !theta.is_finite() {
            return Err(Error::InvalidParameter(format!("theta = {theta} is not finite")));
        }
        Ok(SourceQ2Params {
            p_h2,
            theta: wrap_phase(theta),
        })
    }

    pub fn p_h2(&self) -> f64 {
        self.p_h2
    }

    pub fn p_v2(&self) -> f64 {
        1.0 - self.p_h2
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Amplitudes on `{H_S H_I, H_S V_I, V_S H_I, V_S V_I}`.
    pub fn state_vector(&self) -> [C64; 4] {
        [
            c(self.p_h2.sqrt(), 0.0),
            ZERO,
            ZERO,
            C64::from_polar(self.p_v2().sqrt(), self.theta),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveplateKind {
    HalfWave,
    QuarterWave,
}

/// A retarder with its fast axis at `angle` radians from horizontal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveplateSetting {
    pub kind: WaveplateKind,
    angle: f64,
}

impl WaveplateSetting {
    /// Angle is wrapped into `[0, pi)`.
    pub fn new(kind: WaveplateKind, angle: f64) -> Self {
        let mut a = angle.rem_euclid(PI);
        if a >= PI {
            a = 0.0;
        }
        WaveplateSetting { kind, angle: a }
    }

    pub fn half_wave(angle: f64) -> Self {
        Self::new(WaveplateKind::HalfWave, angle)
    }

    pub fn quarter_wave(angle: f64) -> Self {
        Self::new(WaveplateKind::QuarterWave, angle)
    }

    pub fn from_degrees(kind: WaveplateKind, degrees: f64) -> Self {
        Self::new(kind, degrees.to_radians())
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }
}

fn rotation(a: f64) -> ComplexMatrix {
    let (s, co) = a.sin_cos();
    ComplexMatrix::from_rows(&[vec![c(co, 0.0), c(-s, 0.0)], vec![c(s, 0.0), c(co, 0.0)]])
        .expect("2x2")
}

/// Jones matrix of a waveplate.
pub fn waveplate_unitary(s: &WaveplateSetting) -> ComplexMatrix {
    let retarder = match s.kind {
        WaveplateKind::HalfWave => ComplexMatrix::from_real_diag(&[1.0, -1.0]),
        WaveplateKind::QuarterWave => {
            ComplexMatrix::from_rows(&[vec![ONE, ZERO], vec![ZERO, c(0.0, 1.0)]]).expect("2x2")
        }
    };
    &(&rotation(s.angle) * &retarder) * &rotation(-s.angle)
}

/// Applies the plates, in order, to `|H>` and returns the resulting pure-state
/// parameters.
pub fn prepared_idler_params(plates: &[WaveplateSetting]) -> IdlerStateParams {
    let mut psi = vec![ONE, ZERO];
    for p in plates {
        psi = waveplate_unitary(p).mul_vec(&psi).expect("2x2 acting on a 2-vector");
    }
    IdlerStateParams::from_state_vector([psi[0], psi[1]])
        .expect("unitaries preserve the norm of |H>")
}
