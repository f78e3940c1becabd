use std::path::Path;

use idlertomo_core::{IdlerStateParams, InterferometerConfig, SourceQ2Params, C64};

use crate::{CliError, CliResult, ConfigOverrides};

/// Balanced pumping, perfect alignment, idler in `|D>`.
pub fn default_config() -> InterferometerConfig {
    let idler = IdlerStateParams::pure(0.5, 0.0).expect("valid");
    InterferometerConfig::balanced(idler, 1.0, 1.0).expect("valid")
}

pub fn read_config(path: &Path) -> CliResult<InterferometerConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("reading config {}", path.display()), e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads `path` (or the default) and applies the flag overrides.
pub fn load_config(path: Option<&Path>, o: &ConfigOverrides) -> CliResult<InterferometerConfig> {
    let base = match path {
        Some(p) => read_config(p)?,
        None => default_config(),
    };
    apply_overrides(base, o)
}

pub fn apply_overrides(cfg: InterferometerConfig, o: &ConfigOverrides) -> CliResult<InterferometerConfig> {
    let (b1, b2) = match (o.b1, o.b2) {
        (None, None) => (cfg.b1(), cfg.b2_mag()),
        (Some(b1), None) => (b1, (1.0 - b1 * b1).max(0.0).sqrt()),
        (None, Some(b2)) => ((1.0 - b2 * b2).max(0.0).sqrt(), b2),
        (Some(b1), Some(b2)) => {
            let norm = (b1 * b1 + b2 * b2).sqrt();
            if !(norm > 0.0) {
                return Err(CliError::Usage("--b1 and --b2 cannot both be zero".into()));
            }
            (b1 / norm, b2 / norm)
        }
    };
    if !(0.0..=1.0).contains(&b1) || !(0.0..=1.0).contains(&b2) {
        return Err(CliError::Usage("pump amplitudes must lie in [0, 1]".into()));
    }
    let t_h = o.t_h.map(|t| C64::new(t, 0.0)).unwrap_or(cfg.t_h());
    let t_v = o.t_v.map(|t| C64::new(t, 0.0)).unwrap_or(cfg.t_v());
    let old = cfg.idler();
    let idler = IdlerStateParams::new(
        o.p_h.unwrap_or(old.p_h()),
        o.xi.unwrap_or(old.xi()),
        o.purity.unwrap_or(old.purity()),
    )?;
    let old_q2 = cfg.q2();
    let q2 = SourceQ2Params::new(o.p_h2.unwrap_or(old_q2.p_h2()), o.theta.unwrap_or(old_q2.theta()))?;

    let purity_changed = o.purity.is_some();
    let mut next = InterferometerConfig::new(b1, b2, t_h, t_v, idler, q2)?
        .with_phi(o.phi.unwrap_or(cfg.phi()))
        .with_setting(cfg.signal_setting());
    // Explicit coherences from the file survive unless the purity they would
    // otherwise track was overridden.
    let l = o.coherence_l.or((!purity_changed && cfg.coherence_l() != idler.purity()).then(|| cfg.coherence_l()));
    let lp = o.coherence_lp.or((!purity_changed && cfg.coherence_lp() != idler.purity()).then(|| cfg.coherence_lp()));
    if l.is_some() || lp.is_some() {
        next = next.with_coherences(l.unwrap_or(idler.purity()), lp.unwrap_or(idler.purity()));
    }
    Ok(next)
}
