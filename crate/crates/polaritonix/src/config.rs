//! Flat key-value run configuration.
//!
//! The format is line-oriented `key = value` with dotted section names and
//! `#` comments. Vibrational modes are numbered groups:
//!
//! ```text
//! # all frequencies in one common unit (conventionally omega_v)
//! cavity.omega_c     = 57.0        # or cavity.length / alpha_deg / n_eff
//! cavity.kappa_c     = 2.0
//! cavity.g_n         = 7.0
//! molecule.omega_m   = 50.0
//! molecule.kappa_tilde = 0.01
//! mode.1.omega_v     = 1.0
//! mode.1.huang_rhys  = 1.0
//! mode.1.quality     = 4.0
//! mode.1.multiplicity = 1
//! env.k_b_t          = 1.0
//! env.omega_l        = 25.0       # optional, default 25 max(omega_v)
//! numerics.grid_points = 32768    # optional
//! numerics.grid_half_span = 40.0  # optional
//! numerics.tolerance = 1e-12      # optional
//! numerics.max_terms = 512        # optional
//! numerics.detuning_min = -14.0   # optional, default -2 g_N
//! numerics.detuning_max = 14.0    # optional, default +2 g_N
//! output.path = spectrum.csv      # optional
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::pe::{SeriesControl, ThermalEnv, VibrationalMode};
use crate::response::{cavity_frequency_from_geometry, CavityParams, MoleculeParams};

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub cavity: CavityParams,
    pub molecule: MoleculeParams,
    pub env: ThermalEnv,
    pub ctrl: SeriesControl,
    pub grid_points: usize,
    pub grid_half_span: Option<f64>,
    pub detuning_range: (f64, f64),
    pub output: Option<PathBuf>,
    /// The key-value pairs as parsed, for reproducible output headers.
    raw: Vec<(String, String)>,
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("{key}: expected a number, got '{value}'")))
        .and_then(|v| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Config(format!("{key}: non-finite value")))
            }
        })
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| Error::Config(format!("{key}: expected a non-negative integer, got '{value}'")))
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_str(&text)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn from_str(text: &str) -> Result<Self> {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        let mut raw = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let (key, value) = (key.trim().to_string(), value.trim().to_string());
            if value.is_empty() {
                return Err(Error::Config(format!("{key}: empty value")));
            }
            if map.insert(key.clone(), value.clone()).is_some() {
                return Err(Error::Config(format!("duplicate key '{key}'")));
            }
            raw.push((key, value));
        }

        let mut take = |key: &str| map.remove(key);

        // cavity: either omega_c directly or the geometry helper
        let kappa_c = parse_f64("cavity.kappa_c", &take("cavity.kappa_c").ok_or_else(|| {
            Error::Config("missing cavity.kappa_c".into())
        })?)?;
        let g_n = parse_f64("cavity.g_n", &take("cavity.g_n").ok_or_else(|| {
            Error::Config("missing cavity.g_n".into())
        })?)?;
        let omega_c = match (take("cavity.omega_c"), take("cavity.length")) {
            (Some(w), None) => parse_f64("cavity.omega_c", &w)?,
            (None, Some(l)) => {
                let length = parse_f64("cavity.length", &l)?;
                let alpha_deg = parse_f64(
                    "cavity.alpha_deg",
                    &take("cavity.alpha_deg")
                        .ok_or_else(|| Error::Config("geometry needs cavity.alpha_deg".into()))?,
                )?;
                let n_eff = parse_f64(
                    "cavity.n_eff",
                    &take("cavity.n_eff")
                        .ok_or_else(|| Error::Config("geometry needs cavity.n_eff".into()))?,
                )?;
                let c = match take("cavity.speed_of_light") {
                    Some(v) => parse_f64("cavity.speed_of_light", &v)?,
                    None => 1.0,
                };
                cavity_frequency_from_geometry(length, alpha_deg.to_radians(), n_eff, c)?
            }
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "give either cavity.omega_c or the cavity geometry, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config(
                    "missing cavity.omega_c (or cavity.length/alpha_deg/n_eff)".into(),
                ))
            }
        };
        let cavity = CavityParams::new(omega_c, kappa_c, g_n)?;

        let omega_m = parse_f64(
            "molecule.omega_m",
            &take("molecule.omega_m").ok_or_else(|| Error::Config("missing molecule.omega_m".into()))?,
        )?;
        let kappa_tilde = parse_f64(
            "molecule.kappa_tilde",
            &take("molecule.kappa_tilde")
                .ok_or_else(|| Error::Config("missing molecule.kappa_tilde".into()))?,
        )?;

        // numbered mode groups, contiguous from 1
        let mut modes = Vec::new();
        for i in 1.. {
            let prefix = format!("mode.{i}.");
            if !map.keys().any(|k| k.starts_with(&prefix)) {
                break;
            }
            let mut field = |name: &str| -> Result<String> {
                map.remove(&format!("{prefix}{name}"))
                    .ok_or_else(|| Error::Config(format!("mode.{i} is missing {name}")))
            };
            let omega_v = parse_f64(&format!("{prefix}omega_v"), &field("omega_v")?)?;
            let s = parse_f64(&format!("{prefix}huang_rhys"), &field("huang_rhys")?)?;
            let q = parse_f64(&format!("{prefix}quality"), &field("quality")?)?;
            let mult = match map.remove(&format!("{prefix}multiplicity")) {
                Some(v) => parse_usize(&format!("{prefix}multiplicity"), &v)? as u32,
                None => 1,
            };
            modes.push(VibrationalMode::new(omega_v, s, q, mult).map_err(|e| {
                Error::Config(format!("mode.{i}: {e}"))
            })?);
        }
        let molecule = MoleculeParams::new(omega_m, kappa_tilde, modes)
            .map_err(|e| Error::Config(e.to_string()))?;

        let k_b_t = parse_f64(
            "env.k_b_t",
            &map.remove("env.k_b_t").ok_or_else(|| Error::Config("missing env.k_b_t".into()))?,
        )?;
        let env = match map.remove("env.omega_l") {
            Some(v) => ThermalEnv::new(k_b_t, parse_f64("env.omega_l", &v)?),
            None => ThermalEnv::with_default_cutoff(k_b_t, &molecule.modes),
        }
        .map_err(|e| Error::Config(e.to_string()))?;

        let mut ctrl = SeriesControl::default();
        if let Some(v) = map.remove("numerics.tolerance") {
            ctrl.tolerance = parse_f64("numerics.tolerance", &v)?;
        }
        if let Some(v) = map.remove("numerics.max_terms") {
            ctrl.max_terms = parse_usize("numerics.max_terms", &v)?;
        }
        let grid_points = match map.remove("numerics.grid_points") {
            Some(v) => parse_usize("numerics.grid_points", &v)?,
            None => 1 << 15,
        };
        if grid_points < 16 {
            return Err(Error::Config(format!("numerics.grid_points too small: {grid_points}")));
        }
        let grid_half_span = map
            .remove("numerics.grid_half_span")
            .map(|v| parse_f64("numerics.grid_half_span", &v))
            .transpose()?;
        let default_span = (2.0 * g_n).max(1.0);
        let d_lo = map
            .remove("numerics.detuning_min")
            .map(|v| parse_f64("numerics.detuning_min", &v))
            .transpose()?
            .unwrap_or(-default_span);
        let d_hi = map
            .remove("numerics.detuning_max")
            .map(|v| parse_f64("numerics.detuning_max", &v))
            .transpose()?
            .unwrap_or(default_span);
        if !(d_hi > d_lo) {
            return Err(Error::Config(format!("empty detuning range [{d_lo}, {d_hi}]")));
        }
        let output = map.remove("output.path").map(PathBuf::from);
        map.remove("unit"); // informational label only

        if let Some(key) = map.keys().next() {
            return Err(Error::Config(format!("unknown key '{key}'")));
        }

        Ok(Self {
            cavity,
            molecule,
            env,
            ctrl,
            grid_points,
            grid_half_span,
            detuning_range: (d_lo, d_hi),
            output,
            raw,
        })
    }

    /// The configuration lines as parsed, for output headers.
    pub fn raw_lines(&self) -> impl Iterator<Item = String> + '_ {
        self.raw.iter().map(|(k, v)| format!("{k} = {v}"))
    }

    /// Commands other than `baseline` need at least one vibrational mode.
    pub fn require_modes(&self) -> Result<()> {
        if self.molecule.modes.is_empty() {
            return Err(Error::Config(
                "no vibrational modes configured; add mode.1.* keys (only `baseline` runs without modes)"
                    .into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "
        # example configuration
        cavity.omega_c = 57.0
        cavity.kappa_c = 2.0
        cavity.g_n = 7.0
        molecule.omega_m = 50.0
        molecule.kappa_tilde = 0.01
        mode.1.omega_v = 1.0
        mode.1.huang_rhys = 1.0
        mode.1.quality = 4.0
        mode.1.multiplicity = 1
        env.k_b_t = 1.0
    ";

    #[test]
    fn parses_minimal_config() {
        let cfg = RunConfig::from_str(GOOD).unwrap();
        assert_eq!(cfg.cavity.omega_c, 57.0);
        assert_eq!(cfg.molecule.modes.len(), 1);
        assert_eq!(cfg.env.cutoff, 25.0);
        assert_eq!(cfg.detuning_range, (-14.0, 14.0));
        assert_eq!(cfg.grid_points, 1 << 15);
    }

    #[test]
    fn geometry_route() {
        let text = "
            cavity.length = 2.0
            cavity.alpha_deg = 0.0
            cavity.n_eff = 1.5
            cavity.kappa_c = 0.5
            cavity.g_n = 0.0
            molecule.omega_m = 1.5
            molecule.kappa_tilde = 0.2
            env.k_b_t = 1.0
        ";
        let cfg = RunConfig::from_str(text).unwrap();
        assert!((cfg.cavity.omega_c - std::f64::consts::PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_unknown_duplicate_and_missing() {
        assert!(RunConfig::from_str(&format!("{GOOD}\nbogus.key = 1")).is_err());
        assert!(RunConfig::from_str(&format!("{GOOD}\ncavity.omega_c = 3")).is_err());
        assert!(RunConfig::from_str("cavity.omega_c = 1").is_err());
        let broken = GOOD.replace("mode.1.quality = 4.0", "");
        assert!(RunConfig::from_str(&broken).is_err());
    }

    #[test]
    fn mode_validation_surfaces_as_config_error() {
        let bad = GOOD.replace("mode.1.quality = 4.0", "mode.1.quality = 0.5");
        assert!(matches!(RunConfig::from_str(&bad), Err(Error::Config(_))));
    }
}
