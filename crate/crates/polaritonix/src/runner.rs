//! Batch computations behind the command-line front end. Every number written
//! here is obtainable by the same library calls with the same configuration;
//! the CLI adds only parsing and formatting.

use rayon::prelude::*;
use std::fmt::Write as _;
use std::io::Write;

use crate::analysis::{self, PolaritonFeatures, ResponseModel};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::lineshape::Mixture;
use crate::oracle::{self, Regularizer, TimeGrid};
use crate::pe::{total_pe, ThermalEnv};
use crate::response::{
    coupled_oscillator_reference, default_grid, effective_kappa_m, frequency_grid,
    response_function, Spectrum,
};

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn fmt(v: f64) -> String {
    format!("{v:.12e}")
}

fn header(out: &mut dyn Write, cfg: &RunConfig, command: &str) -> Result<()> {
    writeln!(out, "# polaritonix {VERSION} {command}")?;
    for line in cfg.raw_lines() {
        writeln!(out, "# config: {line}")?;
    }
    Ok(())
}

fn output_grid(cfg: &RunConfig) -> Result<Vec<f64>> {
    match cfg.grid_half_span {
        Some(span) => frequency_grid(cfg.molecule.omega_m, span, cfg.grid_points),
        None => {
            let full = default_grid(&cfg.cavity, &cfg.molecule)?;
            if cfg.grid_points == full.len() {
                Ok(full)
            } else {
                let span = 0.5 * (full[full.len() - 1] - full[0]);
                frequency_grid(cfg.molecule.omega_m, span, cfg.grid_points)
            }
        }
    }
}

/// Elastic spectrum and absorption on the output grid:
/// `omega_d, transmission, absorption_re, absorption_im`.
pub fn run_spectrum(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let model = ResponseModel::new(cfg.cavity, cfg.molecule.clone(), &cfg.env, &cfg.ctrl)?;
    let grid = output_grid(cfg)?;
    header(out, cfg, "spectrum")?;
    writeln!(out, "omega_d,transmission,absorption_re,absorption_im")?;
    let shift = cfg.molecule.polaron_shift();
    let rows: Vec<String> = grid
        .par_iter()
        .map(|&w| {
            let r = response_function(&cfg.cavity, &cfg.molecule, model.absorption(), w);
            let a = model.absorption().eval(w - cfg.molecule.omega_m + shift);
            format!("{},{},{},{}", fmt(w), fmt(r.norm_sqr()), fmt(a.re), fmt(a.im))
        })
        .collect();
    for row in rows {
        writeln!(out, "{row}")?;
    }
    Ok(())
}

/// Molecular absorption profile on the output grid:
/// `omega, profile, absorption_re, absorption_im` with the profile
/// Re(-A(omega - omega_m + shift)) peaked near the shifted exciton line.
pub fn run_absorption(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let model = ResponseModel::new(cfg.cavity, cfg.molecule.clone(), &cfg.env, &cfg.ctrl)?;
    let grid = output_grid(cfg)?;
    header(out, cfg, "absorption")?;
    writeln!(out, "omega,profile,absorption_re,absorption_im")?;
    let shift = cfg.molecule.polaron_shift();
    for &w in &grid {
        let a = model.absorption().eval(w - cfg.molecule.omega_m + shift);
        writeln!(out, "{},{},{},{}", fmt(w), fmt(-a.re), fmt(a.re), fmt(a.im))?;
    }
    Ok(())
}

fn write_features(out: &mut dyn Write, f: &PolaritonFeatures) -> Result<()> {
    writeln!(out, "name,value")?;
    writeln!(out, "omega_plus,{}", fmt(f.omega_plus))?;
    writeln!(out, "omega_minus,{}", fmt(f.omega_minus))?;
    writeln!(out, "rabi_splitting,{}", fmt(f.rabi_splitting))?;
    writeln!(out, "delta_r,{}", fmt(f.delta_r))?;
    writeln!(out, "linewidth_plus,{}", fmt(f.linewidth_plus))?;
    writeln!(out, "linewidth_minus,{}", fmt(f.linewidth_minus))?;
    writeln!(out, "intensity_ratio,{}", fmt(f.intensity_ratio))?;
    match f.delta_gamma {
        Some(v) => writeln!(out, "delta_gamma,{}", fmt(v))?,
        None => writeln!(out, "delta_gamma,")?,
    }
    Ok(())
}

/// Parse the record written by [`run_features`] back into features.
pub fn parse_features(text: &str) -> Result<PolaritonFeatures> {
    let mut map = std::collections::HashMap::new();
    for line in text.lines() {
        if line.starts_with('#') || line.starts_with("name,") || line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once(',')
            .ok_or_else(|| Error::Config(format!("bad feature line '{line}'")))?;
        map.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| -> Result<f64> {
        map.get(k)
            .ok_or_else(|| Error::Config(format!("missing feature '{k}'")))?
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("bad value for '{k}'")))
    };
    let delta_gamma = match map.get("delta_gamma").map(String::as_str) {
        None | Some("") => None,
        Some(v) => Some(v.parse::<f64>().map_err(|_| Error::Config("bad delta_gamma".into()))?),
    };
    Ok(PolaritonFeatures {
        omega_plus: get("omega_plus")?,
        omega_minus: get("omega_minus")?,
        rabi_splitting: get("rabi_splitting")?,
        delta_r: get("delta_r")?,
        linewidth_plus: get("linewidth_plus")?,
        linewidth_minus: get("linewidth_minus")?,
        intensity_ratio: get("intensity_ratio")?,
        delta_gamma,
    })
}

/// Extract the polariton observables over the configured detuning range.
pub fn run_features(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let model = ResponseModel::new(cfg.cavity, cfg.molecule.clone(), &cfg.env, &cfg.ctrl)?;
    let (lo, hi) = cfg.detuning_range;
    let features = analysis::extract_features(&model, lo, hi)?;
    header(out, cfg, "features")?;
    write_features(out, &features)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParameter {
    Detuning,
    Temperature,
}

impl std::str::FromStr for SweepParameter {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "detuning" => Ok(Self::Detuning),
            "temperature" => Ok(Self::Temperature),
            other => Err(Error::Config(format!(
                "unknown sweep parameter '{other}' (expected detuning or temperature)"
            ))),
        }
    }
}

const SWEEP_COLUMNS: &str = "value,omega_plus,omega_minus,rabi_splitting,delta_r,\
linewidth_plus,linewidth_minus,intensity_ratio,delta_gamma,reason";

fn sweep_row(value: f64, result: Result<PolaritonFeatures>) -> String {
    let mut row = String::new();
    let _ = write!(row, "{}", fmt(value));
    match result {
        Ok(f) => {
            let dg = f.delta_gamma.map(fmt).unwrap_or_default();
            let _ = write!(
                row,
                ",{},{},{},{},{},{},{},{},",
                fmt(f.omega_plus),
                fmt(f.omega_minus),
                fmt(f.rabi_splitting),
                fmt(f.delta_r),
                fmt(f.linewidth_plus),
                fmt(f.linewidth_minus),
                fmt(f.intensity_ratio),
                dg
            );
        }
        Err(e) => {
            let _ = write!(row, ",,,,,,,,,{}", e.to_string().replace(',', ";"));
        }
    }
    row
}

/// Sweep one parameter and report the features per point. Detuning rows hold
/// the fixed-detuning observables (peaks, separation, linewidths, ratio at
/// that detuning); temperature rows hold the full extraction including
/// delta_R. Failed rows keep their reason and the sweep continues.
pub fn run_sweep(
    cfg: &RunConfig,
    param: SweepParameter,
    start: f64,
    stop: f64,
    count: usize,
    out: &mut dyn Write,
) -> Result<()> {
    if count < 2 {
        return Err(Error::Config(format!("sweep needs count >= 2, got {count}")));
    }
    let step = (stop - start) / (count - 1) as f64;
    let values: Vec<f64> = (0..count).map(|i| start + i as f64 * step).collect();

    let rows: Vec<String> = match param {
        SweepParameter::Detuning => {
            let model =
                ResponseModel::new(cfg.cavity, cfg.molecule.clone(), &cfg.env, &cfg.ctrl)?;
            values
                .par_iter()
                .map(|&delta| {
                    let result = (|| {
                        let [(om, ym), (op, yp)] = model.polariton_peaks(delta)?;
                        let (wl, wu) = model.polariton_linewidths(delta)?;
                        Ok(PolaritonFeatures {
                            omega_plus: op,
                            omega_minus: om,
                            rabi_splitting: op - om,
                            delta_r: delta,
                            linewidth_plus: wu,
                            linewidth_minus: wl,
                            intensity_ratio: yp / ym,
                            delta_gamma: None,
                        })
                    })();
                    sweep_row(delta, result)
                })
                .collect()
        }
        SweepParameter::Temperature => values
            .par_iter()
            .map(|&kt| {
                let result = (|| {
                    let env = ThermalEnv::new(kt, cfg.env.cutoff)?;
                    let model =
                        ResponseModel::new(cfg.cavity, cfg.molecule.clone(), &env, &cfg.ctrl)?;
                    let (lo, hi) = cfg.detuning_range;
                    analysis::extract_features(&model, lo, hi)
                })();
                sweep_row(kt, result)
            })
            .collect(),
    };

    header(out, cfg, "sweep")?;
    writeln!(out, "{SWEEP_COLUMNS}")?;
    for row in rows {
        writeln!(out, "{row}")?;
    }
    Ok(())
}

/// Coupled-oscillator reference: eigenfrequencies in the header, then the
/// S = 0 spectrum as `omega_d, transmission`.
pub fn run_baseline(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let kappa_m = effective_kappa_m(&cfg.molecule)?;
    let detuning = cfg.cavity.omega_c - cfg.molecule.omega_m;
    let grid = output_grid(cfg)?;
    let reference = coupled_oscillator_reference(&cfg.cavity, kappa_m, detuning, &grid)?;
    header(out, cfg, "baseline")?;
    writeln!(out, "# omega_plus = {}", fmt(reference.omega_plus))?;
    writeln!(out, "# omega_minus = {}", fmt(reference.omega_minus))?;
    writeln!(
        out,
        "# complex_plus = {} {}",
        fmt(reference.complex_plus.re),
        fmt(reference.complex_plus.im)
    )?;
    writeln!(
        out,
        "# complex_minus = {} {}",
        fmt(reference.complex_minus.re),
        fmt(reference.complex_minus.im)
    )?;
    writeln!(out, "omega_d,transmission")?;
    for (w, v) in reference.spectrum.grid().iter().zip(reference.spectrum.values()) {
        writeln!(out, "{},{}", fmt(*w), fmt(*v))?;
    }
    Ok(())
}

/// One validation check: name, measured error, tolerance.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.measured <= self.tolerance
    }
}

/// Normalization, convolution-table, series-vs-oracle and detailed-balance
/// checks for the configured system. Returns an error (exit 5) if any fails.
pub fn run_validate(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let mut checks: Vec<Check> = Vec::new();

    // normalization of the closed-form P(E)
    let p = total_pe(&cfg.molecule.modes, &cfg.env, &cfg.ctrl)?;
    checks.push(Check {
        name: "normalization".into(),
        measured: (p.integral() - 1.0).abs(),
        tolerance: 1e-10,
    });

    // convolution table against direct numerical convolution
    let grid: Vec<f64> = {
        let n = 4096;
        let h = 80.0 / n as f64;
        (0..=n).map(|i| (i as i64 - (n / 2) as i64) as f64 * h).collect()
    };
    let h = grid[1] - grid[0];
    let (g1, g2) = (0.4, 0.7);
    let sample = |m: &Mixture| -> Result<Spectrum> {
        let vals = grid.iter().map(|&x| m.eval(x)).collect::<Result<Vec<_>>>()?;
        Spectrum::new(grid.clone(), vals)
    };
    let table = [
        ("convolution_ff", Mixture::lorentzian(0.7, g1)?, Mixture::lorentzian(-0.2, g2)?),
        ("convolution_gf", Mixture::hilbert(0.7, g1)?, Mixture::lorentzian(-0.2, g2)?),
        ("convolution_gg", Mixture::hilbert(0.7, g1)?, Mixture::hilbert(-0.2, g2)?),
    ];
    for (name, a, b) in table {
        let closed = sample(&a.convolve(&b))?;
        let numeric = oracle::convolve_numeric(&sample(&a)?, &sample(&b)?)?;
        let l1: f64 = closed
            .values()
            .iter()
            .zip(numeric.values())
            .map(|(x, y)| (x - y).abs() * h)
            .sum();
        checks.push(Check { name: name.into(), measured: l1, tolerance: 1e-3 });
    }

    // per-mode oracle checks
    for (i, mode) in cfg.molecule.modes.iter().enumerate() {
        let folded = mode.folded();
        let tg_full = TimeGrid::for_mode(&folded, &cfg.env)?;
        let tg = TimeGrid::new(tg_full.t_max, 1 << 15)?;
        let reg = 4.0 * tg.energy_step();
        let numeric = oracle::p_numeric(&folded, &cfg.env, &tg, Regularizer::Lorentzian(reg))?;
        let closed = total_pe(std::slice::from_ref(mode), &cfg.env, &cfg.ctrl)?
            .convolve(&Mixture::lorentzian(0.0, reg)?);
        let mut err = 0.0;
        let mut norm = 0.0;
        let span = 40.0 * folded.omega_v.max(1.0);
        for (x, v) in numeric.grid().iter().zip(numeric.values()).step_by(4) {
            if x.abs() > span {
                continue;
            }
            err += (closed.eval(*x)? - v).abs();
            norm += v.abs();
        }
        checks.push(Check {
            name: format!("series_vs_oracle.mode{}", i + 1),
            measured: err / norm,
            tolerance: 1e-2,
        });

        // detailed balance on the oracle P with a Gaussian window:
        // ln[P(E)/P(-E)] = +beta E
        let sigma = 4.0 * tg.energy_step();
        let db = oracle::p_numeric(&folded, &cfg.env, &tg, Regularizer::Gaussian(sigma))?;
        let beta = cfg.env.beta();
        let max = db.values().iter().cloned().fold(0.0_f64, f64::max);
        let at = |x: f64| {
            let i = ((x - db.grid()[0]) / db.spacing()).round() as usize;
            db.values()[i]
        };
        let mut worst = 0.0_f64;
        let mut tested = false;
        for k in 1..200 {
            let e_val = 0.5 + 0.05 * k as f64;
            let (p_pos, p_neg) = (at(e_val), at(-e_val));
            if p_pos < 1e-6 * max || p_neg < 1e-6 * max || beta * e_val < 0.5 {
                continue;
            }
            tested = true;
            let dev = ((p_pos / p_neg).ln() - beta * e_val).abs() / (beta * e_val);
            worst = worst.max(dev);
        }
        checks.push(Check {
            name: format!("detailed_balance.mode{}", i + 1),
            measured: if tested { worst } else { 0.0 },
            tolerance: 1e-2,
        });
    }

    header(out, cfg, "validate")?;
    writeln!(out, "check,measured,tolerance,status")?;
    let mut failures = Vec::new();
    for c in &checks {
        let status = if c.passed() { "pass" } else { "FAIL" };
        writeln!(out, "{},{},{},{}", c.name, fmt(c.measured), fmt(c.tolerance), status)?;
        if !c.passed() {
            failures.push(c.name.clone());
        }
    }
    if !failures.is_empty() {
        return Err(Error::ValidationFailed(failures.join(", ")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "
        cavity.omega_c = 50.0
        cavity.kappa_c = 2.0
        cavity.g_n = 7.0
        molecule.omega_m = 50.0
        molecule.kappa_tilde = 0.01
        mode.1.omega_v = 1.0
        mode.1.huang_rhys = 1.0
        mode.1.quality = 0.9
        env.k_b_t = 2.0
    ";

    #[test]
    fn features_round_trip() {
        let f = PolaritonFeatures {
            omega_plus: 53.2,
            omega_minus: 46.1,
            rabi_splitting: 7.1,
            delta_r: -0.7,
            linewidth_plus: 2.4,
            linewidth_minus: 1.9,
            intensity_ratio: 0.83,
            delta_gamma: Some(1.2),
        };
        let mut buf = Vec::new();
        write_features(&mut buf, &f).unwrap();
        let back = parse_features(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(f, back);

        let g = PolaritonFeatures { delta_gamma: None, ..f };
        let mut buf = Vec::new();
        write_features(&mut buf, &g).unwrap();
        let back = parse_features(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn spectrum_is_deterministic() {
        let cfg = RunConfig::from_str(&format!("{BASE}\nnumerics.grid_points = 512")).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        run_spectrum(&cfg, &mut a).unwrap();
        run_spectrum(&cfg, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bare_cavity_transmission_column() {
        let cfg = RunConfig::from_str(
            "cavity.omega_c = 50.0
             cavity.kappa_c = 0.5
             cavity.g_n = 0.0
             molecule.omega_m = 50.0
             molecule.kappa_tilde = 0.3
             mode.1.omega_v = 1.0
             mode.1.huang_rhys = 0.0
             mode.1.quality = 4.0
             env.k_b_t = 1.0
             numerics.grid_points = 2049
             numerics.grid_half_span = 4.0",
        )
        .unwrap();
        let mut buf = Vec::new();
        run_spectrum(&cfg, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut best = (0.0_f64, 0.0_f64);
        for line in text.lines().filter(|l| !l.starts_with('#') && !l.starts_with("omega")) {
            let cols: Vec<&str> = line.split(',').collect();
            let (w, t) = (cols[0].parse::<f64>().unwrap(), cols[1].parse::<f64>().unwrap());
            if t > best.1 {
                best = (w, t);
            }
        }
        assert!((best.0 - 50.0).abs() < 0.01);
        assert!((best.1 - 16.0).abs() < 0.01); // (2/kappa_c)^2
    }
}
