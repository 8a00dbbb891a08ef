//! Extraction of the experimental observables from spectra: polariton peak
//! positions, FWHM linewidths, the Rabi splitting and its detuning, the
//! equal-linewidth detuning and peak intensity ratios.
//!
//! Everything operates on the analytic evaluators (the response function is
//! evaluated in closed form at arbitrary frequency), so the tolerances below
//! are independent of any output grid.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pe::{SeriesControl, ThermalEnv};
use crate::response::{
    absorption_mixture, response_function, AbsorptionFunction, CavityParams, MoleculeParams,
};

/// Position refinement tolerance for peaks, in the common frequency unit.
pub const PEAK_TOL: f64 = 1e-6;
/// Refinement tolerance for the Rabi-splitting detuning.
pub const DETUNING_TOL: f64 = 1e-4;
/// Bisection tolerance for the equal-linewidth detuning.
pub const EQUAL_WIDTH_TOL: f64 = 1e-3;
/// A peak counts as dominant above this fraction of the global maximum.
pub const DOMINANCE_THRESHOLD: f64 = 0.05;

/// Observables of a two-peak polariton spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct PolaritonFeatures {
    /// Upper and lower polariton positions at the minimum-splitting detuning.
    pub omega_plus: f64,
    pub omega_minus: f64,
    /// Minimum peak separation over detuning.
    pub rabi_splitting: f64,
    /// Detuning omega_c - omega_m at which the splitting is minimal.
    pub delta_r: f64,
    /// FWHM linewidths of the two polaritons at delta_r.
    pub linewidth_plus: f64,
    pub linewidth_minus: f64,
    /// Upper/lower peak height ratio at delta_r.
    pub intensity_ratio: f64,
    /// Detuning at which the two linewidths are equal, when bracketed.
    pub delta_gamma: Option<f64>,
}

/// Golden-section maximization on a bracket.
fn golden_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// All local maxima of `f` on `[lo, hi]`: coarse scan on `n_coarse` points,
/// then golden-section refinement to [`PEAK_TOL`]. Sorted ascending.
pub fn find_peaks(
    f: &(dyn Fn(f64) -> f64 + Sync),
    lo: f64,
    hi: f64,
    n_coarse: usize,
) -> Result<Vec<(f64, f64)>> {
    if !(hi > lo) || n_coarse < 8 {
        return Err(Error::InvalidGrid(format!("bad peak bracket [{lo}, {hi}] / {n_coarse}")));
    }
    let h = (hi - lo) / (n_coarse - 1) as f64;
    let ys: Vec<f64> = (0..n_coarse)
        .into_par_iter()
        .map(|i| f(lo + i as f64 * h))
        .collect();
    let mut peaks = Vec::new();
    for i in 1..n_coarse - 1 {
        if ys[i] > ys[i - 1] && ys[i] >= ys[i + 1] {
            let (x, y) = golden_max(&f, lo + (i - 1) as f64 * h, lo + (i + 1) as f64 * h, PEAK_TOL);
            if peaks
                .last()
                .map_or(true, |&(px, _): &(f64, f64)| (x - px).abs() > 10.0 * PEAK_TOL)
            {
                peaks.push((x, y));
            }
        }
    }
    if peaks.is_empty() {
        return Err(Error::NoPeaks(lo, hi));
    }
    Ok(peaks)
}

/// Full width at half maximum of an isolated peak: each half-height crossing
/// located by an outward walk plus bisection to [`PEAK_TOL`]. If the curve
/// turns back up before crossing half height (or the bracket ends), the peak
/// overlaps its neighbor and no width is defined.
pub fn fwhm(
    f: &dyn Fn(f64) -> f64,
    peak: f64,
    height: f64,
    lo: f64,
    hi: f64,
) -> Result<f64> {
    let half = 0.5 * height;
    let crossing = |dir: f64, limit: f64, side: &'static str| -> Result<f64> {
        let mut step = 1e3 * PEAK_TOL;
        let mut x_prev = peak;
        let mut y_prev = height;
        loop {
            let x = peak + dir * ((x_prev - peak).abs() + step);
            if (dir > 0.0 && x > limit) || (dir < 0.0 && x < limit) {
                return Err(Error::OverlappingPeaks { side, peak });
            }
            let y = f(x);
            if y <= half {
                // bisect between x_prev and x
                let (mut a, mut b) = (x_prev, x);
                while (b - a).abs() > PEAK_TOL {
                    let m = 0.5 * (a + b);
                    if f(m) > half {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                return Ok(0.5 * (a + b));
            }
            if y > y_prev {
                // rising again above half height: the neighbor peak took over
                return Err(Error::OverlappingPeaks { side, peak });
            }
            x_prev = x;
            y_prev = y;
            step *= 1.6;
        }
    };
    let right = crossing(1.0, hi, "upper")?;
    let left = crossing(-1.0, lo, "lower")?;
    Ok(right - left)
}

/// Prepared evaluators for one molecule + environment; the absorption mixture
/// is built once and shared across detunings and drive frequencies.
pub struct ResponseModel {
    pub cav: CavityParams,
    pub mol: MoleculeParams,
    absorption: AbsorptionFunction,
}

impl ResponseModel {
    pub fn new(
        cav: CavityParams,
        mol: MoleculeParams,
        env: &ThermalEnv,
        ctrl: &SeriesControl,
    ) -> Result<Self> {
        let absorption = absorption_mixture(&mol, env, ctrl)?;
        Ok(Self { cav, mol, absorption })
    }

    pub fn absorption(&self) -> &AbsorptionFunction {
        &self.absorption
    }

    /// |r(w)|^2 at detuning `delta = omega_c - omega_m`.
    pub fn transmission_at(&self, delta: f64, omega: f64) -> f64 {
        let cav = self.cav.with_detuning(self.mol.omega_m, delta);
        response_function(&cav, &self.mol, &self.absorption, omega).norm_sqr()
    }

    /// Scan bracket wide enough to hold both polariton branches at `delta`.
    fn bracket(&self, delta: f64) -> (f64, f64) {
        let center = self.mol.omega_m + 0.5 * delta;
        let span = 2.0 * self.cav.g_n + delta.abs() + 5.0 * self.absorption.kappa_m().max(1.0);
        (center - span, center + span)
    }

    /// The two dominant polariton peaks at a given detuning, sorted ascending.
    /// More than two peaks above the dominance threshold is ambiguous; fewer
    /// than two means no resolvable splitting.
    pub fn polariton_peaks(&self, delta: f64) -> Result<[(f64, f64); 2]> {
        let (lo, hi) = self.bracket(delta);
        let f = move |w: f64| self.transmission_at(delta, w);
        let peaks = find_peaks(&f, lo, hi, 2048)?;
        let top = peaks.iter().map(|p| p.1).fold(0.0_f64, f64::max);
        let dominant: Vec<_> = peaks
            .iter()
            .filter(|p| p.1 >= DOMINANCE_THRESHOLD * top)
            .collect();
        match dominant.len() {
            2 => Ok([*dominant[0], *dominant[1]]),
            n if n > 2 => Err(Error::AmbiguousSplitting {
                count: n,
                threshold: DOMINANCE_THRESHOLD * 100.0,
            }),
            _ => Err(Error::NoSplitting),
        }
    }

    /// Peak separation at a detuning.
    pub fn splitting(&self, delta: f64) -> Result<f64> {
        let [(lo, _), (hi, _)] = self.polariton_peaks(delta)?;
        Ok(hi - lo)
    }

    /// FWHM linewidths (lower, upper) of the two polaritons at a detuning.
    pub fn polariton_linewidths(&self, delta: f64) -> Result<(f64, f64)> {
        let [(x_lo, y_lo), (x_hi, y_hi)] = self.polariton_peaks(delta)?;
        let (blo, bhi) = self.bracket(delta);
        let mid = 0.5 * (x_lo + x_hi);
        let f = |w: f64| self.transmission_at(delta, w);
        let lower = fwhm(&f, x_lo, y_lo, blo, mid)?;
        let upper = fwhm(&f, x_hi, y_hi, mid, bhi)?;
        Ok((lower, upper))
    }
}

/// Rabi splitting: minimize the peak separation over detuning by a coarse
/// scan (step omega_v / 4) plus golden-section refinement. Returns
/// `(R, delta_R)`.
pub fn rabi_splitting(
    model: &ResponseModel,
    delta_lo: f64,
    delta_hi: f64,
) -> Result<(f64, f64)> {
    let unit = model
        .mol
        .modes
        .iter()
        .map(|m| m.omega_v)
        .fold(f64::INFINITY, f64::min)
        .min(1.0);
    let step = 0.25 * unit;
    let n = ((delta_hi - delta_lo) / step).ceil() as usize + 1;
    let seps: Vec<(f64, Result<f64>)> = (0..n)
        .map(|i| {
            let d = delta_lo + i as f64 * step;
            (d.min(delta_hi), model.splitting(d.min(delta_hi)))
        })
        .collect();
    // surface ambiguity anywhere in the range; skip weak-coupling edges
    let mut best: Option<(f64, f64)> = None;
    for (d, r) in &seps {
        match r {
            Ok(sep) => {
                if best.map_or(true, |(_, s)| *sep < s) {
                    best = Some((*d, *sep));
                }
            }
            Err(Error::AmbiguousSplitting { count, threshold }) => {
                return Err(Error::AmbiguousSplitting { count: *count, threshold: *threshold })
            }
            Err(_) => {}
        }
    }
    let (d0, _) = best.ok_or(Error::NoSplitting)?;
    let objective = |d: f64| model.splitting(d).unwrap_or(f64::INFINITY);
    let (delta_r, neg) = golden_max(
        &|d| -objective(d),
        (d0 - step).max(delta_lo),
        (d0 + step).min(delta_hi),
        DETUNING_TOL,
    );
    Ok((-neg, delta_r))
}

/// Detuning at which upper and lower polariton linewidths are equal: root of
/// `Gamma_+(delta) - Gamma_-(delta)` by bisection to [`EQUAL_WIDTH_TOL`].
pub fn equal_linewidth_detuning(
    model: &ResponseModel,
    delta_lo: f64,
    delta_hi: f64,
) -> Result<f64> {
    let diff = |d: f64| -> Result<f64> {
        let (lower, upper) = model.polariton_linewidths(d)?;
        Ok(upper - lower)
    };
    // coarse scan for a sign change over the valid part of the range
    let n = 33;
    let h = (delta_hi - delta_lo) / (n - 1) as f64;
    let samples: Vec<(f64, f64)> = (0..n)
        .filter_map(|i| {
            let d = delta_lo + i as f64 * h;
            diff(d).ok().map(|v| (d, v))
        })
        .collect();
    let mut bracket = None;
    for w in samples.windows(2) {
        if w[0].1.signum() != w[1].1.signum() {
            bracket = Some((w[0].0, w[1].0, w[0].1));
            break;
        }
    }
    let (mut a, mut b, fa) = bracket.ok_or(Error::NotBracketed(delta_lo, delta_hi))?;
    let mut sign_a = fa.signum();
    while (b - a).abs() > EQUAL_WIDTH_TOL {
        let m = 0.5 * (a + b);
        let fm = diff(m)?;
        if fm.signum() == sign_a {
            a = m;
            sign_a = fm.signum();
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Upper/lower peak height ratio at a given detuning.
pub fn intensity_ratio(model: &ResponseModel, delta: f64) -> Result<f64> {
    let [(_, y_lo), (_, y_hi)] = model.polariton_peaks(delta)?;
    Ok(y_hi / y_lo)
}

/// Full feature extraction: Rabi splitting and detuning, then linewidths and
/// intensity ratio at that detuning, plus the equal-linewidth detuning when
/// it is bracketed by the scan range.
pub fn extract_features(
    model: &ResponseModel,
    delta_lo: f64,
    delta_hi: f64,
) -> Result<PolaritonFeatures> {
    let (rabi, delta_r) = rabi_splitting(model, delta_lo, delta_hi)?;
    let [(omega_minus, y_lo), (omega_plus, y_hi)] = model.polariton_peaks(delta_r)?;
    let (linewidth_minus, linewidth_plus) = model.polariton_linewidths(delta_r)?;
    let delta_gamma = equal_linewidth_detuning(model, delta_lo, delta_hi).ok();
    Ok(PolaritonFeatures {
        omega_plus,
        omega_minus,
        rabi_splitting: rabi,
        delta_r,
        linewidth_plus,
        linewidth_minus,
        intensity_ratio: y_hi / y_lo,
        delta_gamma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lineshape::eval_f;
    use crate::pe::VibrationalMode;
    use crate::response::resonance_peaks_closed_form;
    use approx::assert_relative_eq;

    fn s0_model(g: f64, kc: f64, km: f64, detuning: f64) -> ResponseModel {
        let cav = CavityParams::new(50.0 + detuning, kc, g).unwrap();
        let mol = MoleculeParams::new(50.0, km, vec![]).unwrap();
        let env = ThermalEnv::new(1.0, 25.0).unwrap();
        ResponseModel::new(cav, mol, &env, &SeriesControl::default()).unwrap()
    }

    #[test]
    fn single_lorentzian_peak() {
        let f = |w: f64| eval_f(w, 1.3, 0.4).unwrap();
        let peaks = find_peaks(&f, -5.0, 8.0, 512).unwrap();
        assert_eq!(peaks.len(), 1);
        assert_relative_eq!(peaks[0].0, 1.3, epsilon = 1e-6);
        let width = fwhm(&f, peaks[0].0, peaks[0].1, -5.0, 8.0).unwrap();
        assert_relative_eq!(width, 0.8, epsilon = 1e-5);
    }

    #[test]
    fn no_peaks_is_an_error() {
        let f = |w: f64| w; // monotone
        assert!(matches!(find_peaks(&f, 0.0, 1.0, 64), Err(Error::NoPeaks(..))));
    }

    #[test]
    fn s0_resonant_peaks_at_pm_g() {
        // negligible dissipation: peaks at omega_m +- g
        let model = s0_model(5.0, 1e-3, 1e-3, 0.0);
        let [(lo, _), (hi, _)] = model.polariton_peaks(0.0).unwrap();
        assert_relative_eq!(lo, 45.0, epsilon = 1e-4);
        assert_relative_eq!(hi, 55.0, epsilon = 1e-4);
    }

    #[test]
    fn s0_resonance_closed_form_and_approximation() {
        let (g, kc, km) = (5.0, 1.2, 0.8);
        let model = s0_model(g, kc, km, 0.0);
        let [(lo, _), (hi, _)] = model.polariton_peaks(0.0).unwrap();
        let (cp, cm) = resonance_peaks_closed_form(50.0, g, kc, km);
        assert_relative_eq!(hi, cp, epsilon = 1e-4);
        assert_relative_eq!(lo, cm, epsilon = 1e-4);
        // dissipation strictly increases the splitting in strong coupling
        assert!(hi - lo >= 2.0 * g);
    }

    #[test]
    fn s0_symmetric_features() {
        let model = s0_model(4.0, 0.6, 0.6, 0.0);
        let (rabi, delta_r) = rabi_splitting(&model, -8.0, 8.0).unwrap();
        assert!(delta_r.abs() < 2.0 * DETUNING_TOL, "delta_R = {delta_r}");
        let (cp, cm) = resonance_peaks_closed_form(50.0, 4.0, 0.6, 0.6);
        assert_relative_eq!(rabi, cp - cm, epsilon = 1e-3);
        let ratio = intensity_ratio(&model, 0.0).unwrap();
        assert_relative_eq!(ratio, 1.0, epsilon = 1e-6);
        // both linewidths equal (kc + km)/2 within 5% in the g >> kappa regime
        let (wl, wu) = model.polariton_linewidths(0.0).unwrap();
        assert_relative_eq!(wl, wu, max_relative = 1e-4);
        assert_relative_eq!(wl, 0.6, max_relative = 0.05);
        // equal-linewidth detuning is zero by symmetry
        let dg = equal_linewidth_detuning(&model, -4.0, 4.0).unwrap();
        assert!(dg.abs() < 2.0 * EQUAL_WIDTH_TOL);
    }

    #[test]
    fn golden_section_matches_dense_scan() {
        let model = s0_model(4.0, 1.0, 0.3, 0.0);
        let (_, delta_r) = rabi_splitting(&model, -6.0, 6.0).unwrap();
        let mut best = (f64::INFINITY, 0.0);
        let mut d = -2.0;
        while d <= 2.0 {
            let s = model.splitting(d).unwrap();
            if s < best.0 {
                best = (s, d);
            }
            d += 1e-3;
        }
        assert!((delta_r - best.1).abs() < 2e-3, "golden {delta_r}, dense {}", best.1);
    }

    #[test]
    fn vibronic_subpeaks_are_ambiguous() {
        // resolved vibronic structure: more than two dominant peaks
        let g = 3.5;
        let cav = CavityParams::new(50.0, g / 3.5, g).unwrap();
        let mol = MoleculeParams::new(
            50.0,
            0.01 * g,
            vec![VibrationalMode::new(1.0, 1.0, 5.0, 1).unwrap()],
        )
        .unwrap();
        let env = ThermalEnv::new(g / 3.5, 25.0).unwrap();
        let model = ResponseModel::new(cav, mol, &env, &SeriesControl::default()).unwrap();
        let peaks = {
            let f = |w: f64| model.transmission_at(0.0, w);
            find_peaks(&f, 40.0, 60.0, 4096).unwrap()
        };
        assert!(peaks.len() > 2, "found {} peaks", peaks.len());
        assert!(matches!(
            model.polariton_peaks(0.0),
            Err(Error::AmbiguousSplitting { .. })
        ));
    }

    #[test]
    fn weak_coupling_has_no_splitting() {
        let model = s0_model(0.05, 1.0, 1.0, 0.0);
        assert!(matches!(model.polariton_peaks(0.0), Err(Error::NoSplitting)));
    }

    #[test]
    fn overlapping_peaks_refuse_fwhm() {
        // two Lorentzians too close for a half crossing between them
        let f = |w: f64| eval_f(w, -0.4, 0.5).unwrap() + eval_f(w, 0.4, 0.5).unwrap();
        let peaks = find_peaks(&f, -4.0, 4.0, 2048).unwrap();
        assert_eq!(peaks.len(), 2);
        let res = fwhm(&f, peaks[0].0, peaks[0].1, -4.0, 0.0);
        assert!(matches!(res, Err(Error::OverlappingPeaks { .. })));
    }
}
