//! Closed-form P(E) construction for Brownian-damped vibrations.
//!
//! P(E) is the probability density for the vibrational environment to emit
//! (E > 0) or absorb (E < 0) energy E during an electronic transition. For a
//! harmonic vibration of frequency `omega_v` damped at rate `gamma = omega_v/Q`
//! it factorizes, pole by pole of the momentum-noise integrand, into
//!
//! * two vibronic series P+ and P- from the poles of the response of the
//!   damped oscillator (underdamped: oscillatory at the renormalized
//!   frequency; overdamped: two pure decay rates), and
//! * one zero-centered Lorentzian series P_k per thermal (Matsubara) pole of
//!   coth, truncated at the Ohmic cutoff `omega_L`.
//!
//! Every factor is the Fourier transform of `exp[(a + i b sgn t)(e^{i w0 t - G|t|} - 1)]`,
//! computed in closed form by [`exp_correlator_transform`]; the total P(E) is
//! the convolution of all factors. All frequencies share one unit and
//! `hbar = k_B = 1`.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::lineshape::{Mixture, PoleAtom, DEFAULT_PRUNE_FLOOR};

/// Relative window around Q = 1/2 rejected as critical damping.
const CRITICAL_Q_TOL: f64 = 1e-12;

/// Relative detection threshold for a dissipation rate coinciding with a
/// Matsubara frequency (a double pole of the integrand).
const DOUBLE_POLE_TOL: f64 = 1e-9;

/// One Brownian-damped vibrational mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VibrationalMode {
    /// Bare vibrational frequency, > 0.
    pub omega_v: f64,
    /// Huang-Rhys factor S >= 0.
    pub huang_rhys: f64,
    /// Quality factor Q = omega_v / gamma, > 0 and != 1/2.
    pub quality: f64,
    /// Number of identical independent copies of this mode.
    pub multiplicity: u32,
}

impl VibrationalMode {
    pub fn new(omega_v: f64, huang_rhys: f64, quality: f64, multiplicity: u32) -> Result<Self> {
        if !(omega_v > 0.0) || !omega_v.is_finite() {
            return Err(Error::InvalidMode(format!("omega_v must be > 0, got {omega_v}")));
        }
        if !(huang_rhys >= 0.0) || !huang_rhys.is_finite() {
            return Err(Error::InvalidMode(format!("huang_rhys must be >= 0, got {huang_rhys}")));
        }
        if !(quality > 0.0) || !quality.is_finite() {
            return Err(Error::InvalidMode(format!("quality must be > 0, got {quality}")));
        }
        if (quality - 0.5).abs() <= CRITICAL_Q_TOL * 0.5 {
            return Err(Error::CriticalDamping);
        }
        if multiplicity == 0 {
            return Err(Error::InvalidMode("multiplicity must be >= 1".into()));
        }
        Ok(Self { omega_v, huang_rhys, quality, multiplicity })
    }

    /// Damping rate gamma = omega_v / Q.
    pub fn gamma(&self) -> f64 {
        self.omega_v / self.quality
    }

    /// The same mode with the Huang-Rhys factor folded by multiplicity,
    /// S -> M S, M -> 1. M identical independent modes convolve to exactly
    /// this single effective mode.
    pub fn folded(&self) -> Self {
        Self {
            huang_rhys: self.huang_rhys * self.multiplicity as f64,
            multiplicity: 1,
            ..*self
        }
    }
}

/// Thermal environment of the vibrations: temperature and Ohmic cutoff.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThermalEnv {
    /// k_B T in the common frequency unit, > 0.
    pub temperature: f64,
    /// Cutoff frequency omega_L for the Matsubara series, > 0.
    pub cutoff: f64,
}

impl ThermalEnv {
    pub fn new(temperature: f64, cutoff: f64) -> Result<Self> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::InvalidEnvironment(format!(
                "temperature must be > 0, got {temperature}"
            )));
        }
        if !(cutoff > 0.0) || !cutoff.is_finite() {
            return Err(Error::InvalidEnvironment(format!("cutoff must be > 0, got {cutoff}")));
        }
        Ok(Self { temperature, cutoff })
    }

    /// Cutoff defaulted to 25 times the largest vibrational frequency.
    pub fn with_default_cutoff(temperature: f64, modes: &[VibrationalMode]) -> Result<Self> {
        let max_omega = modes.iter().map(|m| m.omega_v).fold(1.0_f64, f64::max);
        Self::new(temperature, 25.0 * max_omega)
    }

    pub fn beta(&self) -> f64 {
        1.0 / self.temperature
    }

    /// Number of Matsubara modes below the cutoff:
    /// k_max = floor(omega_L / (2 pi k_B T)).
    pub fn matsubara_count(&self) -> usize {
        (self.cutoff / (2.0 * PI * self.temperature)).floor() as usize
    }

    /// omega_k = 2 pi k k_B T.
    pub fn matsubara_frequency(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 * self.temperature
    }
}

/// Damping regime of a mode, with its derived rates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Regime {
    /// Q > 1/2: oscillatory motion at the renormalized frequency
    /// `omega_v sqrt(1 - 1/(4Q^2))`, both poles decaying at gamma/2.
    Underdamped { renormalized_frequency: f64 },
    /// Q < 1/2: two pure decay rates, the roots of s^2 - gamma s + omega_v^2,
    /// so gamma_plus + gamma_minus = gamma and gamma_plus * gamma_minus = omega_v^2.
    Overdamped { gamma_plus: f64, gamma_minus: f64 },
}

/// Classify a mode and derive its rates.
pub fn classify_regime(mode: &VibrationalMode) -> Result<Regime> {
    let q = mode.quality;
    if (q - 0.5).abs() <= CRITICAL_Q_TOL * 0.5 {
        return Err(Error::CriticalDamping);
    }
    if q > 0.5 {
        Ok(Regime::Underdamped {
            renormalized_frequency: mode.omega_v * (1.0 - 0.25 / (q * q)).sqrt(),
        })
    } else {
        let a = 0.5 / (q * q) - 1.0;
        let b = (0.25 / (q * q) - 1.0).sqrt() / q;
        Ok(Regime::Overdamped {
            gamma_plus: mode.omega_v * (a + b).sqrt(),
            gamma_minus: mode.omega_v * (a - b).sqrt(),
        })
    }
}

/// Residue data of the oscillator poles: the emission (D+) and absorption (D-)
/// weights of the vibronic series.
#[derive(Clone, Copy, Debug)]
pub struct ResidueCoefficients {
    pub regime: Regime,
    pub d_plus: Complex64,
    pub d_minus: Complex64,
    /// Complexified Bose factor N = 1/(exp(beta(w~ + i gamma/2)) - 1);
    /// zero in the overdamped regime where it has no meaning.
    pub bose: Complex64,
    /// Damping rate gamma = omega_v / Q (after any double-pole perturbation).
    pub gamma: f64,
}

impl ResidueCoefficients {
    /// (decay rate of P+, decay rate of P-): (gamma/2, gamma/2) underdamped,
    /// (gamma_plus, gamma_minus) overdamped.
    pub fn rates(&self) -> (f64, f64) {
        match self.regime {
            Regime::Underdamped { .. } => (0.5 * self.gamma, 0.5 * self.gamma),
            Regime::Overdamped { gamma_plus, gamma_minus } => (gamma_plus, gamma_minus),
        }
    }
}

/// Resolve the effective quality factor, nudging Q by a relative 1e-9 when an
/// overdamped rate lands exactly on a Matsubara frequency (double pole of the
/// integrand). Such coincidences occur only at isolated parameter points and
/// have no observable consequence.
fn effective_quality(mode: &VibrationalMode, env: &ThermalEnv) -> f64 {
    let mut q = mode.quality;
    if q >= 0.5 {
        return q; // underdamped poles sit off the imaginary axis
    }
    for attempt in 0..8 {
        let probe = VibrationalMode { quality: q, ..*mode };
        let Ok(Regime::Overdamped { gamma_plus, gamma_minus }) = classify_regime(&probe) else {
            return q;
        };
        let spacing = 2.0 * PI * env.temperature;
        let near = |rate: f64| {
            let m = (rate / spacing).round();
            m >= 1.0 && (rate - m * spacing).abs() < DOUBLE_POLE_TOL * rate.max(spacing)
        };
        if !near(gamma_plus) && !near(gamma_minus) {
            if attempt > 0 {
                log::warn!(
                    "double pole: perturbed Q from {} to {q} to separate a dissipation rate \
                     from a Matsubara frequency",
                    mode.quality
                );
            }
            return q;
        }
        q *= 1.0 + DOUBLE_POLE_TOL;
    }
    q
}

/// D+/D- residue coefficients of the vibronic series.
pub fn residue_coefficients(mode: &VibrationalMode, env: &ThermalEnv) -> Result<ResidueCoefficients> {
    let q = effective_quality(mode, env);
    let mode = VibrationalMode { quality: q, ..*mode };
    let s = mode.huang_rhys;
    let gamma = mode.gamma();
    let beta = env.beta();
    let regime = classify_regime(&mode)?;
    match regime {
        Regime::Underdamped { renormalized_frequency: wt } => {
            let bose =
                (Complex64::new(beta * wt, beta * 0.5 * gamma).exp() - 1.0).finv();
            // shared real part of the pole residues
            let x = (mode.omega_v / wt) * (0.5 / (q * q) - 1.0);
            let d_minus = s * bose * Complex64::new(-x, 1.0 / q);
            let d_plus = s * (bose.conj() + 1.0) * Complex64::new(-x, -1.0 / q);
            Ok(ResidueCoefficients { regime, d_plus, d_minus, bose, gamma })
        }
        Regime::Overdamped { gamma_plus, gamma_minus } => {
            // residues of the noise integrand at the poles -i Gamma_pm:
            // D_pm = (S/2Q)[cot(Gamma_pm/2T) - i](1 pm (1 - 2Q^2)/sqrt(1 - 4Q^2)),
            // the analytic continuation of the underdamped coefficients
            // through omega~ -> i sqrt(gamma^2/4 - omega_v^2)
            let c = (1.0 - 2.0 * q * q) / (1.0 - 4.0 * q * q).sqrt();
            let part = |rate: f64, sign: f64| -> Complex64 {
                let cot = 1.0 / (rate / (2.0 * env.temperature)).tan();
                (s / (2.0 * q)) * Complex64::new(cot, -1.0) * (1.0 + sign * c)
            };
            Ok(ResidueCoefficients {
                regime,
                d_plus: part(gamma_plus, 1.0),
                d_minus: part(gamma_minus, -1.0),
                bose: Complex64::new(0.0, 0.0),
                gamma,
            })
        }
    }
}

/// Truncation and pruning controls for the series expansions.
#[derive(Clone, Copy, Debug)]
pub struct SeriesControl {
    /// Remainder bound below which a series is truncated.
    pub tolerance: f64,
    /// Hard cap on the number of series terms.
    pub max_terms: usize,
    /// Relative amplitude floor for pruning convolution products.
    pub prune_floor: f64,
}

impl Default for SeriesControl {
    fn default() -> Self {
        Self { tolerance: 1e-12, max_terms: 512, prune_floor: DEFAULT_PRUNE_FLOOR }
    }
}

impl SeriesControl {
    /// Smallest n for which the tail of the transform series with coefficient
    /// z = a + ib is below tolerance:
    /// `e^{-a} |z|^{n+1}/(n+1)! e^{|z|} < tol`, capped at `max_terms`.
    pub fn series_order(&self, a: f64, b: f64) -> usize {
        let z_abs = f64::hypot(a, b);
        if z_abs == 0.0 {
            return 0;
        }
        let scale = (-a).exp() * z_abs.exp();
        let mut n = 0usize;
        let mut tail = z_abs; // |z|^{n+1}/(n+1)! at n = 0
        while !(scale * tail < self.tolerance) && n < self.max_terms {
            n += 1;
            tail *= z_abs / (n as f64 + 1.0);
        }
        n
    }
}

/// Closed-form Fourier transform of `exp[(a + i b sgn t)(e^{i w0 t - G|t|} - 1)]`
/// with the `e^{+iEt}/2pi` convention:
///
/// ```text
/// e^{-a} sum_n (|z|^n / n!) [cos(b - n th) f_L(E; -n w0, n G)
///                          + sin(b - n th) g_L(E; -n w0, n G)],   z = a + ib = |z| e^{i th}
/// ```
///
/// The n = 0 term is a zero-width atom of complex weight `e^{-a} e^{ib}`
/// (a delta of weight `e^{-a} cos b` plus a principal-value `g` part of weight
/// `e^{-a} sin b`). The total complex amplitude of the untruncated series is
/// exactly 1.
pub fn exp_correlator_transform(
    a: f64,
    b: f64,
    omega_0: f64,
    half_width: f64,
    n_max: usize,
) -> Result<Mixture> {
    if !half_width.is_finite() || half_width < 0.0 {
        return Err(Error::NonPositiveWidth(half_width));
    }
    let z_conj = Complex64::new(a, -b);
    let mut amp = Complex64::from_polar((-a).exp(), b);
    let mut atoms = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        if n > 0 {
            amp = amp * z_conj / n as f64;
        }
        atoms.push(PoleAtom::new(amp, -(n as f64) * omega_0, n as f64 * half_width)?);
    }
    Mixture::from_atoms(atoms)
}

/// The vibronic part P+ * P- of a single mode's P(E).
///
/// Underdamped, the emission series P+ places atoms at E = +n w~ and the
/// absorption series P- at E = -n w~, both with widths n gamma/2. Overdamped,
/// everything collapses onto E = 0 with widths n gamma_plus and n gamma_minus.
pub fn vibronic_expansion(coeffs: &ResidueCoefficients, ctrl: &SeriesControl) -> Result<Mixture> {
    let (center_plus, rate_plus, rate_minus) = match coeffs.regime {
        Regime::Underdamped { renormalized_frequency } => {
            (renormalized_frequency, 0.5 * coeffs.gamma, 0.5 * coeffs.gamma)
        }
        Regime::Overdamped { gamma_plus, gamma_minus } => (0.0, gamma_plus, gamma_minus),
    };
    // e^{+i w0 t} produces atoms at -n w0, so P+ (atoms at +n w~) uses w0 = -w~.
    let p_plus = exp_correlator_transform(
        coeffs.d_plus.re,
        coeffs.d_plus.im,
        -center_plus,
        rate_plus,
        ctrl.series_order(coeffs.d_plus.re, coeffs.d_plus.im),
    )?;
    let p_minus = exp_correlator_transform(
        coeffs.d_minus.re,
        coeffs.d_minus.im,
        center_plus,
        rate_minus,
        ctrl.series_order(coeffs.d_minus.re, coeffs.d_minus.im),
    )?;
    Ok(p_plus.convolve_with_floor(&p_minus, ctrl.prune_floor))
}

/// One Matsubara term: pole frequency omega_k and its weight C_k in J(t).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatsubaraTerm {
    pub frequency: f64,
    pub weight: f64,
}

/// Matsubara coefficients C_k for k = 1..k_max:
///
/// ```text
/// C_k = (4 S / (beta Q)) omega_k^3 / ((omega_k^2 + omega_v^2)^2 - gamma^2 omega_k^2)
/// ```
///
/// C_k is negative in the overdamped regime when gamma_minus < omega_k <
/// gamma_plus; that is expected, not an error.
pub fn matsubara_coefficients(mode: &VibrationalMode, env: &ThermalEnv) -> Vec<MatsubaraTerm> {
    let q = effective_quality(mode, env);
    let mode = VibrationalMode { quality: q, ..*mode };
    let gamma = mode.gamma();
    let wv2 = mode.omega_v * mode.omega_v;
    let prefactor = 4.0 * mode.huang_rhys * env.temperature / q;
    (1..=env.matsubara_count())
        .map(|k| {
            let wk = env.matsubara_frequency(k);
            let wk2 = wk * wk;
            let den = (wk2 + wv2) * (wk2 + wv2) - gamma * gamma * wk2;
            MatsubaraTerm { frequency: wk, weight: prefactor * wk2 * wk / den }
        })
        .collect()
}

/// Convolution over k of the zero-centered Lorentzian series
/// `e^{-C_k} sum_n (C_k^n / n!) f_L(E; 0, n omega_k)`. Widens P(E) without
/// shifting it; the empty list gives the unit delta.
pub fn matsubara_expansion(terms: &[MatsubaraTerm], ctrl: &SeriesControl) -> Result<Mixture> {
    let mut acc = Mixture::delta();
    for t in terms {
        let p_k = exp_correlator_transform(
            t.weight,
            0.0,
            0.0,
            t.frequency,
            ctrl.series_order(t.weight, 0.0),
        )?;
        acc = acc.convolve_with_floor(&p_k, ctrl.prune_floor);
    }
    Ok(acc)
}

/// Full P(E) of a set of modes: the convolution over modes of
/// (vibronic series) * (Matsubara series), with multiplicity folded into the
/// Huang-Rhys factor. No modes gives the unit delta. The total real amplitude
/// is 1 up to truncation.
pub fn total_pe(modes: &[VibrationalMode], env: &ThermalEnv, ctrl: &SeriesControl) -> Result<Mixture> {
    let mut acc = Mixture::delta();
    for mode in modes {
        let ratio = mode.omega_v / env.temperature;
        if !(0.25..=8.0).contains(&ratio) {
            log::warn!(
                "omega_v/k_B T = {ratio:.3} outside the supported range [0.25, 8]; \
                 the truncated Matsubara sum degrades at low temperature"
            );
        }
        let folded = mode.folded();
        let coeffs = residue_coefficients(&folded, env)?;
        let vib = vibronic_expansion(&coeffs, ctrl)?;
        let mats = matsubara_expansion(&matsubara_coefficients(&folded, env), ctrl)?;
        acc = acc
            .convolve_with_floor(&vib, ctrl.prune_floor)
            .convolve_with_floor(&mats, ctrl.prune_floor);
    }
    Ok(acc)
}
