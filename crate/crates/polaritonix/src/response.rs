//! Absorption function, cavity response and elastic spectra.
//!
//! The molecular absorption function is the convolution of P(E) with the
//! electronic susceptibility `chi(w) = [i w - kappa_m/2]^{-1}`. Since
//! `chi = -pi [f_L(w; 0, kappa_m/2) + i g_L(w; 0, kappa_m/2)]`, the
//! convolution stays inside the Lorentzian algebra: every atom of P picks up
//! `kappa_m/2` of extra half-width (consuming the delta atoms) and the complex
//! value of A follows from the atoms in closed form,
//!
//! ```text
//! A(w) = sum_j conj(a_j) / (i (w - c_j) - G_j)
//! ```
//!
//! The elastic transmission spectrum is `|r(w_d)|^2` with the cavity response
//! `r(w_d) = [i (w_d - w_c) - kappa_c/2 + g_N^2 A(w_d - w_m + shift)]^{-1}`,
//! where `shift` is the total polaron shift `sum_i M_i S_i w_v,i`.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::lineshape::Mixture;
use crate::pe::{total_pe, SeriesControl, ThermalEnv, VibrationalMode};

/// Cavity parameters: eigenfrequency, linewidth and collective coupling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CavityParams {
    pub omega_c: f64,
    /// Cavity linewidth (FWHM of the bare transmission peak), > 0.
    pub kappa_c: f64,
    /// Collective coupling g_N = sqrt(sum_j |g_j|^2), >= 0.
    pub g_n: f64,
}

impl CavityParams {
    pub fn new(omega_c: f64, kappa_c: f64, g_n: f64) -> Result<Self> {
        if !(kappa_c > 0.0) || !kappa_c.is_finite() {
            return Err(Error::Config(format!("kappa_c must be > 0, got {kappa_c}")));
        }
        if !(g_n >= 0.0) || !g_n.is_finite() || !omega_c.is_finite() {
            return Err(Error::Config("non-finite cavity parameters".into()));
        }
        Ok(Self { omega_c, kappa_c, g_n })
    }

    pub fn with_detuning(&self, omega_m: f64, detuning: f64) -> Self {
        Self { omega_c: omega_m + detuning, ..*self }
    }
}

/// Molecular parameters: exciton frequency, bare electronic dissipation and
/// the vibrational modes.
#[derive(Clone, Debug, PartialEq)]
pub struct MoleculeParams {
    pub omega_m: f64,
    /// Dissipation rate of the bare electronic transition, >= 0.
    pub kappa_tilde: f64,
    pub modes: Vec<VibrationalMode>,
}

impl MoleculeParams {
    pub fn new(omega_m: f64, kappa_tilde: f64, modes: Vec<VibrationalMode>) -> Result<Self> {
        if !(kappa_tilde >= 0.0) || !kappa_tilde.is_finite() || !omega_m.is_finite() {
            return Err(Error::Config("non-finite molecular parameters".into()));
        }
        let mol = Self { omega_m, kappa_tilde, modes };
        effective_kappa_m(&mol)?;
        Ok(mol)
    }

    /// Total polaron shift sum_i M_i S_i omega_v,i entering the argument of A.
    pub fn polaron_shift(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| m.multiplicity as f64 * m.huang_rhys * m.omega_v)
            .sum()
    }
}

/// Effective molecular linewidth kappa_m = kappa~ + sum_i M_i S_i gamma_i,
/// renormalized by the coupling to vibrations.
pub fn effective_kappa_m(mol: &MoleculeParams) -> Result<f64> {
    let kappa: f64 = mol.kappa_tilde
        + mol
            .modes
            .iter()
            .map(|m| m.multiplicity as f64 * m.huang_rhys * m.gamma())
            .sum::<f64>();
    if kappa <= 0.0 {
        return Err(Error::NoDissipation(kappa));
    }
    Ok(kappa)
}

/// The complex-valued absorption function A = P(E) * chi as a Lorentzian
/// mixture. The construction fattens every atom of P by kappa_m/2, so no delta
/// atoms survive and both `Re(-A)` and the complex value are closed-form.
#[derive(Clone, Debug)]
pub struct AbsorptionFunction {
    mixture: Mixture,
    kappa_m: f64,
}

impl AbsorptionFunction {
    /// The P-mixture with chi's half-width folded in.
    pub fn mixture(&self) -> &Mixture {
        &self.mixture
    }

    pub fn kappa_m(&self) -> f64 {
        self.kappa_m
    }

    /// Complex absorption function at frequency `omega`.
    pub fn eval(&self, omega: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for a in self.mixture.atoms() {
            acc += a.amplitude.conj()
                / Complex64::new(-a.half_width, omega - a.center);
        }
        acc
    }

    /// The absorption profile Re(-A(omega)) >= 0.
    pub fn profile(&self, omega: f64) -> f64 {
        // Re(-A) = pi * (P * f_L(.; 0, kappa_m/2))(omega)
        PI * self.mixture.eval(omega).expect("absorption mixture has no delta atoms")
    }
}

/// Build the absorption function of a molecule in a thermal environment.
pub fn absorption_mixture(
    mol: &MoleculeParams,
    env: &ThermalEnv,
    ctrl: &SeriesControl,
) -> Result<AbsorptionFunction> {
    let kappa_m = effective_kappa_m(mol)?;
    let p = total_pe(&mol.modes, env, ctrl)?;
    let chi_width = Mixture::lorentzian(0.0, 0.5 * kappa_m)?;
    Ok(AbsorptionFunction { mixture: p.convolve_with_floor(&chi_width, ctrl.prune_floor), kappa_m })
}

/// Cavity response function of the coupled system.
/// Finite for every real drive frequency: the real part of the denominator is
/// at most -kappa_c/2 because Re A <= 0.
pub fn response_function(
    cav: &CavityParams,
    mol: &MoleculeParams,
    absorption: &AbsorptionFunction,
    omega_d: f64,
) -> Complex64 {
    let arg = omega_d - mol.omega_m + mol.polaron_shift();
    let denom = Complex64::new(-0.5 * cav.kappa_c, omega_d - cav.omega_c)
        + cav.g_n * cav.g_n * absorption.eval(arg);
    denom.finv()
}

/// A sampled spectrum on a uniform, strictly increasing frequency grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl Spectrum {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::InvalidGrid(format!(
                "grid has {} points but values has {}",
                grid.len(),
                values.len()
            )));
        }
        if grid.len() < 2 {
            return Err(Error::InvalidGrid("need at least two grid points".into()));
        }
        let h = grid[1] - grid[0];
        if !(h > 0.0) {
            return Err(Error::InvalidGrid("grid must be strictly increasing".into()));
        }
        for w in grid.windows(2) {
            let d = w[1] - w[0];
            if !(d > 0.0) || (d - h).abs() > 1e-9 * h {
                return Err(Error::InvalidGrid("grid spacing must be uniform".into()));
            }
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spacing(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

/// Uniform grid of `n` points centered at `center`.
pub fn frequency_grid(center: f64, half_span: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(half_span > 0.0) {
        return Err(Error::InvalidGrid(format!(
            "need n >= 2 and half_span > 0, got n = {n}, half_span = {half_span}"
        )));
    }
    let h = 2.0 * half_span / (n - 1) as f64;
    Ok((0..n).map(|i| center - half_span + i as f64 * h).collect())
}

/// Default output grid: centered at omega_m, half-span
/// max(40 max(omega_v), 5 g_N, 10 kappa_m), 2^15 points. The heavy Lorentzian
/// tails need wide support.
pub fn default_grid(cav: &CavityParams, mol: &MoleculeParams) -> Result<Vec<f64>> {
    let max_wv = mol.modes.iter().map(|m| m.omega_v).fold(1.0_f64, f64::max);
    let kappa_m = effective_kappa_m(mol)?;
    let half_span = (40.0 * max_wv).max(5.0 * cav.g_n).max(10.0 * kappa_m);
    frequency_grid(mol.omega_m, half_span, 1 << 15)
}

/// Elastic transmission spectrum |r(w_d)|^2 sampled on `grid`.
pub fn elastic_spectrum(
    cav: &CavityParams,
    mol: &MoleculeParams,
    absorption: &AbsorptionFunction,
    grid: &[f64],
) -> Result<Spectrum> {
    if grid.len() < 2 {
        return Err(Error::InvalidGrid("need at least two grid points".into()));
    }
    let h = grid[1] - grid[0];
    if h > 0.25 * cav.kappa_c && h > 0.25 * absorption.kappa_m() {
        log::warn!(
            "grid spacing {h} is coarser than kappa_c/4 and kappa_m/4; peaks may be undersampled"
        );
    }
    let values = grid
        .iter()
        .map(|&w| response_function(cav, mol, absorption, w).norm_sqr())
        .collect();
    Spectrum::new(grid.to_vec(), values)
}

/// Coupled-oscillator (Lorentzian-molecule) reference model.
#[derive(Clone, Debug)]
pub struct CoupledOscillatorReference {
    /// Dissipationless polariton frequencies
    /// `(w_c + w_m)/2 +- sqrt(g^2 + (w_c - w_m)^2 / 4)`.
    pub omega_plus: f64,
    pub omega_minus: f64,
    /// Complex eigenfrequencies at resonance with the imaginary shifts
    /// included: `w_m - i (k_c + k_m)/2 +- sqrt(g^2 - (k_c - k_m)^2/4)`.
    pub complex_plus: Complex64,
    pub complex_minus: Complex64,
    /// The S = 0 elastic spectrum of the reference model.
    pub spectrum: Spectrum,
}

/// Coupled-oscillator baseline: eigenfrequencies of the two-by-two model and
/// the S = 0 elastic spectrum for a Lorentzian molecule of linewidth
/// `kappa_m`, at `detuning = w_c - w_m`. Computed from the explicit two-pole
/// formula, independently of the mixture machinery.
pub fn coupled_oscillator_reference(
    cav: &CavityParams,
    kappa_m: f64,
    detuning: f64,
    grid: &[f64],
) -> Result<CoupledOscillatorReference> {
    if !(kappa_m > 0.0) {
        return Err(Error::NoDissipation(kappa_m));
    }
    let omega_m = cav.omega_c - detuning;
    let g = cav.g_n;
    let mean = 0.5 * (cav.omega_c + omega_m);
    let root = (g * g + 0.25 * detuning * detuning).sqrt();

    let res_root = Complex64::new(g * g - 0.25 * (cav.kappa_c - kappa_m).powi(2), 0.0).sqrt();
    let shift = Complex64::new(omega_m, -0.5 * (cav.kappa_c + kappa_m));

    let values: Vec<f64> = grid
        .iter()
        .map(|&w| {
            let denom = Complex64::new(-0.5 * cav.kappa_c, w - cav.omega_c)
                + g * g / Complex64::new(-0.5 * kappa_m, w - omega_m);
            denom.norm_sqr().recip()
        })
        .collect();

    Ok(CoupledOscillatorReference {
        omega_plus: mean + root,
        omega_minus: mean - root,
        complex_plus: shift + res_root,
        complex_minus: shift - res_root,
        spectrum: Spectrum::new(grid.to_vec(), values)?,
    })
}

/// Polariton peak positions at resonance for the S = 0 model, from the
/// closed-form extremum of |r|^2:
/// `w_pm = w_m +- sqrt(g^2 sqrt(1 + k_m (k_m + k_c) / (2 g^2)) - k_m^2 / 4)`.
pub fn resonance_peaks_closed_form(omega_m: f64, g: f64, kappa_c: f64, kappa_m: f64) -> (f64, f64) {
    let inner = (1.0 + kappa_m * (kappa_m + kappa_c) / (2.0 * g * g)).sqrt();
    let offset = (g * g * inner - 0.25 * kappa_m * kappa_m).sqrt();
    (omega_m + offset, omega_m - offset)
}

/// Cavity eigenfrequency from mirror spacing `length`, incidence angle
/// `alpha` (radians) and effective refractive index:
/// `w_c = (pi c / L) / sqrt(1 - sin^2(alpha) / n_eff^2)`.
pub fn cavity_frequency_from_geometry(
    length: f64,
    alpha: f64,
    n_eff: f64,
    speed_of_light: f64,
) -> Result<f64> {
    if !(length > 0.0) || !(speed_of_light > 0.0) {
        return Err(Error::Config(format!(
            "length and speed of light must be > 0, got {length}, {speed_of_light}"
        )));
    }
    let s = alpha.sin().abs();
    if s >= n_eff {
        return Err(Error::Config(format!(
            "|sin(alpha)| = {s} must be below n_eff = {n_eff}"
        )));
    }
    Ok((PI * speed_of_light / length) / (1.0 - (s / n_eff).powi(2)).sqrt())
}
