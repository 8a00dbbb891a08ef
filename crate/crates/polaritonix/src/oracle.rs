//! Independent brute-force path: direct quadrature of the momentum-noise
//! integral, time-domain exponentiation, and a discrete Fourier transform to
//! P(E). Shares no code with the closed-form construction in [`crate::pe`].
//!
//! The regularized correlator is
//!
//! ```text
//! J~(t) = (S gamma / pi omega_v) Int dw g(w) [coth(beta w / 2) + 1] (e^{-i w t} - 1),
//! g(w)  = w^3 / ((w^2 - omega_v^2)^2 + w^2 gamma^2),
//! ```
//!
//! with the Ohmic log divergence cut off by keeping only the Matsubara poles
//! below `omega_L`, exactly as the closed form does. Numerically that
//! convention is realized by integrating over a closed contour: the real
//! segment `[-L, L]` plus the lower semicircular arc of radius L, with L
//! chosen midway between the last kept and first dropped Matsubara pole (so
//! the contour encloses precisely the poles the closed form keeps and coth is
//! smallest where the arc crosses the imaginary axis). A plain symmetric
//! window without the arc would differ by an imaginary constant of order S/Q
//! coming from the vacuum part of the integrand, which is not the convention
//! of the pole-by-pole subtraction.

use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::pe::{classify_regime, Regime, ThermalEnv, VibrationalMode};
use crate::response::Spectrum;

/// Gauss-Legendre nodes and weights on [-1, 1].
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..64 {
            let (mut p0, mut p1) = (1.0_f64, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// coth on the real axis with the small-argument expansion made explicit.
fn coth(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 / x + x / 3.0 - x * x * x / 45.0
    } else {
        1.0 / x.tanh()
    }
}

/// coth for complex arguments, saturating for large real parts where
/// tanh overflows.
fn coth_c(z: Complex64) -> Complex64 {
    if z.re.abs() > 20.0 {
        Complex64::new(z.re.signum(), 0.0)
    } else if z.norm() < 1e-4 {
        z.finv() + z / 3.0
    } else {
        z.tanh().finv()
    }
}

fn g_rational(w: Complex64, omega_v: f64, gamma: f64) -> Complex64 {
    let w2 = w * w;
    let d = w2 - omega_v * omega_v;
    w2 * w / (d * d + w2 * gamma * gamma)
}

/// Quadrature plan for the correlator of one (multiplicity-folded) mode.
pub struct JIntegrator {
    /// (omega, coth-weighted, plain) weights on the folded real segment:
    /// contribution `a (cos wt - 1) - i b sin wt` per node.
    real_nodes: Vec<(f64, f64, f64)>,
    /// (omega, weight) on the closing arc: contribution `w (e^{-i omega t} - 1)`.
    arc_nodes: Vec<(Complex64, Complex64)>,
}

impl JIntegrator {
    /// Build a plan accurate for times up to `t_scale`.
    pub fn new(mode: &VibrationalMode, env: &ThermalEnv, t_scale: f64) -> Result<Self> {
        Self::with_refinement(mode, env, t_scale, 1.0)
    }

    /// `refine` > 1 shrinks every panel by that factor (used for convergence
    /// checks).
    pub fn with_refinement(
        mode: &VibrationalMode,
        env: &ThermalEnv,
        t_scale: f64,
        refine: f64,
    ) -> Result<Self> {
        let mode = mode.folded();
        let s = mode.huang_rhys;
        let gamma = mode.gamma();
        let wv = mode.omega_v;
        let beta = env.beta();
        let prefactor = s * gamma / (PI * wv);

        // contour radius: midway between the last kept and the first dropped
        // Matsubara pole, so exactly k_max thermal poles are enclosed
        let k_max = env.matsubara_count();
        let lambda = if k_max >= 1 {
            0.5 * (env.matsubara_frequency(k_max) + env.matsubara_frequency(k_max + 1))
        } else {
            env.cutoff
        };
        let regime = classify_regime(&mode)?;
        let max_pole = match regime {
            Regime::Underdamped { .. } => wv,
            Regime::Overdamped { gamma_plus, .. } => gamma_plus.max(wv),
        };
        if lambda <= 1.05 * max_pole {
            return Err(Error::Quadrature(format!(
                "oscillator pole at {max_pole} too close to the contour radius {lambda}; \
                 raise the cutoff omega_L"
            )));
        }

        let (gl_x, gl_w) = gauss_legendre(16);
        let t_ref = t_scale.abs().max(0.1 / wv);

        // real segment [0, lambda], folded. Base width resolves e^{-iwt} at
        // t_ref; local refinements resolve the oscillator peak and the
        // thermal/low-frequency structure.
        let h_base = ((8.0 / t_ref).min(lambda / 64.0)) / refine;
        let mut regions: Vec<(f64, f64, f64)> = Vec::new();
        match regime {
            Regime::Underdamped { renormalized_frequency: wt } => {
                let h_loc = (gamma / 4.0) / refine;
                regions.push(((wt - 8.0 * gamma).max(0.0), (wt + 8.0 * gamma).min(lambda), h_loc));
            }
            Regime::Overdamped { gamma_minus, gamma_plus } => {
                regions.push((0.0, (6.0 * gamma_minus).min(lambda), (gamma_minus / 4.0) / refine));
                regions.push((0.0, (4.0 * gamma_plus).min(lambda), (wv / 8.0) / refine));
            }
        }
        regions.push((0.0, (2.0 * wv).min(lambda), (env.temperature / 2.0).min(wv / 8.0) / refine));

        let mut real_nodes = Vec::new();
        let mut x0 = 0.0;
        while x0 < lambda {
            let mut h = h_base;
            for &(a, b, hr) in &regions {
                if x0 < b && x0 + h > a {
                    h = h.min(hr);
                }
            }
            let x1 = (x0 + h).min(lambda);
            let (c, half) = (0.5 * (x0 + x1), 0.5 * (x1 - x0));
            for (xi, wi) in gl_x.iter().zip(&gl_w) {
                let w = c + half * xi;
                let weight = wi * half;
                let g = g_rational(Complex64::new(w, 0.0), wv, gamma).re;
                let a = 2.0 * prefactor * weight * g * coth(0.5 * beta * w);
                let b = 2.0 * prefactor * weight * g;
                real_nodes.push((w, a, b));
            }
            x0 = x1;
        }

        // lower arc, parametrized by phi in [0, pi] with omega = L e^{-i phi}:
        // geometric grading toward both endpoints (boundary layers ~ 1/(L t))
        // and a cap resolving coth near the imaginary-axis crossing.
        let delta0 = ((1.0 / (lambda * t_ref) / 4.0).min(PI / 64.0)).max(1e-9) / refine;
        let cap = ((4.0 * PI * env.temperature / lambda).min(PI / 16.0)) / refine;
        let mut arc_nodes = Vec::new();
        let mut p0 = 0.0;
        while p0 < PI {
            let dist = p0.min(PI - p0);
            let h = delta0.max(dist / 2.0).min(cap);
            let p1 = (p0 + h).min(PI);
            let (c, half) = (0.5 * (p0 + p1), 0.5 * (p1 - p0));
            for (xi, wi) in gl_x.iter().zip(&gl_w) {
                let phi = c + half * xi;
                let w = lambda * Complex64::from_polar(1.0, -phi);
                let g = g_rational(w, wv, gamma);
                let cth = coth_c(0.5 * beta * w);
                // d omega = -i omega d phi
                let dw = Complex64::new(0.0, -1.0) * w * (wi * half);
                arc_nodes.push((w, prefactor * g * (cth + 1.0) * dw));
            }
            p0 = p1;
        }

        Ok(Self { real_nodes, arc_nodes })
    }

    /// J~(t) at a single time.
    pub fn j_tilde(&self, t: f64) -> Complex64 {
        if t == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let ta = t.abs();
        let mut acc = Complex64::new(0.0, 0.0);
        for &(w, a, b) in &self.real_nodes {
            let (sin, cos) = (w * ta).sin_cos();
            acc.re += a * (cos - 1.0);
            acc.im -= b * sin;
        }
        for &(w, weight) in &self.arc_nodes {
            let e = (Complex64::new(0.0, -ta) * w).exp();
            acc += weight * (e - 1.0);
        }
        if t < 0.0 {
            acc.conj()
        } else {
            acc
        }
    }

    /// J~ on the uniform non-negative time grid `t_j = j dt`, `j = 0..=n`.
    /// Uses an exact phase recurrence per chunk instead of per-point exps.
    pub fn j_tilde_grid(&self, dt: f64, n: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); n + 1];
        const CHUNK: usize = 1024;
        out.par_chunks_mut(CHUNK).enumerate().for_each(|(ci, chunk)| {
            let j0 = ci * CHUNK;
            for &(w, a, b) in &self.real_nodes {
                let rot = Complex64::from_polar(1.0, -w * dt);
                let mut e = Complex64::from_polar(1.0, -w * dt * j0 as f64);
                for slot in chunk.iter_mut() {
                    slot.re += a * (e.re - 1.0);
                    slot.im += b * e.im;
                    e *= rot;
                }
            }
            for &(w, weight) in &self.arc_nodes {
                let rot = (Complex64::new(0.0, -dt) * w).exp();
                let mut e = (Complex64::new(0.0, -(dt * j0 as f64)) * w).exp();
                for slot in chunk.iter_mut() {
                    *slot += weight * (e - 1.0);
                    e *= rot;
                }
            }
        });
        out
    }
}

/// Regularized correlator J~(t) by direct quadrature.
pub fn j_numeric(mode: &VibrationalMode, env: &ThermalEnv, t: f64) -> Result<Complex64> {
    Ok(JIntegrator::new(mode, env, t)?.j_tilde(t))
}

/// Like [`j_numeric`] but verifies convergence under panel refinement to a
/// relative 1e-6.
pub fn j_numeric_checked(mode: &VibrationalMode, env: &ThermalEnv, t: f64) -> Result<Complex64> {
    let coarse = JIntegrator::new(mode, env, t)?.j_tilde(t);
    let fine = JIntegrator::with_refinement(mode, env, t, 2.0)?.j_tilde(t);
    let scale = fine.norm().max(1e-12);
    if (coarse - fine).norm() > 1e-6 * scale {
        return Err(Error::Quadrature(format!(
            "J~({t}) changed by {:.2e} (relative) under refinement",
            (coarse - fine).norm() / scale
        )));
    }
    Ok(fine)
}

/// Uniform symmetric time grid for the Fourier transform to P(E).
#[derive(Clone, Copy, Debug)]
pub struct TimeGrid {
    pub t_max: f64,
    pub n_points: usize,
}

impl TimeGrid {
    pub fn new(t_max: f64, n_points: usize) -> Result<Self> {
        if !(t_max > 0.0) {
            return Err(Error::InvalidGrid(format!("t_max must be > 0, got {t_max}")));
        }
        if !n_points.is_power_of_two() || n_points < 8 {
            return Err(Error::InvalidGrid(format!(
                "n_points must be a power of two >= 8, got {n_points}"
            )));
        }
        Ok(Self { t_max, n_points })
    }

    /// Default grid for one mode: long enough for e^{J~} to reach its
    /// plateau, fine enough to cover the vibronic structure.
    pub fn for_mode(mode: &VibrationalMode, env: &ThermalEnv) -> Result<Self> {
        let folded = mode.folded();
        let slowest = match classify_regime(&folded)? {
            Regime::Underdamped { .. } => 0.5 * folded.gamma(),
            Regime::Overdamped { gamma_minus, .. } => gamma_minus,
        }
        .min(env.matsubara_frequency(1));
        Self::new(50.0 / slowest, 1 << 16)
    }

    pub fn dt(&self) -> f64 {
        2.0 * self.t_max / self.n_points as f64
    }

    /// Energy resolution of the transform, pi / t_max.
    pub fn energy_step(&self) -> f64 {
        PI / self.t_max
    }

    /// Largest representable energy, pi / dt.
    pub fn energy_max(&self) -> f64 {
        PI / self.dt()
    }

    /// Fail if the grid cannot represent energies up to `e_required`.
    pub fn check_nyquist(&self, e_required: f64) -> Result<()> {
        if self.dt() > PI / e_required {
            return Err(Error::Nyquist { dt: self.dt(), limit: PI / e_required });
        }
        Ok(())
    }
}

/// Window applied to e^{J~(t)} before the transform; in energy space this is
/// a convolution with the corresponding kernel.
#[derive(Clone, Copy, Debug)]
pub enum Regularizer {
    None,
    /// Lorentzian kernel of the given half-width: `e^{-G |t|}`.
    Lorentzian(f64),
    /// Gaussian kernel of the given standard deviation: `e^{-(s t)^2 / 2}`.
    Gaussian(f64),
}

impl Regularizer {
    fn weight(&self, t: f64) -> f64 {
        match self {
            Regularizer::None => 1.0,
            Regularizer::Lorentzian(g) => (-g * t.abs()).exp(),
            Regularizer::Gaussian(s) => (-0.5 * (s * t).powi(2)).exp(),
        }
    }
}

/// P(E) by discrete Fourier transform of e^{J~(t)} with the `e^{+iEt}/2pi`
/// convention. Returns the sampled density on the energy grid
/// `E_m = (m - n/2) pi / t_max`.
pub fn p_numeric(
    mode: &VibrationalMode,
    env: &ThermalEnv,
    grid: &TimeGrid,
    reg: Regularizer,
) -> Result<Spectrum> {
    let n = grid.n_points;
    if n % 4 != 0 {
        return Err(Error::InvalidGrid("n_points must be divisible by 4".into()));
    }
    let dt = grid.dt();
    let half = n / 2;
    let plan = JIntegrator::new(mode, env, grid.t_max)?;
    let j_pos = plan.j_tilde_grid(dt, half);

    // the correlator must have reached its plateau at t_max
    let tail = j_pos[half].exp();
    let probe = plan.j_tilde(1.5 * grid.t_max).exp();
    if (tail - probe).norm() > 1e-8 {
        return Err(Error::Quadrature(format!(
            "e^J~ not decayed at t_max = {}: plateau gap {:.2e}",
            grid.t_max,
            (tail - probe).norm()
        )));
    }

    let mut buf: Vec<Complex64> = (0..n)
        .map(|j| {
            let k = j as i64 - half as i64;
            let t = k as f64 * dt;
            let jt = j_pos[k.unsigned_abs() as usize];
            let phi = if k >= 0 { jt.exp() } else { jt.conj().exp() };
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            phi * reg.weight(t) * sign
        })
        .collect();
    rustfft::FftPlanner::new().plan_fft_inverse(n).process(&mut buf);

    let scale = dt / (2.0 * PI);
    let mut max_re = 0.0_f64;
    let mut max_im = 0.0_f64;
    let mut values = Vec::with_capacity(n);
    for (m, x) in buf.iter().enumerate() {
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        values.push(scale * sign * x.re);
        max_re = max_re.max(x.re.abs());
        max_im = max_im.max(x.im.abs());
    }
    if max_im > 1e-8 * max_re {
        return Err(Error::Quadrature(format!(
            "transform not real: max |Im|/|Re| = {:.2e}",
            max_im / max_re
        )));
    }
    let de = grid.energy_step();
    let energies = (0..n).map(|m| (m as i64 - half as i64) as f64 * de).collect();
    Spectrum::new(energies, values)
}

/// Direct discrete convolution of two sampled curves on a common uniform grid
/// containing zero, scaled by the grid spacing. Tails outside the grid are
/// treated as zero.
pub fn convolve_numeric(a: &Spectrum, b: &Spectrum) -> Result<Spectrum> {
    let (ga, gb) = (a.grid(), b.grid());
    if ga.len() != gb.len()
        || (ga[0] - gb[0]).abs() > 1e-9 * a.spacing()
        || (a.spacing() - b.spacing()).abs() > 1e-9 * a.spacing()
    {
        return Err(Error::GridMismatch(format!(
            "lengths {}/{}, starts {}/{}, spacings {}/{}",
            ga.len(),
            gb.len(),
            ga[0],
            gb[0],
            a.spacing(),
            b.spacing()
        )));
    }
    let h = a.spacing();
    let j0 = (-ga[0] / h).round();
    if (ga[0] + j0 * h).abs() > 1e-6 * h {
        return Err(Error::GridMismatch("grid must contain zero".into()));
    }
    let j0 = j0 as i64;
    let n = ga.len() as i64;
    let av = a.values();
    let bv = b.values();
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|m| {
            let mut acc = 0.0;
            for k in 0..n {
                let j = j0 + m - k;
                if (0..n).contains(&j) {
                    acc += av[k as usize] * bv[j as usize];
                }
            }
            acc * h
        })
        .collect();
    Spectrum::new(ga.to_vec(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lineshape::{eval_f, eval_g, Mixture};
    use crate::pe::{
        matsubara_coefficients, residue_coefficients, total_pe, SeriesControl,
    };
    use approx::assert_relative_eq;

    fn mode(q: f64, s: f64) -> VibrationalMode {
        VibrationalMode::new(1.0, s, q, 1).unwrap()
    }

    fn env(kt: f64) -> ThermalEnv {
        ThermalEnv::new(kt, 25.0).unwrap()
    }

    /// Termwise pole sum J~+ + J~- + sum_k J~_k built from the closed-form
    /// coefficients (test-only reconstruction).
    fn residue_sum(m: &VibrationalMode, e: &ThermalEnv, t: f64) -> Complex64 {
        let c = residue_coefficients(&m.folded(), e).unwrap();
        let (w_plus, rate_plus, rate_minus) = match c.regime {
            Regime::Underdamped { renormalized_frequency } => {
                (renormalized_frequency, 0.5 * c.gamma, 0.5 * c.gamma)
            }
            Regime::Overdamped { gamma_plus, gamma_minus } => (0.0, gamma_plus, gamma_minus),
        };
        let sgn = t.signum();
        let term = |d: Complex64, w0: f64, rate: f64| {
            let coeff = Complex64::new(d.re, d.im * sgn);
            coeff * ((Complex64::new(-rate * t.abs(), -w0 * t)).exp() - 1.0)
        };
        let mut j = term(c.d_plus, w_plus, rate_plus) + term(c.d_minus, -w_plus, rate_minus);
        for k in matsubara_coefficients(&m.folded(), e) {
            j += k.weight * ((-k.frequency * t.abs()).exp() - 1.0);
        }
        j
    }

    #[test]
    fn j_vanishes_at_zero_and_for_s_zero() {
        let m = mode(4.0, 1.0);
        let e = env(1.0);
        assert_eq!(j_numeric(&m, &e, 0.0).unwrap(), Complex64::new(0.0, 0.0));
        let m0 = mode(4.0, 0.0);
        for t in [0.1, 1.0, 10.0] {
            assert!(j_numeric(&m0, &e, t).unwrap().norm() < 1e-30);
        }
    }

    #[test]
    fn j_conjugate_symmetry() {
        let m = mode(0.9, 1.0);
        let e = env(2.0);
        let plan = JIntegrator::new(&m, &e, 3.0).unwrap();
        for t in [0.3, 1.7, 2.9] {
            let fwd = plan.j_tilde(t);
            let bwd = plan.j_tilde(-t);
            assert_relative_eq!(fwd.re, bwd.re, max_relative = 1e-14);
            assert_relative_eq!(fwd.im, -bwd.im, max_relative = 1e-14);
        }
    }

    #[test]
    fn j_matches_residue_sum_underdamped() {
        let m = mode(4.0, 1.0);
        let e = env(1.0);
        let t = 1.0;
        let numeric = j_numeric_checked(&m, &e, t).unwrap();
        let analytic = residue_sum(&m, &e, t);
        assert!(
            (numeric - analytic).norm() < 1e-3 * analytic.norm(),
            "numeric {numeric}, analytic {analytic}"
        );
        // frozen quadrature value for (Q = 4, S = 1, k_B T = omega_v, t = 1/omega_v)
        let frozen = Complex64::new(-1.6277100056968477, -0.5920587566338448);
        assert!((numeric - frozen).norm() < 1e-6 * frozen.norm());
    }

    #[test]
    fn j_matches_residue_sum_overdamped() {
        let m = mode(0.3, 1.0);
        let e = env(1.0);
        for t in [0.4, 2.0, 8.0] {
            let numeric = j_numeric_checked(&m, &e, t).unwrap();
            let analytic = residue_sum(&m, &e, t);
            assert!(
                (numeric - analytic).norm() < 1e-3 * analytic.norm().max(1e-6),
                "t = {t}: numeric {numeric}, analytic {analytic}"
            );
        }
    }

    #[test]
    fn j_grid_agrees_with_single_point() {
        let m = mode(4.0, 1.0);
        let e = env(1.0);
        let plan = JIntegrator::new(&m, &e, 40.0).unwrap();
        let grid = plan.j_tilde_grid(0.625, 64);
        for (j, val) in grid.iter().enumerate() {
            let single = plan.j_tilde(j as f64 * 0.625);
            assert!((val - single).norm() < 1e-10 * single.norm().max(1.0));
        }
    }

    #[test]
    fn p_numeric_s_zero_is_regularized_delta() {
        let m = mode(4.0, 0.0);
        let e = env(1.0);
        let grid = TimeGrid::new(100.0, 1 << 12).unwrap();
        let reg = 4.0 * grid.energy_step();
        let p = p_numeric(&m, &e, &grid, Regularizer::Lorentzian(reg)).unwrap();
        for (x, v) in p.grid().iter().zip(p.values()) {
            if x.abs() < 5.0 {
                assert_relative_eq!(*v, eval_f(*x, 0.0, reg).unwrap(), max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn p_numeric_poisson_limit() {
        // Q and beta large: peak weights at E = n omega_v approach 1/(e n!)
        let m = mode(1e3, 1.0);
        let e = ThermalEnv::new(0.02, 25.0).unwrap();
        let grid = TimeGrid::new(50.0 / 5e-4, 1 << 16).unwrap();
        let reg = 4.0 * grid.energy_step();
        let p = p_numeric(&m, &e, &grid, Regularizer::Lorentzian(reg)).unwrap();
        let h = p.spacing();
        let weight_near = |center: f64| -> f64 {
            p.grid()
                .iter()
                .zip(p.values())
                .filter(|(x, _)| (**x - center).abs() < 0.5)
                .map(|(_, v)| v * h)
                .sum()
        };
        let mut fact = 1.0;
        for n in 0..4 {
            if n > 0 {
                fact *= n as f64;
            }
            assert_relative_eq!(
                weight_near(n as f64),
                (-1.0_f64).exp() / fact,
                max_relative = 0.05
            );
        }
    }

    #[test]
    fn p_numeric_integrates_to_one_and_stays_positive() {
        let m = mode(0.9, 1.0);
        let e = env(2.0);
        let grid = TimeGrid::for_mode(&m, &e).unwrap();
        let reg = 4.0 * grid.energy_step();
        let p = p_numeric(&m, &e, &grid, Regularizer::Lorentzian(reg)).unwrap();
        let total: f64 = p.values().iter().sum::<f64>() * p.spacing();
        assert_relative_eq!(total, 1.0, max_relative = 1e-3);
        let max = p.values().iter().cloned().fold(0.0_f64, f64::max);
        assert!(p.values().iter().all(|&v| v > -1e-4 * max));
    }

    #[test]
    fn p_numeric_matches_closed_form() {
        // the primary cross-validation of the whole closed-form pipeline
        let m = mode(0.9, 1.0);
        let e = env(2.0);
        let grid = TimeGrid::for_mode(&m, &e).unwrap();
        let reg = 4.0 * grid.energy_step();
        let p = p_numeric(&m, &e, &grid, Regularizer::Lorentzian(reg)).unwrap();

        let closed = total_pe(&[m], &e, &SeriesControl::default())
            .unwrap()
            .convolve(&Mixture::lorentzian(0.0, reg).unwrap());
        let mut err = 0.0;
        let mut norm = 0.0;
        for (x, v) in p.grid().iter().zip(p.values()).step_by(4) {
            if x.abs() > 60.0 {
                continue;
            }
            let c = closed.eval(*x).unwrap();
            err += (c - v).abs();
            norm += v.abs();
        }
        assert!(err / norm < 1e-2, "relative L1 = {}", err / norm);
    }

    #[test]
    fn p_numeric_detailed_balance_fixes_sign() {
        // P(E)/P(-E) = e^{+beta E} with the e^{+iEt} transform convention:
        // emission (E > 0) outweighs absorption
        let m = mode(4.0, 1.0);
        let e = env(1.0);
        let grid = TimeGrid::new(1600.0, 1 << 17).unwrap();
        let sigma = 4.0 * grid.energy_step();
        let p = p_numeric(&m, &e, &grid, Regularizer::Gaussian(sigma)).unwrap();
        let h = p.spacing();
        let at = |x: f64| {
            let i = ((x - p.grid()[0]) / h).round() as usize;
            p.values()[i]
        };
        let beta = e.beta();
        for e_val in [0.5, 1.0, 2.0, 3.0] {
            let ratio = at(e_val) / at(-e_val);
            assert!(ratio > 1.0, "P({e_val})/P({}) = {ratio}", -e_val);
            assert_relative_eq!(ratio.ln(), beta * e_val, max_relative = 0.02);
        }
    }

    #[test]
    fn cutoff_robustness() {
        let m = mode(0.9, 1.0);
        let grid = TimeGrid::for_mode(&m, &env(2.0)).unwrap();
        let reg = 4.0 * grid.energy_step();
        let p25 = p_numeric(&m, &ThermalEnv::new(2.0, 25.0).unwrap(), &grid, Regularizer::Lorentzian(reg))
            .unwrap();
        let p50 = p_numeric(&m, &ThermalEnv::new(2.0, 50.0).unwrap(), &grid, Regularizer::Lorentzian(reg))
            .unwrap();
        let mut diff = 0.0;
        let mut norm = 0.0;
        for (a, b) in p25.values().iter().zip(p50.values()) {
            diff += (a - b).abs();
            norm += a.abs();
        }
        assert!(diff / norm < 0.02, "L1 change {}", diff / norm);
    }

    #[test]
    fn numeric_convolution_validates_the_table() {
        let grid: Vec<f64> = (0..4096).map(|i| -40.0 + i as f64 * (80.0 / 4095.0)).collect();
        // grid must contain zero: shift so it does
        let h = grid[1] - grid[0];
        let grid: Vec<f64> = grid.iter().map(|x| x - (grid[2048] / h).round() * 0.0 - grid[2048]).collect();
        let sample = |f: &dyn Fn(f64) -> f64| {
            Spectrum::new(grid.clone(), grid.iter().map(|&x| f(x)).collect()).unwrap()
        };
        let (g1, g2) = (0.4, 0.7);
        let f1 = sample(&|x| eval_f(x, 0.0, g1).unwrap());
        let f2 = sample(&|x| eval_f(x, 0.0, g2).unwrap());
        let ff = convolve_numeric(&f1, &f2).unwrap();
        let mut err = 0.0;
        for (x, v) in ff.grid().iter().zip(ff.values()) {
            if x.abs() < 20.0 {
                err += (v - eval_f(*x, 0.0, g1 + g2).unwrap()).abs() * h;
            }
        }
        assert!(err < 1e-3, "L1 = {err}");

        // g * g = -f
        let h1 = sample(&|x| eval_g(x, 0.0, g1).unwrap());
        let h2 = sample(&|x| eval_g(x, 0.0, g2).unwrap());
        let gg = convolve_numeric(&h1, &h2).unwrap();
        let mut err = 0.0;
        for (x, v) in gg.grid().iter().zip(gg.values()) {
            if x.abs() < 20.0 {
                err += (v + eval_f(*x, 0.0, g1 + g2).unwrap()).abs() * h;
            }
        }
        assert!(err < 1e-3, "L1 = {err}");

        // narrow Lorentzian approximates the delta identity
        let narrow = sample(&|x| eval_f(x, 0.0, 1e-3).unwrap());
        let dg = convolve_numeric(&narrow, &h2).unwrap();
        let mut err = 0.0;
        for (x, v) in dg.grid().iter().zip(dg.values()) {
            if x.abs() < 20.0 {
                err += (v - eval_g(x + 0.0, 0.0, g2 + 1e-3).unwrap()).abs() * h;
            }
        }
        assert!(err < 1e-3, "L1 = {err}");
    }

    #[test]
    fn grid_mismatch_is_detected() {
        let mk = |start: f64, n: usize| {
            let g: Vec<f64> = (0..n).map(|i| start + i as f64 * 0.1).collect();
            Spectrum::new(g.clone(), vec![0.0; n]).unwrap()
        };
        assert!(convolve_numeric(&mk(-5.0, 100), &mk(-5.0, 101)).is_err());
        assert!(convolve_numeric(&mk(-5.0, 100), &mk(-4.9, 100)).is_err());
    }

    #[test]
    fn nyquist_guard() {
        let g = TimeGrid::new(10.0, 1 << 8).unwrap();
        assert!(g.check_nyquist(1.0).is_ok());
        assert!(matches!(g.check_nyquist(1e3), Err(Error::Nyquist { .. })));
    }
}
