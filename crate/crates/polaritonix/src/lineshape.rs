//! Exact algebra of Lorentzian mixtures.
//!
//! The two basis functions are the unit-area Cauchy-Lorentz density `f_L`
//! and its Hilbert transform `g_L`:
//!
//! ```text
//! f_L(w; w0, G) = (1/pi) G / ((w - w0)^2 + G^2)
//! g_L(w; w0, G) = (1/pi) (w - w0) / ((w - w0)^2 + G^2)
//! ```
//!
//! Under convolution they close on themselves: f*f = f, f*g = g, g*g = -f,
//! with centers and half-widths adding. Encoding a weighted pair
//! `alpha f_L + beta g_L` as one atom with complex amplitude `alpha + i beta`
//! turns that three-case table into plain complex multiplication
//! (f <-> 1, g <-> i, g*g = -f <-> i*i = -1), which is what [`Mixture::convolve`]
//! implements.

use num_complex::Complex64;
use std::f64::consts::FRAC_1_PI;

use crate::error::{Error, Result};

/// Relative amplitude below which convolution products are discarded.
pub const DEFAULT_PRUNE_FLOOR: f64 = 1e-14;

/// Relative tolerance for treating two (center, half-width) pairs as the same
/// atom when merging.
const MERGE_TOL: f64 = 1e-12;

/// Cauchy-Lorentz density, unit area.
pub fn eval_f(omega: f64, center: f64, half_width: f64) -> Result<f64> {
    if !(half_width > 0.0) {
        return Err(Error::NonPositiveWidth(half_width));
    }
    let d = omega - center;
    Ok(FRAC_1_PI * half_width / (d * d + half_width * half_width))
}

/// Hilbert transform of [`eval_f`], zero area, odd about `center`.
pub fn eval_g(omega: f64, center: f64, half_width: f64) -> Result<f64> {
    if !(half_width > 0.0) {
        return Err(Error::NonPositiveWidth(half_width));
    }
    let d = omega - center;
    Ok(FRAC_1_PI * d / (d * d + half_width * half_width))
}

/// One weighted Lorentzian component.
///
/// `Re(amplitude)` multiplies `f_L`, `Im(amplitude)` multiplies `g_L`. A zero
/// half-width atom stands for a Dirac delta (f part) plus a principal-value
/// pole `1/(pi (w - w0))` (g part); such atoms must be consumed by a
/// convolution with a positive-width mixture before pointwise evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoleAtom {
    pub amplitude: Complex64,
    pub center: f64,
    pub half_width: f64,
}

impl PoleAtom {
    pub fn new(amplitude: Complex64, center: f64, half_width: f64) -> Result<Self> {
        if !half_width.is_finite() || half_width < 0.0 {
            return Err(Error::NonPositiveWidth(half_width));
        }
        if !center.is_finite() || !amplitude.re.is_finite() || !amplitude.im.is_finite() {
            return Err(Error::InvalidMode(format!(
                "non-finite atom ({amplitude}, {center}, {half_width})"
            )));
        }
        Ok(Self { amplitude, center, half_width })
    }

    fn eval(&self, omega: f64) -> Result<f64> {
        if self.half_width == 0.0 {
            return Err(Error::DeltaEvaluation);
        }
        let d = omega - self.center;
        let denom = d * d + self.half_width * self.half_width;
        Ok(FRAC_1_PI * (self.amplitude.re * self.half_width + self.amplitude.im * d) / denom)
    }
}

/// An ordered sum of [`PoleAtom`]s; immutable value semantics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mixture {
    atoms: Vec<PoleAtom>,
}

impl Mixture {
    /// The unit Dirac delta at zero energy: convolution identity.
    pub fn delta() -> Self {
        Self {
            atoms: vec![PoleAtom {
                amplitude: Complex64::new(1.0, 0.0),
                center: 0.0,
                half_width: 0.0,
            }],
        }
    }

    /// A single-atom mixture.
    pub fn single(amplitude: Complex64, center: f64, half_width: f64) -> Result<Self> {
        Ok(Self { atoms: vec![PoleAtom::new(amplitude, center, half_width)?] })
    }

    /// A pure `f_L` of unit weight.
    pub fn lorentzian(center: f64, half_width: f64) -> Result<Self> {
        Self::single(Complex64::new(1.0, 0.0), center, half_width)
    }

    /// A pure `g_L` of unit weight.
    pub fn hilbert(center: f64, half_width: f64) -> Result<Self> {
        Self::single(Complex64::new(0.0, 1.0), center, half_width)
    }

    pub fn from_atoms(atoms: Vec<PoleAtom>) -> Result<Self> {
        for a in &atoms {
            PoleAtom::new(a.amplitude, a.center, a.half_width)?;
        }
        let mut m = Self { atoms };
        m.merge();
        Ok(m)
    }

    pub fn atoms(&self) -> &[PoleAtom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// True if any atom still has zero half-width.
    pub fn has_delta(&self) -> bool {
        self.atoms.iter().any(|a| a.half_width == 0.0)
    }

    /// Sum of complex amplitudes. Multiplicative under convolution.
    pub fn total_amplitude(&self) -> Complex64 {
        self.atoms.iter().map(|a| a.amplitude).sum()
    }

    /// Integral over the whole real line: `f_L` integrates to one, `g_L` to
    /// zero, so this is the total real amplitude.
    pub fn integral(&self) -> f64 {
        self.atoms.iter().map(|a| a.amplitude.re).sum()
    }

    /// Pointwise value. Fails if a delta atom is still present.
    pub fn eval(&self, omega: f64) -> Result<f64> {
        let mut acc = 0.0;
        for a in &self.atoms {
            acc += a.eval(omega)?;
        }
        Ok(acc)
    }

    /// Closed-form convolution with the default pruning floor.
    pub fn convolve(&self, other: &Mixture) -> Mixture {
        self.convolve_with_floor(other, DEFAULT_PRUNE_FLOOR)
    }

    /// Closed-form convolution: all pairwise products with complex amplitude
    /// multiplication, centers and half-widths adding. Coincident atoms are
    /// merged, then atoms below `floor` relative to the largest amplitude are
    /// pruned.
    pub fn convolve_with_floor(&self, other: &Mixture, floor: f64) -> Mixture {
        let mut atoms = Vec::with_capacity(self.atoms.len() * other.atoms.len());
        for a in &self.atoms {
            for b in &other.atoms {
                atoms.push(PoleAtom {
                    amplitude: a.amplitude * b.amplitude,
                    center: a.center + b.center,
                    half_width: a.half_width + b.half_width,
                });
            }
        }
        let mut out = Mixture { atoms };
        out.merge();
        out.prune(floor);
        out
    }

    /// Merge atoms whose (center, half-width) agree to within a relative
    /// tolerance by summing amplitudes.
    fn merge(&mut self) {
        if self.atoms.len() < 2 {
            return;
        }
        self.atoms.sort_by(|a, b| {
            a.center
                .total_cmp(&b.center)
                .then(a.half_width.total_cmp(&b.half_width))
        });
        let mut merged: Vec<PoleAtom> = Vec::with_capacity(self.atoms.len());
        for a in &self.atoms {
            if let Some(last) = merged.last_mut() {
                let scale = last
                    .center
                    .abs()
                    .max(a.center.abs())
                    .max(last.half_width)
                    .max(a.half_width);
                if (a.center - last.center).abs() <= MERGE_TOL * scale
                    && (a.half_width - last.half_width).abs() <= MERGE_TOL * scale
                {
                    last.amplitude += a.amplitude;
                    continue;
                }
            }
            merged.push(*a);
        }
        self.atoms = merged;
    }

    fn prune(&mut self, floor: f64) {
        let max_amp = self
            .atoms
            .iter()
            .map(|a| a.amplitude.norm())
            .fold(0.0_f64, f64::max);
        if max_amp == 0.0 {
            return;
        }
        let cut = floor * max_amp;
        self.atoms.retain(|a| a.amplitude.norm() >= cut);
    }

    /// Rescale every amplitude by a complex factor.
    pub fn scaled(&self, factor: Complex64) -> Mixture {
        Mixture {
            atoms: self
                .atoms
                .iter()
                .map(|a| PoleAtom { amplitude: a.amplitude * factor, ..*a })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn f_peak_and_half_maximum() {
        let (w0, g) = (2.3, 0.7);
        assert_relative_eq!(eval_f(w0, w0, g).unwrap(), 1.0 / (PI * g), max_relative = 1e-14);
        assert_relative_eq!(
            eval_f(w0 + g, w0, g).unwrap(),
            0.5 / (PI * g),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            eval_f(w0 - g, w0, g).unwrap(),
            eval_f(w0 + g, w0, g).unwrap(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn f_integrates_to_one() {
        // trapezoidal quadrature oracle on a wide grid
        let (w0, g) = (0.4, 0.9);
        let (lo, hi, n) = (w0 - 4000.0 * g, w0 + 4000.0 * g, 2_000_001);
        let h = (hi - lo) / (n - 1) as f64;
        let mut s = 0.0;
        for i in 0..n {
            let w = lo + i as f64 * h;
            let v = eval_f(w, w0, g).unwrap();
            s += if i == 0 || i == n - 1 { 0.5 * v } else { v };
        }
        assert_relative_eq!(s * h, 1.0, max_relative = 1e-3);
    }

    #[test]
    fn g_odd_extrema_and_zero_integral() {
        let (w0, g) = (-1.2, 0.35);
        assert_eq!(eval_g(w0, w0, g).unwrap(), 0.0);
        assert_relative_eq!(
            eval_g(w0 + g, w0, g).unwrap(),
            0.5 / (PI * g),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            eval_g(w0 - g, w0, g).unwrap(),
            -0.5 / (PI * g),
            max_relative = 1e-14
        );
        // symmetric principal-value grid
        let n = 200_001;
        let (lo, hi) = (w0 - 500.0 * g, w0 + 500.0 * g);
        let h = (hi - lo) / (n - 1) as f64;
        let mut s = 0.0;
        for i in 0..n {
            let w = lo + i as f64 * h;
            let v = eval_g(w, w0, g).unwrap();
            s += if i == 0 || i == n - 1 { 0.5 * v } else { v };
        }
        assert!((s * h).abs() < 1e-8);
    }

    #[test]
    fn rejects_non_positive_width() {
        assert!(matches!(eval_f(0.0, 0.0, 0.0), Err(Error::NonPositiveWidth(_))));
        assert!(matches!(eval_g(0.0, 0.0, -1.0), Err(Error::NonPositiveWidth(_))));
        assert!(PoleAtom::new(Complex64::new(1.0, 0.0), 0.0, -0.1).is_err());
    }

    #[test]
    fn pythagorean_identity() {
        // f^2 + g^2 = (1/pi^2) / ((w - w0)^2 + G^2)
        let (w0, g) = (1.0, 0.3);
        for w in [-2.0, 0.0, 0.97, 1.0, 1.31, 4.5] {
            let f = eval_f(w, w0, g).unwrap();
            let gg = eval_g(w, w0, g).unwrap();
            let d = w - w0;
            assert_relative_eq!(
                f * f + gg * gg,
                1.0 / (PI * PI * (d * d + g * g)),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn convolution_table() {
        // f*f = f, g*f = g, g*g = -f with centers and widths adding
        let ff = Mixture::lorentzian(0.5, 0.2)
            .unwrap()
            .convolve(&Mixture::lorentzian(-0.1, 0.3).unwrap());
        assert_eq!(ff.len(), 1);
        let a = ff.atoms()[0];
        assert_relative_eq!(a.center, 0.4, max_relative = 1e-14);
        assert_relative_eq!(a.half_width, 0.5, max_relative = 1e-14);
        assert_relative_eq!(a.amplitude.re, 1.0, max_relative = 1e-14);
        assert!(a.amplitude.im.abs() < 1e-15);

        let gf = Mixture::hilbert(0.5, 0.2)
            .unwrap()
            .convolve(&Mixture::lorentzian(-0.1, 0.3).unwrap());
        let a = gf.atoms()[0];
        assert!(a.amplitude.re.abs() < 1e-15);
        assert_relative_eq!(a.amplitude.im, 1.0, max_relative = 1e-14);

        let gg = Mixture::hilbert(0.5, 0.2)
            .unwrap()
            .convolve(&Mixture::hilbert(-0.1, 0.3).unwrap());
        let a = gg.atoms()[0];
        assert_relative_eq!(a.amplitude.re, -1.0, max_relative = 1e-14);
        assert!(a.amplitude.im.abs() < 1e-15);
    }

    #[test]
    fn delta_is_identity() {
        let m = Mixture::from_atoms(vec![
            PoleAtom::new(Complex64::new(0.4, 0.1), 1.0, 0.2).unwrap(),
            PoleAtom::new(Complex64::new(0.6, -0.1), -2.0, 0.5).unwrap(),
        ])
        .unwrap();
        let d = Mixture::delta();
        let out = d.convolve(&m);
        assert_eq!(out.atoms(), m.atoms());
    }

    #[test]
    fn amplitude_is_multiplicative() {
        let a = Mixture::from_atoms(vec![
            PoleAtom::new(Complex64::new(0.3, 0.2), 0.0, 0.1).unwrap(),
            PoleAtom::new(Complex64::new(0.7, -0.4), 1.0, 0.2).unwrap(),
        ])
        .unwrap();
        let b = Mixture::from_atoms(vec![
            PoleAtom::new(Complex64::new(0.5, 0.1), -1.0, 0.3).unwrap(),
            PoleAtom::new(Complex64::new(0.5, 0.0), 2.0, 0.4).unwrap(),
        ])
        .unwrap();
        let prod = a.total_amplitude() * b.total_amplitude();
        let conv = a.convolve(&b);
        assert_relative_eq!(conv.total_amplitude().re, prod.re, max_relative = 1e-13);
        assert_relative_eq!(conv.total_amplitude().im, prod.im, max_relative = 1e-13);
    }

    #[test]
    fn convolution_commutes_and_associates() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut random_mixture = |n: usize| {
            let atoms = (0..n)
                .map(|_| {
                    PoleAtom::new(
                        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                        rng.gen_range(-3.0..3.0),
                        rng.gen_range(0.05..1.0),
                    )
                    .unwrap()
                })
                .collect();
            Mixture::from_atoms(atoms).unwrap()
        };
        let (a, b, c) = (random_mixture(3), random_mixture(4), random_mixture(2));

        let ab = a.convolve(&b);
        let ba = b.convolve(&a);
        let abc = ab.convolve(&c);
        let bca = b.convolve(&c).convolve(&a);
        for w in [-5.0, -1.3, 0.0, 0.8, 2.2, 6.1] {
            assert_relative_eq!(ab.eval(w).unwrap(), ba.eval(w).unwrap(), max_relative = 1e-11);
            assert_relative_eq!(abc.eval(w).unwrap(), bca.eval(w).unwrap(), max_relative = 1e-10);
        }
    }

    #[test]
    fn coincident_atoms_merge() {
        let m = Mixture::lorentzian(0.0, 0.5).unwrap();
        let k = Mixture::from_atoms(vec![
            PoleAtom::new(Complex64::new(0.5, 0.0), 0.0, 0.0).unwrap(),
            PoleAtom::new(Complex64::new(0.5, 0.0), 0.0, 0.0).unwrap(),
        ])
        .unwrap();
        assert_eq!(k.len(), 1);
        let out = m.convolve(&k);
        assert_eq!(out.len(), 1);
        assert_relative_eq!(out.total_amplitude().re, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn delta_atoms_refuse_pointwise_evaluation() {
        let d = Mixture::delta();
        assert!(matches!(d.eval(0.0), Err(Error::DeltaEvaluation)));
    }
}
