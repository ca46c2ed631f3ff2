//! Decay of a level dressed by an intense laser.
//!
//! Level 2 decays to level 1 by emitting a photon (form factor `κ₁₂`);
//! a laser of strength `B` drives the 1↔3 transition. At `O(g²)` the pole
//! of the level-2 propagator is
//!
//! ```text
//! E_pole = ω₀ + ½[Σ(ω₀ + B + i0⁺) + Σ(ω₀ − B + i0⁺)],   γ_eff = −2 Im E_pole,
//! ```
//!
//! with the self-energy `Σ(E) = ∫ κ(ω)/(E − ω) dω`. This is the Rabi-probe
//! rate `π[κ(ω₀ + B) + κ(ω₀ − B)]` of [`crate::rates::rabi_rate`] with `K = B`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{golden_rule_rate, Family, SpectralDensity};
use crate::quadrature::Integrator;
use crate::rates::{ParameterKind, RateCurve};

#[derive(Debug, Clone, PartialEq)]
pub struct LaserAtomModel {
    omega0: f64,
    big_omega0: f64,
    kappa12: SpectralDensity,
    b: f64,
}

impl LaserAtomModel {
    /// `omega0 = E₂ − E₁`, `big_omega0 = E₃ − E₁` (carried along; it does not
    /// enter the rate at this order), `b` the laser strength.
    pub fn new(omega0: f64, big_omega0: f64, kappa12: SpectralDensity, b: f64) -> Result<Self> {
        if !(omega0 > 0.0) || !omega0.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "omega0 must be positive, got {omega0}"
            )));
        }
        if !(big_omega0 > 0.0) || !big_omega0.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "big_omega0 must be positive, got {big_omega0}"
            )));
        }
        if !(b >= 0.0) || !b.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "laser strength must be finite and non-negative, got {b}"
            )));
        }
        if !kappa12.is_integrable() {
            return Err(Error::NonIntegrable("the photon form factor needs a cutoff".into()));
        }
        Ok(Self {
            omega0,
            big_omega0,
            kappa12,
            b,
        })
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }
    pub fn big_omega0(&self) -> f64 {
        self.big_omega0
    }
    pub fn kappa12(&self) -> &SpectralDensity {
        &self.kappa12
    }
    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn with_b(&self, b: f64) -> Result<Self> {
        Self::new(self.omega0, self.big_omega0, self.kappa12.clone(), b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoleResult {
    pub e_pole: Complex64,
    /// Level shift `Re E_pole − ω₀`.
    pub delta: f64,
    pub gamma_eff: f64,
    pub z_factor: f64,
}

fn default_integrator(sd: &SpectralDensity) -> Result<Integrator> {
    let base = Integrator::with_rel_tol(1e-11);
    let scale = sd.total_weight(&base)? / sd.cutoff();
    Ok(base.abs_tol(1e-14 * scale.max(f64::MIN_POSITIVE)))
}

/// `Σ(E)` for `E` off the real axis, or on the real axis below the support.
pub fn self_energy(sd: &SpectralDensity, e: Complex64) -> Result<Complex64> {
    if sd.coupling() == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let (lo, _) = sd.support();
    if e.im == 0.0 {
        if e.re > lo {
            return Err(Error::InvalidParameter(format!(
                "E = {} lies on the cut; use self_energy_rim",
                e.re
            )));
        }
        return self_energy_rim(sd, e.re);
    }
    let integ = default_integrator(sd)?;
    let (x, hi) = (e.re, sd.support().1);
    if x <= lo {
        return Ok(sd.integrate_weighted(|w| (e - w).inv(), &[], &integ)?.value);
    }
    // subtract κ(x) on [lo, b] so the near-pole integrand stays bounded
    let b = (2.0 * x - lo).min(hi);
    let kx = sd.density(x);
    let mut pts = vec![lo, x, b];
    pts.extend(sd.kinks().into_iter().filter(|k| *k > lo && *k < b));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let near = integ.integrate(|w| (e - w).inv() * (sd.density(w) - kx), &pts)?.value;
    let log_term = ((e - lo).ln() - (e - b).ln()) * kx;
    let far = if b >= hi {
        Complex64::new(0.0, 0.0)
    } else if hi.is_finite() {
        let mut p = vec![b];
        p.extend(sd.kinks().into_iter().filter(|k| *k > b && *k < hi));
        p.push(hi);
        integ.integrate(|w| (e - w).inv() * sd.density(w), &p)?.value
    } else {
        integ
            .integrate_to_infinity(|w| (e - w).inv() * sd.density(w), b, sd.cutoff().max(x - lo), &[])?
            .value
    };
    Ok(near + log_term + far)
}

/// `Σ(x + i0⁺)`: principal value minus `iπκ(x)` inside the support, an
/// ordinary real integral at or below the threshold.
pub fn self_energy_rim(sd: &SpectralDensity, x: f64) -> Result<Complex64> {
    if !sd.is_integrable() {
        return Err(Error::NonIntegrable("the flat continuum has no cutoff".into()));
    }
    if sd.coupling() == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let integ = default_integrator(sd)?;
    let (lo, hi) = sd.support();
    if x <= lo {
        let v = sd.integrate_weighted(|w| 1.0 / (x - w), &[], &integ)?.value;
        return Ok(Complex64::new(v, 0.0));
    }
    // PV: fold [lo, 2x − lo] about x, then the plain remainder.
    let d = x - lo;
    let mut pts = vec![0.0, d];
    pts.extend(sd.kinks().iter().map(|k| (k - x).abs()).filter(|u| *u > 0.0 && *u < d));
    if hi.is_finite() && hi - x < d {
        pts.push(hi - x);
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let folded = integ
        .integrate(|u: f64| (sd.density(x - u) - sd.density(x + u)) / u, &pts)?
        .value;
    let start = x + d;
    let rest = if start >= hi {
        0.0
    } else if hi.is_finite() {
        let mut p = vec![start];
        p.extend(sd.kinks().into_iter().filter(|k| *k > start && *k < hi));
        p.push(hi);
        integ.integrate(|w| sd.density(w) / (x - w), &p)?.value
    } else {
        integ
            .integrate_to_infinity(|w| sd.density(w) / (x - w), start, sd.cutoff().max(d), &[])?
            .value
    };
    Ok(Complex64::new(folded + rest, -PI * sd.density(x)))
}

/// `½[Σ(E + B + i0⁺) + Σ(E − B + i0⁺)]` for real `E`.
fn dressed_self_energy(sd: &SpectralDensity, e: f64, b: f64) -> Result<Complex64> {
    Ok((self_energy_rim(sd, e + b)? + self_energy_rim(sd, e - b)?) * 0.5)
}

/// `|1 − Σ'|⁻²` with `Σ'` from central differences on the rim at `x`.
pub(crate) fn residue_weight(sigma: impl Fn(f64) -> Result<Complex64>, x: f64, offset: f64) -> Result<f64> {
    let slope = (sigma(x + offset)? - sigma(x - offset)?) / (2.0 * offset);
    Ok(1.0 / (Complex64::new(1.0, 0.0) - slope).norm_sqr())
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PoleOptions {
    /// Iterate `x = ω₀ + Re Σ_B(x + i0⁺)` to self-consistency.
    pub newton: bool,
}

pub fn pole_and_rate(m: &LaserAtomModel) -> Result<PoleResult> {
    pole_and_rate_with(m, &PoleOptions::default())
}

/// Perturbative pole of the dressed propagator.
///
/// Fails with [`Error::PerturbativityViolated`] when `B < ω₀` and the shift
/// `|E_pole − ω₀|` reaches a tenth of the distance from `ω₀ − B` to the
/// threshold, where the expansion in `Σ` stops converging.
pub fn pole_and_rate_with(m: &LaserAtomModel, options: &PoleOptions) -> Result<PoleResult> {
    let sd = &m.kappa12;
    let (w0, b) = (m.omega0, m.b);
    let sigma = dressed_self_energy(sd, w0, b)?;
    let (lo, _) = sd.support();
    let lower = w0 - b;
    if lower > lo {
        let radius = lower - lo;
        if sigma.norm() >= 0.1 * radius {
            return Err(Error::PerturbativityViolated {
                sigma: sigma.norm(),
                radius,
            });
        }
    }
    let mut e_pole = Complex64::new(w0, 0.0) + sigma;
    if options.newton {
        e_pole = refine_pole(sd, w0, b, e_pole.re)?;
    }
    let offset = 1e-4 * sd.cutoff().min(w0);
    let z_factor = residue_weight(|x| dressed_self_energy(sd, x, b), e_pole.re, offset)?;
    Ok(PoleResult {
        e_pole,
        delta: e_pole.re - w0,
        gamma_eff: -2.0 * e_pole.im,
        z_factor,
    })
}

/// Solves `x − ω₀ − Re Σ_B(x + i0⁺) = 0` by Newton's method; the pole is
/// then `x + i Im Σ_B(x + i0⁺)`. No continuation off the first sheet.
fn refine_pole(sd: &SpectralDensity, w0: f64, b: f64, seed: f64) -> Result<Complex64> {
    let f = |x: f64| -> Result<(f64, Complex64)> {
        let s = dressed_self_energy(sd, x, b)?;
        Ok((x - w0 - s.re, s))
    };
    let h = 1e-5 * sd.cutoff().min(w0);
    let mut x = seed;
    for _ in 0..50 {
        let (r, s) = f(x)?;
        if r.abs() <= 1e-12 * w0 {
            return Ok(Complex64::new(x, s.im));
        }
        let slope = (f(x + h)?.0 - f(x - h)?.0) / (2.0 * h);
        x -= r / slope;
    }
    let (r, _) = f(x)?;
    Err(Error::PerturbativityViolated {
        sigma: r.abs(),
        radius: w0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultipoleKind {
    Electric,
    Magnetic,
}

/// Infrared exponent `2j ∓ 1` of a multipole transition.
pub fn multipole_exponent(j: u32, kind: MultipoleKind) -> Result<u32> {
    if j == 0 {
        return Err(Error::InvalidParameter(
            "photon angular momentum j must be at least 1".into(),
        ));
    }
    Ok(match kind {
        MultipoleKind::Electric => 2 * j - 1,
        MultipoleKind::Magnetic => 2 * j + 1,
    })
}

/// `γ_eff(B)/γ = ½[(1 + x)ⁿ + (1 − x)ⁿ θ(1 − x)]` on a grid of `x = B/ω₀`,
/// `n = 2j ∓ 1`. The curve is in units of `γ`, so `natural_rate = 1`.
pub fn small_b_law(j: u32, kind: MultipoleKind, b_over_omega0: &[f64]) -> Result<RateCurve> {
    let n = multipole_exponent(j, kind)? as i32;
    if b_over_omega0.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidRange("B/ω₀ must be finite and non-negative".into()));
    }
    if b_over_omega0.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidRange("B/ω₀ grid must be strictly increasing".into()));
    }
    let rates = b_over_omega0
        .iter()
        .map(|&x| {
            let below = if x < 1.0 { (1.0 - x).powi(n) } else { 0.0 };
            0.5 * ((1.0 + x).powi(n) + below)
        })
        .collect();
    Ok(RateCurve {
        parameter_kind: ParameterKind::LaserB,
        parameters: b_over_omega0.to_vec(),
        rates,
        natural_rate: 1.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LargeBLaw {
    pub curve: RateCurve,
    /// Least-squares slope of `log γ_eff` against `log B`; `None` for a
    /// vanishing curve.
    pub slope: Option<f64>,
}

/// `γ_eff(B)` on a grid far above the cutoff and its log-log slope, to be
/// compared with `−β` of a power-law form factor.
pub fn large_b_law(m: &LaserAtomModel, b_grid: &[f64]) -> Result<LargeBLaw> {
    let sd = &m.kappa12;
    if b_grid.len() < 2 {
        return Err(Error::InvalidRange("need at least two B values".into()));
    }
    if b_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidRange("B grid must be strictly increasing".into()));
    }
    if !(b_grid[0] >= 10.0 * sd.cutoff()) {
        return Err(Error::InvalidRange(format!(
            "large-B grid must start at 10Λ = {} or above, got {}",
            10.0 * sd.cutoff(),
            b_grid[0]
        )));
    }
    let natural_rate = golden_rule_rate(sd, m.omega0)?;
    if sd.coupling() == 0.0 {
        return Ok(LargeBLaw {
            curve: RateCurve {
                parameter_kind: ParameterKind::LaserB,
                parameters: b_grid.to_vec(),
                rates: vec![0.0; b_grid.len()],
                natural_rate,
            },
            slope: None,
        });
    }
    if sd.family() != Family::MultipolePowerlaw {
        return Err(Error::WrongFamily(format!(
            "{} decays faster than any power; the large-B law needs multipole-powerlaw",
            sd.family().name()
        )));
    }
    let rates = b_grid
        .par_iter()
        .map(|&b| Ok(pole_and_rate(&m.with_b(b)?)?.gamma_eff))
        .collect::<Result<Vec<f64>>>()?;
    let pts: Vec<(f64, f64)> = b_grid
        .iter()
        .zip(&rates)
        .filter(|(_, r)| **r > 0.0)
        .map(|(b, r)| (b.ln(), r.ln()))
        .collect();
    let slope = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let xm = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - xm).powi(2)).sum();
        Some(sxy / sxx)
    } else {
        None
    };
    Ok(LargeBLaw {
        curve: RateCurve {
            parameter_kind: ParameterKind::LaserB,
            parameters: b_grid.to_vec(),
            rates,
            natural_rate,
        },
        slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::{parameter_grid, rabi_rate};

    fn photon(g2: f64, cutoff: f64, n: f64) -> SpectralDensity {
        SpectralDensity::multipole_exp(g2, 0.0, cutoff, n).unwrap()
    }

    #[test]
    fn zero_coupling_has_no_self_energy() {
        let sd = photon(0.0, 1.0, 1.0);
        assert_eq!(self_energy_rim(&sd, 0.5).unwrap(), Complex64::new(0.0, 0.0));
        assert_eq!(
            self_energy(&sd, Complex64::new(0.5, 0.1)).unwrap(),
            Complex64::new(0.0, 0.0)
        );
    }

    #[test]
    fn plemelj_imaginary_part() {
        let sd = photon(0.3, 1.0, 2.0);
        for x in [0.1, 0.9, 2.0, 7.5] {
            let s = self_energy_rim(&sd, x).unwrap();
            assert!((s.im + PI * sd.density(x)).abs() < 1e-8);
        }
        assert_eq!(self_energy_rim(&sd, -0.4).unwrap().im, 0.0);
        assert_eq!(self_energy_rim(&sd, 0.0).unwrap().im, 0.0);
    }

    #[test]
    fn rim_is_the_limit_from_above() {
        // Σ(x + iε) → Σ(x + i0⁺); the difference is O(ε log ε) here
        let sd = photon(0.3, 1.0, 1.0);
        for x in [0.3, 1.0, 3.0] {
            let rim = self_energy_rim(&sd, x).unwrap();
            let near = self_energy(&sd, Complex64::new(x, 1e-6)).unwrap();
            assert!((rim - near).norm() < 1e-4, "x={x}: {rim} vs {near}");
        }
    }

    #[test]
    fn rim_principal_value_closed_form() {
        // n = 0, Λ = 1: PV∫₀^∞ e^{−ω}/(x − ω) dω = e^{−x} Ei(x)
        let sd = photon(1.0, 1.0, 0.0);
        let x: f64 = 1.0;
        let ei_1 = 1.895_117_816_355_936_8;
        let s = self_energy_rim(&sd, x).unwrap();
        assert!((s.re - (-x).exp() * ei_1).abs() < 1e-9, "{}", s.re);
    }

    #[test]
    fn zero_field_gives_golden_rule() {
        let sd = photon(1e-3, 10.0, 3.0);
        let m = LaserAtomModel::new(1.0, 3.0, sd.clone(), 0.0).unwrap();
        let p = pole_and_rate(&m).unwrap();
        assert!((p.gamma_eff / golden_rule_rate(&sd, 1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pole_rate_is_the_rabi_rate() {
        let sd = photon(1e-3, 10.0, 3.0);
        for b in [0.0, 0.2, 0.5, 0.99, 1.5, 4.0, 30.0] {
            let m = LaserAtomModel::new(1.0, 3.0, sd.clone(), b).unwrap();
            let p = pole_and_rate(&m).unwrap();
            let r = rabi_rate(&sd, 1.0, b);
            assert!((p.gamma_eff / r - 1.0).abs() < 1e-8, "B={b}");
        }
    }

    #[test]
    fn cutoff_free_quadrupole_ratio() {
        // n = 3, Λ ≫ ω₀: γ_eff/γ → ½(1.5³ + 0.5³)
        let sd = photon(1e-2, 1e8, 3.0);
        let gamma = golden_rule_rate(&sd, 1.0).unwrap();
        let m = LaserAtomModel::new(1.0, 2.0, sd, 0.5).unwrap();
        let ratio = pole_and_rate(&m).unwrap().gamma_eff / gamma;
        assert!((ratio - 1.75).abs() < 1e-6, "{ratio}");
    }

    #[test]
    fn dipole_rate_is_flat_below_resonance() {
        let sd = photon(1e-3, 1e8, 1.0);
        let gamma = golden_rule_rate(&sd, 1.0).unwrap();
        for x in parameter_grid(0.0, 0.9, 19, false).unwrap() {
            let m = LaserAtomModel::new(1.0, 2.0, sd.clone(), x).unwrap();
            let r = pole_and_rate(&m).unwrap().gamma_eff / gamma;
            assert!((r - 1.0).abs() < 1e-6, "x={x}: {r}");
        }
    }

    #[test]
    fn higher_multipoles_increase_with_field() {
        let sd = photon(1e-4, 50.0, 3.0);
        let mut last = 0.0;
        for x in parameter_grid(0.0, 0.98, 99, false).unwrap() {
            let m = LaserAtomModel::new(1.0, 2.0, sd.clone(), x).unwrap();
            let r = pole_and_rate(&m).unwrap().gamma_eff;
            assert!(r > last, "x={x}");
            last = r;
        }
    }

    #[test]
    fn threshold_kink_size() {
        // the θ(ω₀ − B) term drops by πκ(0⁺): finite for n = 0, zero for n = 3
        let eps = 1e-7;
        for (n, vanishes) in [(0.0, false), (3.0, true)] {
            let sd = photon(1e-12, 10.0, n);
            let m = |b: f64| LaserAtomModel::new(1.0, 2.0, sd.clone(), b).unwrap();
            let below = pole_and_rate(&m(1.0 - eps)).unwrap().gamma_eff;
            let above = pole_and_rate(&m(1.0 + eps)).unwrap().gamma_eff;
            let smooth = PI * (sd.density(2.0 - eps) - sd.density(2.0 + eps));
            let jump = below - above - smooth;
            if vanishes {
                assert!(jump.abs() < 1e-12 * below);
            } else {
                assert!((jump / (PI * sd.density(0.0)) - 1.0).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn small_b_closed_forms() {
        let xs = parameter_grid(0.0, 0.9, 10, false).unwrap();
        let dipole = small_b_law(1, MultipoleKind::Electric, &xs).unwrap();
        assert!(dipole.rates.iter().all(|r| (r - 1.0).abs() < 1e-15));
        let quad = small_b_law(2, MultipoleKind::Electric, &[0.01, 0.02, 0.5]).unwrap();
        for (x, r) in quad.parameters.iter().zip(&quad.rates) {
            assert!((r - (1.0 + 3.0 * x * x)).abs() < 1e-12);
        }
        let above = small_b_law(1, MultipoleKind::Electric, &[1.0, 1.01]).unwrap();
        assert!((above.rates[1] - 1.005).abs() < 1e-12);
        assert_eq!(above.rates[0], 1.0);
        assert_eq!(multipole_exponent(1, MultipoleKind::Magnetic).unwrap(), 3);
        assert!(small_b_law(0, MultipoleKind::Electric, &xs).is_err());
    }

    #[test]
    fn large_b_power_law() {
        let sd = SpectralDensity::multipole_powerlaw(1e-3, 0.0, 1.0, 0.0, 2.0).unwrap();
        let m = LaserAtomModel::new(0.1, 0.5, sd, 0.0).unwrap();
        let grid = parameter_grid(10.0, 1e3, 41, true).unwrap();
        let law = large_b_law(&m, &grid).unwrap();
        assert!((law.slope.unwrap() + 2.0).abs() < 0.05);
        assert!(law.curve.rates.windows(2).all(|w| w[1] < w[0]));

        let exp = LaserAtomModel::new(0.1, 0.5, photon(1e-3, 1.0, 1.0), 0.0).unwrap();
        assert!(matches!(large_b_law(&exp, &grid), Err(Error::WrongFamily(_))));
        let zero = LaserAtomModel::new(0.1, 0.5, photon(0.0, 1.0, 1.0), 0.0).unwrap();
        let law = large_b_law(&zero, &grid).unwrap();
        assert!(law.curve.rates.iter().all(|r| *r == 0.0));
        assert!(large_b_law(&m, &[1.0, 100.0]).is_err());
    }

    #[test]
    fn newton_refinement_solves_pole_equation() {
        let sd = photon(1e-2, 5.0, 3.0);
        let m = LaserAtomModel::new(1.0, 2.0, sd.clone(), 0.3).unwrap();
        let p = pole_and_rate_with(&m, &PoleOptions { newton: true }).unwrap();
        let sigma = dressed_self_energy(&sd, p.e_pole.re, 0.3).unwrap();
        let residual = p.e_pole - 1.0 - sigma;
        assert!(residual.norm() <= 1e-10);
        let plain = pole_and_rate(&m).unwrap();
        assert!((plain.e_pole - p.e_pole).norm() < 1e-3);
    }

    #[test]
    fn strong_coupling_below_resonance_is_rejected() {
        let sd = photon(5.0, 1.0, 1.0);
        let m = LaserAtomModel::new(1.0, 2.0, sd, 0.9).unwrap();
        assert!(matches!(pole_and_rate(&m), Err(Error::PerturbativityViolated { .. })));
    }
}
