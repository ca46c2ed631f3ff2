//! Spectral densities (form factors) of the continuum an unstable state
//! decays into, the scalars derived from them, and their discretization.
//!
//! Units: ħ = 1; every frequency and energy is in one user-chosen unit.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, Estimate, Integrator, QuadValue};

/// Shape of the form factor `κ(ω)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// `κ = coupling / 2π` above threshold; no cutoff, not integrable.
    Flat,
    /// `g²/Λ · xⁿ e^{-x}`, `x = (ω - ω₀)/Λ`.
    MultipoleExp,
    /// `g²/Λ · xⁿ / (1 + x)^{n+β}`.
    MultipolePowerlaw,
    /// Half-Lorentzian from threshold, `(2g²/π) Λ / ((ω - ω₀)² + Λ²)`; `∫κ = g²`.
    Lorentzian,
    /// Piecewise-linear user data scaled by `coupling`, zero outside the table.
    Tabulated,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Flat => "flat",
            Family::MultipoleExp => "multipole-exp",
            Family::MultipolePowerlaw => "multipole-powerlaw",
            Family::Lorentzian => "lorentzian",
            Family::Tabulated => "tabulated",
        }
    }
}

/// Constructor inputs for [`make_form_factor`].
#[derive(Debug, Clone, PartialEq)]
pub struct FormFactorParams {
    pub coupling: f64,
    pub threshold: f64,
    pub cutoff: f64,
    pub exponent_n: f64,
    pub uv_exponent_beta: Option<f64>,
    pub table: Option<(Vec<f64>, Vec<f64>)>,
}

impl Default for FormFactorParams {
    fn default() -> Self {
        Self {
            coupling: 1.0,
            threshold: 0.0,
            cutoff: 1.0,
            exponent_n: 1.0,
            uv_exponent_beta: None,
            table: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Table {
    omega: Vec<f64>,
    kappa: Vec<f64>,
}

impl Table {
    fn eval(&self, w: f64) -> f64 {
        let n = self.omega.len();
        if w < self.omega[0] || w > self.omega[n - 1] {
            return 0.0;
        }
        let i = self.omega.partition_point(|&x| x <= w);
        if i == 0 {
            return self.kappa[0];
        }
        if i >= n {
            return self.kappa[n - 1];
        }
        let (x0, x1) = (self.omega[i - 1], self.omega[i]);
        let t = (w - x0) / (x1 - x0);
        self.kappa[i - 1] + t * (self.kappa[i] - self.kappa[i - 1])
    }
}

/// The continuum form factor `κ(ω)`. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensity {
    family: Family,
    coupling: f64,
    threshold: f64,
    cutoff: f64,
    exponent_n: f64,
    uv_exponent_beta: Option<f64>,
    table: Option<Table>,
}

/// Builds and validates a form factor.
pub fn make_form_factor(family: Family, params: FormFactorParams) -> Result<SpectralDensity> {
    let FormFactorParams {
        coupling,
        threshold,
        cutoff,
        exponent_n,
        uv_exponent_beta,
        table,
    } = params;
    if !(coupling >= 0.0) || !coupling.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "coupling must be finite and non-negative, got {coupling}"
        )));
    }
    if !(cutoff > 0.0) || !cutoff.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "cutoff must be positive, got {cutoff}"
        )));
    }
    if threshold.is_nan() || (threshold.is_infinite() && family != Family::Flat) || threshold == f64::INFINITY {
        return Err(Error::InvalidParameter(format!(
            "threshold must be finite for the {} family, got {threshold}",
            family.name()
        )));
    }
    if !(exponent_n >= 0.0) || !exponent_n.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "exponent_n must be non-negative, got {exponent_n}"
        )));
    }
    let uv_exponent_beta = match family {
        Family::MultipolePowerlaw => match uv_exponent_beta {
            Some(b) if b > 0.0 && b.is_finite() => Some(b),
            other => {
                return Err(Error::InvalidParameter(format!(
                    "multipole-powerlaw needs a positive uv_exponent_beta, got {other:?}"
                )))
            }
        },
        _ => uv_exponent_beta,
    };
    let table = match family {
        Family::Tabulated => {
            let (omega, kappa) =
                table.ok_or_else(|| Error::InvalidParameter("tabulated family needs omega and kappa arrays".into()))?;
            if omega.len() != kappa.len() || omega.len() < 2 {
                return Err(Error::InvalidParameter(format!(
                    "omega and kappa must have equal length >= 2 (got {} and {})",
                    omega.len(),
                    kappa.len()
                )));
            }
            if omega.windows(2).any(|w| !(w[1] > w[0])) || omega.iter().any(|w| !w.is_finite()) {
                return Err(Error::InvalidParameter(
                    "tabulated omega must be finite and strictly increasing".into(),
                ));
            }
            if kappa.iter().any(|k| !(*k >= 0.0) || !k.is_finite()) {
                return Err(Error::InvalidParameter(
                    "tabulated kappa must be finite and non-negative".into(),
                ));
            }
            Some(Table { omega, kappa })
        }
        _ => None,
    };
    Ok(SpectralDensity {
        family,
        coupling,
        threshold,
        cutoff,
        exponent_n,
        uv_exponent_beta,
        table,
    })
}

impl SpectralDensity {
    /// Flat continuum of strength `gamma` (κ = γ/2π) on the whole real line.
    pub fn flat(gamma: f64) -> Result<Self> {
        make_form_factor(
            Family::Flat,
            FormFactorParams {
                coupling: gamma,
                threshold: f64::NEG_INFINITY,
                ..FormFactorParams::default()
            },
        )
    }

    pub fn multipole_exp(coupling: f64, threshold: f64, cutoff: f64, exponent_n: f64) -> Result<Self> {
        make_form_factor(
            Family::MultipoleExp,
            FormFactorParams {
                coupling,
                threshold,
                cutoff,
                exponent_n,
                ..FormFactorParams::default()
            },
        )
    }

    pub fn multipole_powerlaw(coupling: f64, threshold: f64, cutoff: f64, exponent_n: f64, beta: f64) -> Result<Self> {
        make_form_factor(
            Family::MultipolePowerlaw,
            FormFactorParams {
                coupling,
                threshold,
                cutoff,
                exponent_n,
                uv_exponent_beta: Some(beta),
                table: None,
            },
        )
    }

    pub fn family(&self) -> Family {
        self.family
    }
    pub fn coupling(&self) -> f64 {
        self.coupling
    }
    pub fn threshold(&self) -> f64 {
        self.threshold
    }
    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }
    pub fn exponent_n(&self) -> f64 {
        self.exponent_n
    }
    pub fn uv_exponent_beta(&self) -> Option<f64> {
        self.uv_exponent_beta
    }

    /// The same form factor with its coupling replaced.
    pub fn with_coupling(&self, coupling: f64) -> Result<Self> {
        let mut params = self.params();
        params.coupling = coupling;
        make_form_factor(self.family, params)
    }

    /// Constructor inputs reproducing this density.
    pub fn params(&self) -> FormFactorParams {
        FormFactorParams {
            coupling: self.coupling,
            threshold: self.threshold,
            cutoff: self.cutoff,
            exponent_n: self.exponent_n,
            uv_exponent_beta: self.uv_exponent_beta,
            table: self.table.as_ref().map(|t| (t.omega.clone(), t.kappa.clone())),
        }
    }

    /// `κ(ω)`; zero below threshold.
    pub fn density(&self, omega: f64) -> f64 {
        if omega < self.threshold || self.coupling == 0.0 {
            return 0.0;
        }
        let g2 = self.coupling;
        let x = (omega - self.threshold) / self.cutoff;
        match self.family {
            Family::Flat => g2 / (2.0 * PI),
            Family::MultipoleExp => g2 / self.cutoff * x.powf(self.exponent_n) * (-x).exp(),
            Family::MultipolePowerlaw => {
                let beta = self.uv_exponent_beta.unwrap_or(1.0);
                g2 / self.cutoff * x.powf(self.exponent_n) / (1.0 + x).powf(self.exponent_n + beta)
            }
            Family::Lorentzian => 2.0 * g2 / (PI * self.cutoff) / (x * x + 1.0),
            Family::Tabulated => g2 * self.table.as_ref().map_or(0.0, |t| t.eval(omega)),
        }
    }

    /// Analytic continuation of `κ` off the real axis (principal branches,
    /// cuts to the left of threshold). `None` for the flat and tabulated
    /// families.
    pub fn density_continued(&self, omega: Complex64) -> Option<Complex64> {
        let g2 = self.coupling / self.cutoff;
        let x = (omega - self.threshold) / self.cutoff;
        let n = self.exponent_n;
        match self.family {
            Family::MultipoleExp => Some(x.powf(n) * (-x).exp() * g2),
            Family::MultipolePowerlaw => {
                let beta = self.uv_exponent_beta.unwrap_or(1.0);
                Some(x.powf(n) / (x + 1.0).powf(n + beta) * g2)
            }
            Family::Lorentzian => Some((x * x + 1.0).inv() * (2.0 * g2 / PI)),
            Family::Flat | Family::Tabulated => None,
        }
    }

    pub fn is_integrable(&self) -> bool {
        self.family != Family::Flat || self.coupling == 0.0
    }

    /// Lower and upper edge of the support (upper is `+∞` except for tables).
    pub fn support(&self) -> (f64, f64) {
        match &self.table {
            Some(t) => (
                self.threshold.max(t.omega[0]),
                t.omega[t.omega.len() - 1].max(self.threshold),
            ),
            None => (self.threshold, f64::INFINITY),
        }
    }

    /// Points where `κ` is not smooth (table nodes); empty for analytic families.
    pub fn kinks(&self) -> Vec<f64> {
        match &self.table {
            Some(t) => {
                let (lo, hi) = self.support();
                t.omega.iter().copied().filter(|w| *w > lo && *w < hi).collect()
            }
            None => Vec::new(),
        }
    }

    /// `∫ κ(ω) g(ω) dω` over the support, with extra `breakpoints` for
    /// features of `g`. Semi-infinite supports use the map
    /// `ω = ω₀ + Λ u/(1-u)`.
    pub fn integrate_weighted<T, G>(&self, g: G, breakpoints: &[f64], integrator: &Integrator) -> Result<Estimate<T>>
    where
        T: QuadValue,
        G: Fn(f64) -> T,
    {
        if !self.is_integrable() {
            return Err(Error::NonIntegrable("the flat continuum has no cutoff".into()));
        }
        if self.coupling == 0.0 {
            return Ok(Estimate {
                value: T::default(),
                error: 0.0,
                intervals: 0,
            });
        }
        let (lo, hi) = self.support();
        let mut pts: Vec<f64> = self
            .kinks()
            .into_iter()
            .chain(breakpoints.iter().copied())
            .filter(|x| x.is_finite() && *x > lo && *x < hi)
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let f = |w: f64| g(w) * self.density(w);
        if hi.is_finite() {
            if hi <= lo {
                return Ok(Estimate {
                    value: T::default(),
                    error: 0.0,
                    intervals: 0,
                });
            }
            let mut all = Vec::with_capacity(pts.len() + 2);
            all.push(lo);
            all.extend(pts);
            all.push(hi);
            integrator.integrate(f, &all)
        } else {
            integrator.integrate_to_infinity(f, lo, self.cutoff, &pts)
        }
    }

    /// `∫ κ(ω) dω`.
    pub fn total_weight(&self, integrator: &Integrator) -> Result<f64> {
        Ok(self.integrate_weighted(|_| 1.0, &[], integrator)?.value)
    }

    /// `∫ κ(ω) (ω - about)^k dω`.
    pub fn moment(&self, k: i32, about: f64, integrator: &Integrator) -> Result<f64> {
        Ok(self
            .integrate_weighted(|w| (w - about).powi(k), &[about], integrator)?
            .value)
    }

    /// Fraction of `∫κ` lying beyond `threshold + widths·Λ`.
    pub fn tail_fraction(&self, widths: f64, integrator: &Integrator) -> Result<f64> {
        let total = self.total_weight(integrator)?;
        if total == 0.0 {
            return Ok(0.0);
        }
        let edge = self.threshold + widths * self.cutoff;
        let tail = self.integrate_weighted(|w| if w >= edge { 1.0 } else { 0.0 }, &[edge], integrator)?;
        Ok(tail.value / total)
    }
}

/// Zeno time `τ_Z = (∫κ)^{-1/2}`; infinite for `κ ≡ 0`.
pub fn zeno_time(sd: &SpectralDensity) -> Result<f64> {
    zeno_time_with(sd, &Integrator::default())
}

pub fn zeno_time_with(sd: &SpectralDensity, integrator: &Integrator) -> Result<f64> {
    let w = sd.total_weight(integrator)?;
    Ok(if w > 0.0 { w.powf(-0.5) } else { f64::INFINITY })
}

/// Fermi golden-rule rate `γ = 2π κ(ω_in)`.
pub fn golden_rule_rate(sd: &SpectralDensity, omega_in: f64) -> Result<f64> {
    if !(omega_in > sd.threshold()) {
        return Err(Error::BelowThreshold {
            omega_in,
            threshold: sd.threshold(),
        });
    }
    Ok(2.0 * PI * sd.density(omega_in))
}

/// One level of a discrete bath.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub omega: f64,
    pub coupling: Complex64,
}

/// Finitely many bath levels coupled to the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSpectrum {
    modes: Vec<Mode>,
    omega_in: f64,
}

impl DiscreteSpectrum {
    pub fn new(modes: Vec<Mode>, omega_in: f64) -> Result<Self> {
        if modes.windows(2).any(|w| !(w[1].omega > w[0].omega)) {
            return Err(Error::InvalidParameter(
                "mode energies must be strictly increasing".into(),
            ));
        }
        if modes
            .iter()
            .any(|m| !m.omega.is_finite() || !m.coupling.re.is_finite() || !m.coupling.im.is_finite())
            || !omega_in.is_finite()
        {
            return Err(Error::InvalidParameter("non-finite mode data".into()));
        }
        Ok(Self { modes, omega_in })
    }

    /// A single level at `omega` with coupling `rabi`: the two-level
    /// Rabi problem seen from the initial state.
    pub fn single(omega: f64, rabi: f64, omega_in: f64) -> Result<Self> {
        Self::new(
            vec![Mode {
                omega,
                coupling: Complex64::new(rabi, 0.0),
            }],
            omega_in,
        )
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }
    pub fn omega_in(&self) -> f64 {
        self.omega_in
    }

    /// `Σ |φ_n|²`.
    pub fn total_weight(&self) -> f64 {
        self.modes.iter().map(|m| m.coupling.norm_sqr()).sum()
    }

    /// Hamiltonian in the basis `{|in⟩, |1⟩, …, |N⟩}`, diagonal shifted by
    /// `-shift` (pass `omega_in` for the interaction-picture amplitude).
    pub fn hamiltonian(&self, shift: f64) -> nalgebra::DMatrix<Complex64> {
        let n = self.modes.len() + 1;
        let mut h = nalgebra::DMatrix::<Complex64>::zeros(n, n);
        h[(0, 0)] = Complex64::new(self.omega_in - shift, 0.0);
        for (i, m) in self.modes.iter().enumerate() {
            h[(i + 1, i + 1)] = Complex64::new(m.omega - shift, 0.0);
            h[(i + 1, 0)] = m.coupling;
            h[(0, i + 1)] = m.coupling.conj();
        }
        h
    }
}

/// Gauss-Legendre discretization of `κ` on `[threshold, omega_max]`:
/// `ω_n` are the nodes and `|φ_n|² = κ(ω_n) w_n`.
pub fn discretize(sd: &SpectralDensity, omega_in: f64, n_modes: usize, omega_max: f64) -> Result<DiscreteSpectrum> {
    if n_modes < 2 {
        return Err(Error::InvalidParameter(format!(
            "discretize needs at least two modes, got {n_modes}"
        )));
    }
    let lo = sd.threshold();
    if !lo.is_finite() || !(omega_max > lo) || !omega_max.is_finite() {
        return Err(Error::InvalidRange(format!(
            "discretization range [{lo}, {omega_max}] is empty or unbounded"
        )));
    }
    let (nodes, weights) = gauss_legendre(n_modes, lo, omega_max);
    let modes = nodes
        .into_iter()
        .zip(weights)
        .map(|(omega, w)| Mode {
            omega,
            coupling: Complex64::new((sd.density(omega) * w).sqrt(), 0.0),
        })
        .collect();
    DiscreteSpectrum::new(modes, omega_in)
}

/// On-disk model description (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub family: Family,
    pub coupling: f64,
    /// `null` means `-∞` (flat family only).
    pub threshold: Option<f64>,
    pub cutoff: f64,
    pub exponent_n: f64,
    pub uv_exponent_beta: Option<f64>,
    pub omega_in: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<Vec<f64>>,
}

impl ModelFile {
    pub fn spectral_density(&self) -> Result<SpectralDensity> {
        let table = match (&self.omega, &self.kappa) {
            (Some(o), Some(k)) => Some((o.clone(), k.clone())),
            (None, None) => None,
            _ => return Err(Error::InvalidParameter("omega and kappa must be given together".into())),
        };
        make_form_factor(
            self.family,
            FormFactorParams {
                coupling: self.coupling,
                threshold: self.threshold.unwrap_or(f64::NEG_INFINITY),
                cutoff: self.cutoff,
                exponent_n: self.exponent_n,
                uv_exponent_beta: self.uv_exponent_beta,
                table,
            },
        )
    }

    pub fn from_density(sd: &SpectralDensity, omega_in: f64) -> Self {
        let p = sd.params();
        let (omega, kappa) = match p.table {
            Some((o, k)) => (Some(o), Some(k)),
            None => (None, None),
        };
        Self {
            family: sd.family(),
            coupling: p.coupling,
            threshold: p.threshold.is_finite().then_some(p.threshold),
            cutoff: p.cutoff,
            exponent_n: p.exponent_n,
            uv_exponent_beta: p.uv_exponent_beta,
            omega_in,
            omega,
            kappa,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp1() -> SpectralDensity {
        SpectralDensity::multipole_exp(1.0, 0.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn flat_density_is_gamma_over_two_pi() {
        let sd = SpectralDensity::flat(0.7).unwrap();
        for w in [-1e6, -3.0, 0.0, 2.5, 1e9] {
            assert_eq!(sd.density(w), 0.7 / (2.0 * PI));
        }
        assert_eq!(golden_rule_rate(&sd, 1.0).unwrap(), 0.7);
        assert!(matches!(zeno_time(&sd), Err(Error::NonIntegrable(_))));
    }

    #[test]
    fn zero_coupling_vanishes() {
        let sd = SpectralDensity::multipole_exp(0.0, 0.0, 1.0, 2.0).unwrap();
        assert!((0..100).all(|i| sd.density(i as f64 * 0.1) == 0.0));
        assert_eq!(zeno_time(&sd).unwrap(), f64::INFINITY);
        let d = discretize(&sd, 1.0, 10, 20.0).unwrap();
        assert!(d.modes().iter().all(|m| m.coupling == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn multipole_exp_closed_form() {
        assert!((exp1().density(1.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((golden_rule_rate(&exp1(), 1.0).unwrap() - 2.0 * PI / std::f64::consts::E).abs() < 1e-12);
    }

    #[test]
    fn zeno_time_of_unit_multipole_is_one() {
        // ∫ x e^{-x} dx = Γ(2) = 1
        assert!((zeno_time(&exp1()).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn below_threshold_is_stable() {
        let sd = SpectralDensity::multipole_exp(1.0, 0.5, 1.0, 1.0).unwrap();
        assert!(matches!(golden_rule_rate(&sd, 0.5), Err(Error::BelowThreshold { .. })));
        assert_eq!(sd.density(0.4), 0.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        let bad = |p: FormFactorParams, f: Family| make_form_factor(f, p).is_err();
        assert!(bad(
            FormFactorParams {
                cutoff: 0.0,
                ..Default::default()
            },
            Family::MultipoleExp
        ));
        assert!(bad(
            FormFactorParams {
                coupling: -1.0,
                ..Default::default()
            },
            Family::MultipoleExp
        ));
        assert!(bad(
            FormFactorParams {
                exponent_n: -0.5,
                ..Default::default()
            },
            Family::MultipoleExp
        ));
        assert!(bad(FormFactorParams::default(), Family::MultipolePowerlaw));
        assert!(bad(FormFactorParams::default(), Family::Tabulated));
        assert!(bad(
            FormFactorParams {
                threshold: f64::NEG_INFINITY,
                ..Default::default()
            },
            Family::Lorentzian
        ));
    }

    #[test]
    fn discretize_rejects_single_mode() {
        assert!(matches!(
            discretize(&exp1(), 1.0, 1, 30.0),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            discretize(&exp1(), 1.0, 10, -1.0),
            Err(Error::InvalidRange(_))
        ));
    }

    #[test]
    fn discretized_weight_matches_integral() {
        let sd = exp1();
        let q = Integrator::default();
        let omega_max = 40.0;
        let exact = sd
            .integrate_weighted(|w| if w <= omega_max { 1.0 } else { 0.0 }, &[omega_max], &q)
            .unwrap()
            .value;
        let d = discretize(&sd, 1.0, 200, omega_max).unwrap();
        assert!((d.total_weight() - exact).abs() / exact < 1e-8);
        // and to the full integral, since the tail past 40Λ is ~1e-16
        assert!((d.total_weight() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn lorentzian_and_table_normalization() {
        let q = Integrator::default();
        let lor = make_form_factor(
            Family::Lorentzian,
            FormFactorParams {
                coupling: 0.3,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((lor.total_weight(&q).unwrap() - 0.3).abs() < 1e-9);

        let tab = make_form_factor(
            Family::Tabulated,
            FormFactorParams {
                coupling: 2.0,
                threshold: 0.0,
                table: Some((vec![0.0, 1.0, 3.0], vec![0.0, 1.0, 0.0])),
                ..Default::default()
            },
        )
        .unwrap();
        assert!((tab.total_weight(&q).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(tab.density(2.0), 1.0);
        assert_eq!(tab.density(3.5), 0.0);
    }

    #[test]
    fn model_file_round_trip() {
        let json = r#"{"family":"multipole-exp","coupling":0.1,"threshold":0.0,"cutoff":1.0,
            "exponent_n":1,"uv_exponent_beta":null,"omega_in":1.0}"#;
        let m: ModelFile = serde_json::from_str(json).unwrap();
        let sd = m.spectral_density().unwrap();
        assert_eq!(sd.family(), Family::MultipoleExp);
        assert_eq!(ModelFile::from_density(&sd, 1.0), m);
    }
}
