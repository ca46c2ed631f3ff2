//! Effective decay rates under observation.
//!
//! Pulsed measurements every `τ` give `γ_eff(τ) = −log P(τ)/τ`. To the extent
//! that `A(τ) ≈ 1`, this is the overlap of `κ` with a response function:
//!
//! | observation           | rate                                                |
//! |-----------------------|-----------------------------------------------------|
//! | pulsed, interval `τ`  | `τ ∫ κ(ω) sinc²((ω − ω_in)τ/2) dω`                  |
//! | absorptive, rate `Γ`  | `(4/Γ) ∫ κ(ω) (Γ/2)² / ((ω − ω_in)² + (Γ/2)²) dω`   |
//! | Rabi probe, `K`       | `π [κ(ω_in + K) + κ(ω_in − K)]`                     |

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laser::{pole_and_rate, LaserAtomModel};
use crate::model::{golden_rule_rate, DiscreteSpectrum, Family, SpectralDensity};
use crate::quadrature::Integrator;
use crate::trace::SurvivalTrace;

/// Largest number of response-function zeros used as breakpoints.
const MAX_BREAKPOINTS: usize = 20_000;

/// `−log(P)/τ`.
pub fn effective_rate_from_probability(p_tau: f64, tau: f64) -> Result<f64> {
    if !(p_tau > 0.0) || p_tau > 1.0 + 1e-12 {
        return Err(Error::NonpositiveProbability(p_tau));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    Ok(-p_tau.min(1.0).ln() / tau)
}

/// `γ_eff(τ)` from a survival trace, interpolating `P(τ)` between samples.
pub fn effective_rate_from_trace(trace: &SurvivalTrace, tau: f64) -> Result<f64> {
    effective_rate_from_probability(trace.probability_at(tau)?, tau)
}

/// `P(τ)^k` for `k = 1..=n_measurements`: survival after `k` projective
/// checks spaced by `τ`.
pub fn pulsed_survival_curve(trace: &SurvivalTrace, tau: f64, n_measurements: usize) -> Result<Vec<f64>> {
    if n_measurements < 1 {
        return Err(Error::InvalidParameter("at least one measurement is needed".into()));
    }
    let p = trace.probability_at(tau)?;
    let mut out = Vec::with_capacity(n_measurements);
    let mut acc = 1.0;
    for _ in 0..n_measurements {
        acc *= p;
        out.push(acc);
    }
    Ok(out)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Zeros of a response function centred on `omega_in` with spacing
/// `spacing`, restricted to where `κ` can matter.
fn response_breakpoints(sd: &SpectralDensity, omega_in: f64, spacing: f64, max_count: usize) -> Vec<f64> {
    let (lo, hi) = sd.support();
    let reach = if hi.is_finite() {
        hi - lo + (omega_in - lo).abs()
    } else {
        (omega_in - lo).abs() + 50.0 * sd.cutoff()
    };
    let per_side = ((reach / spacing).ceil() as usize).min(max_count / 2);
    let mut pts = vec![omega_in];
    for k in 1..=per_side {
        let d = spacing * k as f64;
        pts.push(omega_in - d);
        pts.push(omega_in + d);
    }
    pts.retain(|w| *w > lo && *w < hi);
    pts
}

/// `τ ∫ κ(ω) sinc²((ω − ω_in)τ/2) dω`, split at the zeros `ω_in ± 2πk/τ`.
pub fn pulsed_rate_integral(sd: &SpectralDensity, omega_in: f64, tau: f64) -> Result<f64> {
    pulsed_rate_integral_with(sd, omega_in, tau, &Integrator::with_rel_tol(1e-8))
}

pub fn pulsed_rate_integral_with(
    sd: &SpectralDensity,
    omega_in: f64,
    tau: f64,
    integrator: &Integrator,
) -> Result<f64> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    if sd.family() == Family::Flat {
        // τ(γ/2π)∫sinc²(ντ/2)dν = γ
        return Ok(sd.coupling());
    }
    let pts = response_breakpoints(sd, omega_in, 2.0 * PI / tau, MAX_BREAKPOINTS);
    let est = sd.integrate_weighted(|w| sinc(0.5 * (w - omega_in) * tau).powi(2), &pts, integrator)?;
    Ok(tau * est.value)
}

/// Lorentzian response `(4/Γ) ∫ κ(ω) (Γ/2)² / ((ω − ω_in)² + (Γ/2)²) dω`.
pub fn continuous_rate_integral(sd: &SpectralDensity, omega_in: f64, gamma: f64) -> Result<f64> {
    continuous_rate_integral_with(sd, omega_in, gamma, &Integrator::with_rel_tol(1e-8))
}

pub fn continuous_rate_integral_with(
    sd: &SpectralDensity,
    omega_in: f64,
    gamma: f64,
    integrator: &Integrator,
) -> Result<f64> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "measurement rate must be positive, got {gamma}"
        )));
    }
    if sd.family() == Family::Flat {
        return Ok(sd.coupling());
    }
    let half = 0.5 * gamma;
    let pts = response_breakpoints(sd, omega_in, half, 40)
        .into_iter()
        .filter(|w| (w - omega_in).abs() <= 10.0 * gamma)
        .collect::<Vec<_>>();
    let est = sd.integrate_weighted(
        |w| {
            let d = (w - omega_in) / half;
            1.0 / (1.0 + d * d)
        },
        &pts,
        integrator,
    )?;
    Ok(4.0 / gamma * est.value)
}

/// `π [κ(ω_in + K) + κ(ω_in − K)]`, even in `K`.
pub fn rabi_rate(sd: &SpectralDensity, omega_in: f64, k: f64) -> f64 {
    let k = k.abs();
    PI * (sd.density(omega_in + k) + sd.density(omega_in - k))
}

/// Pulsed rate for a discrete bath, `τ Σ |φ_n|² sinc²((ω_n − ω_in)τ/2)`.
pub fn pulsed_rate_discrete(ds: &DiscreteSpectrum, tau: f64) -> Result<f64> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    Ok(tau
        * ds.modes()
            .iter()
            .map(|m| m.coupling.norm_sqr() * sinc(0.5 * (m.omega - ds.omega_in()) * tau).powi(2))
            .sum::<f64>())
}

/// Absorptive-measurement rate for a discrete bath.
pub fn continuous_rate_discrete(ds: &DiscreteSpectrum, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "measurement rate must be positive, got {gamma}"
        )));
    }
    let half = 0.5 * gamma;
    Ok(4.0 / gamma
        * ds.modes()
            .iter()
            .map(|m| {
                let d = (m.omega - ds.omega_in()) / half;
                m.coupling.norm_sqr() / (1.0 + d * d)
            })
            .sum::<f64>())
}

/// The quantity varied along a [`RateCurve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterKind {
    /// Pulse interval `τ`.
    Tau,
    /// Absorption rate `Γ` of a continuous measurement.
    GammaMeas,
    /// Rabi probe strength `K`.
    RabiK,
    /// Laser strength `B`.
    LaserB,
}

impl ParameterKind {
    pub fn name(self) -> &'static str {
        match self {
            ParameterKind::Tau => "tau",
            ParameterKind::GammaMeas => "gamma_meas",
            ParameterKind::RabiK => "rabi_k",
            ParameterKind::LaserB => "laser_b",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    pub parameter_kind: ParameterKind,
    pub parameters: Vec<f64>,
    pub rates: Vec<f64>,
    pub natural_rate: f64,
}

fn check_grid(kind: ParameterKind, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidRange("parameter grid is empty".into()));
    }
    if grid.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidRange("parameter grid has non-finite entries".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidRange("parameter grid must be strictly increasing".into()));
    }
    let floor_ok = match kind {
        ParameterKind::Tau | ParameterKind::GammaMeas => grid[0] > 0.0,
        ParameterKind::LaserB => grid[0] >= 0.0,
        ParameterKind::RabiK => true,
    };
    if !floor_ok {
        return Err(Error::InvalidRange(format!(
            "{} grid starts at {}, outside its domain",
            kind.name(),
            grid[0]
        )));
    }
    Ok(())
}

/// Evaluates the response integral matching `kind` on every grid point.
/// Points are computed in parallel and returned in grid order.
pub fn rate_curve(sd: &SpectralDensity, omega_in: f64, kind: ParameterKind, grid: &[f64]) -> Result<RateCurve> {
    check_grid(kind, grid)?;
    let natural_rate = golden_rule_rate(sd, omega_in)?;
    let rates = grid
        .par_iter()
        .map(|&p| match kind {
            ParameterKind::Tau => pulsed_rate_integral(sd, omega_in, p),
            ParameterKind::GammaMeas => continuous_rate_integral(sd, omega_in, p),
            ParameterKind::RabiK => Ok(rabi_rate(sd, omega_in, p)),
            ParameterKind::LaserB => {
                let m = LaserAtomModel::new(omega_in, omega_in, sd.clone(), p)?;
                Ok(pole_and_rate(&m)?.gamma_eff)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(RateCurve {
        parameter_kind: kind,
        parameters: grid.to_vec(),
        rates,
        natural_rate,
    })
}

/// `n` points from `lo` to `hi`, log-spaced if `log` is set.
pub fn parameter_grid(lo: f64, hi: f64, n: usize, log: bool) -> Result<Vec<f64>> {
    if n == 0 || !lo.is_finite() || !hi.is_finite() || (n > 1 && !(hi > lo)) {
        return Err(Error::InvalidRange(format!("bad grid [{lo}, {hi}] with {n} points")));
    }
    if log && !(lo > 0.0) {
        return Err(Error::InvalidRange(format!(
            "log grid needs a positive start, got {lo}"
        )));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let last = (n - 1) as f64;
    Ok((0..n)
        .map(|i| {
            if i + 1 == n {
                return hi;
            }
            let f = i as f64 / last;
            if log {
                lo * (hi / lo).powf(f)
            } else {
                lo + (hi - lo) * f
            }
        })
        .collect())
}
