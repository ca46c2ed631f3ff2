//! Survival amplitude from the memory-kernel equation
//!
//! ```text
//! dA/dt = −∫₀ᵗ k(s) A(t − s) ds,    A(0) = 1,
//! k(s) = Σ |φ_n|² e^{−i(ω_n − ω_in)s} · m(s)
//! ```
//!
//! (interaction picture), where `m(s)` is `1` for free decay, `e^{−Γs/2}` for
//! an absorptive continuous measurement and `cos(Ks)` for a Rabi probe. For a
//! continuum the sum is `∫κ(ω) e^{−i(ω − ω_in)s} dω`.
//!
//! The convolution and the time derivative are both discretized by the
//! trapezoidal rule, giving an implicit second-order scheme at `O(N²)` cost.
//! Every solve is repeated at half the step; the pair gives an error
//! estimate and, by default, a Richardson-extrapolated trace.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{DiscreteSpectrum, Family, SpectralDensity};
use crate::quadrature::{gauss_legendre, Integrator};
use crate::trace::{SurvivalTrace, TimeGrid};

/// Modulation `m(s)` of the memory kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasurementMode {
    Plain,
    /// Decay products absorbed at rate `Γ`: `m(s) = e^{−Γs/2}`.
    Damped {
        gamma: f64,
    },
    /// Final states Rabi-coupled with strength `K`: `m(s) = cos(Ks)`.
    Rabi {
        k: f64,
    },
}

impl MeasurementMode {
    fn factor(&self, s: f64) -> f64 {
        match *self {
            MeasurementMode::Plain => 1.0,
            MeasurementMode::Damped { gamma } => (-0.5 * gamma * s).exp(),
            MeasurementMode::Rabi { k } => (k * s).cos(),
        }
    }

    fn rate_scale(&self) -> f64 {
        match *self {
            MeasurementMode::Plain => 0.0,
            MeasurementMode::Damped { gamma } => gamma,
            MeasurementMode::Rabi { k } => k,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Spectrum {
    Discrete(DiscreteSpectrum),
    Continuum { density: SpectralDensity, omega_in: f64 },
}

/// A bath together with the way it is observed.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    spectrum: Spectrum,
    mode: MeasurementMode,
}

impl KernelSpec {
    pub fn new(spectrum: Spectrum, mode: MeasurementMode) -> Result<Self> {
        let mode = match mode {
            MeasurementMode::Plain => mode,
            MeasurementMode::Damped { gamma } => {
                if !(gamma >= 0.0) || !gamma.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "measurement rate must be finite and non-negative, got {gamma}"
                    )));
                }
                mode
            }
            // cos is even; folding the sign keeps ±K bit-identical
            MeasurementMode::Rabi { k } => {
                if !k.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "probe strength must be finite, got {k}"
                    )));
                }
                MeasurementMode::Rabi { k: k.abs() }
            }
        };
        if let Spectrum::Continuum { omega_in, .. } = &spectrum {
            if !omega_in.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "omega_in must be finite, got {omega_in}"
                )));
            }
        }
        Ok(Self { spectrum, mode })
    }

    pub fn continuum(density: SpectralDensity, omega_in: f64, mode: MeasurementMode) -> Result<Self> {
        Self::new(Spectrum::Continuum { density, omega_in }, mode)
    }

    pub fn discrete(spectrum: DiscreteSpectrum, mode: MeasurementMode) -> Result<Self> {
        Self::new(Spectrum::Discrete(spectrum), mode)
    }

    /// Rabi coupling `Ω` to a level that decays into a flat continuum of
    /// width `Γ`. The kernel is `Ω² e^{−Γs/2}`, the same as a two-level
    /// system with absorption `V = Γ/4`.
    pub fn flat_two_level(rabi_omega: f64, gamma: f64) -> Result<Self> {
        let ds = DiscreteSpectrum::single(0.0, rabi_omega, 0.0)?;
        Self::discrete(ds, MeasurementMode::Damped { gamma })
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }
    pub fn mode(&self) -> MeasurementMode {
        self.mode
    }

    pub fn with_mode(&self, mode: MeasurementMode) -> Result<Self> {
        Self::new(self.spectrum.clone(), mode)
    }

    /// Largest step that resolves the fastest kernel oscillation:
    /// `0.1 / max(Λ, |ω_in − ω₀|, Γ, K)`. For discrete baths the spread of
    /// the significantly coupled levels stands in for `Λ`.
    pub fn max_step(&self) -> f64 {
        let bath = match &self.spectrum {
            Spectrum::Continuum { density, omega_in } => {
                if density.family() == Family::Flat {
                    0.0
                } else {
                    let mut scale = density.cutoff().max((omega_in - density.threshold()).abs());
                    if density.family() == Family::Tabulated {
                        let (lo, hi) = density.support();
                        scale = scale.max((hi - omega_in).abs()).max((omega_in - lo).abs());
                    }
                    scale
                }
            }
            Spectrum::Discrete(ds) => {
                let total = ds.total_weight();
                ds.modes()
                    .iter()
                    .filter(|m| m.coupling.norm_sqr() >= 1e-8 * total)
                    .map(|m| (m.omega - ds.omega_in()).abs())
                    .fold(0.0, f64::max)
            }
        };
        let fastest = bath.max(self.mode.rate_scale());
        if fastest > 0.0 {
            0.1 / fastest
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Return `(4 A_{h/2} − A_h)/3` instead of the plain trapezoidal trace.
    pub extrapolate: bool,
    /// Relative tolerance for continuum kernel quadrature.
    pub kernel_rel_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            extrapolate: true,
            kernel_rel_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolterraSolution {
    pub trace: SurvivalTrace,
    /// Step-halving estimate of the max-norm amplitude error.
    pub error_estimate: f64,
    pub step: f64,
}

pub fn solve_memory_kernel(spec: &KernelSpec, grid: &TimeGrid) -> Result<VolterraSolution> {
    solve_memory_kernel_with(spec, grid, &SolverOptions::default())
}

pub fn solve_memory_kernel_with(
    spec: &KernelSpec,
    grid: &TimeGrid,
    options: &SolverOptions,
) -> Result<VolterraSolution> {
    let h = grid.step();
    let max = spec.max_step();
    if h > max * (1.0 + 1e-12) {
        return Err(Error::StepTooCoarse { step: h, max });
    }
    let n = grid.intervals();

    // A flat continuum has k(s) = γ δ(s): the decay is exactly exponential.
    if let Spectrum::Continuum { density, .. } = &spec.spectrum {
        if density.family() == Family::Flat {
            let gamma = density.coupling();
            return Ok(VolterraSolution {
                trace: SurvivalTrace::from_fn(grid, |t| Complex64::new((-0.5 * gamma * t).exp(), 0.0)),
                error_estimate: 0.0,
                step: h,
            });
        }
    }

    let fine = kernel_samples_with(spec, 0.5 * h, 2 * n + 1, options)?;
    let coarse: Vec<Complex64> = fine.iter().step_by(2).copied().collect();
    let a_fine = trapezoid_march(&fine, 0.5 * h, 2 * n);
    let a_coarse = trapezoid_march(&coarse, h, n);

    let mut diff: f64 = 0.0;
    let amps: Vec<Complex64> = (0..=n)
        .map(|i| {
            let (c, f) = (a_coarse[i], a_fine[2 * i]);
            diff = diff.max((c - f).norm());
            if options.extrapolate {
                (f * 4.0 - c) / 3.0
            } else {
                c
            }
        })
        .collect();
    let error_estimate = if options.extrapolate {
        diff / 3.0
    } else {
        diff * 4.0 / 3.0
    };

    let peak = amps.iter().map(|a| a.norm()).fold(0.0, f64::max);
    if !(peak <= 1.0 + 1e-8) {
        return Err(Error::AmplitudeBlowup(peak));
    }
    Ok(VolterraSolution {
        trace: SurvivalTrace::from_amplitudes(grid, amps),
        error_estimate,
        step: h,
    })
}

/// Modulated kernel `k(j·step)` for `j = 0..count`.
pub fn kernel_samples(spec: &KernelSpec, step: f64, count: usize) -> Result<Vec<Complex64>> {
    kernel_samples_with(spec, step, count, &SolverOptions::default())
}

fn kernel_samples_with(spec: &KernelSpec, step: f64, count: usize, options: &SolverOptions) -> Result<Vec<Complex64>> {
    let mut k = match &spec.spectrum {
        Spectrum::Discrete(ds) => {
            let nodes: Vec<(f64, f64)> = ds
                .modes()
                .iter()
                .map(|m| (m.omega - ds.omega_in(), m.coupling.norm_sqr()))
                .collect();
            exponential_sums(&nodes, step, count)
        }
        Spectrum::Continuum { density, omega_in } => {
            if density.family() == Family::Flat {
                return Err(Error::NonIntegrable(
                    "the flat continuum kernel is a delta function".into(),
                ));
            }
            continuum_kernel(density, *omega_in, step, count, options.kernel_rel_tol)?
        }
    };
    if spec.mode != MeasurementMode::Plain {
        for (j, v) in k.iter_mut().enumerate() {
            *v *= spec.mode.factor(j as f64 * step);
        }
    }
    Ok(k)
}

/// `Σ_i c_i e^{−i ν_i j h}` for `j = 0..count`, from `(ν_i, c_i)`.
///
/// Phases advance by multiplication inside blocks of 64 samples and are
/// reset exactly at each block start, so results do not depend on the
/// thread count.
fn exponential_sums(nodes: &[(f64, f64)], step: f64, count: usize) -> Vec<Complex64> {
    let nodes: Vec<(Complex64, Complex64)> = nodes
        .iter()
        .map(|&(nu, c)| (Complex64::new(nu, 0.0), Complex64::new(c, 0.0)))
        .collect();
    complex_exponential_sums(&nodes, step, count)
}

/// [`exponential_sums`] with complex frequencies and weights; `Im ν ≤ 0`
/// keeps every term bounded.
fn complex_exponential_sums(nodes: &[(Complex64, Complex64)], step: f64, count: usize) -> Vec<Complex64> {
    const BLOCK: usize = 64;
    let minus_i = Complex64::new(0.0, -1.0);
    let rotors: Vec<Complex64> = nodes.iter().map(|&(nu, _)| (minus_i * nu * step).exp()).collect();
    let mut out = vec![Complex64::new(0.0, 0.0); count];
    out.par_chunks_mut(BLOCK).enumerate().for_each(|(b, chunk)| {
        let j0 = (b * BLOCK) as f64;
        for (&(nu, c), &z) in nodes.iter().zip(&rotors) {
            let mut w = c * (minus_i * nu * (step * j0)).exp();
            for slot in chunk.iter_mut() {
                if w == Complex64::new(0.0, 0.0) {
                    break;
                }
                *slot += w;
                w *= z;
            }
        }
    });
    out
}

const NODES_PER_PANEL: usize = 16;

/// Unmodulated continuum kernel `∫κ(ω) e^{−i(ω − ω_in)s} dω` on `s = j·step`.
///
/// Form factors with an analytic continuation are integrated along a ray
/// into the lower half plane ([`rotated_kernel`]). Tabulated data use a
/// composite Gauss-Legendre rule on the real axis whose panels span at most
/// one period of the fastest phase; a few samples are checked against the
/// adaptive integrator and the panels are halved until they agree.
fn continuum_kernel(
    sd: &SpectralDensity,
    omega_in: f64,
    step: f64,
    count: usize,
    rel_tol: f64,
) -> Result<Vec<Complex64>> {
    if sd.coupling() == 0.0 {
        return Ok(vec![Complex64::new(0.0, 0.0); count]);
    }
    let integrator = Integrator::with_rel_tol(rel_tol);
    let total = sd.total_weight(&integrator)?;
    if sd
        .density_continued(Complex64::new(sd.threshold() + sd.cutoff(), 0.0))
        .is_some()
    {
        return Ok(rotated_kernel(sd, omega_in, step, count, total));
    }
    let (lo, edge) = sd.support();
    if !edge.is_finite() {
        return Err(Error::NonIntegrable(format!(
            "{} form factor has unbounded support and no analytic continuation",
            sd.family().name()
        )));
    }
    let lambda = sd.cutoff();
    let s_max = step * count.saturating_sub(1) as f64;
    let tol = rel_tol * total;

    let mut max_width = (2.0 * PI / s_max.max(f64::MIN_POSITIVE)).min(0.5 * lambda);
    for _ in 0..4 {
        let nodes = panel_nodes(sd, omega_in, lo, edge, max_width);
        let k = exponential_sums(&nodes, step, count);
        if body_matches_adaptive(sd, omega_in, lo, edge, &k, step, &integrator, tol)? {
            return Ok(k);
        }
        max_width *= 0.5;
    }
    Err(Error::QuadratureFailure {
        value: total,
        error: tol,
        intervals: ((edge - lo) / max_width) as usize,
    })
}

/// Angle of the integration ray below the real axis.
const RAY_ANGLE: f64 = PI / 4.0;

/// Kernel along `ω = ω₀ + r e^{−iπ/4}`, `r ≥ 0`.
///
/// On the ray `|e^{−iωs}| = e^{−r s sin(π/4)}`, so the integrand decays
/// instead of oscillating and one set of geometrically graded panels (two
/// per octave, from `2⁻⁶⁰Λ` to where `e^{−r h sin(π/4)} < e^{−40}`) serves
/// every `s ≥ h`. The arc at infinity vanishes for all built-in analytic
/// families. `k(0)` is the real-axis weight `total`.
fn rotated_kernel(sd: &SpectralDensity, omega_in: f64, step: f64, count: usize, total: f64) -> Vec<Complex64> {
    let dir = Complex64::from_polar(1.0, -RAY_ANGLE);
    let lambda = sd.cutoff();
    let r_top = 40.0 / (step * RAY_ANGLE.sin());
    let octaves = (r_top / lambda).log2().ceil().max(1.0) as i32;
    let mut nodes = Vec::new();
    for m in -60..octaves {
        for half in 0..2 {
            let a = lambda * 2f64.powf(m as f64 + 0.5 * half as f64);
            let b = lambda * 2f64.powf(m as f64 + 0.5 * (half + 1) as f64);
            let (xs, ws) = gauss_legendre(NODES_PER_PANEL, a, b);
            for (r, w) in xs.into_iter().zip(ws) {
                let omega = dir * r + sd.threshold();
                let kappa = sd.density_continued(omega).expect("analytic family");
                nodes.push((omega - omega_in, kappa * dir * w));
            }
        }
    }
    let mut k = complex_exponential_sums(&nodes, step, count);
    if let Some(k0) = k.first_mut() {
        *k0 = Complex64::new(total, 0.0);
    }
    k
}

/// Quadrature nodes `(ω − ω_in, w·κ(ω))` on `[lo, edge]`, graded
/// geometrically toward the threshold and split at table nodes.
fn panel_nodes(sd: &SpectralDensity, omega_in: f64, lo: f64, edge: f64, max_width: f64) -> Vec<(f64, f64)> {
    let lambda = sd.cutoff();
    let mut cuts: Vec<f64> = (1..=40)
        .map(|m| lo + lambda * 0.5f64.powi(m))
        .chain(sd.kinks())
        .chain([lo, edge])
        .filter(|&w| w >= lo && w <= edge)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut nodes = Vec::new();
    for pair in cuts.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let pieces = ((b - a) / max_width).ceil().max(1.0) as usize;
        let width = (b - a) / pieces as f64;
        for p in 0..pieces {
            let pa = a + width * p as f64;
            let pb = if p + 1 == pieces { b } else { pa + width };
            let (xs, ws) = gauss_legendre(NODES_PER_PANEL, pa, pb);
            for (x, w) in xs.into_iter().zip(ws) {
                let c = w * sd.density(x);
                if c != 0.0 {
                    nodes.push((x - omega_in, c));
                }
            }
        }
    }
    nodes
}

#[allow(clippy::too_many_arguments)]
fn body_matches_adaptive(
    sd: &SpectralDensity,
    omega_in: f64,
    lo: f64,
    edge: f64,
    k: &[Complex64],
    step: f64,
    integrator: &Integrator,
    tol: f64,
) -> Result<bool> {
    let last = k.len() - 1;
    let mut probes: Vec<usize> = (0..=8).map(|q| q * last / 8).collect();
    probes.dedup();
    let integrator = integrator.abs_tol(0.1 * tol);
    for j in probes {
        let s = j as f64 * step;
        let mut pts = vec![lo];
        if s > 0.0 {
            let period = 2.0 * PI / s;
            let mut w = lo + period;
            while w < edge {
                pts.push(w);
                w += period;
            }
        }
        pts.extend(sd.kinks());
        pts.push(edge);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let reference = integrator.integrate(|w| Complex64::from_polar(sd.density(w), -(w - omega_in) * s), &pts)?;
        if (reference.value - k[j]).norm() > tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Trapezoidal product integration of `Ȧ = −∫₀ᵗ k(s) A(t − s) ds` for
/// `steps` steps of size `h`; `k` holds `k(j h)` for `j = 0..=steps`.
///
/// With `F_m = h[½k₀A_m + Σ_{j=1}^{m−1} k_j A_{m−j} + ½k_m A₀]` the update is
/// `A_m = A_{m−1} − (h/2)(F_{m−1} + F_m)`, solved for `A_m`.
fn trapezoid_march(k: &[Complex64], h: f64, steps: usize) -> Vec<Complex64> {
    let one = Complex64::new(1.0, 0.0);
    let mut a = vec![one; steps + 1];
    let k0 = k[0];
    let floor = 1e-16 * k0.norm();
    let reach = match k
        .iter()
        .rposition(|v| v.norm() >= floor && *v != Complex64::new(0.0, 0.0))
    {
        Some(r) => r,
        None => return a,
    };
    let denom = one + k0 * (0.25 * h * h);
    let kr: Vec<f64> = k[..=reach.min(steps)].iter().map(|v| v.re).collect();
    let ki: Vec<f64> = k[..=reach.min(steps)].iter().map(|v| v.im).collect();
    // history stored back to front so that a[m − j], j = 1.., is contiguous
    let mut rr = vec![0.0; steps + 1];
    let mut ri = vec![0.0; steps + 1];
    rr[steps] = 1.0;
    let mut f_prev = Complex64::new(0.0, 0.0);
    for m in 1..=steps {
        let upper = (m - 1).min(reach);
        let start = steps + 1 - m;
        let mut sum = history_sum(
            &kr[1..=upper],
            &ki[1..=upper],
            &rr[start..start + upper],
            &ri[start..start + upper],
        );
        if m <= reach {
            sum += k[m] * (0.5 * a[0]);
        }
        let s_m = sum * h;
        let am = (a[m - 1] - (f_prev + s_m) * (0.5 * h)) / denom;
        a[m] = am;
        rr[steps - m] = am.re;
        ri[steps - m] = am.im;
        f_prev = k0 * am * (0.5 * h) + s_m;
    }
    a
}

/// `Σ k_j a_j` over split real/imaginary slices, with independent partial
/// sums so the loop vectorizes.
fn history_sum(kr: &[f64], ki: &[f64], ar: &[f64], ai: &[f64]) -> Complex64 {
    const W: usize = 8;
    let mut re = [0.0f64; W];
    let mut im = [0.0f64; W];
    let n = kr.len() / W * W;
    for c in (0..n).step_by(W) {
        let (kr, ki, ar, ai) = (&kr[c..c + W], &ki[c..c + W], &ar[c..c + W], &ai[c..c + W]);
        for l in 0..W {
            re[l] += kr[l] * ar[l] - ki[l] * ai[l];
            im[l] += kr[l] * ai[l] + ki[l] * ar[l];
        }
    }
    let mut sum = Complex64::new(re.iter().sum(), im.iter().sum());
    for j in n..kr.len() {
        sum += Complex64::new(kr[j], ki[j]) * Complex64::new(ar[j], ai[j]);
    }
    sum
}

/// Asymptotic `P(t) ≃ Z e^{−γt}` fitted on a window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailFit {
    pub gamma: f64,
    pub z_factor: f64,
    pub fit_window: (f64, f64),
    /// RMS deviation of `log P` from the fitted line.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Earliest allowed window start, normally `5/Λ`.
    pub min_start: f64,
    pub residual_max: f64,
}

impl FitOptions {
    pub fn for_cutoff(cutoff: f64) -> Self {
        Self {
            min_start: 5.0 / cutoff,
            residual_max: 1e-2,
        }
    }
}

/// `[5/Λ, min(3/γ, t_max)]`.
pub fn default_window(cutoff: f64, gamma: f64, t_max: f64) -> (f64, f64) {
    (5.0 / cutoff, (3.0 / gamma).min(t_max))
}

/// Least-squares line through `log P(t)` on `window`.
pub fn fit_exponential_tail(trace: &SurvivalTrace, window: (f64, f64), options: &FitOptions) -> Result<TailFit> {
    let (lo, hi) = window;
    if lo < options.min_start * (1.0 - 1e-12) {
        return Err(Error::WindowTooEarly {
            start: lo,
            min: options.min_start,
        });
    }
    if !(hi > lo) {
        return Err(Error::TraceTooShort(format!("empty fit window [{lo}, {hi}]")));
    }
    if hi > trace.t_max() * (1.0 + 1e-12) {
        return Err(Error::TraceTooShort(format!(
            "window ends at {hi} but the trace stops at {}",
            trace.t_max()
        )));
    }
    let mut pts = Vec::new();
    for (&t, &p) in trace.times.iter().zip(&trace.probabilities) {
        if t >= lo * (1.0 - 1e-12) && t <= hi * (1.0 + 1e-12) {
            if !(p > 1e-12) {
                return Err(Error::TraceTooShort(format!("P({t}) = {p:e} is below the noise floor")));
            }
            pts.push((t, p.ln()));
        }
    }
    if pts.len() < 3 {
        return Err(Error::TraceTooShort(format!(
            "only {} samples inside [{lo}, {hi}]",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(t, y) in &pts {
        sxx += (t - tm) * (t - tm);
        sxy += (t - tm) * (y - ym);
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * tm;
    let residual = (pts
        .iter()
        .map(|&(t, y)| (y - intercept - slope * t).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    if !(residual <= options.residual_max) {
        return Err(Error::NonExponential {
            residual,
            max: options.residual_max,
        });
    }
    Ok(TailFit {
        gamma: -slope,
        z_factor: intercept.exp(),
        fit_window: (lo, hi),
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{absorptive_survival, dense_evolve, AbsorptiveTwoLevel};
    use crate::model::{discretize, golden_rule_rate};
    use proptest::prelude::*;

    fn exp_spec(g2: f64, n: f64, omega_in: f64, mode: MeasurementMode) -> KernelSpec {
        let sd = SpectralDensity::multipole_exp(g2, 0.0, 1.0, n).unwrap();
        KernelSpec::continuum(sd, omega_in, mode).unwrap()
    }

    #[test]
    fn zero_coupling_stays_put() {
        let spec = exp_spec(0.0, 1.0, 1.0, MeasurementMode::Plain);
        let grid = TimeGrid::new(5.0, 100).unwrap();
        let sol = solve_memory_kernel(&spec, &grid).unwrap();
        assert!(sol.trace.amplitudes.iter().all(|a| *a == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn continuum_kernel_matches_closed_form() {
        // ∫ (g²/Λ) xⁿ e^{−x} e^{−i(Λx − ω_in)s} Λ dx = g² n! e^{iω_in s} / (1 + iΛs)^{n+1}
        for (n, fact) in [(1.0, 1.0), (2.0, 2.0), (3.0, 6.0)] {
            let spec = exp_spec(0.3, n, 1.7, MeasurementMode::Plain);
            let step = 0.05;
            let k = kernel_samples(&spec, step, 2001).unwrap();
            for (j, v) in k.iter().enumerate() {
                let s = j as f64 * step;
                let exact = Complex64::from_polar(0.3 * fact, 1.7 * s) / Complex64::new(1.0, s).powf(n + 1.0);
                assert!((v - exact).norm() < 1e-10, "n={n} s={s}: {v} vs {exact}");
            }
        }
    }

    #[test]
    fn power_law_kernel_matches_direct_quadrature() {
        let sd = SpectralDensity::multipole_powerlaw(0.2, 0.0, 1.0, 1.0, 1.5).unwrap();
        let spec = KernelSpec::continuum(sd.clone(), 1.0, MeasurementMode::Plain).unwrap();
        let step = 0.02;
        let k = kernel_samples(&spec, step, 501).unwrap();
        let integ = Integrator::with_rel_tol(1e-12).abs_tol(1e-13);
        for j in [0usize, 1, 7, 50, 200, 500] {
            let s = j as f64 * step;
            let direct = if s == 0.0 {
                Complex64::new(sd.total_weight(&integ).unwrap(), 0.0)
            } else {
                // alternating-series style: sum exact periods out to a far edge
                let period = 2.0 * PI / s;
                let far = 4.0e4;
                let mut pts = vec![0.0];
                let mut w = period;
                while w < far {
                    pts.push(w);
                    w += period;
                }
                let body = integ
                    .integrate(|w| Complex64::from_polar(sd.density(w), -(w - 1.0) * s), &pts)
                    .unwrap()
                    .value;
                let last = *pts.last().unwrap();
                let is = Complex64::new(0.0, s);
                body + Complex64::from_polar(sd.density(last), -(last - 1.0) * s) / is
            };
            assert!((k[j] - direct).norm() < 1e-7 * 0.2, "s={s}: {} vs {}", k[j], direct);
        }
    }

    #[test]
    fn flat_two_level_matches_closed_form() {
        for v in [0.4, 2.0, 10.0] {
            let spec = KernelSpec::flat_two_level(1.0, 4.0 * v).unwrap();
            let grid = TimeGrid::covering(10.0, spec.max_step()).unwrap();
            let sol = solve_memory_kernel(&spec, &grid).unwrap();
            let exact = absorptive_survival(&AbsorptiveTwoLevel::new(1.0, v).unwrap(), &grid);
            assert!(sol.trace.max_amplitude_diff(&exact) < 1e-6, "V={v}");
        }
    }

    #[test]
    fn discrete_bath_matches_dense_evolution() {
        let sd = SpectralDensity::multipole_exp(0.1, 0.0, 1.0, 1.0).unwrap();
        let ds = discretize(&sd, 1.0, 60, 12.0).unwrap();
        let spec = KernelSpec::discrete(ds.clone(), MeasurementMode::Plain).unwrap();
        let grid = TimeGrid::covering(10.0, spec.max_step()).unwrap();
        let sol = solve_memory_kernel(&spec, &grid).unwrap();
        let dense = dense_evolve(&ds.hamiltonian(1.0), 0, &grid).unwrap();
        assert!(sol.trace.max_amplitude_diff(&dense) < 1e-6);
    }

    #[test]
    fn flat_continuum_decays_exponentially() {
        let spec = KernelSpec::continuum(SpectralDensity::flat(0.3).unwrap(), 0.0, MeasurementMode::Plain).unwrap();
        let sol = solve_memory_kernel(&spec, &TimeGrid::new(10.0, 100).unwrap()).unwrap();
        for (t, p) in sol.trace.times.iter().zip(&sol.trace.probabilities) {
            assert!((p - (-0.3 * t).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_coarse_steps() {
        let spec = exp_spec(0.1, 1.0, 1.0, MeasurementMode::Damped { gamma: 50.0 });
        let grid = TimeGrid::new(10.0, 100).unwrap();
        assert!(matches!(
            solve_memory_kernel(&spec, &grid),
            Err(Error::StepTooCoarse { .. })
        ));
    }

    #[test]
    fn second_order_convergence() {
        let spec = exp_spec(0.2, 1.0, 1.5, MeasurementMode::Plain);
        let plain = SolverOptions {
            extrapolate: false,
            ..SolverOptions::default()
        };
        let base = TimeGrid::new(8.0, 200).unwrap();
        let reference = solve_memory_kernel(&spec, &base.refined(4)).unwrap().trace.decimated(4);
        let coarse = solve_memory_kernel_with(&spec, &base, &plain).unwrap().trace;
        let half = solve_memory_kernel_with(&spec, &base.refined(2), &plain)
            .unwrap()
            .trace
            .decimated(2);
        let ratio = coarse.max_amplitude_diff(&reference) / half.max_amplitude_diff(&reference);
        assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn rabi_kernel_is_even_in_k() {
        let grid = TimeGrid::new(4.0, 200).unwrap();
        let plus = solve_memory_kernel(&exp_spec(0.2, 1.0, 1.0, MeasurementMode::Rabi { k: 0.7 }), &grid).unwrap();
        let minus = solve_memory_kernel(&exp_spec(0.2, 1.0, 1.0, MeasurementMode::Rabi { k: -0.7 }), &grid).unwrap();
        assert_eq!(plus, minus);
    }

    #[test]
    fn strong_damping_suppresses_decay() {
        let mut last = f64::INFINITY;
        for gamma in [10.0, 15.0, 20.0, 30.0] {
            let spec = exp_spec(0.1, 1.0, 1.0, MeasurementMode::Damped { gamma });
            let grid = TimeGrid::covering(30.0, spec.max_step()).unwrap();
            let sol = solve_memory_kernel(&spec, &grid).unwrap();
            let fit = fit_exponential_tail(&sol.trace, (5.0, 30.0), &FitOptions::for_cutoff(1.0)).unwrap();
            assert!(fit.gamma < last, "Γ={gamma}: {} !< {last}", fit.gamma);
            last = fit.gamma;
        }
    }

    #[test]
    fn weak_coupling_rate_is_golden_rule() {
        let sd = SpectralDensity::multipole_exp(0.004, 0.0, 1.0, 1.0).unwrap();
        let gamma = golden_rule_rate(&sd, 2.0).unwrap();
        let spec = KernelSpec::continuum(sd, 2.0, MeasurementMode::Plain).unwrap();
        let grid = TimeGrid::covering(150.0, spec.max_step()).unwrap();
        let sol = solve_memory_kernel(&spec, &grid).unwrap();
        let fit = fit_exponential_tail(&sol.trace, (10.0, 150.0), &FitOptions::for_cutoff(1.0)).unwrap();
        assert!((fit.gamma / gamma - 1.0).abs() < 0.02, "{} vs {gamma}", fit.gamma);
    }

    #[test]
    fn strong_absorption_tail() {
        let (omega, v) = (1.0, 20.0);
        let spec = KernelSpec::flat_two_level(omega, 4.0 * v).unwrap();
        let grid = TimeGrid::covering(60.0, spec.max_step()).unwrap();
        let sol = solve_memory_kernel(&spec, &grid).unwrap();
        let fit = fit_exponential_tail(&sol.trace, (5.0, 60.0), &FitOptions::for_cutoff(4.0 * v)).unwrap();
        let m = AbsorptiveTwoLevel::new(omega, v).unwrap();
        assert!((fit.gamma / m.strong_absorption_rate() - 1.0).abs() < 1e-3);
        assert!((fit.z_factor - m.strong_absorption_intercept()).abs() < 1e-5);
    }

    #[test]
    fn fit_recovers_exponential() {
        let grid = TimeGrid::new(40.0, 400).unwrap();
        let tr = SurvivalTrace::from_fn(&grid, |t| Complex64::new((0.8f64).sqrt() * (-0.15 * t).exp(), 0.0));
        let fit = fit_exponential_tail(&tr, (5.0, 40.0), &FitOptions::for_cutoff(1.0)).unwrap();
        assert!((fit.gamma - 0.3).abs() < 1e-10);
        assert!((fit.z_factor - 0.8).abs() < 1e-10);
        assert!(matches!(
            fit_exponential_tail(&tr, (1.0, 40.0), &FitOptions::for_cutoff(1.0)),
            Err(Error::WindowTooEarly { .. })
        ));
        assert!(matches!(
            fit_exponential_tail(&tr, (5.0, 50.0), &FitOptions::for_cutoff(1.0)),
            Err(Error::TraceTooShort(_))
        ));
        let wavy = SurvivalTrace::from_fn(&grid, |t| Complex64::new(0.6 + 0.4 * t.cos(), 0.0));
        assert!(matches!(
            fit_exponential_tail(&wavy, (5.0, 40.0), &FitOptions::for_cutoff(1.0)),
            Err(Error::NonExponential { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn short_time_law(g2 in 0.01f64..0.5, n in 0.5f64..3.0, omega_in in 0.2f64..4.0) {
            let sd = SpectralDensity::multipole_exp(g2, 0.0, 1.0, n).unwrap();
            let integ = Integrator::default();
            let mu0 = sd.total_weight(&integ).unwrap();
            let mu2 = sd.moment(2, omega_in, &integ).unwrap();
            let c = 2.0 * (mu0 * mu0 / 3.0 + mu2 / 12.0);
            let spec = KernelSpec::continuum(sd, omega_in, MeasurementMode::Plain).unwrap();
            let h = spec.max_step();
            let grid = TimeGrid::new(10.0 * h, 10).unwrap();
            let sol = solve_memory_kernel(&spec, &grid).unwrap();
            for (t, p) in sol.trace.times.iter().zip(&sol.trace.probabilities) {
                prop_assert!((p - (1.0 - mu0 * t * t)).abs() <= c * t.powi(4) + 1e-13);
                prop_assert!(*p <= 1.0 + 1e-12);
            }
        }
    }
}
