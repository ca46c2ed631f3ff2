//! Closed-form few-level dynamics and a dense-matrix evolution oracle.
//!
//! * [`AbsorptiveTwoLevel`]: Rabi oscillation `|+⟩ ↔ |−⟩` with `|−⟩` absorbed
//!   at rate `2V` (equivalently, coupled to a flat continuum of width `Γ = 4V`).
//! * [`RabiProbeThreeLevel`]: `|+⟩ ↔ |−⟩ ↔ |M⟩`, a Hermitian continuous probe.
//! * [`dense_evolve`]: `⟨e₀|e^{−iHt}|e₀⟩` for an arbitrary small matrix.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::trace::{SurvivalTrace, TimeGrid};

/// Largest matrix [`dense_evolve`] accepts.
pub const MAX_DENSE_DIM: usize = 2000;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Two-level Rabi problem with absorption on the lower level:
/// `H = [[0, Ω], [Ω, −2iV]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsorptiveTwoLevel {
    rabi_omega: f64,
    absorption_v: f64,
}

impl AbsorptiveTwoLevel {
    pub fn new(rabi_omega: f64, absorption_v: f64) -> Result<Self> {
        if !(rabi_omega > 0.0) || !rabi_omega.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "rabi_omega must be positive, got {rabi_omega}"
            )));
        }
        if !(absorption_v >= 0.0) || !absorption_v.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "absorption_v must be non-negative, got {absorption_v}"
            )));
        }
        Ok(Self {
            rabi_omega,
            absorption_v,
        })
    }

    /// The same dynamics parametrized by the continuum width `Γ = 4V`.
    pub fn from_continuum_width(rabi_omega: f64, gamma: f64) -> Result<Self> {
        Self::new(rabi_omega, gamma / 4.0)
    }

    pub fn rabi_omega(&self) -> f64 {
        self.rabi_omega
    }
    pub fn absorption_v(&self) -> f64 {
        self.absorption_v
    }
    pub fn continuum_width(&self) -> f64 {
        4.0 * self.absorption_v
    }

    /// Large-`V` decay rate `Ω²/V`.
    pub fn strong_absorption_rate(&self) -> f64 {
        self.rabi_omega * self.rabi_omega / self.absorption_v
    }

    /// Large-`V` intercept of `P(t)`, `1 + Ω²/(2V²)`.
    pub fn strong_absorption_intercept(&self) -> f64 {
        1.0 + self.rabi_omega * self.rabi_omega / (2.0 * self.absorption_v * self.absorption_v)
    }

    pub fn hamiltonian(&self) -> DMatrix<Complex64> {
        let o = Complex64::new(self.rabi_omega, 0.0);
        DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(0.0, 0.0),
                o,
                o,
                Complex64::new(0.0, -2.0 * self.absorption_v),
            ],
        )
    }

    /// `e^{−Vt} cosh(ht)` and `e^{−Vt} sinh(ht)/h` with `h² = V² − Ω²`,
    /// continued through `h = 0` and to imaginary `h`.
    fn damped_pair(&self, t: f64) -> (f64, f64) {
        let v = self.absorption_v;
        let d = v * v - self.rabi_omega * self.rabi_omega;
        let h = d.abs().sqrt();
        let x = h * t;
        if d > 0.0 && x > 0.5 {
            let grow = ((h - v) * t).exp();
            let fall = (-(h + v) * t).exp();
            return (0.5 * (grow + fall), 0.5 * (grow - fall) / h);
        }
        let decay = (-v * t).exp();
        let (c, s_over) = if d > 0.0 {
            (x.cosh(), t * shc(x))
        } else if d < 0.0 {
            (x.cos(), t * sinc(x))
        } else {
            (1.0, t)
        };
        (decay * c, decay * s_over)
    }

    /// Survival amplitude of `|+⟩`:
    /// `A(t) = e^{−Vt}[cosh(ht) + (V/h) sinh(ht)]`.
    pub fn amplitude(&self, t: f64) -> Complex64 {
        let (c, s) = self.damped_pair(t);
        Complex64::new(c + self.absorption_v * s, 0.0)
    }

    /// Full state `(A(t), y(t))` starting from `|+⟩`.
    pub fn state(&self, t: f64) -> (Complex64, Complex64) {
        let (c, s) = self.damped_pair(t);
        (
            Complex64::new(c + self.absorption_v * s, 0.0),
            Complex64::new(0.0, -self.rabi_omega * s),
        )
    }
}

fn shc(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let x2 = x * x;
        1.0 + x2 / 6.0 * (1.0 + x2 / 20.0)
    } else {
        x.sinh() / x
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let x2 = x * x;
        1.0 - x2 / 6.0 * (1.0 - x2 / 20.0)
    } else {
        x.sin() / x
    }
}

pub fn absorptive_survival(m: &AbsorptiveTwoLevel, grid: &TimeGrid) -> SurvivalTrace {
    SurvivalTrace::from_fn(grid, |t| m.amplitude(t))
}

/// Three-level Hermitian probe `H = Ω(|+⟩⟨−| + h.c.) + K(|−⟩⟨M| + h.c.)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RabiProbeThreeLevel {
    rabi_omega: f64,
    probe_k: f64,
}

impl RabiProbeThreeLevel {
    pub fn new(rabi_omega: f64, probe_k: f64) -> Result<Self> {
        if !(rabi_omega > 0.0) || !rabi_omega.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "rabi_omega must be positive, got {rabi_omega}"
            )));
        }
        if !(probe_k >= 0.0) || !probe_k.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "probe_k must be non-negative, got {probe_k}"
            )));
        }
        Ok(Self { rabi_omega, probe_k })
    }

    pub fn rabi_omega(&self) -> f64 {
        self.rabi_omega
    }
    pub fn probe_k(&self) -> f64 {
        self.probe_k
    }

    fn frequency(&self) -> f64 {
        self.rabi_omega.hypot(self.probe_k)
    }

    /// `τ_Z = 1/Ω`.
    pub fn zeno_time(&self) -> f64 {
        1.0 / self.rabi_omega
    }

    /// `T_P = 2π/√(K² + Ω²)`.
    pub fn poincare_period(&self) -> f64 {
        2.0 * PI / self.frequency()
    }

    /// `min_t P(t) = ((K² − Ω²)/(K² + Ω²))²`.
    pub fn min_probability(&self) -> f64 {
        let (k2, o2) = (self.probe_k.powi(2), self.rabi_omega.powi(2));
        ((k2 - o2) / (k2 + o2)).powi(2)
    }

    pub fn amplitude(&self, t: f64) -> Complex64 {
        let (k2, o2) = (self.probe_k.powi(2), self.rabi_omega.powi(2));
        Complex64::new((k2 + o2 * (self.frequency() * t).cos()) / (k2 + o2), 0.0)
    }

    pub fn hamiltonian(&self) -> DMatrix<Complex64> {
        let o = Complex64::new(self.rabi_omega, 0.0);
        let k = Complex64::new(self.probe_k, 0.0);
        let z = Complex64::new(0.0, 0.0);
        DMatrix::from_row_slice(3, 3, &[z, o, z, o, z, k, z, k, z])
    }
}

/// Output of [`rabi_probe_survival`].
#[derive(Debug, Clone, PartialEq)]
pub struct RabiProbeTrace {
    pub trace: SurvivalTrace,
    pub zeno_time: f64,
    pub poincare_period: f64,
}

pub fn rabi_probe_survival(m: &RabiProbeThreeLevel, grid: &TimeGrid) -> RabiProbeTrace {
    RabiProbeTrace {
        trace: SurvivalTrace::from_fn(grid, |t| m.amplitude(t)),
        zeno_time: m.zeno_time(),
        poincare_period: m.poincare_period(),
    }
}

/// Number of pulsed measurements in time `t` equivalent to a probe of
/// strength `K`, from `K ≈ √(2N)/t`.
pub fn equivalent_pulse_count(probe_k: f64, t: f64) -> f64 {
    0.5 * (probe_k * t).powi(2)
}

fn is_hermitian(h: &DMatrix<Complex64>) -> bool {
    let scale = h.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let n = h.nrows();
    for i in 0..n {
        for j in i..n {
            if (h[(i, j)] - h[(j, i)].conj()).norm() > 1e-13 * scale {
                return false;
            }
        }
    }
    true
}

/// `⟨e_k| e^{−iHt} |e_k⟩` on the grid, `k = initial_index`.
///
/// Hermitian matrices use an eigendecomposition. Anything else goes through
/// scaling-and-squaring; the number of squarings is raised until two
/// consecutive traces agree to `1e-9` in max norm.
pub fn dense_evolve(h: &DMatrix<Complex64>, initial_index: usize, grid: &TimeGrid) -> Result<SurvivalTrace> {
    let n = h.nrows();
    if n != h.ncols() {
        return Err(Error::InvalidParameter(format!(
            "Hamiltonian must be square, got {}x{}",
            n,
            h.ncols()
        )));
    }
    if n > MAX_DENSE_DIM {
        return Err(Error::DimensionTooLarge(n));
    }
    if initial_index >= n {
        return Err(Error::InvalidParameter(format!(
            "initial index {initial_index} outside dimension {n}"
        )));
    }
    if is_hermitian(h) {
        let eig = nalgebra::SymmetricEigen::new(h.clone());
        let weights: Vec<f64> = (0..n)
            .map(|k| eig.eigenvectors[(initial_index, k)].norm_sqr())
            .collect();
        return Ok(SurvivalTrace::from_fn(grid, |t| {
            eig.eigenvalues
                .iter()
                .zip(&weights)
                .map(|(&lam, &w)| w * (-I * lam * t).exp())
                .sum()
        }));
    }

    let generator = h.map(|z| -I * z * grid.step());
    let mut extra = 0u32;
    let mut previous = propagate(&expm(&generator, extra), initial_index, grid);
    let mut change = f64::INFINITY;
    while extra < 12 {
        extra += 2;
        let next = propagate(&expm(&generator, extra), initial_index, grid);
        change = next.max_amplitude_diff(&previous);
        previous = next;
        if change <= 1e-9 {
            return Ok(previous);
        }
    }
    Err(Error::NonConvergence(change))
}

fn propagate(step: &DMatrix<Complex64>, index: usize, grid: &TimeGrid) -> SurvivalTrace {
    let n = step.nrows();
    let mut psi = nalgebra::DVector::<Complex64>::zeros(n);
    psi[index] = Complex64::new(1.0, 0.0);
    let mut amps = Vec::with_capacity(grid.len());
    amps.push(psi[index]);
    for _ in 0..grid.intervals() {
        psi = step * &psi;
        amps.push(psi[index]);
    }
    SurvivalTrace::from_amplitudes(grid, amps)
}

// Padé(13) numerator coefficients for the scaling-and-squaring exponential.
const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// Matrix exponential by Padé(13) scaling and squaring, with
/// `extra_squarings` beyond the norm-based choice.
pub fn expm(a: &DMatrix<Complex64>, extra_squarings: u32) -> DMatrix<Complex64> {
    let n = a.nrows();
    let norm1 = (0..n)
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    const THETA13: f64 = 5.371_920_351_148_152;
    let base = if norm1 > THETA13 {
        (norm1 / THETA13).log2().ceil() as u32
    } else {
        0
    };
    let s = base + extra_squarings;
    let scaled = a * Complex64::new(0.5f64.powi(s as i32), 0.0);

    let id = DMatrix::<Complex64>::identity(n, n);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let c = |k: usize| Complex64::new(PADE13[k], 0.0);
    let u_inner = &a6 * (&a6 * c(13) + &a4 * c(11) + &a2 * c(9)) + &a6 * c(7) + &a4 * c(5) + &a2 * c(3) + &id * c(1);
    let u = &scaled * u_inner;
    let v = &a6 * (&a6 * c(12) + &a4 * c(10) + &a2 * c(8)) + &a6 * c(6) + &a4 * c(4) + &a2 * c(2) + &id * c(0);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).unwrap_or_else(|| DMatrix::identity(n, n));
    for _ in 0..s {
        r = &r * &r;
    }
    r
}
