//! Adaptive Gauss-Kronrod integration with user breakpoints and a mapped
//! semi-infinite tail, plus Gauss-Legendre rules for discretizations.
//!
//! The integrator keeps a global error budget over all panels (QAGP style):
//! the panel with the largest error estimate is bisected until the summed
//! estimate falls under `max(abs_tol, rel_tol * |I|)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Values the integrator can accumulate.
pub trait QuadValue: Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn magnitude(self) -> f64;
}

impl QuadValue for f64 {
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

// 21-point Kronrod extension of the 10-point Gauss rule on [-1, 1].
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_600_525_452_176,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the odd-indexed Kronrod nodes XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy)]
struct Panel<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
    abs_mass: f64,
}

impl<T> PartialEq for Panel<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T> Eq for Panel<T> {}
impl<T> PartialOrd for Panel<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Panel<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod21<T: QuadValue, F: Fn(f64) -> T>(f: &F, a: f64, b: f64) -> Panel<T> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[10];
    let mut gauss = T::default();
    let mut abs_mass = fc.magnitude() * WGK[10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        let pair = f1 + f2;
        kronrod = kronrod + pair * WGK[j];
        abs_mass += (f1.magnitude() + f2.magnitude()) * WGK[j];
        if j % 2 == 1 {
            gauss = gauss + pair * WG[j / 2];
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).magnitude();
    Panel {
        a,
        b,
        value,
        error,
        abs_mass: abs_mass * half.abs(),
    }
}

/// Tolerances and effort limits for [`Integrator::integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integrator {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Maximum number of bisections on top of the initial panels.
    pub max_subdivisions: usize,
}

impl Default for Integrator {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-300,
            max_subdivisions: 4000,
        }
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Estimate<T> {
    pub value: T,
    pub error: f64,
    pub intervals: usize,
}

impl Integrator {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }

    pub fn abs_tol(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    /// Integrates `f` over the partition given by `points` (sorted, at least
    /// two entries). Each consecutive pair is an initial panel.
    pub fn integrate<T, F>(&self, f: F, points: &[f64]) -> Result<Estimate<T>>
    where
        T: QuadValue,
        F: Fn(f64) -> T,
    {
        if points.len() < 2 {
            return Err(Error::InvalidRange("integration needs at least two points".into()));
        }
        let mut heap = BinaryHeap::with_capacity(points.len() + 64);
        for w in points.windows(2) {
            if !(w[1] >= w[0]) {
                return Err(Error::InvalidRange(format!(
                    "breakpoints not increasing: {} then {}",
                    w[0], w[1]
                )));
            }
            if w[1] > w[0] {
                heap.push(kronrod21(&f, w[0], w[1]));
            }
        }
        let mut splits = 0usize;
        let mut frozen: Vec<Panel<T>> = Vec::new();
        let (mut value, mut error, mut mass) = totals(heap.iter());
        loop {
            let target = self
                .abs_tol
                .max(self.rel_tol * value.magnitude())
                .max(50.0 * f64::EPSILON * mass);
            if error <= target {
                let (value, error, _) = totals(heap.iter().chain(frozen.iter()));
                return Ok(Estimate {
                    value,
                    error,
                    intervals: heap.len() + frozen.len(),
                });
            }
            let worst = match heap.pop() {
                Some(p) => p,
                None => {
                    return Err(Error::QuadratureFailure {
                        value: value.magnitude(),
                        error,
                        intervals: frozen.len(),
                    })
                }
            };
            let mid = 0.5 * (worst.a + worst.b);
            let width_floor = 1e-14 * worst.a.abs().max(worst.b.abs()).max(f64::MIN_POSITIVE);
            if worst.b - worst.a <= width_floor || mid <= worst.a || mid >= worst.b {
                frozen.push(worst);
                // a frozen panel can no longer improve; stop if nothing else can
                if heap.is_empty() {
                    return Err(Error::QuadratureFailure {
                        value: value.magnitude(),
                        error,
                        intervals: frozen.len(),
                    });
                }
                continue;
            }
            if splits >= self.max_subdivisions {
                heap.push(worst);
                return Err(Error::QuadratureFailure {
                    value: value.magnitude(),
                    error,
                    intervals: heap.len() + frozen.len(),
                });
            }
            splits += 1;
            let left = kronrod21(&f, worst.a, mid);
            let right = kronrod21(&f, mid, worst.b);
            value = value - worst.value + left.value + right.value;
            error += left.error + right.error - worst.error;
            mass += left.abs_mass + right.abs_mass - worst.abs_mass;
            heap.push(left);
            heap.push(right);
        }
    }

    /// Integrates `f` over `[start, ∞)` through the map
    /// `x = start + scale·(e^y − 1)`, `y = u/(1 − u)`, `u ∈ [0, 1)`.
    ///
    /// The exponential stage turns algebraic tails `x^{−p}` into decaying
    /// exponentials in `y`, so slowly decaying integrands stay smooth in `u`.
    ///
    /// `breakpoints` are finite abscissae (> start) where the integrand has
    /// kinks or zeros; they seed the initial partition in `u`.
    pub fn integrate_to_infinity<T, F>(&self, f: F, start: f64, scale: f64, breakpoints: &[f64]) -> Result<Estimate<T>>
    where
        T: QuadValue,
        F: Fn(f64) -> T,
    {
        if !(scale > 0.0) || !start.is_finite() {
            return Err(Error::InvalidRange(format!(
                "semi-infinite map needs finite start and positive scale (start {start}, scale {scale})"
            )));
        }
        let mut us = Vec::with_capacity(breakpoints.len() + 2);
        us.push(0.0);
        for &x in breakpoints {
            if x > start && x.is_finite() {
                let y = ((x - start) / scale).ln_1p();
                us.push(y / (1.0 + y));
            }
        }
        us.push(1.0);
        us.sort_by(f64::total_cmp);
        us.dedup();
        let mapped = |u: f64| {
            let one_minus = 1.0 - u;
            let y = u / one_minus;
            let grow = y.exp_m1();
            let x = start + scale * grow;
            let jac = scale * (grow + 1.0) / (one_minus * one_minus);
            if !jac.is_finite() || !x.is_finite() {
                return T::default();
            }
            let v = f(x);
            // far out, 0·∞ from an overflowing polynomial factor means 0
            if v.magnitude() == 0.0 || (y > 30.0 && !v.magnitude().is_finite()) {
                T::default()
            } else {
                v * jac
            }
        };
        self.integrate(mapped, &us)
    }
}

fn totals<'a, T: QuadValue + 'a>(panels: impl Iterator<Item = &'a Panel<T>>) -> (T, f64, f64) {
    let mut value = T::default();
    let mut error = 0.0;
    let mut mass = 0.0;
    for p in panels {
        value = value + p.value;
        error += p.error;
        mass += p.abs_mass;
    }
    (value, error, mass)
}

/// Gauss-Legendre nodes and weights on `[a, b]`, nodes increasing.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = 0.5 * (b - a);
    let center = 0.5 * (a + b);
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess for the i-th largest root.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // roots come out descending; store ascending and mirrored
        nodes[n - 1 - i] = center + half * x;
        weights[n - 1 - i] = half * w;
        nodes[i] = center - half * x;
        weights[i] = half * w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
