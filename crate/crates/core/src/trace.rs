//! Uniform time grids and survival traces `A(t)`, `P(t) = |A(t)|²`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `t_i = i·step`, `i = 0..=intervals`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    step: f64,
    intervals: usize,
}

impl TimeGrid {
    pub fn new(t_max: f64, intervals: usize) -> Result<Self> {
        if !(t_max > 0.0) || !t_max.is_finite() {
            return Err(Error::InvalidGrid(format!("t_max must be positive, got {t_max}")));
        }
        if intervals < 1 {
            return Err(Error::InvalidGrid("grid needs at least one interval".into()));
        }
        Ok(Self {
            step: t_max / intervals as f64,
            intervals,
        })
    }

    /// Grid reaching at least `t_max` with spacing at most `max_step`.
    pub fn covering(t_max: f64, max_step: f64) -> Result<Self> {
        if !(max_step > 0.0) {
            return Err(Error::InvalidGrid(format!("step must be positive, got {max_step}")));
        }
        let intervals = (t_max / max_step).ceil().max(1.0) as usize;
        Self::new(t_max, intervals)
    }

    pub fn step(&self) -> f64 {
        self.step
    }
    pub fn intervals(&self) -> usize {
        self.intervals
    }
    pub fn len(&self) -> usize {
        self.intervals + 1
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn t_max(&self) -> f64 {
        self.step * self.intervals as f64
    }
    pub fn time(&self, i: usize) -> f64 {
        self.step * i as f64
    }
    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    /// Same span, `factor` times finer.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            step: self.step / factor as f64,
            intervals: self.intervals * factor,
        }
    }
}

/// Survival amplitude and probability sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalTrace {
    pub times: Vec<f64>,
    pub amplitudes: Vec<Complex64>,
    pub probabilities: Vec<f64>,
}

impl SurvivalTrace {
    pub fn from_amplitudes(grid: &TimeGrid, amplitudes: Vec<Complex64>) -> Self {
        debug_assert_eq!(grid.len(), amplitudes.len());
        let probabilities = amplitudes.iter().map(|a| a.norm_sqr()).collect();
        Self {
            times: grid.times(),
            amplitudes,
            probabilities,
        }
    }

    pub fn from_fn(grid: &TimeGrid, f: impl Fn(f64) -> Complex64) -> Self {
        let amps = grid.times().into_iter().map(f).collect();
        Self::from_amplitudes(grid, amps)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
    pub fn step(&self) -> f64 {
        if self.times.len() > 1 {
            self.times[1] - self.times[0]
        } else {
            0.0
        }
    }
    pub fn t_max(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// Keeps every `stride`-th sample.
    pub fn decimated(&self, stride: usize) -> Self {
        fn pick<T: Copy>(v: &[T], stride: usize) -> Vec<T> {
            v.iter().step_by(stride.max(1)).copied().collect()
        }
        Self {
            times: pick(&self.times, stride),
            amplitudes: pick(&self.amplitudes, stride),
            probabilities: pick(&self.probabilities, stride),
        }
    }

    /// Four-point Lagrange interpolation of the amplitude.
    pub fn amplitude_at(&self, t: f64) -> Result<Complex64> {
        let n = self.len();
        let t_max = self.t_max();
        if n < 4 || !(t >= 0.0) || t > t_max * (1.0 + 1e-12) {
            return Err(Error::TauOutOfRange { tau: t, t_max });
        }
        let h = self.step();
        let x = t / h;
        let i = (x.floor() as usize).min(n - 2);
        let start = i.saturating_sub(1).min(n - 4);
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..4 {
            let mut w = 1.0;
            for k in 0..4 {
                if k != j {
                    w *= (x - (start + k) as f64) / (j as f64 - k as f64);
                }
            }
            acc += self.amplitudes[start + j] * w;
        }
        Ok(acc)
    }

    pub fn probability_at(&self, t: f64) -> Result<f64> {
        Ok(self.amplitude_at(t)?.norm_sqr())
    }

    /// Maximum `|A_1(t) - A_2(t)|` over common samples.
    pub fn max_amplitude_diff(&self, other: &SurvivalTrace) -> f64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_basics() {
        let g = TimeGrid::new(2.0, 4).unwrap();
        assert_eq!(g.times(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(g.refined(2).len(), 9);
        assert!(TimeGrid::new(0.0, 4).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(TimeGrid::covering(1.0, 0.3).unwrap().step() <= 0.3);
    }

    #[test]
    fn interpolation_is_cubic_exact() {
        let g = TimeGrid::new(3.0, 30).unwrap();
        let f = |t: f64| Complex64::new(1.0 - t * t * t / 7.0, 0.5 * t * t);
        let tr = SurvivalTrace::from_fn(&g, f);
        for t in [0.0, 0.013, 0.77, 1.5, 2.99, 3.0] {
            assert!((tr.amplitude_at(t).unwrap() - f(t)).norm() < 1e-13);
        }
        assert!(tr.amplitude_at(3.1).is_err());
        assert!(tr.amplitude_at(-0.1).is_err());
    }
}
