//! Gaussian random fields by spectral synthesis on a periodic grid.

use std::f64::consts::PI;

use gola_core::rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::GenError;

/// Field with covariance `(−Δ + τ² I)^{−α}`, rescaled to unit pointwise variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrfSpec {
    pub grid_res: usize,
    pub tau: f64,
    pub alpha: f64,
    pub seed: u64,
}

impl GrfSpec {
    pub fn validate(&self) -> Result<(), GenError> {
        if self.grid_res < 2 || !(self.tau > 0.0) || !(self.alpha > 1.0) {
            return Err(GenError::InvalidSpec(format!(
                "GRF needs grid_res ≥ 2, τ > 0, α > 1; got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Signed integer frequency of FFT bin `k` on an `n`-point grid.
fn wavenumber(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Spectral amplitudes `(4π²|k|² + τ²)^{−α/2}` with the mean mode removed,
/// row-major `n × n`.
pub fn amplitudes(spec: &GrfSpec) -> Vec<f64> {
    let n = spec.grid_res;
    let mut amp = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            if a == 0 && b == 0 {
                continue;
            }
            let (ka, kb) = (wavenumber(a, n), wavenumber(b, n));
            let lam = 4.0 * PI * PI * (ka * ka + kb * kb) + spec.tau * spec.tau;
            amp[a * n + b] = lam.powf(-spec.alpha / 2.0);
        }
    }
    amp
}

/// In-place 2D transform of a row-major `n × n` array.
pub(crate) fn fft2(data: &mut [Complex64], n: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    for row in data.chunks_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for b in 0..n {
        for a in 0..n {
            col[a] = data[a * n + b];
        }
        fft.process(&mut col);
        for a in 0..n {
            data[a * n + b] = col[a];
        }
    }
}

/// One draw, row-major `grid_res²`, deterministic in `spec.seed`.
pub fn sample_grf(spec: &GrfSpec) -> Result<Vec<f64>, GenError> {
    spec.validate()?;
    let n = spec.grid_res;
    let amp = amplitudes(spec);
    let total: f64 = amp.iter().map(|a| a * a).sum();
    let norm = 1.0 / total.sqrt();
    let mut r = rng::seeded(spec.seed);
    let mut coeffs: Vec<Complex64> = amp
        .iter()
        .map(|&a| {
            let (re, im) = (rng::normal(&mut r), rng::normal(&mut r));
            Complex64::new(re, im) * (a * norm)
        })
        .collect();
    fft2(&mut coeffs, n, true);
    Ok(coeffs.iter().map(|c| c.re).collect())
}

/// Fraction of spectral energy at `|k|_∞ > cutoff`.
pub fn high_frequency_fraction(field: &[f64], n: usize, cutoff: usize) -> f64 {
    let mut data: Vec<Complex64> = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2(&mut data, n, false);
    let (mut high, mut all) = (0.0, 0.0);
    for a in 0..n {
        for b in 0..n {
            let e = data[a * n + b].norm_sqr();
            all += e;
            let k = wavenumber(a, n).abs().max(wavenumber(b, n).abs());
            if k > cutoff as f64 {
                high += e;
            }
        }
    }
    high / all
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(seed: u64) -> GrfSpec {
        GrfSpec {
            grid_res: 32,
            tau: 3.0,
            alpha: 2.0,
            seed,
        }
    }

    #[test]
    fn same_seed_same_field() {
        assert_eq!(sample_grf(&spec(5)).unwrap(), sample_grf(&spec(5)).unwrap());
        assert_ne!(sample_grf(&spec(5)).unwrap(), sample_grf(&spec(6)).unwrap());
    }

    #[test]
    fn empirical_mean_is_small() {
        let n = 32 * 32;
        let mut mean = vec![0.0; n];
        for s in 0..200 {
            for (m, v) in mean.iter_mut().zip(sample_grf(&spec(s)).unwrap()) {
                *m += v / 200.0;
            }
        }
        let avg_abs = mean.iter().map(|m: &f64| m.abs()).sum::<f64>() / n as f64;
        assert!(avg_abs < 0.1, "{avg_abs}");
    }

    #[test]
    fn unit_variance_on_average() {
        let mut var = 0.0;
        for s in 0..50 {
            let f = sample_grf(&spec(s)).unwrap();
            var += f.iter().map(|v| v * v).sum::<f64>() / f.len() as f64 / 50.0;
        }
        assert!((var - 1.0).abs() < 0.25, "{var}");
    }

    #[test]
    fn smoother_spectrum_has_less_high_frequency_energy() {
        let fractions: Vec<f64> = [1.5, 2.5, 3.5]
            .iter()
            .map(|&alpha| {
                (0..20)
                    .map(|s| {
                        let sp = GrfSpec { alpha, ..spec(s) };
                        high_frequency_fraction(&sample_grf(&sp).unwrap(), 32, 4)
                    })
                    .sum::<f64>()
                    / 20.0
            })
            .collect();
        assert!(fractions[0] > fractions[1] && fractions[1] > fractions[2], "{fractions:?}");
    }

    #[test]
    fn invalid_spec_is_rejected() {
        assert!(sample_grf(&GrfSpec { alpha: 1.0, ..spec(0) }).is_err());
        assert!(sample_grf(&GrfSpec { tau: 0.0, ..spec(0) }).is_err());
    }
}
