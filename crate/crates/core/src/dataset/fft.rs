use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::problem::{LoadShape, N_FFT};
use crate::{Error, Result};

/// Default number of time samples on `[0, 1)`.
pub const FFT_SAMPLES: usize = 256;

/// Magnitudes `|X_k| / n` of the first ten DFT bins of `g` sampled at
/// `t_j = j / n`, `j = 0..n`.
pub fn fft_load_features(shape: LoadShape, n: usize) -> Result<[f64; N_FFT]> {
    if n < 20 {
        return Err(Error::InvalidArgument(format!(
            "at least 20 time samples needed for FFT features, got {n}"
        )));
    }
    let mut buf: Vec<Complex<f64>> = (0..n)
        .map(|j| Complex::new(shape.eval(j as f64 / n as f64), 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mut out = [0.0; N_FFT];
    for (o, x) in out.iter_mut().zip(&buf) {
        *o = x.norm() / n as f64;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(shape: LoadShape, n: usize) -> Vec<f64> {
        (0..N_FFT)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for j in 0..n {
                    let g = shape.eval(j as f64 / n as f64);
                    let a = -2.0 * std::f64::consts::PI * (k * j) as f64 / n as f64;
                    re += g * a.cos();
                    im += g * a.sin();
                }
                (re * re + im * im).sqrt() / n as f64
            })
            .collect()
    }

    #[test]
    fn constant_is_dc_only() {
        let f = fft_load_features(LoadShape::Step, FFT_SAMPLES).unwrap();
        assert!((f[0] - 1.0).abs() < 1e-9);
        assert!(f[1..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn sine_peaks_in_bin_one() {
        let f = fft_load_features(LoadShape::Sine, FFT_SAMPLES).unwrap();
        for (k, v) in f.iter().enumerate() {
            if k != 1 {
                assert!(*v < 1e-6 * f[1]);
            }
        }
        assert!((f[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn impulse_matches_direct_dft() {
        let f = fft_load_features(LoadShape::Impulse, FFT_SAMPLES).unwrap();
        for (a, b) in f.iter().zip(naive(LoadShape::Impulse, FFT_SAMPLES)) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn too_few_samples() {
        assert!(fft_load_features(LoadShape::Sine, 19).is_err());
    }
}
