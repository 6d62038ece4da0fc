use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::{Error, Result};

/// Band-limited resampling of `x` to `num` samples by spectrum truncation
/// or zero-padding. At an even cut length the Nyquist coefficient is
/// doubled when shrinking and halved when growing, keeping the result real.
pub fn fft_resample_to_len(x: &[f64], num: usize) -> Result<Vec<f64>> {
    let nx = x.len();
    if nx < 2 {
        return Err(Error::DegenerateInput(format!("cannot resample a series of length {nx}")));
    }
    if num == 0 {
        return Err(Error::DegenerateInput("target length is zero".into()));
    }
    if num == nx {
        return Ok(x.to_vec());
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut spec: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(nx).process(&mut spec);

    // Half spectrum of the output, as a real FFT would hold it.
    let n = num.min(nx);
    let nyq = n / 2 + 1;
    let mut half = vec![Complex::new(0.0, 0.0); num / 2 + 1];
    let keep = nyq.min(half.len());
    half[..keep].copy_from_slice(&spec[..keep]);
    if n % 2 == 0 {
        if num < nx {
            half[n / 2] *= 2.0;
        } else {
            half[n / 2] *= 0.5;
        }
    }

    let mut full = vec![Complex::new(0.0, 0.0); num];
    full[0] = Complex::new(half[0].re, 0.0);
    for k in 1..half.len() {
        if 2 * k == num {
            full[k] = Complex::new(half[k].re, 0.0);
        } else {
            full[k] = half[k];
            full[num - k] = half[k].conj();
        }
    }
    planner.plan_fft_inverse(num).process(&mut full);
    Ok(full.iter().map(|c| c.re / nx as f64).collect())
}

/// Resamples from `from_rate` to `to_rate`; the output has
/// `round(T · to_rate / from_rate)` samples.
pub fn fft_resample(x: &[f64], from_rate: f64, to_rate: f64) -> Result<Vec<f64>> {
    if !(from_rate > 0.0 && to_rate > 0.0) {
        return Err(Error::DegenerateInput(format!("rates must be positive ({from_rate} -> {to_rate})")));
    }
    let num = (x.len() as f64 * to_rate / from_rate).round() as usize;
    fft_resample_to_len(x, num)
}

/// Down to `target_rate` and back to the original length, keeping only
/// the band below `target_rate / 2`.
pub fn round_trip(x: &[f64], from_rate: f64, target_rate: f64) -> Result<Vec<f64>> {
    if !(target_rate > 0.0 && target_rate <= from_rate) {
        return Err(Error::DegenerateInput(format!(
            "target rate {target_rate} must be in (0, {from_rate}]"
        )));
    }
    let low = fft_resample(x, from_rate, target_rate)?;
    if low.len() < 2 {
        return Err(Error::DegenerateInput(format!("{} samples at {target_rate} Hz is too short", x.len())));
    }
    fft_resample_to_len(&low, x.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn sine(freq: f64, rate: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (TAU * freq * i as f64 / rate).sin()).collect()
    }

    fn rmse(a: &[f64], b: &[f64]) -> f64 {
        (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
    }

    /// Direct DFT magnitude, independent of the FFT used above.
    fn dft_magnitude(x: &[f64], k: usize) -> f64 {
        let n = x.len() as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (t, v) in x.iter().enumerate() {
            let a = TAU * k as f64 * t as f64 / n;
            re += v * a.cos();
            im -= v * a.sin();
        }
        (re * re + im * im).sqrt()
    }

    #[test]
    fn constant_series_stays_constant() {
        for (from, to) in [(50.0, 10.0), (50.0, 5.0), (10.0, 50.0), (50.0, 33.0)] {
            let out = fft_resample(&[3.5; 123], from, to).unwrap();
            assert_eq!(out.len(), (123.0 * to / from as f64).round() as usize);
            assert!(out.iter().all(|v| (v - 3.5).abs() < 1e-12));
        }
    }

    #[test]
    fn sine_matches_analytic_signal() {
        let x = sine(2.0, 50.0, 500);
        let out = fft_resample(&x, 50.0, 10.0).unwrap();
        assert_eq!(out.len(), 100);
        assert!(rmse(&out, &sine(2.0, 10.0, 100)) < 1e-6);
    }

    #[test]
    fn output_lengths() {
        assert_eq!(fft_resample(&vec![0.0; 500], 50.0, 5.0).unwrap().len(), 50);
        assert!(matches!(fft_resample(&[1.0], 50.0, 5.0), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn same_rate_is_identity() {
        let x: Vec<f64> = (0..77).map(|i| ((i * 37) % 11) as f64 - 4.0).collect();
        assert_eq!(fft_resample(&x, 50.0, 50.0).unwrap(), x);
        let rt = round_trip(&x, 50.0, 50.0).unwrap();
        assert!(rt.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn round_trip_removes_content_above_new_nyquist() {
        let n = 500;
        let x: Vec<f64> = (0..n).map(|i| {
            let t = i as f64 / 50.0;
            (TAU * 1.0 * t).sin() + 0.7 * (TAU * 4.0 * t).sin() + 0.3 * (TAU * 11.0 * t).cos()
        }).collect();
        let out = round_trip(&x, 50.0, 5.0).unwrap();
        for k in 0..=n / 2 {
            let freq = k as f64 * 50.0 / n as f64;
            if freq > 2.5 {
                assert!(dft_magnitude(&out, k) < 1e-8, "bin {k} ({freq} Hz)");
            }
        }
        // the 1 Hz component survives untouched
        assert!((dft_magnitude(&out, 10) - dft_magnitude(&x, 10)).abs() < 1e-8);
    }

    #[test]
    fn upsampling_preserves_band_energy() {
        let x = sine(3.0, 20.0, 40);
        let up = fft_resample(&x, 20.0, 50.0).unwrap();
        let e_in: f64 = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        let e_out: f64 = up.iter().map(|v| v * v).sum::<f64>() / up.len() as f64;
        assert!((e_in - e_out).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn round_trip_is_idempotent(
            x in proptest::collection::vec(-5.0f64..5.0, 64..400),
            target in prop::sample::select(vec![5.0, 10.0, 20.0, 25.0, 30.0, 40.0]),
        ) {
            let once = round_trip(&x, 50.0, target).unwrap();
            let twice = round_trip(&once, 50.0, target).unwrap();
            let worst = once.iter().zip(&twice).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(worst < 1e-7, "{worst}");
        }

        #[test]
        fn all_lengths_produce_real_band_limited_output(len in 2usize..90, num in 1usize..90) {
            let x: Vec<f64> = (0..len).map(|i| ((i * 7919) % 13) as f64).collect();
            let y = fft_resample_to_len(&x, num).unwrap();
            prop_assert_eq!(y.len(), num);
            let mean_x = x.iter().sum::<f64>() / len as f64;
            let mean_y = y.iter().sum::<f64>() / num as f64;
            prop_assert!((mean_x - mean_y).abs() < 1e-9);
        }
    }
}
