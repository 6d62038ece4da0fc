use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Acf {
    /// Sample autocorrelation at lags `0..=max_lag`.
    pub values: Vec<f64>,
    /// Half-width of the 95% white-noise band, `1.96/√n`.
    pub bound: f64,
}

impl Acf {
    /// Fraction of lags ≥ 1 inside the white-noise band.
    pub fn fraction_within_bound(&self) -> f64 {
        let lags = &self.values[1..];
        if lags.is_empty() {
            return 1.0;
        }
        lags.iter().filter(|v| v.abs() <= self.bound).count() as f64 / lags.len() as f64
    }
}

pub fn autocorrelation(x: &[f64], max_lag: usize) -> Result<Acf> {
    let n = x.len();
    if n <= max_lag {
        return Err(Error::DegenerateInput(format!("series of length {n} is too short for lag {max_lag}")));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0: f64 = d.iter().map(|v| v * v).sum();
    if c0 == 0.0 {
        return Err(Error::DegenerateInput("constant series has no autocorrelation".into()));
    }
    let values = (0..=max_lag)
        .map(|k| d[..n - k].iter().zip(&d[k..]).map(|(a, b)| a * b).sum::<f64>() / c0)
        .collect();
    Ok(Acf {
        values,
        bound: 1.96 / (n as f64).sqrt(),
    })
}

/// Writes `label,lag,acf,bound` rows.
pub fn write_acf_csv(path: &Path, rows: &[(String, Acf)]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "label,lag,acf,bound")?;
    for (label, acf) in rows {
        for (lag, v) in acf.values.iter().enumerate() {
            writeln!(out, "{label},{lag},{v},{}", acf.bound)?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lag_zero_is_one() {
        let a = autocorrelation(&[1.0, 3.0, 2.0, 5.0, 4.0], 3).unwrap();
        assert_eq!(a.values[0], 1.0);
        assert!(autocorrelation(&[1.0; 5], 2).is_err());
        assert!(autocorrelation(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn sinusoid_peaks_at_its_period() {
        let p = 20;
        let x: Vec<f64> = (0..1000).map(|i| (std::f64::consts::TAU * i as f64 / p as f64).sin()).collect();
        let a = autocorrelation(&x, 2 * p).unwrap();
        let v = &a.values;
        assert!(v[p] > v[p - 1] && v[p] > v[p + 1]);
        assert!((v[p] - 1.0).abs() < 0.05, "{}", v[p]);
    }

    #[test]
    fn white_noise_stays_inside_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..1000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = autocorrelation(&x, 100).unwrap();
        assert!((a.bound - 1.96 / 1000f64.sqrt()).abs() < 1e-15);
        assert!(a.fraction_within_bound() >= 0.9);
    }

    #[test]
    fn csv_export() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("acf.csv");
        let a = autocorrelation(&[1.0, 2.0, 0.0, 3.0], 2).unwrap();
        write_acf_csv(&p, &[("raw".into(), a)]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("label,lag,acf,bound\nraw,0,1,"));
    }
}
