//! Comparison transformations: FFT resampling and singular spectrum
//! analysis. All operate on raw (unstandardized) magnitude series.

mod resample;
mod ssa;

use serde::{Deserialize, Serialize};

pub use resample::{fft_resample, fft_resample_to_len, round_trip};
pub use ssa::{ssa_decompose, ssa_decompose_leading, ssa_reconstruct, ssa_smooth, SsaDecomposition};

use crate::ingest::{LabeledWindow, MagnitudeSeries, SensorWindow};
use crate::{exec, Result};

/// Whether a transformation runs over whole trials (before windowing) or
/// over each window separately.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    #[default]
    Trial,
    Window,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Baseline {
    /// Round trip through `rate` Hz.
    Resample { rate: f64 },
    /// Keep the `components` strongest SSA components.
    Ssa { components: usize, window_length: usize },
}

impl Baseline {
    pub fn label(&self) -> String {
        match self {
            Baseline::Resample { rate } => format!("resample{rate}"),
            Baseline::Ssa { components, .. } => {
                let list: Vec<String> = (1..=*components).map(|c| c.to_string()).collect();
                format!("ssa({})", list.join(","))
            }
        }
    }

    /// Applies the transformation to one channel.
    pub fn apply(&self, x: &[f64], sampling_rate: f64) -> Result<Vec<f64>> {
        match self {
            Baseline::Resample { rate } => round_trip(x, sampling_rate, *rate),
            Baseline::Ssa { components, window_length } => ssa_smooth(x, *window_length, *components),
        }
    }
}

/// Resamples each trial to `target_rate` and back to its original rate, so
/// windows keep their shape while carrying only the low-rate band.
pub fn downsample_pipeline(series: &[MagnitudeSeries], sampling_rate: f64, target_rate: f64) -> Result<Vec<MagnitudeSeries>> {
    transform_series(series, &Baseline::Resample { rate: target_rate }, sampling_rate)
}

/// Applies `baseline` channel-wise to every trial.
pub fn transform_series(series: &[MagnitudeSeries], baseline: &Baseline, sampling_rate: f64) -> Result<Vec<MagnitudeSeries>> {
    exec::try_map(series, |s| {
        let mut out = s.clone();
        for (o, ch) in out.channels.iter_mut().zip(&s.channels) {
            *o = baseline.apply(ch, sampling_rate)?;
        }
        Ok(out)
    })
}

/// Applies `baseline` channel-wise to every window.
pub fn transform_windows(windows: &[LabeledWindow], baseline: &Baseline, sampling_rate: f64) -> Result<Vec<LabeledWindow>> {
    exec::try_map(windows, |w| {
        let mut data = Vec::with_capacity(w.window.data().len());
        for c in 0..w.window.channels() {
            data.extend(baseline.apply(w.window.row(c), sampling_rate)?);
        }
        let mut out = w.clone();
        out.window = SensorWindow::new(w.window.channels(), w.window.width(), data)?;
        Ok(out)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Activity, MagnitudeSeries};

    fn series() -> MagnitudeSeries {
        MagnitudeSeries {
            channels: [
                (0..300).map(|i| (i as f64 / 5.0).sin().abs()).collect(),
                (0..300).map(|i| 1.0 + (i as f64 / 2.0).cos()).collect(),
            ],
            user_id: 3,
            activity: Activity::Walking,
            trial_index: 2,
        }
    }

    #[test]
    fn pipeline_keeps_lengths_and_labels() {
        let s = series();
        for b in [Baseline::Resample { rate: 5.0 }, Baseline::Ssa { components: 2, window_length: 50 }] {
            let out = transform_series(std::slice::from_ref(&s), &b, 50.0).unwrap();
            assert_eq!(out[0].channels[0].len(), 300);
            assert_eq!(out[0].channels[1].len(), 300);
            assert_eq!((out[0].user_id, out[0].trial_index), (3, 2));
        }
        let same = downsample_pipeline(std::slice::from_ref(&s), 50.0, 50.0).unwrap();
        assert!(same[0].channels[0].iter().zip(&s.channels[0]).all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn labels_follow_table_rows() {
        assert_eq!(Baseline::Resample { rate: 10.0 }.label(), "resample10");
        assert_eq!(Baseline::Ssa { components: 2, window_length: 50 }.label(), "ssa(1,2)");
        assert_eq!(Baseline::Ssa { components: 1, window_length: 50 }.label(), "ssa(1)");
    }
}
