use serde::{Deserialize, Serialize};

use super::SensorWindow;
use crate::{Error, Result};

/// Smallest standard deviation used for scaling; constant channels are
/// floored here and map to all zeros.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-channel z-score statistics fitted on training windows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Channels whose standard deviation was floored.
    #[serde(default)]
    pub degenerate_channels: Vec<usize>,
}

impl ChannelStats {
    pub fn identity(channels: usize) -> Self {
        ChannelStats {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
            degenerate_channels: Vec::new(),
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, w: &SensorWindow) -> Result<()> {
        if w.channels() != self.channels() {
            return Err(Error::ContractViolation(format!(
                "stats have {} channels, window has {}",
                self.channels(),
                w.channels()
            )));
        }
        Ok(())
    }

    /// Maps a standardized window back to raw units.
    pub fn invert(&self, window: &SensorWindow) -> Result<SensorWindow> {
        self.check(window)?;
        let width = window.width();
        let mut out = window.clone();
        for (c, row) in out.data_mut().chunks_mut(width).enumerate() {
            for v in row {
                *v = *v * self.std[c] + self.mean[c];
            }
        }
        out.standardized = false;
        Ok(out)
    }
}

/// Two-pass mean and population standard deviation per channel.
pub fn fit_standardizer(train: &[SensorWindow]) -> Result<ChannelStats> {
    let first = train
        .first()
        .ok_or_else(|| Error::InsufficientData("cannot fit a standardizer on zero windows".into()))?;
    let channels = first.channels();
    let mut mean = vec![0.0; channels];
    let mut count = 0usize;
    for w in train {
        if w.channels() != channels {
            return Err(Error::ContractViolation("windows with mixed channel counts".into()));
        }
        for (c, m) in mean.iter_mut().enumerate() {
            *m += w.row(c).iter().sum::<f64>();
        }
        count += w.width();
    }
    for m in &mut mean {
        *m /= count as f64;
    }
    let mut var = vec![0.0; channels];
    for w in train {
        for (c, v) in var.iter_mut().enumerate() {
            *v += w.row(c).iter().map(|x| (x - mean[c]).powi(2)).sum::<f64>();
        }
    }
    let mut degenerate_channels = Vec::new();
    let std = var
        .into_iter()
        .enumerate()
        .map(|(c, v)| {
            let s = (v / count as f64).sqrt();
            if s < STD_FLOOR {
                log::warn!("channel {c} is constant; std floored at {STD_FLOOR}");
                degenerate_channels.push(c);
                STD_FLOOR
            } else {
                s
            }
        })
        .collect();
    Ok(ChannelStats {
        mean,
        std,
        degenerate_channels,
    })
}

pub fn apply_standardizer(stats: &ChannelStats, window: &SensorWindow) -> Result<SensorWindow> {
    stats.check(window)?;
    let width = window.width();
    let mut out = window.clone();
    for (c, row) in out.data_mut().chunks_mut(width).enumerate() {
        for v in row {
            *v = (*v - stats.mean[c]) / stats.std[c];
        }
    }
    out.standardized = true;
    Ok(out)
}
