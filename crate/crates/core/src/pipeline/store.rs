//! On-disk artifacts: the `MWIN` windowed-dataset container and model-set
//! bundles (five `MANN` files plus a JSON manifest).
//!
//! `MWIN` layout (little-endian): magic `MWIN`, version `u16`, channels
//! `u32`, width `u32`, user classes `u32`, activity classes `u32`, count
//! `u64`, then per window: user `u32`, activity `u32`, trial `u32`, offset
//! `u64`, standardized flag `u8` and `channels × width` `f64` values.
//!
//! `MSER` holds whole magnitude trials: magic, version `u16`, user count
//! `u32`, one gender byte per user (0 female, 1 male, 2 unknown), trial
//! count `u64`, then per trial: user `u32`, activity code (3 bytes), trial
//! `u32`, length `u64` and both channels as `f64`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ingest::{Activity, ChannelStats, Gender, LabeledWindow, MagnitudeSeries, OneHot, SensorWindow};
use crate::models::{ArchitectureConfig, ModelSet, MODEL_NAMES};
use crate::nnkernel::persist::{load_graph, save_graph};
use crate::{Error, Result};

pub const WINDOW_MAGIC: &[u8; 4] = b"MWIN";
pub const WINDOW_FORMAT_VERSION: u16 = 1;
pub const SERIES_MAGIC: &[u8; 4] = b"MSER";
pub const SERIES_FORMAT_VERSION: u16 = 1;
pub const BUNDLE_FORMAT_VERSION: u16 = 1;
const BUNDLE_MANIFEST: &str = "modelset.json";

pub fn windows_to_bytes(windows: &[LabeledWindow]) -> Result<Vec<u8>> {
    let (channels, width, users, acts) = match windows.first() {
        Some(w) => (w.window.channels(), w.window.width(), w.identity.len(), w.activity.len()),
        None => (0, 0, 0, 0),
    };
    let mut out = Vec::with_capacity(32 + windows.len() * (21 + 8 * channels * width));
    out.extend_from_slice(WINDOW_MAGIC);
    out.extend_from_slice(&WINDOW_FORMAT_VERSION.to_le_bytes());
    for v in [channels, width, users, acts] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&(windows.len() as u64).to_le_bytes());
    for w in windows {
        if (w.window.channels(), w.window.width(), w.identity.len(), w.activity.len()) != (channels, width, users, acts) {
            return Err(Error::ContractViolation("windows with mixed shapes or label widths".into()));
        }
        out.extend_from_slice(&(w.identity.index() as u32).to_le_bytes());
        out.extend_from_slice(&(w.activity.index() as u32).to_le_bytes());
        out.extend_from_slice(&w.trial_index.to_le_bytes());
        out.extend_from_slice(&(w.offset as u64).to_le_bytes());
        out.push(u8::from(w.window.standardized));
        for v in w.window.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::CorruptContainer(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn windows_from_bytes(buf: &[u8]) -> Result<Vec<LabeledWindow>> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != WINDOW_MAGIC {
        return Err(Error::CorruptContainer("bad magic, expected MWIN".into()));
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes"));
    if version != WINDOW_FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            supported: WINDOW_FORMAT_VERSION,
        });
    }
    let channels = r.u32()? as usize;
    let width = r.u32()? as usize;
    let users = r.u32()? as usize;
    let acts = r.u32()? as usize;
    let count = r.u64()? as usize;
    let per = channels * width;
    let record = 21 + 8 * per;
    if buf.len() - r.pos != count.saturating_mul(record) {
        return Err(Error::CorruptContainer(format!(
            "expected {count} windows of {record} bytes, found {} bytes",
            buf.len() - r.pos
        )));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let identity = OneHot::new(r.u32()? as usize, users)?;
        let activity = OneHot::new(r.u32()? as usize, acts)?;
        let trial_index = r.u32()?;
        let offset = r.u64()? as usize;
        let standardized = r.take(1)?[0] != 0;
        let data: Vec<f64> = r
            .take(8 * per)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        let mut window = SensorWindow::new(channels, width, data)?;
        window.standardized = standardized;
        out.push(LabeledWindow {
            window,
            identity,
            activity,
            trial_index,
            offset,
        });
    }
    Ok(out)
}

pub fn save_windows(windows: &[LabeledWindow], path: &Path) -> Result<()> {
    fs::write(path, windows_to_bytes(windows)?)?;
    Ok(())
}

pub fn load_windows(path: &Path) -> Result<Vec<LabeledWindow>> {
    windows_from_bytes(&fs::read(path)?)
}

/// Magnitude trials with the user count and optional genders.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesSet {
    pub num_users: usize,
    pub genders: Option<Vec<Gender>>,
    pub series: Vec<MagnitudeSeries>,
}

pub fn series_to_bytes(set: &SeriesSet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(SERIES_MAGIC);
    out.extend_from_slice(&SERIES_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(set.num_users as u32).to_le_bytes());
    for u in 0..set.num_users {
        out.push(match set.genders.as_ref().and_then(|g| g.get(u)) {
            Some(Gender::Female) => 0,
            Some(Gender::Male) => 1,
            None => 2,
        });
    }
    out.extend_from_slice(&(set.series.len() as u64).to_le_bytes());
    for s in &set.series {
        out.extend_from_slice(&(s.user_id as u32).to_le_bytes());
        out.extend_from_slice(s.activity.code().as_bytes());
        out.extend_from_slice(&s.trial_index.to_le_bytes());
        out.extend_from_slice(&(s.len() as u64).to_le_bytes());
        for ch in &s.channels {
            for v in ch {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

pub fn series_from_bytes(buf: &[u8]) -> Result<SeriesSet> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != SERIES_MAGIC {
        return Err(Error::CorruptContainer("bad magic, expected MSER".into()));
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes"));
    if version != SERIES_FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            supported: SERIES_FORMAT_VERSION,
        });
    }
    let num_users = r.u32()? as usize;
    let codes = r.take(num_users)?;
    let genders = if codes.iter().all(|&c| c < 2) {
        Some(codes.iter().map(|&c| if c == 0 { Gender::Female } else { Gender::Male }).collect())
    } else {
        None
    };
    let count = r.u64()? as usize;
    let mut series = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let user_id = r.u32()? as usize;
        let code = std::str::from_utf8(r.take(3)?).unwrap_or("");
        let activity = Activity::from_code(code)
            .ok_or_else(|| Error::CorruptContainer(format!("unknown activity code {code:?}")))?;
        let trial_index = r.u32()?;
        let len = r.u64()? as usize;
        let mut read = || -> Result<Vec<f64>> {
            Ok(r.take(len.checked_mul(8).ok_or_else(|| Error::CorruptContainer("length overflow".into()))?)?
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect())
        };
        let channels = [read()?, read()?];
        series.push(MagnitudeSeries { channels, user_id, activity, trial_index });
    }
    if r.pos != buf.len() {
        return Err(Error::CorruptContainer(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Ok(SeriesSet { num_users, genders, series })
}

/// A trained anonymizer with the standardizer it was trained under.
#[derive(Clone, Debug, PartialEq)]
pub struct Anonymizer {
    pub models: ModelSet,
    pub stats: ChannelStats,
    pub architecture: ArchitectureConfig,
}

#[derive(Serialize, Deserialize)]
struct BundleManifest {
    format_version: u16,
    architecture: ArchitectureConfig,
    stats: ChannelStats,
    models: Vec<String>,
}

pub fn save_anonymizer(a: &Anonymizer, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for (name, g) in MODEL_NAMES.iter().zip(a.models.graphs()) {
        let file = format!("{name}.mann");
        save_graph(g, &dir.join(&file))?;
        files.push(file);
    }
    let manifest = BundleManifest {
        format_version: BUNDLE_FORMAT_VERSION,
        architecture: a.architecture.clone(),
        stats: a.stats.clone(),
        models: files,
    };
    fs::write(dir.join(BUNDLE_MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_anonymizer(dir: &Path) -> Result<Anonymizer> {
    let text = fs::read_to_string(dir.join(BUNDLE_MANIFEST))?;
    let m: BundleManifest =
        serde_json::from_str(&text).map_err(|e| Error::CorruptContainer(format!("model-set manifest: {e}")))?;
    if m.format_version != BUNDLE_FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: m.format_version,
            supported: BUNDLE_FORMAT_VERSION,
        });
    }
    let load = |name: &str| load_graph(&dir.join(format!("{name}.mann")));
    let models = ModelSet {
        encoder: load("encoder")?,
        decoder: load("decoder")?,
        enc_reg: load("enc_reg")?,
        dec_reg: load("dec_reg")?,
        act_reg: load("act_reg")?,
    };
    if models.encoder.input_dims() != m.architecture.input_dims() {
        return Err(Error::CorruptContainer("encoder input does not match the stored architecture".into()));
    }
    Ok(Anonymizer {
        models,
        stats: m.stats,
        architecture: m.architecture,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Activity, MagnitudeSeries, label_windows};
    use proptest::prelude::*;

    fn windows(n: usize) -> Vec<LabeledWindow> {
        let s = MagnitudeSeries {
            channels: [
                (0..n).map(|i| (i as f64 * 0.37).sin()).collect(),
                (0..n).map(|i| i as f64 / 7.0).collect(),
            ],
            user_id: 2,
            activity: Activity::Jogging,
            trial_index: 9,
        };
        label_windows(&[s], 16, 5, 3, &Activity::EXPERIMENT).unwrap()
    }

    #[test]
    fn windows_round_trip_and_reject_damage() {
        let w = windows(60);
        let bytes = windows_to_bytes(&w).unwrap();
        assert_eq!(windows_from_bytes(&bytes).unwrap(), w);
        assert!(matches!(windows_from_bytes(&bytes[..bytes.len() - 1]), Err(Error::CorruptContainer(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(windows_from_bytes(&bad), Err(Error::CorruptContainer(_))));
        let mut future = bytes;
        future[4] = 9;
        assert!(matches!(windows_from_bytes(&future), Err(Error::VersionMismatch { found: 9, .. })));
        assert!(windows_from_bytes(&windows_to_bytes(&[]).unwrap()).unwrap().is_empty());
    }

    #[test]
    fn series_round_trip() {
        let set = SeriesSet {
            num_users: 2,
            genders: Some(vec![Gender::Male, Gender::Female]),
            series: vec![MagnitudeSeries {
                channels: [vec![1.0, 2.0, 3.5], vec![0.25, -1.0, 9.0]],
                user_id: 1,
                activity: Activity::Upstairs,
                trial_index: 12,
            }],
        };
        let bytes = series_to_bytes(&set);
        assert_eq!(series_from_bytes(&bytes).unwrap(), set);
        assert!(matches!(series_from_bytes(&bytes[..bytes.len() - 3]), Err(Error::CorruptContainer(_))));
        let unknown = SeriesSet { genders: None, ..set };
        assert_eq!(series_from_bytes(&series_to_bytes(&unknown)).unwrap(), unknown);
    }

    proptest! {
        #[test]
        fn container_preserves_values_bitwise(vals in proptest::collection::vec(-1e6f64..1e6, 32)) {
            let mut w = windows(16)[0].clone();
            w.window = SensorWindow::new(2, 16, vals).unwrap();
            let back = windows_from_bytes(&windows_to_bytes(std::slice::from_ref(&w)).unwrap()).unwrap();
            prop_assert_eq!(back[0].window.data(), w.window.data());
        }
    }
}
