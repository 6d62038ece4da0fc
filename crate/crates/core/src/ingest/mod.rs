//! MotionSense-layout ingestion: trial loading, magnitude channels,
//! windowing, labelling and train/validation/test splits.

mod loader;
mod split;
mod standardize;

use serde::{Deserialize, Serialize};

pub use loader::{load_corpus, load_subject_info, load_trials, Corpus, Gender, SubjectInfo, SUBJECT_INFO_FILE};
pub use split::{make_split, DatasetSplit, HeldOutTrial, SplitSpec, SplitStrategy, SUBJECT_TEST_USERS};
pub use standardize::{apply_standardizer, fit_standardizer, ChannelStats, STD_FLOOR};

/// Number of magnitude channels fed to the models (gyroscope, accelerometer).
pub const MAGNITUDE_CHANNELS: usize = 2;
/// Samples per window (2.56 s at 50 Hz).
pub const DEFAULT_WINDOW: usize = 128;
pub const DEFAULT_STRIDE: usize = 10;
pub const DEFAULT_SAMPLING_RATE: f64 = 50.0;

/// The twelve feature columns of a MotionSense trial file, in storage order.
pub const FEATURE_COLUMNS: [&str; 12] = [
    "attitude.roll",
    "attitude.pitch",
    "attitude.yaw",
    "gravity.x",
    "gravity.y",
    "gravity.z",
    "rotationRate.x",
    "rotationRate.y",
    "rotationRate.z",
    "userAcceleration.x",
    "userAcceleration.y",
    "userAcceleration.z",
];
const ROTATION_RATE: usize = 6;
const USER_ACCELERATION: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Activity {
    #[serde(rename = "dws")]
    Downstairs,
    #[serde(rename = "ups")]
    Upstairs,
    #[serde(rename = "wlk")]
    Walking,
    #[serde(rename = "jog")]
    Jogging,
    #[serde(rename = "sit")]
    Sitting,
    #[serde(rename = "std")]
    Standing,
}

impl Activity {
    pub const ALL: [Activity; 6] = [
        Activity::Downstairs,
        Activity::Upstairs,
        Activity::Walking,
        Activity::Jogging,
        Activity::Sitting,
        Activity::Standing,
    ];

    /// The four activities used for training and evaluating the anonymizer.
    pub const EXPERIMENT: [Activity; 4] = [
        Activity::Downstairs,
        Activity::Upstairs,
        Activity::Walking,
        Activity::Jogging,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Activity::Downstairs => "dws",
            Activity::Upstairs => "ups",
            Activity::Walking => "wlk",
            Activity::Jogging => "jog",
            Activity::Sitting => "sit",
            Activity::Standing => "std",
        }
    }

    pub fn from_code(code: &str) -> Option<Activity> {
        Activity::ALL.into_iter().find(|a| a.code() == code)
    }
}

impl std::fmt::Display for Activity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

/// One recorded session of one user performing one activity.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    /// Dense user index in `[0, N)`.
    pub user_id: usize,
    /// Subject number from the file name (`sub_<k>.csv`).
    pub subject_code: u32,
    pub activity: Activity,
    pub trial_index: u32,
    /// T rows of the twelve [`FEATURE_COLUMNS`].
    pub samples: Vec<[f64; 12]>,
    pub sampling_rate: f64,
}

impl TrialRecord {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Rotation-rate and user-acceleration magnitudes of one trial.
#[derive(Clone, Debug, PartialEq)]
pub struct MagnitudeSeries {
    /// Row 0: rotationRate norm (rad/s); row 1: userAcceleration norm (g).
    pub channels: [Vec<f64>; MAGNITUDE_CHANNELS],
    pub user_id: usize,
    pub activity: Activity,
    pub trial_index: u32,
}

impl MagnitudeSeries {
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn compute_magnitudes(trial: &TrialRecord) -> MagnitudeSeries {
    let norm = |row: &[f64; 12], start: usize| {
        (row[start] * row[start] + row[start + 1] * row[start + 1] + row[start + 2] * row[start + 2])
            .sqrt()
    };
    let gyro = trial.samples.iter().map(|r| norm(r, ROTATION_RATE)).collect();
    let accel = trial
        .samples
        .iter()
        .map(|r| norm(r, USER_ACCELERATION))
        .collect();
    MagnitudeSeries {
        channels: [gyro, accel],
        user_id: trial.user_id,
        activity: trial.activity,
        trial_index: trial.trial_index,
    }
}

/// An M×W block of sensor channels, stored row-major (channel-major).
#[derive(Clone, Debug, PartialEq)]
pub struct SensorWindow {
    data: Vec<f64>,
    channels: usize,
    width: usize,
    pub standardized: bool,
}

impl SensorWindow {
    pub fn new(channels: usize, width: usize, data: Vec<f64>) -> crate::Result<Self> {
        if data.len() != channels * width {
            return Err(crate::Error::ContractViolation(format!(
                "window of {channels}x{width} needs {} values, got {}",
                channels * width,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(crate::Error::ContractViolation(
                "window contains non-finite values".into(),
            ));
        }
        Ok(SensorWindow {
            data,
            channels,
            width,
            standardized: false,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, channel: usize) -> &[f64] {
        &self.data[channel * self.width..(channel + 1) * self.width]
    }
}

/// Start offsets of the windows cut from a series of length `len`.
pub fn window_offsets(len: usize, width: usize, stride: usize) -> impl Iterator<Item = usize> {
    assert!(width >= 1 && stride >= 1, "window and stride must be positive");
    let count = if len >= width {
        (len - width) / stride + 1
    } else {
        0
    };
    (0..count).map(move |i| i * stride)
}

/// Cuts a magnitude series into windows of `width` samples every `stride`
/// samples. Series shorter than one window yield no windows.
pub fn window(series: &MagnitudeSeries, width: usize, stride: usize) -> Vec<SensorWindow> {
    window_offsets(series.len(), width, stride)
        .map(|start| cut(series, start, width))
        .collect()
}

fn cut(series: &MagnitudeSeries, start: usize, width: usize) -> SensorWindow {
    let mut data = Vec::with_capacity(MAGNITUDE_CHANNELS * width);
    for ch in &series.channels {
        data.extend_from_slice(&ch[start..start + width]);
    }
    SensorWindow {
        data,
        channels: MAGNITUDE_CHANNELS,
        width,
        standardized: false,
    }
}

/// A one-hot label stored as its hot index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OneHot {
    index: usize,
    len: usize,
}

impl OneHot {
    pub fn new(index: usize, len: usize) -> crate::Result<Self> {
        if index >= len {
            return Err(crate::Error::Index(format!(
                "label {index} outside one-hot width {len}"
            )));
        }
        Ok(OneHot { index, len })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.len];
        v[self.index] = 1.0;
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledWindow {
    pub window: SensorWindow,
    pub identity: OneHot,
    pub activity: OneHot,
    pub trial_index: u32,
    /// Sample offset of the window inside its trial.
    pub offset: usize,
}

impl LabeledWindow {
    pub fn user(&self) -> usize {
        self.identity.index()
    }
}

/// Windows every series whose activity is in `activities`; the activity
/// label is the position inside `activities`. Windows never cross trials.
pub fn label_windows(
    series: &[MagnitudeSeries],
    width: usize,
    stride: usize,
    num_users: usize,
    activities: &[Activity],
) -> crate::Result<Vec<LabeledWindow>> {
    let mut out = Vec::new();
    for s in series {
        let Some(act) = activities.iter().position(|a| *a == s.activity) else {
            continue;
        };
        let identity = OneHot::new(s.user_id, num_users)?;
        let activity = OneHot::new(act, activities.len())?;
        for start in window_offsets(s.len(), width, stride) {
            out.push(LabeledWindow {
                window: cut(s, start, width),
                identity,
                activity,
                trial_index: s.trial_index,
                offset: start,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trial_with(rows: Vec<[f64; 12]>) -> TrialRecord {
        TrialRecord {
            user_id: 0,
            subject_code: 1,
            activity: Activity::Walking,
            trial_index: 7,
            samples: rows,
            sampling_rate: 50.0,
        }
    }

    fn series_of_len(len: usize) -> MagnitudeSeries {
        MagnitudeSeries {
            channels: [
                (0..len).map(|i| i as f64).collect(),
                (0..len).map(|i| 2.0 * i as f64).collect(),
            ],
            user_id: 3,
            activity: Activity::Jogging,
            trial_index: 9,
        }
    }

    #[test]
    fn magnitudes_are_euclidean_norms() {
        let mut a = [0.0; 12];
        a[6] = 3.0;
        a[7] = 4.0;
        a[9] = 1.0;
        a[10] = 2.0;
        a[11] = 2.0;
        let m = compute_magnitudes(&trial_with(vec![a, [0.0; 12]]));
        assert_eq!(m.channels[0], vec![5.0, 0.0]);
        assert_eq!(m.channels[1], vec![3.0, 0.0]);
    }

    #[test]
    fn window_counts() {
        assert_eq!(window(&series_of_len(1000), 128, 10).len(), 88);
        assert_eq!(window(&series_of_len(128), 128, 10).len(), 1);
        assert_eq!(window(&series_of_len(128), 128, 1000).len(), 1);
        assert!(window(&series_of_len(127), 128, 10).is_empty());
    }

    #[test]
    fn window_rows_are_channel_slices() {
        let ws = window(&series_of_len(300), 128, 10);
        let w = &ws[2];
        assert_eq!(w.row(0)[0], 20.0);
        assert_eq!(w.row(1)[127], 2.0 * 147.0);
    }

    #[test]
    fn one_hot_sums_to_one() {
        let h = OneHot::new(3, 24).unwrap();
        let v = h.to_vec();
        assert_eq!(v.iter().sum::<f64>(), 1.0);
        assert!(v.iter().all(|x| *x == 0.0 || *x == 1.0));
        assert!(OneHot::new(24, 24).is_err());
    }

    #[test]
    fn label_windows_skips_excluded_activities() {
        let mut s = series_of_len(200);
        s.activity = Activity::Sitting;
        let out = label_windows(&[s, series_of_len(200)], 128, 10, 24, &Activity::EXPERIMENT).unwrap();
        assert_eq!(out.len(), 8);
        assert!(out.iter().all(|w| w.activity.index() == 3 && w.user() == 3));
    }

    proptest! {
        #[test]
        fn window_count_matches_enumeration(len in 1usize..600, width in 1usize..200, stride in 1usize..50) {
            let mut expected = 0;
            let mut start = 0;
            while start + width <= len {
                expected += 1;
                start += stride;
            }
            prop_assert_eq!(window_offsets(len, width, stride).count(), expected);
        }

        #[test]
        fn magnitude_windows_are_non_negative(vals in proptest::collection::vec(-10.0f64..10.0, 12 * 140)) {
            let rows: Vec<[f64; 12]> = vals.chunks(12).map(|c| c.try_into().unwrap()).collect();
            let m = compute_magnitudes(&trial_with(rows));
            for w in window(&m, 128, 3) {
                prop_assert!(w.data().iter().all(|v| *v >= 0.0));
            }
        }
    }
}
