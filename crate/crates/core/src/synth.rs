//! Synthetic stand-in for the MotionSense corpus.
//!
//! Writes the same directory layout (`<act>_<trial>/sub_<k>.csv` with the
//! twelve device-motion columns, plus `data_subjects_info.csv`) so the
//! loader, splits and every later stage run unchanged without the real
//! recordings.
//!
//! Signals are gait-like: each activity has its own cadence, amplitude and
//! harmonic template. Each user adds identity cues spread over the spectrum:
//! a magnitude offset (survives any smoothing), a cadence shift (below
//! 2.5 Hz), and per-user harmonic gains and phases that reach above 2.5 Hz
//! and 5 Hz. Trials add cadence, amplitude and phase jitter plus sensor
//! noise. The numbers are chosen to resemble phone IMU magnitudes, not
//! fitted to any recording.

use std::f64::consts::TAU;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ingest::{Activity, Gender, TrialRecord, FEATURE_COLUMNS, SUBJECT_INFO_FILE};
use crate::nnkernel::mix_seed;
use crate::Result;

/// Trial folders of the MotionSense device-motion release.
pub const TRIAL_FOLDERS: [(Activity, u32); 15] = [
    (Activity::Downstairs, 1),
    (Activity::Downstairs, 2),
    (Activity::Downstairs, 11),
    (Activity::Upstairs, 3),
    (Activity::Upstairs, 4),
    (Activity::Upstairs, 12),
    (Activity::Walking, 7),
    (Activity::Walking, 8),
    (Activity::Walking, 15),
    (Activity::Jogging, 9),
    (Activity::Jogging, 16),
    (Activity::Sitting, 5),
    (Activity::Sitting, 13),
    (Activity::Standing, 6),
    (Activity::Standing, 14),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub users: usize,
    pub sampling_rate: f64,
    /// Samples in trials 1–10 (the long recordings).
    pub long_trial_samples: usize,
    /// Samples in trials 11–16.
    pub short_trial_samples: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users: 24,
            sampling_rate: 50.0,
            long_trial_samples: 1000,
            short_trial_samples: 500,
            seed: 2018,
        }
    }
}

const HARMONICS: usize = 5;

struct ActivityProfile {
    cadence: f64,
    acc_amplitude: f64,
    gyro_amplitude: f64,
    acc_template: [f64; HARMONICS],
    gyro_template: [f64; HARMONICS],
}

fn profile(a: Activity) -> ActivityProfile {
    match a {
        Activity::Downstairs => ActivityProfile {
            cadence: 2.05,
            acc_amplitude: 0.42,
            gyro_amplitude: 1.0,
            acc_template: [1.0, 0.75, 0.45, 0.30, 0.20],
            gyro_template: [0.6, 1.0, 0.35, 0.25, 0.15],
        },
        Activity::Upstairs => ActivityProfile {
            cadence: 1.45,
            acc_amplitude: 0.26,
            gyro_amplitude: 0.8,
            acc_template: [1.0, 0.30, 0.55, 0.15, 0.20],
            gyro_template: [1.0, 0.45, 0.30, 0.20, 0.10],
        },
        Activity::Walking => ActivityProfile {
            cadence: 1.8,
            acc_amplitude: 0.30,
            gyro_amplitude: 1.2,
            acc_template: [1.0, 0.45, 0.20, 0.30, 0.12],
            gyro_template: [0.9, 0.7, 0.25, 0.20, 0.10],
        },
        Activity::Jogging => ActivityProfile {
            cadence: 2.7,
            acc_amplitude: 1.15,
            gyro_amplitude: 2.6,
            acc_template: [1.0, 0.65, 0.30, 0.15, 0.08],
            gyro_template: [1.0, 0.55, 0.30, 0.15, 0.08],
        },
        Activity::Sitting | Activity::Standing => ActivityProfile {
            cadence: 0.3,
            acc_amplitude: 0.01,
            gyro_amplitude: 0.02,
            acc_template: [1.0, 0.2, 0.1, 0.05, 0.02],
            gyro_template: [1.0, 0.2, 0.1, 0.05, 0.02],
        },
    }
}

struct UserProfile {
    /// Magnitude offsets relative to the activity amplitude.
    acc_offset: f64,
    gyro_offset: f64,
    cadence_scale: f64,
    intensity: f64,
    /// Slow body sway: frequency (Hz) and depth relative to the amplitude.
    sway_rate: f64,
    sway_depth: [f64; 2],
    acc_gain: [f64; HARMONICS],
    acc_phase: [f64; HARMONICS],
    gyro_gain: [f64; HARMONICS],
    gyro_phase: [f64; HARMONICS],
    male: bool,
    weight: f64,
    height: f64,
    age: f64,
}

fn user_profile(seed: u64, user: usize) -> UserProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x5553_4552 + user as u64));
    let gains = |rng: &mut ChaCha8Rng| -> [f64; HARMONICS] { std::array::from_fn(|_| rng.gen_range(0.35..1.0)) };
    let phases = |rng: &mut ChaCha8Rng| -> [f64; HARMONICS] { std::array::from_fn(|_| rng.gen_range(0.0..TAU)) };
    let male = user % 24 < 14;
    UserProfile {
        acc_offset: rng.gen_range(0.1..1.5),
        gyro_offset: rng.gen_range(0.1..1.5),
        cadence_scale: 1.0 + rng.gen_range(-0.07..0.07),
        intensity: rng.gen_range(0.8..1.2),
        sway_rate: rng.gen_range(0.15..0.5),
        sway_depth: [rng.gen_range(0.05..0.3), rng.gen_range(0.05..0.3)],
        acc_gain: gains(&mut rng),
        acc_phase: phases(&mut rng),
        gyro_gain: gains(&mut rng),
        gyro_phase: phases(&mut rng),
        male,
        weight: if male { rng.gen_range(65.0..100.0) } else { rng.gen_range(48.0..80.0) },
        height: if male { rng.gen_range(168.0..192.0) } else { rng.gen_range(155.0..178.0) },
        age: rng.gen_range(18.0f64..46.0).round(),
    }
}

/// Unit vector slowly wandering on the sphere.
fn direction(t: f64, rates: [f64; 3], phases: [f64; 3]) -> [f64; 3] {
    let theta = 0.9 + 0.5 * (TAU * rates[0] * t + phases[0]).sin();
    let phi = phases[1] + TAU * rates[1] * t + 0.4 * (TAU * rates[2] * t + phases[2]).sin();
    [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
}

fn trial_rows(cfg: &SynthConfig, user: usize, activity: Activity, trial: u32) -> Vec<[f64; 12]> {
    let u = user_profile(cfg.seed, user);
    let p = profile(activity);
    let key = (user as u64) << 32 | (trial as u64) << 8 | activity as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, key));
    let len = if trial <= 10 { cfg.long_trial_samples } else { cfg.short_trial_samples };
    let noise = Normal::new(0.0, 1.0).expect("unit normal");

    let cadence = p.cadence * u.cadence_scale * (1.0 + rng.gen_range(-0.02..0.02));
    let amp = u.intensity * (1.0 + rng.gen_range(-0.08..0.08));
    let shift: f64 = rng.gen_range(0.0..TAU);
    let jitter: [f64; HARMONICS] = std::array::from_fn(|_| rng.gen_range(-0.25..0.25));
    let drift_phase = rng.gen_range(0.0..TAU);
    let sway_phase = rng.gen_range(0.0..TAU);
    let dir_rates = [rng.gen_range(0.01..0.05), rng.gen_range(0.01..0.04), rng.gen_range(0.05..0.2)];
    let acc_dir_phase: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.0..TAU));
    let gyro_dir_phase: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.0..TAU));
    let att_phase: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.0..TAU));

    let dt = 1.0 / cfg.sampling_rate;
    let mut gait_phase = 0.0;
    let mut rows = Vec::with_capacity(len);
    for i in 0..len {
        let t = i as f64 * dt;
        let f = cadence * (1.0 + 0.02 * (TAU * t / 7.0 + drift_phase).sin());
        gait_phase += TAU * f * dt;

        let sway = (TAU * u.sway_rate * t + sway_phase).sin();
        let mut acc = p.acc_amplitude * (u.acc_offset + u.sway_depth[1] * sway);
        let mut gyro = p.gyro_amplitude * (u.gyro_offset + u.sway_depth[0] * sway);
        for h in 0..HARMONICS {
            let k = (h + 1) as f64;
            acc += p.acc_amplitude
                * amp
                * p.acc_template[h]
                * u.acc_gain[h]
                * (k * (gait_phase + shift) + u.acc_phase[h] + jitter[h]).cos();
            gyro += p.gyro_amplitude
                * amp
                * p.gyro_template[h]
                * u.gyro_gain[h]
                * (k * 0.5 * (gait_phase + shift) + u.gyro_phase[h] + jitter[h]).cos();
        }
        acc += 0.02 * noise.sample(&mut rng);
        gyro += 0.05 * noise.sample(&mut rng);

        let da = direction(t, dir_rates, acc_dir_phase);
        let dg = direction(t, dir_rates, gyro_dir_phase);
        let roll = 0.3 * (TAU * 0.05 * t + att_phase[0]).sin() + 0.05 * (gait_phase).sin();
        let pitch = -1.0 + 0.2 * (TAU * 0.03 * t + att_phase[1]).sin();
        let yaw = 0.5 * (TAU * 0.02 * t + att_phase[2]).sin();
        let gravity = [pitch.cos() * roll.sin(), -pitch.sin(), -pitch.cos() * roll.cos()];
        rows.push([
            roll,
            pitch,
            yaw,
            gravity[0],
            gravity[1],
            gravity[2],
            gyro * dg[0],
            gyro * dg[1],
            gyro * dg[2],
            acc * da[0],
            acc * da[1],
            acc * da[2],
        ]);
    }
    rows
}

/// Generates every trial in memory (users indexed from 0; subject code is
/// `user + 1`).
pub fn generate_trials(cfg: &SynthConfig) -> Vec<TrialRecord> {
    let mut out = Vec::new();
    for &(activity, trial) in &TRIAL_FOLDERS {
        for user in 0..cfg.users {
            out.push(TrialRecord {
                user_id: user,
                subject_code: user as u32 + 1,
                activity,
                trial_index: trial,
                samples: trial_rows(cfg, user, activity, trial),
                sampling_rate: cfg.sampling_rate,
            });
        }
    }
    out
}

/// Gender of each synthetic user, as written to the subject table.
pub fn subject_genders(cfg: &SynthConfig) -> Vec<Gender> {
    (0..cfg.users)
        .map(|u| if user_profile(cfg.seed, u).male { Gender::Male } else { Gender::Female })
        .collect()
}

/// Writes the corpus under `root` in the MotionSense layout.
pub fn write_corpus(root: &Path, cfg: &SynthConfig) -> Result<()> {
    fs::create_dir_all(root)?;
    for &(activity, trial) in &TRIAL_FOLDERS {
        let dir = root.join(format!("{}_{trial}", activity.code()));
        fs::create_dir_all(&dir)?;
        for user in 0..cfg.users {
            let mut w = BufWriter::new(fs::File::create(dir.join(format!("sub_{}.csv", user + 1)))?);
            writeln!(w, ",{}", FEATURE_COLUMNS.join(","))?;
            for (i, row) in trial_rows(cfg, user, activity, trial).iter().enumerate() {
                write!(w, "{i}")?;
                for v in row {
                    write!(w, ",{v:.6}")?;
                }
                writeln!(w)?;
            }
            w.flush()?;
        }
    }
    let mut info = BufWriter::new(fs::File::create(root.join(SUBJECT_INFO_FILE))?);
    writeln!(info, "code,weight,height,age,gender")?;
    for user in 0..cfg.users {
        let u = user_profile(cfg.seed, user);
        writeln!(info, "{},{:.0},{:.0},{:.0},{}", user + 1, u.weight, u.height, u.age, u8::from(u.male))?;
    }
    info.flush()?;
    Ok(())
}
