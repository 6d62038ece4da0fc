use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Activity, TrialRecord, DEFAULT_SAMPLING_RATE, FEATURE_COLUMNS};
use crate::{exec, Error, Result};

/// Name of the optional per-subject metadata table at the dataset root.
pub const SUBJECT_INFO_FILE: &str = "data_subjects_info.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectInfo {
    pub code: u32,
    pub gender: Gender,
    pub weight: f64,
    pub height: f64,
    pub age: f64,
}

/// All trials of a dataset tree plus per-user metadata when available.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub trials: Vec<TrialRecord>,
    /// Subject codes indexed by dense user id.
    pub subject_codes: Vec<u32>,
    /// Gender per dense user id, if the root carries a subject table.
    pub genders: Option<Vec<Gender>>,
}

impl Corpus {
    pub fn num_users(&self) -> usize {
        self.subject_codes.len()
    }
}

struct TrialFile {
    path: PathBuf,
    activity: Activity,
    trial_index: u32,
    subject_code: u32,
}

fn parse_trial_dir(name: &str) -> Option<(Activity, u32)> {
    let (act, num) = name.split_once('_')?;
    Some((Activity::from_code(act)?, num.parse().ok()?))
}

fn parse_subject_file(name: &str) -> Option<u32> {
    name.strip_prefix("sub_")?.strip_suffix(".csv")?.parse().ok()
}

fn discover(root: &Path) -> Result<Vec<TrialFile>> {
    if !root.is_dir() {
        return Err(Error::MissingData(format!(
            "dataset root {} is not a directory",
            root.display()
        )));
    }
    let mut dirs: Vec<(String, Activity, u32)> = Vec::new();
    for entry in fs::read_dir(root)? {
        let entry = entry?;
        if !entry.file_type()?.is_dir() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some((act, trial)) = parse_trial_dir(&name) {
            dirs.push((name, act, trial));
        }
    }
    dirs.sort_by(|a, b| a.0.cmp(&b.0));

    let mut files = Vec::new();
    for (name, activity, trial_index) in dirs {
        let dir = root.join(&name);
        let mut subs: Vec<(u32, PathBuf)> = Vec::new();
        for entry in fs::read_dir(&dir)? {
            let entry = entry?;
            let fname = entry.file_name().to_string_lossy().into_owned();
            if let Some(code) = parse_subject_file(&fname) {
                subs.push((code, entry.path()));
            }
        }
        subs.sort_by_key(|(code, _)| *code);
        files.extend(subs.into_iter().map(|(subject_code, path)| TrialFile {
            path,
            activity,
            trial_index,
            subject_code,
        }));
    }
    if files.is_empty() {
        return Err(Error::MissingData(format!(
            "no <act>_<trial>/sub_<k>.csv files under {}",
            root.display()
        )));
    }
    Ok(files)
}

fn schema(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Schema {
        file: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn read_samples(path: &Path) -> Result<Vec<[f64; 12]>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| schema(path, 1, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| schema(path, 1, e.to_string()))?
        .clone();
    let mut columns = [0usize; 12];
    for (slot, name) in columns.iter_mut().zip(FEATURE_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| schema(path, 1, format!("missing column `{name}`")))?;
    }

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            schema(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let mut row = [0.0; 12];
        for (value, (&col, name)) in row.iter_mut().zip(columns.iter().zip(FEATURE_COLUMNS)) {
            let cell = record
                .get(col)
                .ok_or_else(|| schema(path, line, format!("missing cell for `{name}`")))?;
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| schema(path, line, format!("non-numeric `{name}` value {cell:?}")))?;
            if !v.is_finite() {
                return Err(schema(path, line, format!("non-finite `{name}` value {cell:?}")));
            }
            *value = v;
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::MissingData(format!("{} has no samples", path.display())));
    }
    Ok(rows)
}

/// Loads every trial under a MotionSense-layout root
/// (`<root>/<act>_<trial>/sub_<k>.csv`).
///
/// Trials are ordered by activity folder name, then subject number. Users
/// are indexed densely from 0 in ascending subject-number order.
pub fn load_trials(root: &Path) -> Result<Vec<TrialRecord>> {
    let files = discover(root)?;
    let codes: BTreeSet<u32> = files.iter().map(|f| f.subject_code).collect();
    let codes: Vec<u32> = codes.into_iter().collect();
    exec::try_map(&files, |f| {
        let samples = read_samples(&f.path)?;
        Ok(TrialRecord {
            user_id: codes.binary_search(&f.subject_code).expect("code indexed"),
            subject_code: f.subject_code,
            activity: f.activity,
            trial_index: f.trial_index,
            samples,
            sampling_rate: DEFAULT_SAMPLING_RATE,
        })
    })
}

/// Reads `data_subjects_info.csv` (`code,weight,height,age,gender`, gender
/// 1 = male, 0 = female) from `root` or its parent, if present.
pub fn load_subject_info(root: &Path) -> Result<Option<Vec<SubjectInfo>>> {
    let candidates = [Some(root.join(SUBJECT_INFO_FILE)), root.parent().map(|p| p.join(SUBJECT_INFO_FILE))];
    let Some(path) = candidates.into_iter().flatten().find(|p| p.exists()) else {
        return Ok(None);
    };
    let mut reader = csv::Reader::from_path(&path).map_err(|e| schema(&path, 1, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| schema(&path, 1, e.to_string()))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| schema(&path, 1, format!("missing column `{name}`")))
    };
    let (c_code, c_w, c_h, c_age, c_gender) =
        (col("code")?, col("weight")?, col("height")?, col("age")?, col("gender")?);
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| schema(&path, 0, e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let num = |c: usize| -> Result<f64> {
            record
                .get(c)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| schema(&path, line, format!("bad value in column {c}")))
        };
        let gender = match num(c_gender)? as i64 {
            0 => Gender::Female,
            1 => Gender::Male,
            g => return Err(schema(&path, line, format!("gender must be 0 or 1, got {g}"))),
        };
        out.push(SubjectInfo {
            code: num(c_code)? as u32,
            gender,
            weight: num(c_w)?,
            height: num(c_h)?,
            age: num(c_age)?,
        });
    }
    Ok(Some(out))
}

/// Loads trials and (optional) subject metadata together.
pub fn load_corpus(root: &Path) -> Result<Corpus> {
    let trials = load_trials(root)?;
    let codes: BTreeSet<u32> = trials.iter().map(|t| t.subject_code).collect();
    let subject_codes: Vec<u32> = codes.into_iter().collect();
    let genders = match load_subject_info(root)? {
        None => None,
        Some(info) => {
            let mut g = Vec::with_capacity(subject_codes.len());
            for code in &subject_codes {
                match info.iter().find(|s| s.code == *code) {
                    Some(s) => g.push(s.gender),
                    None => {
                        log::warn!("subject {code} missing from {SUBJECT_INFO_FILE}");
                        g.clear();
                        break;
                    }
                }
            }
            (g.len() == subject_codes.len()).then_some(g)
        }
    };
    Ok(Corpus {
        trials,
        subject_codes,
        genders,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(with_index: bool) -> String {
        let mut h = String::new();
        if with_index {
            h.push(',');
        }
        h.push_str(&FEATURE_COLUMNS.join(","));
        h
    }

    fn write_trial(root: &Path, dir: &str, sub: u32, rows: usize) {
        let d = root.join(dir);
        fs::create_dir_all(&d).unwrap();
        let mut s = header(true) + "\n";
        for i in 0..rows {
            let vals: Vec<String> = (0..12).map(|c| format!("{}", (i * 12 + c) as f64 * 0.01)).collect();
            s.push_str(&format!("{i},{}\n", vals.join(",")));
        }
        fs::write(d.join(format!("sub_{sub}.csv")), s).unwrap();
    }

    #[test]
    fn empty_directory_is_missing_data() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_trials(dir.path()), Err(Error::MissingData(_))));
        assert!(matches!(
            load_trials(&dir.path().join("nope")),
            Err(Error::MissingData(_))
        ));
    }

    #[test]
    fn loads_and_orders_trials() {
        let dir = tempfile::tempdir().unwrap();
        for d in ["wlk_7", "dws_11", "dws_2"] {
            for sub in [10, 2] {
                write_trial(dir.path(), d, sub, 5);
            }
        }
        let trials = load_trials(dir.path()).unwrap();
        let order: Vec<(Activity, u32, u32)> = trials
            .iter()
            .map(|t| (t.activity, t.trial_index, t.subject_code))
            .collect();
        assert_eq!(
            order,
            vec![
                (Activity::Downstairs, 11, 2),
                (Activity::Downstairs, 11, 10),
                (Activity::Downstairs, 2, 2),
                (Activity::Downstairs, 2, 10),
                (Activity::Walking, 7, 2),
                (Activity::Walking, 7, 10),
            ]
        );
        assert_eq!(trials[0].user_id, 0);
        assert_eq!(trials[1].user_id, 1);
        assert_eq!(trials[0].samples.len(), 5);
        assert_eq!(trials[0].samples[1][0], 0.12);
        assert_eq!(trials, load_trials(dir.path()).unwrap());
    }

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().join("jog_9");
        fs::create_dir_all(&d).unwrap();
        let cols: Vec<&str> = FEATURE_COLUMNS.iter().copied().filter(|c| *c != "gravity.y").collect();
        let row = vec!["0.5"; 11].join(",");
        fs::write(d.join("sub_1.csv"), format!("{}\n{row}\n", cols.join(","))).unwrap();
        match load_trials(dir.path()) {
            Err(Error::Schema { message, .. }) => assert!(message.contains("gravity.y"), "{message}"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_and_nan_cells_are_rejected_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().join("ups_3");
        fs::create_dir_all(&d).unwrap();
        let good = vec!["0.5"; 12].join(",");
        let mut bad = vec!["0.5"; 12];
        bad[4] = "abc";
        fs::write(
            d.join("sub_1.csv"),
            format!("{}\n{good}\n{}\n", header(false), bad.join(",")),
        )
        .unwrap();
        match load_trials(dir.path()) {
            Err(Error::Schema { line, file, .. }) => {
                assert_eq!(line, 3);
                assert!(file.ends_with("sub_1.csv"));
            }
            other => panic!("expected schema error, got {other:?}"),
        }
        let mut nan = vec!["0.5"; 12];
        nan[0] = "NaN";
        fs::write(d.join("sub_1.csv"), format!("{}\n{}\n", header(false), nan.join(","))).unwrap();
        assert!(matches!(load_trials(dir.path()), Err(Error::Schema { line: 2, .. })));
    }

    #[test]
    fn subject_info_maps_genders() {
        let dir = tempfile::tempdir().unwrap();
        write_trial(dir.path(), "wlk_7", 1, 3);
        write_trial(dir.path(), "wlk_7", 2, 3);
        fs::write(
            dir.path().join(SUBJECT_INFO_FILE),
            "code,weight,height,age,gender\n1,102,188,46,1\n2,72,180,28,0\n",
        )
        .unwrap();
        let corpus = load_corpus(dir.path()).unwrap();
        assert_eq!(corpus.genders, Some(vec![Gender::Male, Gender::Female]));
        assert_eq!(corpus.num_users(), 2);
    }
}
