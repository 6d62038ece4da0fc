use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Gender, LabeledWindow};
use crate::{Error, Result};

pub const SUBJECT_TEST_USERS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SplitStrategy {
    /// Every window of `test_users` goes to test.
    Subject { test_users: Vec<usize> },
    /// For every user and activity one trial goes to test. Activities not
    /// listed in `held_out` hold out their highest-numbered trial.
    Trial {
        #[serde(default)]
        held_out: Vec<HeldOutTrial>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeldOutTrial {
    /// Activity label index.
    pub activity: usize,
    pub trial: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub strategy: SplitStrategy,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_validation_fraction() -> f64 {
    0.2
}

impl SplitSpec {
    pub fn subject(test_users: Vec<usize>, seed: u64) -> Self {
        SplitSpec {
            strategy: SplitStrategy::Subject { test_users },
            validation_fraction: default_validation_fraction(),
            seed,
        }
    }

    pub fn trial(seed: u64) -> Self {
        SplitSpec {
            strategy: SplitStrategy::Trial {
                held_out: Vec::new(),
            },
            validation_fraction: default_validation_fraction(),
            seed,
        }
    }

    /// Lowest-id two female and two male users; without gender metadata the
    /// four lowest user ids.
    pub fn default_test_users(num_users: usize, genders: Option<&[Gender]>) -> Vec<usize> {
        match genders {
            Some(g) => {
                let pick = |want: Gender| {
                    (0..num_users)
                        .filter(move |u| g.get(*u) == Some(&want))
                        .take(2)
                };
                let mut users: Vec<usize> = pick(Gender::Female).chain(pick(Gender::Male)).collect();
                if users.len() < SUBJECT_TEST_USERS {
                    log::warn!("not enough users of each gender; falling back to lowest ids");
                    users = (0..num_users.min(SUBJECT_TEST_USERS)).collect();
                }
                users.sort_unstable();
                users
            }
            None => (0..num_users.min(SUBJECT_TEST_USERS)).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidSpec(format!(
                "validation_fraction must be in (0,1), got {}",
                self.validation_fraction
            )));
        }
        if let SplitStrategy::Subject { test_users } = &self.strategy {
            let unique: BTreeSet<_> = test_users.iter().collect();
            if test_users.len() != SUBJECT_TEST_USERS || unique.len() != test_users.len() {
                return Err(Error::InvalidSpec(format!(
                    "subject split needs {SUBJECT_TEST_USERS} distinct test users, got {test_users:?}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct DatasetSplit {
    pub train: Vec<LabeledWindow>,
    pub validation: Vec<LabeledWindow>,
    pub test: Vec<LabeledWindow>,
}

/// Partitions windows into train/validation/test. Validation is a seeded
/// random `validation_fraction` of the non-test windows; every window lands
/// in exactly one partition.
pub fn make_split(windows: Vec<LabeledWindow>, spec: &SplitSpec) -> Result<DatasetSplit> {
    spec.validate()?;
    let users: BTreeSet<usize> = windows.iter().map(|w| w.user()).collect();

    let is_test: Vec<bool> = match &spec.strategy {
        SplitStrategy::Subject { test_users } => {
            if let Some(u) = test_users.iter().find(|u| !users.contains(u)) {
                return Err(Error::InvalidSpec(format!("test user {u} not in dataset")));
            }
            windows.iter().map(|w| test_users.contains(&w.user())).collect()
        }
        SplitStrategy::Trial { held_out } => {
            let mut trials: BTreeMap<(usize, usize), BTreeSet<u32>> = BTreeMap::new();
            for w in &windows {
                trials
                    .entry((w.user(), w.activity.index()))
                    .or_default()
                    .insert(w.trial_index);
            }
            let mut chosen: BTreeMap<(usize, usize), u32> = BTreeMap::new();
            for (&(user, act), set) in &trials {
                if set.len() < 2 {
                    return Err(Error::InvalidSpec(format!(
                        "user {user} has a single trial of activity {act}; cannot hold one out"
                    )));
                }
                let trial = match held_out.iter().find(|h| h.activity == act).map(|h| &h.trial) {
                    Some(t) if set.contains(t) => *t,
                    Some(t) => {
                        return Err(Error::InvalidSpec(format!(
                            "held-out trial {t} of activity {act} missing for user {user}"
                        )))
                    }
                    None => *set.iter().next_back().expect("non-empty"),
                };
                chosen.insert((user, act), trial);
            }
            windows
                .iter()
                .map(|w| chosen[&(w.user(), w.activity.index())] == w.trial_index)
                .collect()
        }
    };

    let mut split = DatasetSplit::default();
    let mut pool = Vec::new();
    for (w, test) in windows.into_iter().zip(is_test) {
        if test {
            split.test.push(w);
        } else {
            pool.push(w);
        }
    }

    let n_val = (spec.validation_fraction * pool.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut in_val = vec![false; pool.len()];
    for &i in &order[..n_val] {
        in_val[i] = true;
    }
    for (w, val) in pool.into_iter().zip(in_val) {
        if val {
            split.validation.push(w);
        } else {
            split.train.push(w);
        }
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{OneHot, SensorWindow};

    fn lw(user: usize, act: usize, trial: u32, offset: usize) -> LabeledWindow {
        LabeledWindow {
            window: SensorWindow::new(2, 2, vec![user as f64, act as f64, trial as f64, offset as f64]).unwrap(),
            identity: OneHot::new(user, 24).unwrap(),
            activity: OneHot::new(act, 4).unwrap(),
            trial_index: trial,
            offset,
        }
    }

    /// 24 users, walking trials 7/8/15 and jogging 9/16, 5 windows each.
    fn corpus() -> Vec<LabeledWindow> {
        let mut out = Vec::new();
        for u in 0..24 {
            for (act, trials) in [(2usize, vec![7u32, 8, 15]), (3, vec![9, 16])] {
                for t in trials {
                    for o in 0..5 {
                        out.push(lw(u, act, t, o));
                    }
                }
            }
        }
        out
    }

    fn key(w: &LabeledWindow) -> (usize, usize, u32, usize) {
        (w.user(), w.activity.index(), w.trial_index, w.offset)
    }

    fn assert_partition(all: &[LabeledWindow], s: &DatasetSplit) {
        let mut seen = BTreeSet::new();
        for w in s.train.iter().chain(&s.validation).chain(&s.test) {
            assert!(seen.insert(key(w)), "window in two partitions");
        }
        let expected: BTreeSet<_> = all.iter().map(key).collect();
        assert_eq!(seen, expected);
    }

    #[test]
    fn subject_split_holds_out_four_users() {
        let all = corpus();
        let spec = SplitSpec::subject(vec![0, 1, 5, 9], 3);
        let s = make_split(all.clone(), &spec).unwrap();
        let train_users: BTreeSet<_> = s.train.iter().chain(&s.validation).map(|w| w.user()).collect();
        assert_eq!(train_users.len(), 20);
        assert!(s.test.iter().all(|w| [0, 1, 5, 9].contains(&w.user())));
        assert_partition(&all, &s);
    }

    #[test]
    fn trial_split_holds_out_one_trial_per_activity() {
        let all = corpus();
        let s = make_split(all.clone(), &SplitSpec::trial(1)).unwrap();
        for u in 0..24 {
            let test_trials: BTreeSet<_> = s.test.iter().filter(|w| w.user() == u).map(|w| w.trial_index).collect();
            assert_eq!(test_trials, BTreeSet::from([15, 16]));
            let walking_train: BTreeSet<_> = s
                .train
                .iter()
                .chain(&s.validation)
                .filter(|w| w.user() == u && w.activity.index() == 2)
                .map(|w| w.trial_index)
                .collect();
            assert_eq!(walking_train, BTreeSet::from([7, 8]));
        }
        assert_partition(&all, &s);
    }

    #[test]
    fn explicit_held_out_trial() {
        let mut spec = SplitSpec::trial(1);
        spec.strategy = SplitStrategy::Trial {
            held_out: vec![HeldOutTrial { activity: 2, trial: 7 }],
        };
        let s = make_split(corpus(), &spec).unwrap();
        assert!(s.test.iter().filter(|w| w.activity.index() == 2).all(|w| w.trial_index == 7));
        spec.strategy = SplitStrategy::Trial {
            held_out: vec![HeldOutTrial { activity: 2, trial: 99 }],
        };
        assert!(matches!(make_split(corpus(), &spec), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn validation_fraction_is_exact() {
        let windows: Vec<_> = (0..1000).map(|i| lw(i % 20 + 4, 0, 1, i)).collect();
        let s = make_split(windows, &SplitSpec::subject(vec![0, 1, 2, 3], 0));
        // users 0..3 absent from this corpus
        assert!(matches!(s, Err(Error::InvalidSpec(_))));

        let mut windows: Vec<_> = (0..1000).map(|i| lw(i % 20 + 4, 0, 1, i)).collect();
        windows.extend((0..4).map(|u| lw(u, 0, 1, 5000)));
        let s = make_split(windows, &SplitSpec::subject(vec![0, 1, 2, 3], 0)).unwrap();
        assert_eq!(s.validation.len(), 200);
        assert_eq!(s.train.len(), 800);
        assert_eq!(s.test.len(), 4);
    }

    #[test]
    fn single_trial_activity_is_rejected() {
        let windows = vec![lw(0, 0, 1, 0), lw(0, 0, 1, 1)];
        assert!(matches!(make_split(windows, &SplitSpec::trial(0)), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn split_is_seeded() {
        let a = make_split(corpus(), &SplitSpec::trial(7)).unwrap();
        let b = make_split(corpus(), &SplitSpec::trial(7)).unwrap();
        let c = make_split(corpus(), &SplitSpec::trial(8)).unwrap();
        let keys = |s: &DatasetSplit| s.validation.iter().map(key).collect::<Vec<_>>();
        assert_eq!(keys(&a), keys(&b));
        assert_ne!(keys(&a), keys(&c));
    }

    #[test]
    fn default_test_users_pick_two_of_each_gender() {
        use Gender::*;
        let g = [Male, Male, Female, Male, Female, Female, Male];
        assert_eq!(SplitSpec::default_test_users(7, Some(&g)), vec![0, 1, 2, 4]);
        assert_eq!(SplitSpec::default_test_users(7, None), vec![0, 1, 2, 3]);
    }

    #[test]
    fn invalid_specs() {
        let mut spec = SplitSpec::trial(0);
        spec.validation_fraction = 1.0;
        assert!(spec.validate().is_err());
        assert!(SplitSpec::subject(vec![0, 1, 2], 0).validate().is_err());
        assert!(SplitSpec::subject(vec![0, 1, 2, 2], 0).validate().is_err());
    }
}
