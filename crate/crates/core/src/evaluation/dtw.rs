use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nnkernel::mix_seed;
use crate::{exec, Error, Result};

/// DTW with absolute-difference cost and steps (1,0), (0,1), (1,1).
pub fn dtw_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::DegenerateInput("DTW needs non-empty series".into()));
    }
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for &x in a {
        cur[0] = f64::INFINITY;
        for j in 1..=m {
            let best = prev[j].min(cur[j - 1]).min(prev[j - 1]);
            cur[j] = (x - b[j - 1]).abs() + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m])
}

/// One window prepared for rank computation.
#[derive(Clone, Debug, PartialEq)]
pub struct RankWindow {
    pub activity: usize,
    /// Identifies the raw source window, so a transformed window can be
    /// paired with its own origin.
    pub key: u64,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankResult {
    pub users: Vec<usize>,
    pub per_user: Vec<usize>,
    pub mean_rank: f64,
    /// Population variance over users.
    pub rank_variance: f64,
}

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &'a [RankWindow], activity: usize) -> &'a RankWindow {
    let same: Vec<&RankWindow> = pool.iter().filter(|w| w.activity == activity).collect();
    if same.is_empty() {
        pool.choose(rng).expect("non-empty pool")
    } else {
        same.choose(rng).expect("non-empty")
    }
}

/// For every user `k`, the mean DTW distance from `sample_count` of its
/// transformed windows to raw windows of each user `l`; the rank of `k` is
/// the number of other users strictly closer than `k` itself.
///
/// Pairs with `l = k` use the raw source of each transformed window when it
/// exists; other pairs are drawn at random among raw windows of the same
/// activity.
pub fn dtw_rank(
    transformed: &BTreeMap<usize, Vec<RankWindow>>,
    raw: &BTreeMap<usize, Vec<RankWindow>>,
    sample_count: usize,
    seed: u64,
) -> Result<RankResult> {
    if sample_count == 0 {
        return Err(Error::InsufficientData("sample_count must be positive".into()));
    }
    let users: Vec<usize> = transformed.keys().copied().collect();
    if users.len() < 2 {
        return Err(Error::InsufficientData("rank needs at least two users".into()));
    }
    for u in &users {
        if transformed[u].is_empty() || raw.get(u).is_none_or(|r| r.is_empty()) {
            return Err(Error::InsufficientData(format!("user {u} has no windows in both sets")));
        }
    }
    let per_user = exec::try_map(&users, |&k| -> Result<usize> {
        let own_raw: BTreeMap<u64, &RankWindow> = raw[&k].iter().map(|w| (w.key, w)).collect();
        let mut dist = Vec::with_capacity(users.len());
        for &l in &users {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, (k as u64) << 32 | l as u64));
            let mut total = 0.0;
            for _ in 0..sample_count {
                let q = transformed[&k].choose(&mut rng).expect("non-empty");
                let r = match (l == k, own_raw.get(&q.key)) {
                    (true, Some(w)) => *w,
                    _ => pick(&mut rng, &raw[&l], q.activity),
                };
                total += dtw_distance(&q.values, &r.values)?;
            }
            dist.push(total / sample_count as f64);
        }
        let own = dist[users.iter().position(|&u| u == k).expect("present")];
        Ok(dist.iter().filter(|&&d| d < own).count())
    })?;
    let n = per_user.len() as f64;
    let mean_rank = per_user.iter().sum::<usize>() as f64 / n;
    let rank_variance = per_user.iter().map(|&r| (r as f64 - mean_rank).powi(2)).sum::<f64>() / n;
    Ok(RankResult {
        users,
        per_user,
        mean_rank,
        rank_variance,
    })
}
