//! Time-sensitive next-item ranking and return-time prediction.
//!
//! Both predictions read pre-query (`t-`) embeddings from replayed
//! timelines: item scores are the conditional densities of every dimension
//! at the query time, and the expected return time of a pair is the
//! closed-form Rayleigh mean offset from the pair's last relevant time.

use crate::math;
use crate::process::{compatibility, conditional_density, expected_return_time};
use crate::state::Replay;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PredictError {
    /// Query time precedes what the replay has already applied for the
    /// queried entities.
    TimeBeforeFrontier { time: f64, frontier: f64 },
}

impl fmt::Display for PredictError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictError::TimeBeforeFrontier { time, frontier } => {
                write!(f, "query time {time} precedes replay frontier {frontier}")
            }
        }
    }
}

impl core::error::Error for PredictError {}

/// All item scores for one `(user, time)` query, sorted best-first.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRanking {
    pub user: usize,
    pub time: f64,
    /// Conditional density per item id.
    scores: Vec<f64>,
    /// Item ids sorted by descending score, ties by ascending id.
    order: Vec<usize>,
    /// Positional rank (1 = best) per item id; a permutation of 1..=n.
    rank_of: Vec<usize>,
}

impl PredictionRanking {
    fn new(user: usize, time: f64, scores: Vec<f64>) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .expect("scores are finite")
                .then(a.cmp(&b))
        });
        let mut rank_of = alloc::vec![0usize; scores.len()];
        for (pos, &item) in order.iter().enumerate() {
            rank_of[item] = pos + 1;
        }
        PredictionRanking {
            user,
            time,
            scores,
            order,
            rank_of,
        }
    }

    #[inline]
    pub fn num_items(&self) -> usize {
        self.scores.len()
    }

    #[inline]
    pub fn score(&self, item: usize) -> f64 {
        self.scores[item]
    }

    #[inline]
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Positional rank after the deterministic id tie-break (1 = best).
    #[inline]
    pub fn rank_of(&self, item: usize) -> usize {
        self.rank_of[item]
    }

    /// Competition rank: 1 plus the number of strictly better items, so tied
    /// scores share the minimum rank.
    pub fn competition_rank(&self, item: usize) -> usize {
        let s = self.scores[item];
        1 + self.scores.iter().filter(|&&x| x > s).count()
    }

    /// The best `count` item ids.
    pub fn top(&self, count: usize) -> &[usize] {
        &self.order[..count.min(self.order.len())]
    }
}

fn pair_quantities(replay: &Replay, user: usize, item: usize, t: f64) -> (f64, f64) {
    let f = replay.users.before(user, t);
    let g = replay.items.before(item, t);
    let (alpha, _) = compatibility(f, g);
    let t_prime = replay
        .users
        .last_time_before(user, t)
        .max(replay.items.last_time_before(item, t));
    (alpha, t_prime)
}

/// Scores every item for `user` at time `t` by conditional density and
/// ranks them descending (ties broken by ascending item id).
///
/// The replay must already cover all events before `t`; querying earlier
/// than the user's last applied event is an error.
pub fn rank_items(replay: &Replay, user: usize, t: f64) -> Result<PredictionRanking, PredictError> {
    if let Some(frontier) = replay.users.last_time(user) {
        if t < frontier {
            return Err(PredictError::TimeBeforeFrontier { time: t, frontier });
        }
    }
    let n = replay.items.num_entities();
    let scores: Vec<f64> = (0..n)
        .map(|item| {
            let (alpha, t_prime) = pair_quantities(replay, user, item, t);
            conditional_density(alpha, t_prime, t).expect("alpha > 0 and t >= t'")
        })
        .collect();
    Ok(PredictionRanking::new(user, t, scores))
}

/// Expected next interaction time of `(user, item)` evaluated at `t_now`:
/// `t' + sqrt(pi / (2 alpha))` with `alpha` and `t'` taken from the `t_now-`
/// state.
pub fn predict_return_time(
    replay: &Replay,
    user: usize,
    item: usize,
    t_now: f64,
) -> Result<f64, PredictError> {
    let frontier = replay
        .users
        .last_time(user)
        .unwrap_or(0.0)
        .max(replay.items.last_time(item).unwrap_or(0.0));
    if t_now < frontier {
        return Err(PredictError::TimeBeforeFrontier {
            time: t_now,
            frontier,
        });
    }
    let (alpha, t_prime) = pair_quantities(replay, user, item, t_now);
    Ok(expected_return_time(alpha, t_prime).expect("alpha > 0"))
}

/// `predict_return_time` must decrease in alpha; re-exported here for tests
/// and diagnostics that only have the raw quantities.
pub fn return_time_from(alpha: f64, t_prime: f64) -> f64 {
    t_prime + math::sqrt(core::f64::consts::PI / (2.0 * alpha))
}
