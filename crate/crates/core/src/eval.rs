//! Evaluation protocol: mean average rank, time MAE, per-bin and
//! recurring-subset breakdowns, and multi-split sweeps.
//!
//! Test events are scored strictly in order with teacher forcing: each event
//! is ranked (and its return time predicted) from the state built by all
//! *earlier* ground-truth events, then applied to the state itself. The true
//! item's rank uses competition ranking, so tied scores share the minimum
//! rank. Time predictions are only scored for pairs with at least one prior
//! event; cold pairs are counted and skipped.

use crate::event::EventLog;
use crate::math;
use crate::params::ModelParams;
use crate::predict::{predict_return_time, rank_items, PredictError};
use crate::state::{replay, Replay, StateError};
use crate::train::{train, TrainConfig, TrainError};
use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Number of equal-width time windows in the per-bin breakdown.
pub const TIME_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    /// Train and test logs disagree on (m, n, d).
    MismatchedLogs,
    State(StateError),
    Predict(PredictError),
    Train(TrainError),
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::MismatchedLogs => {
                write!(f, "train and test logs disagree on users/items/context")
            }
            EvalError::State(e) => write!(f, "state error: {e}"),
            EvalError::Predict(e) => write!(f, "prediction error: {e}"),
            EvalError::Train(e) => write!(f, "training error: {e}"),
        }
    }
}

impl core::error::Error for EvalError {}

impl From<StateError> for EvalError {
    fn from(e: StateError) -> Self {
        EvalError::State(e)
    }
}

impl From<PredictError> for EvalError {
    fn from(e: PredictError) -> Self {
        EvalError::Predict(e)
    }
}

impl From<TrainError> for EvalError {
    fn from(e: TrainError) -> Self {
        EvalError::Train(e)
    }
}

/// Per-category tallies of one evaluation pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalCounts {
    /// Test events scored for item ranking.
    pub ranked: usize,
    /// Test events scored for time prediction.
    pub timed: usize,
    /// Test events skipped for time prediction (no prior event on the pair).
    pub cold_pairs_skipped: usize,
    /// Test events whose dimension also appears in the training log.
    pub recurring: usize,
}

/// Aggregated evaluation results. `mar` and `mae_hours` are 0 when the
/// corresponding count is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// Mean rank of the true item over scored test events (1 is perfect).
    pub mar: f64,
    /// Mean absolute error between predicted and true times, hours.
    pub mae_hours: f64,
    /// MAR per equal-width time bin over the test span (0 for empty bins).
    pub per_bin_mar: Vec<f64>,
    pub per_bin_count: Vec<usize>,
    /// MAR/MAE restricted to dimensions seen in training.
    pub recurring_mar: f64,
    pub recurring_mae: f64,
    pub counts: EvalCounts,
}

impl Metrics {
    pub fn empty() -> Self {
        Metrics {
            mar: 0.0,
            mae_hours: 0.0,
            per_bin_mar: vec![0.0; TIME_BINS],
            per_bin_count: vec![0; TIME_BINS],
            recurring_mar: 0.0,
            recurring_mae: 0.0,
            counts: EvalCounts::default(),
        }
    }
}

/// Per-event record for the optional detail dump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventDetail {
    pub user: usize,
    pub time: f64,
    pub true_item: usize,
    /// Competition rank of the true item at the event time.
    pub rank: usize,
    /// Predicted return time; `None` for cold pairs.
    pub predicted_time: Option<f64>,
}

fn bin_index(t: f64, lo: f64, hi: f64) -> usize {
    if hi <= lo {
        return 0;
    }
    let idx = math::floor((t - lo) / (hi - lo) * TIME_BINS as f64) as usize;
    idx.min(TIME_BINS - 1)
}

/// Replays `train_log`, then walks `test_log` in order: ranks the true item
/// at its event time, predicts the pair's return time (when the pair has
/// history), and only then applies the true event (teacher forcing).
pub fn evaluate(
    train_log: &EventLog,
    test_log: &EventLog,
    params: &ModelParams,
) -> Result<Metrics, EvalError> {
    Ok(evaluate_detailed(train_log, test_log, params)?.0)
}

/// Like [`evaluate`] but also returns one [`EventDetail`] per test event.
pub fn evaluate_detailed(
    train_log: &EventLog,
    test_log: &EventLog,
    params: &ModelParams,
) -> Result<(Metrics, Vec<EventDetail>), EvalError> {
    if train_log.num_users() != test_log.num_users()
        || train_log.num_items() != test_log.num_items()
        || train_log.context_dim() != test_log.context_dim()
    {
        return Err(EvalError::MismatchedLogs);
    }
    if test_log.is_empty() {
        return Ok((Metrics::empty(), Vec::new()));
    }

    let mut rep: Replay = replay(train_log, params)?;
    let train_dims = train_log.distinct_dims();
    let mut seen_dims: BTreeSet<(usize, usize)> = train_dims.clone();

    let lo = test_log.events().first().expect("nonempty").time;
    let hi = test_log.events().last().expect("nonempty").time;

    let mut details = Vec::with_capacity(test_log.len());
    let mut counts = EvalCounts::default();
    let mut rank_sum = 0.0;
    let mut mae_sum = 0.0;
    let mut bin_rank_sum = [0.0; TIME_BINS];
    let mut bin_count = vec![0usize; TIME_BINS];
    let mut rec_rank_sum = 0.0;
    let mut rec_mae_sum = 0.0;
    let mut rec_timed = 0usize;

    for e in test_log.events() {
        let ranking = rank_items(&rep, e.user, e.time)?;
        let rank = ranking.competition_rank(e.item);
        counts.ranked += 1;
        rank_sum += rank as f64;
        let b = bin_index(e.time, lo, hi);
        bin_rank_sum[b] += rank as f64;
        bin_count[b] += 1;

        let recurring = train_dims.contains(&e.dim());
        if recurring {
            counts.recurring += 1;
            rec_rank_sum += rank as f64;
        }

        let predicted_time = if seen_dims.contains(&e.dim()) {
            let predicted = predict_return_time(&rep, e.user, e.item, e.time)?;
            counts.timed += 1;
            let err = math::abs(predicted - e.time);
            mae_sum += err;
            if recurring {
                rec_timed += 1;
                rec_mae_sum += err;
            }
            Some(predicted)
        } else {
            counts.cold_pairs_skipped += 1;
            None
        };

        details.push(EventDetail {
            user: e.user,
            time: e.time,
            true_item: e.item,
            rank,
            predicted_time,
        });

        // Teacher forcing: the true event enters the state only after scoring.
        rep.apply(params, e)?;
        seen_dims.insert(e.dim());
    }

    let per_bin_mar = bin_rank_sum
        .iter()
        .zip(&bin_count)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let metrics = Metrics {
        mar: if counts.ranked > 0 {
            rank_sum / counts.ranked as f64
        } else {
            0.0
        },
        mae_hours: if counts.timed > 0 {
            mae_sum / counts.timed as f64
        } else {
            0.0
        },
        per_bin_mar,
        per_bin_count: bin_count,
        recurring_mar: if counts.recurring > 0 {
            rec_rank_sum / counts.recurring as f64
        } else {
            0.0
        },
        recurring_mae: if rec_timed > 0 {
            rec_mae_sum / rec_timed as f64
        } else {
            0.0
        },
        counts,
    };
    Ok((metrics, details))
}

/// One split of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutcome {
    pub proportion: f64,
    pub train_events: usize,
    pub test_events: usize,
    pub metrics: Metrics,
}

/// All splits of a sweep plus unweighted means over nonempty splits.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub splits: Vec<SplitOutcome>,
    pub mean_mar: f64,
    pub mean_mae: f64,
}

/// Trains and evaluates once per split proportion: the log is cut at
/// `horizon * p`, a model is trained on the earlier part and scored on the
/// rest.
pub fn sweep_splits(
    log: &EventLog,
    cfg: &TrainConfig,
    proportions: &[f64],
) -> Result<SweepReport, EvalError> {
    let mut splits = Vec::with_capacity(proportions.len());
    let mut mar_sum = 0.0;
    let mut mae_sum = 0.0;
    let mut scored = 0usize;
    for &p in proportions {
        let (train_log, test_log) = log
            .split_by_proportion(p)
            .map_err(|_| EvalError::MismatchedLogs)?;
        let outcome = train(&train_log, cfg)?;
        let metrics = evaluate(&train_log, &test_log, &outcome.params)?;
        if metrics.counts.ranked > 0 {
            mar_sum += metrics.mar;
            mae_sum += metrics.mae_hours;
            scored += 1;
        }
        splits.push(SplitOutcome {
            proportion: p,
            train_events: train_log.len(),
            test_events: test_log.len(),
            metrics,
        });
    }
    let denom = scored.max(1) as f64;
    Ok(SweepReport {
        splits,
        mean_mar: mar_sum / denom,
        mean_mae: mae_sum / denom,
    })
}
