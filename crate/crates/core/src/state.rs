//! Piecewise-constant user/item embeddings and their event-driven updates.
//!
//! Embeddings start at zero and change only when an entity participates in
//! an event. Both sides of an update read the *pre-event* value of the other
//! side, so an event's user and item updates commute. [`EmbeddingTimeline`]
//! keeps every post-event snapshot and answers point-in-time queries with a
//! right-continuous step function.

use crate::event::{Event, EventLog};
use crate::params::ModelParams;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum StateError {
    /// The event time precedes an involved entity's last update time.
    OutOfOrderEvent {
        time: f64,
        user_frontier: f64,
        item_frontier: f64,
    },
    /// Event context length disagrees with the parameter context dimension.
    ContextMismatch { expected: usize, got: usize },
}

impl fmt::Display for StateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateError::OutOfOrderEvent {
                time,
                user_frontier,
                item_frontier,
            } => write!(
                f,
                "event at t={time} precedes an entity frontier (user {user_frontier}, item {item_frontier})"
            ),
            StateError::ContextMismatch { expected, got } => {
                write!(f, "context length {got}, parameters expect {expected}")
            }
        }
    }
}

impl core::error::Error for StateError {}

/// Current embeddings plus per-entity last-update times.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicState {
    k: usize,
    users: Vec<f64>,
    items: Vec<f64>,
    last_user_time: Vec<f64>,
    last_item_time: Vec<f64>,
}

impl DynamicState {
    /// All embeddings zero, all last-update times zero.
    pub fn zeros(num_users: usize, num_items: usize, k: usize) -> Self {
        DynamicState {
            k,
            users: vec![0.0; num_users * k],
            items: vec![0.0; num_items * k],
            last_user_time: vec![0.0; num_users],
            last_item_time: vec![0.0; num_items],
        }
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn num_users(&self) -> usize {
        self.last_user_time.len()
    }

    #[inline]
    pub fn num_items(&self) -> usize {
        self.last_item_time.len()
    }

    #[inline]
    pub fn user_embedding(&self, user: usize) -> &[f64] {
        &self.users[user * self.k..(user + 1) * self.k]
    }

    #[inline]
    pub fn item_embedding(&self, item: usize) -> &[f64] {
        &self.items[item * self.k..(item + 1) * self.k]
    }

    #[inline]
    pub fn last_user_time(&self, user: usize) -> f64 {
        self.last_user_time[user]
    }

    #[inline]
    pub fn last_item_time(&self, item: usize) -> f64 {
        self.last_item_time[item]
    }

    /// Applies one event: both embedding rows are recomputed from the values
    /// in force just before the event (the other rows are untouched), then
    /// the two last-update times move to the event time.
    pub fn apply_event(&mut self, params: &ModelParams, e: &Event) -> Result<(), StateError> {
        debug_assert_eq!(params.k(), self.k);
        let k = self.k;
        let (u, i) = e.dim();
        let user_frontier = self.last_user_time[u];
        let item_frontier = self.last_item_time[i];
        if e.time < user_frontier || e.time < item_frontier {
            return Err(StateError::OutOfOrderEvent {
                time: e.time,
                user_frontier,
                item_frontier,
            });
        }
        let q = e.context.as_deref();
        let got = q.map_or(0, <[f64]>::len);
        if got != params.context_dim() {
            return Err(StateError::ContextMismatch {
                expected: params.context_dim(),
                got,
            });
        }

        // Snapshot both pre-event rows before writing either.
        let f_old: Vec<f64> = self.user_embedding(u).to_vec();
        let g_old: Vec<f64> = self.item_embedding(i).to_vec();

        let mut pre = vec![0.0; k];
        params
            .user
            .pre_activation(k, e.time - user_frontier, &f_old, &g_old, q, &mut pre);
        for (dst, &p) in self.users[u * k..(u + 1) * k].iter_mut().zip(&pre) {
            *dst = params.activation.apply(p);
        }
        params
            .item
            .pre_activation(k, e.time - item_frontier, &g_old, &f_old, q, &mut pre);
        for (dst, &p) in self.items[i * k..(i + 1) * k].iter_mut().zip(&pre) {
            *dst = params.activation.apply(p);
        }

        self.last_user_time[u] = e.time;
        self.last_item_time[i] = e.time;
        Ok(())
    }
}

#[cfg(test)]
impl DynamicState {
    pub(crate) fn set_user_row(&mut self, user: usize, values: &[f64]) {
        self.users[user * self.k..(user + 1) * self.k].copy_from_slice(values);
    }

    pub(crate) fn set_item_row(&mut self, item: usize, values: &[f64]) {
        self.items[item * self.k..(item + 1) * self.k].copy_from_slice(values);
    }
}

/// Append-only record of one entity class's post-event embedding snapshots.
///
/// Queries are right-continuous: `at(x, t)` returns the snapshot taken at the
/// greatest recorded time `<= t` (the zero vector before any event), while
/// `before(x, t)` gives the pre-event value at `t-`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTimeline {
    k: usize,
    zero: Vec<f64>,
    tracks: Vec<Vec<Snapshot>>,
}

#[derive(Debug, Clone, PartialEq)]
struct Snapshot {
    time: f64,
    values: Vec<f64>,
}

impl EmbeddingTimeline {
    pub fn new(entities: usize, k: usize) -> Self {
        EmbeddingTimeline {
            k,
            zero: vec![0.0; k],
            tracks: vec![Vec::new(); entities],
        }
    }

    #[inline]
    pub fn num_entities(&self) -> usize {
        self.tracks.len()
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    /// Records a post-event snapshot. A second snapshot at an existing time
    /// replaces it, so simultaneous events leave one (final) value per time.
    pub fn record(&mut self, entity: usize, time: f64, values: &[f64]) {
        debug_assert_eq!(values.len(), self.k);
        let track = &mut self.tracks[entity];
        if let Some(last) = track.last_mut() {
            debug_assert!(time >= last.time, "timeline times must be nondecreasing");
            if last.time == time {
                last.values.copy_from_slice(values);
                return;
            }
        }
        track.push(Snapshot {
            time,
            values: values.to_vec(),
        });
    }

    /// Embedding in force at time `t` (right-continuous).
    pub fn at(&self, entity: usize, t: f64) -> &[f64] {
        let track = &self.tracks[entity];
        let idx = track.partition_point(|s| s.time <= t);
        if idx == 0 {
            &self.zero
        } else {
            &track[idx - 1].values
        }
    }

    /// Embedding just before time `t` (the `t-` value).
    pub fn before(&self, entity: usize, t: f64) -> &[f64] {
        let track = &self.tracks[entity];
        let idx = track.partition_point(|s| s.time < t);
        if idx == 0 {
            &self.zero
        } else {
            &track[idx - 1].values
        }
    }

    /// Last snapshot time strictly before `t`; 0 when there is none.
    pub fn last_time_before(&self, entity: usize, t: f64) -> f64 {
        let track = &self.tracks[entity];
        let idx = track.partition_point(|s| s.time < t);
        if idx == 0 {
            0.0
        } else {
            track[idx - 1].time
        }
    }

    /// Time of the entity's most recent snapshot, if any.
    pub fn last_time(&self, entity: usize) -> Option<f64> {
        self.tracks[entity].last().map(|s| s.time)
    }

    pub fn snapshot_count(&self, entity: usize) -> usize {
        self.tracks[entity].len()
    }
}

/// Replayed log: final state plus the full snapshot history of both sides.
#[derive(Debug, Clone)]
pub struct Replay {
    pub state: DynamicState,
    pub users: EmbeddingTimeline,
    pub items: EmbeddingTimeline,
}

impl Replay {
    pub fn empty(num_users: usize, num_items: usize, k: usize) -> Self {
        Replay {
            state: DynamicState::zeros(num_users, num_items, k),
            users: EmbeddingTimeline::new(num_users, k),
            items: EmbeddingTimeline::new(num_items, k),
        }
    }

    /// Applies one more event and records both post-event snapshots.
    pub fn apply(&mut self, params: &ModelParams, e: &Event) -> Result<(), StateError> {
        self.state.apply_event(params, e)?;
        self.users
            .record(e.user, e.time, self.state.user_embedding(e.user));
        self.items
            .record(e.item, e.time, self.state.item_embedding(e.item));
        Ok(())
    }
}

/// Replays every event of `log` in order, recording all snapshots.
pub fn replay(log: &EventLog, params: &ModelParams) -> Result<Replay, StateError> {
    let mut out = Replay::empty(log.num_users(), log.num_items(), params.k());
    for e in log.events() {
        out.apply(params, e)?;
    }
    Ok(out)
}
