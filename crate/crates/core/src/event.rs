//! Ordered interaction event streams and their per-user / per-item views.
//!
//! An [`EventLog`] is the immutable input to everything else: replay,
//! training, and evaluation all walk the same globally time-ordered list of
//! user-item interactions. Times are wall-clock hours stored as `f64`.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;

/// A single timestamped user-item interaction.
///
/// `context` is optional per-event side information (e.g. a review
/// embedding); within one log either every event carries a context vector of
/// the same length or none does.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub user: usize,
    pub item: usize,
    /// Event time in hours, nonnegative.
    pub time: f64,
    pub context: Option<Vec<f64>>,
}

impl Event {
    pub fn new(user: usize, item: usize, time: f64) -> Self {
        Event {
            user,
            item,
            time,
            context: None,
        }
    }

    pub fn with_context(user: usize, item: usize, time: f64, context: Vec<f64>) -> Self {
        Event {
            user,
            item,
            time,
            context: Some(context),
        }
    }

    /// The point-process dimension this event lives on.
    #[inline]
    pub fn dim(&self) -> (usize, usize) {
        (self.user, self.item)
    }
}

/// Validation failures when building or splitting an [`EventLog`].
#[derive(Debug, Clone, PartialEq)]
pub enum EventError {
    /// `time` is negative or not finite.
    InvalidTime { index: usize, time: f64 },
    UserOutOfRange {
        index: usize,
        user: usize,
        users: usize,
    },
    ItemOutOfRange {
        index: usize,
        item: usize,
        items: usize,
    },
    /// Either a mix of with/without context, or differing lengths.
    InconsistentContext { index: usize },
    /// Explicit horizon precedes the last event time.
    HorizonBeforeLastEvent { horizon: f64, last: f64 },
    /// Split proportion outside (0, 1).
    InvalidProportion(f64),
}

impl fmt::Display for EventError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventError::InvalidTime { index, time } => {
                write!(f, "event {index}: invalid time {time}")
            }
            EventError::UserOutOfRange { index, user, users } => {
                write!(f, "event {index}: user id {user} out of range (m={users})")
            }
            EventError::ItemOutOfRange { index, item, items } => {
                write!(f, "event {index}: item id {item} out of range (n={items})")
            }
            EventError::InconsistentContext { index } => {
                write!(f, "event {index}: inconsistent context dimension")
            }
            EventError::HorizonBeforeLastEvent { horizon, last } => {
                write!(f, "horizon {horizon} precedes last event time {last}")
            }
            EventError::InvalidProportion(p) => {
                write!(f, "split proportion {p} outside (0, 1)")
            }
        }
    }
}

impl core::error::Error for EventError {}

/// An immutable, time-ordered interaction log over `m` users and `n` items
/// observed on the window `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    events: Vec<Event>,
    users: usize,
    items: usize,
    context_dim: usize,
    horizon: f64,
}

impl EventLog {
    /// Validates and time-orders `events`; the horizon defaults to the last
    /// event time (0 for an empty log).
    ///
    /// Sorting is stable, so simultaneous events keep their input order and
    /// are processed sequentially in that order downstream.
    pub fn new(events: Vec<Event>, users: usize, items: usize) -> Result<Self, EventError> {
        Self::build(events, users, items, None)
    }

    /// Like [`EventLog::new`] but with an explicit observation horizon `T`.
    pub fn with_horizon(
        events: Vec<Event>,
        users: usize,
        items: usize,
        horizon: f64,
    ) -> Result<Self, EventError> {
        Self::build(events, users, items, Some(horizon))
    }

    fn build(
        mut events: Vec<Event>,
        users: usize,
        items: usize,
        horizon: Option<f64>,
    ) -> Result<Self, EventError> {
        let context_dim = match events.first().map(|e| &e.context) {
            Some(Some(q)) => q.len(),
            _ => 0,
        };
        for (index, e) in events.iter().enumerate() {
            if !e.time.is_finite() || e.time < 0.0 {
                return Err(EventError::InvalidTime {
                    index,
                    time: e.time,
                });
            }
            if e.user >= users {
                return Err(EventError::UserOutOfRange {
                    index,
                    user: e.user,
                    users,
                });
            }
            if e.item >= items {
                return Err(EventError::ItemOutOfRange {
                    index,
                    item: e.item,
                    items,
                });
            }
            let this_dim = e.context.as_ref().map_or(0, Vec::len);
            let consistent = match &e.context {
                Some(q) => q.len() == context_dim && !q.is_empty(),
                None => context_dim == 0,
            };
            if !consistent || this_dim != context_dim {
                return Err(EventError::InconsistentContext { index });
            }
        }
        // Stable: ties keep file/input order.
        events.sort_by(|a, b| a.time.partial_cmp(&b.time).expect("times validated finite"));
        let last = events.last().map_or(0.0, |e| e.time);
        let horizon = match horizon {
            Some(h) => {
                if !h.is_finite() || h < last {
                    return Err(EventError::HorizonBeforeLastEvent { horizon: h, last });
                }
                h
            }
            None => last,
        };
        Ok(EventLog {
            events,
            users,
            items,
            context_dim,
            horizon,
        })
    }

    #[inline]
    pub fn events(&self) -> &[Event] {
        &self.events
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.events.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    #[inline]
    pub fn num_users(&self) -> usize {
        self.users
    }

    #[inline]
    pub fn num_items(&self) -> usize {
        self.items
    }

    #[inline]
    pub fn context_dim(&self) -> usize {
        self.context_dim
    }

    /// Observation window end `T`, in hours.
    #[inline]
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Per-user projection, preserving global order.
    pub fn user_events(&self, user: usize) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.user == user)
    }

    /// Per-item projection, preserving global order.
    pub fn item_events(&self, item: usize) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.item == item)
    }

    /// The set of (user, item) dimensions with at least one event.
    pub fn distinct_dims(&self) -> BTreeSet<(usize, usize)> {
        self.events.iter().map(Event::dim).collect()
    }

    /// Splits on the threshold `horizon * p`: events with `time <= T*p` form
    /// the training log (horizon `T*p`), the rest the test log (horizon `T`).
    pub fn split_by_proportion(&self, p: f64) -> Result<(EventLog, EventLog), EventError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(EventError::InvalidProportion(p));
        }
        let threshold = self.horizon * p;
        let boundary = self.events.partition_point(|e| e.time <= threshold);
        let train = EventLog {
            events: self.events[..boundary].to_vec(),
            users: self.users,
            items: self.items,
            context_dim: self.context_dim,
            horizon: threshold,
        };
        let test = EventLog {
            events: self.events[boundary..].to_vec(),
            users: self.users,
            items: self.items,
            context_dim: self.context_dim,
            horizon: self.horizon,
        };
        Ok((train, test))
    }

    /// Breakpoints of the `(user, item)` intensity inside `[start, end]`:
    /// `start`, every in-window event time involving `user` or `item`, and
    /// `end`, deduplicated and strictly increasing.
    pub fn relevant_times(&self, user: usize, item: usize, start: f64, end: f64) -> Vec<f64> {
        debug_assert!(start <= end);
        let mut times = Vec::new();
        times.push(start);
        for e in &self.events {
            if e.time < start {
                continue;
            }
            if e.time > end {
                break;
            }
            if e.user == user || e.item == item {
                times.push(e.time);
            }
        }
        times.push(end);
        times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
        times.dedup();
        times
    }
}
