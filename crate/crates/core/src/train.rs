//! Likelihood objective over sliding windows and the Adam training loop.
//!
//! The joint negative log-likelihood of a window couples one log-intensity
//! term per happened event with the survival mass of every user-item
//! dimension over the window span. Full enumeration of `m * n` dimensions is
//! wasteful for sparse logs, so the trainer keeps the dimensions that have
//! events and samples `C` of the remaining ones without replacement,
//! optionally rescaling the sampled part so the estimator stays unbiased.

use crate::event::{Event, EventLog};
use crate::graph::{build_window_graph, GraphError, SurvivalDim};
use crate::math;
use crate::params::{Activation, ModelParams};
use crate::state::{replay, DynamicState, StateError};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Events per sliding window (M >= 1).
    pub window_size: usize,
    /// Survival dimensions sampled per window; `None` picks five times the
    /// number of distinct event dimensions in the window.
    pub nce_samples: Option<usize>,
    /// Rescale sampled survival mass by (non-event dims / C) so its
    /// expectation matches full enumeration.
    pub scale_survival: bool,
    pub learning_rate: f64,
    /// Global gradient-norm ceiling.
    pub clip_norm: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Embedding dimension.
    pub k: usize,
    pub activation: Activation,
}

impl TrainConfig {
    pub fn new(k: usize) -> Self {
        TrainConfig {
            window_size: 64,
            nce_samples: None,
            scale_survival: true,
            learning_rate: 1e-3,
            clip_norm: 5.0,
            epochs: 1,
            seed: 0,
            k,
            activation: Activation::Tanh,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.window_size < 1 {
            return Err(TrainError::InvalidConfig("window_size must be >= 1"));
        }
        if self.learning_rate.is_nan() || self.learning_rate < 0.0 {
            return Err(TrainError::InvalidConfig("learning_rate must be >= 0"));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(TrainError::InvalidConfig("clip_norm must be > 0"));
        }
        if self.epochs < 1 {
            return Err(TrainError::InvalidConfig("epochs must be >= 1"));
        }
        if self.k < 1 {
            return Err(TrainError::InvalidConfig("k must be >= 1"));
        }
        Ok(())
    }
}

/// The two halves of the window objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    /// `-sum log lambda` over happened events.
    pub event_term: f64,
    /// Survival mass of monitored dimensions (always >= 0).
    pub survival_term: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn zero() -> Self {
        LossBreakdown {
            event_term: 0.0,
            survival_term: 0.0,
            total: 0.0,
        }
    }
}

/// One row of the training trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowRecord {
    pub window: usize,
    pub event_term: f64,
    pub survival_term: f64,
    pub total: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    /// Clamped inner products encountered in this window's graph.
    pub clip_events: usize,
}

/// Per-window loss trace plus run-level counters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub windows: Vec<WindowRecord>,
    /// Observed events whose intensity gap collapsed to zero (ties).
    pub degenerate_gaps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    EmptyLog,
    InvalidConfig(&'static str),
    /// A sampled survival dimension collides with an event dimension.
    SampledEventDim {
        user: usize,
        item: usize,
    },
    /// Non-finite loss or gradient; the trace up to the failure is attached.
    NonFinite {
        window: usize,
        node_kind: &'static str,
        trace: TrainTrace,
    },
    State(StateError),
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::EmptyLog => write!(f, "cannot train on an empty event log"),
            TrainError::InvalidConfig(msg) => write!(f, "invalid training config: {msg}"),
            TrainError::SampledEventDim { user, item } => {
                write!(
                    f,
                    "sampled survival dim ({user}, {item}) has events in the window"
                )
            }
            TrainError::NonFinite {
                window, node_kind, ..
            } => write!(f, "non-finite {node_kind} value in window {window}"),
            TrainError::State(e) => write!(f, "replay failed: {e}"),
        }
    }
}

impl core::error::Error for TrainError {}

impl From<StateError> for TrainError {
    fn from(e: StateError) -> Self {
        TrainError::State(e)
    }
}

/// Distinct event dimensions in first-appearance order.
fn distinct_event_dims(events: &[Event]) -> Vec<(usize, usize)> {
    let mut dims = Vec::new();
    for e in events {
        if !dims.contains(&e.dim()) {
            dims.push(e.dim());
        }
    }
    dims
}

/// Samples `count` distinct non-event dimensions uniformly without
/// replacement. `event_dims_sorted` must be sorted; `count` is clamped to the
/// number of available dimensions.
fn sample_survival_dims<R: Rng>(
    rng: &mut R,
    users: usize,
    items: usize,
    event_dims_sorted: &[(usize, usize)],
    count: usize,
) -> Vec<(usize, usize)> {
    let total = users * items;
    let available = total - event_dims_sorted.len();
    let count = count.min(available);
    if count == 0 {
        return Vec::new();
    }
    // Dense draw when most dimensions are wanted, rejection otherwise.
    if count * 4 >= available * 3 {
        let mut pool: Vec<(usize, usize)> = (0..users)
            .flat_map(|u| (0..items).map(move |i| (u, i)))
            .filter(|d| event_dims_sorted.binary_search(d).is_err())
            .collect();
        for j in 0..count {
            let pick = rng.gen_range(j..pool.len());
            pool.swap(j, pick);
        }
        pool.truncate(count);
        pool
    } else {
        let mut picked: Vec<usize> = Vec::with_capacity(count);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let flat = rng.gen_range(0..total);
            let dim = (flat / items, flat % items);
            if event_dims_sorted.binary_search(&dim).is_ok() {
                continue;
            }
            if let Err(slot) = picked.binary_search(&flat) {
                picked.insert(slot, flat);
                out.push(dim);
            }
        }
        out
    }
}

/// Evaluates the window objective: log-intensity terms for the window's
/// events plus survival mass over `[t_1, t_M]` for the event dimensions and
/// the given sampled dimensions.
///
/// With `scale_survival` the sampled part is multiplied by
/// `(non-event dims) / (sampled count)`, making it an unbiased estimate of
/// the full survival summation.
pub fn window_objective(
    events: &[Event],
    entry: &DynamicState,
    params: &ModelParams,
    sampled_dims: &[(usize, usize)],
    scale_survival: bool,
) -> Result<LossBreakdown, TrainError> {
    if events.is_empty() {
        return Ok(LossBreakdown::zero());
    }
    let event_dims = distinct_event_dims(events);
    for &(u, i) in sampled_dims {
        if event_dims.contains(&(u, i)) {
            return Err(TrainError::SampledEventDim { user: u, item: i });
        }
    }
    let dims = assemble_survival_dims(
        entry.num_users() * entry.num_items(),
        &event_dims,
        sampled_dims,
        scale_survival,
    );
    let graph = build_window_graph(events, entry, params, &dims);
    let event_term = graph.event_term();
    let survival_term = graph.survival_term();
    Ok(LossBreakdown {
        event_term,
        survival_term,
        total: event_term + survival_term,
    })
}

fn assemble_survival_dims(
    total_dims: usize,
    event_dims: &[(usize, usize)],
    sampled_dims: &[(usize, usize)],
    scale_survival: bool,
) -> Vec<SurvivalDim> {
    let non_event = total_dims - event_dims.len();
    let weight = if scale_survival && !sampled_dims.is_empty() {
        non_event as f64 / sampled_dims.len() as f64
    } else {
        1.0
    };
    event_dims
        .iter()
        .map(|&(u, i)| SurvivalDim::new(u, i, 1.0))
        .chain(
            sampled_dims
                .iter()
                .map(|&(u, i)| SurvivalDim::new(u, i, weight)),
        )
        .collect()
}

struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    fn new(lr: f64, len: usize) -> Self {
        Adam {
            lr,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - powi(ADAM_BETA1, t);
        let bias2 = 1.0 - powi(ADAM_BETA2, t);
        let lr_t = self.lr * math::sqrt(bias2) / bias1;
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= lr_t * *m / (math::sqrt(*v) + ADAM_EPS);
        }
    }
}

/// Integer power by squaring (`f64::powi` needs `std`).
fn powi(base: f64, mut exp: i32) -> f64 {
    let mut acc = 1.0;
    let mut base = base;
    while exp > 0 {
        if exp & 1 == 1 {
            acc *= base;
        }
        base *= base;
        exp >>= 1;
    }
    acc
}

/// Scales `grads` down to `max_norm` if needed; returns the pre-clip norm.
fn clip_global_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = math::sqrt(grads.iter().map(|g| g * g).sum::<f64>());
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= scale;
        }
    }
    norm
}

/// The parameters a run of [`train`] starts from: uniform in
/// `+-0.1/sqrt(k)`, drawn from the config seed. Exposed so baselines can be
/// scored against the exact initialization.
pub fn initial_params(cfg: &TrainConfig, context_dim: usize) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let half_width = 0.1 / math::sqrt(cfg.k as f64);
    ModelParams::random_uniform(cfg.k, context_dim, cfg.activation, half_width, &mut rng)
}

/// Trained parameters plus the per-window trace.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub trace: TrainTrace,
}

/// Maximum-likelihood training: windows partition the global event order;
/// each step backpropagates through one window (entry embeddings constant),
/// clips the global gradient norm, and takes one Adam step. Deterministic
/// for a fixed `(log, cfg)`.
pub fn train(log: &EventLog, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if log.is_empty() {
        return Err(TrainError::EmptyLog);
    }
    let (m, n, d) = (log.num_users(), log.num_items(), log.context_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init_half_width = 0.1 / math::sqrt(cfg.k as f64);
    // Keep this draw identical to `initial_params`: it is the first use of
    // the run's RNG stream.
    let mut params =
        ModelParams::random_uniform(cfg.k, d, cfg.activation, init_half_width, &mut rng);
    let mut adam = Adam::new(cfg.learning_rate, params.len());
    let mut trace = TrainTrace::default();
    let mut window_index = 0;

    for _ in 0..cfg.epochs {
        let mut state = DynamicState::zeros(m, n, cfg.k);
        for window in log.events().chunks(cfg.window_size) {
            let event_dims = distinct_event_dims(window);
            let mut sorted = event_dims.clone();
            sorted.sort_unstable();
            let c = cfg.nce_samples.unwrap_or(5 * event_dims.len());
            let sampled = sample_survival_dims(&mut rng, m, n, &sorted, c);
            let dims = assemble_survival_dims(m * n, &event_dims, &sampled, cfg.scale_survival);

            let graph = build_window_graph(window, &state, &params, &dims);
            let (loss, grads) = match graph.backward() {
                Ok(ok) => ok,
                Err(GraphError::NonFinite { node_kind }) => {
                    return Err(TrainError::NonFinite {
                        window: window_index,
                        node_kind,
                        trace,
                    });
                }
            };
            let stats = graph.stats();
            trace.degenerate_gaps += stats.degenerate_gaps;

            // Advance the entry state under the parameters this window was
            // scored with, before the optimizer moves them.
            for e in window {
                state.apply_event(&params, e)?;
            }

            let mut flat_grads = grads.to_flat();
            let grad_norm = clip_global_norm(&mut flat_grads, cfg.clip_norm);
            let mut flat_params = params.to_flat();
            adam.step(&mut flat_params, &flat_grads);
            params.assign_flat(&flat_params);

            trace.windows.push(WindowRecord {
                window: window_index,
                event_term: graph.event_term(),
                survival_term: graph.survival_term(),
                total: loss,
                grad_norm,
                clip_events: stats.clamped_inner_products,
            });
            window_index += 1;
        }
    }

    Ok(TrainOutcome { params, trace })
}

/// Full-enumeration negative log-likelihood of `test` given the state
/// reached by replaying `train` under `params`. Returns zero for an empty
/// test log.
pub fn holdout_nll(
    train: &EventLog,
    test: &EventLog,
    params: &ModelParams,
) -> Result<LossBreakdown, TrainError> {
    if test.is_empty() {
        return Ok(LossBreakdown::zero());
    }
    let entry = replay(train, params)?.state;
    let event_dims = distinct_event_dims(test.events());
    let mut sorted = event_dims.clone();
    sorted.sort_unstable();
    let complement: Vec<(usize, usize)> = (0..test.num_users())
        .flat_map(|u| (0..test.num_items()).map(move |i| (u, i)))
        .filter(|dim| sorted.binary_search(dim).is_err())
        .collect();
    window_objective(test.events(), &entry, params, &complement, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;

    fn small_log(seed: u64, m: usize, n: usize, count: usize) -> EventLog {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = 0.0;
        let events = (0..count)
            .map(|_| {
                t += rng.gen_range(0.1..1.0);
                Event::new(rng.gen_range(0..m), rng.gen_range(0..n), t)
            })
            .collect();
        EventLog::new(events, m, n).unwrap()
    }

    #[test]
    fn zero_params_single_event_objective_is_minus_log_gap() {
        let params = ModelParams::zeros(2, 0, Activation::Tanh);
        let entry = DynamicState::zeros(1, 1, 2);
        let events = [Event::new(0, 0, 0.7)];
        let out = window_objective(&events, &entry, &params, &[], false).unwrap();
        assert!((out.event_term - -(0.7f64.ln())).abs() < 1e-12);
        assert_eq!(out.survival_term, 0.0);
        assert_eq!(out.total, out.event_term);
    }

    #[test]
    fn sampled_event_dim_is_rejected() {
        let params = ModelParams::zeros(1, 0, Activation::Tanh);
        let entry = DynamicState::zeros(2, 2, 1);
        let events = [Event::new(0, 0, 1.0), Event::new(1, 1, 2.0)];
        let err = window_objective(&events, &entry, &params, &[(0, 0)], true).unwrap_err();
        assert!(matches!(
            err,
            TrainError::SampledEventDim { user: 0, item: 0 }
        ));
    }

    #[test]
    fn survival_term_is_nonnegative_and_events_lower_it_with_alpha() {
        // The first window event is scored on entry embeddings; raising the
        // entry compatibility must lower the event term.
        let params = ModelParams::zeros(2, 0, Activation::Tanh);
        let mut low = DynamicState::zeros(1, 1, 2);
        low.set_user_row(0, &[0.1, 0.1]);
        low.set_item_row(0, &[0.2, 0.3]);
        let mut high = low.clone();
        high.set_user_row(0, &[0.4, 0.4]);
        let events = [Event::new(0, 0, 1.0), Event::new(0, 0, 2.0)];
        let lo = window_objective(&events, &low, &params, &[], false).unwrap();
        let hi = window_objective(&events, &high, &params, &[], false).unwrap();
        assert!(lo.survival_term >= 0.0 && hi.survival_term >= 0.0);
        assert!(hi.event_term < lo.event_term);
    }

    #[test]
    fn sampling_is_disjoint_exact_and_clamped() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let event_dims = [(0, 0), (1, 2)];
        let sampled = sample_survival_dims(&mut rng, 3, 3, &event_dims, 4);
        assert_eq!(sampled.len(), 4);
        let set: BTreeSet<_> = sampled.iter().copied().collect();
        assert_eq!(set.len(), 4, "sampling must be without replacement");
        for d in &sampled {
            assert!(!event_dims.contains(d));
        }
        // Requesting more than available clamps to the complement size.
        let all = sample_survival_dims(&mut rng, 2, 2, &[(0, 0)], 99);
        assert_eq!(all.len(), 3);
        let set: BTreeSet<_> = all.iter().copied().collect();
        assert_eq!(set, BTreeSet::from([(0, 1), (1, 0), (1, 1)]));
    }

    #[test]
    fn zero_learning_rate_keeps_parameters_at_init() {
        let log = small_log(1, 2, 3, 12);
        let mut cfg = TrainConfig::new(2);
        cfg.window_size = log.len();
        cfg.learning_rate = 0.0;
        cfg.epochs = 1;
        cfg.seed = 5;
        let out = train(&log, &cfg).unwrap();
        // The trace records the initial loss of the single window.
        assert_eq!(out.trace.windows.len(), 1);
        assert!(out.trace.windows[0].total.is_finite());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let init =
            ModelParams::random_uniform(2, 0, Activation::Tanh, 0.1 / (2f64).sqrt(), &mut rng);
        for (a, b) in out.params.to_flat().iter().zip(init.to_flat()) {
            assert_eq!(
                a.to_bits(),
                b.to_bits(),
                "zero learning rate must be a no-op"
            );
        }
    }

    #[test]
    fn training_is_bit_reproducible() {
        let log = small_log(2, 3, 4, 40);
        let mut cfg = TrainConfig::new(3);
        cfg.window_size = 8;
        cfg.epochs = 2;
        cfg.seed = 77;
        let a = train(&log, &cfg).unwrap();
        let b = train(&log, &cfg).unwrap();
        for (x, y) in a.params.to_flat().iter().zip(b.params.to_flat()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(a.trace.windows.len(), b.trace.windows.len());
        for (x, y) in a.trace.windows.iter().zip(&b.trace.windows) {
            assert_eq!(x.total.to_bits(), y.total.to_bits());
            assert_eq!(x.grad_norm.to_bits(), y.grad_norm.to_bits());
        }
    }

    #[test]
    fn clipping_caps_the_applied_gradient_norm() {
        let mut g = vec![3.0, 4.0]; // norm 5
        let pre = clip_global_norm(&mut g, 1.0);
        assert_eq!(pre, 5.0);
        let post = (g.iter().map(|x| x * x).sum::<f64>()).sqrt();
        assert!(post <= 1.0 + 1e-9);
        // Below the ceiling nothing changes.
        let mut g = vec![0.3, 0.4];
        clip_global_norm(&mut g, 1.0);
        assert_eq!(g, vec![0.3, 0.4]);
    }

    #[test]
    fn empty_log_is_rejected() {
        let log = EventLog::new(vec![], 1, 1).unwrap();
        assert!(matches!(
            train(&log, &TrainConfig::new(2)),
            Err(TrainError::EmptyLog)
        ));
    }

    #[test]
    fn holdout_nll_of_empty_test_is_zero() {
        let log = small_log(3, 2, 2, 6);
        let empty = EventLog::new(vec![], 2, 2).unwrap();
        let params = ModelParams::zeros(2, 0, Activation::Tanh);
        let nll = holdout_nll(&log, &empty, &params).unwrap();
        assert_eq!(nll.total, 0.0);
    }

    #[test]
    fn adam_step_moves_against_gradient() {
        let mut adam = Adam::new(0.1, 2);
        let mut p = vec![1.0, -1.0];
        adam.step(&mut p, &[1.0, -1.0]);
        assert!(p[0] < 1.0);
        assert!(p[1] > -1.0);
    }
}
