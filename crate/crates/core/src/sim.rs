//! Exact generative sampling of event streams from the model.
//!
//! Every user-item dimension carries a Rayleigh inter-event distribution
//! whose rate is the current embedding compatibility, so sequences can be
//! sampled exactly by a competing-risks race: each dimension holds a
//! candidate next time drawn by inversion, the global minimum fires, and the
//! candidates of every dimension sharing the fired user or item are redrawn
//! from the post-event state. A classical thinning sampler over the summed
//! piecewise-linear intensity is provided as a distributional cross-check.

use crate::event::{Event, EventLog};
use crate::math;
use crate::params::{Activation, ModelParams};
use crate::process::compatibility;
use crate::state::DynamicState;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Ground-truth parameters are drawn uniform in `+-0.5/sqrt(k)` when the
/// config does not supply them; keeps compatibilities in a benign range.
pub const SIM_PARAM_HALF_WIDTH_SCALE: f64 = 0.5;

/// How per-event context vectors are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContextMode {
    /// No context; requires `d = 0`.
    None,
    /// I.i.d. standard normal entries; requires `d >= 1`.
    Gaussian,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub users: usize,
    pub items: usize,
    pub k: usize,
    pub d: usize,
    /// Generating parameters; drawn at random (seeded) when absent.
    pub params: Option<ModelParams>,
    /// Observation window end, hours.
    pub horizon: f64,
    pub max_events: usize,
    pub seed: u64,
    pub context_mode: ContextMode,
    pub activation: Activation,
}

impl SimConfig {
    pub fn new(users: usize, items: usize, k: usize) -> Self {
        SimConfig {
            users,
            items,
            k,
            d: 0,
            params: None,
            horizon: 100.0,
            max_events: 10_000,
            seed: 0,
            context_mode: ContextMode::None,
            activation: Activation::Tanh,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.users == 0 || self.items == 0 {
            return Err(SimError::InvalidConfig("need at least one user and item"));
        }
        if self.k == 0 {
            return Err(SimError::InvalidConfig("k must be >= 1"));
        }
        if self.horizon.is_nan() || self.horizon <= 0.0 {
            return Err(SimError::InvalidConfig("horizon must be > 0"));
        }
        if self.max_events == 0 {
            return Err(SimError::InvalidConfig("max_events must be >= 1"));
        }
        match self.context_mode {
            ContextMode::None if self.d != 0 => {
                Err(SimError::InvalidConfig("context_mode none requires d = 0"))
            }
            ContextMode::Gaussian if self.d == 0 => Err(SimError::InvalidConfig(
                "context_mode gaussian requires d >= 1",
            )),
            _ => Ok(()),
        }
    }

    fn resolve_params<R: Rng>(&self, rng: &mut R) -> Result<ModelParams, SimError> {
        match &self.params {
            Some(p) => {
                if p.k() != self.k || p.context_dim() != self.d {
                    return Err(SimError::InvalidConfig("params shape mismatch"));
                }
                Ok(p.clone())
            }
            None => {
                let hw = SIM_PARAM_HALF_WIDTH_SCALE / math::sqrt(self.k as f64);
                Ok(ModelParams::random_uniform(
                    self.k,
                    self.d,
                    self.activation,
                    hw,
                    rng,
                ))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimError {
    InvalidConfig(&'static str),
    /// Inversion input must lie strictly inside (0, 1).
    VariateOutOfRange,
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::InvalidConfig(msg) => write!(f, "invalid simulation config: {msg}"),
            SimError::VariateOutOfRange => write!(f, "uniform variate outside (0, 1)"),
        }
    }
}

impl core::error::Error for SimError {}

/// A sampled log together with the parameters that generated it.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub log: EventLog,
    pub params: ModelParams,
}

/// Inverts the Rayleigh survival function: `sqrt(-2 ln(1 - u) / alpha)` is
/// an exact inter-event lapse for rate `alpha`.
pub fn sample_interval(alpha: f64, u: f64) -> Result<f64, SimError> {
    if alpha <= 0.0 {
        return Err(SimError::InvalidConfig("alpha must be > 0"));
    }
    if !(u > 0.0 && u < 1.0) {
        return Err(SimError::VariateOutOfRange);
    }
    Ok(math::sqrt(-2.0 * math::ln(1.0 - u) / alpha))
}

fn draw_open01<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return u;
        }
    }
}

fn draw_context<R: Rng>(rng: &mut R, d: usize, mode: ContextMode) -> Option<Vec<f64>> {
    match mode {
        ContextMode::None => None,
        ContextMode::Gaussian => {
            // Box-Muller; one fresh pair of uniforms per coordinate.
            Some(
                (0..d)
                    .map(|_| {
                        let u1 = draw_open01(rng);
                        let u2: f64 = rng.gen();
                        math::sqrt(-2.0 * math::ln(u1))
                            * math::cos(2.0 * core::f64::consts::PI * u2)
                    })
                    .collect(),
            )
        }
    }
}

fn current_alpha(state: &DynamicState, u: usize, i: usize) -> f64 {
    compatibility(state.user_embedding(u), state.item_embedding(i)).0
}

/// A dimension's intensity changes exactly when the fired event shares its
/// user or its item; only those candidates may be redrawn.
#[inline]
fn involves(dim_user: usize, dim_item: usize, fired_user: usize, fired_item: usize) -> bool {
    dim_user == fired_user || dim_item == fired_item
}

/// Competing-risks race with redraw-on-involvement. Exact for this model:
/// every dimension's next-event law from its last change point is Rayleigh,
/// and an uninvolved dimension's standing candidate, conditioned on having
/// survived to the present, remains correctly distributed.
pub fn simulate(cfg: &SimConfig) -> Result<SimResult, SimError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let params = cfg.resolve_params(&mut rng)?;
    let (m, n) = (cfg.users, cfg.items);
    let mut state = DynamicState::zeros(m, n, cfg.k);
    // All embeddings start at zero, so every dimension opens at alpha = 1,
    // t' = 0.
    let mut candidates: Vec<f64> = (0..m * n)
        .map(|_| sample_interval(1.0, draw_open01(&mut rng)).expect("alpha=1, u in (0,1)"))
        .collect();
    let mut events = Vec::new();

    while events.len() < cfg.max_events {
        let (dim, &t) = candidates
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).expect("candidates are finite"))
            .expect("at least one dimension");
        if t > cfg.horizon {
            break;
        }
        let (u, i) = (dim / n, dim % n);
        let mut e = Event::new(u, i, t);
        e.context = draw_context(&mut rng, cfg.d, cfg.context_mode);
        state
            .apply_event(&params, &e)
            .expect("race times are nondecreasing");
        events.push(e);
        // Redraw exactly the dimensions whose intensity changed.
        for user in 0..m {
            for item in 0..n {
                if involves(user, item, u, i) {
                    let alpha = current_alpha(&state, user, item);
                    let lapse = sample_interval(alpha, draw_open01(&mut rng))
                        .expect("alpha > 0, u in (0,1)");
                    candidates[user * n + item] = t + lapse;
                }
            }
        }
    }

    let log = EventLog::with_horizon(events, m, n, cfg.horizon)
        .expect("simulated events satisfy log invariants");
    Ok(SimResult { log, params })
}

/// Ogata-style thinning over the summed intensity; distributional oracle for
/// [`simulate`]. Candidate points come from a homogeneous bound on a
/// lookahead window (the summed intensity is increasing between events, so
/// its value at the window end is a valid bound) and are accepted with
/// probability `total(t)/bound`, then attributed to a dimension
/// proportionally to its share of the total.
pub fn simulate_thinning(cfg: &SimConfig) -> Result<SimResult, SimError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let params = cfg.resolve_params(&mut rng)?;
    let (m, n) = (cfg.users, cfg.items);
    let mut state = DynamicState::zeros(m, n, cfg.k);
    let mut alphas: Vec<f64> = vec![1.0; m * n];
    // Last time either side of the dimension changed.
    let mut t_prime: Vec<f64> = vec![0.0; m * n];
    let mut events: Vec<Event> = Vec::new();
    let mut now = 0.0;

    'outer: while events.len() < cfg.max_events && now < cfg.horizon {
        // Total intensity at time tau >= now is A*tau - B (piecewise linear,
        // increasing while no event happens).
        let a: f64 = alphas.iter().sum();
        let b: f64 = alphas.iter().zip(&t_prime).map(|(al, tp)| al * tp).sum();
        // Lookahead sized so the expected number of true events inside is
        // about one: solve (A/2)L^2 + (A*now - B)L = 1.
        let lin = a * now - b;
        let lookahead = (math::sqrt(lin * lin + 2.0 * a) - lin) / a;
        let window_end = now + lookahead;
        let bound = a * window_end - b;
        debug_assert!(bound > 0.0);

        let mut s = now;
        loop {
            s += -math::ln(draw_open01(&mut rng)) / bound;
            if s > window_end {
                now = window_end;
                continue 'outer;
            }
            if s > cfg.horizon {
                break 'outer;
            }
            let total = a * s - b;
            if rng.gen::<f64>() * bound > total {
                continue; // rejected candidate
            }
            // Attribute to a dimension by its intensity share at s.
            let mut pick = rng.gen::<f64>() * total;
            let mut dim = m * n - 1;
            for (idx, (al, tp)) in alphas.iter().zip(&t_prime).enumerate() {
                pick -= al * (s - tp);
                if pick <= 0.0 {
                    dim = idx;
                    break;
                }
            }
            let (u, i) = (dim / n, dim % n);
            let mut e = Event::new(u, i, s);
            e.context = draw_context(&mut rng, cfg.d, cfg.context_mode);
            state
                .apply_event(&params, &e)
                .expect("thinning times are increasing");
            events.push(e);
            for user in 0..m {
                for item in 0..n {
                    if involves(user, item, u, i) {
                        let idx = user * n + item;
                        alphas[idx] = current_alpha(&state, user, item);
                        t_prime[idx] = s;
                    }
                }
            }
            now = s;
            continue 'outer;
        }
    }

    let log = EventLog::with_horizon(events, m, n, cfg.horizon)
        .expect("simulated events satisfy log invariants");
    Ok(SimResult { log, params })
}
