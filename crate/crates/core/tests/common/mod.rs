//! Shared oracles for the integration and acceptance suites.
//!
//! Everything here deliberately re-derives results through independent
//! routes (numerical quadrature, brute-force enumeration, a from-scratch
//! reference replay) so the production code is checked against math, not
//! against itself.

#![allow(dead_code)]

use coevolve_core::{Event, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two-sided 1% asymptotic Kolmogorov-Smirnov coefficient.
pub const KS_COEFF_001: f64 = 1.62762;
/// Chi-square 1% critical value for 3 degrees of freedom.
pub const CHI2_CRIT_DF3_001: f64 = 11.344867;

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
}

fn adaptive_step(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let mid = 0.5 * (a + b);
    let left = simpson(f, a, mid);
    let right = simpson(f, mid, b);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        left + right + (left + right - whole) / 15.0
    } else {
        adaptive_step(f, a, mid, left, tol / 2.0, depth - 1)
            + adaptive_step(f, mid, b, right, tol / 2.0, depth - 1)
    }
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let whole = simpson(&f, a, b);
    adaptive_step(&f, a, b, whole, tol, 40)
}

// ---------------------------------------------------------------------------
// Distribution tests
// ---------------------------------------------------------------------------

pub fn rayleigh_cdf(alpha: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        1.0 - (-alpha * x * x / 2.0).exp()
    }
}

/// One-sample KS statistic against `cdf`. Sorts `samples` in place.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let c = cdf(x);
        d = d.max(((i + 1) as f64 / n - c).abs());
        d = d.max((c - i as f64 / n).abs());
    }
    d
}

/// Two-sample KS statistic. Sorts both inputs in place.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (mut i, mut j) = (0usize, 0usize);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

pub fn ks_one_sample_critical_001(n: usize) -> f64 {
    KS_COEFF_001 / (n as f64).sqrt()
}

pub fn ks_two_sample_critical_001(n: usize, m: usize) -> f64 {
    KS_COEFF_001 * (((n + m) as f64) / ((n * m) as f64)).sqrt()
}

/// Pearson chi-square statistic of observed counts against expected
/// probabilities.
pub fn chi_square(observed: &[usize], probs: &[f64]) -> f64 {
    let total: usize = observed.iter().sum();
    observed
        .iter()
        .zip(probs)
        .map(|(&o, &p)| {
            let e = p * total as f64;
            (o as f64 - e) * (o as f64 - e) / e
        })
        .sum()
}

/// P(dimension `d` wins the race) for independent Rayleigh clocks with the
/// given rates, by quadrature of `f_d(x) * prod_{j != d} S_j(x)`.
pub fn race_win_probability(alphas: &[f64], d: usize, tol: f64) -> f64 {
    let alpha_d = alphas[d];
    let others: Vec<f64> = alphas
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != d)
        .map(|(_, &a)| a)
        .collect();
    let density = move |x: f64| {
        let f = alpha_d * x * (-alpha_d * x * x / 2.0).exp();
        let survive: f64 = others.iter().map(|&a| (-a * x * x / 2.0).exp()).product();
        f * survive
    };
    // The total rate is at least min(alphas); integrate far into the tail.
    let a_min = alphas.iter().cloned().fold(f64::INFINITY, f64::min);
    let cutoff = (60.0 / a_min).sqrt();
    adaptive_simpson(density, 0.0, cutoff, tol)
}

// ---------------------------------------------------------------------------
// Reference model (independent implementation path)
// ---------------------------------------------------------------------------

const CAP: f64 = 30.0;
const GAP_EPS: f64 = 1e-9;

fn act(params: &ModelParams, x: f64) -> f64 {
    match params.activation.name() {
        "tanh" => x.tanh(),
        _ => 1.0 / (1.0 + (-x).exp()),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone)]
pub struct RefState {
    pub f: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
    pub last_u: Vec<f64>,
    pub last_i: Vec<f64>,
}

impl RefState {
    pub fn zeros(m: usize, n: usize, k: usize) -> Self {
        RefState {
            f: vec![vec![0.0; k]; m],
            g: vec![vec![0.0; k]; n],
            last_u: vec![0.0; m],
            last_i: vec![0.0; n],
        }
    }

    /// Naive two-phase update straight from the recurrence.
    pub fn apply(&mut self, params: &ModelParams, e: &Event) {
        let k = params.k();
        let (u, i) = (e.user, e.item);
        let f_old = self.f[u].clone();
        let g_old = self.g[i].clone();
        let q = e.context.as_deref().unwrap_or(&[]);
        let mut new_f = vec![0.0; k];
        let mut new_g = vec![0.0; k];
        for r in 0..k {
            let mut s = params.user.drift[r] * (e.time - self.last_u[u]);
            for c in 0..k {
                s += params.user.self_evo[r * k + c] * f_old[c];
                s += params.user.co_evo[r * k + c] * g_old[c];
            }
            for (c, &qc) in q.iter().enumerate() {
                s += params.user.context[r * q.len() + c] * qc;
            }
            new_f[r] = act(params, s);
            let mut s = params.item.drift[r] * (e.time - self.last_i[i]);
            for c in 0..k {
                s += params.item.self_evo[r * k + c] * g_old[c];
                s += params.item.co_evo[r * k + c] * f_old[c];
            }
            for (c, &qc) in q.iter().enumerate() {
                s += params.item.context[r * q.len() + c] * qc;
            }
            new_g[r] = act(params, s);
        }
        self.f[u] = new_f;
        self.g[i] = new_g;
        self.last_u[u] = e.time;
        self.last_i[i] = e.time;
    }
}

/// Direct evaluation of the joint negative log-likelihood of `window` over
/// its span, enumerating every (u, i) pair for the survival part. `prefix`
/// events only shape the entry state.
pub fn reference_window_nll(
    prefix: &[Event],
    window: &[Event],
    m: usize,
    n: usize,
    params: &ModelParams,
) -> (f64, f64) {
    assert!(!window.is_empty());
    let mut state = RefState::zeros(m, n, params.k());
    for e in prefix {
        state.apply(params, e);
    }

    // Event terms plus a state snapshot after every window event.
    let mut snapshots: Vec<(f64, RefState)> = Vec::new();
    let mut event_term = 0.0;
    for e in window {
        let t_prime = state.last_u[e.user].max(state.last_i[e.item]);
        let mut gap = e.time - t_prime;
        if gap <= 0.0 {
            gap = GAP_EPS;
        }
        let ip = dot(&state.f[e.user], &state.g[e.item]).clamp(-CAP, CAP);
        event_term += -(ip + gap.ln());
        state.apply(params, e);
        snapshots.push((e.time, state.clone()));
    }
    let entry_copy = {
        let mut s = RefState::zeros(m, n, params.k());
        for e in prefix {
            s.apply(params, e);
        }
        s
    };
    let state_at = |t: f64| -> &RefState {
        let mut found = &entry_copy;
        for (time, s) in &snapshots {
            if *time <= t {
                found = s;
            } else {
                break;
            }
        }
        found
    };

    let t0 = window[0].time;
    let t1 = window[window.len() - 1].time;
    let mut survival = 0.0;
    for u in 0..m {
        for i in 0..n {
            let mut breaks = vec![t0];
            for e in window {
                if e.user == u || e.item == i {
                    breaks.push(e.time);
                }
            }
            breaks.push(t1);
            breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
            breaks.dedup();
            for w in breaks.windows(2) {
                let (a, b) = (w[0], w[1]);
                if b <= a {
                    continue;
                }
                let s = state_at(a);
                let alpha = dot(&s.f[u], &s.g[i]).clamp(-CAP, CAP).exp();
                survival += alpha * (b - a) * (b - a) / 2.0;
            }
        }
    }
    (event_term, survival)
}

// ---------------------------------------------------------------------------
// Instance generators
// ---------------------------------------------------------------------------

pub struct Instance {
    pub m: usize,
    pub n: usize,
    pub prefix: Vec<Event>,
    pub window: Vec<Event>,
    pub params: ModelParams,
}

/// Random small instance: sizes, both activations, optional context, a
/// replayable prefix, and a window of events.
pub fn random_instance(seed: u64, max_k: usize, max_window: usize) -> Instance {
    use coevolve_core::Activation;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.gen_range(1..=4);
    let n = rng.gen_range(1..=4);
    let k = rng.gen_range(1..=max_k);
    let d = if rng.gen_bool(0.4) {
        rng.gen_range(1..=3)
    } else {
        0
    };
    let activation = if rng.gen_bool(0.5) {
        Activation::Tanh
    } else {
        Activation::Sigmoid
    };
    let params = ModelParams::random_uniform(k, d, activation, 0.5, &mut rng);
    let prefix_len = rng.gen_range(0..=4);
    let window_len = rng.gen_range(1..=max_window);
    let mut t = 0.0;
    let mut draw_events = |count: usize, rng: &mut ChaCha8Rng| -> Vec<Event> {
        (0..count)
            .map(|_| {
                t += rng.gen_range(0.05..1.2);
                let mut e = Event::new(rng.gen_range(0..m), rng.gen_range(0..n), t);
                if d > 0 {
                    e.context = Some((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect());
                }
                e
            })
            .collect()
    };
    let prefix = draw_events(prefix_len, &mut rng);
    let window = draw_events(window_len, &mut rng);
    Instance {
        m,
        n,
        prefix,
        window,
        params,
    }
}

/// Ground truth with strong context projections: per-entity embedding
/// diversity is observable through event contexts, so the structure is
/// recoverable by gradient descent. Used by the end-to-end learning checks.
pub fn learnable_ground_truth() -> ModelParams {
    use coevolve_core::Activation;
    let (k, d) = (4, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut p = ModelParams::zeros(k, d, Activation::Tanh);
    for side in [&mut p.user, &mut p.item] {
        for r in 0..k {
            side.drift[r] = rng.gen_range(-0.1..=0.1);
            side.self_evo[r * k + r] = 0.3;
            side.co_evo[r * k + r] = 0.2;
            for c in 0..d {
                side.context[r * d + c] = rng.gen_range(-1.3..=1.3);
            }
        }
    }
    p
}

/// All (u, i) dimensions except the ones present in `events`.
pub fn complement_dims(events: &[Event], m: usize, n: usize) -> Vec<(usize, usize)> {
    let mut present: Vec<(usize, usize)> = events.iter().map(|e| (e.user, e.item)).collect();
    present.sort_unstable();
    present.dedup();
    (0..m)
        .flat_map(|u| (0..n).map(move |i| (u, i)))
        .filter(|dim| present.binary_search(dim).is_err())
        .collect()
}
