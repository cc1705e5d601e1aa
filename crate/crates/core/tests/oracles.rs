//! Derived-value checks: every closed form is validated against an
//! independent route (quadrature, Monte Carlo, or brute-force enumeration).

mod common;

use coevolve_core::{
    build_window_graph, conditional_density, expected_return_time, replay, sample_interval,
    simulate, simulate_thinning, survival_integral, window_objective, Activation, DynamicState,
    Event, EventLog, ModelParams, SimConfig, SurvivalDim,
};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn survival_integral_matches_adaptive_quadrature() {
    for seed in 0..20 {
        let inst = random_instance(seed, 3, 6);
        let all: Vec<Event> = inst.prefix.iter().chain(&inst.window).cloned().collect();
        let log = EventLog::new(all, inst.m, inst.n).unwrap();
        let rep = replay(&log, &inst.params).unwrap();
        let (t0, t1) = (0.0, log.horizon() + 1.5);
        let log_for_breaks = log.clone();

        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        let (u, i) = (rng.gen_range(0..inst.m), rng.gen_range(0..inst.n));
        let closed = survival_integral(&log, &rep.users, &rep.items, u, i, t0, t1);

        // Independent route: evaluate the intensity pointwise from a
        // reference replay and integrate it numerically over the window.
        let mut ref_state = RefState::zeros(inst.m, inst.n, inst.params.k());
        let mut snapshots: Vec<(f64, RefState)> = vec![(0.0, ref_state.clone())];
        for e in log_for_breaks.events() {
            ref_state.apply(&inst.params, e);
            snapshots.push((e.time, ref_state.clone()));
        }
        let breaks = log_for_breaks.relevant_times(u, i, t0, t1);
        let lambda = |tau: f64| -> f64 {
            // Last breakpoint <= tau starts the current linear piece.
            let mut seg_start = breaks[0];
            for &b in &breaks {
                if b <= tau {
                    seg_start = b;
                } else {
                    break;
                }
            }
            let mut state = &snapshots[0].1;
            for (time, s) in &snapshots {
                if *time <= seg_start {
                    state = s;
                } else {
                    break;
                }
            }
            let ip: f64 = state.f[u].iter().zip(&state.g[i]).map(|(a, b)| a * b).sum();
            ip.clamp(-30.0, 30.0).exp() * (tau - seg_start)
        };
        let numeric = adaptive_simpson(lambda, t0, t1, 1e-12);
        let rel = (closed.total - numeric).abs() / numeric.abs().max(1e-12);
        assert!(
            rel < 1e-8,
            "seed {seed}: closed {} vs quadrature {} (rel {rel})",
            closed.total,
            numeric
        );
    }
}

#[test]
fn conditional_density_is_normalized() {
    for &alpha in &[0.2_f64, 1.0, 3.7, 25.0] {
        let t_prime = 2.0;
        let cutoff = t_prime + (60.0 / alpha).sqrt();
        let mass = adaptive_simpson(
            |t| conditional_density(alpha, t_prime, t).unwrap(),
            t_prime,
            cutoff,
            1e-12,
        );
        assert!(
            (mass - 1.0).abs() < 1e-8,
            "alpha {alpha}: density mass {mass}"
        );
    }
}

#[test]
fn expected_return_time_matches_monte_carlo() {
    let alpha = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let n = 100_000;
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..n {
        let u: f64 = loop {
            let x: f64 = rng.gen();
            if x > 0.0 {
                break x;
            }
        };
        let lapse = sample_interval(alpha, u).unwrap();
        sum += lapse;
        sumsq += lapse * lapse;
    }
    let mean = sum / n as f64;
    let var = sumsq / n as f64 - mean * mean;
    let se = (var / n as f64).sqrt();
    let closed = expected_return_time(alpha, 0.0).unwrap();
    assert!(
        (mean - closed).abs() < 3.0 * se,
        "MC mean {mean} vs closed form {closed} (se {se})"
    );
}

#[test]
fn window_objective_matches_brute_force_enumeration() {
    // Small instances, full survival enumeration, no sampling: the window
    // objective must equal a direct evaluation of the joint NLL.
    for seed in 100..140 {
        let inst = random_instance(seed, 3, 8);
        if inst.m * inst.n > 12 {
            continue;
        }
        let mut entry = DynamicState::zeros(inst.m, inst.n, inst.params.k());
        for e in &inst.prefix {
            entry.apply_event(&inst.params, e).unwrap();
        }
        let complement = complement_dims(&inst.window, inst.m, inst.n);
        let got = window_objective(&inst.window, &entry, &inst.params, &complement, false).unwrap();
        let (ev, sv) =
            reference_window_nll(&inst.prefix, &inst.window, inst.m, inst.n, &inst.params);
        let scale = got.total.abs().max(1.0);
        assert!(
            (got.event_term - ev).abs() <= 1e-10 * scale,
            "seed {seed}: event term {} vs {}",
            got.event_term,
            ev
        );
        assert!(
            (got.survival_term - sv).abs() <= 1e-10 * scale,
            "seed {seed}: survival term {} vs {}",
            got.survival_term,
            sv
        );
    }
}

#[test]
fn sampled_survival_is_an_unbiased_estimate() {
    // Mean over resamples of the scaled sampled survival term approaches the
    // full enumeration value.
    let inst = random_instance(7, 3, 8);
    let mut entry = DynamicState::zeros(inst.m, inst.n, inst.params.k());
    for e in &inst.prefix {
        entry.apply_event(&inst.params, e).unwrap();
    }
    let complement = complement_dims(&inst.window, inst.m, inst.n);
    if complement.len() < 3 || inst.window.len() < 2 {
        return; // degenerate draw; the acceptance suite covers the real run
    }
    let full = window_objective(&inst.window, &entry, &inst.params, &complement, false)
        .unwrap()
        .survival_term;
    let c = (complement.len() / 2).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let resamples = 2000;
    let mut sum = 0.0;
    for _ in 0..resamples {
        let mut pool = complement.clone();
        for j in 0..c {
            let pick = rng.gen_range(j..pool.len());
            pool.swap(j, pick);
        }
        pool.truncate(c);
        sum += window_objective(&inst.window, &entry, &inst.params, &pool, true)
            .unwrap()
            .survival_term;
    }
    let mean = sum / resamples as f64;
    let rel = (mean - full).abs() / full;
    assert!(
        rel < 0.03,
        "sampled survival mean {mean} vs full {full} (rel {rel})"
    );
}

#[test]
fn first_event_dimension_follows_the_race_probabilities() {
    // m = n = 2: all four dims open at alpha = 1, so the first event should
    // land uniformly. The expected probabilities still come from quadrature
    // of the race integral rather than the symmetry argument.
    let probs: Vec<f64> = (0..4)
        .map(|d| race_win_probability(&[1.0; 4], d, 1e-10))
        .collect();
    let total: f64 = probs.iter().sum();
    assert!((total - 1.0).abs() < 1e-8);

    let runs = 10_000;
    let mut observed = [0usize; 4];
    for r in 0..runs {
        let mut cfg = SimConfig::new(2, 2, 1);
        cfg.max_events = 1;
        cfg.horizon = 1e9;
        cfg.seed = 900_000 + r as u64;
        let res = simulate(&cfg).unwrap();
        let e = &res.log.events()[0];
        observed[e.user * 2 + e.item] += 1;
    }
    let stat = chi_square(&observed, &probs);
    assert!(
        stat < CHI2_CRIT_DF3_001,
        "chi-square {stat} exceeds the 1% critical value; observed {observed:?}"
    );
}

#[test]
fn race_and_thinning_samplers_agree_in_distribution() {
    // One shared ground-truth parameter set; only the sampling randomness
    // differs between the two runs.
    let mut prng = ChaCha8Rng::seed_from_u64(76);
    let params = ModelParams::random_uniform(2, 0, Activation::Tanh, 0.25, &mut prng);
    let mut cfg = SimConfig::new(2, 2, 2);
    cfg.params = Some(params);
    cfg.horizon = 1e9;
    cfg.max_events = 6000;
    cfg.seed = 77;
    let race = simulate(&cfg).unwrap();
    cfg.seed = 78;
    let thin = simulate_thinning(&cfg).unwrap();
    let gaps = |log: &EventLog| -> Vec<f64> {
        let mut prev = 0.0;
        log.events()
            .iter()
            .map(|e| {
                let g = e.time - prev;
                prev = e.time;
                g
            })
            .collect()
    };
    let mut a = gaps(&race.log);
    let mut b = gaps(&thin.log);
    let d = ks_two_sample(&mut a, &mut b);
    let crit = ks_two_sample_critical_001(a.len(), b.len());
    assert!(
        d < crit,
        "two-sample KS {d} exceeds critical {crit} ({} vs {} gaps)",
        a.len(),
        b.len()
    );
}

#[test]
fn simulated_logs_prefer_their_generating_parameters() {
    // Over seeds, the full NLL of a simulated log under the generating
    // parameters should on average beat random perturbations of norm 0.5.
    let mut gen_total = 0.0;
    let mut pert_total = 0.0;
    let seeds = 50;
    for seed in 0..seeds {
        let mut cfg = SimConfig::new(3, 3, 2);
        cfg.horizon = 30.0;
        cfg.max_events = 400;
        cfg.seed = 4000 + seed;
        let sim = simulate(&cfg).unwrap();
        if sim.log.len() < 4 {
            continue;
        }
        let entry = DynamicState::zeros(3, 3, 2);
        let complement = complement_dims(sim.log.events(), 3, 3);
        let nll_gen = window_objective(sim.log.events(), &entry, &sim.params, &complement, false)
            .unwrap()
            .total;

        let mut rng = ChaCha8Rng::seed_from_u64(9000 + seed);
        let mut flat = sim.params.to_flat();
        let noise: Vec<f64> = (0..flat.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = noise.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (p, z) in flat.iter_mut().zip(&noise) {
            *p += 0.5 * z / norm;
        }
        let mut perturbed = sim.params.clone();
        perturbed.assign_flat(&flat);
        let nll_pert = window_objective(sim.log.events(), &entry, &perturbed, &complement, false)
            .unwrap()
            .total;
        gen_total += nll_gen;
        pert_total += nll_pert;
    }
    assert!(
        gen_total <= pert_total,
        "generating params NLL {gen_total} should not exceed perturbed {pert_total}"
    );
}

#[test]
fn graph_survival_segments_match_survival_integral() {
    // The window graph's survival evaluation and the standalone
    // survival_integral agree on the same span (two code paths, one value).
    let inst = random_instance(500, 4, 8);
    if inst.window.len() < 2 {
        return;
    }
    let all: Vec<Event> = inst.prefix.iter().chain(&inst.window).cloned().collect();
    let log = EventLog::new(all, inst.m, inst.n).unwrap();
    let rep = replay(&log, &inst.params).unwrap();
    let mut entry = DynamicState::zeros(inst.m, inst.n, inst.params.k());
    for e in &inst.prefix {
        entry.apply_event(&inst.params, e).unwrap();
    }
    let t0 = inst.window[0].time;
    let t1 = inst.window[inst.window.len() - 1].time;
    for u in 0..inst.m {
        for i in 0..inst.n {
            let dims = [SurvivalDim::new(u, i, 1.0)];
            let g = build_window_graph(&inst.window, &entry, &inst.params, &dims);
            let direct = survival_integral(&log, &rep.users, &rep.items, u, i, t0, t1);
            assert!(
                (g.survival_term() - direct.total).abs() <= 1e-12 * direct.total.max(1.0),
                "dim ({u},{i}): graph {} vs integral {}",
                g.survival_term(),
                direct.total
            );
        }
    }
}

#[test]
fn trained_model_beats_init_on_every_split() {
    let mut sim_cfg = SimConfig::new(10, 20, 4);
    sim_cfg.d = 3;
    sim_cfg.context_mode = coevolve_core::ContextMode::Gaussian;
    sim_cfg.params = Some(learnable_ground_truth());
    sim_cfg.horizon = 40.0;
    sim_cfg.max_events = 12_000;
    sim_cfg.seed = 717;
    let sim = simulate(&sim_cfg).unwrap();

    let mut cfg = coevolve_core::TrainConfig::new(4);
    cfg.window_size = 32;
    cfg.epochs = 8;
    cfg.learning_rate = 0.02;
    cfg.seed = 718;
    for p in [0.7, 0.78] {
        let (train_log, test_log) = sim.log.split_by_proportion(p).unwrap();
        assert!(!test_log.is_empty());
        let init = coevolve_core::initial_params(&cfg, 3);
        let init_mar = coevolve_core::evaluate(&train_log, &test_log, &init)
            .unwrap()
            .mar;
        let trained = coevolve_core::train(&train_log, &cfg).unwrap().params;
        let trained_mar = coevolve_core::evaluate(&train_log, &test_log, &trained)
            .unwrap()
            .mar;
        assert!(
            trained_mar < init_mar,
            "split p={p}: trained MAR {trained_mar} must beat init {init_mar}"
        );
    }
}

#[test]
fn fd_spot_checks_across_random_instances() {
    let mut checked = 0;
    for seed in 2000..2012 {
        let inst = random_instance(seed, 4, 8);
        let mut entry = DynamicState::zeros(inst.m, inst.n, inst.params.k());
        for e in &inst.prefix {
            entry.apply_event(&inst.params, e).unwrap();
        }
        let complement = complement_dims(&inst.window, inst.m, inst.n);
        let dims: Vec<SurvivalDim> = inst
            .window
            .iter()
            .map(|e| (e.user, e.item))
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .map(|(u, i)| SurvivalDim::new(u, i, 1.0))
            .chain(complement.iter().map(|&(u, i)| SurvivalDim::new(u, i, 1.7)))
            .collect();
        let graph = build_window_graph(&inst.window, &entry, &inst.params, &dims);
        let (_, grads) = graph.backward().unwrap();
        let flat = inst.params.to_flat();
        let analytic = grads.to_flat();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..6 {
            let idx = rng.gen_range(0..flat.len());
            let h = 1e-4 * flat[idx].abs().max(1.0);
            let mut probe = flat.clone();
            probe[idx] = flat[idx] + h;
            let mut p_hi = inst.params.clone();
            p_hi.assign_flat(&probe);
            probe[idx] = flat[idx] - h;
            let mut p_lo = inst.params.clone();
            p_lo.assign_flat(&probe);
            let hi = build_window_graph(&inst.window, &entry, &p_hi, &dims).total_loss();
            let lo = build_window_graph(&inst.window, &entry, &p_lo, &dims).total_loss();
            let fd = (hi - lo) / (2.0 * h);
            let denom = analytic[idx].abs().max(fd.abs()).max(1.0);
            assert!(
                (analytic[idx] - fd).abs() / denom < 1e-5,
                "seed {seed}, index {idx}: {} vs {}",
                analytic[idx],
                fd
            );
            checked += 1;
        }
    }
    assert!(checked > 60);
}
