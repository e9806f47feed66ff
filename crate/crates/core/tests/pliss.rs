use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srblab::criteria::EnsembleSpec;
use srblab::flow::{lookup, truncate, IntegratorConfig};
use srblab::lpf::{cocycle_trace, CocycleTrace, TraceConfig};
use srblab::pliss::{
    flow_pliss, flow_pliss_oracle, hyperbolic_times, pliss_oracle, pliss_times, HyperbolicTimeConfig,
    PlissConfig, SampledFunction, NUE_UNMET,
};

#[test]
fn fuzzed_sequences_match_the_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut hyp_cases = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(0..=200);
        let a_max = rng.gen_range(0.5..3.0);
        let c1 = rng.gen_range(-1.0..0.4);
        let c2 = rng.gen_range(c1 + 0.01..=a_max);
        let drift = rng.gen_range(-0.5..0.8);
        let a: Vec<f64> = (0..n)
            .map(|_| (drift + rng.gen_range(-1.5..1.5f64)).min(a_max))
            .collect();
        let cfg = PlissConfig::new(a_max, c1, c2).unwrap();
        let r = pliss_times(&a, &cfg).unwrap();
        assert_eq!(r.indices, pliss_oracle(&a, c1));
        assert_eq!(r.ell, r.indices.len());
        if r.hypothesis {
            hyp_cases += 1;
            assert!(r.ell as f64 > cfg.zeta() * n as f64);
        }
    }
    assert!(hyp_cases > 50);
}

#[test]
fn hundred_terms_with_sum_fifty() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut a: Vec<f64> = (0..100).map(|_| rng.gen_range(-0.5..1.0)).collect();
    // Shift onto sum 50 while keeping every term at most 1.
    let mut sum: f64 = a.iter().sum();
    while (sum - 50.0).abs() > 1e-12 {
        let room: Vec<usize> = (0..100).filter(|i| a[*i] < 1.0).collect();
        let step = (50.0 - sum) / room.len() as f64;
        for i in room {
            a[i] = (a[i] + step).min(1.0);
        }
        sum = a.iter().sum();
    }
    let cfg = PlissConfig::new(1.0, 0.25, 0.5).unwrap();
    let r = pliss_times(&a, &cfg).unwrap();
    assert!(r.hypothesis || (a.iter().sum::<f64>() - 50.0).abs() < 1e-9);
    assert!(r.ell >= 34, "{}", r.ell);
    assert!((r.density_bound - 100.0 / 3.0).abs() < 1e-12);
}

fn synthetic_h(rng: &mut ChaCha8Rng, t_end: f64, c: f64, a_lower: f64) -> SampledFunction {
    // H' = alpha + beta cos(omega t) + gamma sin(2 omega t) stays above A and
    // averages alpha < c.
    let alpha = rng.gen_range(a_lower + 0.3..c - 0.05);
    let room = alpha - a_lower - 0.05;
    let beta = rng.gen_range(0.0..room * 0.7);
    let gamma = rng.gen_range(0.0..room * 0.3);
    let omega = rng.gen_range(0.05..3.0);
    SampledFunction::from_fn(t_end, 0.01, |t| {
        alpha * t + beta * (omega * t).sin() / omega + gamma * (1.0 - (2.0 * omega * t).cos()) / (2.0 * omega)
    })
}

#[test]
fn flow_measure_bound_on_synthetic_functions() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 100 {
        let c = rng.gen_range(0.2..2.0);
        let a_lower = c - rng.gen_range(0.5..3.0);
        let eps = rng.gen_range(0.05..1.0);
        let t_end = rng.gen_range(5.0..60.0);
        let h = synthetic_h(&mut rng, t_end, c, a_lower);
        let Ok(r) = flow_pliss(&h, c, eps, a_lower) else {
            continue;
        };
        assert!(r.measure >= r.bound() - h.spacing, "{} < {}", r.measure, r.bound());
        checked += 1;
    }
}

#[test]
fn flow_bound_example_reaches_twenty() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let h = synthetic_h(&mut rng, 100.0, 1.0, -1.0);
        let r = flow_pliss(&h, 1.0, 0.5, -1.0).unwrap();
        assert!((r.theta - 0.2).abs() < 1e-15);
        assert!(r.measure >= 20.0 - h.spacing, "{}", r.measure);
    }
}

#[test]
fn backward_scan_matches_double_loop() {
    // Piecewise linear: slope 1.5 c then a long flat stretch so H(T) < cT.
    let c = 1.0;
    let h = SampledFunction::from_fn(20.0, 0.05, |t| if t < 4.0 { 1.5 * c * t } else { 6.0 + 0.2 * (t - 4.0) });
    for eps in [0.1, 0.3, 0.6] {
        let fast = flow_pliss(&h, c, eps, 0.0).unwrap();
        let slow = flow_pliss_oracle(&h, c, eps, 0.0).unwrap();
        assert_eq!(fast, slow);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let h = synthetic_h(&mut rng, 10.0, 1.0, -0.5);
        if let Ok(fast) = flow_pliss(&h, 1.0, 0.2, -0.5) {
            assert_eq!(fast, flow_pliss_oracle(&h, 1.0, 0.2, -0.5).unwrap());
        }
    }
}

#[test]
fn shifted_mask_is_marked_for_a_larger_tolerance() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..30 {
        let h = synthetic_h(&mut rng, 30.0, 1.0, -1.0);
        let eps = 0.3;
        let (Ok(base), Ok(wider)) = (flow_pliss(&h, 1.0, eps, -1.0), flow_pliss(&h, 1.0, eps + 0.1, -1.0)) else {
            continue;
        };
        for k in 0..h.cells() {
            if base.mask[k] {
                assert!(wider.mask[k + 1], "cell {k}");
            }
        }
    }
}

fn synthetic_trace(a: Vec<f64>) -> CocycleTrace {
    let sys = lookup("constant").unwrap();
    let mut tr = cocycle_trace(&sys, &[0.0; 3], a.len(), 0.1, &TraceConfig::default()).unwrap();
    tr.a = a;
    tr
}

#[test]
fn constant_field_trace_has_no_hyperbolic_times() {
    let tr = synthetic_trace(vec![0.0; 50]);
    let cfg = HyperbolicTimeConfig { c0: 0.2, delta0: 0.1, eps0: 0.005, lip_bound: 0.0, kappa_min: 1 };
    let h = hyperbolic_times(&tr, &cfg).unwrap();
    assert!(h.indices.is_empty());
    assert_eq!(h.reason.as_deref(), Some(NUE_UNMET));
}

#[test]
fn uniform_contraction_makes_every_index_hyperbolic() {
    let c0 = 0.2;
    let tr = synthetic_trace(vec![-c0; 60]);
    assert!(tr.dist_trunc.iter().all(|d| *d == 1.0));
    let cfg = HyperbolicTimeConfig { c0, delta0: 0.1, eps0: 0.005, lip_bound: 0.0, kappa_min: 1 };
    let h = hyperbolic_times(&tr, &cfg).unwrap();
    assert_eq!(h.indices, (1..=60).collect::<Vec<_>>());
    assert!(h.reason.is_none());
    assert!((h.density - 1.0).abs() < 1e-15);
}

/// Both defining inequalities, checked over every window.
fn oracle(tr: &CocycleTrace, cfg: &HyperbolicTimeConfig) -> Vec<usize> {
    let c0 = cfg.c0;
    (cfg.kappa_min.max(1)..=tr.n)
        .filter(|&ni| {
            let mut s = 0.0;
            let hyp = (0..ni).rev().all(|m| {
                s += tr.a[m];
                s <= -c0 * (ni - m) as f64 / 4.0 + 1e-12
            });
            let sr = (0..ni).all(|j| {
                truncate(tr.dist_raw[j], cfg.delta0).ln() > -c0 * (ni - j) as f64 / 16.0 - cfg.lip_bound
            });
            hyp && sr
        })
        .collect()
}

#[test]
fn lorenz_hyperbolic_times_match_the_oracle() {
    let sys = lookup("lorenz").unwrap();
    let x = EnsembleSpec::new("lorenz", 1, 21)
        .points(&sys, &IntegratorConfig::default())
        .unwrap()
        .remove(0)
        .unwrap();
    let tr = cocycle_trace(&sys, &x, 5000, 0.1, &TraceConfig::default()).unwrap();
    let rate = -tr.mean_a();
    assert!(rate > 0.5);
    let cases = [
        HyperbolicTimeConfig { c0: rate, delta0: 0.1, eps0: rate / 40.0, lip_bound: sys.lip_bound, kappa_min: 1 },
        HyperbolicTimeConfig { c0: 0.1, delta0: 0.1, eps0: 0.0025, lip_bound: sys.lip_bound, kappa_min: 1 },
        // Small L and a wide delta make the recurrence condition bite.
        HyperbolicTimeConfig { c0: rate, delta0: 0.45, eps0: rate / 40.0, lip_bound: 0.0, kappa_min: 10 },
    ];
    for cfg in cases {
        let h = hyperbolic_times(&tr, &cfg).unwrap();
        assert!(!h.indices.is_empty());
        let expected = oracle(&tr, &cfg);
        for i in &h.indices {
            assert!(expected.contains(i), "false positive {i}");
        }
        assert_eq!(h.indices, expected);
        for ch in &h.checks {
            assert!(ch.hyptimex_margin >= 0.0 && ch.srtimex_margin > 0.0);
        }
    }
}
