use nalgebra::DMatrix;
use srblab::criteria::{
    ase_points, det_identity_check, multiplicativity_check, nue_points, nue_t_points, nue_test,
    sr_points, sr_sweep, EnsembleSpec, Verdict,
};
use srblab::flow::{lookup, IntegratorConfig};
use srblab::lpf::{cocycle_trace, cocycle_trace_from, TraceConfig};

fn tc() -> TraceConfig {
    TraceConfig::default()
}

fn ic() -> IntegratorConfig {
    IntegratorConfig::default()
}

fn lorenz_points(count: usize, seed: u64) -> Vec<Vec<f64>> {
    let sys = lookup("lorenz").unwrap();
    EnsembleSpec::new("lorenz", count, seed)
        .points(&sys, &ic())
        .unwrap()
        .into_iter()
        .map(|p| p.unwrap())
        .collect()
}

#[test]
fn constant_field_fails_expansion() {
    let sys = lookup("constant").unwrap();
    let rep = nue_points(&sys, &[vec![0.0; 3], vec![1.0, 2.0, 3.0]], 0.1, 100, &tc()).unwrap();
    assert_eq!(rep.count(Verdict::Fail), 2);
    assert_eq!(rep.pass_fraction, 0.0);
    for o in &rep.per_orbit {
        assert!(o.statistic.abs() < 1e-12);
        assert_eq!(o.running.len(), 100);
    }
}

#[test]
fn expanding_normal_direction_passes_with_rate_one() {
    // A = [[0,1,0],[0,0,0],[0,0,1]] from e2: G = e1 along the orbit and the
    // normal centre-unstable direction e3 expands at rate 1.
    let sys = lookup("linear(0,1,0,0,0,0,0,0,1)").unwrap();
    let x = vec![vec![0.0, 1.0, 0.0]];
    let rep = nue_points(&sys, &x, 0.5, 100, &tc()).unwrap();
    assert_eq!(rep.per_orbit[0].verdict, Verdict::Pass);
    assert!((rep.per_orbit[0].statistic + 1.0).abs() < 1e-9, "{}", rep.per_orbit[0].statistic);
    for period in [0.5, 2.0] {
        let r = nue_t_points(&sys, &x, 0.5, period, 100, &tc()).unwrap();
        assert!((r.per_orbit[0].statistic + 1.0).abs() < 1e-9);
    }
}

#[test]
fn period_one_reduces_to_time_one_test() {
    let sys = lookup("lorenz").unwrap();
    let pts = lorenz_points(2, 4);
    let a = nue_points(&sys, &pts, 0.1, 100, &tc()).unwrap();
    let b = nue_t_points(&sys, &pts, 0.1, 1.0, 100, &tc()).unwrap();
    assert_eq!(a.per_orbit, b.per_orbit);
}

#[test]
fn nue_report_is_seed_deterministic() {
    let sys = lookup("lorenz").unwrap();
    let ens = EnsembleSpec::new("lorenz", 3, 99);
    let a = nue_test(&sys, &ens, 0.1, 100, &tc()).unwrap();
    let b = nue_test(&sys, &ens, 0.1, 100, &tc()).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.seed, Some(99));
}

#[test]
fn lorenz_expansion_is_stable_under_longer_horizons() {
    let sys = lookup("lorenz").unwrap();
    let pts = lorenz_points(6, 12);
    let short = nue_points(&sys, &pts, 0.1, 200, &tc()).unwrap();
    let long = nue_points(&sys, &pts, 0.1, 400, &tc()).unwrap();
    let flips = short
        .per_orbit
        .iter()
        .zip(&long.per_orbit)
        .filter(|(s, l)| s.verdict == Verdict::Pass && l.verdict == Verdict::Fail)
        .count();
    assert!(flips as f64 <= 0.1 * pts.len() as f64);
    assert!(short.pass_fraction >= 0.8);
}

#[test]
fn recurrence_is_vacuous_without_equilibria() {
    let sys = lookup("constant").unwrap();
    let rep = sr_points(&sys, &[vec![0.0; 3]], 0.1, 0.05, 10.0, &ic()).unwrap();
    assert_eq!(rep.per_orbit[0].verdict, Verdict::Pass);
    assert_eq!(rep.per_orbit[0].statistic, 0.0);
    assert!(rep.per_orbit[0].running.iter().all(|v| *v == 0.0));
    assert!(!rep.notes.is_empty());
}

#[test]
fn recurrence_at_twice_delta_is_zero() {
    // Orbit on a circle of radius 0.31 > 2 delta around the origin equilibrium: with
    // delta = 0.15 the truncated distance is 1 everywhere.
    let sys = lookup("linear(0,-1,0,1,0,0,0,0,-1)").unwrap();
    let rep = sr_points(&sys, &[vec![0.31, 0.0, 0.0]], 0.15, 0.05, 20.0, &ic()).unwrap();
    assert_eq!(rep.per_orbit[0].statistic, 0.0);
    assert_eq!(rep.per_orbit[0].verdict, Verdict::Pass);
}

#[test]
fn recurrence_on_a_circle_closer_than_delta() {
    // Radius 0.05 with delta = 0.1: -log 0.05 exactly.
    let sys = lookup("linear(0,-1,0,1,0,0,0,0,-1)").unwrap();
    let rep = sr_points(&sys, &[vec![0.05, 0.0, 0.0]], 0.1, 0.05, 10.0, &ic()).unwrap();
    assert!((rep.per_orbit[0].statistic + 0.05f64.ln()).abs() < 1e-9);
    assert_eq!(rep.per_orbit[0].verdict, Verdict::Fail);
    let sweep = sr_sweep(&sys, &[vec![0.05, 0.0, 0.0]], &[0.01, 0.1], &[0.05, 4.0], 10.0, &ic()).unwrap();
    assert_eq!(sweep.pass_fraction, vec![vec![1.0, 1.0], vec![0.0, 1.0]]);
}

#[test]
fn area_rate_of_linear_plane() {
    let sys = lookup("diag(1,0.5,-2)").unwrap();
    let cfg = TraceConfig { warm: 10.0, ..tc() };
    let rep = ase_points(&sys, &[vec![1e-6, 1e-6, 0.3]], 1.0, 10.0, 1, &cfg).unwrap();
    assert!((rep.per_orbit[0].statistic - 1.5).abs() < 1e-8, "{}", rep.per_orbit[0].statistic);
    assert_eq!(rep.per_orbit[0].verdict, Verdict::Pass);
    let sys = lookup("constant").unwrap();
    let rep = ase_points(&sys, &[vec![0.0; 3]], 0.1, 5.0, 1, &tc()).unwrap();
    assert_eq!(rep.per_orbit[0].verdict, Verdict::Fail);
}

#[test]
fn lorenz_planes_expand_area() {
    let sys = lookup("lorenz").unwrap();
    let pts = lorenz_points(10, 31);
    let rep = ase_points(&sys, &pts, 0.0, 200.0, 1, &tc()).unwrap();
    assert!(rep.pass_fraction >= 0.9, "{}", rep.pass_fraction);
}

#[test]
fn determinant_identity() {
    let sys = lookup("constant").unwrap();
    let tr = cocycle_trace(&sys, &[0.0; 3], 10, 0.1, &tc()).unwrap();
    assert_eq!(det_identity_check(&tr).unwrap(), 0.0);

    let sys = lookup("linear(0,1,0,0,0,0,0,0,-1)").unwrap();
    let plane = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    let tr = cocycle_trace_from(&sys, &[0.0, 1.0, 0.0], &plane, 20, 0.1, 1.0, &ic()).unwrap();
    assert!(det_identity_check(&tr).unwrap() < 1e-8);

    let sys = lookup("lorenz").unwrap();
    let x = lorenz_points(1, 2).remove(0);
    let tr = cocycle_trace(&sys, &x, 500, 0.1, &tc()).unwrap();
    assert!(det_identity_check(&tr).unwrap() < 1e-3);
}

#[test]
fn determinant_identity_converges_with_step() {
    let sys = lookup("linear(0.2,1,0,0,-0.1,0,0,0,0.5)").unwrap();
    let plane = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    // The orbit of (1, 0, 1) stays in the invariant plane span(e1, e3).
    let x = [1.0, 0.0, 1.0];
    let residual = |h: f64| {
        let tr = cocycle_trace_from(&sys, &x, &plane, 5, 0.1, 1.0, &IntegratorConfig::with_step(h));
        tr.map(|t| det_identity_check(&t).unwrap())
    };
    let coarse = residual(0.02).unwrap();
    let fine = residual(0.01).unwrap();
    assert!(fine <= coarse.max(1e-12) / 1.9 || fine < 1e-10, "{coarse:e} {fine:e}");
}

#[test]
fn multiplicativity_defects() {
    let sys = lookup("constant").unwrap();
    assert!(multiplicativity_check(&sys, &[0.0; 3], 1.0, 2.0, None, &tc()).unwrap() < 1e-12);

    let sys = lookup("diag(1,0.5,-2)").unwrap();
    let plane = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    let cfg = TraceConfig { warm: 8.0, ..tc() };
    for (s, t) in [(0.5, 0.5), (1.0, 2.0), (2.0, 1.5)] {
        let d = multiplicativity_check(&sys, &[1e-4, 1e-4, 0.3], s, t, Some(&plane), &cfg).unwrap();
        assert!(d < 1e-8, "{d:e}");
    }

    let sys = lookup("lorenz").unwrap();
    for x in lorenz_points(5, 17) {
        let early = multiplicativity_check(&sys, &x, 1.0, 1.0, None, &tc()).unwrap();
        let late = multiplicativity_check(&sys, &x, 1.0, 10.0, None, &tc()).unwrap();
        assert!(late < early, "{late:e} vs {early:e}");
    }
}
