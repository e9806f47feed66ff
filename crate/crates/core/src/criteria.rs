//! Ensemble verdicts for non-uniform expansion along the centre-unstable
//! normal bundle, slow recurrence to equilibria and sectional area
//! expansion, plus two structural checks on traces.
//!
//! Finite-horizon verdicts use the mean over the final half of the window.
//! A statistic within 10% of its threshold is reported as inconclusive.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{
    advance, check_delta, integrate_visit, nearest_distance, tangent_advance, truncate,
    IntegratorConfig, SystemSpec, TangentFrame,
};
use crate::linalg;
use crate::lpf::{cocycle_trace, push_frame, seed_cu_frame, CocycleTrace, TraceConfig};

/// Orbits closer than this to an equilibrium are excluded from recurrence
/// statistics.
pub const SR_HIT_DISTANCE: f64 = 1e-12;

/// Random initial conditions: uniform in the box around the trapping
/// region, rejected outside it, then flowed for `burn_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub system: String,
    pub count: usize,
    pub seed: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
}

fn default_burn_in() -> f64 {
    50.0
}

impl EnsembleSpec {
    pub fn new(system: &str, count: usize, seed: u64) -> Self {
        EnsembleSpec {
            system: system.to_string(),
            count,
            seed,
            burn_in: default_burn_in(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::InvalidArgument("ensemble count must be >= 1".into()));
        }
        if !(self.burn_in >= 0.0) {
            return Err(Error::InvalidArgument("burn-in must be >= 0".into()));
        }
        Ok(())
    }

    /// Initial conditions before burn-in. Sampling is sequential, so the
    /// set depends only on the seed.
    pub fn raw_points(&self, sys: &SystemSpec) -> Vec<Vec<f64>> {
        sample_trap(sys, self.count, self.seed)
    }

    /// Burned-in initial conditions; orbits that fail during burn-in carry
    /// their error.
    pub fn points(&self, sys: &SystemSpec, cfg: &IntegratorConfig) -> Result<Vec<Result<Vec<f64>>>> {
        self.validate()?;
        Ok(self
            .raw_points(sys)
            .par_iter()
            .map(|x| advance(sys, x, self.burn_in, cfg))
            .collect())
    }
}

/// `count` points uniform in the trapping region.
pub fn sample_trap(sys: &SystemSpec, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = sys.trap_box();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x: Vec<f64> = (0..sys.dim()).map(|k| rng.gen_range(b.lo[k]..=b.hi[k])).collect();
        if sys.in_trap(&x) {
            out.push(x);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
    Excluded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Below,
    AtLeast,
}

fn judge(stat: f64, threshold: f64, dir: Direction) -> Verdict {
    if !stat.is_finite() {
        return Verdict::Fail;
    }
    if (stat - threshold).abs() <= 0.1 * threshold.abs() {
        return Verdict::Inconclusive;
    }
    let pass = match dir {
        Direction::Below => stat < threshold,
        Direction::AtLeast => stat >= threshold,
    };
    if pass {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitResult {
    pub index: usize,
    pub start: Vec<f64>,
    /// Tail statistic compared with the threshold.
    pub statistic: f64,
    pub verdict: Verdict,
    /// Running average sampled at the recorded steps.
    pub running: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub criterion: String,
    pub system: String,
    pub seed: Option<u64>,
    pub thresholds: BTreeMap<String, f64>,
    pub per_orbit: Vec<OrbitResult>,
    /// Passing orbits over non-excluded orbits.
    pub pass_fraction: f64,
    pub excluded_count: usize,
    pub notes: Vec<String>,
}

impl CriterionReport {
    fn assemble(
        criterion: &str,
        sys: &SystemSpec,
        thresholds: &[(&str, f64)],
        per_orbit: Vec<OrbitResult>,
    ) -> Self {
        let excluded_count = per_orbit.iter().filter(|o| o.verdict == Verdict::Excluded).count();
        let included = per_orbit.len() - excluded_count;
        let passed = per_orbit.iter().filter(|o| o.verdict == Verdict::Pass).count();
        CriterionReport {
            criterion: criterion.to_string(),
            system: sys.name.clone(),
            seed: None,
            thresholds: thresholds.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            per_orbit,
            pass_fraction: if included == 0 { 0.0 } else { passed as f64 / included as f64 },
            excluded_count,
            notes: Vec::new(),
        }
    }

    pub fn count(&self, v: Verdict) -> usize {
        self.per_orbit.iter().filter(|o| o.verdict == v).count()
    }

    pub fn verdicts(&self) -> Vec<Verdict> {
        self.per_orbit.iter().map(|o| o.verdict).collect()
    }
}

type Outcome = Result<(f64, Vec<f64>)>;

fn evaluate<F>(starts: &[Result<Vec<f64>>], threshold: f64, dir: Direction, f: F) -> Vec<OrbitResult>
where
    F: Fn(&[f64]) -> Outcome + Sync,
{
    starts
        .par_iter()
        .enumerate()
        .map(|(index, x)| {
            let outcome = x.as_ref().map_err(|e| e.clone()).and_then(|x| f(x));
            let start = x.clone().unwrap_or_default();
            match outcome {
                Ok((statistic, running)) => OrbitResult {
                    index,
                    start,
                    statistic,
                    verdict: judge(statistic, threshold, dir),
                    running,
                    error: None,
                },
                Err(e) => OrbitResult {
                    index,
                    start,
                    statistic: f64::NAN,
                    verdict: Verdict::Excluded,
                    running: Vec::new(),
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

fn running_mean(v: &[f64]) -> Vec<f64> {
    let mut s = 0.0;
    v.iter()
        .enumerate()
        .map(|(i, x)| {
            s += x;
            s / (i + 1) as f64
        })
        .collect()
}

fn tail_mean(v: &[f64]) -> f64 {
    let tail = &v[v.len() / 2..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

fn with_seed(mut r: CriterionReport, ens: &EnsembleSpec) -> CriterionReport {
    r.seed = Some(ens.seed);
    r
}

fn wrap(points: Vec<Vec<f64>>) -> Vec<Result<Vec<f64>>> {
    points.into_iter().map(Ok).collect()
}

/// Non-uniform expansion of the normal centre-unstable cocycle over
/// time-one steps.
pub fn nue_test(sys: &SystemSpec, ens: &EnsembleSpec, c0: f64, n: usize, cfg: &TraceConfig) -> Result<CriterionReport> {
    let cfg = TraceConfig { period: 1.0, ..cfg.clone() };
    let starts = ens.points(sys, &cfg.integrator)?;
    Ok(with_seed(nue_on(sys, &starts, c0, n, &cfg, "nue")?, ens))
}

/// [`nue_test`] on explicit, already burned-in points.
pub fn nue_points(sys: &SystemSpec, points: &[Vec<f64>], c0: f64, n: usize, cfg: &TraceConfig) -> Result<CriterionReport> {
    let cfg = TraceConfig { period: 1.0, ..cfg.clone() };
    nue_on(sys, &wrap(points.to_vec()), c0, n, &cfg, "nue")
}

/// Time-`T` version: steps of length `T` with `a_i / T`.
pub fn nue_t_test(
    sys: &SystemSpec,
    ens: &EnsembleSpec,
    c0: f64,
    period: f64,
    n: usize,
    cfg: &TraceConfig,
) -> Result<CriterionReport> {
    let cfg = TraceConfig { period, ..cfg.clone() };
    let starts = ens.points(sys, &cfg.integrator)?;
    Ok(with_seed(nue_on(sys, &starts, c0, n, &cfg, "nue_t")?, ens))
}

pub fn nue_t_points(
    sys: &SystemSpec,
    points: &[Vec<f64>],
    c0: f64,
    period: f64,
    n: usize,
    cfg: &TraceConfig,
) -> Result<CriterionReport> {
    let cfg = TraceConfig { period, ..cfg.clone() };
    nue_on(sys, &wrap(points.to_vec()), c0, n, &cfg, "nue_t")
}

fn nue_on(
    sys: &SystemSpec,
    starts: &[Result<Vec<f64>>],
    c0: f64,
    n: usize,
    cfg: &TraceConfig,
    name: &str,
) -> Result<CriterionReport> {
    if n < 100 {
        return Err(Error::Precondition(format!("need n >= 100 steps, got {n}")));
    }
    if !(c0 > 0.0) {
        return Err(Error::Precondition(format!("c0 = {c0} must be positive")));
    }
    cfg.validate()?;
    let period = cfg.period;
    let per_orbit = evaluate(starts, -c0, Direction::Below, |x| {
        let tr = cocycle_trace(sys, x, n, 0.25, cfg)?;
        let a: Vec<f64> = tr.a.iter().map(|v| v / period).collect();
        Ok((tail_mean(&a), running_mean(&a)))
    });
    Ok(CriterionReport::assemble(
        name,
        sys,
        &[("c0", c0), ("T", period), ("n", n as f64)],
        per_orbit,
    ))
}

/// Slow recurrence: tail average of `-log d_delta` along orbits of length
/// `horizon`, by the trapezoid rule on the integrator grid.
pub fn sr_test(
    sys: &SystemSpec,
    ens: &EnsembleSpec,
    delta: f64,
    eps: f64,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<CriterionReport> {
    let starts = ens.points(sys, cfg)?;
    Ok(with_seed(sr_on(sys, &starts, delta, eps, horizon, cfg)?, ens))
}

pub fn sr_points(
    sys: &SystemSpec,
    points: &[Vec<f64>],
    delta: f64,
    eps: f64,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<CriterionReport> {
    sr_on(sys, &wrap(points.to_vec()), delta, eps, horizon, cfg)
}

fn sr_on(
    sys: &SystemSpec,
    starts: &[Result<Vec<f64>>],
    delta: f64,
    eps: f64,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<CriterionReport> {
    check_delta(delta)?;
    if !(eps > 0.0 && horizon > 0.0) {
        return Err(Error::Precondition("eps and horizon must be positive".into()));
    }
    let per_orbit = evaluate(starts, eps, Direction::Below, |x| {
        let r = recurrence_integrals(sys, x, &[delta], horizon, cfg)?;
        Ok((r.tail[0], r.running.into_iter().next().unwrap()))
    });
    let mut rep = CriterionReport::assemble(
        "sr",
        sys,
        &[("delta", delta), ("eps", eps), ("T", horizon)],
        per_orbit,
    );
    if sys.equilibria.is_empty() {
        rep.notes.push("no equilibria: recurrence condition holds vacuously".into());
    }
    Ok(rep)
}

struct Recurrence {
    /// Per delta: average over `[T/2, T]`.
    tail: Vec<f64>,
    /// Per delta: `(1/t) int_0^t` at integer times.
    running: Vec<Vec<f64>>,
}

fn recurrence_integrals(
    sys: &SystemSpec,
    x: &[f64],
    deltas: &[f64],
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<Recurrence> {
    let k = deltas.len();
    let half = horizon / 2.0;
    let mut total = vec![0.0; k];
    let mut at_half = vec![0.0; k];
    let mut running = vec![Vec::new(); k];
    let mut prev: Option<(f64, Vec<f64>)> = None;
    let mut next_mark = 1.0;
    let mut half_done = false;
    let mut hit: Option<(f64, f64)> = None;
    let mut psi = vec![0.0; k];
    integrate_visit(sys, x, horizon, cfg, |t, p| {
        if hit.is_some() {
            return;
        }
        let d = nearest_distance(p, &sys.equilibria);
        if d <= SR_HIT_DISTANCE {
            hit = Some((t, d));
            return;
        }
        for (v, delta) in psi.iter_mut().zip(deltas) {
            *v = -truncate(d, *delta).ln();
        }
        if let Some((t0, ref v0)) = prev {
            // Split the cell at T/2 so the tail window is exact on the grid.
            if !half_done && t >= half - 1e-12 {
                let w = (half - t0).max(0.0);
                for j in 0..k {
                    let mid = v0[j] + (psi[j] - v0[j]) * w / (t - t0);
                    at_half[j] = total[j] + 0.5 * w * (v0[j] + mid);
                }
                half_done = true;
            }
            for j in 0..k {
                total[j] += 0.5 * (t - t0) * (v0[j] + psi[j]);
            }
        }
        if t >= next_mark - 1e-9 {
            for j in 0..k {
                running[j].push(total[j] / t);
            }
            next_mark += 1.0;
        }
        prev = Some((t, psi.clone()));
    })?;
    if let Some((time, distance)) = hit {
        return Err(Error::NearSingularity { time, distance });
    }
    let tail = (0..k).map(|j| (total[j] - at_half[j]) / (horizon - half)).collect();
    Ok(Recurrence { tail, running })
}

/// Pass fractions of the recurrence test over a `(delta, eps)` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrSweep {
    pub system: String,
    pub deltas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub horizon: f64,
    /// `pass_fraction[i][j]` for `deltas[i]`, `epsilons[j]`.
    pub pass_fraction: Vec<Vec<f64>>,
    /// Per delta, per orbit tail averages (NaN for excluded orbits).
    pub tail: Vec<Vec<f64>>,
    pub excluded_count: usize,
}

pub fn sr_sweep(
    sys: &SystemSpec,
    points: &[Vec<f64>],
    deltas: &[f64],
    epsilons: &[f64],
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<SrSweep> {
    for d in deltas {
        check_delta(*d)?;
    }
    if epsilons.iter().any(|e| !(*e > 0.0)) || !(horizon > 0.0) {
        return Err(Error::Precondition("eps values and horizon must be positive".into()));
    }
    let per: Vec<Option<Vec<f64>>> = points
        .par_iter()
        .map(|x| recurrence_integrals(sys, x, deltas, horizon, cfg).ok().map(|r| r.tail))
        .collect();
    let excluded_count = per.iter().filter(|p| p.is_none()).count();
    let included = per.len() - excluded_count;
    let tail: Vec<Vec<f64>> = (0..deltas.len())
        .map(|i| per.iter().map(|p| p.as_ref().map_or(f64::NAN, |v| v[i])).collect())
        .collect();
    let pass_fraction = tail
        .iter()
        .map(|row| {
            epsilons
                .iter()
                .map(|e| {
                    let passed = row
                        .iter()
                        .filter(|v| judge(**v, *e, Direction::Below) == Verdict::Pass)
                        .count();
                    if included == 0 { 0.0 } else { passed as f64 / included as f64 }
                })
                .collect()
        })
        .collect();
    Ok(SrSweep {
        system: sys.name.clone(),
        deltas: deltas.to_vec(),
        epsilons: epsilons.to_vec(),
        horizon,
        pass_fraction,
        tail,
        excluded_count,
    })
}

/// Pushes a 2-frame in blocks of at most one time unit, returning the
/// running log-area at integer times and the total.
fn area_growth(
    sys: &SystemSpec,
    x: &[f64],
    frame: &DMatrix<f64>,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<(f64, Vec<f64>)> {
    let mut fr = TangentFrame::new(x.to_vec(), frame.clone())?;
    let mut total = 0.0;
    let mut elapsed = 0.0;
    let mut running = Vec::new();
    while elapsed < horizon - 1e-12 {
        let dt = (horizon - elapsed).min(1.0);
        let st = tangent_advance(sys, &fr, dt, cfg)?;
        total += st.logdet;
        elapsed += dt;
        running.push(total / elapsed);
        fr = TangentFrame {
            base: st.point,
            frame: st.frame,
        };
    }
    Ok((total, running))
}

/// Area expansion of 2-planes inside the centre-unstable bundle: the rate
/// `log |det(Dphi_T restricted to L)| / T` at the horizon must reach
/// `c_star` for every sampled plane. With `d_cu = 2` the only plane is the
/// bundle itself.
pub fn ase_test(
    sys: &SystemSpec,
    ens: &EnsembleSpec,
    c_star: f64,
    horizon: f64,
    plane_samples: usize,
    cfg: &TraceConfig,
) -> Result<CriterionReport> {
    let starts = ens.points(sys, &cfg.integrator)?;
    Ok(with_seed(ase_on(sys, &starts, c_star, horizon, plane_samples, cfg)?, ens))
}

pub fn ase_points(
    sys: &SystemSpec,
    points: &[Vec<f64>],
    c_star: f64,
    horizon: f64,
    plane_samples: usize,
    cfg: &TraceConfig,
) -> Result<CriterionReport> {
    ase_on(sys, &wrap(points.to_vec()), c_star, horizon, plane_samples, cfg)
}

fn ase_on(
    sys: &SystemSpec,
    starts: &[Result<Vec<f64>>],
    c_star: f64,
    horizon: f64,
    plane_samples: usize,
    cfg: &TraceConfig,
) -> Result<CriterionReport> {
    cfg.validate()?;
    let d_cu = sys.d_cu();
    if d_cu < 2 {
        return Err(Error::Precondition(format!("need d_cu >= 2, system has {d_cu}")));
    }
    if !(horizon > 0.0) {
        return Err(Error::Precondition("horizon must be positive".into()));
    }
    let planes = if d_cu == 2 { 1 } else { plane_samples.max(1) };
    let ic = &cfg.integrator;
    let per_orbit = evaluate(starts, c_star, Direction::AtLeast, |x| {
        let seed = seed_cu_frame(sys, x, d_cu);
        let (y, ecu) = push_frame(sys, x, &seed, cfg.warm, ic, 0.0)?;
        let mut worst: Option<(f64, Vec<f64>)> = None;
        for p in 0..planes {
            let frame = if d_cu == 2 {
                ecu.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(0xa5e0 + p as u64);
                let c = DMatrix::from_fn(d_cu, 2, |_, _| rng.gen_range(-1.0..1.0));
                linalg::orthonormalize(&(&ecu * c))
            };
            let (total, running) = area_growth(sys, &y, &frame, horizon, ic)?;
            let rate = total / horizon;
            if worst.as_ref().is_none_or(|(r, _)| rate < *r) {
                worst = Some((rate, running));
            }
        }
        Ok(worst.unwrap())
    });
    Ok(CriterionReport::assemble(
        "ase",
        sys,
        &[("c_star", c_star), ("T", horizon), ("planes", planes as f64)],
        per_orbit,
    ))
}

/// `|LHS - RHS|` of the identity
/// `(1/n) sum logdet_cu + (log|G(x_0)| - log|G(x_n)|)/n = (1/n) sum log|P|`.
pub fn det_identity_check(trace: &CocycleTrace) -> Result<f64> {
    if trace.d_cu != 2 {
        return Err(Error::Unsupported(format!(
            "the determinant identity is triangular only for d_cu = 2, trace has {}",
            trace.d_cu
        )));
    }
    if trace.n == 0 {
        return Err(Error::Precondition("empty trace".into()));
    }
    let n = trace.n as f64;
    let lhs = trace.logdet_cu.iter().sum::<f64>() / n + (trace.log_g[0] - trace.log_g_end) / n;
    let rhs = trace.log_p.iter().sum::<f64>() / n;
    Ok((lhs - rhs).abs())
}

/// Defect of multiplicativity of the centre-unstable Jacobian at
/// `y = phi_W(x)`, `W = cfg.warm`:
/// `|logdet(Dphi_{t+s} | F_y) - logdet(Dphi_t | F_y) - logdet(Dphi_s | E_{phi_t y})|`.
///
/// `F_y` is `plane` (a basis at `y`) or, if `None`, the extension
/// `span(G(y), fixed generic vector)`; `E` is the converged centre-unstable
/// estimate, pushed along the orbit from `x`.
pub fn multiplicativity_check(
    sys: &SystemSpec,
    x: &[f64],
    s: f64,
    t: f64,
    plane: Option<&DMatrix<f64>>,
    cfg: &TraceConfig,
) -> Result<f64> {
    cfg.validate()?;
    if !(s > 0.0 && t > 0.0) {
        return Err(Error::Precondition("s and t must be positive".into()));
    }
    let ic = &cfg.integrator;
    let d_cu = sys.d_cu();
    let seed = seed_cu_frame(sys, x, d_cu);
    let (y, _) = push_frame(sys, x, &seed, cfg.warm, ic, 0.0)?;
    let (yt, e_ref) = push_frame(sys, x, &seed, cfg.warm + t, ic, 0.0)?;
    let f = match plane {
        Some(p) => p.clone(),
        None => seed_cu_frame(sys, &y, d_cu),
    };
    let (whole, _) = area_growth(sys, &y, &f, t + s, ic)?;
    let (first, _) = area_growth(sys, &y, &f, t, ic)?;
    let (second, _) = area_growth(sys, &yt, &e_ref, s, ic)?;
    Ok((whole - first - second).abs())
}
