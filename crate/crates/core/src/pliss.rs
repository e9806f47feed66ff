//! Pliss times for sequences and sampled functions, and hyperbolic times
//! along cocycle traces.
//!
//! [`pliss_times`] returns every index `n` in `1..=N` at which all tail
//! averages of the sequence ending at `n` stay above `c1`, via one pass over
//! the partial sums `S_k = sum_{j<=k} (a_j - c1)`: `n` qualifies iff `S_n`
//! is at least the running maximum of `S_0 .. S_{n-1}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::check_delta;
use crate::flow::truncate;
use crate::lpf::CocycleTrace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlissConfig {
    #[serde(rename = "A")]
    pub a_max: f64,
    pub c1: f64,
    pub c2: f64,
}

impl PlissConfig {
    pub fn new(a_max: f64, c1: f64, c2: f64) -> Result<Self> {
        let cfg = PlissConfig { a_max, c1, c2 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a_max >= self.c2 && self.c2 > self.c1) || !self.a_max.is_finite() {
            return Err(Error::Precondition(format!(
                "need A >= c2 > c1, got A = {}, c2 = {}, c1 = {}",
                self.a_max, self.c2, self.c1
            )));
        }
        Ok(())
    }

    pub fn zeta(&self) -> f64 {
        (self.c2 - self.c1) / (self.a_max - self.c1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlissResult {
    /// One-based, strictly increasing.
    pub indices: Vec<usize>,
    pub ell: usize,
    /// `zeta * N`.
    pub density_bound: f64,
    #[serde(rename = "N")]
    pub n: usize,
    /// Whether `sum a_j >= c2 N` held, in which case `ell > density_bound`.
    pub hypothesis: bool,
}

pub fn pliss_times(a: &[f64], cfg: &PlissConfig) -> Result<PlissResult> {
    cfg.validate()?;
    for (j, v) in a.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Precondition(format!("term a_{} is not finite", j + 1)));
        }
        if *v > cfg.a_max {
            return Err(Error::TermAboveBound {
                index: j + 1,
                value: *v,
                bound: cfg.a_max,
            });
        }
    }
    let indices = scan(a, cfg.c1);
    let n = a.len();
    Ok(PlissResult {
        ell: indices.len(),
        indices,
        density_bound: cfg.zeta() * n as f64,
        n,
        hypothesis: n > 0 && a.iter().sum::<f64>() >= cfg.c2 * n as f64,
    })
}

fn scan(a: &[f64], c1: f64) -> Vec<usize> {
    let mut out = Vec::new();
    let mut s = 0.0;
    let mut best = 0.0f64;
    for (j, v) in a.iter().enumerate() {
        s += v - c1;
        if s >= best {
            out.push(j + 1);
            best = s;
        }
    }
    out
}

/// Exhaustive check of every window `(n, n_i]`.
pub fn pliss_oracle(a: &[f64], c1: f64) -> Vec<usize> {
    (1..=a.len())
        .filter(|&ni| {
            (0..ni).all(|n| {
                let sum: f64 = a[n..ni].iter().sum();
                sum >= c1 * (ni - n) as f64
            })
        })
        .collect()
}

/// Values of a function on the uniform grid `t_k = k * spacing`,
/// `k = 0..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledFunction {
    pub values: Vec<f64>,
    pub spacing: f64,
}

impl SampledFunction {
    pub fn from_fn(t_end: f64, spacing: f64, f: impl Fn(f64) -> f64) -> Self {
        let k = (t_end / spacing).round() as usize;
        SampledFunction {
            values: (0..=k).map(|i| f(i as f64 * spacing)).collect(),
            spacing,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.cells() as f64 * self.spacing
    }

    pub fn cells(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    /// Smallest slope between consecutive samples.
    pub fn min_slope(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| (w[1] - w[0]) / self.spacing)
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowPlissResult {
    /// `mask[k]` marks `t_k`.
    pub mask: Vec<bool>,
    /// Marked cells `[t_k, t_{k+1})` times the spacing.
    pub measure: f64,
    pub theta: f64,
    pub horizon: f64,
}

impl FlowPlissResult {
    pub fn bound(&self) -> f64 {
        self.theta * self.horizon
    }
}

/// Grid version of the set of times `tau` with
/// `H(s) - H(tau) < (c + eps)(s - tau)` for every later grid time `s`.
pub fn flow_pliss(h: &SampledFunction, c: f64, eps: f64, a_lower: f64) -> Result<FlowPlissResult> {
    check_flow_preconditions(h, c, eps, a_lower)?;
    let k_max = h.cells();
    let slope = c + eps;
    let mut mask = vec![false; k_max + 1];
    let mut best = f64::NEG_INFINITY;
    for k in (0..=k_max).rev() {
        let g = h.values[k] - slope * k as f64 * h.spacing;
        mask[k] = g > best;
        best = best.max(g);
    }
    Ok(finish(h, mask, c, eps, a_lower))
}

fn finish(h: &SampledFunction, mask: Vec<bool>, c: f64, eps: f64, a_lower: f64) -> FlowPlissResult {
    let k_max = h.cells();
    let count = mask[..k_max].iter().filter(|m| **m).count();
    FlowPlissResult {
        measure: count as f64 * h.spacing,
        theta: eps / (c + eps - a_lower),
        horizon: h.horizon(),
        mask,
    }
}

fn check_flow_preconditions(h: &SampledFunction, c: f64, eps: f64, a_lower: f64) -> Result<()> {
    if h.values.len() < 2 || !(h.spacing > 0.0) {
        return Err(Error::Precondition("need at least one grid cell".into()));
    }
    if h.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("H has non-finite samples".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::Precondition(format!("eps = {eps} must be positive")));
    }
    if !(c > a_lower) {
        return Err(Error::Precondition(format!("need c > A, got c = {c}, A = {a_lower}")));
    }
    let scale = h.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if h.values[0].abs() > 1e-12 * scale {
        return Err(Error::Precondition(format!("H(0) = {} is not zero", h.values[0])));
    }
    let t = h.horizon();
    let end = h.values[h.cells()];
    if !(end < c * t) {
        return Err(Error::Precondition(format!("H(T) = {end} is not below cT = {}", c * t)));
    }
    let inf = h.min_slope();
    if !(inf > a_lower) {
        return Err(Error::Precondition(format!(
            "inf H' = {inf} is not above A = {a_lower}"
        )));
    }
    if !(c + eps > inf) {
        return Err(Error::Precondition(format!(
            "c + eps = {} is not above inf H' = {inf}",
            c + eps
        )));
    }
    Ok(())
}

/// Double loop over all grid pairs.
pub fn flow_pliss_oracle(h: &SampledFunction, c: f64, eps: f64, a_lower: f64) -> Result<FlowPlissResult> {
    check_flow_preconditions(h, c, eps, a_lower)?;
    let k_max = h.cells();
    let mask = (0..=k_max)
        .map(|k| {
            (k + 1..=k_max).all(|j| {
                let s = j as f64 * h.spacing;
                let tau = k as f64 * h.spacing;
                h.values[j] - h.values[k] < (c + eps) * (s - tau)
            })
        })
        .collect();
    Ok(finish(h, mask, c, eps, a_lower))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperbolicTimeConfig {
    pub c0: f64,
    pub delta0: f64,
    pub eps0: f64,
    pub lip_bound: f64,
    /// Lead time: indices below it are not reported, and the stronger
    /// recurrence bound `exp(-c0 (n - j) / 8)` is checked for
    /// `n - j >= kappa_min`.
    pub kappa_min: usize,
}

impl HyperbolicTimeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c0 > 0.0) {
            return Err(Error::Precondition(format!("c0 = {} must be positive", self.c0)));
        }
        check_delta(self.delta0)?;
        if !(self.eps0 > 0.0 && self.eps0 < self.c0 / 32.0) {
            return Err(Error::Precondition(format!(
                "eps0 = {} must lie in (0, c0/32 = {})",
                self.eps0,
                self.c0 / 32.0
            )));
        }
        if !(self.lip_bound >= 0.0) {
            return Err(Error::Precondition("lip_bound must be >= 0".into()));
        }
        Ok(())
    }
}

/// Margins of one hyperbolic time; both are non-negative (the recurrence
/// margin strictly positive) for reported indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicCheck {
    pub index: usize,
    /// `min_n [ -c0 (n_i - n)/4 - sum_{j=n}^{n_i-1} a_j ]`.
    pub hyptimex_margin: f64,
    /// `min_j [ log d_j + c0 (n_i - j)/16 + L ]`.
    pub srtimex_margin: f64,
    /// `min_{j <= n_i - kappa} [ log d_j + c0 (n_i - j)/8 ]`, if any `j`.
    pub kappa_margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicTimes {
    #[serde(rename = "N")]
    pub n: usize,
    pub c0: f64,
    pub indices: Vec<usize>,
    pub checks: Vec<HyperbolicCheck>,
    /// `indices.len() / N`.
    pub density: f64,
    /// Bound used for the terms `-a_i`.
    pub a_bound: f64,
    /// `(1/N) sum -log d_{delta0}(x_i)`, compared with `eps0`.
    pub sr_mean: f64,
    pub reason: Option<String>,
}

impl HyperbolicTimes {
    /// `{N, c0, indices, margins, density}` with margins as
    /// `[hyptimex, srtimex]` pairs.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "N": self.n,
            "c0": self.c0,
            "indices": self.indices,
            "margins": self
                .checks
                .iter()
                .map(|c| [c.hyptimex_margin, c.srtimex_margin])
                .collect::<Vec<_>>(),
            "density": self.density,
        })
    }
}

pub const NUE_UNMET: &str = "NUE sum hypothesis unmet";

/// Integer times at which the trace is both a Pliss time of `-a` (rate
/// `c0/4`) and keeps its past away from equilibria at the rate `c0/16`.
pub fn hyperbolic_times(trace: &CocycleTrace, cfg: &HyperbolicTimeConfig) -> Result<HyperbolicTimes> {
    cfg.validate()?;
    let n = trace.n;
    let c0 = cfg.c0;
    let b: Vec<f64> = trace.a.iter().map(|v| -v).collect();
    let log_d: Vec<f64> = trace
        .dist_raw
        .iter()
        .map(|d| truncate(*d, cfg.delta0).ln())
        .collect();
    let sr_mean = if n > 0 { -log_d.iter().sum::<f64>() / n as f64 } else { 0.0 };
    let max_b = b.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let a_bound = (cfg.lip_bound * trace.period).max(c0 / 2.0).max(max_b);
    let mut out = HyperbolicTimes {
        n,
        c0,
        indices: Vec::new(),
        checks: Vec::new(),
        density: 0.0,
        a_bound,
        sr_mean,
        reason: None,
    };
    if n == 0 || !(b.iter().sum::<f64>() >= c0 * n as f64 / 2.0) {
        out.reason = Some(NUE_UNMET.to_string());
        return Ok(out);
    }
    let pliss = pliss_times(&b, &PlissConfig::new(a_bound, c0 / 4.0, c0 / 2.0)?)?;

    // prefix[k] = sum_{j<k} a_j
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in &trace.a {
        prefix.push(prefix.last().unwrap() + v);
    }
    let mut hyp_min = vec![0.0; n + 1]; // min_{m<k} (prefix[m] + c0 m/4)
    let mut sr_min = vec![0.0; n + 1]; // min_{j<k} (log d_j - c0 j/16)
    let (mut hm, mut sm) = (f64::INFINITY, f64::INFINITY);
    for k in 1..=n {
        let j = k - 1;
        hm = hm.min(prefix[j] + c0 * j as f64 / 4.0);
        sm = sm.min(log_d[j] - c0 * j as f64 / 16.0);
        hyp_min[k] = hm;
        sr_min[k] = sm;
    }

    for &ni in &pliss.indices {
        if ni < cfg.kappa_min.max(1) {
            continue;
        }
        let nf = ni as f64;
        let hyp = -c0 * nf / 4.0 - prefix[ni] + hyp_min[ni];
        let sr = c0 * nf / 16.0 + cfg.lip_bound + sr_min[ni];
        if hyp >= 0.0 && sr > 0.0 {
            let kappa_margin = (cfg.kappa_min <= ni).then(|| {
                (0..=ni - cfg.kappa_min.max(1))
                    .map(|j| log_d[j] + c0 * (ni - j) as f64 / 8.0)
                    .fold(f64::INFINITY, f64::min)
            });
            out.indices.push(ni);
            out.checks.push(HyperbolicCheck {
                index: ni,
                hyptimex_margin: hyp,
                srtimex_margin: sr,
                kappa_margin,
            });
        }
    }
    out.density = out.indices.len() as f64 / n as f64;
    if out.indices.is_empty() {
        out.reason = Some("no index satisfies both conditions".to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn oracle_hand_example() {
        assert_eq!(pliss_oracle(&[1.0, -1.0, 1.0], 0.0), vec![1, 3]);
        assert!(pliss_oracle(&[], 0.3).is_empty());
        let cfg = PlissConfig::new(2.0, 0.0, 0.5).unwrap();
        assert_eq!(pliss_times(&[1.0, -1.0, 1.0], &cfg).unwrap().indices, vec![1, 3]);
    }

    #[test]
    fn constant_sequence_at_c2_is_all_times() {
        let cfg = PlissConfig::new(1.0, 0.1, 0.4).unwrap();
        let r = pliss_times(&[0.4; 25], &cfg).unwrap();
        assert_eq!(r.indices, (1..=25).collect::<Vec<_>>());
        assert_eq!(r.ell, 25);
        assert!(r.hypothesis);
    }

    #[test]
    fn term_above_bound_is_named() {
        let cfg = PlissConfig::new(1.0, 0.0, 0.5).unwrap();
        assert_eq!(
            pliss_times(&[0.5, 1.5], &cfg),
            Err(Error::TermAboveBound { index: 2, value: 1.5, bound: 1.0 })
        );
        assert!(PlissConfig::new(0.4, 0.1, 0.5).is_err());
        assert!((PlissConfig::new(1.0, 0.25, 0.5).unwrap().zeta() - 1.0 / 3.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn scan_matches_oracle(
            a in proptest::collection::vec(-1.0f64..1.0, 0..80),
            c1 in -0.5f64..0.5,
        ) {
            let cfg = PlissConfig::new(1.0, c1, 1.0f64.min(c1 + 0.5)).unwrap();
            prop_assert_eq!(pliss_times(&a, &cfg).unwrap().indices, pliss_oracle(&a, c1));
        }

        #[test]
        fn count_bound_when_hypothesis_holds(
            a in proptest::collection::vec(-1.0f64..1.0, 1..120),
        ) {
            let cfg = PlissConfig::new(1.0, -0.2, 0.0).unwrap();
            let r = pliss_times(&a, &cfg).unwrap();
            if r.hypothesis {
                prop_assert!(r.ell as f64 > r.density_bound);
            }
        }
    }

    #[test]
    fn linear_function_below_slope_marks_everything() {
        let h = SampledFunction::from_fn(10.0, 0.01, |t| 0.5 * t);
        let r = flow_pliss(&h, 1.0, 0.1, 0.0).unwrap();
        assert!(r.mask.iter().all(|m| *m));
        assert!((r.measure - 10.0).abs() < 1e-9);
    }

    #[test]
    fn flow_preconditions_are_named() {
        let h = SampledFunction::from_fn(1.0, 0.1, |t| 2.0 * t);
        assert!(matches!(flow_pliss(&h, 1.0, 0.5, 0.0), Err(Error::Precondition(m)) if m.contains("H(T)")));
        let h = SampledFunction::from_fn(1.0, 0.1, |t| 1.0 + t);
        assert!(matches!(flow_pliss(&h, 2.0, 0.5, 0.0), Err(Error::Precondition(m)) if m.contains("H(0)")));
        let h = SampledFunction::from_fn(1.0, 0.1, |t| 0.5 * t);
        assert!(matches!(flow_pliss(&h, 2.0, 0.5, 1.0), Err(Error::Precondition(m)) if m.contains("inf H'")));
    }
}
