use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::splitting::{normal_coordinates, push_frame, seed_cu_frame};
use super::{check_regular, SINGULARITY_DISTANCE};
use crate::error::{Error, Result};
use crate::flow::{
    check_delta, nearest_distance, tangent_advance, truncate, IntegratorConfig, SystemSpec,
    TangentFrame,
};
use crate::linalg;

/// Parameters shared by every trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceConfig {
    pub integrator: IntegratorConfig,
    /// Time over which the centre-unstable frame is pushed before the first
    /// recorded step.
    pub warm: f64,
    /// Time between recorded steps.
    pub period: f64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            integrator: IntegratorConfig::default(),
            warm: 20.0,
            period: 1.0,
        }
    }
}

impl TraceConfig {
    pub fn validate(&self) -> Result<()> {
        self.integrator.validate()?;
        if !(self.warm >= 0.0 && self.warm.is_finite()) {
            return Err(Error::InvalidArgument(format!("warm-up {} must be >= 0", self.warm)));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::InvalidArgument(format!("period {} must be > 0", self.period)));
        }
        Ok(())
    }
}

/// Per-step quantities along `x_i = phi_{i T}(base)`, `i = 0..n-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocycleTrace {
    pub system: String,
    /// Initial condition handed to the trace.
    pub start: Vec<f64>,
    /// `x_0`, the point reached after the warm-up.
    pub base: Vec<f64>,
    pub delta: f64,
    pub period: f64,
    pub d_cu: usize,
    pub n: usize,
    /// `log |(P^T restricted to N^cu_{x_i})^{-1}|`.
    pub a: Vec<f64>,
    /// `log |P^T restricted to N^cu_{x_i}|`.
    pub log_p: Vec<f64>,
    /// `log |G(x_i)|`.
    pub log_g: Vec<f64>,
    /// `log |G(x_n)|`.
    pub log_g_end: f64,
    /// `log |det(Dphi_T restricted to E^cu_{x_i})|`.
    pub logdet_cu: Vec<f64>,
    /// Distance from `x_i` to the nearest equilibrium.
    pub dist_raw: Vec<f64>,
    pub dist_trunc: Vec<f64>,
    /// Distance of the unit flow direction at `x_i` from the frame.
    pub residual: Vec<f64>,
    /// `x_0 .. x_n`.
    pub points: Vec<Vec<f64>>,
}

impl CocycleTrace {
    /// `x_n`.
    pub fn end(&self) -> &[f64] {
        &self.points[self.n]
    }

    pub fn mean_a(&self) -> f64 {
        self.a.iter().sum::<f64>() / self.n as f64
    }
}

/// Trace from `x`: a seeded centre-unstable frame is pushed over
/// `cfg.warm`, then `n` steps of length `cfg.period` are recorded.
pub fn cocycle_trace(
    sys: &SystemSpec,
    x: &[f64],
    n: usize,
    delta: f64,
    cfg: &TraceConfig,
) -> Result<CocycleTrace> {
    cfg.validate()?;
    let d_cu = sys.d_cu();
    if d_cu < 2 {
        return Err(unsupported(d_cu));
    }
    let seed = seed_cu_frame(sys, x, d_cu);
    let (base, frame) = push_frame(sys, x, &seed, cfg.warm, &cfg.integrator, SINGULARITY_DISTANCE)?;
    let mut tr = cocycle_trace_from(sys, &base, &frame, n, delta, cfg.period, &cfg.integrator)?;
    tr.start = x.to_vec();
    Ok(tr)
}

fn unsupported(d_cu: usize) -> Error {
    Error::Unsupported(format!(
        "the normal centre-unstable bundle is empty for d_cu = {d_cu}"
    ))
}

/// Trace from `x` with the given centre-unstable frame at `x` (columns
/// need not be orthonormal) and no warm-up.
pub fn cocycle_trace_from(
    sys: &SystemSpec,
    x: &[f64],
    ecu: &DMatrix<f64>,
    n: usize,
    delta: f64,
    period: f64,
    cfg: &IntegratorConfig,
) -> Result<CocycleTrace> {
    check_delta(delta)?;
    let d_cu = ecu.ncols();
    if ecu.nrows() != sys.dim() || d_cu >= sys.dim() {
        return Err(Error::InvalidArgument(format!(
            "frame shape {:?} does not fit dimension {}",
            ecu.shape(),
            sys.dim()
        )));
    }
    if d_cu < 2 {
        return Err(unsupported(d_cu));
    }
    if !(period > 0.0) {
        return Err(Error::InvalidArgument(format!("period {period} must be > 0")));
    }
    let mut q = TangentFrame::new(x.to_vec(), ecu.clone())?.frame;
    q = linalg::orthonormalize(&q);
    let mut point = x.to_vec();

    let mut tr = CocycleTrace {
        system: sys.name.clone(),
        start: x.to_vec(),
        base: x.to_vec(),
        delta,
        period,
        d_cu,
        n,
        a: Vec::with_capacity(n),
        log_p: Vec::with_capacity(n),
        log_g: Vec::with_capacity(n),
        log_g_end: 0.0,
        logdet_cu: Vec::with_capacity(n),
        dist_raw: Vec::with_capacity(n),
        dist_trunc: Vec::with_capacity(n),
        residual: Vec::with_capacity(n),
        points: Vec::with_capacity(n + 1),
    };

    let normal_at = |p: &[f64], q: &DMatrix<f64>, time: f64| -> Result<(DMatrix<f64>, f64, f64)> {
        check_regular(sys, p, time, SINGULARITY_DISTANCE)?;
        let g = sys.eval(p);
        let (c, res) = normal_coordinates(q, &g)?;
        Ok((c, res, linalg::norm(&g).ln()))
    };

    let (mut c, mut res, mut lg) = normal_at(&point, &q, 0.0).map_err(|e| e.at(0))?;
    for i in 0..n {
        let d = nearest_distance(&point, &sys.equilibria);
        tr.points.push(point.clone());
        tr.dist_raw.push(d);
        tr.dist_trunc.push(truncate(d, delta));
        tr.log_g.push(lg);
        tr.residual.push(res);

        let st = tangent_advance(sys, &TangentFrame { base: point, frame: q }, period, cfg)
            .map_err(|e| e.at(i))?;
        let (c_next, res_next, lg_next) =
            normal_at(&st.point, &st.frame, period).map_err(|e| e.at(i + 1))?;
        // P^T on N^cu in the orthonormal bases q c and q' c'.
        let m = c_next.transpose() * &st.r * &c;
        let inv = linalg::inverse_norm(&m).ok_or_else(|| {
            Error::Degenerate {
                time: period,
                ratio: 0.0,
            }
            .at(i)
        })?;
        tr.a.push(inv.ln());
        tr.log_p.push(linalg::operator_norm(&m).ln());
        tr.logdet_cu.push(st.logdet);

        point = st.point;
        q = st.frame;
        c = c_next;
        res = res_next;
        lg = lg_next;
    }
    tr.log_g_end = lg;
    tr.points.push(point);
    Ok(tr)
}
