use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::splitting::{estimate_splitting, SplittingEstimate};
use super::trace::TraceConfig;
use crate::error::{Error, Result};
use crate::flow::{flow_jacobian, SystemSpec};

const SAMPLE_SEED: u64 = 0xc0e5;

/// Outcome of pushing the boundary of a centre-unstable cone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeReport {
    pub width: f64,
    pub time: f64,
    pub samples: usize,
    /// Largest `|stable part| / |centre-unstable part|` after the push.
    pub max_ratio: f64,
    /// `max_ratio < width`.
    pub contracted: bool,
    pub note: Option<String>,
}

/// Samples unit vectors on the boundary of the cone
/// `{v_s + v_cu : |v_s| <= a |v_cu|}` at `phi_W(x)` (with `W = cfg.warm`),
/// pushes them by `Dphi_t` and measures the stable-to-centre ratio against
/// the splitting at the image point.
pub fn cone_invariance_check(
    sys: &SystemSpec,
    x: &[f64],
    a_width: f64,
    t: f64,
    n_samples: usize,
    cfg: &TraceConfig,
) -> Result<ConeReport> {
    cfg.validate()?;
    if !(a_width > 0.0) || !(t > 0.0) || n_samples == 0 {
        return Err(Error::InvalidArgument(
            "cone width, time and sample count must be positive".into(),
        ));
    }
    let ic = &cfg.integrator;
    let here = estimate_splitting(sys, x, cfg.warm, cfg.warm.max(1.0), ic)?;
    let there = estimate_splitting(sys, x, cfg.warm + t, cfg.warm.max(1.0), ic)?;
    let (_, d) = flow_jacobian(sys, &here.base, t, ic)?;

    let samples = boundary_samples(&here, &d, a_width, n_samples);
    let basis = DMatrix::from_columns(
        &here_columns(&there.es_basis)
            .into_iter()
            .chain(here_columns(&there.ecu_basis))
            .collect::<Vec<_>>(),
    );
    let lu = basis.lu();
    let d_s = there.es_basis.ncols();
    let mut max_ratio = 0.0f64;
    for v in &samples {
        let w = &d * v;
        let coef = lu
            .solve(&w)
            .ok_or(Error::NoDomination { gap: there.angle_gap })?;
        let s = (&there.es_basis * coef.rows(0, d_s)).norm();
        let u = (&there.ecu_basis * coef.rows(d_s, coef.len() - d_s)).norm();
        max_ratio = max_ratio.max(s / u);
    }
    let contracted = max_ratio < a_width;
    Ok(ConeReport {
        width: a_width,
        time: t,
        samples: samples.len(),
        max_ratio,
        contracted,
        note: (!contracted).then(|| "no domination: cone boundary not contracted".to_string()),
    })
}

fn here_columns(m: &DMatrix<f64>) -> Vec<DVector<f64>> {
    m.column_iter().map(|c| c.clone_owned()).collect()
}

/// Boundary vectors `a u_s + u_cu` with unit `u_s`, `u_cu`, normalized. The
/// first sample pairs the most expanded stable direction with the least
/// expanded centre-unstable one; axis combinations and seeded random
/// directions follow.
fn boundary_samples(
    est: &SplittingEstimate,
    d: &DMatrix<f64>,
    a: f64,
    n: usize,
) -> Vec<DVector<f64>> {
    let es = &est.es_basis;
    let ecu = &est.ecu_basis;
    let make = |s: DVector<f64>, u: DVector<f64>| {
        let v = es * (s.normalize() * a) + ecu * u.normalize();
        v.normalize()
    };
    let mut out = Vec::with_capacity(n);

    let top = |m: DMatrix<f64>, smallest: bool| {
        let svd = m.svd(false, true);
        let vt = svd.v_t.unwrap();
        let sv = &svd.singular_values;
        let mut k = 0;
        for j in 1..sv.len() {
            if (smallest && sv[j] < sv[k]) || (!smallest && sv[j] > sv[k]) {
                k = j;
            }
        }
        vt.row(k).transpose()
    };
    out.push(make(top(d * es, false), top(d * ecu, true)));

    'axes: for i in 0..es.ncols() {
        for j in 0..ecu.ncols() {
            for sign in [1.0, -1.0] {
                if out.len() >= n {
                    break 'axes;
                }
                let s = DVector::from_fn(es.ncols(), |k, _| if k == i { sign } else { 0.0 });
                let u = DVector::from_fn(ecu.ncols(), |k, _| if k == j { 1.0 } else { 0.0 });
                out.push(make(s, u));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SAMPLE_SEED);
    while out.len() < n {
        let s = DVector::from_fn(es.ncols(), |_, _| rng.gen_range(-1.0..1.0));
        let u = DVector::from_fn(ecu.ncols(), |_, _| rng.gen_range(-1.0..1.0));
        if s.norm() > 1e-3 && u.norm() > 1e-3 {
            out.push(make(s, u));
        }
    }
    out.truncate(n);
    out
}
