//! Orthogonal projection to the normal bundle, the Linear Poincaré Flow,
//! numerical estimation of the dominated splitting `E^s + E^cu`, and the
//! cocycle traces that feed the expansion and recurrence criteria.

mod cone;
mod splitting;
mod trace;

pub use cone::{cone_invariance_check, ConeReport};
pub use splitting::{
    estimate_splitting, normal_cu, push_frame, seed_cu_frame, stable_from_future, NormalSection,
    SplittingEstimate, RESIDUAL_TOL,
};
pub use trace::{cocycle_trace, cocycle_trace_from, CocycleTrace, TraceConfig};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::flow::{tangent_advance, IntegratorConfig, SystemSpec, TangentFrame};
use crate::linalg;

/// Minimum distance to an equilibrium at which the normal projection is
/// still evaluated.
pub const SINGULARITY_DISTANCE: f64 = 1e-8;

/// `O_x(v) = v - <v, G> G / |G|^2`, the orthogonal projection onto the
/// normal space of the flow direction `g`.
pub fn project_normal(g: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let gg = linalg::dot(g, g);
    if !(gg > 0.0) {
        return Err(Error::ZeroField);
    }
    let c = linalg::dot(v, g) / gg;
    Ok(v.iter().zip(g).map(|(vi, gi)| vi - c * gi).collect())
}

pub(crate) fn check_regular(sys: &SystemSpec, x: &[f64], time: f64, min: f64) -> Result<()> {
    let d = sys.equilibrium_distance(x);
    if d <= min {
        return Err(Error::NearSingularity { time, distance: d });
    }
    Ok(())
}

/// The Linear Poincaré Flow `P^t_x v = O_{phi_t x}(Dphi_t(x) v)` for `v`
/// normal to the flow at `x`.
pub fn lpf_step(
    sys: &SystemSpec,
    x: &[f64],
    t: f64,
    v: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<f64>> {
    check_regular(sys, x, 0.0, SINGULARITY_DISTANCE)?;
    let g = sys.eval(x);
    let gn = linalg::norm(&g);
    if gn == 0.0 {
        return Err(Error::ZeroField);
    }
    let vn = linalg::norm(v);
    if vn == 0.0 {
        return Ok(vec![0.0; v.len()]);
    }
    let along = linalg::dot(v, &g) / (gn * vn);
    if along.abs() > 1e-8 {
        return Err(Error::InvalidArgument(format!(
            "vector is not normal to the flow (cosine {along:e})"
        )));
    }
    let fr = TangentFrame::new(x.to_vec(), DMatrix::from_column_slice(v.len(), 1, v))?;
    let st = tangent_advance(sys, &fr, t, cfg)?;
    check_regular(sys, &st.point, t, SINGULARITY_DISTANCE)?;
    let image = st.image();
    project_normal(&sys.eval(&st.point), image.as_slice())
}
