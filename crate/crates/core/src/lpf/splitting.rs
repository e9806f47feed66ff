use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::check_regular;
use crate::error::{Error, Result};
use crate::flow::{flow_jacobian, tangent_advance, IntegratorConfig, SystemSpec, TangentFrame};
use crate::linalg;

/// Largest admissible distance of the unit flow direction from the
/// centre-unstable estimate.
pub const RESIDUAL_TOL: f64 = 1e-3;

/// Orbit segments used for splitting estimation keep this distance from
/// equilibria.
const SPLITTING_SINGULARITY: f64 = 1e-6;

const NO_DOMINATION_GAP: f64 = 1e-6;

/// Seed for the generic columns of subspace iterations.
const FRAME_SEED: u64 = 0x5eed_f4a3;

/// Numerical splitting `E^s + E^cu` at a point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplittingEstimate {
    pub base: Vec<f64>,
    pub es_basis: DMatrix<f64>,
    pub ecu_basis: DMatrix<f64>,
    /// Smallest principal angle between the two subspaces.
    pub angle_gap: f64,
    /// Distance of the unit flow direction from `span(ecu_basis)`.
    pub residual: f64,
}

impl SplittingEstimate {
    pub fn d_s(&self) -> usize {
        self.es_basis.ncols()
    }

    pub fn d_cu(&self) -> usize {
        self.ecu_basis.ncols()
    }
}

/// `N^cu_x = E^cu_x` intersected with the normal space of the flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalSection {
    pub base: Vec<f64>,
    pub ncu_basis: DMatrix<f64>,
}

/// Initial centre-unstable frame at `x`: the flow direction followed by
/// fixed generic columns, orthonormalized. Keeping `G(x)` in the frame keeps
/// the pushed frame containing the flow direction.
pub fn seed_cu_frame(sys: &SystemSpec, x: &[f64], d_cu: usize) -> DMatrix<f64> {
    let m = sys.dim();
    let g = DVector::from_vec(sys.eval(x));
    let generic = linalg::generic_frame(m, d_cu, FRAME_SEED);
    let gn = g.norm();
    if gn == 0.0 {
        return generic;
    }
    let mut cols = vec![g / gn];
    cols.extend(generic.column_iter().take(d_cu - 1).map(|c| c.clone_owned()));
    let q = linalg::orthonormalize(&DMatrix::from_columns(&cols));
    if q.column_iter().any(|c| c.norm() == 0.0) {
        // The generic columns happened to contain G; fall back to them.
        return generic;
    }
    q
}

/// Pushes an orthonormal frame along the orbit of `x` for time `t` in
/// blocks of at most one time unit, returning the end point and the
/// orthonormalized image frame.
pub fn push_frame(
    sys: &SystemSpec,
    x: &[f64],
    frame: &DMatrix<f64>,
    t: f64,
    cfg: &IntegratorConfig,
    min_distance: f64,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let mut point = x.to_vec();
    let mut q = frame.clone();
    let mut elapsed = 0.0;
    check_regular(sys, &point, 0.0, min_distance)?;
    while elapsed < t {
        let dt = (t - elapsed).min(1.0);
        let st = tangent_advance(sys, &TangentFrame { base: point, frame: q }, dt, cfg)
            .map_err(|e| shift_time(e, elapsed))?;
        elapsed += dt;
        point = st.point;
        q = st.frame;
        check_regular(sys, &point, elapsed, min_distance)?;
    }
    Ok((point, q))
}

fn shift_time(e: Error, offset: f64) -> Error {
    match e {
        Error::Escape { time } => Error::Escape { time: time + offset },
        Error::Degenerate { time, ratio } => Error::Degenerate {
            time: time + offset,
            ratio,
        },
        Error::NearSingularity { time, distance } => Error::NearSingularity {
            time: time + offset,
            distance,
        },
        e => e,
    }
}

/// Stable subspace at `y` from the future orbit: the adjoint cocycle pushes
/// a generic `d_cu`-frame backward from `phi_T(y)` onto the orthogonal
/// complement of `E^s_y`.
pub fn stable_from_future(
    sys: &SystemSpec,
    y: &[f64],
    d_cu: usize,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<DMatrix<f64>> {
    let m = sys.dim();
    let mut jacobians = Vec::new();
    let mut point = y.to_vec();
    let mut elapsed = 0.0;
    while elapsed < horizon {
        let dt = (horizon - elapsed).min(1.0);
        let (next, d) = flow_jacobian(sys, &point, dt, cfg).map_err(|e| shift_time(e, elapsed))?;
        elapsed += dt;
        check_regular(sys, &next, elapsed, SPLITTING_SINGULARITY)?;
        jacobians.push(d);
        point = next;
    }
    let mut w = linalg::generic_frame(m, d_cu, FRAME_SEED ^ 0xad70);
    for d in jacobians.iter().rev() {
        w = linalg::orthonormalize(&(d.transpose() * &w));
    }
    Ok(linalg::orthogonal_complement(&w))
}

/// Estimates the splitting at `phi_{warm_fwd}(x)`.
///
/// The centre-unstable space is the image of a seeded frame pushed along the
/// past segment `[x, phi_{warm_fwd}(x)]`; the stable space comes from the
/// adjoint iteration over the following `warm_bwd` time units. The returned
/// estimate is based at the end of the past segment, since that is the
/// point whose past has been observed.
pub fn estimate_splitting(
    sys: &SystemSpec,
    x: &[f64],
    warm_fwd: f64,
    warm_bwd: f64,
    cfg: &IntegratorConfig,
) -> Result<SplittingEstimate> {
    let m = sys.dim();
    if sys.d_s == 0 || sys.d_s >= m {
        return Err(Error::InvalidArgument(format!(
            "splitting needs 1 <= d_s < {m}, system declares d_s = {}",
            sys.d_s
        )));
    }
    if !(warm_fwd >= 0.0 && warm_bwd > 0.0) {
        return Err(Error::InvalidArgument("warm-up lengths must be positive".into()));
    }
    let d_cu = sys.d_cu();
    let seed = seed_cu_frame(sys, x, d_cu);
    let (y, ecu) = push_frame(sys, x, &seed, warm_fwd, cfg, SPLITTING_SINGULARITY)?;
    let es = stable_from_future(sys, &y, d_cu, warm_bwd, cfg)?;
    let angle_gap = linalg::smallest_angle(&es, &ecu);
    if !(angle_gap >= NO_DOMINATION_GAP) {
        return Err(Error::NoDomination { gap: angle_gap });
    }
    let g = DVector::from_vec(sys.eval(&y));
    let residual = if g.norm() > 0.0 {
        linalg::distance_from_span(&ecu, &(&g / g.norm()))
    } else {
        0.0
    };
    Ok(SplittingEstimate {
        base: y,
        es_basis: es,
        ecu_basis: ecu,
        angle_gap,
        residual,
    })
}

/// Coordinates (in the orthonormal basis `ecu`) of an orthonormal basis of
/// the complement of the flow direction, and the residual of `g` off the
/// span.
pub(crate) fn normal_coordinates(ecu: &DMatrix<f64>, g: &[f64]) -> Result<(DMatrix<f64>, f64)> {
    let g = DVector::from_column_slice(g);
    let gn = g.norm();
    if gn == 0.0 {
        return Err(Error::ZeroField);
    }
    let unit = g / gn;
    let c = ecu.transpose() * &unit;
    let residual = (&unit - ecu * &c).norm();
    if !(residual <= RESIDUAL_TOL) {
        return Err(Error::InconsistentSplitting { residual });
    }
    Ok((linalg::complement_of_vector(&c), residual))
}

/// Orthonormal basis of `E^cu` intersected with `G^perp`.
pub fn normal_cu(est: &SplittingEstimate, g: &[f64]) -> Result<NormalSection> {
    let (coords, _) = normal_coordinates(&est.ecu_basis, g)?;
    Ok(NormalSection {
        base: est.base.clone(),
        ncu_basis: &est.ecu_basis * coords,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::lookup;

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::default()
    }

    #[test]
    fn linear_splitting_matches_eigenspaces() {
        let sys = lookup("diag(1,0.5,-2)").unwrap();
        let est = estimate_splitting(&sys, &[1e-4, 1e-4, 0.5], 10.0, 10.0, &cfg()).unwrap();
        let e3 = DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]);
        let e12 = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(linalg::subspace_distance(&est.es_basis, &e3) < 1e-4);
        assert!(linalg::subspace_distance(&est.ecu_basis, &e12) < 1e-4);
        assert!((est.angle_gap - std::f64::consts::FRAC_PI_2).abs() < 1e-4);
        for b in [&est.es_basis, &est.ecu_basis] {
            let k = b.ncols();
            assert!((b.transpose() * b - DMatrix::identity(k, k)).norm() < 1e-10);
        }
    }

    #[test]
    fn zero_stable_dimension_is_rejected() {
        let mut sys = lookup("constant").unwrap();
        sys.d_s = 0;
        assert!(matches!(
            estimate_splitting(&sys, &[0.0; 3], 1.0, 1.0, &cfg()),
            Err(Error::InvalidArgument(_))
        ));
    }

    fn estimate(ecu: DMatrix<f64>, base: Vec<f64>) -> SplittingEstimate {
        let es = linalg::orthogonal_complement(&ecu);
        SplittingEstimate {
            base,
            es_basis: es,
            ecu_basis: ecu,
            angle_gap: std::f64::consts::FRAC_PI_2,
            residual: 0.0,
        }
    }

    #[test]
    fn normal_section_of_coordinate_plane() {
        let e12 = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let ns = normal_cu(&estimate(e12, vec![0.0; 3]), &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(ns.ncu_basis.shape(), (3, 1));
        assert!((ns.ncu_basis[(1, 0)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn normal_section_in_four_dimensions() {
        let ecu = linalg::generic_frame(4, 3, 42);
        let g: Vec<f64> = (&ecu * DVector::from_vec(vec![0.3, -1.0, 2.0])).as_slice().to_vec();
        let est = estimate(ecu.clone(), vec![0.0; 4]);
        let ns = normal_cu(&est, &g).unwrap();
        assert_eq!(ns.ncu_basis.shape(), (4, 2));
        let gram = ns.ncu_basis.transpose() * &ns.ncu_basis;
        assert!((gram - DMatrix::identity(2, 2)).norm() < 1e-10);
        let gv = DVector::from_vec(g.clone());
        for c in ns.ncu_basis.column_iter() {
            assert!(c.dot(&gv).abs() < 1e-10 * gv.norm());
            assert!(linalg::distance_from_span(&ecu, &c.clone_owned()) < 1e-8);
        }
    }

    #[test]
    fn flow_off_the_centre_unstable_plane_is_inconsistent() {
        let e12 = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(
            normal_cu(&estimate(e12, vec![0.0; 3]), &[0.0, 0.0, 1.0]),
            Err(Error::InconsistentSplitting { .. })
        ));
    }
}
