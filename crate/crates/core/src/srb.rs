//! Empirical physical measures on uniform grids.
//!
//! Weak-* closeness is proxied by the L1 distance between normalized cell
//! histograms at a fixed resolution.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{integrate_visit, BoundingBox, IntegratorConfig, SystemSpec};
use crate::linalg;
use crate::lpf::{CocycleTrace, SplittingEstimate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Cells per axis.
    pub cells: usize,
}

impl Grid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, cells: usize) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || cells == 0 {
            return Err(Error::InvalidArgument("grid needs matching bounds and cells >= 1".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(h > l)) {
            return Err(Error::InvalidArgument("grid bounds must satisfy lo < hi".into()));
        }
        let total = (cells as u128).checked_pow(lo.len() as u32);
        if total.is_none_or(|t| t > 1 << 28) {
            return Err(Error::InvalidArgument(format!(
                "{cells}^{} cells is too many",
                lo.len()
            )));
        }
        Ok(Grid { lo, hi, cells })
    }

    /// Grid over the box around the system's trapping region, widened by
    /// unequal margins (1.3% below, 0.7% above) so that round coordinates
    /// such as sinks at integer points do not sit on cell faces.
    pub fn for_system(sys: &SystemSpec, cells: usize) -> Result<Self> {
        let BoundingBox { lo, hi } = sys.trap_box();
        let (lo, hi) = lo
            .iter()
            .zip(&hi)
            .map(|(l, h)| {
                let w = h - l;
                (l - 0.013 * w, h + 0.007 * w)
            })
            .unzip();
        Grid::new(lo, hi, cells)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.cells.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major cell index; points outside the box go to the nearest
    /// boundary cell.
    pub fn index(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        for k in 0..self.dim() {
            let w = (self.hi[k] - self.lo[k]) / self.cells as f64;
            let c = ((x[k] - self.lo[k]) / w).floor();
            let c = if c.is_nan() { 0.0 } else { c.clamp(0.0, (self.cells - 1) as f64) };
            idx = idx * self.cells + c as usize;
        }
        idx
    }

    pub fn center(&self, index: usize) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; d];
        let mut rest = index;
        for k in (0..d).rev() {
            let c = rest % self.cells;
            rest /= self.cells;
            let w = (self.hi[k] - self.lo[k]) / self.cells as f64;
            out[k] = self.lo[k] + (c as f64 + 0.5) * w;
        }
        out
    }
}

/// Normalized histogram on a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub grid: Grid,
    pub weights: Vec<f64>,
    pub sample_count: usize,
}

impl EmpiricalMeasure {
    /// Normalizes raw cell masses. Fails if the total mass is zero.
    pub fn from_masses(grid: Grid, masses: Vec<f64>, sample_count: usize) -> Result<Self> {
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return Err(Error::EmptyMeasure);
        }
        let weights = masses.into_iter().map(|m| m / total).collect();
        Ok(EmpiricalMeasure {
            grid,
            weights,
            sample_count,
        })
    }

    pub fn point_mass(grid: Grid, x: &[f64]) -> Self {
        let mut weights = vec![0.0; grid.len()];
        weights[grid.index(x)] = 1.0;
        EmpiricalMeasure {
            grid,
            weights,
            sample_count: 1,
        }
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn l1(&self, other: &EmpiricalMeasure) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(self.weights.iter().zip(&other.weights).map(|(a, b)| (a - b).abs()).sum())
    }

    /// `(cell, weight)` for cells with positive weight.
    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights.iter().enumerate().filter(|(_, w)| **w > 0.0).map(|(i, w)| (i, *w))
    }

    /// Integral of `obs` against the measure, evaluated at cell centres.
    pub fn expect(&self, obs: &Observable) -> f64 {
        self.support().map(|(i, w)| w * obs.eval(&self.grid.center(i))).sum()
    }

    /// Marginal on the coordinate pair `(i, j)`: rows `(x_i, x_j, weight)`
    /// at cell centres.
    pub fn marginal_2d(&self, i: usize, j: usize) -> Vec<(f64, f64, f64)> {
        let n = self.grid.cells;
        let mut acc = vec![0.0; n * n];
        for (c, w) in self.support() {
            let mut rest = c;
            let mut coords = vec![0; self.grid.dim()];
            for k in (0..self.grid.dim()).rev() {
                coords[k] = rest % n;
                rest /= n;
            }
            acc[coords[i] * n + coords[j]] += w;
        }
        let wi = (self.grid.hi[i] - self.grid.lo[i]) / n as f64;
        let wj = (self.grid.hi[j] - self.grid.lo[j]) / n as f64;
        (0..n * n)
            .map(|k| {
                let (a, b) = (k / n, k % n);
                (
                    self.grid.lo[i] + (a as f64 + 0.5) * wi,
                    self.grid.lo[j] + (b as f64 + 0.5) * wj,
                    acc[k],
                )
            })
            .collect()
    }
}

/// Functions on phase space used for Birkhoff averages and basin
/// assignment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "axis", rename_all = "snake_case")]
pub enum Observable {
    One,
    Coord(usize),
    Square(usize),
    NormSq,
}

impl Observable {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            Observable::One => 1.0,
            Observable::Coord(k) => x[k],
            Observable::Square(k) => x[k] * x[k],
            Observable::NormSq => linalg::dot(x, x),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Observable::One => "1".into(),
            Observable::Coord(k) => format!("x{k}"),
            Observable::Square(k) => format!("x{k}^2"),
            Observable::NormSq => "|x|^2".into(),
        }
    }
}

/// Coordinates and their squares.
pub fn default_panel(dim: usize) -> Vec<Observable> {
    (0..dim)
        .map(Observable::Coord)
        .chain((0..dim).map(Observable::Square))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirkhoffAverage {
    pub value: f64,
    /// Running averages at integer times.
    pub curve: Vec<f64>,
}

/// Time averages of several observables along one orbit, by the trapezoid
/// rule on the integrator grid.
pub fn birkhoff_averages(
    sys: &SystemSpec,
    x: &[f64],
    panel: &[Observable],
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<BirkhoffAverage>> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    let k = panel.len();
    let mut total = vec![0.0; k];
    let mut curves = vec![Vec::new(); k];
    let mut prev: Option<(f64, Vec<f64>)> = None;
    let mut next_mark = 1.0;
    integrate_visit(sys, x, horizon, cfg, |t, p| {
        let v: Vec<f64> = panel.iter().map(|o| o.eval(p)).collect();
        if let Some((t0, v0)) = &prev {
            for j in 0..k {
                total[j] += 0.5 * (t - t0) * (v0[j] + v[j]);
            }
        }
        if t >= next_mark - 1e-9 {
            for j in 0..k {
                curves[j].push(total[j] / t);
            }
            next_mark += 1.0;
        }
        prev = Some((t, v));
    })?;
    Ok(total
        .into_iter()
        .zip(curves)
        .map(|(s, curve)| BirkhoffAverage {
            value: s / horizon,
            curve,
        })
        .collect())
}

pub fn birkhoff_average(
    sys: &SystemSpec,
    x: &[f64],
    obs: Observable,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<BirkhoffAverage> {
    Ok(birkhoff_averages(sys, x, &[obs], horizon, cfg)?.remove(0))
}

/// Occupation histogram of the orbit of `x` over `[0, T]`, each grid time
/// weighted by its trapezoid weight.
pub fn empirical_measure(
    sys: &SystemSpec,
    x: &[f64],
    horizon: f64,
    grid: &Grid,
    cfg: &IntegratorConfig,
) -> Result<EmpiricalMeasure> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    if grid.dim() != sys.dim() {
        return Err(Error::GridMismatch);
    }
    let mut masses = vec![0.0; grid.len()];
    let mut prev: Option<(f64, usize)> = None;
    let mut samples = 0;
    integrate_visit(sys, x, horizon, cfg, |t, p| {
        let c = grid.index(p);
        if let Some((t0, c0)) = prev {
            let w = 0.5 * (t - t0);
            masses[c0] += w;
            masses[c] += w;
        }
        prev = Some((t, c));
        samples += 1;
    })?;
    EmpiricalMeasure::from_masses(grid.clone(), masses, samples)
}

/// Time averages `(1/n) sum_{j<n} delta_{phi_{j + k/slices}(x)}` for
/// `k = 0..slices`: the time-one-map occupation measure of `x` and its
/// pushforwards by `phi_{k/slices}`.
pub fn time_one_family(
    sys: &SystemSpec,
    x: &[f64],
    n: usize,
    slices: usize,
    grid: &Grid,
    cfg: &IntegratorConfig,
) -> Result<Vec<EmpiricalMeasure>> {
    if n == 0 || slices == 0 {
        return Err(Error::InvalidArgument("need n >= 1 and slices >= 1".into()));
    }
    let steps_per_unit = cfg.plan(1.0).0;
    if cfg.plan(1.0).1 != 0.0 || !steps_per_unit.is_multiple_of(slices) {
        return Err(Error::InvalidArgument(format!(
            "{slices} slices do not divide the {steps_per_unit} steps per time unit"
        )));
    }
    let stride = steps_per_unit / slices;
    let mut masses = vec![vec![0.0; grid.len()]; slices];
    let mut step = 0usize;
    let total_steps = n * steps_per_unit;
    integrate_visit(sys, x, n as f64, cfg, |_, p| {
        if step < total_steps && step.is_multiple_of(stride) {
            let k = (step / stride) % slices;
            masses[k][grid.index(p)] += 1.0;
        }
        step += 1;
    })?;
    masses
        .into_iter()
        .map(|m| EmpiricalMeasure::from_masses(grid.clone(), m, n))
        .collect()
}

/// Cell-wise average of a family of measures at equally spaced times.
pub fn flow_smooth(family: &[EmpiricalMeasure]) -> Result<EmpiricalMeasure> {
    let first = family.first().ok_or(Error::EmptyMeasure)?;
    if family.iter().any(|m| m.grid != first.grid) {
        return Err(Error::GridMismatch);
    }
    if family.iter().all(|m| m.weights == first.weights) {
        return Ok(first.clone());
    }
    let mut masses = vec![0.0; first.weights.len()];
    for m in family {
        for (acc, w) in masses.iter_mut().zip(&m.weights) {
            *acc += w;
        }
    }
    let count = family.iter().map(|m| m.sample_count).sum();
    EmpiricalMeasure::from_masses(first.grid.clone(), masses, count)
}

/// A flat centre-unstable disk sampled by equally weighted particles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiskSample {
    pub center: Vec<f64>,
    /// Orthonormal `m x d_cu` frame.
    pub frame: DMatrix<f64>,
    pub radius: f64,
    /// `(point, weight)`, weights summing to one.
    pub particles: Vec<(Vec<f64>, f64)>,
}

impl DiskSample {
    /// Disk of the given radius in the plane of `est.ecu_basis` through
    /// `est.base`, with particles on a square lattice of `per_axis` points
    /// per axis clipped to the disk.
    pub fn flat(est: &SplittingEstimate, radius: f64, per_axis: usize) -> Result<Self> {
        if !(radius > 0.0) || per_axis == 0 {
            return Err(Error::InvalidArgument("disk radius and lattice size must be positive".into()));
        }
        let d = est.ecu_basis.ncols();
        let step = 2.0 / per_axis as f64;
        let total = per_axis.pow(d as u32);
        let mut coords = Vec::new();
        for k in 0..total {
            let mut rest = k;
            let u: Vec<f64> = (0..d)
                .map(|_| {
                    let c = rest % per_axis;
                    rest /= per_axis;
                    -1.0 + (c as f64 + 0.5) * step
                })
                .collect();
            if linalg::norm(&u) <= 1.0 {
                coords.push(u);
            }
        }
        let w = 1.0 / coords.len() as f64;
        let particles = coords
            .into_iter()
            .map(|u| {
                let mut p = est.base.clone();
                for (j, uj) in u.iter().enumerate() {
                    for i in 0..p.len() {
                        p[i] += radius * uj * est.ecu_basis[(i, j)];
                    }
                }
                (p, w)
            })
            .collect();
        Ok(DiskSample {
            center: est.base.clone(),
            frame: est.ecu_basis.clone(),
            radius,
            particles,
        })
    }

    /// Centre-unstable frame used for the trace of the particle at `p`:
    /// the flow direction at `p` followed by the disk's normal directions.
    pub fn particle_frame(&self, sys: &SystemSpec, p: &[f64]) -> Result<DMatrix<f64>> {
        let g = nalgebra::DVector::from_vec(sys.eval(p));
        if g.norm() == 0.0 {
            return Err(Error::ZeroField);
        }
        let gc = nalgebra::DVector::from_vec(sys.eval(&self.center));
        let coords = linalg::complement_of_vector(&(self.frame.transpose() * gc));
        let normal = &self.frame * coords;
        let mut cols = vec![g.normalize()];
        cols.extend(normal.column_iter().map(|c| c.clone_owned()));
        Ok(linalg::orthonormalize(&DMatrix::from_columns(&cols)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pushforward {
    pub measure: EmpiricalMeasure,
    /// Accumulated weight before normalization: the fraction of
    /// particle-time mass that sits at hyperbolic times.
    pub retained_fraction: f64,
    pub retained_pairs: usize,
}

/// `(1/n) sum_{j<n}` of the disk measure pushed to time `j`, restricted to
/// particles for which `j` is a hyperbolic time. `traces[p].points[j]` is
/// the position of particle `p` at time `j`; `htimes[p]` lists its
/// hyperbolic times.
pub fn pushforward_at_hyperbolic_times(
    disk: &DiskSample,
    traces: &[CocycleTrace],
    htimes: &[Vec<usize>],
    n_max: usize,
    grid: &Grid,
) -> Result<Pushforward> {
    let count = disk.particles.len();
    if traces.len() != count || htimes.len() != count {
        return Err(Error::InvalidArgument("one trace and one time list per particle".into()));
    }
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be >= 1".into()));
    }
    let mut masses = vec![0.0; grid.len()];
    let mut pairs = 0;
    let mut raw = 0.0;
    for ((tr, times), (_, w)) in traces.iter().zip(htimes).zip(&disk.particles) {
        for &j in times.iter().filter(|j| **j < n_max) {
            let p = tr.points.get(j).ok_or_else(|| {
                Error::InvalidArgument(format!("trace of length {} has no point {j}", tr.n))
            })?;
            let v = w / n_max as f64;
            masses[grid.index(p)] += v;
            raw += v;
            pairs += 1;
        }
    }
    if pairs == 0 {
        return Err(Error::EmptyMeasure);
    }
    Ok(Pushforward {
        measure: EmpiricalMeasure::from_masses(grid.clone(), masses, pairs)?,
        retained_fraction: raw,
        retained_pairs: pairs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    /// Sorted member indices; clusters ordered by smallest member.
    pub clusters: Vec<Vec<usize>>,
    /// Cluster means.
    pub representatives: Vec<EmpiricalMeasure>,
}

/// Single-linkage clustering: measures at L1 distance below `radius` are
/// joined.
pub fn cluster_measures(ms: &[EmpiricalMeasure], radius: f64) -> Result<Clustering> {
    if let Some(first) = ms.first() {
        if ms.iter().any(|m| m.grid != first.grid) {
            return Err(Error::GridMismatch);
        }
    }
    let n = ms.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let close: Vec<bool> = pairs
        .par_iter()
        .map(|&(i, j)| ms[i].l1(&ms[j]).map(|d| d < radius).unwrap_or(false))
        .collect();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for (&(i, j), c) in pairs.iter().zip(&close) {
        if *c {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = clusters.len();
            clusters.push(Vec::new());
        }
        clusters[slot[r]].push(i);
    }
    let representatives = clusters
        .iter()
        .map(|members| {
            let mut masses = vec![0.0; ms[members[0]].weights.len()];
            for &i in members {
                for (acc, w) in masses.iter_mut().zip(&ms[i].weights) {
                    *acc += w;
                }
            }
            let count = members.iter().map(|i| ms[*i].sample_count).sum();
            EmpiricalMeasure::from_masses(ms[members[0]].grid.clone(), masses, count)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Clustering {
        clusters,
        representatives,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinCoverage {
    /// Fraction of the included orbits assigned to each representative.
    pub fractions: Vec<f64>,
    pub remainder: f64,
    pub assignment: Vec<Option<usize>>,
    pub excluded_count: usize,
    /// Panel averages under each representative.
    pub panel_means: Vec<Vec<f64>>,
}

/// Assigns each orbit to the representative whose panel averages are
/// closest to its Birkhoff averages, provided every difference, scaled by
/// the representative's standard deviation of that observable (at least
/// one), is at most `tol`.
pub fn basin_coverage(
    sys: &SystemSpec,
    points: &[Vec<f64>],
    representatives: &[EmpiricalMeasure],
    panel: &[Observable],
    tol: f64,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<BasinCoverage> {
    if panel.is_empty() || !(tol > 0.0) {
        return Err(Error::InvalidArgument("need a non-empty panel and tol > 0".into()));
    }
    let stats: Vec<(Vec<f64>, Vec<f64>)> = representatives
        .iter()
        .map(|m| {
            let mean: Vec<f64> = panel.iter().map(|o| m.expect(o)).collect();
            let scale = panel
                .iter()
                .zip(&mean)
                .map(|(o, mu)| {
                    let second: f64 = m
                        .support()
                        .map(|(i, w)| w * (o.eval(&m.grid.center(i)) - mu).powi(2))
                        .sum();
                    second.sqrt().max(1.0)
                })
                .collect();
            (mean, scale)
        })
        .collect();
    let averages: Vec<Option<Vec<f64>>> = points
        .par_iter()
        .map(|x| {
            birkhoff_averages(sys, x, panel, horizon, cfg)
                .ok()
                .map(|v| v.into_iter().map(|b| b.value).collect())
        })
        .collect();
    let assignment: Vec<Option<usize>> = averages
        .iter()
        .map(|avg| {
            let avg = avg.as_ref()?;
            stats
                .iter()
                .enumerate()
                .map(|(r, (mean, scale))| {
                    let d = avg
                        .iter()
                        .zip(mean)
                        .zip(scale)
                        .map(|((a, m), s)| (a - m).abs() / s)
                        .fold(0.0f64, f64::max);
                    (r, d)
                })
                .filter(|(_, d)| *d <= tol)
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(r, _)| r)
        })
        .collect();
    let excluded_count = averages.iter().filter(|a| a.is_none()).count();
    let included = (points.len() - excluded_count).max(1) as f64;
    let fractions: Vec<f64> = (0..representatives.len())
        .map(|r| assignment.iter().filter(|a| **a == Some(r)).count() as f64 / included)
        .collect();
    let assigned: f64 = fractions.iter().sum();
    Ok(BasinCoverage {
        remainder: if points.len() == excluded_count { 0.0 } else { 1.0 - assigned },
        fractions,
        assignment,
        excluded_count,
        panel_means: stats.into_iter().map(|s| s.0).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid(cells: usize) -> Grid {
        Grid::new(vec![0.0; 3], vec![1.0; 3], cells).unwrap()
    }

    #[test]
    fn grid_indexing_round_trips() {
        let g = unit_grid(4);
        for i in 0..g.len() {
            assert_eq!(g.index(&g.center(i)), i);
        }
        assert_eq!(g.index(&[-5.0, 0.1, 0.1]), g.index(&[0.0, 0.1, 0.1]));
        assert!(Grid::new(vec![0.0], vec![0.0], 3).is_err());
    }

    #[test]
    fn disjoint_point_masses_are_separate_clusters() {
        let g = unit_grid(4);
        let a = EmpiricalMeasure::point_mass(g.clone(), &[0.1, 0.1, 0.1]);
        let b = EmpiricalMeasure::point_mass(g.clone(), &[0.9, 0.9, 0.9]);
        assert_eq!(a.l1(&b).unwrap(), 2.0);
        let c = cluster_measures(&[a.clone(), b.clone(), a.clone()], 0.5).unwrap();
        assert_eq!(c.clusters, vec![vec![0, 2], vec![1]]);
        let one = cluster_measures(&[a.clone(), a.clone()], 0.5).unwrap();
        assert_eq!(one.clusters.len(), 1);
        assert_eq!(one.representatives[0].weights, a.weights);
    }

    #[test]
    fn smoothing_a_constant_family_is_identity() {
        let g = unit_grid(3);
        let m = EmpiricalMeasure::from_masses(g.clone(), (0..27).map(|i| i as f64).collect(), 5)
            .unwrap();
        assert_eq!(flow_smooth(&[m.clone(), m.clone(), m.clone()]).unwrap(), m);
        let other = EmpiricalMeasure::point_mass(unit_grid(2), &[0.0; 3]);
        assert_eq!(flow_smooth(&[m, other]), Err(Error::GridMismatch));
    }
}
