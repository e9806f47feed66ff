//! Fixed-step classical Runge-Kutta integration of the flow and of the
//! variational equation `V' = DG(x) V`.
//!
//! The tangent frame is integrated jointly with the base point by the same
//! RK4 scheme, so the frame update is the exact derivative of the discrete
//! step map. Time `t` is covered by `floor(t / h)` full steps plus one
//! partial step for any remainder; integer times therefore always land on
//! the step grid.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::system::SystemSpec;
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub step: f64,
    /// QR renormalization cadence (in steps) for tangent frames.
    pub renorm_every: usize,
    #[serde(default)]
    pub method: Method,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            step: 1e-3,
            renorm_every: 10,
            method: Method::Rk4,
        }
    }
}

impl IntegratorConfig {
    pub fn with_step(step: f64) -> Self {
        IntegratorConfig {
            step,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step <= 0.1) {
            return Err(Error::InvalidArgument(format!(
                "integrator step {} outside (0, 0.1]",
                self.step
            )));
        }
        if self.renorm_every == 0 {
            return Err(Error::InvalidArgument("renorm_every must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of full steps and the trailing partial step covering `t`.
    pub fn plan(&self, t: f64) -> (usize, f64) {
        let q = t / self.step;
        let n = q.round();
        if (q - n).abs() <= 1e-9 * q.max(1.0) {
            (n as usize, 0.0)
        } else {
            let n = q.floor();
            (n as usize, t - n * self.step)
        }
    }
}

/// Reusable RK4 workspace for a state made of a base point plus `k` tangent
/// columns (column-major after the point).
struct Rk4<'a> {
    sys: &'a SystemSpec,
    m: usize,
    k: usize,
    jac: Vec<f64>,
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl<'a> Rk4<'a> {
    fn new(sys: &'a SystemSpec, k: usize) -> Self {
        let m = sys.dim();
        let n = m * (k + 1);
        Rk4 {
            sys,
            m,
            k,
            jac: vec![0.0; m * m],
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    #[inline]
    fn rhs(sys: &SystemSpec, m: usize, k: usize, jac: &mut [f64], s: &[f64], out: &mut [f64]) {
        let field = sys.field();
        field.eval(&s[..m], &mut out[..m]);
        if k == 0 {
            return;
        }
        field.jacobian(&s[..m], jac);
        for c in 0..k {
            let col = &s[m * (c + 1)..m * (c + 2)];
            for i in 0..m {
                let row = &jac[i * m..(i + 1) * m];
                let mut acc = 0.0;
                for j in 0..m {
                    acc += row[j] * col[j];
                }
                out[m * (c + 1) + i] = acc;
            }
        }
    }

    #[inline]
    fn step(&mut self, s: &mut [f64], h: f64) {
        let (m, k) = (self.m, self.k);
        Self::rhs(self.sys, m, k, &mut self.jac, s, &mut self.k1);
        for i in 0..s.len() {
            self.tmp[i] = s[i] + 0.5 * h * self.k1[i];
        }
        Self::rhs(self.sys, m, k, &mut self.jac, &self.tmp, &mut self.k2);
        for i in 0..s.len() {
            self.tmp[i] = s[i] + 0.5 * h * self.k2[i];
        }
        Self::rhs(self.sys, m, k, &mut self.jac, &self.tmp, &mut self.k3);
        for i in 0..s.len() {
            self.tmp[i] = s[i] + h * self.k3[i];
        }
        Self::rhs(self.sys, m, k, &mut self.jac, &self.tmp, &mut self.k4);
        let h6 = h / 6.0;
        for i in 0..s.len() {
            s[i] += h6 * (self.k1[i] + 2.0 * (self.k2[i] + self.k3[i]) + self.k4[i]);
        }
    }
}

fn check_start(sys: &SystemSpec, x: &[f64], t: f64, cfg: &IntegratorConfig) -> Result<()> {
    cfg.validate()?;
    if x.len() != sys.dim() {
        return Err(Error::InvalidArgument(format!(
            "point has dimension {}, system has {}",
            x.len(),
            sys.dim()
        )));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("time must be finite and >= 0, got {t}")));
    }
    if !sys.in_box(x) {
        return Err(Error::Escape { time: 0.0 });
    }
    Ok(())
}

/// `phi_t(x)`.
pub fn advance(sys: &SystemSpec, x: &[f64], t: f64, cfg: &IntegratorConfig) -> Result<Vec<f64>> {
    integrate_visit(sys, x, t, cfg, |_, _| {})
}

/// Integrates `phi_t(x)`, calling `visit(time, point)` at `t = 0` and after
/// every step (including the trailing partial step).
pub fn integrate_visit<F>(
    sys: &SystemSpec,
    x: &[f64],
    t: f64,
    cfg: &IntegratorConfig,
    mut visit: F,
) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64]),
{
    check_start(sys, x, t, cfg)?;
    let mut rk = Rk4::new(sys, 0);
    let mut s = x.to_vec();
    let (n, rem) = cfg.plan(t);
    visit(0.0, &s);
    for i in 0..n {
        rk.step(&mut s, cfg.step);
        let time = (i + 1) as f64 * cfg.step;
        if !sys.in_box(&s) {
            return Err(Error::Escape { time });
        }
        visit(time, &s);
    }
    if rem > 0.0 {
        rk.step(&mut s, rem);
        if !sys.in_box(&s) {
            return Err(Error::Escape { time: t });
        }
        visit(t, &s);
    }
    Ok(s)
}

/// A base point with `k <= m` linearly independent tangent vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentFrame {
    pub base: Vec<f64>,
    pub frame: DMatrix<f64>,
}

impl TangentFrame {
    pub fn new(base: Vec<f64>, frame: DMatrix<f64>) -> Result<Self> {
        if frame.nrows() != base.len() || frame.ncols() > base.len() || frame.ncols() == 0 {
            return Err(Error::InvalidArgument(format!(
                "frame shape {:?} incompatible with dimension {}",
                frame.shape(),
                base.len()
            )));
        }
        let normalized = DMatrix::from_columns(
            &frame
                .column_iter()
                .map(|c| {
                    let n = c.norm();
                    if n > 0.0 {
                        c / n
                    } else {
                        c.clone_owned()
                    }
                })
                .collect::<Vec<_>>(),
        );
        let smin = normalized.svd(false, false).singular_values.min();
        if !(smin > 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "frame columns are not independent (smallest singular value {smin:e})"
            )));
        }
        Ok(TangentFrame { base, frame })
    }

    pub fn identity(base: Vec<f64>) -> Self {
        let m = base.len();
        TangentFrame {
            base,
            frame: DMatrix::identity(m, m),
        }
    }
}

/// Result of pushing a frame along the flow.
///
/// `frame` is orthonormal with the span of `Dphi_t(x) * frame_in`, and
/// `r` is upper triangular with `frame * r = Dphi_t(x) * frame_in`.
#[derive(Debug, Clone)]
pub struct TangentStep {
    pub point: Vec<f64>,
    pub frame: DMatrix<f64>,
    pub r: DMatrix<f64>,
    /// `log |det(Dphi_t restricted to the input span)|`.
    pub logdet: f64,
}

impl TangentStep {
    /// `Dphi_t(x) * frame_in`.
    pub fn image(&self) -> DMatrix<f64> {
        &self.frame * &self.r
    }
}

const DEGENERACY_RATIO: f64 = 1e-12;

/// Pushes a tangent frame by the variational equation over time `t`, with
/// QR renormalization every `cfg.renorm_every` steps.
pub fn tangent_advance(
    sys: &SystemSpec,
    fr: &TangentFrame,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<TangentStep> {
    check_start(sys, &fr.base, t, cfg)?;
    let m = sys.dim();
    let k = fr.frame.ncols();
    let (_, r_in) = linalg::qr(&fr.frame);
    let logvol_in: f64 = r_in.diagonal().iter().map(|v| v.abs().ln()).sum();

    let mut rk = Rk4::new(sys, k);
    let mut s = Vec::with_capacity(m * (k + 1));
    s.extend_from_slice(&fr.base);
    s.extend_from_slice(fr.frame.as_slice());
    let mut r_acc = DMatrix::<f64>::identity(k, k);

    let renorm = |s: &mut [f64], r_acc: &mut DMatrix<f64>, time: f64| -> Result<()> {
        let v = DMatrix::from_column_slice(m, k, &s[m..]);
        let (q, r) = linalg::qr(&v);
        let ratio = linalg::diag_ratio(&r);
        if !(ratio > DEGENERACY_RATIO) {
            return Err(Error::Degenerate { time, ratio });
        }
        s[m..].copy_from_slice(q.as_slice());
        *r_acc = &r * &*r_acc;
        Ok(())
    };

    let (n, rem) = cfg.plan(t);
    for i in 0..n {
        rk.step(&mut s, cfg.step);
        let time = (i + 1) as f64 * cfg.step;
        if !sys.in_box(&s[..m]) {
            return Err(Error::Escape { time });
        }
        if (i + 1) % cfg.renorm_every == 0 {
            renorm(&mut s, &mut r_acc, time)?;
        }
    }
    if rem > 0.0 {
        rk.step(&mut s, rem);
        if !sys.in_box(&s[..m]) {
            return Err(Error::Escape { time: t });
        }
    }
    // Final QR leaves the frame orthonormal; identity when already so.
    renorm(&mut s, &mut r_acc, t)?;

    let logdet = r_acc.diagonal().iter().map(|v| v.abs().ln()).sum::<f64>() - logvol_in;
    Ok(TangentStep {
        point: s[..m].to_vec(),
        frame: DMatrix::from_column_slice(m, k, &s[m..]),
        r: r_acc,
        logdet,
    })
}

/// `(phi_t(x), Dphi_t(x))`.
pub fn flow_jacobian(
    sys: &SystemSpec,
    x: &[f64],
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let st = tangent_advance(sys, &TangentFrame::identity(x.to_vec()), t, cfg)?;
    let d = st.image();
    Ok((st.point, d))
}
