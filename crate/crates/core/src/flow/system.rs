//! System registry: vector field plus the data the criteria need about it
//! (equilibria, trapping region, Lipschitz bound, declared splitting index).

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::field::{AffineField, Lorenz, Monomial, PolynomialField, VectorField};
use crate::error::{Error, Result};

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoundingBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        BoundingBox { lo, hi }
    }

    pub fn cube(dim: usize, half: f64) -> Self {
        BoundingBox::new(vec![-half; dim], vec![half; dim])
    }

    #[inline]
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *v >= *l && *v <= *h)
    }
}

/// Declared trapping region `U`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrapRegion {
    /// The bounding box itself.
    Box,
    Ball { center: Vec<f64>, radius: f64 },
}

/// A vector field on `R^m` with its equilibria, trapping region, Lipschitz
/// bound and declared stable dimension `d_s` (so `d_cu = m - d_s`).
#[derive(Clone)]
pub struct SystemSpec {
    pub name: String,
    field: Arc<dyn VectorField>,
    pub equilibria: Vec<Vec<f64>>,
    pub trap: TrapRegion,
    pub bounds: BoundingBox,
    pub lip_bound: f64,
    pub d_s: usize,
}

impl fmt::Debug for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemSpec")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("equilibria", &self.equilibria)
            .field("trap", &self.trap)
            .field("bounds", &self.bounds)
            .field("lip_bound", &self.lip_bound)
            .field("d_s", &self.d_s)
            .finish()
    }
}

impl SystemSpec {
    /// Builds a system, computing the Lipschitz bound over the box and
    /// checking the listed equilibria.
    pub fn new(
        name: impl Into<String>,
        field: Arc<dyn VectorField>,
        equilibria: Vec<Vec<f64>>,
        trap: TrapRegion,
        bounds: BoundingBox,
        d_s: usize,
    ) -> Result<Self> {
        let lip_bound = field.lipschitz_bound(&bounds.lo, &bounds.hi);
        let sys = SystemSpec {
            name: name.into(),
            field,
            equilibria,
            trap,
            bounds,
            lip_bound,
            d_s,
        };
        sys.validate()?;
        Ok(sys)
    }

    fn validate(&self) -> Result<()> {
        let m = self.dim();
        if m == 0 {
            return Err(Error::Definition("dimension must be positive".into()));
        }
        if self.bounds.lo.len() != m {
            return Err(Error::Definition("box dimension mismatch".into()));
        }
        if self.d_s > m {
            return Err(Error::Definition(format!("d_s = {} exceeds dimension {m}", self.d_s)));
        }
        for eq in &self.equilibria {
            if eq.len() != m {
                return Err(Error::Definition("equilibrium dimension mismatch".into()));
            }
            let g = self.eval(eq);
            let n = crate::linalg::norm(&g);
            if !(n < 1e-10) {
                return Err(Error::Definition(format!(
                    "listed equilibrium {eq:?} has |G| = {n:e}"
                )));
            }
        }
        if let TrapRegion::Ball { center, radius } = &self.trap {
            if center.len() != m || *radius <= 0.0 {
                return Err(Error::Definition("invalid trapping ball".into()));
            }
            for k in 0..m {
                if center[k] - radius < self.bounds.lo[k] || center[k] + radius > self.bounds.hi[k] {
                    return Err(Error::Definition("trapping ball exceeds the box".into()));
                }
            }
        }
        Ok(())
    }

    pub fn field(&self) -> &dyn VectorField {
        self.field.as_ref()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn d_cu(&self) -> usize {
        self.dim() - self.d_s
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.field.eval(x, &mut out);
        out
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let m = self.dim();
        let mut buf = vec![0.0; m * m];
        self.field.jacobian(x, &mut buf);
        DMatrix::from_row_slice(m, m, &buf)
    }

    pub fn in_box(&self, x: &[f64]) -> bool {
        self.bounds.contains(x)
    }

    /// Trapping-region predicate.
    pub fn in_trap(&self, x: &[f64]) -> bool {
        match &self.trap {
            TrapRegion::Box => self.bounds.contains(x),
            TrapRegion::Ball { center, radius } => crate::linalg::dist(x, center) <= *radius,
        }
    }

    /// Smallest axis-aligned box around the trapping region; sampling
    /// uniformly here and rejecting by [`Self::in_trap`] is uniform in `U`.
    pub fn trap_box(&self) -> BoundingBox {
        match &self.trap {
            TrapRegion::Box => self.bounds.clone(),
            TrapRegion::Ball { center, radius } => BoundingBox::new(
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
        }
    }

    /// Distance to the nearest listed equilibrium (infinite when none).
    pub fn equilibrium_distance(&self, x: &[f64]) -> f64 {
        super::distance::nearest_distance(x, &self.equilibria)
    }
}

/// Trapping ball for the Lorenz equations. `V = x^2 + y^2 + (z - r - s)^2`
/// decreases outside the ellipsoid `s x^2 + y^2 + b (z - c/2)^2 = b c^2 / 4`
/// with `c = r + s`, so any ball around `(0, 0, c)` containing that
/// ellipsoid is forward invariant.
pub fn lorenz_trapping_ball(l: &Lorenz) -> (Vec<f64>, f64) {
    let c = l.rho + l.sigma;
    let ax = 0.5 * c * (l.beta / l.sigma).sqrt();
    let ay = 0.5 * c * l.beta.sqrt();
    let az = 0.5 * c;
    let mut max_d2: f64 = 0.0;
    let n = 720;
    for i in 0..=n {
        let theta = std::f64::consts::PI * i as f64 / n as f64;
        for j in 0..(2 * n) {
            let phi = std::f64::consts::PI * j as f64 / n as f64;
            let x = ax * theta.sin() * phi.cos();
            let y = ay * theta.sin() * phi.sin();
            let z = c / 2.0 + az * theta.cos();
            max_d2 = max_d2.max(x * x + y * y + (z - c) * (z - c));
        }
    }
    // Margin covers the angular sampling of the ellipsoid surface.
    (vec![0.0, 0.0, c], 1.02 * max_d2.sqrt() + 1.0)
}

pub fn lorenz_system(name: &str, l: Lorenz) -> Result<SystemSpec> {
    if !(l.sigma > 0.0 && l.beta > 0.0 && l.rho > 0.0) {
        return Err(Error::Definition("Lorenz parameters must be positive".into()));
    }
    let (center, radius) = lorenz_trapping_ball(&l);
    let bounds = BoundingBox::new(
        vec![-radius, -radius, center[2] - radius],
        vec![radius, radius, center[2] + radius],
    );
    let mut equilibria = vec![vec![0.0, 0.0, 0.0]];
    if l.rho > 1.0 {
        let q = (l.beta * (l.rho - 1.0)).sqrt();
        equilibria.push(vec![q, q, l.rho - 1.0]);
        equilibria.push(vec![-q, -q, l.rho - 1.0]);
    }
    SystemSpec::new(
        name,
        Arc::new(l),
        equilibria,
        TrapRegion::Ball { center, radius },
        bounds,
        1,
    )
}

fn affine_system(
    name: &str,
    a: DMatrix<f64>,
    b: Vec<f64>,
    trap_radius: f64,
    box_half: f64,
    d_s: usize,
) -> Result<SystemSpec> {
    let m = b.len();
    // Isolated equilibrium only when A is invertible; non-isolated sets of
    // zeros are not listed.
    let equilibria = match a.clone().try_inverse() {
        Some(inv) if a.determinant().abs() > 1e-12 => {
            let x = -(inv * DVector::from_vec(b.clone()));
            vec![x.as_slice().to_vec()]
        }
        _ => Vec::new(),
    };
    SystemSpec::new(
        name,
        Arc::new(AffineField::new(a, b)),
        equilibria,
        TrapRegion::Ball {
            center: vec![0.0; m],
            radius: trap_radius,
        },
        BoundingBox::cube(m, box_half),
        d_s,
    )
}

fn polynomial_system(
    name: &str,
    rows: Vec<Vec<(f64, [u32; 3])>>,
    equilibria: Vec<Vec<f64>>,
    trap: TrapRegion,
    bounds: BoundingBox,
    d_s: usize,
) -> Result<SystemSpec> {
    let rows = rows
        .into_iter()
        .map(|r| {
            r.into_iter()
                .map(|(coeff, p)| Monomial {
                    coeff,
                    powers: p.to_vec(),
                })
                .collect()
        })
        .collect();
    SystemSpec::new(
        name,
        Arc::new(PolynomialField::new(3, rows)),
        equilibria,
        trap,
        bounds,
        d_s,
    )
}

/// Names accepted by [`lookup`], with their parameter signatures.
pub const REGISTRY: &[&str] = &[
    "constant",
    "saddle(lu,ls,lss)",
    "diag(a,b,c)",
    "linear(a11,a12,a13,a21,a22,a23,a31,a32,a33)",
    "lorenz",
    "lorenz(sigma,rho,beta)",
    "lorenz_contracting",
    "bistable",
    "hopf",
    "hopf(mu)",
];

fn parse_call(spec: &str) -> Result<(String, Vec<f64>)> {
    let spec = spec.trim();
    match spec.find('(') {
        None => Ok((spec.to_string(), Vec::new())),
        Some(open) => {
            if !spec.ends_with(')') {
                return Err(unknown(spec));
            }
            let name = spec[..open].trim().to_string();
            let inner = &spec[open + 1..spec.len() - 1];
            let params = if inner.trim().is_empty() {
                Vec::new()
            } else {
                inner
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| unknown(spec))?
            };
            Ok((name, params))
        }
    }
}

fn unknown(name: &str) -> Error {
    Error::UnknownSystem {
        name: name.to_string(),
        known: REGISTRY.join(", "),
    }
}

fn expect_params(spec: &str, params: &[f64], n: usize) -> Result<()> {
    if params.len() != n || params.iter().any(|p| !p.is_finite()) {
        Err(unknown(spec))
    } else {
        Ok(())
    }
}

/// Looks up a system by registry name and parameter string, e.g.
/// `"saddle(1,1,2)"` or `"lorenz(10,28,2.6667)"`.
pub fn lookup(spec: &str) -> Result<SystemSpec> {
    let (name, p) = parse_call(spec)?;
    let canonical = spec.replace(' ', "");
    match name.as_str() {
        "constant" => {
            expect_params(spec, &p, 0)?;
            affine_system(
                "constant",
                DMatrix::zeros(3, 3),
                vec![1.0, 0.0, 0.0],
                1.0,
                1.0e3,
                1,
            )
        }
        "saddle" => {
            expect_params(spec, &p, 3)?;
            let a = DMatrix::from_diagonal(&DVector::from_vec(vec![p[0], -p[1], -p[2]]));
            affine_system(&canonical, a, vec![0.0; 3], 1.0, 1.0e6, 1)
        }
        "diag" => {
            expect_params(spec, &p, 3)?;
            let a = DMatrix::from_diagonal(&DVector::from_vec(p.clone()));
            affine_system(&canonical, a, vec![0.0; 3], 1.0, 1.0e6, 1)
        }
        "linear" => {
            expect_params(spec, &p, 9)?;
            let a = DMatrix::from_row_slice(3, 3, &p);
            affine_system(&canonical, a, vec![0.0; 3], 1.0, 1.0e6, 1)
        }
        "lorenz" if p.is_empty() => lorenz_system("lorenz", Lorenz::CLASSIC),
        "lorenz" => {
            expect_params(spec, &p, 3)?;
            lorenz_system(
                &canonical,
                Lorenz {
                    sigma: p[0],
                    rho: p[1],
                    beta: p[2],
                },
            )
        }
        // Unstable eigenvalue at the origin (~11.83) is smaller than the
        // weak contraction rate beta = 12.
        "lorenz_contracting" => {
            expect_params(spec, &p, 0)?;
            lorenz_system(
                "lorenz_contracting",
                Lorenz {
                    sigma: 10.0,
                    rho: 28.0,
                    beta: 12.0,
                },
            )
        }
        "bistable" => {
            expect_params(spec, &p, 0)?;
            polynomial_system(
                "bistable",
                vec![
                    vec![(1.0, [1, 0, 0]), (-1.0, [3, 0, 0])],
                    vec![(-1.0, [0, 1, 0])],
                    vec![(-1.0, [0, 0, 1])],
                ],
                vec![vec![-1.0, 0.0, 0.0], vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]],
                TrapRegion::Box,
                BoundingBox::cube(3, 2.0),
                1,
            )
        }
        "hopf" => {
            let mu = match p.len() {
                0 => 1.0,
                1 if p[0] > 0.0 && p[0] <= 1.0 => p[0],
                _ => return Err(unknown(spec)),
            };
            let name = if p.is_empty() { "hopf".to_string() } else { canonical };
            polynomial_system(
                &name,
                vec![
                    vec![(mu, [1, 0, 0]), (-1.0, [0, 1, 0]), (-1.0, [3, 0, 0]), (-1.0, [1, 2, 0])],
                    vec![(1.0, [1, 0, 0]), (mu, [0, 1, 0]), (-1.0, [2, 1, 0]), (-1.0, [0, 3, 0])],
                    vec![(-1.0, [0, 0, 1])],
                ],
                vec![vec![0.0, 0.0, 0.0]],
                TrapRegion::Ball {
                    center: vec![0.0; 3],
                    radius: 2.0,
                },
                BoundingBox::cube(3, 2.5),
                1,
            )
        }
        _ => Err(unknown(spec)),
    }
}

/// The default testbed roster.
pub fn builtin_systems() -> Vec<SystemSpec> {
    [
        "constant",
        "saddle(1,1,2)",
        "diag(1,0.5,-2)",
        "lorenz",
        "lorenz_contracting",
        "bistable",
        "hopf",
    ]
    .iter()
    .map(|s| lookup(s).expect("builtin systems are valid"))
    .collect()
}

/// Structured text definition of a custom polynomial system (TOML).
///
/// ```toml
/// name = "duffing"
/// dim = 3
/// d_s = 1
/// box_lo = [-2.0, -2.0, -2.0]
/// box_hi = [2.0, 2.0, 2.0]
/// equilibria = [[0.0, 0.0, 0.0]]
///
/// [[term]]
/// eq = 0
/// coeff = 1.0
/// powers = [0, 1, 0]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDefinition {
    pub name: String,
    pub dim: usize,
    pub d_s: usize,
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
    #[serde(default)]
    pub equilibria: Vec<Vec<f64>>,
    #[serde(default)]
    pub trap_ball: Option<BallDef>,
    #[serde(default, rename = "term")]
    pub terms: Vec<TermDef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallDef {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermDef {
    pub eq: usize,
    pub coeff: f64,
    pub powers: Vec<u32>,
}

impl SystemDefinition {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Definition(e.to_string()))
    }

    pub fn build(&self) -> Result<SystemSpec> {
        let m = self.dim;
        if self.box_lo.len() != m || self.box_hi.len() != m {
            return Err(Error::Definition("box dimension mismatch".into()));
        }
        if self.box_lo.iter().zip(&self.box_hi).any(|(l, h)| !(l < h)) {
            return Err(Error::Definition("box_lo must be below box_hi".into()));
        }
        let mut rows = vec![Vec::new(); m];
        for t in &self.terms {
            if t.eq >= m || t.powers.len() != m {
                return Err(Error::Definition(format!("malformed term {t:?}")));
            }
            rows[t.eq].push(Monomial {
                coeff: t.coeff,
                powers: t.powers.clone(),
            });
        }
        let trap = match &self.trap_ball {
            None => TrapRegion::Box,
            Some(b) => TrapRegion::Ball {
                center: b.center.clone(),
                radius: b.radius,
            },
        };
        SystemSpec::new(
            self.name.clone(),
            Arc::new(PolynomialField::new(m, rows)),
            self.equilibria.clone(),
            trap,
            BoundingBox::new(self.box_lo.clone(), self.box_hi.clone()),
            self.d_s,
        )
    }
}

/// Resolves either a registry name or a path to a definition file.
pub fn resolve(spec: &str) -> Result<SystemSpec> {
    if spec.ends_with(".toml") {
        let text = std::fs::read_to_string(Path::new(spec))?;
        SystemDefinition::parse(&text)?.build()
    } else {
        lookup(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lorenz_equilibria_are_analytic() {
        let s = lookup("lorenz").unwrap();
        let q = (8.0f64 / 3.0 * 27.0).sqrt();
        assert_eq!(s.equilibria.len(), 3);
        assert_eq!(s.equilibria[0], vec![0.0, 0.0, 0.0]);
        assert!((s.equilibria[1][0] - q).abs() < 1e-14);
        assert!((s.equilibria[2][1] + q).abs() < 1e-14);
        assert_eq!(s.equilibria[1][2], 27.0);
    }

    #[test]
    fn constant_has_no_equilibria() {
        let s = lookup("constant").unwrap();
        assert!(s.equilibria.is_empty());
        assert_eq!(s.lip_bound, 0.0);
    }

    #[test]
    fn saddle_lipschitz_is_max_eigenvalue() {
        let s = lookup("saddle(1,1,2)").unwrap();
        assert_eq!(s.equilibria, vec![vec![0.0, 0.0, 0.0]]);
        assert!((s.lip_bound - 2.0).abs() < 1e-12);
    }

    #[test]
    fn malformed_names_list_the_registry() {
        for bad in ["lorenzz", "saddle(1,2)", "saddle(1,a,2)", "hopf(3)", "diag(1,2,3"] {
            let e = lookup(bad).unwrap_err();
            assert!(matches!(e, Error::UnknownSystem { .. }), "{bad}");
            assert!(e.to_string().contains("lorenz"));
        }
    }

    #[test]
    fn lorenz_ball_contains_the_ellipsoid() {
        let (c, r) = lorenz_trapping_ball(&Lorenz::CLASSIC);
        // Bottom of the ellipsoid is the origin at distance c from the center.
        assert!(r > c[2]);
    }

    #[test]
    fn definition_round_trip() {
        let text = r#"
name = "duffing"
dim = 3
d_s = 1
box_lo = [-2.0, -2.0, -2.0]
box_hi = [2.0, 2.0, 2.0]
equilibria = [[0.0, 0.0, 0.0]]

[[term]]
eq = 0
coeff = 1.0
powers = [0, 1, 0]

[[term]]
eq = 1
coeff = 1.0
powers = [1, 0, 0]

[[term]]
eq = 1
coeff = -1.0
powers = [3, 0, 0]

[[term]]
eq = 2
coeff = -1.0
powers = [0, 0, 1]
"#;
        let def = SystemDefinition::parse(text).unwrap();
        let sys = def.build().unwrap();
        assert_eq!(sys.eval(&[0.5, 1.0, 2.0]), vec![1.0, 0.5 - 0.125, -2.0]);
        let again = SystemDefinition::parse(&toml::to_string(&def).unwrap()).unwrap();
        assert_eq!(again, def);
    }

    #[test]
    fn definition_rejects_bad_equilibrium_and_unknown_keys() {
        let text = r#"
name = "bad"
dim = 1
d_s = 0
box_lo = [-1.0]
box_hi = [1.0]
equilibria = [[0.5]]
[[term]]
eq = 0
coeff = 1.0
powers = [1]
"#;
        assert!(matches!(
            SystemDefinition::parse(text).unwrap().build(),
            Err(Error::Definition(_))
        ));
        assert!(SystemDefinition::parse("name = \"x\"\nbogus = 1\n").is_err());
    }
}
