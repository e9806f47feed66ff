//! Run configuration: a TOML document with one table per stage. Unknown keys
//! are rejected everywhere; omitted keys take the defaults below.

use serde::{Deserialize, Serialize};

use crate::criteria::EnsembleSpec;
use crate::flow::IntegratorConfig;
use crate::lpf::TraceConfig;
use crate::pliss::HyperbolicTimeConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// System spec understood by the registry, e.g. `lorenz` or
    /// `lorenz(10,28,2.6666666666666665)`.
    pub system: String,
    /// Subcommand that produced or will consume this configuration.
    pub command: Option<String>,
    /// Criterion selector for `criteria`.
    pub which: Option<String>,
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    pub threads: Option<usize>,
    pub out_dir: String,
    /// Start point for single-orbit commands; the first ensemble point is
    /// used when absent.
    pub x0: Option<Vec<f64>>,
    pub integrator: IntegratorConfig,
    pub ensemble: EnsembleSection,
    pub simulate: SimulateSection,
    pub splitting: SplittingSection,
    pub trace: TraceSection,
    pub pliss: PlissSection,
    pub criteria: CriteriaSection,
    pub nue: NueSection,
    pub sr: SrSection,
    pub ase: AseSection,
    pub identity: IdentitySection,
    pub srb: SrbSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            system: "lorenz".into(),
            command: None,
            which: None,
            seed: None,
            threads: None,
            out_dir: "out".into(),
            x0: None,
            integrator: IntegratorConfig::default(),
            ensemble: EnsembleSection::default(),
            simulate: SimulateSection::default(),
            splitting: SplittingSection::default(),
            trace: TraceSection::default(),
            pliss: PlissSection::default(),
            criteria: CriteriaSection::default(),
            nue: NueSection::default(),
            sr: SrSection::default(),
            ase: AseSection::default(),
            identity: IdentitySection::default(),
            srb: SrbSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub count: usize,
    pub burn_in: f64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection { count: 100, burn_in: 50.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub horizon: f64,
    /// Integrator steps between recorded rows.
    pub stride: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection { horizon: 10.0, stride: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplittingSection {
    pub warm_fwd: f64,
    pub warm_bwd: f64,
    pub cone_width: f64,
    pub cone_time: f64,
    pub cone_samples: usize,
}

impl Default for SplittingSection {
    fn default() -> Self {
        SplittingSection {
            warm_fwd: 20.0,
            warm_bwd: 20.0,
            cone_width: 1.0,
            cone_time: 1.0,
            cone_samples: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceSection {
    pub warm: f64,
    pub period: f64,
}

impl Default for TraceSection {
    fn default() -> Self {
        TraceSection { warm: 20.0, period: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlissSection {
    /// Trace length.
    pub n: usize,
    pub c0: f64,
    pub delta0: f64,
    pub eps0: f64,
    pub kappa_min: usize,
    /// Defaults to the system's Lipschitz bound on its box.
    pub lip_bound: Option<f64>,
}

impl Default for PlissSection {
    fn default() -> Self {
        PlissSection {
            n: 2000,
            c0: 0.1,
            delta0: 0.1,
            eps0: 0.0025,
            kappa_min: 1,
            lip_bound: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriteriaSection {
    /// Ensemble pass fraction below which a run exits with status 1.
    pub min_pass_fraction: f64,
}

impl Default for CriteriaSection {
    fn default() -> Self {
        CriteriaSection { min_pass_fraction: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NueSection {
    pub c0: f64,
    pub n: usize,
    /// Step of the `nueT` variant.
    pub period: f64,
}

impl Default for NueSection {
    fn default() -> Self {
        NueSection { c0: 0.1, n: 2000, period: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SrSection {
    pub delta: f64,
    pub eps: f64,
    pub horizon: f64,
}

impl Default for SrSection {
    fn default() -> Self {
        SrSection { delta: 0.01, eps: 0.05, horizon: 500.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AseSection {
    pub c_star: f64,
    pub horizon: f64,
    pub plane_samples: usize,
}

impl Default for AseSection {
    fn default() -> Self {
        AseSection { c_star: 0.0, horizon: 200.0, plane_samples: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentitySection {
    pub n: usize,
    /// Largest acceptable per-step residual.
    pub tol: f64,
}

impl Default for IdentitySection {
    fn default() -> Self {
        IdentitySection { n: 2000, tol: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SrbSection {
    /// Cells per axis.
    pub grid: usize,
    pub horizon: f64,
    pub orbits: usize,
    /// L1 linkage radius.
    pub radius: f64,
    /// Size of the fresh ensemble (seed + 1) for basin assignment.
    pub basin_count: usize,
    pub basin_horizon: f64,
    pub basin_tol: f64,
    pub pushforward: PushforwardSection,
}

impl Default for SrbSection {
    fn default() -> Self {
        SrbSection {
            grid: 64,
            horizon: 5000.0,
            orbits: 20,
            radius: 0.3,
            basin_count: 100,
            basin_horizon: 1000.0,
            basin_tol: 0.25,
            pushforward: PushforwardSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PushforwardSection {
    pub enabled: bool,
    pub disk_radius: f64,
    pub per_axis: usize,
    pub n_max: usize,
    pub grid: usize,
    /// Horizon of the long reference orbit.
    pub reference_horizon: f64,
}

impl Default for PushforwardSection {
    fn default() -> Self {
        PushforwardSection {
            enabled: false,
            disk_radius: 0.5,
            per_axis: 16,
            n_max: 500,
            grid: 16,
            reference_horizon: 20_000.0,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Applies `section.key=value` with `value` parsed as a TOML literal
    /// (bare words are taken as strings).
    pub fn set(&mut self, assignment: &str) -> Result<(), String> {
        let (path, raw) = assignment
            .split_once('=')
            .ok_or_else(|| format!("override '{assignment}' is not of the form key=value"))?;
        let value = parse_value(raw.trim());
        let mut doc = toml::Table::try_from(&*self).map_err(|e| e.to_string())?;
        let keys: Vec<&str> = path.trim().split('.').collect();
        let mut table = &mut doc;
        for k in &keys[..keys.len() - 1] {
            table = table
                .entry(k.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| format!("'{k}' is not a table"))?;
        }
        table.insert(keys[keys.len() - 1].to_string(), value);
        *self = doc.try_into().map_err(|e: toml::de::Error| e.to_string())?;
        Ok(())
    }

    /// The configuration with the fields that must not affect results
    /// (threads, output directory) cleared; its hash labels every output.
    pub fn hash_view(&self) -> RunConfig {
        RunConfig {
            threads: None,
            out_dir: String::new(),
            ..self.clone()
        }
    }

    pub fn trace_config(&self) -> TraceConfig {
        TraceConfig {
            integrator: self.integrator,
            warm: self.trace.warm,
            period: self.trace.period,
        }
    }

    pub fn ensemble(&self, seed: u64, count: usize) -> EnsembleSpec {
        EnsembleSpec {
            system: self.system.clone(),
            count,
            seed,
            burn_in: self.ensemble.burn_in,
        }
    }

    pub fn hyperbolic_config(&self, lip_default: f64) -> HyperbolicTimeConfig {
        HyperbolicTimeConfig {
            c0: self.pliss.c0,
            delta0: self.pliss.delta0,
            eps0: self.pliss.eps0,
            lip_bound: self.pliss.lip_bound.unwrap_or(lip_default),
            kappa_min: self.pliss.kappa_min,
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
