//! Report and plot-data writers. Every file starts with a provenance record:
//! JSON files carry it under the `provenance` key, CSV files as a first line
//! `# {json}` ahead of the column header.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::criteria::CriterionReport;
use crate::error::{Error, Result};
use crate::lpf::CocycleTrace;
use crate::pliss::HyperbolicTimes;
use crate::srb::EmpiricalMeasure;

pub const TOOL: &str = "srblab";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>) -> Self {
        Provenance {
            tool: TOOL.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash.into(),
        }
    }

    /// Provenance for a value hashed with [`config_hash`].
    pub fn for_config<T: Serialize>(cfg: &T) -> Result<Self> {
        Ok(Self::new(config_hash(cfg)?))
    }
}

/// SHA-256 of the canonical JSON form (object keys sorted).
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let canonical = serde_json::to_string(&serde_json::to_value(value)?)?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Writes `value` (which must serialize to an object) with the provenance
/// record added under `provenance`.
pub fn write_json<T: Serialize>(path: &Path, prov: &Provenance, value: &T) -> Result<()> {
    let mut v = serde_json::to_value(value)?;
    let obj = v
        .as_object_mut()
        .ok_or_else(|| Error::InvalidArgument("JSON report must be an object".into()))?;
    obj.insert("provenance".into(), serde_json::to_value(prov)?);
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, &v)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

/// CSV writer whose first line is `# ` followed by `header` as JSON.
pub fn csv_writer<T: Serialize>(path: &Path, header: &T) -> Result<csv::Writer<BufWriter<File>>> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "# {}", serde_json::to_string(header)?)?;
    Ok(csv::Writer::from_writer(f))
}

fn num(v: f64) -> String {
    format!("{v}")
}

#[derive(Serialize)]
struct Header<'a, E: Serialize> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    extra: E,
}

/// Columns `t, x1..xm, norm_G`.
pub fn write_trajectory_csv(path: &Path, prov: &Provenance, system: &str, rows: &[(f64, Vec<f64>, f64)]) -> Result<()> {
    let m = rows.first().map(|r| r.1.len()).unwrap_or(0);
    let mut w = csv_writer(path, &Header { provenance: prov, extra: serde_json::json!({ "system": system }) })?;
    let mut head = vec!["t".to_string()];
    head.extend((1..=m).map(|i| format!("x{i}")));
    head.push("norm_G".into());
    w.write_record(&head)?;
    for (t, x, g) in rows {
        let mut rec = vec![num(*t)];
        rec.extend(x.iter().map(|v| num(*v)));
        rec.push(num(*g));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `i, a_i, logG_i, logdet_cu_i, dist_trunc_i`.
pub fn write_trace_csv(path: &Path, prov: &Provenance, trace: &CocycleTrace) -> Result<()> {
    let header = serde_json::json!({
        "system": trace.system,
        "base": trace.base,
        "delta": trace.delta,
        "period": trace.period,
        "d_cu": trace.d_cu,
        "N": trace.n,
    });
    let mut w = csv_writer(path, &Header { provenance: prov, extra: header })?;
    w.write_record(["i", "a_i", "logG_i", "logdet_cu_i", "dist_trunc_i"])?;
    for i in 0..trace.n {
        w.write_record([
            i.to_string(),
            num(trace.a[i]),
            num(trace.log_g[i]),
            num(trace.logdet_cu[i]),
            num(trace.dist_trunc[i]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `index, hyptimex_margin, srtimex_margin`.
pub fn write_hyperbolic_csv(path: &Path, prov: &Provenance, h: &HyperbolicTimes) -> Result<()> {
    let mut w = csv_writer(
        path,
        &Header { provenance: prov, extra: serde_json::json!({ "N": h.n, "c0": h.c0 }) },
    )?;
    w.write_record(["index", "hyptimex_margin", "srtimex_margin"])?;
    for c in &h.checks {
        w.write_record([c.index.to_string(), num(c.hyptimex_margin), num(c.srtimex_margin)])?;
    }
    w.flush()?;
    Ok(())
}

/// Nonzero cells as `cell, weight`; the grid goes in the header line.
pub fn write_measure_csv(path: &Path, prov: &Provenance, system: &str, m: &EmpiricalMeasure) -> Result<()> {
    let header = serde_json::json!({
        "system": system,
        "grid": m.grid,
        "sample_count": m.sample_count,
    });
    let mut w = csv_writer(path, &Header { provenance: prov, extra: header })?;
    w.write_record(["cell", "weight"])?;
    for (i, wt) in m.support() {
        w.write_record([i.to_string(), num(wt)])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_measure_csv`].
pub fn read_measure_csv(path: &Path) -> Result<EmpiricalMeasure> {
    let text = std::fs::read_to_string(path)?;
    let (first, rest) = text
        .split_once('\n')
        .ok_or_else(|| Error::Io("empty measure file".into()))?;
    let header: serde_json::Value = serde_json::from_str(first.trim_start_matches("# "))?;
    let grid: crate::srb::Grid = serde_json::from_value(header["grid"].clone())?;
    let count = header["sample_count"].as_u64().unwrap_or(0) as usize;
    let mut masses = vec![0.0; grid.len()];
    let mut r = csv::Reader::from_reader(rest.as_bytes());
    for rec in r.records() {
        let rec = rec?;
        let cell: usize = rec[0].parse().map_err(|_| Error::Io("bad cell index".into()))?;
        let w: f64 = rec[1].parse().map_err(|_| Error::Io("bad weight".into()))?;
        *masses
            .get_mut(cell)
            .ok_or_else(|| Error::Io(format!("cell {cell} outside the grid")))? = w;
    }
    EmpiricalMeasure::from_masses(grid, masses, count)
}

/// Columns `x, y, weight` for the projection onto coordinates `(i, j)`.
pub fn write_marginal_csv(
    path: &Path,
    prov: &Provenance,
    m: &EmpiricalMeasure,
    i: usize,
    j: usize,
) -> Result<()> {
    let header = serde_json::json!({ "axes": [i, j] });
    let mut w = csv_writer(path, &Header { provenance: prov, extra: header })?;
    w.write_record(["x", "y", "weight"])?;
    for (x, y, wt) in m.marginal_2d(i, j) {
        w.write_record([num(x), num(y), num(wt)])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per recorded step, one column per orbit; orbits with shorter
/// curves leave trailing cells empty.
pub fn write_running_csv(path: &Path, prov: &Provenance, report: &CriterionReport) -> Result<()> {
    let header = serde_json::json!({ "criterion": report.criterion, "system": report.system });
    let mut w = csv_writer(path, &Header { provenance: prov, extra: header })?;
    let mut head = vec!["step".to_string()];
    head.extend(report.per_orbit.iter().map(|o| format!("orbit_{}", o.index)));
    w.write_record(&head)?;
    let len = report.per_orbit.iter().map(|o| o.running.len()).max().unwrap_or(0);
    for k in 0..len {
        let mut rec = vec![(k + 1).to_string()];
        rec.extend(
            report
                .per_orbit
                .iter()
                .map(|o| o.running.get(k).map(|v| num(*v)).unwrap_or_default()),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::srb::Grid;

    #[test]
    fn hash_ignores_key_order_and_tracks_values() {
        let a = serde_json::json!({ "x": 1, "y": [1.5, 2.0] });
        let b: serde_json::Value = serde_json::from_str(r#"{"y":[1.5,2.0],"x":1}"#).unwrap();
        assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        let c = serde_json::json!({ "x": 2, "y": [1.5, 2.0] });
        assert_ne!(config_hash(&a).unwrap(), config_hash(&c).unwrap());
        assert_eq!(config_hash(&a).unwrap().len(), 64);
    }

    #[test]
    fn measure_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(vec![0.0; 3], vec![1.0; 3], 4).unwrap();
        let mut masses = vec![0.0; g.len()];
        masses[3] = 0.25;
        masses[17] = 0.5;
        masses[63] = 0.25;
        let m = EmpiricalMeasure::from_masses(g, masses, 12).unwrap();
        let p = dir.path().join("m.csv");
        write_measure_csv(&p, &Provenance::new("abc"), "test", &m).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# {\"provenance\":{\"tool\":\"srblab\""));
        assert_eq!(read_measure_csv(&p).unwrap(), m);
    }

    #[test]
    fn json_gets_provenance() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        write_json(&p, &Provenance::new("h"), &serde_json::json!({ "a": 1 })).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
        assert_eq!(v["provenance"]["config_hash"], "h");
        assert!(write_json(&p, &Provenance::new("h"), &[1, 2]).is_err());
    }
}
