use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;

use super::config::RunConfig;
use super::{CliError, Status, Which};
use crate::criteria::{ase_test, det_identity_check, nue_t_test, nue_test, sr_test, CriterionReport};
use crate::flow::{integrate_visit, resolve, SystemSpec};
use crate::io::{self, Provenance};
use crate::linalg;
use crate::lpf::{cocycle_trace, cocycle_trace_from, cone_invariance_check, estimate_splitting, normal_cu};
use crate::pliss::hyperbolic_times;
use crate::srb::{
    basin_coverage, cluster_measures, default_panel, empirical_measure, pushforward_at_hyperbolic_times,
    DiskSample, EmpiricalMeasure, Grid,
};

type Outcome = Result<Status, CliError>;

struct Ctx<'a> {
    cfg: &'a RunConfig,
    sys: SystemSpec,
    prov: Provenance,
    out: PathBuf,
}

impl<'a> Ctx<'a> {
    fn new(cfg: &'a RunConfig) -> Result<Self, CliError> {
        cfg.integrator.validate()?;
        Ok(Ctx {
            sys: resolve(&cfg.system)?,
            prov: Provenance::for_config(&cfg.hash_view())?,
            out: PathBuf::from(&cfg.out_dir),
            cfg,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn seed(&self) -> Result<u64, CliError> {
        self.cfg
            .seed
            .ok_or_else(|| CliError::Usage("--seed is required for commands that draw an ensemble".into()))
    }

    /// Burned-in ensemble points; failed points are dropped and counted.
    fn ensemble(&self, seed: u64, count: usize) -> Result<(Vec<Vec<f64>>, usize), CliError> {
        let pts = self.cfg.ensemble(seed, count).points(&self.sys, &self.cfg.integrator)?;
        let total = pts.len();
        let ok: Vec<Vec<f64>> = pts.into_iter().filter_map(|p| p.ok()).collect();
        let failed = total - ok.len();
        Ok((ok, failed))
    }

    fn start(&self) -> Result<Vec<f64>, CliError> {
        if let Some(x) = &self.cfg.x0 {
            if x.len() != self.sys.dim() {
                return Err(CliError::Usage(format!(
                    "x0 has {} coordinates, {} has {}",
                    x.len(),
                    self.sys.name,
                    self.sys.dim()
                )));
            }
            return Ok(x.clone());
        }
        let seed = self.seed()?;
        let mut pts = self.cfg.ensemble(seed, 1).points(&self.sys, &self.cfg.integrator)?;
        Ok(pts.remove(0)?)
    }
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

pub fn simulate(cfg: &RunConfig) -> Outcome {
    let ctx = Ctx::new(cfg)?;
    let x = ctx.start()?;
    let stride = cfg.simulate.stride.max(1);
    let mut rows = Vec::new();
    let mut step = 0usize;
    let horizon = cfg.simulate.horizon;
    let end = integrate_visit(&ctx.sys, &x, horizon, &cfg.integrator, |t, p| {
        if step.is_multiple_of(stride) || t == horizon {
            rows.push((t, p.to_vec(), linalg::norm(&ctx.sys.eval(p))));
        }
        step += 1;
    })?;
    if rows.last().map(|r| r.0) != Some(horizon) {
        rows.push((horizon, end.clone(), linalg::norm(&ctx.sys.eval(&end))));
    }
    io::write_trajectory_csv(&ctx.path("trajectory.csv"), &ctx.prov, &ctx.sys.name, &rows)?;
    println!("simulate: {} rows, end {:?}", rows.len(), end);
    Ok(Status::Ok)
}

pub fn splitting(cfg: &RunConfig) -> Outcome {
    let ctx = Ctx::new(cfg)?;
    let x = ctx.start()?;
    let s = &cfg.splitting;
    let est = estimate_splitting(&ctx.sys, &x, s.warm_fwd, s.warm_bwd, &cfg.integrator)?;
    let section = normal_cu(&est, &ctx.sys.eval(&est.base))?;
    let tc = crate::lpf::TraceConfig { warm: s.warm_fwd, ..cfg.trace_config() };
    let cone = cone_invariance_check(&ctx.sys, &x, s.cone_width, s.cone_time, s.cone_samples, &tc)?;
    io::write_json(
        &ctx.path("splitting.json"),
        &ctx.prov,
        &json!({
            "system": ctx.sys.name,
            "start": x,
            "estimate": est,
            "d_s": est.d_s(),
            "d_cu": est.d_cu(),
            "normal_section": section,
            "cone": cone,
        }),
    )?;
    println!(
        "splitting: d_s {} d_cu {} angle gap {:.3e} residual {:.3e} cone ratio {:.3e}",
        est.d_s(),
        est.d_cu(),
        est.angle_gap,
        est.residual,
        cone.max_ratio
    );
    Ok(Status::Ok)
}

pub fn pliss(cfg: &RunConfig) -> Outcome {
    let ctx = Ctx::new(cfg)?;
    let x = ctx.start()?;
    let hc = cfg.hyperbolic_config(ctx.sys.lip_bound);
    hc.validate()?;
    let trace = cocycle_trace(&ctx.sys, &x, cfg.pliss.n, hc.delta0, &cfg.trace_config())?;
    let h = hyperbolic_times(&trace, &hc)?;
    io::write_trace_csv(&ctx.path("trace.csv"), &ctx.prov, &trace)?;
    io::write_hyperbolic_csv(&ctx.path("hyperbolic_times.csv"), &ctx.prov, &h)?;
    let mut summary = h.summary_json();
    summary["system"] = json!(ctx.sys.name);
    summary["checks"] = json!(h.checks);
    summary["a_bound"] = json!(h.a_bound);
    summary["sr_mean"] = json!(h.sr_mean);
    summary["eps0"] = json!(hc.eps0);
    summary["reason"] = json!(h.reason);
    io::write_json(&ctx.path("hyperbolic_times.json"), &ctx.prov, &summary)?;
    println!(
        "pliss: {} hyperbolic times out of {} (density {:.3}){}",
        h.indices.len(),
        h.n,
        h.density,
        h.reason.as_deref().map(|r| format!("; {r}")).unwrap_or_default()
    );
    Ok(Status::Ok)
}

fn write_report(ctx: &Ctx, which: Which, report: &CriterionReport) -> Outcome {
    let name = which.name();
    io::write_json(&ctx.path(&format!("report_{name}.json")), &ctx.prov, report)?;
    io::write_running_csv(&ctx.path(&format!("running_{name}.csv")), &ctx.prov, report)?;
    let min = ctx.cfg.criteria.min_pass_fraction;
    let pass = report.pass_fraction >= min;
    println!(
        "{name}: pass fraction {:.3} (required {min}), {} excluded: {}",
        report.pass_fraction,
        report.excluded_count,
        if pass { "PASS" } else { "FAIL" }
    );
    for n in &report.notes {
        println!("  note: {n}");
    }
    Ok(if pass { Status::Ok } else { Status::Fail })
}

pub fn criteria(cfg: &RunConfig, which: Which) -> Outcome {
    let ctx = Ctx::new(cfg)?;
    let tc = cfg.trace_config();
    if which == Which::Identity {
        let x = ctx.start()?;
        let trace = cocycle_trace(&ctx.sys, &x, cfg.identity.n, 0.1, &tc)?;
        let residual = det_identity_check(&trace)?;
        let pass = residual < cfg.identity.tol;
        io::write_json(
            &ctx.path("identity.json"),
            &ctx.prov,
            &json!({
                "criterion": "identity",
                "system": ctx.sys.name,
                "start": x,
                "n": trace.n,
                "residual": residual,
                "tol": cfg.identity.tol,
                "pass": pass,
            }),
        )?;
        println!("identity: residual {residual:.3e} (tol {}): {}", cfg.identity.tol, if pass { "PASS" } else { "FAIL" });
        return Ok(if pass { Status::Ok } else { Status::Fail });
    }
    let ens = cfg.ensemble(ctx.seed()?, cfg.ensemble.count);
    let report = match which {
        Which::Nue => nue_test(&ctx.sys, &ens, cfg.nue.c0, cfg.nue.n, &tc)?,
        Which::NueT => nue_t_test(&ctx.sys, &ens, cfg.nue.c0, cfg.nue.period, cfg.nue.n, &tc)?,
        Which::Sr => sr_test(&ctx.sys, &ens, cfg.sr.delta, cfg.sr.eps, cfg.sr.horizon, &cfg.integrator)?,
        Which::Ase => ase_test(&ctx.sys, &ens, cfg.ase.c_star, cfg.ase.horizon, cfg.ase.plane_samples, &tc)?,
        Which::Identity => unreachable!("handled above"),
    };
    write_report(&ctx, which, &report)
}

fn marginal_axes(dim: usize) -> Vec<(usize, usize)> {
    match dim {
        0 | 1 => Vec::new(),
        2 => vec![(0, 1)],
        _ => vec![(0, 1), (0, 2), (1, 2)],
    }
}

pub fn srb(cfg: &RunConfig) -> Outcome {
    let ctx = Ctx::new(cfg)?;
    let seed = ctx.seed()?;
    let s = &cfg.srb;
    let ic = &cfg.integrator;
    let grid = Grid::for_system(&ctx.sys, s.grid)?;
    let (points, failed_starts) = ctx.ensemble(seed, s.orbits)?;
    let results: Vec<_> = points
        .par_iter()
        .map(|x| empirical_measure(&ctx.sys, x, s.horizon, &grid, ic))
        .collect();
    let mut measures = Vec::new();
    let mut orbit_errors = Vec::new();
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(m) => measures.push((k, m)),
            Err(e) => orbit_errors.push(json!({ "orbit": k, "error": e.to_string() })),
        }
    }
    if measures.is_empty() {
        return Err(CliError::Numerical(crate::Error::EmptyMeasure));
    }
    let mdir = ctx.path("measures");
    std::fs::create_dir_all(&mdir).map_err(usage)?;
    for (k, m) in &measures {
        io::write_measure_csv(&mdir.join(format!("measure_{k}.csv")), &ctx.prov, &ctx.sys.name, m)?;
    }
    let ms: Vec<EmpiricalMeasure> = measures.iter().map(|(_, m)| m.clone()).collect();
    let orbit_ids: Vec<usize> = measures.iter().map(|(k, _)| *k).collect();
    let pairwise: Vec<Vec<f64>> = ms
        .par_iter()
        .map(|a| ms.iter().map(|b| a.l1(b)).collect::<crate::Result<Vec<f64>>>())
        .collect::<crate::Result<_>>()?;
    let clustering = cluster_measures(&ms, s.radius)?;
    let clusters: Vec<Vec<usize>> = clustering
        .clusters
        .iter()
        .map(|c| c.iter().map(|i| orbit_ids[*i]).collect())
        .collect();
    for (c, rep) in clustering.representatives.iter().enumerate() {
        io::write_measure_csv(&ctx.path(&format!("representative_{c}.csv")), &ctx.prov, &ctx.sys.name, rep)?;
        for (i, j) in marginal_axes(ctx.sys.dim()) {
            io::write_marginal_csv(&ctx.path(&format!("representative_{c}_x{i}x{j}.csv")), &ctx.prov, rep, i, j)?;
        }
    }
    io::write_json(
        &ctx.path("clusters.json"),
        &ctx.prov,
        &json!({
            "system": ctx.sys.name,
            "seed": seed,
            "grid": grid,
            "horizon": s.horizon,
            "radius": s.radius,
            "orbits": s.orbits,
            "failed_starts": failed_starts,
            "orbit_errors": orbit_errors,
            "clusters": clusters,
            "cluster_count": clusters.len(),
            "pairwise_l1": pairwise,
        }),
    )?;

    let basin_seed = seed.wrapping_add(1);
    let (fresh, fresh_failed) = ctx.ensemble(basin_seed, s.basin_count)?;
    let panel = default_panel(ctx.sys.dim());
    let cov = basin_coverage(&ctx.sys, &fresh, &clustering.representatives, &panel, s.basin_tol, s.basin_horizon, ic)?;
    io::write_json(
        &ctx.path("basins.json"),
        &ctx.prov,
        &json!({
            "system": ctx.sys.name,
            "seed": basin_seed,
            "panel": panel.iter().map(|o| o.name()).collect::<Vec<_>>(),
            "tol": s.basin_tol,
            "horizon": s.basin_horizon,
            "failed_starts": fresh_failed,
            "coverage": cov,
        }),
    )?;
    println!(
        "srb: {} measures, {} cluster(s) at L1 radius {}; basin fractions {:?}, remainder {:.3}",
        ms.len(),
        clusters.len(),
        s.radius,
        cov.fractions,
        cov.remainder
    );

    if s.pushforward.enabled {
        pushforward(&ctx, &points[0])?;
    }
    Ok(Status::Ok)
}

fn pushforward(ctx: &Ctx, x: &[f64]) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let p = &cfg.srb.pushforward;
    let ic = &cfg.integrator;
    let hc = cfg.hyperbolic_config(ctx.sys.lip_bound);
    hc.validate()?;
    let est = estimate_splitting(&ctx.sys, x, cfg.splitting.warm_fwd, cfg.splitting.warm_bwd, ic)?;
    let disk = DiskSample::flat(&est, p.disk_radius, p.per_axis)?;
    let runs: Vec<_> = disk
        .particles
        .par_iter()
        .map(|(q, _)| {
            let frame = disk.particle_frame(&ctx.sys, q)?;
            let tr = cocycle_trace_from(&ctx.sys, q, &frame, p.n_max, hc.delta0, 1.0, ic)?;
            let h = hyperbolic_times(&tr, &hc)?;
            Ok((tr, h.indices))
        })
        .collect::<crate::Result<Vec<_>>>()?;
    let (traces, times): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    let grid = Grid::for_system(&ctx.sys, p.grid)?;
    let pf = pushforward_at_hyperbolic_times(&disk, &traces, &times, p.n_max, &grid)?;
    let reference = empirical_measure(&ctx.sys, &est.base, p.reference_horizon, &grid, ic)?;
    let l1 = pf.measure.l1(&reference)?;
    io::write_measure_csv(&ctx.path("pushforward.csv"), &ctx.prov, &ctx.sys.name, &pf.measure)?;
    io::write_json(
        &ctx.path("pushforward.json"),
        &ctx.prov,
        &json!({
            "system": ctx.sys.name,
            "center": disk.center,
            "particles": disk.particles.len(),
            "n_max": p.n_max,
            "grid": grid,
            "retained_fraction": pf.retained_fraction,
            "retained_pairs": pf.retained_pairs,
            "reference_horizon": p.reference_horizon,
            "l1_to_reference": l1,
        }),
    )?;
    println!("pushforward: retained {:.3}, L1 to long orbit {l1:.4}", pf.retained_fraction);
    Ok(())
}

pub fn report(cfg: &RunConfig) -> Outcome {
    let dir = Path::new(&cfg.out_dir);
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .filter(|p| p.file_name().is_some_and(|n| n != "summary.json"))
        .collect();
    files.sort();
    let mut rows = Vec::new();
    for f in files {
        let text = std::fs::read_to_string(&f).map_err(usage)?;
        let v: serde_json::Value = serde_json::from_str(&text).map_err(usage)?;
        let Some(criterion) = v.get("criterion").and_then(|c| c.as_str()) else {
            continue;
        };
        let row = json!({
            "file": f.file_name().map(|n| n.to_string_lossy().into_owned()),
            "criterion": criterion,
            "system": v["system"],
            "pass_fraction": v.get("pass_fraction"),
            "excluded_count": v.get("excluded_count"),
            "residual": v.get("residual"),
            "pass": v.get("pass"),
        });
        println!(
            "{:<10} {:<24} {}",
            criterion,
            v["system"].as_str().unwrap_or("?"),
            match (v.get("pass_fraction"), v.get("residual")) {
                (Some(p), _) => format!("pass fraction {p}"),
                (None, Some(r)) => format!("residual {r}"),
                _ => String::new(),
            }
        );
        rows.push(row);
    }
    let prov = Provenance::for_config(&cfg.hash_view())?;
    io::write_json(&dir.join("summary.json"), &prov, &json!({ "reports": rows }))?;
    Ok(Status::Ok)
}
