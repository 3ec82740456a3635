//! Run orchestration and output files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use super::config::{set_param, InitialData, Model, QSource, RunConfig};
use crate::constitutive::{coercivity_check, Tissue};
use crate::diagnostics::{
    complementarity_residual, curl_signature, indicator_distance, records_to_csv, segregation_metric, CurlRegions,
};
use crate::dynamics::{banded_initial_data, init_state, run};
use crate::error::{Error, Result};
use crate::field_io::{read_scalar_csv, scalar_to_csv, write_scalar_csv, write_vtk};
use crate::freeboundary::{
    banded_partition, complementarity_closure, init_limit, interface_polylines, partition_to_csv, polylines_to_csv,
    rectangles_level, run_limit,
};
use crate::grid::{curl2d, divergence, GridSpec, ScalarField};
use crate::stationary::{
    jump_rows_to_csv, measure_jump, solve_single_species, solve_stationary, verify_transmission, DomainPartition, InterfaceKind,
    JumpQuantity, TraceOptions,
};

/// Clearance, in cells, between the tissues and the walls for stationary
/// runs.
pub const STATIONARY_WALL_CLEARANCE: usize = 2;

/// Final diagnostics of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub entries: Vec<(String, f64)>,
    pub warnings: Vec<String>,
    pub wall_time: f64,
}

impl RunSummary {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.entries.iter().find(|(k, _)| k == key).map(|e| e.1)
    }
}

fn num(v: f64) -> String {
    format!("{v:.17e}")
}

/// Tissue partition of the initial data.
pub fn initial_partition(init: &InitialData, spec: GridSpec) -> Result<DomainPartition> {
    Ok(match init {
        InitialData::Banded { .. } => banded_partition(spec),
        InitialData::Rectangles { tissue1, tissue2, .. } => {
            let l1 = rectangles_level(spec, tissue1);
            let l2 = if tissue2.is_empty() { ScalarField::zeros(spec) } else { rectangles_level(spec, tissue2) };
            DomainPartition::from_levels(l1, l2)?
        }
        InitialData::Concentric { r1, r2, .. } => DomainPartition::concentric(spec, *r1, *r2),
    })
}

/// Initial densities: the partition indicators scaled by the densities.
pub fn initial_densities(init: &InitialData, spec: GridSpec) -> Result<(ScalarField, ScalarField)> {
    if let InitialData::Banded { level } = init {
        return Ok(banded_initial_data(spec, *level));
    }
    let (d1, d2) = match init {
        InitialData::Rectangles { density1, density2, .. } | InitialData::Concentric { density1, density2, .. } => {
            (*density1, *density2)
        }
        InitialData::Banded { .. } => unreachable!(),
    };
    let part = initial_partition(init, spec)?;
    Ok((part.chi1.map(|c| c * d1), part.chi2.map(|c| c * d2)))
}

fn initial_q(cfg: &RunConfig) -> Result<ScalarField> {
    match &cfg.q {
        QSource::Zero => Ok(ScalarField::zeros(cfg.grid)),
        QSource::Uniform(c) => Ok(ScalarField::constant(cfg.grid, *c)),
        QSource::File(p) => {
            let q = read_scalar_csv(p)?;
            if q.spec.nx != cfg.grid.nx || q.spec.ny != cfg.grid.ny {
                return Err(Error::Config(vec![format!(
                    "q file {} is {}x{}, the run grid is {}x{}",
                    p.display(),
                    q.spec.nx,
                    q.spec.ny,
                    cfg.grid.nx,
                    cfg.grid.ny
                )]));
            }
            Ok(ScalarField { spec: cfg.grid, values: q.values })
        }
    }
}

/// Runs `cfg` and writes its files into `out`.
pub fn execute(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    fs::create_dir_all(out)?;
    let start = Instant::now();
    let mut summary = match cfg.model {
        Model::Esvm | Model::Vm => execute_dynamic(cfg, out)?,
        Model::LEsvm | Model::LVm => execute_limit(cfg, out)?,
        Model::Stationary | Model::StationarySingle => execute_stationary(cfg, out)?,
    };
    summary.wall_time = start.elapsed().as_secs_f64();
    write_manifest(cfg, out, &summary)?;
    Ok(summary)
}

fn execute_dynamic(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    let (n1, n2) = initial_densities(&cfg.initial, cfg.grid)?;
    let ctrl = cfg.step_control();
    let state = init_state(n1, n2, &cfg.params, ctrl.velocity_law, &ctrl.solver)?;
    let traj = run(state, &ctrl, &cfg.params, cfg.every, |_, _| {})?;
    fs::write(out.join("observer.csv"), records_to_csv(&traj.records))?;
    let st = &traj.final_state;
    let curl1 = curl2d(&st.v1);
    let curl2 = curl2d(&st.v2);
    for (name, f) in [("n1", &st.n1), ("n2", &st.n2), ("p1", &st.p1), ("p2", &st.p2), ("curl_v1", &curl1), ("curl_v2", &curl2)] {
        write_scalar_csv(&out.join(format!("{name}.csv")), f)?;
    }
    write_vtk(
        &out.join("fields.vtk"),
        &[("n1", &st.n1), ("n2", &st.n2), ("p1", &st.p1), ("p2", &st.p2), ("curl_v1", &curl1), ("curl_v2", &curl2)],
    )?;
    let n = st.n1.zip_map(&st.n2, |a, b| a + b);
    let sig = curl_signature(&st.v2, &[-2.0 / 3.0, 2.0 / 3.0], &CurlRegions::default());
    Ok(RunSummary {
        entries: vec![
            ("t".into(), st.t),
            ("steps".into(), st.steps as f64),
            ("mass1".into(), st.n1.integral()),
            ("mass2".into(), st.n2.integral()),
            ("overlap".into(), segregation_metric(&st.n1, &st.n2)),
            ("comp_residual".into(), complementarity_residual(&n, cfg.params.eps)),
            ("indicator_distance".into(), indicator_distance(&n)),
            ("curl_v2_l2".into(), curl2.norm_l2()),
            ("max_abs_curl_v2".into(), curl2.max_abs()),
            ("min_curl_v2".into(), curl2.min()),
            ("posterior_left_curl".into(), sig.posterior_left_mean),
            ("posterior_right_curl".into(), sig.posterior_right_mean),
            ("clamp_count".into(), st.clamp_count as f64),
            ("negative_clips".into(), st.negative_clips as f64),
        ],
        warnings: Vec::new(),
        wall_time: 0.0,
    })
}

fn execute_limit(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    let part = initial_partition(&cfg.initial, cfg.grid)?;
    fs::write(out.join("partition_initial.csv"), partition_to_csv(&part))?;
    let state = init_limit(part, initial_q(cfg)?)?;
    let (a1, a2) = (state.area(Tissue::One), state.area(Tissue::Two));
    let ctrl = cfg.step_control();
    let traj = run_limit(state, &ctrl, &cfg.params, cfg.every, |_, _| {})?;
    fs::write(out.join("observer.csv"), records_to_csv(&traj.records))?;
    let st = &traj.final_state;
    fs::write(out.join("partition_final.csv"), partition_to_csv(&st.part))?;
    fs::write(out.join("interfaces.csv"), polylines_to_csv(&interface_polylines(&st.part)))?;
    let curl2 = curl2d(&st.v2);
    let curl1 = curl2d(&st.v1);
    let codes = st.part.chi1.zip_map(&st.part.chi2, |a, b| a + 2.0 * b);
    for (name, f) in [("q", &st.q), ("p1", &st.p1), ("p2", &st.p2), ("curl_v1", &curl1), ("curl_v2", &curl2)] {
        write_scalar_csv(&out.join(format!("{name}.csv")), f)?;
    }
    write_vtk(
        &out.join("fields.vtk"),
        &[("region", &codes), ("q", &st.q), ("p1", &st.p1), ("p2", &st.p2), ("curl_v1", &curl1), ("curl_v2", &curl2)],
    )?;
    let sig = curl_signature(&st.v2, &[-2.0 / 3.0, 2.0 / 3.0], &CurlRegions::default());
    Ok(RunSummary {
        entries: vec![
            ("t".into(), st.t),
            ("steps".into(), st.steps as f64),
            ("area1".into(), st.area(Tissue::One)),
            ("area2".into(), st.area(Tissue::Two)),
            ("area_growth1".into(), st.area(Tissue::One) - a1),
            ("area_growth2".into(), st.area(Tissue::Two) - a2),
            ("max_overlap_cells".into(), traj.max_overlap_cells as f64),
            ("max_closure".into(), traj.max_closure),
            ("q_max".into(), st.q.max()),
            ("curl_v2_l2".into(), curl2.norm_l2()),
            ("posterior_left_curl".into(), sig.posterior_left_mean),
            ("posterior_right_curl".into(), sig.posterior_right_mean),
        ],
        warnings: Vec::new(),
        wall_time: 0.0,
    })
}

fn execute_stationary(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    let mut part = initial_partition(&cfg.initial, cfg.grid)?;
    part.check_wall_clearance(STATIONARY_WALL_CLEARANCE)?;
    let mut warnings = Vec::new();
    let sol = if cfg.model == Model::StationarySingle {
        part = DomainPartition::from_levels(part.level1.clone(), ScalarField::zeros(cfg.grid))?;
        solve_single_species(&part, &cfg.params, &cfg.control.solver)?
    } else {
        let report = coercivity_check(&cfg.params);
        if !report.holds {
            warnings.push(format!(
                "warning: coercivity condition fails: beta1 g2 - 1/4 = {:.6e}, beta2 g1 - 1/4 = {:.6e}; solving anyway",
                report.margins.0, report.margins.1
            ));
        }
        solve_stationary(&part, &cfg.params, &initial_q(cfg)?, &cfg.control.solver)?
    };
    fs::write(out.join("partition.csv"), partition_to_csv(&part))?;
    fs::write(out.join("interfaces.csv"), polylines_to_csv(&interface_polylines(&part)))?;
    let mut rows = Vec::new();
    let quantities: &[JumpQuantity] = if sol.species == 1 {
        &[JumpQuantity::Pressure, JumpQuantity::V1, JumpQuantity::GradV1Normal]
    } else {
        &[JumpQuantity::Pressure, JumpQuantity::V1, JumpQuantity::V2, JumpQuantity::GradV1Normal, JumpQuantity::GradV2Normal]
    };
    let mut entries = vec![
        ("iterations".into(), sol.stats.iterations as f64),
        ("rel_residual".into(), sol.stats.rel_residual),
        ("coercivity_margin1".into(), sol.coercivity.margins.0),
        ("coercivity_margin2".into(), sol.coercivity.margins.1),
    ];
    for &qty in quantities {
        let table = measure_jump(&sol, &part, qty, TraceOptions::geometric());
        if qty == JumpQuantity::Pressure {
            for kind in InterfaceKind::ALL {
                let s = table.summary(kind);
                if s.traced > 0 {
                    entries.push((format!("mean_pressure_jump_{}", kind.name()), s.mean_abs_jump));
                }
            }
        }
        rows.extend(table.rows);
    }
    fs::write(out.join("jumps.csv"), jump_rows_to_csv(&rows))?;
    let report = verify_transmission(&sol, &part, TraceOptions::geometric());
    fs::write(out.join("transmission.csv"), report.to_csv())?;
    let closure = complementarity_closure(&part, &cfg.params, &sol);
    entries.push(("max_closure".into(), closure.max_abs()));
    let div1 = divergence(&sol.v1);
    let div2 = divergence(&sol.v2);
    let curl1 = curl2d(&sol.v1);
    let curl2 = curl2d(&sol.v2);
    write_scalar_csv(&out.join("p.csv"), &sol.p)?;
    write_scalar_csv(&out.join("curl_v2.csv"), &curl2)?;
    let codes = part.chi1.zip_map(&part.chi2, |a, b| a + 2.0 * b);
    write_vtk(
        &out.join("fields.vtk"),
        &[("region", &codes), ("p", &sol.p), ("div_v1", &div1), ("div_v2", &div2), ("curl_v1", &curl1), ("curl_v2", &curl2), ("closure", &closure)],
    )?;
    Ok(RunSummary { entries, warnings, wall_time: 0.0 })
}

/// `key,value` rows: configuration hash, grid, wall time, final
/// diagnostics.
pub fn manifest_csv(cfg: &RunConfig, summary: &RunSummary) -> String {
    let mut o = String::from("key,value\n");
    let _ = writeln!(o, "config_hash,{}", cfg.hash());
    let _ = writeln!(o, "model,{}", cfg.model.name());
    let _ = writeln!(o, "preset,{}", cfg.preset.as_deref().unwrap_or(""));
    let _ = writeln!(o, "grid,{}x{}", cfg.grid.nx, cfg.grid.ny);
    let _ = writeln!(o, "wall_time_s,{:.3}", summary.wall_time);
    for (k, v) in &summary.entries {
        let _ = writeln!(o, "{k},{}", num(*v));
    }
    o
}

fn write_manifest(cfg: &RunConfig, out: &Path, summary: &RunSummary) -> Result<()> {
    fs::write(out.join("manifest.csv"), manifest_csv(cfg, summary))?;
    fs::write(out.join("config.toml"), cfg.to_toml())?;
    Ok(())
}

/// One row of a sweep: the varied values and the run outcome.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub point: Vec<(String, f64)>,
    pub dir: PathBuf,
    pub result: std::result::Result<RunSummary, String>,
}

/// Runs every sweep point in its own directory `out/run_<k>`, at most
/// `jobs` at a time, and writes `out/sweep.csv`.
pub fn execute_sweep(cfg: &RunConfig, out: &Path, jobs: Option<usize>) -> Result<Vec<SweepOutcome>> {
    let Some(sweep) = cfg.sweep.clone() else {
        return Err(Error::Config(vec!["configuration has no [sweep] section".into()]));
    };
    fs::create_dir_all(out)?;
    let mut points = Vec::new();
    for k in 0..sweep.len() {
        let point = sweep.point(k);
        let mut run_cfg = RunConfig { sweep: None, ..cfg.clone() };
        for (key, v) in &point {
            set_param(&mut run_cfg.params, key, *v);
        }
        if let Err(e) = run_cfg.params.validate() {
            return Err(Error::Config(vec![format!("sweep point {k}: {e}")]));
        }
        run_cfg.out_dir = out.join(format!("run_{k}"));
        points.push((point, run_cfg));
    }
    let work = || -> Vec<SweepOutcome> {
        points
            .par_iter()
            .map(|(point, run_cfg)| SweepOutcome {
                point: point.clone(),
                dir: run_cfg.out_dir.clone(),
                result: execute(run_cfg, &run_cfg.out_dir).map_err(|e| e.to_string()),
            })
            .collect()
    };
    let outcomes = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(vec![format!("cannot start {n} jobs: {e}")]))?
            .install(work),
        None => work(),
    };
    fs::write(out.join("sweep.csv"), sweep_csv(&outcomes))?;
    Ok(outcomes)
}

/// Tuple columns first, then the final diagnostics and a status column.
pub fn sweep_csv(outcomes: &[SweepOutcome]) -> String {
    let tuple: Vec<&str> = outcomes.first().map(|o| o.point.iter().map(|p| p.0.as_str()).collect()).unwrap_or_default();
    let keys: Vec<String> = outcomes
        .iter()
        .find_map(|o| o.result.as_ref().ok())
        .map(|s| s.entries.iter().map(|e| e.0.clone()).collect())
        .unwrap_or_default();
    let mut header: Vec<String> = tuple.iter().map(|s| s.to_string()).collect();
    header.extend(keys.iter().cloned());
    header.push("status".into());
    let mut o = header.join(",");
    o.push('\n');
    for oc in outcomes {
        let mut cells: Vec<String> = oc.point.iter().map(|p| format!("{:?}", p.1)).collect();
        match &oc.result {
            Ok(s) => {
                cells.extend(keys.iter().map(|k| s.get(k).map(num).unwrap_or_default()));
                cells.push("ok".into());
            }
            Err(e) => {
                cells.extend(keys.iter().map(|_| String::new()));
                cells.push(e.replace([',', '\n'], ";"));
            }
        }
        o.push_str(&cells.join(","));
        o.push('\n');
    }
    o
}

/// Field CSV text of a scalar, re-exported for callers that stream.
pub fn field_csv(f: &ScalarField) -> String {
    scalar_to_csv(f)
}
