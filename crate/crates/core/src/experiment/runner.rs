//! Full experiment pipeline: fine reference run, reference averages, coarse
//! runs with reference and homogenized velocities, error report, artifacts.

use std::fs;
use std::path::Path;
use std::time::Instant;

use log::info;

use crate::cells::block::SourceKind;
use crate::coarse::mixed::{MixedOptions, PressureSpace};
use crate::coarse::run::{
    reference_series, run_coarse, CoarseContext, CoarseRun, FlowModel, Frame, FrameData, GalerkinSettings, VelocityMode,
};
use crate::continua::ContinuumSpec;
use crate::error::{Error, Result};
use crate::fine::flow::{BoundaryCondition, FlowBc};
use crate::fine::{run_fine, FineSetup, Mobility, Snapshot, TransportKind};
use crate::grid::{Axis, CoarseGrid, DomainLayout, Extension, ExtensionRule};
use crate::linalg::SolverKind;
use crate::par::Exec;

use super::config::ExperimentConfig;
use super::init::{build_mobility, initial_concentration};
use super::io;
use super::metrics::{compute_errors, ErrorReport, Series};

/// A configuration resolved into grids, fields and solver settings.
pub struct Prepared {
    pub config: ExperimentConfig,
    pub layout: DomainLayout,
    pub coarse: CoarseGrid,
    pub spec: ContinuumSpec,
    pub mobility: Mobility,
    pub fine: FineSetup,
    pub c0: Vec<f64>,
    pub model: FlowModel,
    /// Fine steps per coarse step.
    pub ratio: usize,
    pub exec: Exec,
}

fn parse_bc(s: &str) -> Result<BoundaryCondition> {
    s.parse()
}

fn solver_kind(cfg: &ExperimentConfig) -> Result<SolverKind> {
    match cfg.solver.linear.as_str() {
        "direct" => Ok(SolverKind::Direct),
        "pcg" => Ok(SolverKind::Pcg { tol: cfg.solver.tol }),
        other => Err(Error::Config(format!("unknown linear solver '{other}'"))),
    }
}

pub fn prepare(cfg: &ExperimentConfig, exec: Exec) -> Result<Prepared> {
    let g = &cfg.geometry;
    let extension = match g.extension.as_str() {
        "none" => Extension::None,
        "two-sided" => Extension::TwoSided(g.margin),
        "right" => Extension::Right(g.margin),
        other => return Err(Error::Config(format!("unknown extension '{other}'"))),
    };
    let layout = DomainLayout::new(g.l1, g.l2, g.nx, g.ny, extension)?;
    let coarse = CoarseGrid::new(layout.target.clone(), g.coarse_nx, g.coarse_ny)?;
    let spec = ContinuumSpec::new(cfg.continua.thresholds.clone())?;
    let mobility = build_mobility(&cfg.mobility, &layout, &spec)?;
    let c0 = initial_concentration(&cfg.initial, &layout, &spec)?;
    let solver = solver_kind(cfg)?;
    let mut bc = FlowBc {
        left: parse_bc(&cfg.flow.left)?,
        right: parse_bc(&cfg.flow.right)?,
        bottom: parse_bc(&cfg.flow.bottom)?,
        top: parse_bc(&cfg.flow.top)?,
        gauge: None,
    };
    if !bc.has_dirichlet() {
        bc.gauge = Some(0);
    }
    let comp = &layout.comp;
    // Inflow carries the initial concentration of the adjacent cell.
    let mut inflow_c = vec![0.0; comp.n_faces()];
    for (f, slot) in inflow_c.iter_mut().enumerate() {
        if let (Some(k), None) | (None, Some(k)) = comp.face_cells(f) {
            *slot = c0[k];
        }
    }
    let transport = match cfg.fine.transport.as_str() {
        "upwind" => TransportKind::Upwind,
        "particles" => TransportKind::Particles { per_cell: cfg.fine.per_cell, seed: cfg.fine.seed },
        other => return Err(Error::Config(format!("unknown transport scheme '{other}'"))),
    };
    if cfg.fine.tau <= 0.0 || cfg.coarse.tau <= 0.0 {
        return Err(Error::Config("time steps must be positive".into()));
    }
    let r = cfg.coarse.tau / cfg.fine.tau;
    let ratio = r.round() as usize;
    if ratio == 0 || (r - ratio as f64).abs() > 1e-9 * r {
        return Err(Error::Config(format!(
            "coarse step {} is not a whole multiple of the fine step {}",
            cfg.coarse.tau, cfg.fine.tau
        )));
    }
    if cfg.coarse.steps * ratio > cfg.fine.steps {
        return Err(Error::Config(format!(
            "coarse horizon ({} steps of {}) exceeds the fine horizon ({} steps)",
            cfg.coarse.steps, cfg.coarse.tau, cfg.fine.steps
        )));
    }
    let model = match cfg.coarse.model.as_str() {
        "mixed" => FlowModel::Mixed(MixedOptions {
            pressure: cfg.coarse.pressure.parse::<PressureSpace>()?,
            source: cfg.coarse.source.parse::<SourceKind>()?,
            interface: cfg.coarse.interface,
            gravity: cfg.flow.gravity,
            solver,
        }),
        "galerkin" => {
            if cfg.flow.gravity {
                return Err(Error::Config("the Galerkin flow model does not support gravity".into()));
            }
            let dirs = cfg
                .coarse
                .dirs
                .iter()
                .map(|d| match d.as_str() {
                    "x" => Ok(Axis::X),
                    "y" => Ok(Axis::Y),
                    other => Err(Error::Config(format!("unknown gradient direction '{other}'"))),
                })
                .collect::<Result<Vec<_>>>()?;
            FlowModel::Galerkin(GalerkinSettings {
                refine: cfg.coarse.refine.max(1),
                layers: cfg.coarse.layers,
                rule: ExtensionRule { left: cfg.coarse.left_rule.parse()?, right: cfg.coarse.right_rule.parse()? },
                dirs,
                solver,
            })
        }
        other => return Err(Error::Config(format!("unknown coarse model '{other}'"))),
    };
    let fine = FineSetup {
        grid: comp.clone(),
        mobility: mobility.clone(),
        bc,
        gravity: cfg.flow.gravity,
        inflow_c,
        tau: cfg.fine.tau,
        steps: cfg.fine.steps,
        transport,
        solver,
        stride: ratio,
    };
    Ok(Prepared { config: cfg.clone(), layout, coarse, spec, mobility, fine, c0, model, ratio, exec })
}

/// Fine reference run (after the optional pre-simulation).
pub struct FineStage {
    /// Concentration at the start of the main run.
    pub start: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub max_cfl: f64,
    pub max_conservation_residual: f64,
    pub mass: Vec<f64>,
}

pub fn run_fine_stage(p: &Prepared) -> Result<FineStage> {
    let mut start = p.c0.clone();
    let mut max_cfl: f64 = 0.0;
    let mut max_res: f64 = 0.0;
    if p.config.fine.pre_steps > 0 {
        let mut pre = p.fine.clone();
        pre.steps = p.config.fine.pre_steps;
        pre.stride = pre.steps;
        let run = run_fine(&pre, &p.c0, 0.0, p.exec)?;
        max_cfl = run.max_cfl;
        max_res = run.max_conservation_residual;
        start = run.snapshots.last().expect("final state is kept").c.clone();
        info!("pre-simulation finished after {} steps", pre.steps);
    }
    let t0 = p.config.fine.pre_steps as f64 * p.config.fine.tau;
    let run = run_fine(&p.fine, &start, t0, p.exec)?;
    Ok(FineStage {
        start,
        snapshots: run.snapshots,
        max_cfl: max_cfl.max(run.max_cfl),
        max_conservation_residual: max_res.max(run.max_conservation_residual),
        mass: run.mass,
    })
}

/// Coarse runs in both velocity modes and their errors.
pub struct CoarseStage {
    pub times: Vec<f64>,
    pub reference: Vec<FrameData>,
    pub reference_c: Vec<Vec<f64>>,
    pub reference_v: Vec<Vec<f64>>,
    pub with_ref: CoarseRun,
    pub with_mh: CoarseRun,
    pub report: ErrorReport,
}

/// Picks the snapshot of every coarse time level.
pub fn select_frames<'a>(p: &Prepared, snapshots: &'a [Snapshot]) -> Result<Vec<&'a Snapshot>> {
    let first = snapshots.first().map(|s| s.step).unwrap_or(0);
    let tau = p.config.fine.tau;
    let mut out = Vec::with_capacity(p.config.coarse.steps + 1);
    let mut missing = Vec::new();
    for m in 0..=p.config.coarse.steps {
        let step = first + m * p.ratio;
        match snapshots.iter().find(|s| s.step == step) {
            Some(s) => out.push(s),
            None => missing.push(step as f64 * tau),
        }
    }
    if missing.is_empty() {
        Ok(out)
    } else {
        Err(Error::Misaligned { missing })
    }
}

pub fn context<'a>(p: &'a Prepared, initial: &'a [f64]) -> CoarseContext<'a> {
    CoarseContext {
        layout: &p.layout,
        coarse: &p.coarse,
        spec: &p.spec,
        mobility: &p.mobility,
        bc: &p.fine.bc,
        inflow_c: &p.fine.inflow_c,
        gravity: p.config.flow.gravity,
        model: p.model.clone(),
        initial_c: initial,
        exec: p.exec,
    }
}

pub fn run_coarse_stage(p: &Prepared, snapshots: &[Snapshot]) -> Result<CoarseStage> {
    let selected = select_frames(p, snapshots)?;
    let frames: Vec<Frame> =
        selected.iter().map(|s| Frame { time: s.time, c: &s.c, p: &s.p, flux: &s.flux }).collect();
    let ctx = context(p, &p.c0);
    let data = reference_series(&ctx, &frames);
    let tau = p.config.coarse.tau;
    let with_ref = run_coarse(&ctx, &frames, &data, tau, VelocityMode::Reference)?;
    let with_mh = run_coarse(&ctx, &frames, &data, tau, VelocityMode::Homogenized)?;
    let times: Vec<f64> = frames.iter().map(|f| f.time).collect();
    let reference_c: Vec<Vec<f64>> = data.iter().map(|d| d.averages.c.clone()).collect();
    let reference_v: Vec<Vec<f64>> = data.iter().map(|d| d.averages.v.clone()).collect();
    let n = p.spec.n();
    let edges = p.coarse.interior_edges();
    let blocks: Vec<usize> = (0..p.coarse.n_blocks()).collect();
    let report = compute_errors(
        n,
        Series { times: &times, c: &reference_c, v: &reference_v },
        Series { times: &with_ref.times, c: &with_ref.c, v: &with_ref.v },
        Series { times: &with_mh.times, c: &with_mh.c, v: &with_mh.v },
        &edges,
        &blocks,
    )?;
    Ok(CoarseStage { times, reference: data, reference_c, reference_v, with_ref, with_mh, report })
}

/// Largest relative change of the total coarse content over any step of a
/// closed system (zero when there is boundary flow).
pub fn coarse_mass_drift(run: &CoarseRun) -> f64 {
    let total = |c: &Vec<f64>| c.iter().sum::<f64>();
    let m0 = total(&run.c[0]).abs().max(1e-300);
    run.c.windows(2).map(|w| ((total(&w[1]) - total(&w[0])) / m0).abs()).fold(0.0, f64::max)
}

pub struct ExperimentResult {
    pub prepared: Prepared,
    pub fine: FineStage,
    pub coarse: CoarseStage,
}

pub fn run_experiment(cfg: &ExperimentConfig, exec: Exec) -> Result<ExperimentResult> {
    let prepared = prepare(cfg, exec)?;
    let fine = run_fine_stage(&prepared)?;
    let coarse = run_coarse_stage(&prepared, &fine.snapshots)?;
    Ok(ExperimentResult { prepared, fine, coarse })
}

/// Final-time error table: `metric,continuum,value`.
pub fn errors_csv(report: &ErrorReport) -> String {
    use std::fmt::Write as _;
    let mut s = String::from("metric,continuum,value\n");
    let row = report.final_row();
    for k in 0..report.n {
        let vname = if row.e_v_is_absolute[k] { "e_V_abs" } else { "e_V" };
        writeln!(s, "{vname},{},{}", k + 1, row.e_v[k]).unwrap();
    }
    writeln!(s, "e_V_global,all,{}", row.e_v_global).unwrap();
    for (name, vals) in [
        ("e_C_ref_velocity", &row.e_c_ref_velocity),
        ("e_C_mh_velocity", &row.e_c_mh_velocity),
        ("e_C_between", &row.e_c_between),
    ] {
        for (k, v) in vals.iter().enumerate() {
            writeln!(s, "{name},{},{v}", k + 1).unwrap();
        }
    }
    s
}

fn series_csv(report: &ErrorReport) -> String {
    use std::fmt::Write as _;
    let mut s = String::from("time,metric,continuum,value\n");
    for row in &report.series {
        let t = row.time;
        for k in 0..report.n {
            writeln!(s, "{t},e_V,{},{}", k + 1, row.e_v[k]).unwrap();
            writeln!(s, "{t},e_C_ref_velocity,{},{}", k + 1, row.e_c_ref_velocity[k]).unwrap();
            writeln!(s, "{t},e_C_mh_velocity,{},{}", k + 1, row.e_c_mh_velocity[k]).unwrap();
            writeln!(s, "{t},e_C_between,{},{}", k + 1, row.e_c_between[k]).unwrap();
        }
        writeln!(s, "{t},e_V_global,all,{}", row.e_v_global).unwrap();
    }
    s
}

/// Manifest: identical for identical configurations and seeds.
pub fn manifest(cfg: &ExperimentConfig, status: &str) -> String {
    let text = cfg.to_toml();
    format!(
        "name = {}\nversion = {}\nconfig_sha256 = {}\nseed_initial = {}\nseed_mobility = {}\nseed_particles = {}\n\
         linear_solver = {}\nlinear_tol = {:e}\nconstraint_tol = {:e}\nconservation_tol = {:e}\nstatus = {}\n",
        cfg.name,
        env!("CARGO_PKG_VERSION"),
        io::sha256_hex(&text),
        cfg.initial.seed,
        cfg.mobility.seed,
        cfg.fine.seed,
        cfg.solver.linear,
        cfg.solver.tol,
        cfg.solver.constraint_tol,
        cfg.solver.conservation_tol,
        status,
    )
}

/// Writes the fine snapshots (all or first and last) of a run.
pub fn write_fine(dir: &Path, p: &Prepared, snapshots: &[Snapshot], all: bool) -> Result<()> {
    let fdir = dir.join("fine");
    fs::create_dir_all(&fdir)?;
    let g = &p.layout.comp;
    let mut index = String::from("step,time\n");
    for (m, s) in snapshots.iter().enumerate() {
        if !all && m != 0 && m + 1 != snapshots.len() {
            continue;
        }
        index.push_str(&format!("{},{}\n", s.step, s.time));
        io::write_cell_csv(&fdir.join(format!("c_{:06}.csv", s.step)), g, &s.c)?;
        io::write_cell_csv(&fdir.join(format!("p_{:06}.csv", s.step)), g, &s.p)?;
        io::write_face_csv(&fdir.join(format!("flux_{:06}.csv", s.step)), g, &s.flux)?;
        if p.config.output.pgm {
            io::write_pgm(&fdir.join(format!("c_{:06}.pgm", s.step)), g, &s.c)?;
        }
    }
    fs::write(fdir.join("index.csv"), index)?;
    Ok(())
}

/// Reads snapshots written by [`write_fine`].
pub fn read_fine(dir: &Path, p: &Prepared) -> Result<Vec<Snapshot>> {
    let fdir = dir.join("fine");
    let g = &p.layout.comp;
    let text = fs::read_to_string(fdir.join("index.csv"))?;
    let mut out = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let (step, time) = line
            .split_once(',')
            .ok_or_else(|| Error::Input(format!("bad snapshot index line '{line}'")))?;
        let step: usize = step.trim().parse().map_err(|_| Error::Input(format!("bad step '{step}'")))?;
        let time: f64 = time.trim().parse().map_err(|_| Error::Input(format!("bad time '{time}'")))?;
        out.push(Snapshot {
            step,
            time,
            c: io::read_cell_csv(&fdir.join(format!("c_{step:06}.csv")), g)?,
            p: io::read_cell_csv(&fdir.join(format!("p_{step:06}.csv")), g)?,
            flux: io::read_face_csv(&fdir.join(format!("flux_{step:06}.csv")), g)?,
        });
    }
    Ok(out)
}

/// Writes reference averages, coarse series, operators and errors.
pub fn write_coarse(dir: &Path, p: &Prepared, stage: &CoarseStage) -> Result<()> {
    fs::create_dir_all(dir)?;
    let n = p.spec.n();
    let mut avg = String::from(io::AVERAGES_HEADER);
    for (t, d) in stage.times.iter().zip(&stage.reference) {
        io::push_averages(&mut avg, *t, &d.averages);
    }
    fs::write(dir.join("reference_averages.csv"), avg)?;
    for (name, run) in [("coarse_ref_velocity.csv", &stage.with_ref), ("coarse_mh_velocity.csv", &stage.with_mh)] {
        let mut s = String::from(io::AVERAGES_HEADER);
        for (m, t) in run.times.iter().enumerate() {
            io::push_indexed(&mut s, *t, n, "C", &run.c[m]);
            io::push_indexed(&mut s, *t, n, "V", &run.v[m]);
        }
        fs::write(dir.join(name), s)?;
    }
    fs::write(dir.join("operators.csv"), io::operators_csv(&stage.with_mh.operators))?;
    fs::write(dir.join("errors.csv"), errors_csv(&stage.report))?;
    fs::write(dir.join("errors_series.csv"), series_csv(&stage.report))?;
    Ok(())
}

/// Runs the whole pipeline and writes every artifact to `dir`. On failure a
/// `FAILED` marker with the message is left next to the partial artifacts.
pub fn run_to_dir(cfg: &ExperimentConfig, dir: &Path, exec: Exec) -> Result<ExperimentResult> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    let _ = fs::remove_file(dir.join("FAILED"));
    let started = Instant::now();
    let outcome = (|| {
        let prepared = prepare(cfg, exec)?;
        let fine = run_fine_stage(&prepared)?;
        write_fine(dir, &prepared, &fine.snapshots, prepared.config.output.snapshots == "all")?;
        let coarse = run_coarse_stage(&prepared, &fine.snapshots)?;
        write_coarse(dir, &prepared, &coarse)?;
        Ok(ExperimentResult { prepared, fine, coarse })
    })();
    let status = match &outcome {
        Ok(_) => "complete".to_string(),
        Err(e) => {
            fs::write(dir.join("FAILED"), format!("{e}\n"))?;
            "failed".to_string()
        }
    };
    fs::write(dir.join("manifest.txt"), manifest(cfg, &status))?;
    fs::write(dir.join("timing.txt"), format!("wall_seconds = {:.3}\n", started.elapsed().as_secs_f64()))?;
    outcome
}

/// Solves the Galerkin cell problems of every target block for the initial
/// concentration. Returns the coefficient table (`block,name,continuum_i,
/// continuum_j,value`) and the largest constraint residual.
pub fn cells_table(p: &Prepared) -> Result<(String, f64)> {
    use crate::cells::{galerkin_coefficients, solve_cell_bases, CellOptions, Patch};
    use crate::continua::classify;
    use std::fmt::Write as _;

    let c = p.layout.restrict(&p.c0);
    let labels = classify(&c, &p.spec).labels;
    let lambda: Vec<f64> = c.iter().enumerate().map(|(k, &v)| p.mobility.at(p.layout.comp_cell(k), v)).collect();
    let n = p.spec.n();
    let opts = CellOptions {
        dirs: vec![Axis::X, Axis::Y],
        gravity: p.config.flow.gravity,
        solver: p.fine.solver,
    };
    let sets = p.exec.try_map(p.coarse.n_blocks(), |b| {
        let patch = Patch::from_block(&p.coarse, b, &lambda, &labels, n);
        solve_cell_bases(&patch, &opts).map(|set| {
            let coef = galerkin_coefficients(&set);
            (coef, set.max_constraint_residual)
        })
    })?;
    let mut s = String::from("block,name,continuum_i,continuum_j,value\n");
    let mut worst: f64 = 0.0;
    for (b, (coef, res)) in sets.iter().enumerate() {
        worst = worst.max(*res);
        let mut emit = |name: &str, m: &nalgebra::DMatrix<f64>| {
            for i in 0..n {
                for j in 0..n {
                    writeln!(s, "{b},{name},{},{},{}", i + 1, j + 1, m[(i, j)]).unwrap();
                }
            }
        };
        emit("alpha_xx", &coef.alpha[0][0]);
        emit("alpha_yy", &coef.alpha[1][1]);
        emit("alpha_xy", &coef.alpha[0][1]);
        emit("beta", &coef.beta);
        if let Some(g) = &coef.gamma {
            emit("gamma", g);
        }
    }
    Ok((s, worst))
}
