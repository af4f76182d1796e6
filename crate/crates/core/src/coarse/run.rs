//! Coarse time loop driven by fine snapshots: at every coarse step the
//! partition and the coefficients come from the fine concentration, the
//! edge velocities come either from the reference averages or from the
//! homogenized flow model, and the continuum contents are advanced.

use log::{debug, info};

use crate::cells::{galerkin_coefficients, solve_cell_bases, CellOptions, Patch};
use crate::continua::{classify, compute_averages, ContinuumSpec, MacroAverages, Partition};
use crate::error::{Error, Result};
use crate::fine::flow::{BoundaryCondition, FlowBc};
use crate::fine::Mobility;
use crate::grid::{Axis, CoarseGrid, DomainLayout, ExtensionRule, Oversample, SourceCell};
use crate::linalg::SolverKind;
use crate::par::Exec;
use crate::tpfa;

use super::galerkin::{base_edge_velocity, solve_galerkin_flow, SidePressures};
use super::mixed::{assemble_mixed, solve_mixed, BasisKind, BoundaryEdge, MixedInput, MixedOptions, OutsideFace};
use super::transport::{drop_empty, step_concentration};

#[derive(Debug, Clone)]
pub struct GalerkinSettings {
    /// Refinement factor of the flow grid in x.
    pub refine: usize,
    pub layers: usize,
    pub rule: ExtensionRule,
    pub dirs: Vec<Axis>,
    pub solver: SolverKind,
}

#[derive(Debug, Clone)]
pub enum FlowModel {
    Mixed(MixedOptions),
    Galerkin(GalerkinSettings),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocityMode {
    /// Edge velocities are the averages of the reference fine flux.
    Reference,
    /// Edge velocities come from the homogenized flow model.
    Homogenized,
}

/// Everything the coarse model needs besides the fine snapshots.
pub struct CoarseContext<'a> {
    pub layout: &'a DomainLayout,
    pub coarse: &'a CoarseGrid,
    pub spec: &'a ContinuumSpec,
    pub mobility: &'a Mobility,
    /// Fine boundary conditions on the computational grid.
    pub bc: &'a FlowBc,
    /// Inflow concentration per computational face.
    pub inflow_c: &'a [f64],
    pub gravity: bool,
    pub model: FlowModel,
    /// Initial concentration on the computational grid (periodic extension data).
    pub initial_c: &'a [f64],
    pub exec: Exec,
}

/// Fine state on the computational grid at one coarse time level.
#[derive(Debug, Clone, Copy)]
pub struct Frame<'a> {
    pub time: f64,
    pub c: &'a [f64],
    pub p: &'a [f64],
    pub flux: &'a [f64],
}

/// One entry of the effective-operator dump.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorRecord {
    pub time: f64,
    pub block: usize,
    pub i: usize,
    pub j: usize,
    pub name: &'static str,
    pub value: f64,
}

/// Partition, reference averages and boundary inflow of one frame.
#[derive(Debug, Clone)]
pub struct FrameData {
    pub labels: Partition,
    pub averages: MacroAverages,
    /// Concentration carried into the target domain `[edge * n + k]`.
    pub inflow: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CoarseRun {
    pub mode: VelocityMode,
    pub times: Vec<f64>,
    /// Continuum contents per time level `[block * n + k]`.
    pub c: Vec<Vec<f64>>,
    /// Edge velocities per time level `[edge * n + k]`.
    pub v: Vec<Vec<f64>>,
    pub operators: Vec<OperatorRecord>,
    /// Content removed because a continuum vanished from a block.
    pub removed: f64,
    pub max_courant: f64,
    /// Number of fluxes skipped because their donor continuum was empty.
    pub skipped: usize,
}

fn interval_mid(spec: &ContinuumSpec, k: usize) -> f64 {
    let hi = if k == 0 { 1.0 } else { spec.thresholds[k - 1] };
    let lo = spec.thresholds.get(k).copied().unwrap_or(0.0);
    0.5 * (hi + lo)
}

/// Outside concentration and computational cell (if any) across a target boundary face.
fn outside_of(ctx: &CoarseContext, frame: &Frame, f: usize) -> (f64, Option<usize>) {
    let layout = ctx.layout;
    let fc = layout.comp_face(f);
    let (tl, tr) = layout.target.face_cells(f);
    let (cl, cr) = layout.comp.face_cells(fc);
    let out = match (tl, tr) {
        (None, Some(_)) => cl,
        (Some(_), None) => cr,
        _ => None,
    };
    match out {
        Some(k) => (frame.c[k], Some(k)),
        None => (ctx.inflow_c[fc], None),
    }
}

/// Classifies the frame, computes reference averages and boundary inflow.
pub fn prepare_frame(ctx: &CoarseContext, frame: &Frame) -> FrameData {
    let n = ctx.spec.n();
    let labels = classify(frame.c, ctx.spec);
    let averages = compute_averages(ctx.layout, ctx.coarse, ctx.spec, &labels, frame.p, frame.c, frame.flux, ctx.inflow_c);
    let coarse = ctx.coarse;
    let mut inflow = vec![f64::NAN; coarse.n_edges() * n];
    for e in 0..coarse.n_edges() {
        if coarse.is_interior_edge(e) {
            continue;
        }
        let inward = match coarse.edge_blocks(e) {
            (None, _) => 1.0,
            _ => -1.0,
        };
        let mut num = vec![0.0; n];
        let mut den = vec![0.0; n];
        let mut seen = vec![(0.0, 0usize); n];
        for f in coarse.edge_faces(e) {
            let (conc, _) = outside_of(ctx, frame, f);
            let k = ctx.spec.classify_value(conc);
            seen[k].0 += conc;
            seen[k].1 += 1;
            let u = inward * frame.flux[ctx.layout.comp_face(f)];
            if u > 0.0 {
                num[k] += u * conc;
                den[k] += u;
            }
        }
        for k in 0..n {
            inflow[e * n + k] = if den[k] > 0.0 {
                num[k] / den[k]
            } else if seen[k].1 > 0 {
                seen[k].0 / seen[k].1 as f64
            } else {
                interval_mid(ctx.spec, k)
            };
        }
    }
    FrameData { labels, averages, inflow }
}

fn mixed_boundary(ctx: &CoarseContext, frame: &Frame, data: &FrameData, comp_trans: &[f64]) -> Vec<BoundaryEdge> {
    let coarse = ctx.coarse;
    let layout = ctx.layout;
    let n = ctx.spec.n();
    (0..coarse.n_edges())
        .map(|e| {
            if coarse.is_interior_edge(e) {
                return BoundaryEdge::NoFlow;
            }
            let side = coarse.edge_side(e).expect("boundary edge");
            let faces = coarse.edge_faces(e);
            if layout.side_is_physical(side) {
                match ctx.bc.side(side) {
                    BoundaryCondition::NoFlow => BoundaryEdge::NoFlow,
                    BoundaryCondition::Flux(_) => {
                        let mut flux = Vec::with_capacity(faces.len());
                        let mut labels = Vec::with_capacity(faces.len());
                        for &f in &faces {
                            let fc = layout.comp_face(f);
                            let u = frame.flux[fc];
                            flux.push(u);
                            let l = crate::continua::donor_label(&layout.comp, &data.labels, ctx.spec, ctx.inflow_c, fc, u);
                            labels.push(l.min(n - 1) as u8);
                        }
                        BoundaryEdge::Flux { flux, labels }
                    }
                    BoundaryCondition::Pressure(p) => BoundaryEdge::Pressure {
                        faces: faces
                            .iter()
                            .map(|&f| OutsideFace { pressure: p, trans: comp_trans[layout.comp_face(f)], density: 0.0, label: None })
                            .collect(),
                    },
                }
            } else {
                BoundaryEdge::Pressure {
                    faces: faces
                        .iter()
                        .map(|&f| {
                            let (conc, k) = outside_of(ctx, frame, f);
                            let k = k.expect("ghost face has an outside cell");
                            OutsideFace {
                                pressure: frame.p[k],
                                trans: comp_trans[layout.comp_face(f)],
                                density: if ctx.gravity { conc } else { 0.0 },
                                label: Some(data.labels.labels[k]),
                            }
                        })
                        .collect(),
                }
            }
        })
        .collect()
}

/// Edge velocities of the homogenized flow model for the partition of
/// `frame` and continuum contents `c_state`.
pub fn homogenized_velocity(
    ctx: &CoarseContext,
    frame: &Frame,
    data: &FrameData,
    c_state: &[f64],
) -> Result<(Vec<f64>, Vec<OperatorRecord>)> {
    let n = ctx.spec.n();
    let layout = ctx.layout;
    let comp_lambda: Vec<f64> = (0..layout.comp.n_cells()).map(|k| ctx.mobility.at(k, frame.c[k])).collect();
    let mut records = Vec::new();
    match &ctx.model {
        FlowModel::Mixed(opts) => {
            let comp_trans = tpfa::transmissibilities(&layout.comp, &comp_lambda);
            let lambda = layout.restrict(&comp_lambda);
            let labels: Vec<u8> = (0..layout.target.n_cells()).map(|k| data.labels.labels[layout.comp_cell(k)]).collect();
            let boundary = mixed_boundary(ctx, frame, data, &comp_trans);
            let input = MixedInput { coarse: ctx.coarse, n_cont: n, lambda: &lambda, labels: &labels, boundary: &boundary };
            let ops = assemble_mixed(&input, opts, ctx.exec)?;
            if ops.source_fallbacks > 0 {
                debug!("{} edge bases used a uniform source", ops.source_fallbacks);
            }
            let sol = solve_mixed(&ops, c_state, ctx.coarse)?;
            for (s, ms) in ops.bases.iter().enumerate() {
                let BasisKind::Edge { edge: es, continuum: i } = ms.kind else { continue };
                let block = ctx.coarse.edge_blocks(es).0.or(ctx.coarse.edge_blocks(es).1).unwrap_or(0);
                for (t, mt) in ops.bases.iter().enumerate() {
                    if let BasisKind::Edge { edge: et, continuum: j } = mt.kind {
                        if et == es {
                            records.push(OperatorRecord { time: frame.time, block, i, j, name: "alpha_v_edge", value: ops.m[(s, t)] });
                        }
                    }
                }
                if ctx.gravity {
                    for j in 0..n {
                        let value = ops.gamma[(s, block * n + j)];
                        records.push(OperatorRecord { time: frame.time, block, i, j, name: "gamma_v_edge", value });
                    }
                }
            }
            Ok((sol.v, records))
        }
        FlowModel::Galerkin(gs) => {
            if ctx.gravity {
                return Err(Error::Config("the Galerkin flow model does not support gravity".into()));
            }
            let target = &layout.target;
            let refined = CoarseGrid::new(target.clone(), ctx.coarse.nx * gs.refine, ctx.coarse.ny)?;
            let sides = SidePressures {
                left: side_pressure(ctx, crate::grid::Side::Left)?,
                right: side_pressure(ctx, crate::grid::Side::Right)?,
            };
            let conc = |s: SourceCell| -> (usize, f64) {
                match s {
                    SourceCell::Inside(k) | SourceCell::Mirror(k) => {
                        let kc = layout.comp_cell(k);
                        (kc, frame.c[kc])
                    }
                    SourceCell::Periodic(k) => {
                        let kc = layout.comp_cell(k);
                        (kc, ctx.initial_c[kc])
                    }
                }
            };
            let opts = CellOptions { dirs: gs.dirs.clone(), gravity: false, solver: gs.solver };
            let coefs = ctx.exec.try_map(refined.n_blocks(), |b| {
                let os = Oversample::new(&refined, b, gs.layers, gs.rule);
                let patch = Patch::from_oversample(
                    &os,
                    |s| {
                        let (k, c) = conc(s);
                        ctx.mobility.at(k, c)
                    },
                    |s| ctx.spec.classify_value(conc(s).1) as u8,
                    n,
                );
                let set = solve_cell_bases(&patch, &opts)?;
                Ok::<_, Error>(galerkin_coefficients(&set))
            })?;
            for (b, co) in coefs.iter().enumerate() {
                for i in 0..n {
                    for j in 0..n {
                        for (d, axis) in co.dirs.iter().enumerate() {
                            let name = match axis {
                                Axis::X => "alpha_xx",
                                Axis::Y => "alpha_yy",
                            };
                            records.push(OperatorRecord { time: frame.time, block: b, i, j, name, value: co.alpha[d][d][(i, j)] });
                        }
                        records.push(OperatorRecord { time: frame.time, block: b, i, j, name: "beta", value: co.beta[(i, j)] });
                    }
                }
            }
            let flow = solve_galerkin_flow(&refined, n, &coefs, sides)?;
            Ok((base_edge_velocity(ctx.coarse, &refined, n, &flow)?, records))
        }
    }
}

fn side_pressure(ctx: &CoarseContext, side: crate::grid::Side) -> Result<Option<f64>> {
    if !ctx.layout.side_is_physical(side) {
        return Err(Error::Config("the Galerkin flow model needs the fine problem on the target domain".into()));
    }
    match ctx.bc.side(side) {
        BoundaryCondition::Pressure(p) => Ok(Some(p)),
        BoundaryCondition::NoFlow => Ok(None),
        BoundaryCondition::Flux(_) => Err(Error::Config("the Galerkin flow model supports pressure or no-flow sides only".into())),
    }
}

/// Reference averages of every frame.
pub fn reference_series(ctx: &CoarseContext, frames: &[Frame]) -> Vec<FrameData> {
    ctx.exec.map(frames.len(), |m| prepare_frame(ctx, &frames[m]))
}

/// Runs the coarse model over `frames` (one per coarse time level, the first
/// being the initial state) with step `tau`.
pub fn run_coarse(ctx: &CoarseContext, frames: &[Frame], data: &[FrameData], tau: f64, mode: VelocityMode) -> Result<CoarseRun> {
    if frames.is_empty() || frames.len() != data.len() {
        return Err(Error::Input("one frame and frame data per coarse time level is required".into()));
    }
    let n = ctx.spec.n();
    let mut c = data[0].averages.c.clone();
    let mut run = CoarseRun {
        mode,
        times: Vec::with_capacity(frames.len()),
        c: Vec::with_capacity(frames.len()),
        v: Vec::with_capacity(frames.len()),
        operators: Vec::new(),
        removed: 0.0,
        max_courant: 0.0,
        skipped: 0,
    };
    for (m, (frame, fd)) in frames.iter().zip(data).enumerate() {
        let v = match mode {
            VelocityMode::Reference => fd.averages.v.clone(),
            VelocityMode::Homogenized => {
                let (v, ops) = homogenized_velocity(ctx, frame, fd, &c)?;
                run.operators.extend(ops);
                v
            }
        };
        run.times.push(frame.time);
        run.c.push(c.clone());
        if m + 1 < frames.len() {
            let (mut next, rep) = step_concentration(ctx.coarse, n, &c, &v, &fd.averages.volume, &fd.inflow, tau)?;
            run.max_courant = run.max_courant.max(rep.courant);
            run.skipped += rep.skipped.len();
            let removed = drop_empty(&mut next, &data[m + 1].averages.volume);
            if removed != 0.0 {
                info!("step {m}: removed {removed:e} from vanished continua");
            }
            run.removed += removed;
            c = next;
        }
        run.v.push(v);
    }
    Ok(run)
}
