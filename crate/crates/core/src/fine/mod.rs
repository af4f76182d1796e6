//! Fine-scale reference solver: flow, transport and time stepping.

pub mod flow;
pub mod particles;
pub mod transport;

use crate::error::{Error, Result};
use crate::grid::FineGrid;
use crate::linalg::SolverKind;
use crate::par::Exec;
use flow::{FlowBc, FlowProblem, FlowSolution};
use particles::Particle;

/// Mobility as a function of position and concentration.
#[derive(Debug, Clone, PartialEq)]
pub enum Mobility {
    /// Fixed per-cell field.
    Field(Vec<f64>),
    /// Piecewise constant in the concentration: `values[k]` on interval `k`
    /// of the continuum thresholds (highest concentrations first).
    Contrast { thresholds: Vec<f64>, values: Vec<f64> },
}

impl Mobility {
    pub fn evaluate(&self, c: &[f64]) -> Vec<f64> {
        match self {
            Mobility::Field(v) => v.clone(),
            Mobility::Contrast { thresholds, values } => c
                .iter()
                .map(|&c| values[thresholds.iter().position(|&t| c >= t).unwrap_or(thresholds.len())])
                .collect(),
        }
    }

    /// Mobility of cell `k` at concentration `c`.
    pub fn at(&self, k: usize, c: f64) -> f64 {
        match self {
            Mobility::Field(v) => v[k],
            Mobility::Contrast { thresholds, values } => {
                values[thresholds.iter().position(|&t| c >= t).unwrap_or(thresholds.len())]
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransportKind {
    Upwind,
    Particles { per_cell: usize, seed: u64 },
}

#[derive(Debug, Clone)]
pub struct FineSetup {
    pub grid: FineGrid,
    pub mobility: Mobility,
    pub bc: FlowBc,
    pub gravity: bool,
    /// Concentration entering through each boundary face (indexed by face).
    pub inflow_c: Vec<f64>,
    pub tau: f64,
    pub steps: usize,
    pub transport: TransportKind,
    pub solver: SolverKind,
    /// Keep every `stride`-th state (the last one is always kept).
    pub stride: usize,
}

/// State at one time level; pressure and flux belong to the concentration.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub c: Vec<f64>,
    pub p: Vec<f64>,
    pub flux: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FineRun {
    pub snapshots: Vec<Snapshot>,
    pub max_cfl: f64,
    pub max_conservation_residual: f64,
    /// Total mass `sum c |K|` at every step.
    pub mass: Vec<f64>,
}

/// Solves the pressure problem for the current concentration.
pub fn flow_at(setup: &FineSetup, c: &[f64], warm: Option<&[f64]>) -> Result<FlowSolution> {
    let lambda = setup.mobility.evaluate(c);
    let pb = FlowProblem {
        grid: &setup.grid,
        lambda: &lambda,
        density: setup.gravity.then_some(c),
        source: None,
        bc: setup.bc,
    };
    flow::solve_flow(&pb, setup.solver, warm)
}

/// Runs the coupled flow/transport loop from `c0` starting at `t0`.
pub fn run_fine(setup: &FineSetup, c0: &[f64], t0: f64, exec: Exec) -> Result<FineRun> {
    let g = &setup.grid;
    if c0.len() != g.n_cells() {
        return Err(Error::Input(format!("initial field has {} values for {} cells", c0.len(), g.n_cells())));
    }
    if setup.tau <= 0.0 {
        return Err(Error::Config(format!("time step must be positive, got {}", setup.tau)));
    }
    let stride = setup.stride.max(1);
    let mut particles: Option<Vec<Particle>> = match setup.transport {
        TransportKind::Upwind => None,
        TransportKind::Particles { per_cell, seed } => {
            if !setup.bc.is_closed() {
                return Err(Error::Config("particle transport needs no-flow walls on every side".into()));
            }
            Some(particles::seed_particles(g, c0, per_cell, seed))
        }
    };
    let area = g.cell_area();
    let mut c = c0.to_vec();
    let mut snapshots = Vec::new();
    let mut mass = Vec::with_capacity(setup.steps + 1);
    let mut max_cfl: f64 = 0.0;
    let mut max_res: f64 = 0.0;
    let mut warm: Option<Vec<f64>> = None;
    for n in 0..=setup.steps {
        let sol = flow_at(setup, &c, warm.as_deref())?;
        max_res = max_res.max(sol.conservation_residual);
        mass.push(c.iter().sum::<f64>() * area);
        let time = t0 + n as f64 * setup.tau;
        if n < setup.steps {
            let cfl = transport::cfl(g, &sol.flux, setup.tau);
            max_cfl = max_cfl.max(cfl);
            if cfl > 1.0 {
                return Err(Error::Cfl { courant: cfl, required_tau: setup.tau / cfl });
            }
            if cfl > 0.9 {
                log::warn!("CFL number {cfl:.3} is close to the stability limit");
            }
        }
        let next = if n < setup.steps {
            Some(match particles.as_mut() {
                None => transport::upwind_substeps(g, &c, &sol.flux, setup.tau, Some(&setup.inflow_c))?,
                Some(ps) => {
                    particles::advect(g, &sol.flux, ps, setup.tau, exec)?;
                    particles::deposit(g, ps)
                }
            })
        } else {
            None
        };
        warm = Some(sol.pressure.clone());
        if n % stride == 0 || n == setup.steps {
            snapshots.push(Snapshot { step: n, time, c: c.clone(), p: sol.pressure, flux: sol.flux });
        }
        if let Some(next) = next {
            c = next;
        }
    }
    Ok(FineRun { snapshots, max_cfl, max_conservation_residual: max_res, mass })
}
