//! Fine-scale Darcy flow: `v = -lambda (grad p - c e1)`, `div v = f`.

use crate::error::{Error, Result};
use crate::grid::{Axis, FineGrid, Side};
use crate::linalg::SolverKind;
use crate::tpfa;

/// Boundary condition on one side of the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryCondition {
    NoFlow,
    /// Prescribed outward normal flux density `v . n` (negative means inflow).
    Flux(f64),
    Pressure(f64),
}

impl BoundaryCondition {
    pub fn is_dirichlet(&self) -> bool {
        matches!(self, BoundaryCondition::Pressure(_))
    }
}

impl std::str::FromStr for BoundaryCondition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse boundary condition '{s}'"));
        let s = s.trim();
        if s == "no-flow" {
            return Ok(BoundaryCondition::NoFlow);
        }
        let (kind, val) = s.split_once(':').ok_or_else(bad)?;
        let v: f64 = val.trim().parse().map_err(|_| bad())?;
        match kind.trim() {
            "flux" => Ok(BoundaryCondition::Flux(v)),
            "pressure" => Ok(BoundaryCondition::Pressure(v)),
            _ => Err(bad()),
        }
    }
}

impl std::fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundaryCondition::NoFlow => write!(f, "no-flow"),
            BoundaryCondition::Flux(v) => write!(f, "flux:{v}"),
            BoundaryCondition::Pressure(v) => write!(f, "pressure:{v}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowBc {
    pub left: BoundaryCondition,
    pub right: BoundaryCondition,
    pub bottom: BoundaryCondition,
    pub top: BoundaryCondition,
    /// Cell pinned to zero pressure when no side carries a pressure condition.
    pub gauge: Option<usize>,
}

impl FlowBc {
    pub fn closed(gauge: usize) -> Self {
        let n = BoundaryCondition::NoFlow;
        Self { left: n, right: n, bottom: n, top: n, gauge: Some(gauge) }
    }
    pub fn side(&self, s: Side) -> BoundaryCondition {
        match s {
            Side::Left => self.left,
            Side::Right => self.right,
            Side::Bottom => self.bottom,
            Side::Top => self.top,
        }
    }
    pub fn has_dirichlet(&self) -> bool {
        Side::ALL.iter().any(|&s| self.side(s).is_dirichlet())
    }
    pub fn is_closed(&self) -> bool {
        Side::ALL.iter().all(|&s| self.side(s) == BoundaryCondition::NoFlow)
    }
}

/// Outward sign of a boundary face relative to its +axis orientation.
pub fn outward_sign(side: Side) -> f64 {
    match side {
        Side::Left | Side::Bottom => -1.0,
        Side::Right | Side::Top => 1.0,
    }
}

pub struct FlowProblem<'a> {
    pub grid: &'a FineGrid,
    pub lambda: &'a [f64],
    /// Concentration driving the body force; `None` disables gravity.
    pub density: Option<&'a [f64]>,
    /// Source density per unit area.
    pub source: Option<&'a [f64]>,
    pub bc: FlowBc,
}

#[derive(Debug, Clone)]
pub struct FlowSolution {
    pub pressure: Vec<f64>,
    /// Integrated face fluxes oriented along +x / +y.
    pub flux: Vec<f64>,
    /// Largest cell imbalance `|div u - f|K||`.
    pub conservation_residual: f64,
}

/// Assembles and solves the two-point flux system.
pub fn solve_flow(pb: &FlowProblem, solver: SolverKind, warm: Option<&[f64]>) -> Result<FlowSolution> {
    let g = pb.grid;
    let n = g.n_cells();
    if pb.lambda.len() != n {
        return Err(Error::Input(format!("mobility has {} values for {n} cells", pb.lambda.len())));
    }
    if let Some((k, l)) = pb.lambda.iter().enumerate().find(|(_, l)| !(**l > 0.0) || !l.is_finite()) {
        return Err(Error::Input(format!("mobility must be positive, cell {k} has {l}")));
    }
    let trans = tpfa::transmissibilities(g, pb.lambda);
    let grav: Vec<f64> = match pb.density {
        Some(c) => tpfa::gravity_term(g, c),
        None => vec![0.0; g.n_faces()],
    };
    let mut a = tpfa::neumann_stiffness(g, &trans);
    let mut rhs = vec![0.0; n];
    if let Some(src) = pb.source {
        let area = g.cell_area();
        for k in 0..n {
            rhs[k] += src[k] * area;
        }
    }
    // Interior body-force terms.
    for f in 0..g.n_faces() {
        if grav[f] != 0.0 {
            if let (Some(l), Some(r)) = g.face_cells(f) {
                rhs[l] -= trans[f] * grav[f];
                rhs[r] += trans[f] * grav[f];
            }
        }
    }
    // Boundary terms.
    let mut boundary_flux = vec![None; g.n_faces()];
    for side in Side::ALL {
        let bc = pb.bc.side(side);
        for f in g.side_faces(side) {
            let (l, r) = g.face_cells(f);
            let inside = l.or(r).unwrap();
            let s_in = if l.is_some() { 1.0 } else { -1.0 };
            match bc {
                BoundaryCondition::NoFlow => boundary_flux[f] = Some(0.0),
                BoundaryCondition::Flux(q) => {
                    let u = q * g.face_area(f) * outward_sign(side);
                    boundary_flux[f] = Some(u);
                    rhs[inside] -= s_in * u;
                }
                BoundaryCondition::Pressure(pb_val) => {
                    let t = trans[f];
                    let gb = boundary_gravity(g, pb.density, f, inside);
                    a.add(inside, inside, t);
                    // u = t (p_in - p_b + gb) on the right/top, t (p_b - p_in + gb) on the left/bottom.
                    rhs[inside] += t * pb_val - s_in * t * gb;
                }
            }
        }
    }
    let pin = if pb.bc.has_dirichlet() {
        None
    } else {
        let gauge = pb.bc.gauge.ok_or_else(|| {
            Error::Gauge("pure Neumann flow problem needs a gauge cell".into())
        })?;
        if gauge >= n {
            return Err(Error::Gauge(format!("gauge cell {gauge} is outside the grid")));
        }
        let total: f64 = rhs.iter().sum();
        let scale: f64 = rhs.iter().map(|v| v.abs()).sum::<f64>() + 1e-300;
        if total.abs() > 1e-10 * scale.max(1.0) {
            return Err(Error::Input(format!(
                "sources and boundary fluxes do not balance (net {total:e}) in a closed domain"
            )));
        }
        Some(gauge)
    };
    let mat = a.build_without(pin)?;
    let factor = mat.factor(solver)?;
    let reduced: Vec<f64> = (0..n).filter(|&k| Some(k) != pin).map(|k| rhs[k]).collect();
    let warm_reduced: Option<Vec<f64>> =
        warm.map(|w| (0..n).filter(|&k| Some(k) != pin).map(|k| w[k]).collect());
    let x = factor.solve_warm(&reduced, warm_reduced.as_deref())?;
    let mut p = Vec::with_capacity(n);
    let mut it = x.into_iter();
    for k in 0..n {
        p.push(if Some(k) == pin { 0.0 } else { it.next().unwrap() });
    }
    let mut flux = tpfa::interior_flux(g, &trans, &p, Some(&grav));
    for side in Side::ALL {
        let bc = pb.bc.side(side);
        for f in g.side_faces(side) {
            if let Some(u) = boundary_flux[f] {
                flux[f] = u;
            } else if let BoundaryCondition::Pressure(pv) = bc {
                let (l, r) = g.face_cells(f);
                let inside = l.or(r).unwrap();
                let gb = boundary_gravity(g, pb.density, f, inside);
                flux[f] = if l.is_some() {
                    trans[f] * (p[inside] - pv + gb)
                } else {
                    trans[f] * (pv - p[inside] + gb)
                };
            }
        }
    }
    let div = tpfa::divergence(g, &flux);
    let area = g.cell_area();
    let conservation_residual = (0..n)
        .map(|k| (div[k] - pb.source.map_or(0.0, |s| s[k] * area)).abs())
        .fold(0.0, f64::max);
    Ok(FlowSolution { pressure: p, flux, conservation_residual })
}

fn boundary_gravity(g: &FineGrid, density: Option<&[f64]>, f: usize, inside: usize) -> f64 {
    match (density, g.face_axis(f)) {
        (Some(c), Axis::X) => c[inside] * 0.5 * g.hx,
        _ => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FineGrid;

    #[test]
    fn hydrostatic_state_has_no_flow() {
        let g = FineGrid::new(0.0, 0.0, 4.0, 2.0, 16, 8).unwrap();
        let lam = vec![1.0; g.n_cells()];
        let c = vec![0.7; g.n_cells()];
        let pb = FlowProblem { grid: &g, lambda: &lam, density: Some(&c), source: None, bc: FlowBc::closed(0) };
        let s = solve_flow(&pb, SolverKind::Direct, None).unwrap();
        assert!(s.flux.iter().all(|u| u.abs() < 1e-12));
        let (x0, _) = g.center(0);
        for k in 0..g.n_cells() {
            let (x, _) = g.center(k);
            assert!((s.pressure[k] - 0.7 * (x - x0)).abs() < 1e-10);
        }
    }

    #[test]
    fn linear_pressure_drop() {
        let g = FineGrid::new(0.0, 0.0, 1.0, 1.0, 10, 3).unwrap();
        let lam = vec![2.0; g.n_cells()];
        let mut bc = FlowBc::closed(0);
        bc.left = BoundaryCondition::Pressure(1.0);
        bc.right = BoundaryCondition::Pressure(0.0);
        let pb = FlowProblem { grid: &g, lambda: &lam, density: None, source: None, bc };
        let s = solve_flow(&pb, SolverKind::Direct, None).unwrap();
        for k in 0..g.n_cells() {
            let (x, _) = g.center(k);
            assert!((s.pressure[k] - (1.0 - x)).abs() < 1e-12);
        }
        let f = g.xface(4, 1);
        assert!((s.flux[f] - 2.0 * g.hy).abs() < 1e-12);
    }

    #[test]
    fn missing_gauge_is_reported() {
        let g = FineGrid::uniform(3, 3, 1.0, 1.0);
        let lam = vec![1.0; 9];
        let mut bc = FlowBc::closed(0);
        bc.gauge = None;
        let pb = FlowProblem { grid: &g, lambda: &lam, density: None, source: None, bc };
        assert!(matches!(solve_flow(&pb, SolverKind::Direct, None), Err(Error::Gauge(_))));
    }

    #[test]
    fn parses_conditions() {
        assert_eq!("flux:-1".parse::<BoundaryCondition>().unwrap(), BoundaryCondition::Flux(-1.0));
        assert_eq!("pressure:0".parse::<BoundaryCondition>().unwrap(), BoundaryCondition::Pressure(0.0));
        assert!("pressur:0".parse::<BoundaryCondition>().is_err());
    }
}
