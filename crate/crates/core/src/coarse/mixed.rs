//! Mixed multicontinuum flow model: Galerkin projection of the fine
//! two-point flux saddle-point system onto coarse velocity bases (one per
//! edge and continuum, plus optional exchange fields) and piecewise constant
//! pressures (per block, or per block and continuum).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::cells::block::{BlockSolver, LocalField, SourceKind};
use crate::cells::Patch;
use crate::error::{Error, Result};
use crate::grid::{Axis, CoarseGrid, Side};
use crate::linalg::{dense_solve, SolverKind};
use crate::par::Exec;
use crate::tpfa;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PressureSpace {
    /// One pressure per block.
    Single,
    /// One pressure per block and continuum.
    PerContinuum,
}

impl std::str::FromStr for PressureSpace {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(PressureSpace::Single),
            "per-continuum" => Ok(PressureSpace::PerContinuum),
            _ => Err(Error::Config(format!("unknown pressure space '{s}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MixedOptions {
    pub pressure: PressureSpace,
    pub source: SourceKind,
    /// Include the continuum exchange fields as extra velocity unknowns.
    pub interface: bool,
    pub gravity: bool,
    pub solver: SolverKind,
}

/// Data of a pressure-controlled boundary face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutsideFace {
    pub pressure: f64,
    /// Transmissibility between the inside cell and the boundary value.
    pub trans: f64,
    /// Concentration on the far side entering the body force (0 when the
    /// boundary value sits on the face itself).
    pub density: f64,
    /// Continuum label of the cell across the face, if there is one.
    pub label: Option<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryEdge {
    NoFlow,
    /// Prescribed face fluxes (oriented along the axis) and their labels.
    Flux { flux: Vec<f64>, labels: Vec<u8> },
    Pressure { faces: Vec<OutsideFace> },
}

pub struct MixedInput<'a> {
    pub coarse: &'a CoarseGrid,
    pub n_cont: usize,
    /// Mobility and labels on the target grid.
    pub lambda: &'a [f64],
    pub labels: &'a [u8],
    /// Condition of every coarse edge (only boundary edges are consulted).
    pub boundary: &'a [BoundaryEdge],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    Edge { edge: usize, continuum: usize },
    Exchange { block: usize, pair: usize },
}

#[derive(Debug, Clone)]
pub struct BasisMeta {
    pub kind: BasisKind,
    /// Total flux through the edge for a unit coefficient.
    pub edge_flux: f64,
}

type Sparse = Vec<(usize, f64)>;

/// Projected operators at one time level.
#[derive(Debug, Clone)]
pub struct MixedOperators {
    pub n_cont: usize,
    pub bases: Vec<BasisMeta>,
    /// Velocity mass matrix between bases.
    pub m: DMatrix<f64>,
    /// Pressure-divergence coupling `[pressure dof][basis]`.
    pub b: DMatrix<f64>,
    /// Derivative of the velocity right-hand side with respect to `C[block * n + i]`.
    pub gamma: DMatrix<f64>,
    pub rhs0: DVector<f64>,
    pub mass_rhs: DVector<f64>,
    /// Pressure unknowns as (block, continuum).
    pub pdofs: Vec<(usize, Option<usize>)>,
    /// Pressure unknowns fixed to zero to remove null modes.
    pub gauged: Vec<usize>,
    /// Continuum fluxes through edges with prescribed flux.
    pub known_v: Vec<f64>,
    /// Area of every continuum in every block.
    pub volume: Vec<f64>,
    /// Number of edge bases whose continuum source fell back to uniform.
    pub source_fallbacks: usize,
}

#[derive(Debug, Clone)]
pub struct MixedSolution {
    pub coefficients: Vec<f64>,
    /// Pressure per unknown of [`MixedOperators::pdofs`].
    pub pressure: Vec<f64>,
    /// Continuum flux per edge `[edge * n + i]`.
    pub v: Vec<f64>,
}

struct BlockPieces {
    halves: Vec<(usize, usize, Sparse)>,
    known: Sparse,
    gravity: Vec<Sparse>,
    exchange: Vec<(usize, Sparse)>,
    fallbacks: usize,
}

fn side_of(sign: f64, axis: Axis) -> Side {
    match (axis, sign > 0.0) {
        (Axis::X, true) => Side::Right,
        (Axis::X, false) => Side::Left,
        (Axis::Y, true) => Side::Top,
        (Axis::Y, false) => Side::Bottom,
    }
}

/// Continuum weights of the faces of an edge: mean of the indicators of the
/// two adjacent cells (the inside cell alone when there is nothing across).
fn edge_profile(input: &MixedInput, e: usize, i: usize) -> Vec<f64> {
    let g = &input.coarse.fine;
    let faces = input.coarse.edge_faces(e);
    let outside = match input.boundary.get(e) {
        Some(BoundaryEdge::Pressure { faces }) if !input.coarse.is_interior_edge(e) => Some(faces),
        _ => None,
    };
    faces
        .iter()
        .enumerate()
        .map(|(n, &f)| {
            let ind = |k: usize| (input.labels[k] as usize == i) as u8 as f64;
            let w = match g.face_cells(f) {
                (Some(l), Some(r)) => 0.5 * (ind(l) + ind(r)),
                (Some(k), None) | (None, Some(k)) => match outside.and_then(|o| o[n].label) {
                    Some(lab) => 0.5 * (ind(k) + (lab as usize == i) as u8 as f64),
                    None => ind(k),
                },
                _ => unreachable!(),
            };
            w * g.face_area(f)
        })
        .collect()
}

fn to_global(coarse: &CoarseGrid, b: usize, patch: &Patch, field: &LocalField, skip: Option<Side>) -> Sparse {
    let (i0, _, j0, _) = coarse.block_range(b);
    let g = &coarse.fine;
    let skipped: Vec<usize> = skip.map(|s| patch.grid.side_faces(s)).unwrap_or_default();
    let mut out: Sparse = (0..patch.grid.n_faces())
        .filter(|f| field.flux[*f] != 0.0 && !skipped.contains(f))
        .map(|f| {
            let gf = match patch.grid.face_ij(f) {
                (Axis::X, i, j) => g.xface(i + i0, j + j0),
                (Axis::Y, i, j) => g.yface(i + i0, j + j0),
            };
            (gf, field.flux[f])
        })
        .collect();
    out.sort_by_key(|(f, _)| *f);
    out
}

fn block_pieces(input: &MixedInput, opts: &MixedOptions, b: usize) -> Result<BlockPieces> {
    let coarse = input.coarse;
    let n = input.n_cont;
    let patch = Patch::from_block(coarse, b, input.lambda, input.labels, n);
    let solver = BlockSolver::new(patch, opts.solver)?;
    let mut cases = Vec::new();
    let mut meta = Vec::new();
    let mut known_cases = Vec::new();
    for (e, sign) in coarse.block_edges(b) {
        let (axis, _, _) = coarse.edge_ij(e);
        let side = side_of(sign, axis);
        let interior = coarse.is_interior_edge(e);
        match (&input.boundary[e], interior) {
            (_, true) | (BoundaryEdge::Pressure { .. }, false) => {
                for i in 0..n {
                    let prof = edge_profile(input, e, i);
                    if prof.iter().sum::<f64>() > 0.0 {
                        cases.push((side, prof, opts.source, i));
                        meta.push((e, i, side, interior && sign < 0.0));
                    }
                }
            }
            (BoundaryEdge::Flux { flux, .. }, false) => {
                if flux.iter().any(|u| *u != 0.0) {
                    known_cases.push((side, flux.clone(), SourceKind::Uniform, 0));
                }
            }
            (BoundaryEdge::NoFlow, false) => {}
        }
    }
    let fields = solver.edge_halves(&cases)?;
    let mut fallbacks = 0;
    let mut halves = Vec::with_capacity(fields.len());
    for ((field, fb), (e, i, side, upper_half)) in fields.into_iter().zip(meta) {
        fallbacks += fb as usize;
        // The face values on the shared edge are stored by the lower block only.
        let skip = upper_half.then_some(side);
        halves.push((e, i, to_global(coarse, b, &solver.patch, &field, skip)));
    }
    let mut known: Sparse = Vec::new();
    for (field, _) in solver.edge_halves(&known_cases)? {
        known = add_sparse(&known, &to_global(coarse, b, &solver.patch, &field, None));
    }
    let gravity = if opts.gravity {
        solver.gravity_fields()?.iter().map(|f| to_global(coarse, b, &solver.patch, f, None)).collect()
    } else {
        Vec::new()
    };
    let mut exchange = Vec::new();
    if opts.interface {
        for pair in 0..n - 1 {
            if let Some(f) = solver.interface_field(pair)? {
                exchange.push((pair, to_global(coarse, b, &solver.patch, &f, None)));
            }
        }
    }
    Ok(BlockPieces { halves, known, gravity, exchange, fallbacks })
}

fn add_sparse(a: &Sparse, b: &Sparse) -> Sparse {
    let mut m: BTreeMap<usize, f64> = a.iter().copied().collect();
    for &(f, v) in b {
        *m.entry(f).or_insert(0.0) += v;
    }
    m.into_iter().collect()
}

fn weighted_dot(a: &Sparse, b: &Sparse, w: &[f64]) -> f64 {
    let (mut i, mut j, mut s) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                s += a[i].1 * b[j].1 * w[a[i].0];
                i += 1;
                j += 1;
            }
        }
    }
    s
}

/// Assembles the projected operators for the current mobility and labels.
pub fn assemble_mixed(input: &MixedInput, opts: &MixedOptions, exec: Exec) -> Result<MixedOperators> {
    let coarse = input.coarse;
    let g = &coarse.fine;
    let n = input.n_cont;
    if input.boundary.len() != coarse.n_edges() {
        return Err(Error::Input("one boundary entry per coarse edge is required".into()));
    }
    let pieces = exec.try_map(coarse.n_blocks(), |b| block_pieces(input, opts, b))?;

    // Face weights of the velocity mass matrix and boundary data.
    let trans = tpfa::transmissibilities(g, input.lambda);
    let mut m_face = vec![0.0; g.n_faces()];
    let mut b_face = vec![0.0; g.n_faces()];
    for f in 0..g.n_faces() {
        if !g.is_boundary_face(f) {
            m_face[f] = 1.0 / trans[f];
        }
    }
    let mut known_v = vec![0.0; coarse.n_edges() * n];
    for e in 0..coarse.n_edges() {
        if coarse.is_interior_edge(e) {
            continue;
        }
        let faces = coarse.edge_faces(e);
        match &input.boundary[e] {
            BoundaryEdge::Pressure { faces: data } => {
                for (&f, d) in faces.iter().zip(data) {
                    m_face[f] = 1.0 / d.trans;
                    let outside_negative = g.face_cells(f).0.is_none();
                    let sign = if outside_negative { 1.0 } else { -1.0 };
                    let grav = if opts.gravity && g.face_axis(f) == Axis::X { d.density * 0.5 * g.hx } else { 0.0 };
                    b_face[f] = sign * d.pressure + grav;
                }
            }
            BoundaryEdge::Flux { flux, labels } => {
                for (u, &l) in flux.iter().zip(labels) {
                    known_v[e * n + l as usize] += u;
                }
            }
            BoundaryEdge::NoFlow => {}
        }
    }

    // Collect bases.
    let mut edge_parts: BTreeMap<(usize, usize), Sparse> = BTreeMap::new();
    let mut fallbacks = 0;
    let mut known: Sparse = Vec::new();
    let mut exchange: Vec<(usize, usize, Sparse)> = Vec::new();
    for (b, p) in pieces.iter().enumerate() {
        fallbacks += p.fallbacks;
        for (e, i, s) in &p.halves {
            let entry = edge_parts.entry((*e, *i)).or_default();
            *entry = add_sparse(entry, s);
        }
        known = add_sparse(&known, &p.known);
        for (pair, s) in &p.exchange {
            exchange.push((b, *pair, s.clone()));
        }
    }
    let mut bases = Vec::new();
    let mut fields: Vec<Sparse> = Vec::new();
    for ((e, i), s) in edge_parts {
        let q: f64 = edge_profile(input, e, i).iter().sum();
        bases.push(BasisMeta { kind: BasisKind::Edge { edge: e, continuum: i }, edge_flux: q });
        fields.push(s);
    }
    for (b, pair, s) in exchange {
        bases.push(BasisMeta { kind: BasisKind::Exchange { block: b, pair }, edge_flux: 0.0 });
        fields.push(s);
    }
    let ns = bases.len();

    // Divergence of each basis on the target cells.
    let div_of = |s: &Sparse| -> Sparse {
        let mut d: BTreeMap<usize, f64> = BTreeMap::new();
        for &(f, u) in s {
            let (l, r) = g.face_cells(f);
            if let Some(l) = l {
                *d.entry(l).or_insert(0.0) += u;
            }
            if let Some(r) = r {
                *d.entry(r).or_insert(0.0) -= u;
            }
        }
        d.into_iter().collect()
    };
    let area = g.cell_area();
    let mut volume = vec![0.0; coarse.n_blocks() * n];
    for k in 0..g.n_cells() {
        volume[coarse.block_of(k) * n + input.labels[k] as usize] += area;
    }
    // Pressure unknowns.
    let mut pdofs = Vec::new();
    for b in 0..coarse.n_blocks() {
        match opts.pressure {
            PressureSpace::Single => pdofs.push((b, None)),
            PressureSpace::PerContinuum => {
                for i in 0..n {
                    if volume[b * n + i] > 0.0 {
                        pdofs.push((b, Some(i)));
                    }
                }
            }
        }
    }
    let pdof_of = |k: usize| -> Option<usize> {
        let b = coarse.block_of(k);
        pdofs.iter().position(|&(pb, pi)| pb == b && pi.is_none_or(|i| i == input.labels[k] as usize))
    };
    let cell_dof: Vec<Option<usize>> = (0..g.n_cells()).map(pdof_of).collect();
    let mut bmat = DMatrix::<f64>::zeros(pdofs.len(), ns);
    for (s, f) in fields.iter().enumerate() {
        for (k, d) in div_of(f) {
            if let Some(q) = cell_dof[k] {
                bmat[(q, s)] += d;
            }
        }
    }
    let mut mass_rhs = DVector::<f64>::zeros(pdofs.len());
    for (k, d) in div_of(&known) {
        if let Some(q) = cell_dof[k] {
            mass_rhs[q] -= d;
        }
    }
    // Mass matrix, only pairs of bases sharing a block can overlap.
    let mut mmat = DMatrix::<f64>::zeros(ns, ns);
    let support: Vec<Vec<usize>> = fields
        .iter()
        .map(|s| {
            let mut bl: Vec<usize> = s
                .iter()
                .flat_map(|&(f, _)| {
                    let (l, r) = g.face_cells(f);
                    [l, r].into_iter().flatten().map(|k| coarse.block_of(k))
                })
                .collect();
            bl.sort_unstable();
            bl.dedup();
            bl
        })
        .collect();
    for s in 0..ns {
        for t in s..ns {
            if support[s].iter().any(|b| support[t].contains(b)) {
                let v = weighted_dot(&fields[s], &fields[t], &m_face);
                mmat[(s, t)] = v;
                mmat[(t, s)] = v;
            }
        }
    }
    // Right-hand side: boundary data, known fluxes and body force.
    let mut rhs0 = DVector::<f64>::zeros(ns);
    let mut gamma = DMatrix::<f64>::zeros(ns, coarse.n_blocks() * n);
    for s in 0..ns {
        let mut r = 0.0;
        for &(f, u) in &fields[s] {
            r += u * b_face[f];
        }
        r -= weighted_dot(&known, &fields[s], &m_face);
        rhs0[s] = r;
        if opts.gravity {
            for &(f, u) in &fields[s] {
                if g.face_axis(f) != Axis::X {
                    continue;
                }
                let (l, rr) = g.face_cells(f);
                for k in [l, rr].into_iter().flatten() {
                    let col = coarse.block_of(k) * n + input.labels[k] as usize;
                    if volume[col] > 0.0 {
                        gamma[(s, col)] += u * 0.5 * g.hx / volume[col];
                    }
                }
            }
            for b in &support[s] {
                for i in 0..n {
                    let col = b * n + i;
                    if volume[col] > 0.0 {
                        gamma[(s, col)] -= weighted_dot(&pieces[*b].gravity[i], &fields[s], &m_face) / volume[col];
                    }
                }
            }
        }
    }
    // Remove pressure unknowns without coupling and fix null modes.
    let mut gauged = Vec::new();
    for q in 0..pdofs.len() {
        if bmat.row(q).iter().all(|v| v.abs() < 1e-14) {
            gauged.push(q);
        }
    }
    let has_pressure_bc = input.boundary.iter().any(|b| matches!(b, BoundaryEdge::Pressure { .. }));
    if !has_pressure_bc {
        // One gauge per group of pressures linked through the bases.
        let mut parent: Vec<usize> = (0..pdofs.len()).collect();
        fn find(p: &mut Vec<usize>, x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for s in 0..ns {
            let qs: Vec<usize> = (0..pdofs.len()).filter(|&q| bmat[(q, s)].abs() > 1e-14).collect();
            for w in qs.windows(2) {
                let (a, c) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
                parent[a] = c;
            }
        }
        let mut seen = Vec::new();
        for q in 0..pdofs.len() {
            if gauged.contains(&q) {
                continue;
            }
            let r = find(&mut parent, q);
            if !seen.contains(&r) {
                seen.push(r);
                gauged.push(q);
            }
        }
        gauged.sort_unstable();
    }
    Ok(MixedOperators {
        n_cont: n,
        bases,
        m: mmat,
        b: bmat,
        gamma,
        rhs0,
        mass_rhs,
        pdofs,
        gauged,
        known_v,
        volume,
        source_fallbacks: fallbacks,
    })
}

/// Solves the coarse saddle-point system for given continuum contents.
pub fn solve_mixed(ops: &MixedOperators, c: &[f64], coarse: &CoarseGrid) -> Result<MixedSolution> {
    let ns = ops.bases.len();
    let active: Vec<usize> = (0..ops.pdofs.len()).filter(|q| !ops.gauged.contains(q)).collect();
    let np = active.len();
    let mut k = DMatrix::<f64>::zeros(ns + np, ns + np);
    k.view_mut((0, 0), (ns, ns)).copy_from(&ops.m);
    for (a, &q) in active.iter().enumerate() {
        for s in 0..ns {
            k[(s, ns + a)] = -ops.b[(q, s)];
            k[(ns + a, s)] = -ops.b[(q, s)];
        }
    }
    let cvec = DVector::from_column_slice(c);
    let mut rhs = DVector::<f64>::zeros(ns + np);
    let vr = &ops.rhs0 + &ops.gamma * cvec;
    rhs.rows_mut(0, ns).copy_from(&vr);
    for (a, &q) in active.iter().enumerate() {
        rhs[ns + a] = -ops.mass_rhs[q];
    }
    let sol = if ns + np == 0 { DVector::zeros(0) } else { dense_solve(&k, &rhs)? };
    let coefficients: Vec<f64> = (0..ns).map(|s| sol[s]).collect();
    let mut pressure = vec![0.0; ops.pdofs.len()];
    for (a, &q) in active.iter().enumerate() {
        pressure[q] = sol[ns + a];
    }
    let n = ops.n_cont;
    let mut v = ops.known_v.clone();
    for (s, meta) in ops.bases.iter().enumerate() {
        if let BasisKind::Edge { edge, continuum } = meta.kind {
            v[edge * n + continuum] += coefficients[s] * meta.edge_flux;
        }
    }
    debug_assert_eq!(v.len(), coarse.n_edges() * n);
    Ok(MixedSolution { coefficients, pressure, v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FineGrid;

    fn closed(coarse: &CoarseGrid) -> Vec<BoundaryEdge> {
        vec![BoundaryEdge::NoFlow; coarse.n_edges()]
    }

    #[test]
    fn hydrostatic_single_continuum_has_no_flow() {
        let g = FineGrid::new(0.0, 0.0, 4.0, 1.0, 16, 4).unwrap();
        let coarse = CoarseGrid::new(g.clone(), 4, 1).unwrap();
        let lam = vec![1.0; g.n_cells()];
        let labels = vec![0u8; g.n_cells()];
        let bnd = closed(&coarse);
        let input = MixedInput { coarse: &coarse, n_cont: 2, lambda: &lam, labels: &labels, boundary: &bnd };
        let opts = MixedOptions {
            pressure: PressureSpace::Single,
            source: SourceKind::Uniform,
            interface: false,
            gravity: true,
            solver: SolverKind::Direct,
        };
        let ops = assemble_mixed(&input, &opts, Exec::Sequential).unwrap();
        let c: Vec<f64> = (0..coarse.n_blocks()).flat_map(|_| [0.7, 0.0]).collect();
        let sol = solve_mixed(&ops, &c, &coarse).unwrap();
        assert!(sol.v.iter().all(|v| v.abs() < 1e-12), "{:?}", sol.v);
    }

    #[test]
    fn pressure_drop_matches_fine_solution() {
        // Layered medium parallel to the flow: the coarse space contains the
        // exact fine solution, so the projection reproduces it.
        let g = FineGrid::new(0.0, 0.0, 4.0, 1.0, 16, 4).unwrap();
        let coarse = CoarseGrid::new(g.clone(), 4, 1).unwrap();
        let lam: Vec<f64> = (0..g.n_cells()).map(|k| if g.ij(k).1 < 2 { 1000.0 } else { 1.0 }).collect();
        let labels: Vec<u8> = (0..g.n_cells()).map(|k| if g.ij(k).1 < 2 { 0 } else { 1 }).collect();
        let mut bnd = closed(&coarse);
        let trans = tpfa::transmissibilities(&g, &lam);
        for (e, p) in [(coarse.vedge(0, 0), 1.0), (coarse.vedge(4, 0), 0.0)] {
            let faces = coarse
                .edge_faces(e)
                .iter()
                .map(|&f| OutsideFace { pressure: p, trans: trans[f], density: 0.0, label: None })
                .collect();
            bnd[e] = BoundaryEdge::Pressure { faces };
        }
        let input = MixedInput { coarse: &coarse, n_cont: 2, lambda: &lam, labels: &labels, boundary: &bnd };
        let opts = MixedOptions {
            pressure: PressureSpace::PerContinuum,
            source: SourceKind::Continuum,
            interface: true,
            gravity: false,
            solver: SolverKind::Direct,
        };
        let ops = assemble_mixed(&input, &opts, Exec::Sequential).unwrap();
        let sol = solve_mixed(&ops, &[0.0; 8], &coarse).unwrap();
        // Fine flux per row is lambda * hy / L.
        let e = coarse.vedge(2, 0);
        assert!((sol.v[e * 2] - 1000.0 * 0.5 / 4.0).abs() < 1e-9, "{}", sol.v[e * 2]);
        assert!((sol.v[e * 2 + 1] - 0.5 / 4.0).abs() < 1e-9);
    }
}
