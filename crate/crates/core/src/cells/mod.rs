//! Local cell problems defining the multicontinuum basis functions and the
//! effective coefficients computed from them.

pub mod block;
pub mod saddle;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{Axis, CoarseGrid, FineGrid, Oversample, SourceCell};
use crate::linalg::{SolverKind, SymBuilder};
use crate::tpfa;
use saddle::{Row, SaddleSolver};

/// Fine cells of a local problem with their mobility, continuum labels and
/// the sub-block region each cell belongs to.
#[derive(Debug, Clone)]
pub struct Patch {
    pub grid: FineGrid,
    pub lambda: Vec<f64>,
    pub labels: Vec<u8>,
    pub n_cont: usize,
    pub regions: Vec<usize>,
    pub n_regions: usize,
    pub central: usize,
    pub truncated: bool,
}

impl Patch {
    /// A patch made of a single region.
    pub fn single(grid: FineGrid, lambda: Vec<f64>, labels: Vec<u8>, n_cont: usize) -> Self {
        let n = grid.n_cells();
        Self { grid, lambda, labels, n_cont, regions: vec![0; n], n_regions: 1, central: 0, truncated: false }
    }

    /// Coarse block `b` of a target grid, with fields indexed by target cell.
    pub fn from_block(coarse: &CoarseGrid, b: usize, lambda: &[f64], labels: &[u8], n_cont: usize) -> Self {
        let (i0, i1, j0, j1) = coarse.block_range(b);
        let f = &coarse.fine;
        let grid = FineGrid {
            x0: f.x0 + i0 as f64 * f.hx,
            y0: f.y0 + j0 as f64 * f.hy,
            lx: (i1 - i0) as f64 * f.hx,
            ly: (j1 - j0) as f64 * f.hy,
            nx: i1 - i0,
            ny: j1 - j0,
            hx: f.hx,
            hy: f.hy,
        };
        let cells = coarse.block_cells(b);
        Self::single(grid, cells.iter().map(|&k| lambda[k]).collect(), cells.iter().map(|&k| labels[k]).collect(), n_cont)
    }

    /// Oversampled region with data looked up through the source map.
    pub fn from_oversample(
        os: &Oversample,
        lambda: impl Fn(SourceCell) -> f64,
        label: impl Fn(SourceCell) -> u8,
        n_cont: usize,
    ) -> Self {
        Self {
            grid: os.grid.clone(),
            lambda: os.sources.iter().map(|&s| lambda(s)).collect(),
            labels: os.sources.iter().map(|&s| label(s)).collect(),
            n_cont,
            regions: os.regions.clone(),
            n_regions: os.n_regions,
            central: os.central,
            truncated: os.truncated,
        }
    }

    pub fn psi(&self, i: usize, k: usize) -> f64 {
        if self.labels[k] as usize == i {
            1.0
        } else {
            0.0
        }
    }

    pub fn transmissibilities(&self) -> Vec<f64> {
        tpfa::transmissibilities(&self.grid, &self.lambda)
    }

    /// Area of continuum `j` inside region `l`.
    pub fn continuum_area(&self, l: usize, j: usize) -> f64 {
        let a = self.grid.cell_area();
        (0..self.grid.n_cells()).filter(|&k| self.regions[k] == l && self.labels[k] as usize == j).count() as f64 * a
    }

    pub fn central_area(&self) -> f64 {
        (0..self.grid.n_cells()).filter(|&k| self.regions[k] == self.central).count() as f64 * self.grid.cell_area()
    }

    /// Constraint rows `int_{R_l} phi psi_j` for every region/continuum pair
    /// that is not empty, and the pairs they belong to.
    pub fn constraint_rows(&self) -> (Vec<Row>, Vec<(usize, usize)>) {
        let a = self.grid.cell_area();
        let mut rows = vec![Vec::new(); self.n_regions * self.n_cont];
        for k in 0..self.grid.n_cells() {
            rows[self.regions[k] * self.n_cont + self.labels[k] as usize].push((k, a));
        }
        let mut keep = Vec::new();
        let mut pairs = Vec::new();
        for (r, row) in rows.into_iter().enumerate() {
            if !row.is_empty() {
                pairs.push((r / self.n_cont, r % self.n_cont));
                keep.push(row);
            }
        }
        (keep, pairs)
    }

    /// Quadrature weight of an interior face for integrals over the central
    /// region: 1 inside, 1/2 on its boundary, 0 outside.
    pub fn central_weight(&self, f: usize) -> f64 {
        match self.grid.face_cells(f) {
            (Some(l), Some(r)) => {
                let a = (self.regions[l] == self.central) as u8 + (self.regions[r] == self.central) as u8;
                0.5 * a as f64
            }
            _ => 0.0,
        }
    }

    fn coordinate(&self, k: usize, axis: Axis) -> f64 {
        let (x, y) = self.grid.center(k);
        match axis {
            Axis::X => x,
            Axis::Y => y,
        }
    }
}

/// Options of the Galerkin cell problems.
#[derive(Debug, Clone)]
pub struct CellOptions {
    /// Gradient directions for which gradient bases are computed.
    pub dirs: Vec<Axis>,
    /// Also compute the gravity response bases.
    pub gravity: bool,
    pub solver: SolverKind,
}

/// Basis functions of one (oversampled) coarse block.
#[derive(Debug, Clone)]
pub struct CellBasisSet {
    pub patch: Patch,
    pub trans: Vec<f64>,
    /// Region/continuum pairs of the active constraint rows.
    pub rows: Vec<(usize, usize)>,
    /// Average-type bases, one per continuum.
    pub avg: Vec<Vec<f64>>,
    /// Multipliers of the average bases (`beta^l_ij` per row).
    pub avg_multipliers: Vec<Vec<f64>>,
    /// Gradient bases per direction and continuum.
    pub grad: Vec<(Axis, Vec<Vec<f64>>)>,
    /// Gravity response bases, one per continuum.
    pub gravity: Option<Vec<Vec<f64>>>,
    /// Reference point of the gradient targets per direction and continuum.
    pub centers: Vec<Vec<f64>>,
    /// Continua present in the central region.
    pub present: Vec<bool>,
    pub max_constraint_residual: f64,
}

/// Load driving the gradient basis of continuum `i` along `axis`: the
/// boundary flux of the matching linear profile on the outer boundary.
fn gradient_load(patch: &Patch, i: usize, axis: Axis) -> Vec<f64> {
    let g = &patch.grid;
    let mut s = vec![0.0; g.n_cells()];
    for f in 0..g.n_faces() {
        if g.face_axis(f) != axis {
            continue;
        }
        match g.face_cells(f) {
            (Some(k), None) => s[k] += patch.lambda[k] * g.face_area(f) * patch.psi(i, k),
            (None, Some(k)) => s[k] -= patch.lambda[k] * g.face_area(f) * patch.psi(i, k),
            _ => {}
        }
    }
    s
}

/// Face body-force term of a density field on interior x-faces.
fn density_term(patch: &Patch, dens: &[f64]) -> Vec<f64> {
    tpfa::gravity_term(&patch.grid, dens)
}

/// Load of the gravity response problem, `-sum_f T_f g_f (e_neg - e_pos)`.
pub(crate) fn gravity_load(patch: &Patch, trans: &[f64], dens: &[f64]) -> Vec<f64> {
    let g = &patch.grid;
    let gt = density_term(patch, dens);
    let mut s = vec![0.0; g.n_cells()];
    for f in 0..g.n_faces() {
        if let (Some(l), Some(r)) = g.face_cells(f) {
            s[l] -= trans[f] * gt[f];
            s[r] += trans[f] * gt[f];
        }
    }
    s
}

/// Per-continuum density `psi_i / |continuum i in the central region|`.
pub fn unit_density(patch: &Patch, i: usize) -> Vec<f64> {
    let area = patch.continuum_area(patch.central, i);
    if area == 0.0 {
        return vec![0.0; patch.grid.n_cells()];
    }
    (0..patch.grid.n_cells()).map(|k| patch.psi(i, k) / area).collect()
}

/// Solves the average, gradient and (optionally) gravity cell problems.
pub fn solve_cell_bases(patch: &Patch, opts: &CellOptions) -> Result<CellBasisSet> {
    let g = &patch.grid;
    let n = patch.n_cont;
    let trans = patch.transmissibilities();
    let a = tpfa::neumann_stiffness(g, &trans);
    let (rows, pairs) = patch.constraint_rows();
    let area = g.cell_area();
    let present: Vec<bool> = (0..n).map(|j| patch.continuum_area(patch.central, j) > 0.0).collect();
    // Reference points: centroid of each continuum in the central region.
    let centers: Vec<Vec<f64>> = opts
        .dirs
        .iter()
        .map(|&ax| {
            (0..n)
                .map(|j| {
                    let cells: Vec<usize> = (0..g.n_cells())
                        .filter(|&k| patch.regions[k] == patch.central && patch.labels[k] as usize == j)
                        .collect();
                    let cells = if cells.is_empty() {
                        (0..g.n_cells()).filter(|&k| patch.regions[k] == patch.central).collect()
                    } else {
                        cells
                    };
                    cells.iter().map(|&k| patch.coordinate(k, ax)).sum::<f64>() / cells.len() as f64
                })
                .collect()
        })
        .collect();
    let solver = SaddleSolver::new(&a, rows.clone(), opts.solver)?;
    let m = rows.len();
    let mut loads: Vec<Option<Vec<f64>>> = Vec::new();
    let mut targets: Vec<Vec<f64>> = Vec::new();
    // Average bases.
    for i in 0..n {
        loads.push(None);
        targets.push(pairs.iter().map(|&(l, j)| if j == i { patch.continuum_area(l, j) } else { 0.0 }).collect());
    }
    // Gradient bases.
    for (d, &ax) in opts.dirs.iter().enumerate() {
        for i in 0..n {
            loads.push(Some(gradient_load(patch, i, ax)));
            targets.push(
                rows.iter()
                    .zip(&pairs)
                    .map(|(row, &(_, j))| {
                        if j == i {
                            row.iter().map(|&(k, _)| area * (patch.coordinate(k, ax) - centers[d][j])).sum()
                        } else {
                            0.0
                        }
                    })
                    .collect(),
            );
        }
    }
    if opts.gravity {
        for i in 0..n {
            loads.push(Some(gravity_load(patch, &trans, &unit_density(patch, i))));
            targets.push(vec![0.0; m]);
        }
    }
    let cases: Vec<(Option<&[f64]>, &[f64])> =
        loads.iter().zip(&targets).map(|(l, t)| (l.as_deref(), t.as_slice())).collect();
    let sols = solver.solve_many(&cases)?;
    let mut max_res: f64 = 0.0;
    for (s, t) in sols.iter().zip(&targets) {
        max_res = max_res.max(solver.constraint_residual(&s.x, t));
    }
    let mut it = sols.into_iter();
    let mut avg = Vec::with_capacity(n);
    let mut avg_multipliers = Vec::with_capacity(n);
    for _ in 0..n {
        let s = it.next().unwrap();
        // beta^l_ij = -mu * int_{R_l} psi_j.
        avg_multipliers.push(
            s.mu.iter().zip(&pairs).map(|(mu, &(l, j))| -mu * patch.continuum_area(l, j)).collect(),
        );
        avg.push(s.x);
    }
    let grad = opts.dirs.iter().map(|&ax| (ax, (0..n).map(|_| it.next().unwrap().x).collect())).collect();
    let gravity = opts.gravity.then(|| (0..n).map(|_| it.next().unwrap().x).collect());
    Ok(CellBasisSet {
        patch: patch.clone(),
        trans,
        rows: pairs,
        avg,
        avg_multipliers,
        grad,
        gravity,
        centers,
        present,
        max_constraint_residual: max_res,
    })
}

/// `|K|^{-1} sum_f w_f T_f (a_neg - a_pos)(b_neg - b_pos)` over the central region.
pub fn energy(patch: &Patch, trans: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let g = &patch.grid;
    let mut s = 0.0;
    for f in 0..g.n_faces() {
        let w = patch.central_weight(f);
        if w > 0.0 {
            let (l, r) = g.face_cells(f);
            let (l, r) = (l.unwrap(), r.unwrap());
            s += w * trans[f] * (a[l] - a[r]) * (b[l] - b[r]);
        }
    }
    s / patch.central_area()
}

/// `|K|^{-1} sum_f w_f T_f g_f(dens) (b_neg - b_pos)` over the central region.
pub fn gravity_form(patch: &Patch, trans: &[f64], dens: &[f64], b: &[f64]) -> f64 {
    let g = &patch.grid;
    let gt = density_term(patch, dens);
    let mut s = 0.0;
    for f in 0..g.n_faces() {
        let w = patch.central_weight(f);
        if w > 0.0 && gt[f] != 0.0 {
            let (l, r) = g.face_cells(f);
            let (l, r) = (l.unwrap(), r.unwrap());
            s += w * trans[f] * gt[f] * (b[l] - b[r]);
        }
    }
    s / patch.central_area()
}

/// Effective coefficients of the Galerkin macroscopic pressure equations
/// for one block.
#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinCoefficients {
    pub dirs: Vec<Axis>,
    /// `alpha[m][n]` is the N x N matrix coupling gradient bases `m` and `n`.
    pub alpha: Vec<Vec<DMatrix<f64>>>,
    pub beta: DMatrix<f64>,
    /// Coefficient of `C_j` in equation `i`.
    pub gamma: Option<DMatrix<f64>>,
    /// Coefficient of `C_j` under the divergence, per direction.
    pub gamma_dir: Option<Vec<DMatrix<f64>>>,
    pub present: Vec<bool>,
}

pub fn galerkin_coefficients(set: &CellBasisSet) -> GalerkinCoefficients {
    let n = set.patch.n_cont;
    let p = &set.patch;
    let t = &set.trans;
    let sym = |fa: &dyn Fn(usize) -> Vec<f64>, fb: &dyn Fn(usize) -> Vec<f64>| {
        DMatrix::from_fn(n, n, |i, j| energy(p, t, &fa(i), &fb(j)))
    };
    let alpha = set
        .grad
        .iter()
        .map(|(_, gm)| set.grad.iter().map(|(_, gn)| sym(&|i| gm[i].clone(), &|j| gn[j].clone())).collect())
        .collect();
    let beta = sym(&|i| set.avg[i].clone(), &|j| set.avg[j].clone());
    let (gamma, gamma_dir) = match &set.gravity {
        None => (None, None),
        Some(pc) => {
            let dens: Vec<Vec<f64>> = (0..n).map(|i| unit_density(p, i)).collect();
            // Response of test basis `b` to unit concentration of continuum `j`.
            let form = |j: usize, b: &[f64]| energy(p, t, &pc[j], b) + gravity_form(p, t, &dens[j], b);
            let gamma = DMatrix::from_fn(n, n, |i, j| form(j, &set.avg[i]));
            let gd = set.grad.iter().map(|(_, gm)| DMatrix::from_fn(n, n, |i, j| form(j, &gm[i]))).collect();
            (Some(gamma), Some(gd))
        }
    };
    GalerkinCoefficients { dirs: set.grad.iter().map(|(a, _)| *a).collect(), alpha, beta, gamma, gamma_dir, present: set.present.clone() }
}

/// Pressure bases of the mixed formulation together with their Darcy flux
/// and the continuum velocity moments of that flux.
#[derive(Debug, Clone)]
pub struct MixedPressureBases {
    /// Average bases followed by the gradient bases (direction-major).
    pub pressure: Vec<Vec<f64>>,
    /// Face fluxes `-lambda grad phi` on the patch grid.
    pub flux: Vec<Vec<f64>>,
    /// `[basis][continuum] -> (x moment, y moment)` of the flux.
    pub velocity_moments: Vec<Vec<(f64, f64)>>,
    pub max_constraint_residual: f64,
}

pub fn solve_mixed_pressure_bases(patch: &Patch, dirs: &[Axis], solver: SolverKind) -> Result<MixedPressureBases> {
    let set = solve_cell_bases(patch, &CellOptions { dirs: dirs.to_vec(), gravity: false, solver })?;
    let g = &patch.grid;
    let mut pressure = set.avg.clone();
    let mut loads: Vec<Option<(Axis, usize)>> = vec![None; set.avg.len()];
    for (ax, gb) in &set.grad {
        for (i, b) in gb.iter().enumerate() {
            pressure.push(b.clone());
            loads.push(Some((*ax, i)));
        }
    }
    let flux: Vec<Vec<f64>> = pressure
        .iter()
        .zip(&loads)
        .map(|(p, ld)| {
            let mut u = tpfa::interior_flux(g, &set.trans, p, None);
            if let Some((ax, i)) = *ld {
                for f in 0..g.n_faces() {
                    if g.is_boundary_face(f) && g.face_axis(f) == ax {
                        let (l, r) = g.face_cells(f);
                        let k = l.or(r).unwrap();
                        u[f] = -patch.lambda[k] * g.face_area(f) * patch.psi(i, k);
                    }
                }
            }
            u
        })
        .collect();
    let velocity_moments = flux
        .iter()
        .map(|u| {
            (0..patch.n_cont)
                .map(|j| {
                    let mut mx = 0.0;
                    let mut my = 0.0;
                    for f in 0..g.n_faces() {
                        let psi = tpfa::face_mean(g, &(0..g.n_cells()).map(|k| patch.psi(j, k)).collect::<Vec<_>>(), f);
                        let w = if g.is_boundary_face(f) { 0.5 } else { 1.0 };
                        match g.face_axis(f) {
                            Axis::X => mx += w * u[f] * g.hx * psi,
                            Axis::Y => my += w * u[f] * g.hy * psi,
                        }
                    }
                    (mx, my)
                })
                .collect()
        })
        .collect();
    Ok(MixedPressureBases { pressure, flux, velocity_moments, max_constraint_residual: set.max_constraint_residual })
}

/// Dense reference for a set of cell problems, for tests: returns the same
/// fields as [`solve_cell_bases`] computed by one full KKT solve each.
pub fn dense_reference(patch: &Patch, opts: &CellOptions) -> Result<Vec<Vec<f64>>> {
    let g = &patch.grid;
    if g.n_cells() > 400 {
        return Err(Error::Input("dense reference is limited to 400 cells".into()));
    }
    let set_rows = patch.constraint_rows();
    let trans = patch.transmissibilities();
    let a: SymBuilder = tpfa::neumann_stiffness(g, &trans);
    let set = solve_cell_bases(patch, opts)?;
    let mut out = Vec::new();
    let (rows, pairs) = set_rows;
    let area = g.cell_area();
    for i in 0..patch.n_cont {
        let t: Vec<f64> = pairs.iter().map(|&(l, j)| if j == i { patch.continuum_area(l, j) } else { 0.0 }).collect();
        out.push(saddle::dense_kkt(&a, &rows, None, &t)?.0);
    }
    for (d, &ax) in opts.dirs.iter().enumerate() {
        for i in 0..patch.n_cont {
            let t: Vec<f64> = rows
                .iter()
                .zip(&pairs)
                .map(|(row, &(_, j))| {
                    if j == i {
                        row.iter().map(|&(k, _)| area * (patch.coordinate(k, ax) - set.centers[d][j])).sum()
                    } else {
                        0.0
                    }
                })
                .collect();
            out.push(saddle::dense_kkt(&a, &rows, Some(&gradient_load(patch, i, ax)), &t)?.0);
        }
    }
    if opts.gravity {
        for i in 0..patch.n_cont {
            let s = gravity_load(patch, &trans, &unit_density(patch, i));
            out.push(saddle::dense_kkt(&a, &rows, Some(&s), &vec![0.0; rows.len()])?.0);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ExtensionRule, Oversample};

    fn layered_patch(lam: f64) -> Patch {
        let fine = FineGrid::new(0.0, 0.0, 3.0, 1.0, 12, 4).unwrap();
        let coarse = CoarseGrid::new(fine, 3, 1).unwrap();
        let os = Oversample::new(&coarse, 1, 1, ExtensionRule::NONE);
        Patch::from_oversample(
            &os,
            |s| if coarse.fine.ij(s.index()).1 < 2 { lam } else { 1.0 },
            |s| if coarse.fine.ij(s.index()).1 < 2 { 0 } else { 1 },
            2,
        )
    }

    fn opts() -> CellOptions {
        CellOptions { dirs: vec![Axis::X], gravity: true, solver: SolverKind::Direct }
    }

    #[test]
    fn single_continuum_unit_mobility_is_exact() {
        let fine = FineGrid::new(0.0, 0.0, 3.0, 1.0, 12, 4).unwrap();
        let coarse = CoarseGrid::new(fine, 3, 1).unwrap();
        let os = Oversample::new(&coarse, 1, 1, ExtensionRule::NONE);
        let p = Patch::from_oversample(&os, |_| 1.0, |_| 0, 1);
        let set = solve_cell_bases(&p, &CellOptions { dirs: vec![Axis::X], gravity: false, solver: SolverKind::Direct }).unwrap();
        for k in 0..p.grid.n_cells() {
            assert!((set.avg[0][k] - 1.0).abs() < 1e-12);
            let x = p.grid.center(k).0;
            assert!((set.grad[0].1[0][k] - (x - set.centers[0][0])).abs() < 1e-12);
        }
        let c = galerkin_coefficients(&set);
        assert!((c.alpha[0][0][(0, 0)] - 1.0).abs() < 1e-12);
        assert!(c.beta[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn agrees_with_dense_kkt() {
        let p = layered_patch(1000.0);
        let set = solve_cell_bases(&p, &opts()).unwrap();
        let dense = dense_reference(&p, &opts()).unwrap();
        let ours: Vec<&Vec<f64>> = set
            .avg
            .iter()
            .chain(set.grad.iter().flat_map(|(_, g)| g.iter()))
            .chain(set.gravity.as_ref().unwrap().iter())
            .collect();
        assert_eq!(ours.len(), dense.len());
        for (a, b) in ours.iter().zip(&dense) {
            let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for k in 0..a.len() {
                assert!((a[k] - b[k]).abs() < 1e-10 * scale, "{} vs {}", a[k], b[k]);
            }
        }
        assert!(set.max_constraint_residual < 1e-9);
    }

    #[test]
    fn average_bases_sum_to_one() {
        let p = layered_patch(1000.0);
        let set = solve_cell_bases(&p, &opts()).unwrap();
        for k in 0..p.grid.n_cells() {
            assert!((set.avg[0][k] + set.avg[1][k] - 1.0).abs() < 1e-10);
        }
        let c = galerkin_coefficients(&set);
        for i in 0..2 {
            assert!((c.beta[(i, 0)] + c.beta[(i, 1)]).abs() < 1e-8 * c.beta.amax().max(1.0));
        }
    }

    #[test]
    fn mixed_pressure_gradient_flux_is_uniform() {
        let fine = FineGrid::new(0.0, 0.0, 2.0, 1.0, 8, 4).unwrap();
        let p = Patch::single(fine.clone(), vec![1.0; 32], vec![0; 32], 1);
        let mb = solve_mixed_pressure_bases(&p, &[Axis::X], SolverKind::Direct).unwrap();
        assert!(mb.flux[0].iter().all(|u| u.abs() < 1e-12));
        for f in 0..fine.n_faces() {
            let want = if fine.face_axis(f) == Axis::X { -fine.hy } else { 0.0 };
            assert!((mb.flux[1][f] - want).abs() < 1e-12);
        }
    }
}
