//! Block-local Neumann problems of the mixed formulation: edge flux bases,
//! gravity response fields and continuum exchange (interface) fields.

use crate::error::{Error, Result};
use crate::grid::Side;
use crate::linalg::{Factor, SolverKind};
use crate::tpfa;

use super::Patch;

/// How the flux entering or leaving through an edge is balanced inside a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    /// Spread uniformly over the block.
    Uniform,
    /// Spread over the cells of the continuum the basis belongs to.
    Continuum,
}

impl std::str::FromStr for SourceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(SourceKind::Uniform),
            "continuum" => Ok(SourceKind::Continuum),
            _ => Err(Error::Config(format!("unknown edge source kind '{s}'"))),
        }
    }
}

/// Pressure and face fluxes of a block-local field (local grid indexing).
#[derive(Debug, Clone)]
pub struct LocalField {
    pub pressure: Vec<f64>,
    pub flux: Vec<f64>,
}

/// Factorized Neumann operator of one block.
pub struct BlockSolver {
    pub patch: Patch,
    pub trans: Vec<f64>,
    factor: Factor,
}

impl BlockSolver {
    pub fn new(patch: Patch, solver: SolverKind) -> Result<Self> {
        let trans = patch.transmissibilities();
        let a = tpfa::neumann_stiffness(&patch.grid, &trans);
        let factor = if patch.grid.n_cells() > 1 {
            a.build_without(Some(0))?.factor(solver)?
        } else {
            Factor::Empty
        };
        Ok(Self { patch, trans, factor })
    }

    /// Solves `A p = rhs` for compatible right-hand sides; the returned
    /// pressures have zero mean.
    pub fn solve_many(&self, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = self.patch.grid.n_cells();
        for r in rhs {
            let total: f64 = r.iter().sum();
            let scale: f64 = r.iter().map(|v| v.abs()).sum::<f64>().max(1e-300);
            // Round-off sized loads are accepted as they are.
            if total.abs() > 1e-9 * scale && total.abs() > 1e-14 {
                return Err(Error::Assembly(format!("incompatible block Neumann data (net {total:e})")));
            }
        }
        let reduced: Vec<Vec<f64>> = rhs.iter().map(|r| r[1..].to_vec()).collect();
        let xs = if n > 1 { self.factor.solve_many(&reduced)? } else { vec![Vec::new(); rhs.len()] };
        Ok(xs
            .into_iter()
            .map(|x| {
                let mut p = Vec::with_capacity(n);
                p.push(0.0);
                p.extend(x);
                let mean = p.iter().sum::<f64>() / n as f64;
                p.iter_mut().for_each(|v| *v -= mean);
                p
            })
            .collect())
    }

    fn finish(&self, p: Vec<f64>, g: Option<&[f64]>, prescribed: &[(usize, f64)]) -> LocalField {
        let mut flux = tpfa::interior_flux(&self.patch.grid, &self.trans, &p, g);
        for &(f, u) in prescribed {
            flux[f] = u;
        }
        LocalField { pressure: p, flux }
    }

    /// Faces of a block side in order.
    pub fn side_faces(&self, side: Side) -> Vec<usize> {
        self.patch.grid.side_faces(side)
    }

    /// Area of continuum `i` in the block.
    pub fn continuum_area(&self, i: usize) -> f64 {
        self.patch.continuum_area(0, i)
    }

    fn source(&self, kind: SourceKind, i: usize, total: f64) -> (Vec<f64>, bool) {
        let g = &self.patch.grid;
        let n = g.n_cells();
        let ai = self.continuum_area(i);
        match kind {
            SourceKind::Continuum if ai > 0.0 => {
                ((0..n).map(|k| total * self.patch.psi(i, k) * g.cell_area() / ai).collect(), false)
            }
            _ => (vec![total / n as f64; n], kind == SourceKind::Continuum),
        }
    }

    /// Half of an edge flux basis: the given flux (oriented along the side's
    /// axis) is prescribed on the side faces and balanced inside the block.
    /// Returns the field and whether the source had to fall back to uniform.
    pub fn edge_half(&self, side: Side, side_flux: &[f64], kind: SourceKind, i: usize) -> Result<(LocalField, bool)> {
        let fields = self.edge_halves(&[(side, side_flux.to_vec(), kind, i)])?;
        Ok(fields.into_iter().next().unwrap())
    }

    /// Batched version of [`BlockSolver::edge_half`].
    pub fn edge_halves(&self, cases: &[(Side, Vec<f64>, SourceKind, usize)]) -> Result<Vec<(LocalField, bool)>> {
        let g = &self.patch.grid;
        let mut rhs = Vec::with_capacity(cases.len());
        let mut meta = Vec::with_capacity(cases.len());
        for (side, side_flux, kind, i) in cases {
            let faces = self.side_faces(*side);
            if faces.len() != side_flux.len() {
                return Err(Error::Input(format!("edge profile has {} values for {} faces", side_flux.len(), faces.len())));
            }
            let sign = crate::fine::flow::outward_sign(*side);
            let q_out: f64 = side_flux.iter().map(|u| sign * u).sum();
            let (src, fallback) = self.source(*kind, *i, q_out);
            let mut r = src;
            let mut prescribed = Vec::with_capacity(faces.len());
            for (&f, &u) in faces.iter().zip(side_flux) {
                let (l, rr) = g.face_cells(f);
                let k = l.or(rr).unwrap();
                r[k] -= sign * u;
                prescribed.push((f, u));
            }
            rhs.push(r);
            meta.push((prescribed, fallback));
        }
        let ps = self.solve_many(&rhs)?;
        Ok(ps.into_iter().zip(meta).map(|(p, (pr, fb))| (self.finish(p, None, &pr), fb)).collect())
    }

    /// Flow driven by the body force of density `psi_i` with no flow across
    /// the block boundary.
    pub fn gravity_fields(&self) -> Result<Vec<LocalField>> {
        let p = &self.patch;
        let n = p.n_cont;
        let dens: Vec<Vec<f64>> = (0..n).map(|i| (0..p.grid.n_cells()).map(|k| p.psi(i, k)).collect()).collect();
        let rhs: Vec<Vec<f64>> = dens.iter().map(|d| super::gravity_load(p, &self.trans, d)).collect();
        let ps = self.solve_many(&rhs)?;
        Ok(ps
            .into_iter()
            .zip(&dens)
            .map(|(pr, d)| {
                let gt = tpfa::gravity_term(&p.grid, d);
                self.finish(pr, Some(&gt), &[])
            })
            .collect())
    }

    /// Exchange field between continua `i` and `i + 1`: divergence
    /// `psi_i - theta psi_{i+1}` with `theta` balancing the two areas.
    /// `None` when either continuum is absent.
    pub fn interface_field(&self, i: usize) -> Result<Option<LocalField>> {
        let p = &self.patch;
        let (a1, a2) = (self.continuum_area(i), self.continuum_area(i + 1));
        if a1 == 0.0 || a2 == 0.0 {
            return Ok(None);
        }
        let theta = a1 / a2;
        let area = p.grid.cell_area();
        let rhs: Vec<f64> = (0..p.grid.n_cells()).map(|k| (p.psi(i, k) - theta * p.psi(i + 1, k)) * area).collect();
        let pr = self.solve_many(&[rhs])?.remove(0);
        Ok(Some(self.finish(pr, None, &[])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FineGrid;

    fn block(lam: impl Fn(usize) -> f64, lab: impl Fn(usize) -> u8) -> BlockSolver {
        let g = FineGrid::uniform(6, 4, 0.5, 0.25);
        let n = g.n_cells();
        let p = Patch::single(g, (0..n).map(&lam).collect(), (0..n).map(&lab).collect(), 2);
        BlockSolver::new(p, SolverKind::Direct).unwrap()
    }

    #[test]
    fn edge_half_balances_sources() {
        let b = block(|k| 1.0 + (k % 5) as f64, |k| (k % 3 == 0) as u8);
        let faces = b.side_faces(Side::Right);
        let prof: Vec<f64> = (0..faces.len()).map(|j| 0.1 * (j + 1) as f64).collect();
        for kind in [SourceKind::Uniform, SourceKind::Continuum] {
            let (f, fb) = b.edge_half(Side::Right, &prof, kind, 1).unwrap();
            assert!(!fb);
            let div = tpfa::divergence(&b.patch.grid, &f.flux);
            let total: f64 = prof.iter().sum();
            let ai = b.continuum_area(1);
            for k in 0..div.len() {
                let want = match kind {
                    SourceKind::Uniform => total / div.len() as f64,
                    SourceKind::Continuum => total * b.patch.psi(1, k) * b.patch.grid.cell_area() / ai,
                };
                assert!((div[k] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn uniform_gravity_field_is_still() {
        let b = block(|_| 2.0, |_| 0);
        let f = b.gravity_fields().unwrap();
        assert!(f[0].flux.iter().all(|u| u.abs() < 1e-12));
        assert!(f[1].flux.iter().all(|u| u.abs() < 1e-12));
    }

    #[test]
    fn interface_field_exchanges_mass() {
        let b = block(|k| if k % 2 == 0 { 1000.0 } else { 1.0 }, |k| (k % 2) as u8);
        let f = b.interface_field(0).unwrap().unwrap();
        let div = tpfa::divergence(&b.patch.grid, &f.flux);
        let area = b.patch.grid.cell_area();
        for k in 0..div.len() {
            let want = if k % 2 == 0 { area } else { -area };
            assert!((div[k] - want).abs() < 1e-10);
        }
        assert!(block(|_| 1.0, |_| 0).interface_field(0).unwrap().is_none());
    }
}
