//! CSV, PGM and manifest persistence. Floats are written in shortest
//! round-trip form so identical runs give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::coarse::run::OperatorRecord;
use crate::continua::MacroAverages;
use crate::error::{Error, Result};
use crate::grid::{Axis, FineGrid};

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Input(format!("{}: {e}", path.display()))
}

/// Writes `i,j,value` rows for a cell field.
pub fn write_cell_csv(path: &Path, grid: &FineGrid, values: &[f64]) -> Result<()> {
    let mut s = String::from("i,j,value\n");
    for (k, v) in values.iter().enumerate().take(grid.n_cells()) {
        let (i, j) = grid.ij(k);
        writeln!(s, "{i},{j},{v}").unwrap();
    }
    fs::write(path, s)?;
    Ok(())
}

/// Writes `orientation,i,j,flux` rows for a face field.
pub fn write_face_csv(path: &Path, grid: &FineGrid, flux: &[f64]) -> Result<()> {
    let mut s = String::from("orientation,i,j,flux\n");
    for (f, u) in flux.iter().enumerate().take(grid.n_faces()) {
        let (axis, i, j) = grid.face_ij(f);
        let o = match axis {
            Axis::X => "x",
            Axis::Y => "y",
        };
        writeln!(s, "{o},{i},{j},{u}").unwrap();
    }
    fs::write(path, s)?;
    Ok(())
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| io_err(path, e))
}

/// Reads a cell field written by [`write_cell_csv`]; every cell must appear once.
pub fn read_cell_csv(path: &Path, grid: &FineGrid) -> Result<Vec<f64>> {
    let mut out = vec![f64::NAN; grid.n_cells()];
    for rec in reader(path)?.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let parse = |k: usize| rec.get(k).ok_or_else(|| io_err(path, "short row"));
        let i: usize = parse(0)?.parse().map_err(|e| io_err(path, e))?;
        let j: usize = parse(1)?.parse().map_err(|e| io_err(path, e))?;
        let v: f64 = parse(2)?.parse().map_err(|e| io_err(path, e))?;
        if i >= grid.nx || j >= grid.ny {
            return Err(io_err(path, format!("cell ({i},{j}) is outside the {}x{} grid", grid.nx, grid.ny)));
        }
        out[grid.cell(i, j)] = v;
    }
    if out.iter().any(|v| v.is_nan()) {
        return Err(io_err(path, "not every cell has a value"));
    }
    Ok(out)
}

/// Reads a face field written by [`write_face_csv`].
pub fn read_face_csv(path: &Path, grid: &FineGrid) -> Result<Vec<f64>> {
    let mut out = vec![f64::NAN; grid.n_faces()];
    for rec in reader(path)?.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let parse = |k: usize| rec.get(k).ok_or_else(|| io_err(path, "short row"));
        let i: usize = parse(1)?.parse().map_err(|e| io_err(path, e))?;
        let j: usize = parse(2)?.parse().map_err(|e| io_err(path, e))?;
        let u: f64 = parse(3)?.parse().map_err(|e| io_err(path, e))?;
        let f = match parse(0)? {
            "x" if i <= grid.nx && j < grid.ny => grid.xface(i, j),
            "y" if i < grid.nx && j <= grid.ny => grid.yface(i, j),
            o => return Err(io_err(path, format!("bad face '{o},{i},{j}'"))),
        };
        out[f] = u;
    }
    if out.iter().any(|v| v.is_nan()) {
        return Err(io_err(path, "not every face has a value"));
    }
    Ok(out)
}

pub const AVERAGES_HEADER: &str = "time,block_or_edge,continuum,quantity,value\n";

/// Appends block quantities (`P`, `C`, `volume`) and edge velocities (`V`)
/// of one time level. Continua are numbered from 1.
pub fn push_averages(s: &mut String, time: f64, avg: &MacroAverages) {
    let n = avg.n;
    for (idx, c) in avg.c.iter().enumerate() {
        let (b, k) = (idx / n, idx % n + 1);
        if let Some(p) = avg.p[idx] {
            writeln!(s, "{time},{b},{k},P,{p}").unwrap();
        }
        writeln!(s, "{time},{b},{k},C,{c}").unwrap();
        writeln!(s, "{time},{b},{k},volume,{}", avg.volume[idx]).unwrap();
    }
    push_indexed(s, time, n, "V", &avg.v);
}

/// Appends one quantity indexed `[block_or_edge * n + continuum]`.
pub fn push_indexed(s: &mut String, time: f64, n: usize, quantity: &str, values: &[f64]) {
    for (idx, v) in values.iter().enumerate() {
        writeln!(s, "{time},{},{},{quantity},{v}", idx / n, idx % n + 1).unwrap();
    }
}

pub fn operators_csv(records: &[OperatorRecord]) -> String {
    let mut s = String::from("time,block,continuum_i,continuum_j,name,value\n");
    for r in records {
        writeln!(s, "{},{},{},{},{},{}", r.time, r.block, r.i + 1, r.j + 1, r.name, r.value).unwrap();
    }
    s
}

/// Grey-scale image of a cell field in [0, 1] (top row is the top of the domain).
pub fn write_pgm(path: &Path, grid: &FineGrid, values: &[f64]) -> Result<()> {
    let mut s = format!("P2\n{} {}\n255\n", grid.nx, grid.ny);
    for j in (0..grid.ny).rev() {
        let row: Vec<String> =
            (0..grid.nx).map(|i| ((values[grid.cell(i, j)].clamp(0.0, 1.0) * 255.0).round() as u8).to_string()).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

/// Hex SHA-256 digest of a string.
pub fn sha256_hex(text: &str) -> String {
    use sha2::{Digest, Sha256};
    let d = Sha256::digest(text.as_bytes());
    d.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_and_face_fields_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = FineGrid::new(0.0, 0.0, 1.0, 1.0, 3, 2).unwrap();
        let c: Vec<f64> = (0..g.n_cells()).map(|k| 0.1 * k as f64 + 1e-17).collect();
        let u: Vec<f64> = (0..g.n_faces()).map(|f| -(f as f64) / 3.0).collect();
        write_cell_csv(&dir.path().join("c.csv"), &g, &c).unwrap();
        write_face_csv(&dir.path().join("u.csv"), &g, &u).unwrap();
        assert_eq!(read_cell_csv(&dir.path().join("c.csv"), &g).unwrap(), c);
        assert_eq!(read_face_csv(&dir.path().join("u.csv"), &g).unwrap(), u);
        let small = FineGrid::new(0.0, 0.0, 1.0, 1.0, 2, 2).unwrap();
        assert!(read_cell_csv(&dir.path().join("c.csv"), &small).is_err());
    }

    #[test]
    fn digest_is_stable() {
        assert_eq!(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
