//! Writers and readers for fit and report artefacts.

use std::path::Path;

use glmar_core::lattice::Mask;
use glmar_core::model::{Block, Layout};
use glmar_core::summary::PosteriorSummary;

use crate::bundle::{fmt, read_text, write_text};
use crate::error::{CliError, Result};

pub const SUMMARY: &str = "summary.csv";
pub const DRAWS: &str = "draws.bin";
pub const W_COV: &str = "w_cov.csv";
pub const FREE_ENERGY: &str = "free_energy.csv";

/// `coord,block,mean,variance,bmse`; absent values are left empty.
pub fn summary_csv(s: &PosteriorSummary) -> String {
    let mut out = String::from("coord,block,mean,variance,bmse\n");
    let opt = |v: &Option<Vec<f64>>, i: usize| v.as_ref().map(|v| fmt(v[i])).unwrap_or_default();
    for i in 0..s.layout.dim() {
        let (block, _, _) = s.layout.locate(i);
        out.push_str(&format!(
            "{i},{},{},{},{}\n",
            block.name(),
            fmt(s.mean[i]),
            opt(&s.variance, i),
            opt(&s.bmse, i)
        ));
    }
    out
}

pub fn read_summary(path: &Path, method: &str, layout: Layout) -> Result<PosteriorSummary> {
    let text = read_text(path)?;
    let dim = layout.dim();
    let mut mean = Vec::with_capacity(dim);
    let mut var = Vec::with_capacity(dim);
    let mut bmse = Vec::with_capacity(dim);
    let num = |line: usize, s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            return Ok(None);
        }
        s.parse::<f64>()
            .map(Some)
            .map_err(|_| CliError::parse(path, line, format!("not a number: {s:?}")))
    };
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(CliError::parse(path, i + 1, "expected coord,block,mean,variance,bmse"));
        }
        let coord: usize = f[0]
            .parse()
            .map_err(|_| CliError::parse(path, i + 1, "bad coordinate id"))?;
        if coord != mean.len() || coord >= dim {
            return Err(CliError::parse(path, i + 1, format!("unexpected coordinate {coord}")));
        }
        if Block::from_name(f[1]) != Some(layout.locate(coord).0) {
            return Err(CliError::parse(path, i + 1, format!("block {:?} does not match the layout", f[1])));
        }
        mean.push(num(i + 1, f[2])?.ok_or_else(|| CliError::parse(path, i + 1, "missing mean"))?);
        var.push(num(i + 1, f[3])?);
        bmse.push(num(i + 1, f[4])?);
    }
    if mean.len() != dim {
        return Err(CliError::Data(format!(
            "{}: {} coordinates, expected {dim}",
            path.display(),
            mean.len()
        )));
    }
    let collect = |v: Vec<Option<f64>>| -> Option<Vec<f64>> {
        if v.iter().all(Option::is_some) {
            Some(v.into_iter().map(Option::unwrap).collect())
        } else {
            None
        }
    };
    Ok(PosteriorSummary::new(method, layout, mean, collect(var), collect(bmse))?)
}

/// Retained draws: a text header `R count` then row-major little-endian
/// doubles.
pub fn draws_bytes(dim: usize, count: usize, draws: &[f64]) -> Vec<u8> {
    let mut out = format!("{dim} {count}\n").into_bytes();
    out.reserve(draws.len() * 8);
    for v in draws {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Returns `(R, count, draws)`.
pub fn read_draws(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let nl = bytes
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| CliError::parse(path, 1, "missing header"))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| CliError::parse(path, 1, "bad header"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| CliError::parse(path, 1, "bad header")))
        .collect::<Result<_>>()?;
    if dims.len() != 2 {
        return Err(CliError::parse(path, 1, "header must be \"R count\""));
    }
    let body = &bytes[nl + 1..];
    if body.len() != dims[0] * dims[1] * 8 {
        return Err(CliError::Data(format!("{}: truncated draw archive", path.display())));
    }
    let draws = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((dims[0], dims[1], draws))
}

/// Per-voxel `K×K` covariance blocks as `voxel,row,col,value`.
pub fn w_cov_csv(n: usize, k: usize, cov: impl Fn(usize) -> Vec<f64>) -> String {
    let mut s = String::from("voxel,row,col,value\n");
    for v in 0..n {
        let c = cov(v);
        for i in 0..k {
            for j in 0..k {
                s.push_str(&format!("{v},{i},{j},{}\n", fmt(c[i * k + j])));
            }
        }
    }
    s
}

pub fn read_w_cov(path: &Path, n: usize, k: usize) -> Result<Vec<f64>> {
    let text = read_text(path)?;
    let mut out = vec![f64::NAN; n * k * k];
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let parsed = (|| -> Option<(usize, usize, usize, f64)> {
            if f.len() != 4 {
                return None;
            }
            Some((f[0].parse().ok()?, f[1].parse().ok()?, f[2].parse().ok()?, f[3].parse().ok()?))
        })();
        let (v, r, c, x) = parsed.ok_or_else(|| CliError::parse(path, i + 1, "expected voxel,row,col,value"))?;
        if v >= n || r >= k || c >= k {
            return Err(CliError::parse(path, i + 1, "index out of range"));
        }
        out[v * k * k + r * k + c] = x;
    }
    if out.iter().any(|x| x.is_nan()) {
        return Err(CliError::Data(format!("{}: covariance blocks incomplete", path.display())));
    }
    Ok(out)
}

/// Values on the mask grid as CSV rows along the last axis; cells outside
/// the mask are empty.
pub fn grid_csv(mask: &Mask, values: &[f64]) -> String {
    let row_len = *mask.dims().last().unwrap();
    let mut s = String::new();
    let mut cells = Vec::with_capacity(row_len);
    for c in 0..mask.inside().len() {
        cells.push(mask.voxel_of_cell(c).map(|v| fmt(values[v])).unwrap_or_default());
        if cells.len() == row_len {
            s.push_str(&cells.join(","));
            s.push('\n');
            cells.clear();
        }
    }
    s
}

/// 8-bit binary PGM, linearly scaled to the finite value range; outside
/// the mask is black. 3-D masks are drawn as slices stacked vertically.
pub fn pgm(mask: &Mask, values: &[f64]) -> Vec<u8> {
    let dims = mask.dims();
    let width = *dims.last().unwrap();
    let height = mask.inside().len() / width;
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    for c in 0..mask.inside().len() {
        let px = match mask.voxel_of_cell(c) {
            Some(v) if values[v].is_finite() => {
                if hi > lo {
                    (1.0 + 254.0 * (values[v] - lo) / (hi - lo)).round() as u8
                } else {
                    128
                }
            }
            _ => 0,
        };
        out.push(px);
    }
    out
}

pub fn write_map(dir: &Path, stem: &str, mask: &Mask, values: &[f64]) -> Result<()> {
    write_text(&dir.join(format!("{stem}.csv")), &grid_csv(mask, values))?;
    let path = dir.join(format!("{stem}.pgm"));
    std::fs::write(&path, pgm(mask, values)).map_err(|e| CliError::io(&path, e))
}
