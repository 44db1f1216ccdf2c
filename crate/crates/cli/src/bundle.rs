//! Dataset bundles: `design.csv`, `series.f64` or `series.csv`, `mask.txt`,
//! `meta.txt`, and for simulated replicates `truth.csv`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use glmar_core::lattice::Mask;
use glmar_core::model::Dataset;
use glmar_core::simulate::{GroundTruth, InitialNoise};

use crate::error::{CliError, Result};

pub const DESIGN: &str = "design.csv";
pub const SERIES_BIN: &str = "series.f64";
pub const SERIES_CSV: &str = "series.csv";
pub const MASK: &str = "mask.txt";
pub const META: &str = "meta.txt";
pub const TRUTH: &str = "truth.csv";

/// Shortest round-trip representation, so files reproduce values exactly.
pub fn fmt(x: f64) -> String {
    format!("{x:e}")
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn parse_f64(path: &Path, line: usize, s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| CliError::parse(path, line, format!("not a number: {:?}", s.trim())))?;
    if !v.is_finite() {
        return Err(CliError::parse(path, line, format!("non-finite value {v}")));
    }
    Ok(v)
}

fn parse_usize(path: &Path, line: usize, s: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| CliError::parse(path, line, format!("not a non-negative integer: {:?}", s.trim())))
}

pub fn parse_mask(path: &Path, text: &str) -> Result<Mask> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hl, header) = lines.next().ok_or_else(|| CliError::parse(path, 1, "empty mask file"))?;
    let dims_text = header
        .trim()
        .strip_prefix("dims:")
        .ok_or_else(|| CliError::parse(path, hl + 1, "expected a \"dims: d1 d2 [d3]\" header"))?;
    let dims: Vec<usize> = dims_text
        .split_whitespace()
        .map(|d| parse_usize(path, hl + 1, d))
        .collect::<Result<_>>()?;
    if !(2..=3).contains(&dims.len()) || dims.contains(&0) {
        return Err(CliError::parse(path, hl + 1, "mask needs 2 or 3 positive dimensions"));
    }
    let row_len = *dims.last().unwrap();
    let rows: usize = dims[..dims.len() - 1].iter().product();
    let mut inside = Vec::with_capacity(rows * row_len);
    let mut seen = 0;
    for (i, line) in lines {
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.len() != row_len {
            return Err(CliError::parse(path, i + 1, format!("expected {row_len} entries, found {}", vals.len())));
        }
        for v in vals {
            inside.push(match v {
                "0" => false,
                "1" => true,
                other => return Err(CliError::parse(path, i + 1, format!("mask entries must be 0 or 1, found {other:?}"))),
            });
        }
        seen += 1;
    }
    if seen != rows {
        return Err(CliError::parse(path, text.lines().count(), format!("expected {rows} mask rows, found {seen}")));
    }
    Mask::new(dims, inside).map_err(|e| CliError::parse(path, hl + 1, e.to_string()))
}

pub fn read_mask(path: &Path) -> Result<Mask> {
    parse_mask(path, &read_text(path)?)
}

pub fn mask_text(mask: &Mask) -> String {
    let dims = mask.dims();
    let mut s = format!("dims: {}\n", dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" "));
    let row_len = *dims.last().unwrap();
    for row in mask.inside().chunks(row_len) {
        let cells: Vec<&str> = row.iter().map(|b| if *b { "1" } else { "0" }).collect();
        s.push_str(&cells.join(" "));
        s.push('\n');
    }
    s
}

/// Design matrix with its regressor names.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub names: Vec<String>,
    /// `T×K`, row-major.
    pub x: Vec<f64>,
    pub t: usize,
}

impl Design {
    pub fn k(&self) -> usize {
        self.names.len()
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| CliError::parse(path, 1, "empty design file"))?;
        let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        if names.iter().any(|n| n.is_empty() || n.parse::<f64>().is_ok()) {
            return Err(CliError::parse(path, 1, "first row must name the regressors"));
        }
        let k = names.len();
        let mut x = Vec::new();
        let mut t = 0;
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<&str> = line.split(',').collect();
            if vals.len() != k {
                return Err(CliError::parse(path, i + 1, format!("expected {k} columns, found {}", vals.len())));
            }
            for v in vals {
                x.push(parse_f64(path, i + 1, v)?);
            }
            t += 1;
        }
        Ok(Self { names, x, t })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(path, &read_text(path)?)
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.names.join(",");
        s.push('\n');
        for row in self.x.chunks(self.k()) {
            s.push_str(&row.iter().map(|v| fmt(*v)).collect::<Vec<_>>().join(","));
            s.push('\n');
        }
        s
    }
}

/// `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(path: &Path, text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::parse(path, i + 1, "expected key=value"))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Meta {
    pub t: usize,
    pub n: usize,
    pub k: usize,
    pub p: usize,
}

impl Meta {
    pub fn read(path: &Path) -> Result<Self> {
        let kv = parse_key_values(path, &read_text(path)?)?;
        let get = |key: &str| -> Result<usize> {
            let v = kv
                .get(key)
                .ok_or_else(|| CliError::parse(path, 1, format!("missing key {key}")))?;
            parse_usize(path, 1, v)
        };
        Ok(Self {
            t: get("T")?,
            n: get("N")?,
            k: get("K")?,
            p: get("P")?,
        })
    }

    pub fn text(&self) -> String {
        format!("T={}\nN={}\nK={}\nP={}\n", self.t, self.n, self.k, self.p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesFormat {
    #[default]
    F64,
    Csv,
}

fn read_series_bin(path: &Path, t: usize, n: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    if bytes.len() != t * n * 8 {
        return Err(CliError::Data(format!(
            "{}: expected {} bytes for T×N = {t}×{n} doubles, found {}",
            path.display(),
            t * n * 8,
            bytes.len()
        )));
    }
    let y: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(CliError::Data(format!(
            "{}: non-finite value at time {}, voxel {}",
            path.display(),
            i / n,
            i % n
        )));
    }
    Ok(y)
}

fn read_series_csv(path: &Path, t: usize, n: usize) -> Result<Vec<f64>> {
    let text = read_text(path)?;
    let mut y = Vec::with_capacity(t * n);
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<&str> = line.split(',').collect();
        if vals.len() != n {
            return Err(CliError::parse(path, i + 1, format!("expected {n} columns, found {}", vals.len())));
        }
        for v in vals {
            y.push(parse_f64(path, i + 1, v)?);
        }
        rows += 1;
    }
    if rows != t {
        return Err(CliError::parse(path, text.lines().count(), format!("expected {t} rows, found {rows}")));
    }
    Ok(y)
}

/// A loaded dataset bundle.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub dir: PathBuf,
    pub mask: Mask,
    pub design: Design,
    pub data: Dataset,
    /// Files the dataset was read from, for hashing.
    pub files: Vec<PathBuf>,
}

impl Bundle {
    pub fn is_bundle(dir: &Path) -> bool {
        dir.join(META).is_file()
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(META);
        let meta = Meta::read(&meta_path)?;
        let mask_path = dir.join(MASK);
        let mask = read_mask(&mask_path)?;
        let design_path = dir.join(DESIGN);
        let design = Design::read(&design_path)?;
        if mask.n_voxels() != meta.n {
            return Err(CliError::Data(format!(
                "{}: mask has {} voxels but meta says N = {}",
                dir.display(),
                mask.n_voxels(),
                meta.n
            )));
        }
        if design.k() != meta.k || design.t != meta.t {
            return Err(CliError::Data(format!(
                "{}: design is {}×{} but meta says T×K = {}×{}",
                design_path.display(),
                design.t,
                design.k(),
                meta.t,
                meta.k
            )));
        }
        let bin = dir.join(SERIES_BIN);
        let (series_path, y) = if bin.is_file() {
            let y = read_series_bin(&bin, meta.t, meta.n)?;
            (bin, y)
        } else {
            let csv = dir.join(SERIES_CSV);
            if !csv.is_file() {
                return Err(CliError::Data(format!("{}: no {SERIES_BIN} or {SERIES_CSV}", dir.display())));
            }
            let y = read_series_csv(&csv, meta.t, meta.n)?;
            (csv, y)
        };
        let data = Dataset::new(y, design.x.clone(), meta.t, meta.n, meta.k, meta.p)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            mask,
            design,
            data,
            files: vec![meta_path, mask_path, design_path, series_path],
        })
    }
}

pub fn write_bundle(dir: &Path, mask: &Mask, design: &Design, data: &Dataset, format: SeriesFormat) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let meta = Meta {
        t: data.t(),
        n: data.n(),
        k: data.k(),
        p: data.p(),
    };
    write_text(&dir.join(META), &meta.text())?;
    write_text(&dir.join(MASK), &mask_text(mask))?;
    write_text(&dir.join(DESIGN), &design.to_csv())?;
    match format {
        SeriesFormat::F64 => {
            let mut bytes = Vec::with_capacity(data.series().len() * 8);
            for v in data.series() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            let path = dir.join(SERIES_BIN);
            fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        }
        SeriesFormat::Csv => {
            let mut s = String::new();
            for row in data.series().chunks(data.n()) {
                s.push_str(&row.iter().map(|v| fmt(*v)).collect::<Vec<_>>().join(","));
                s.push('\n');
            }
            write_text(&dir.join(SERIES_CSV), &s)?;
        }
    }
    Ok(())
}

/// `voxel,parameter,value` rows for `W1..WK`, `A1..AP` and `lambda`.
pub fn truth_csv(truth: &GroundTruth) -> String {
    let mut s = String::from("voxel,parameter,value\n");
    for k in 0..truth.k {
        for (v, x) in truth.w_row(k).iter().enumerate() {
            s.push_str(&format!("{v},W{},{}\n", k + 1, fmt(*x)));
        }
    }
    for p in 0..truth.p {
        for (v, x) in truth.a_row(p).iter().enumerate() {
            s.push_str(&format!("{v},A{},{}\n", p + 1, fmt(*x)));
        }
    }
    for (v, x) in truth.lambda.iter().enumerate() {
        s.push_str(&format!("{v},lambda,{}\n", fmt(*x)));
    }
    s
}

pub fn read_truth(path: &Path, meta: &Meta) -> Result<GroundTruth> {
    let text = read_text(path)?;
    let (k, p, n) = (meta.k, meta.p, meta.n);
    let mut w = vec![f64::NAN; k * n];
    let mut a = vec![f64::NAN; p * n];
    let mut lambda = vec![f64::NAN; n];
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(CliError::parse(path, i + 1, "expected voxel,parameter,value"));
        }
        let v = parse_usize(path, i + 1, f[0])?;
        if v >= n {
            return Err(CliError::parse(path, i + 1, format!("voxel {v} out of range (N = {n})")));
        }
        let val = parse_f64(path, i + 1, f[2])?;
        let name = f[1].trim();
        let row = |prefix: &str, limit: usize| -> Option<usize> {
            name.strip_prefix(prefix)
                .and_then(|r| r.parse::<usize>().ok())
                .filter(|r| (1..=limit).contains(r))
                .map(|r| r - 1)
        };
        if let Some(r) = row("W", k) {
            w[r * n + v] = val;
        } else if let Some(r) = row("A", p) {
            a[r * n + v] = val;
        } else if name == "lambda" {
            lambda[v] = val;
        } else {
            return Err(CliError::parse(path, i + 1, format!("unknown parameter {name:?}")));
        }
    }
    if w.iter().chain(&a).chain(&lambda).any(|x| x.is_nan()) {
        return Err(CliError::Data(format!("{}: truth is incomplete", path.display())));
    }
    Ok(GroundTruth {
        w,
        a,
        lambda,
        k,
        p,
        n,
        noise_seed: 0,
        initial_noise: InitialNoise::Stationary,
    })
}

pub fn create_file(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| CliError::io(path, e))
}

pub fn write_all(file: &mut fs::File, path: &Path, bytes: &[u8]) -> Result<()> {
    file.write_all(bytes).map_err(|e| CliError::io(path, e))
}
