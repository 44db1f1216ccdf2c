//! Lattice geometry and the spatial kernel.
//!
//! `S` has the fixed diagonal `deg` (4 in 2-D, 6 in 3-D) and `-1` for every
//! axis-adjacent pair of inside voxels. Boundary voxels keep the full `deg`
//! on the diagonal, which makes `S` non-singular. The prior precision
//! structure shared by the `W` and `A` images is `SᵀS`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use crate::error::{Error, Result};

/// Voxel mask on a 2-D or 3-D grid. Voxels are numbered in row-major scan
/// order of the grid (first axis slowest).
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    dims: Vec<usize>,
    inside: Vec<bool>,
    cell_to_voxel: Vec<Option<usize>>,
    voxel_to_cell: Vec<usize>,
}

impl Mask {
    pub fn new(dims: Vec<usize>, inside: Vec<bool>) -> Result<Self> {
        if !(2..=3).contains(&dims.len()) {
            return Err(Error::InvalidMask(format!(
                "expected 2 or 3 grid dimensions, got {}",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidMask(format!("zero extent in dims {dims:?}")));
        }
        let cells: usize = dims.iter().product();
        if inside.len() != cells {
            return Err(Error::LengthMismatch {
                what: "mask cells",
                expected: cells,
                got: inside.len(),
            });
        }
        let mut cell_to_voxel = vec![None; cells];
        let mut voxel_to_cell = Vec::new();
        for (c, &ins) in inside.iter().enumerate() {
            if ins {
                cell_to_voxel[c] = Some(voxel_to_cell.len());
                voxel_to_cell.push(c);
            }
        }
        if voxel_to_cell.is_empty() {
            return Err(Error::EmptyMask);
        }
        Ok(Self {
            dims,
            inside,
            cell_to_voxel,
            voxel_to_cell,
        })
    }

    /// Every cell of the grid inside.
    pub fn full(dims: &[usize]) -> Result<Self> {
        Self::new(dims.to_vec(), vec![true; dims.iter().product()])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn inside(&self) -> &[bool] {
        &self.inside
    }

    pub fn n_voxels(&self) -> usize {
        self.voxel_to_cell.len()
    }

    pub fn voxel_of_cell(&self, cell: usize) -> Option<usize> {
        self.cell_to_voxel.get(cell).copied().flatten()
    }

    pub fn cell_of_voxel(&self, voxel: usize) -> usize {
        self.voxel_to_cell[voxel]
    }

    /// Grid coordinates of a cell, first axis first.
    pub fn coords(&self, cell: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        let mut rem = cell;
        for axis in (0..self.dims.len()).rev() {
            out[axis] = rem % self.dims[axis];
            rem /= self.dims[axis];
        }
        out
    }

    /// Centroid of a voxel in grid units (its grid coordinates).
    pub fn centroid(&self, voxel: usize) -> [f64; 3] {
        let c = self.coords(self.voxel_to_cell[voxel]);
        [c[0] as f64, c[1] as f64, c[2] as f64]
    }

    fn cell_at(&self, coords: [usize; 3]) -> usize {
        let mut cell = 0;
        for axis in 0..self.dims.len() {
            cell = cell * self.dims[axis] + coords[axis];
        }
        cell
    }

    /// Inside voxels that differ from `voxel` by one along exactly one axis,
    /// in increasing voxel order.
    pub fn neighbors(&self, voxel: usize) -> Vec<usize> {
        let c = self.coords(self.voxel_to_cell[voxel]);
        let mut out = Vec::with_capacity(2 * self.dims.len());
        for axis in 0..self.dims.len() {
            if c[axis] > 0 {
                let mut d = c;
                d[axis] -= 1;
                if let Some(v) = self.voxel_of_cell(self.cell_at(d)) {
                    out.push(v);
                }
            }
            if c[axis] + 1 < self.dims[axis] {
                let mut d = c;
                d[axis] += 1;
                if let Some(v) = self.voxel_of_cell(self.cell_at(d)) {
                    out.push(v);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Row-major `len` values per voxel scattered onto the full grid, `fill` outside.
    pub fn to_grid(&self, values: &[f64], fill: f64) -> Vec<f64> {
        let mut grid = vec![fill; self.inside.len()];
        for (v, &c) in self.voxel_to_cell.iter().enumerate() {
            grid[c] = values[v];
        }
        grid
    }
}

/// Compressed sparse row matrix with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_unstable_by_key(|&(c, _)| c);
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        c.binary_search(&j).map(|k| v[k]).unwrap_or(0.0)
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            let mut s = 0.0;
            for (&j, &a) in c.iter().zip(v) {
                s += a * x[j];
            }
            *yi = s;
        }
    }

    pub fn transpose(&self) -> Self {
        let mut rows = vec![Vec::new(); self.n];
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                rows[j].push((i, a));
            }
        }
        Self::from_rows(rows)
    }

    /// Exact sparse product `self · other`.
    pub fn mul(&self, other: &CsrMatrix) -> Self {
        let mut acc = vec![0.0; other.n];
        let mut touched = vec![false; other.n];
        let mut rows = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let mut pattern = Vec::new();
            let (ci, vi) = self.row(i);
            for (&k, &a) in ci.iter().zip(vi) {
                let (ck, vk) = other.row(k);
                for (&j, &b) in ck.iter().zip(vk) {
                    if !touched[j] {
                        touched[j] = true;
                        pattern.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            let mut row = Vec::with_capacity(pattern.len());
            for j in pattern {
                row.push((j, acc[j]));
                acc[j] = 0.0;
                touched[j] = false;
            }
            rows.push(row);
        }
        Self::from_rows(rows)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                d[i * self.n + j] = a;
            }
        }
        d
    }

    /// All stored entries as `(row, col, value)` in row order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(move |(&j, &a)| (i, j, a))
        })
    }
}

/// Envelope (skyline) Cholesky factor of a sparse SPD matrix. Fill-in stays
/// within each row's profile, which is the lattice row width for scan order.
#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    first: Vec<usize>,
    offset: Vec<usize>,
    l: Vec<f64>,
}

impl SkylineCholesky {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.n();
        let mut first = Vec::with_capacity(n);
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for i in 0..n {
            let (c, _) = a.row(i);
            let f = c.first().copied().unwrap_or(i).min(i);
            first.push(f);
            offset.push(offset[i] + (i - f + 1));
        }
        let mut l = vec![0.0; offset[n]];
        for i in 0..n {
            let (c, v) = a.row(i);
            for (&j, &x) in c.iter().zip(v) {
                if j <= i {
                    l[offset[i] + j - first[i]] = x;
                }
            }
        }
        for i in 0..n {
            for j in first[i]..=i {
                let lo = first[i].max(first[j]);
                let mut s = l[offset[i] + j - first[i]];
                for k in lo..j {
                    s -= l[offset[i] + k - first[i]] * l[offset[j] + k - first[j]];
                }
                if j == i {
                    if !(s > 0.0) {
                        return Err(Error::NotPositiveDefinite("skyline cholesky pivot"));
                    }
                    l[offset[i] + i - first[i]] = s.sqrt();
                } else {
                    l[offset[i] + j - first[i]] = s / l[offset[j] + j - first[j]];
                }
            }
        }
        Ok(Self { first, offset, l })
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.l[self.offset[i] + j - self.first[i]]
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.first.len();
        for i in 0..n {
            let mut s = b[i];
            for k in self.first[i]..i {
                s -= self.at(i, k) * b[k];
            }
            b[i] = s / self.at(i, i);
        }
        for i in (0..n).rev() {
            let xi = b[i] / self.at(i, i);
            b[i] = xi;
            for k in self.first[i]..i {
                b[k] -= self.at(i, k) * xi;
            }
        }
    }
}

/// The Laplacian kernel `S` and its Gram matrix `SᵀS`. Immutable once built.
#[derive(Debug, Clone)]
pub struct SpatialKernel {
    deg: u32,
    s: CsrMatrix,
    sts: CsrMatrix,
    sts_diag: Vec<f64>,
}

impl SpatialKernel {
    pub fn build(mask: &Mask, dimensionality: usize) -> Result<Self> {
        if mask.n_voxels() == 0 {
            return Err(Error::EmptyMask);
        }
        if mask.dims().len() != dimensionality {
            return Err(Error::DimensionMismatch {
                dims: mask.dims().len(),
                requested: dimensionality,
            });
        }
        let deg = match dimensionality {
            2 => 4,
            3 => 6,
            d => {
                return Err(Error::DimensionMismatch {
                    dims: mask.dims().len(),
                    requested: d,
                })
            }
        };
        let n = mask.n_voxels();
        let rows = (0..n)
            .map(|v| {
                let mut row = vec![(v, deg as f64)];
                row.extend(mask.neighbors(v).into_iter().map(|u| (u, -1.0)));
                row
            })
            .collect();
        let s = CsrMatrix::from_rows(rows);
        let sts = s.transpose().mul(&s);
        let sts_diag = (0..n).map(|i| sts.get(i, i)).collect();
        Ok(Self {
            deg,
            s,
            sts,
            sts_diag,
        })
    }

    pub fn n(&self) -> usize {
        self.s.n()
    }

    pub fn deg(&self) -> u32 {
        self.deg
    }

    pub fn s(&self) -> &CsrMatrix {
        &self.s
    }

    pub fn sts(&self) -> &CsrMatrix {
        &self.sts
    }

    pub fn sts_diag(&self) -> &[f64] {
        &self.sts_diag
    }

    /// `vᵀ SᵀS v`, computed as `‖S v‖²` over the sparse rows of `S`.
    pub fn quad_form(&self, v: &[f64]) -> Result<f64> {
        if v.len() != self.n() {
            return Err(Error::LengthMismatch {
                what: "image",
                expected: self.n(),
                got: v.len(),
            });
        }
        Ok(self.quad_form_unchecked(v))
    }

    pub(crate) fn quad_form_unchecked(&self, v: &[f64]) -> f64 {
        let mut terms = Vec::with_capacity(self.n());
        for i in 0..self.n() {
            let (c, a) = self.s.row(i);
            let mut r = 0.0;
            for (&j, &x) in c.iter().zip(a) {
                r += x * v[j];
            }
            terms.push(r * r);
        }
        crate::special::pairwise_sum(&terms)
    }

    /// Row `n` of `SᵀS` as `(column, value)` pairs.
    pub fn precision_row(&self, n: usize) -> Result<Vec<(usize, f64)>> {
        if n >= self.n() {
            return Err(Error::IndexOutOfRange { index: n, n: self.n() });
        }
        let (c, v) = self.sts.row(n);
        Ok(c.iter().copied().zip(v.iter().copied()).collect())
    }

    /// `out = SᵀS v`.
    pub fn precision_mul(&self, v: &[f64], out: &mut [f64]) {
        self.sts.mul_vec(v, out);
    }

    /// Factorization of `S` used to draw from `N(0, (SᵀS)⁻¹)`: if `z` is
    /// white noise then `S⁻¹ z` has covariance `S⁻¹S⁻ᵀ = (SᵀS)⁻¹`.
    pub fn factor_s(&self) -> Result<SkylineCholesky> {
        SkylineCholesky::new(&self.s)
    }

    /// Greedy colouring of the `SᵀS` graph in scan order: voxels of one
    /// colour share no nonzero precision entry.
    pub fn precision_coloring(&self) -> Vec<usize> {
        let n = self.n();
        let mut color = vec![usize::MAX; n];
        let mut used = Vec::new();
        for i in 0..n {
            used.clear();
            let (c, _) = self.sts.row(i);
            for &j in c {
                if j != i && color[j] != usize::MAX {
                    used.push(color[j]);
                }
            }
            let mut k = 0;
            while used.contains(&k) {
                k += 1;
            }
            color[i] = k;
        }
        color
    }
}
