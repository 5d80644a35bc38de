//! Uniformly sampled real functions with declared far-field behaviour.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of nodes accepted for a grid function.
pub const MIN_NODES: usize = 16;

/// Which quantity is asymptotically constant at ±∞.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FarKind {
    /// The values tend to `left_far` / `right_far`.
    Constant,
    /// The slopes tend to `left_far` / `right_far`.
    Linear,
}

/// Far-field descriptor carried next to the samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FarField {
    pub kind: FarKind,
    pub left: f64,
    pub right: f64,
    /// Admissible mismatch between the end samples and the declared constants.
    pub tail_tol: f64,
}

impl FarField {
    pub fn constant(left: f64, right: f64) -> Self {
        Self { kind: FarKind::Constant, left, right, tail_tol: 1e-6 }
    }

    pub fn linear(left_slope: f64, right_slope: f64) -> Self {
        Self { kind: FarKind::Linear, left: left_slope, right: right_slope, tail_tol: f64::INFINITY }
    }

    pub fn with_tail_tol(mut self, tol: f64) -> Self {
        self.tail_tol = tol;
        self
    }
}

/// A uniform 1-D grid `x_j = x0 + j h`, `j = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub x0: f64,
    pub h: f64,
    pub n: usize,
}

impl UniformGrid {
    pub fn new(x0: f64, h: f64, n: usize) -> Result<Self> {
        if n < MIN_NODES {
            return Err(Error::InvalidGrid(format!("{n} nodes, need at least {MIN_NODES}")));
        }
        if !(h > 0.0 && h.is_finite() && x0.is_finite()) {
            return Err(Error::InvalidGrid(format!("spacing {h} / origin {x0}")));
        }
        Ok(Self { x0, h, n })
    }

    /// `n` nodes on `[-half_width, half_width)` with `x = 0` at index `n / 2`.
    ///
    /// `n` must be even so the origin is a node and the node count is FFT friendly.
    pub fn centered(half_width: f64, n: usize) -> Result<Self> {
        if n % 2 != 0 {
            return Err(Error::InvalidGrid(format!("centered grids need an even node count, got {n}")));
        }
        let h = 2.0 * half_width / n as f64;
        Self::new(-(n as f64 / 2.0) * h, h, n)
    }

    #[inline]
    pub fn x(&self, j: usize) -> f64 {
        self.x0 + j as f64 * self.h
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.n - 1)
    }

    /// Index of the node at `x = 0`, if any.
    pub fn origin_index(&self) -> Option<usize> {
        let j = (-self.x0 / self.h).round();
        if j < 0.0 || j >= self.n as f64 {
            return None;
        }
        let j = j as usize;
        (self.x(j).abs() <= 1e-9 * self.h).then_some(j)
    }

    /// Nodes whose abscissa lies in the central `fraction` of the interval.
    pub fn inner_range(&self, fraction: f64) -> std::ops::Range<usize> {
        let mid = 0.5 * (self.x0 + self.x_max());
        let half = 0.5 * fraction * (self.x_max() - self.x0);
        let lo = (0..self.n).find(|&j| self.x(j) >= mid - half - 1e-12).unwrap_or(0);
        let hi = (0..self.n).rev().find(|&j| self.x(j) <= mid + half + 1e-12).unwrap_or(self.n - 1);
        lo..hi + 1
    }

    pub fn same_as(&self, other: &UniformGrid) -> bool {
        self.n == other.n
            && (self.h - other.h).abs() <= 1e-12 * self.h
            && (self.x0 - other.x0).abs() <= 1e-9 * self.h
    }
}

/// Real-valued function sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub far: FarField,
    grid: UniformGrid,
}

impl GridFunction {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, far: FarField) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::InvalidGrid(format!("{} abscissae vs {} values", xs.len(), ys.len())));
        }
        if xs.len() < MIN_NODES {
            return Err(Error::InvalidGrid(format!("{} nodes, need at least {MIN_NODES}", xs.len())));
        }
        let n = xs.len();
        let h = (xs[n - 1] - xs[0]) / (n - 1) as f64;
        if !(h > 0.0) {
            return Err(Error::InvalidGrid("abscissae must be strictly increasing".into()));
        }
        for (j, &x) in xs.iter().enumerate() {
            let expected = xs[0] + j as f64 * h;
            if (x - expected).abs() > 1e-7 * h {
                return Err(Error::InvalidGrid(format!("non-uniform spacing at node {j}")));
            }
        }
        if let Some(j) = ys.iter().position(|y| !y.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite value at node {j}")));
        }
        let grid = UniformGrid::new(xs[0], h, n)?;
        let out = Self { xs, ys, far, grid };
        out.check_tails()?;
        Ok(out)
    }

    pub fn from_grid(grid: UniformGrid, ys: Vec<f64>, far: FarField) -> Result<Self> {
        Self::new(grid.xs(), ys, far)
    }

    pub fn sample(grid: UniformGrid, far: FarField, f: impl Fn(f64) -> f64) -> Result<Self> {
        let ys = (0..grid.n).map(|j| f(grid.x(j))).collect();
        Self::from_grid(grid, ys, far)
    }

    fn check_tails(&self) -> Result<()> {
        if self.far.kind == FarKind::Constant {
            let n = self.ys.len();
            let dl = (self.ys[0] - self.far.left).abs();
            let dr = (self.ys[n - 1] - self.far.right).abs();
            if dl > self.far.tail_tol || dr > self.far.tail_tol {
                return Err(Error::InvalidGrid(format!(
                    "end samples miss declared far field by {dl:e} / {dr:e} (tail tolerance {:e})",
                    self.far.tail_tol
                )));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> UniformGrid {
        self.grid
    }

    pub fn h(&self) -> f64 {
        self.grid.h
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    /// Same grid, new values and far field.
    pub fn with_values(&self, ys: Vec<f64>, far: FarField) -> Result<Self> {
        Self::new(self.xs.clone(), ys, far)
    }

    pub fn sup_norm_on(&self, range: std::ops::Range<usize>) -> f64 {
        self.ys[range].iter().fold(0.0_f64, |m, y| m.max(y.abs()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_columns(path, &["x", "y"], &[&self.xs, &self.ys])
    }

    /// Writes `path` (CSV, header `x,y`) and `path.json` with the far-field metadata.
    pub fn write_with_sidecar(&self, path: &Path) -> Result<()> {
        self.write_csv(path)?;
        let side = sidecar_path(path);
        let mut f = File::create(side)?;
        f.write_all(serde_json::to_string_pretty(&self.far)?.as_bytes())?;
        Ok(())
    }

    /// Reads a CSV with two numeric columns; the far field comes from the JSON
    /// sidecar when present, otherwise it is inferred as linear from the end slopes.
    pub fn read_with_sidecar(path: &Path) -> Result<Self> {
        let (xs, ys) = read_two_columns(path)?;
        let side = sidecar_path(path);
        let far = if side.exists() {
            let mut s = String::new();
            File::open(side)?.read_to_string(&mut s)?;
            serde_json::from_str(&s)?
        } else {
            let n = xs.len();
            if n < 2 {
                return Err(Error::Malformed("fewer than two rows".into()));
            }
            let sl = (ys[1] - ys[0]) / (xs[1] - xs[0]);
            let sr = (ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2]);
            FarField::linear(sl, sr)
        };
        Self::new(xs, ys, far).map_err(|e| Error::Malformed(e.to_string()))
    }
}

pub(crate) fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    p.into()
}

/// Writes equally long columns under the given header; values use the shortest
/// round-trip representation so output is deterministic.
pub fn write_columns(path: &Path, header: &[&str], cols: &[&[f64]]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    let n = cols.first().map_or(0, |c| c.len());
    let mut rec = Vec::with_capacity(cols.len());
    for i in 0..n {
        rec.clear();
        rec.extend(cols.iter().map(|c| format!("{:?}", c[i])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the first two columns of a headed numeric CSV.
pub fn read_two_columns(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut r = csv::Reader::from_path(path)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(Error::Malformed(format!("row {} has {} fields", i + 1, rec.len())));
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Malformed(format!("row {}: cannot parse {s:?}", i + 1)))
        };
        xs.push(parse(&rec[0])?);
        ys.push(parse(&rec[1])?);
    }
    Ok((xs, ys))
}
