//! The biharmonic heat semigroup `e^{-t ∂_x^4}` on the line.
//!
//! The kernel is `t^{-1/4} g(x t^{-1/4})` with
//! `g(η) = (1/π) ∫_0^∞ e^{-k^4} cos(kη) dk`. The profile `g` and its first
//! four derivatives are tabulated once on `[0, eta_max]` and interpolated by
//! cubic Hermite splines; every time `t` is reached by rescaling the argument.

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{write_columns, FarField, FarKind, GridFunction, UniformGrid};
use crate::quadrature::adaptive_gk;
use crate::spectral::PaddedFft;

/// Upper limit of the Fourier integrals; `e^{-k^4}` underflows beyond it.
const K_MAX: f64 = 6.0;
/// Derivative orders tabulated (one more than exposed, for Hermite interpolation).
const ORDERS: usize = 5;
/// Decay rate used for the a-posteriori envelope check, below the asymptotic
/// `3 · 2^{-11/3} ≈ 0.236`.
pub const ENVELOPE_RATE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub eta_max: f64,
    pub n_nodes: usize,
    pub quad_tol: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { eta_max: 40.0, n_nodes: 8192, quad_tol: 1e-14 }
    }
}

/// Tabulated biharmonic heat kernel profile.
#[derive(Debug, Clone)]
pub struct KernelTable {
    pub eta_max: f64,
    pub n_nodes: usize,
    pub d_eta: f64,
    /// `g_ell[l][i] = ∂^l g(i d_eta)` for `l = 0..=4`
    pub g_ell: Vec<Vec<f64>>,
    /// `G(η) = ∫_{-∞}^{η} g`
    pub big_g: Vec<f64>,
    /// `M(η) = ∫ g(η - w) |w| dw`, the kernel applied to `|x|`
    pub abs_moment: Vec<f64>,
    /// `g_env` such that `|g(η)| ≤ g_env exp(-ENVELOPE_RATE |η|^{4/3})`
    pub envelope: f64,
}

impl KernelTable {
    pub fn build(cfg: KernelConfig) -> Result<Self> {
        build_kernel_table(cfg.eta_max, cfg.n_nodes, cfg.quad_tol)
    }
}

/// Tabulates `∂^l g` for `l = 0..=4` by adaptive quadrature of
/// `(1/π) ∫_0^∞ k^l e^{-k^4} cos(kη + lπ/2) dk`, then integrates `G` and `M`
/// cumulatively with the endpoint-corrected trapezoid rule (exact derivative
/// data are available).
pub fn build_kernel_table(eta_max: f64, n_nodes: usize, quad_tol: f64) -> Result<KernelTable> {
    if !(eta_max >= 15.0 && eta_max.is_finite()) {
        return Err(Error::Config(format!("eta_max = {eta_max} must be at least 15")));
    }
    if n_nodes < 2048 {
        return Err(Error::Config(format!("n_nodes = {n_nodes} must be at least 2048")));
    }
    if !(quad_tol > 0.0) {
        return Err(Error::Config(format!("quad_tol = {quad_tol} must be positive")));
    }
    let d_eta = eta_max / (n_nodes - 1) as f64;
    let rows: Vec<Result<[f64; ORDERS]>> = (0..n_nodes)
        .into_par_iter()
        .map(|i| {
            let eta = i as f64 * d_eta;
            let mut row = [0.0; ORDERS];
            for (l, slot) in row.iter_mut().enumerate() {
                let shift = l as f64 * 0.5 * PI;
                let integrand = |k: f64| k.powi(l as i32) * (-(k * k) * (k * k)).exp() * (k * eta + shift).cos();
                let v = adaptive_gk(integrand, 0.0, K_MAX, quad_tol * PI, 200_000)
                    .ok_or(Error::KernelQuadratureFailure { eta, order: l })?;
                *slot = v / PI;
            }
            Ok(row)
        })
        .collect();
    let mut g_ell = vec![vec![0.0; n_nodes]; ORDERS];
    for (i, row) in rows.into_iter().enumerate() {
        let row = row?;
        for l in 0..ORDERS {
            g_ell[l][i] = row[l];
        }
    }
    // enforce parity at the origin
    for (l, col) in g_ell.iter_mut().enumerate() {
        if l % 2 == 1 {
            col[0] = 0.0;
        }
    }

    let hermite_step = |f0: f64, f1: f64, d0: f64, d1: f64| 0.5 * d_eta * (f0 + f1) + d_eta * d_eta / 12.0 * (d0 - d1);
    let mut big_g = vec![0.5; n_nodes];
    for i in 1..n_nodes {
        big_g[i] = big_g[i - 1] + hermite_step(g_ell[0][i - 1], g_ell[0][i], g_ell[1][i - 1], g_ell[1][i]);
    }
    // K(η) = ∫_0^η (G - 1/2), M = m1 + 2K with m1 fixed so that M(eta_max) = eta_max
    let mut k_int = vec![0.0; n_nodes];
    for i in 1..n_nodes {
        k_int[i] = k_int[i - 1] + hermite_step(big_g[i - 1] - 0.5, big_g[i] - 0.5, g_ell[0][i - 1], g_ell[0][i]);
    }
    let m1 = eta_max - 2.0 * k_int[n_nodes - 1];
    let abs_moment = k_int.iter().map(|k| m1 + 2.0 * k).collect();

    let envelope = (0..n_nodes)
        .filter(|&i| g_ell[0][i].abs() > 1e-13)
        .map(|i| {
            let eta = i as f64 * d_eta;
            g_ell[0][i].abs() * (ENVELOPE_RATE * eta.powf(4.0 / 3.0)).exp()
        })
        .fold(0.0_f64, f64::max);

    Ok(KernelTable { eta_max, n_nodes, d_eta, g_ell, big_g, abs_moment, envelope })
}

impl KernelTable {
    fn hermite(&self, f: &[f64], df: &[f64], eta: f64) -> f64 {
        let u = eta / self.d_eta;
        let i = (u.floor() as usize).min(self.n_nodes - 2);
        let t = u - i as f64;
        let h = self.d_eta;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * f[i] + h10 * h * df[i] + h01 * f[i + 1] + h11 * h * df[i + 1]
    }

    /// `∂^l g(η)` for `l = 0..=3`; zero beyond `eta_max`.
    pub fn g(&self, l: usize, eta: f64) -> f64 {
        assert!(l < ORDERS - 1, "derivative order {l} not tabulated");
        let a = eta.abs();
        if a >= self.eta_max {
            return 0.0;
        }
        let v = self.hermite(&self.g_ell[l], &self.g_ell[l + 1], a);
        if eta < 0.0 && l % 2 == 1 {
            -v
        } else {
            v
        }
    }

    /// `G(η) = ∫_{-∞}^η g`.
    pub fn big_g(&self, eta: f64) -> f64 {
        let a = eta.abs();
        let v = if a >= self.eta_max { 1.0 } else { self.hermite(&self.big_g, &self.g_ell[0], a) };
        if eta < 0.0 {
            1.0 - v
        } else {
            v
        }
    }

    /// `M(η) = ∫ g(η - w)|w| dw`; equals `|η|` beyond the table.
    pub fn abs_moment(&self, eta: f64) -> f64 {
        let a = eta.abs();
        if a >= self.eta_max {
            return a;
        }
        // Hermite data from M' = 2G - 1
        let u = a / self.d_eta;
        let i = (u.floor() as usize).min(self.n_nodes - 2);
        let t = u - i as f64;
        let h = self.d_eta;
        let (t2, t3) = (t * t, t * t * t);
        let d0 = 2.0 * self.big_g[i] - 1.0;
        let d1 = 2.0 * self.big_g[i + 1] - 1.0;
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.abs_moment[i]
            + (t3 - 2.0 * t2 + t) * h * d0
            + (-2.0 * t3 + 3.0 * t2) * self.abs_moment[i + 1]
            + (t3 - t2) * h * d1
    }

    /// `∫ g` over the table (both halves).
    pub fn mass(&self) -> f64 {
        2.0 * (self.big_g[self.n_nodes - 1] - 0.5)
    }

    /// `∫ |∂^l g|`, the `L^∞ → L^∞` norm of `∂^l e^{-∂^4}`.
    pub fn operator_norm(&self, l: usize) -> f64 {
        let abs: Vec<f64> = self.g_ell[l].iter().map(|v| v.abs()).collect();
        2.0 * crate::fd::simpson(&abs, self.d_eta)
    }

    /// Writes `eta,g0,g1,g2,g3,G` on the full symmetric range.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let n = self.n_nodes;
        let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(2 * n - 1); 6];
        for i in (1 - n as isize)..(n as isize) {
            let eta = i as f64 * self.d_eta;
            let j = i.unsigned_abs();
            cols[0].push(eta);
            for l in 0..4 {
                let v = self.g_ell[l][j];
                cols[l + 1].push(if i < 0 && l % 2 == 1 { -v } else { v });
            }
            cols[5].push(if i < 0 { 1.0 - self.big_g[j] } else { self.big_g[j] });
        }
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        write_columns(path, &["eta", "g0", "g1", "g2", "g3", "G"], &refs)
    }
}

/// Closed form `g(0) = Γ(5/4)/π`.
pub fn g_at_origin() -> f64 {
    statrs::function::gamma::gamma(1.25) / std::f64::consts::PI
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTime(t))
    }
}

/// Output far field carrying the observed end mismatch as its tolerance.
pub(crate) fn observed_far(ys: &[f64], left: f64, right: f64, floor: f64) -> FarField {
    let n = ys.len();
    let tol = (ys[0] - left).abs().max((ys[n - 1] - right).abs()).max(floor);
    FarField::constant(left, right).with_tail_tol(tol * (1.0 + 1e-12))
}

/// `∂^l e^{-t∂^4}` applied to the step `-B (x<0)`, `A (x>0)`, sampled on `grid`.
pub fn apply_to_step(a: f64, b: f64, t: f64, ell: usize, table: &KernelTable, grid: UniformGrid) -> Result<GridFunction> {
    check_time(t)?;
    let ys = step_values(a, b, t, ell, table, &grid.xs());
    let far = if ell == 0 { observed_far(&ys, -b, a, 1e-6) } else { observed_far(&ys, 0.0, 0.0, 1e-6) };
    GridFunction::from_grid(grid, ys, far)
}

pub(crate) fn step_values(a: f64, b: f64, t: f64, ell: usize, table: &KernelTable, xs: &[f64]) -> Vec<f64> {
    let scale = t.powf(-0.25);
    if ell == 0 {
        xs.iter().map(|&x| -b + (a + b) * table.big_g(x * scale)).collect()
    } else {
        let amp = (a + b) * scale.powi(ell as i32);
        xs.iter().map(|&x| amp * table.g(ell - 1, x * scale)).collect()
    }
}

/// `e^{-t∂^4} φ_{A,B}` for the corner `φ_{A,B}(x) = Ax (x ≥ 0)`, `-Bx (x < 0)`.
pub fn corner_values(a: f64, b: f64, t: f64, table: &KernelTable, xs: &[f64]) -> Vec<f64> {
    let r = t.powf(0.25);
    xs.iter().map(|&x| 0.5 * (a - b) * x + 0.5 * (a + b) * r * table.abs_moment(x / r)).collect()
}

/// How the compactly supported remainder is convolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvolutionMethod {
    /// Fourier multiplier on the zero-padded grid.
    #[default]
    Spectral,
    /// Trapezoidal quadrature against the tabulated kernel, `O(N^2)`.
    Direct,
}

/// Time of the smooth reference step subtracted before convolving.
const REFERENCE_TIME: f64 = 1.0;

/// `∂^l e^{-t∂^4} f` for `f` with constant far fields.
///
/// `f` is split into the smooth reference step `e^{-∂^4}(step)` joining its two
/// far-field constants, whose evolution is exact through the kernel table, plus
/// a decaying remainder that is convolved numerically.
pub fn apply_semigroup(f: &GridFunction, t: f64, ell: usize, table: &KernelTable) -> Result<GridFunction> {
    apply_semigroup_with(f, t, ell, table, ConvolutionMethod::Spectral)
}

pub fn apply_semigroup_with(
    f: &GridFunction,
    t: f64,
    ell: usize,
    table: &KernelTable,
    method: ConvolutionMethod,
) -> Result<GridFunction> {
    check_time(t)?;
    if ell > 3 {
        return Err(Error::Config(format!("derivative order {ell} not supported (0..=3)")));
    }
    if f.far.kind != FarKind::Constant {
        return Err(Error::UnsupportedFarField(
            "semigroup input must have constant far fields (slope fields only)".into(),
        ));
    }
    let (lo, hi) = (f.far.left, f.far.right);
    // reference step L + (R - L) G(x); in step notation A = R, B = -L
    let reference = step_values(hi, -lo, REFERENCE_TIME, 0, table, &f.xs);
    let remainder: Vec<f64> = f.ys.iter().zip(&reference).map(|(y, r)| y - r).collect();
    let evolved_ref = step_values(hi, -lo, REFERENCE_TIME + t, ell, table, &f.xs);
    let conv = match method {
        ConvolutionMethod::Spectral => PaddedFft::new(f.grid()).apply(&remainder, t, ell),
        ConvolutionMethod::Direct => direct_convolution(&remainder, f.grid(), t, ell, table),
    };
    let ys: Vec<f64> = evolved_ref.iter().zip(&conv).map(|(a, b)| a + b).collect();
    let far = if ell == 0 {
        observed_far(&ys, lo, hi, f.far.tail_tol)
    } else {
        observed_far(&ys, 0.0, 0.0, f.far.tail_tol)
    };
    GridFunction::new(f.xs.clone(), ys, far)
}

fn direct_convolution(r: &[f64], grid: UniformGrid, t: f64, ell: usize, table: &KernelTable) -> Vec<f64> {
    let scale = t.powf(-0.25);
    let pref = scale.powi(ell as i32 + 1) * grid.h;
    let n = grid.n;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = grid.x(i);
            let mut acc = 0.0;
            for (j, &rj) in r.iter().enumerate() {
                if rj == 0.0 {
                    continue;
                }
                let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
                acc += w * rj * table.g(ell, (xi - grid.x(j)) * scale);
            }
            acc * pref
        })
        .collect()
}

/// One semigroup evaluation in a batch.
#[derive(Debug, Clone)]
pub struct SemigroupApplication {
    pub t: f64,
    pub ell: usize,
    pub output: GridFunction,
}

/// Applies `∂^l e^{-t∂^4}` for several times in parallel.
pub fn apply_batch(f: &GridFunction, times: &[f64], ell: usize, table: &KernelTable) -> Result<Vec<SemigroupApplication>> {
    times
        .par_iter()
        .map(|&t| apply_semigroup(f, t, ell, table).map(|output| SemigroupApplication { t, ell, output }))
        .collect()
}

/// Least-squares fit of `log sup|∂^l e^{-t∂^4} step|` against `log t`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RegularizingFit {
    pub ell: usize,
    pub exponent: f64,
    /// `exp(intercept)`: the sup norm at `t = 1`
    pub constant: f64,
}

/// Fits the decay exponent of `∂^l e^{-t∂^4}` on the unit step over `t_range`
/// (log-spaced samples, evaluated on `grid`).
pub fn regularizing_constants(
    table: &KernelTable,
    ell: usize,
    t_range: (f64, f64),
    samples: usize,
    grid: UniformGrid,
) -> Result<RegularizingFit> {
    let (t0, t1) = t_range;
    check_time(t0)?;
    check_time(t1)?;
    if samples < 3 || t1 <= t0 {
        return Err(Error::Config("need at least three samples on a non-empty time range".into()));
    }
    let xs = grid.xs();
    let pts: Vec<(f64, f64)> = (0..samples)
        .map(|i| {
            let lt = t0.ln() + (t1.ln() - t0.ln()) * i as f64 / (samples - 1) as f64;
            let t = lt.exp();
            let sup = step_values(1.0, 0.0, t, ell, table, &xs).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            (lt, sup.ln())
        })
        .collect();
    let (slope, intercept) = linear_fit(&pts);
    Ok(RegularizingFit { ell, exponent: slope, constant: intercept.exp() })
}

/// Ordinary least squares `y = slope x + intercept`.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
