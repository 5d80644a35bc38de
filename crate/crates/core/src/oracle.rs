//! Direct time stepping of the graph equation, used as an independent check
//! of the mild construction.
//!
//! Height form: `u_t = −u_xxxx + ∂_x(α(u_x) u_xxx + F(u_x, u_xx))`.
//! Slope form:  `v_t = −v_xxxx + ∂_x²(α(v) v_xx + F(v, v_x))`.
//!
//! The stiff `−∂⁴` is implicit (five-point stencil, one banded solve per step)
//! and the rest explicit with five-point differences, combined in a
//! variable-step second-order IMEX BDF scheme. The two outermost nodes on
//! each side are held at their initial values.

use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::grid::{write_columns, FarField, FarKind, GridFunction, UniformGrid};
use crate::mild::{alpha, lower_order};

pub const MIN_NODES: usize = 512;
/// Upper bound on `α(v)` for which the explicit treatment of the quasilinear
/// part stays stable independently of the step size.
pub const ALPHA_CAP: f64 = 0.25;
const GHOSTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarchConfig {
    pub half_width: f64,
    pub nodes: usize,
    /// first step; steps then grow geometrically
    pub dt_min: f64,
    pub dt_max: f64,
    pub dt_growth: f64,
    pub t_end: f64,
    /// far-field slopes `(left, right)` of the height, used for ghost nodes
    pub slopes: (f64, f64),
    /// corner mollification width in grid spacings
    pub mollify_cells: f64,
    /// snapshot times in `(0, t_end]`; `t_end` is always included
    pub snapshots: Vec<f64>,
}

impl Default for MarchConfig {
    fn default() -> Self {
        Self {
            half_width: 20.0,
            nodes: 2048,
            dt_min: 1e-7,
            dt_max: 1e-3,
            dt_growth: 1.1,
            t_end: 1.0,
            slopes: (0.0, 0.0),
            mollify_cells: 8.0,
            snapshots: Vec::new(),
        }
    }
}

impl MarchConfig {
    pub fn grid(&self) -> Result<UniformGrid> {
        UniformGrid::centered(self.half_width, self.nodes)
    }

    pub fn mollification_width(&self) -> f64 {
        self.mollify_cells * 2.0 * self.half_width / self.nodes as f64
    }

    fn validate(&self) -> Result<()> {
        if self.nodes < MIN_NODES {
            return Err(Error::Config(format!("oracle needs at least {MIN_NODES} nodes, got {}", self.nodes)));
        }
        if !(self.dt_min > 0.0 && self.dt_max >= self.dt_min && self.dt_growth >= 1.0 && self.dt_growth < 2.0) {
            return Err(Error::Config("need 0 < dt_min <= dt_max and 1 <= dt_growth < 2".into()));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidTime(self.t_end));
        }
        if self.snapshots.iter().any(|&t| !(t > 0.0 && t <= self.t_end)) {
            return Err(Error::Config("snapshot times must lie in (0, t_end]".into()));
        }
        Ok(())
    }

    fn stops(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.snapshots.clone();
        s.push(self.t_end);
        s.sort_by(f64::total_cmp);
        s.dedup();
        s
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub state: GridFunction,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub steps: usize,
    pub config: MarchConfig,
}

impl Trajectory {
    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("trajectory always holds the final state")
    }

    pub fn at(&self, t: f64) -> Option<&Snapshot> {
        self.snapshots.iter().find(|s| (s.t - t).abs() <= 1e-12 * t.max(1.0))
    }

    /// One CSV per snapshot plus `manifest.json` listing times and the configuration.
    pub fn write(&self, dir: &Path, column: &str) -> Result<Vec<String>> {
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for (i, s) in self.snapshots.iter().enumerate() {
            let name = format!("snapshot_{i:03}.csv");
            write_columns(&dir.join(&name), &["x", column], &[&s.state.xs, &s.state.ys])?;
            files.push(name);
        }
        let manifest = serde_json::json!({
            "times": self.snapshots.iter().map(|s| s.t).collect::<Vec<_>>(),
            "files": files,
            "steps": self.steps,
            "config": self.config,
        });
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(files)
    }
}

/// Corner `φ_{A,B}` smoothed with a Gaussian of standard deviation `sigma`.
pub fn mollified_corner(a: f64, b: f64, sigma: f64, x: f64) -> f64 {
    let z = x / sigma;
    let cdf = 0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    // E|x + σZ| = x(2Φ(z) − 1) + 2σ ϕ(z)
    let abs = x * (2.0 * cdf - 1.0) + 2.0 * sigma * pdf;
    0.5 * (a - b) * x + 0.5 * (a + b) * abs
}

/// Derivative of [`mollified_corner`].
pub fn mollified_step(a: f64, b: f64, sigma: f64, x: f64) -> f64 {
    -b + (a + b) * 0.5 * (1.0 + erf(x / (sigma * std::f64::consts::SQRT_2)))
}

/// LDLᵀ factorisation of the symmetric pentadiagonal Toeplitz matrix
/// `c I + r Δ²` (five-point `∂⁴` scaled by `r`).
struct Pentadiagonal {
    d: Vec<f64>,
    l1: Vec<f64>,
    l2: Vec<f64>,
}

impl Pentadiagonal {
    fn new(m: usize, c: f64, r: f64) -> Self {
        let (a0, a1, a2) = (c + 6.0 * r, -4.0 * r, r);
        let mut d = vec![0.0; m];
        let mut l1 = vec![0.0; m];
        let mut l2 = vec![0.0; m];
        for i in 0..m {
            let mut di = a0;
            if i >= 1 {
                di -= l1[i - 1] * l1[i - 1] * d[i - 1];
            }
            if i >= 2 {
                di -= l2[i - 2] * l2[i - 2] * d[i - 2];
            }
            d[i] = di;
            let mut e1 = a1;
            if i >= 1 {
                e1 -= l2[i - 1] * l1[i - 1] * d[i - 1];
            }
            l1[i] = e1 / di;
            l2[i] = a2 / di;
        }
        Self { d, l1, l2 }
    }

    fn solve(&self, b: &mut [f64]) {
        let m = b.len();
        for i in 1..m {
            b[i] -= self.l1[i - 1] * b[i - 1];
            if i >= 2 {
                b[i] -= self.l2[i - 2] * b[i - 2];
            }
        }
        for (bi, di) in b.iter_mut().zip(&self.d) {
            *bi /= di;
        }
        for i in (0..m.saturating_sub(1)).rev() {
            b[i] -= self.l1[i] * b[i + 1];
            if i + 2 < m {
                b[i] -= self.l2[i] * b[i + 2];
            }
        }
    }
}

/// Explicit operator on an array padded with `GHOSTS` nodes per side; returns
/// values on the unpadded nodes.
type Explicit = dyn Fn(&[f64], f64) -> Vec<f64> + Sync;

fn central_derivatives(p: &[f64], h: f64, i: usize) -> (f64, f64, f64) {
    let d1 = (p[i - 2] - 8.0 * p[i - 1] + 8.0 * p[i + 1] - p[i + 2]) / (12.0 * h);
    let d2 = (-p[i - 2] + 16.0 * p[i - 1] - 30.0 * p[i] + 16.0 * p[i + 1] - p[i + 2]) / (12.0 * h * h);
    let d3 = (-p[i - 2] + 2.0 * p[i - 1] - 2.0 * p[i + 1] + p[i + 2]) / (2.0 * h * h * h);
    (d1, d2, d3)
}

fn d1_at(q: &[f64], h: f64, i: usize) -> f64 {
    (q[i - 2] - 8.0 * q[i - 1] + 8.0 * q[i + 1] - q[i + 2]) / (12.0 * h)
}

fn d2_at(q: &[f64], h: f64, i: usize) -> f64 {
    (-q[i - 2] + 16.0 * q[i - 1] - 30.0 * q[i] + 16.0 * q[i + 1] - q[i + 2]) / (12.0 * h * h)
}

/// `∂_x(α(u_x) u_xxx + F(u_x, u_xx))` for the height.
fn height_nonlinearity(p: &[f64], h: f64) -> Vec<f64> {
    let np = p.len();
    let mut flux = vec![0.0; np];
    for i in 2..np - 2 {
        let (v, vx, vxx) = central_derivatives(p, h, i);
        flux[i] = alpha(v) * vxx + lower_order(v, vx);
    }
    (GHOSTS..np - GHOSTS).map(|i| d1_at(&flux, h, i)).collect()
}

/// `∂_x²(α(v) v_xx + F(v, v_x))` for the slope.
fn slope_nonlinearity(p: &[f64], h: f64) -> Vec<f64> {
    let np = p.len();
    let mut flux = vec![0.0; np];
    for i in 2..np - 2 {
        let vx = d1_at(p, h, i);
        let vxx = d2_at(p, h, i);
        flux[i] = alpha(p[i]) * vxx + lower_order(p[i], vx);
    }
    (GHOSTS..np - GHOSTS).map(|i| d2_at(&flux, h, i)).collect()
}

fn pad(u: &[f64], h: f64, slopes: (f64, f64)) -> Vec<f64> {
    let n = u.len();
    let mut p = Vec::with_capacity(n + 2 * GHOSTS);
    for g in (1..=GHOSTS).rev() {
        p.push(u[0] - slopes.0 * g as f64 * h);
    }
    p.extend_from_slice(u);
    for g in 1..=GHOSTS {
        p.push(u[n - 1] + slopes.1 * g as f64 * h);
    }
    p
}

fn sup(u: &[f64]) -> f64 {
    u.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

fn march(u0: &[f64], grid: UniformGrid, cfg: &MarchConfig, ghost_slopes: (f64, f64), explicit: &Explicit) -> Result<(Vec<(f64, Vec<f64>)>, usize)> {
    let n = grid.n;
    let h = grid.h;
    let m = n - 4;
    let h4 = h.powi(4);
    let stops = cfg.stops();
    let mut out = Vec::with_capacity(stops.len());
    let mut u = u0.to_vec();
    let mut u_prev: Option<Vec<f64>> = None;
    let mut n_prev: Option<Vec<f64>> = None;
    let mut dt_prev = 0.0;
    let mut t = 0.0;
    let mut steps = 0;
    let mut next_stop = 0;
    let mut dt = cfg.dt_min;
    let mut factor: Option<(f64, f64, Pentadiagonal)> = None;
    while next_stop < stops.len() {
        let target = stops[next_stop];
        let remaining = target - t;
        let mut step = dt;
        let mut hit = false;
        if remaining <= step * (1.0 + 1e-12) {
            step = remaining;
            hit = true;
        } else if remaining < 2.0 * step {
            step = 0.5 * remaining;
        }
        let nl = explicit(&pad(&u, h, ghost_slopes), h);
        let (c, rhs_coef) = match (&u_prev, &n_prev) {
            (Some(_), Some(_)) => {
                let w = step / dt_prev;
                ((1.0 + 2.0 * w) / (1.0 + w), w)
            }
            _ => (1.0, 0.0),
        };
        let r = step / h4;
        let refactor = factor.as_ref().is_none_or(|(fc, fr, _)| *fc != c || *fr != r);
        if refactor {
            factor = Some((c, r, Pentadiagonal::new(m, c, r)));
        }
        let solver = &factor.as_ref().expect("factorisation present").2;
        let mut b = vec![0.0; m];
        let w = rhs_coef;
        for k in 0..m {
            let j = k + 2;
            b[k] = match (&u_prev, &n_prev) {
                (Some(up), Some(np)) => {
                    (1.0 + w) * u[j] - w * w / (1.0 + w) * up[j] + step * ((1.0 + w) * nl[j] - w * np[j])
                }
                _ => u[j] + step * nl[j],
            };
        }
        // fixed boundary nodes enter the five-point stencil of the first/last two unknowns
        b[0] -= r * (u[0] - 4.0 * u[1]);
        b[1] -= r * u[1];
        b[m - 1] -= r * (u[n - 1] - 4.0 * u[n - 2]);
        b[m - 2] -= r * u[n - 2];
        solver.solve(&mut b);
        let mut next = u.clone();
        next[2..n - 2].copy_from_slice(&b);
        steps += 1;
        let before = sup(&u);
        let after = sup(&next);
        if !after.is_finite() || (before > 0.0 && after > 10.0 * before) {
            return Err(Error::OracleInstability { t: t + step, before, after });
        }
        u_prev = Some(std::mem::replace(&mut u, next));
        n_prev = Some(nl);
        dt_prev = step;
        t = if hit { target } else { t + step };
        if hit {
            out.push((t, u.clone()));
            next_stop += 1;
        }
        dt = (step * cfg.dt_growth).min(cfg.dt_max).max(dt.min(step));
    }
    Ok((out, steps))
}

fn check_slopes(max_slope: f64) -> Result<()> {
    if alpha(max_slope) > ALPHA_CAP {
        return Err(Error::Config(format!(
            "slope {max_slope} too large for the explicit quasilinear term (alpha = {:.3} > {ALPHA_CAP})",
            alpha(max_slope)
        )));
    }
    Ok(())
}

/// Marches the height equation from `u0` (sampled on `cfg.grid()`).
pub fn time_march(u0: &GridFunction, cfg: &MarchConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    if !u0.grid().same_as(&grid) {
        return Err(Error::GridMismatch("initial height does not live on the oracle grid".into()));
    }
    let slope = crate::fd::derivative(&u0.ys, grid.h, crate::fd::Stencil::Fourth);
    check_slopes(sup(&slope))?;
    let (snaps, steps) = march(&u0.ys, grid, cfg, cfg.slopes, &height_nonlinearity)?;
    let far = if u0.far.kind == FarKind::Linear { u0.far } else { FarField::linear(cfg.slopes.0, cfg.slopes.1) };
    collect(snaps, steps, grid, far, cfg)
}

/// Marches the slope equation from `v0`.
pub fn derivative_march(v0: &GridFunction, cfg: &MarchConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    if !v0.grid().same_as(&grid) {
        return Err(Error::GridMismatch("initial slope does not live on the oracle grid".into()));
    }
    check_slopes(sup(&v0.ys))?;
    let (snaps, steps) = march(&v0.ys, grid, cfg, (0.0, 0.0), &slope_nonlinearity)?;
    let far = FarField::constant(v0.ys[0], v0.ys[grid.n - 1]).with_tail_tol(f64::INFINITY);
    collect(snaps, steps, grid, far, cfg)
}

fn collect(snaps: Vec<(f64, Vec<f64>)>, steps: usize, grid: UniformGrid, far: FarField, cfg: &MarchConfig) -> Result<Trajectory> {
    let snapshots = snaps
        .into_iter()
        .map(|(t, ys)| Ok(Snapshot { t, state: GridFunction::from_grid(grid, ys, far)? }))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory { snapshots, steps, config: cfg.clone() })
}

/// Mollified corner data on the oracle grid.
pub fn corner_initial_height(a: f64, b: f64, cfg: &MarchConfig) -> Result<GridFunction> {
    let sigma = cfg.mollification_width();
    GridFunction::sample(cfg.grid()?, FarField::linear(-b, a), |x| mollified_corner(a, b, sigma, x))
}

pub fn corner_initial_slope(a: f64, b: f64, cfg: &MarchConfig) -> Result<GridFunction> {
    let sigma = cfg.mollification_width();
    GridFunction::sample(cfg.grid()?, FarField::constant(-b, a), |x| mollified_step(a, b, sigma, x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, t_end: f64) -> MarchConfig {
        MarchConfig { half_width: 10.0, nodes: n, t_end, ..MarchConfig::default() }
    }

    #[test]
    fn pentadiagonal_solver_matches_product() {
        let m = 40;
        let (c, r) = (1.3, 0.7);
        let x: Vec<f64> = (0..m).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut b = vec![0.0; m];
        for i in 0..m {
            let at = |j: isize| if j >= 0 && (j as usize) < m { x[j as usize] } else { 0.0 };
            let i = i as isize;
            b[i as usize] = c * at(i) + r * (at(i - 2) - 4.0 * at(i - 1) + 6.0 * at(i) - 4.0 * at(i + 1) + at(i + 2));
        }
        Pentadiagonal::new(m, c, r).solve(&mut b);
        assert!(b.iter().zip(&x).all(|(a, e)| (a - e).abs() < 1e-12));
    }

    #[test]
    fn lines_are_steady() {
        let c = MarchConfig { slopes: (0.2, 0.2), ..cfg(512, 0.05) };
        let u0 = GridFunction::sample(c.grid().unwrap(), FarField::linear(0.2, 0.2), |x| 0.2 * x).unwrap();
        let tr = time_march(&u0, &c).unwrap();
        let last = tr.last();
        let err = last.state.ys.iter().zip(&u0.ys).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        // roundoff only: the implicit matrix has entries of size dt/h⁴
        assert!(err < 1e-11, "{err}");
        let v0 = GridFunction::sample(c.grid().unwrap(), FarField::constant(0.2, 0.2), |_| 0.2).unwrap();
        let tr = derivative_march(&v0, &c).unwrap();
        assert!(tr.last().state.ys.iter().all(|v| (v - 0.2).abs() < 1e-12));
    }

    #[test]
    fn linear_mode_decays_at_symbol_rate() {
        let c = MarchConfig { half_width: 8.0 * std::f64::consts::PI, nodes: 1024, t_end: 0.5, ..MarchConfig::default() };
        let g = c.grid().unwrap();
        let k = 1.5;
        let u0 = GridFunction::sample(g, FarField::linear(0.0, 0.0), |x| 1e-6 * (k * x).sin()).unwrap();
        let tr = time_march(&u0, &c).unwrap();
        let inner = g.inner_range(0.5);
        let proj = |ys: &[f64]| -> f64 {
            let num: f64 = inner.clone().map(|j| ys[j] * (k * g.x(j)).sin()).sum();
            let den: f64 = inner.clone().map(|j| (k * g.x(j)).sin().powi(2)).sum();
            num / den
        };
        let ratio = proj(&tr.last().state.ys) / proj(&u0.ys);
        let expected = (-k.powi(4) * 0.5).exp();
        assert!((ratio / expected - 1.0).abs() < 1e-2, "{ratio} vs {expected}");
    }

    #[test]
    fn rejects_bad_configs() {
        let c = cfg(256, 1.0);
        let g = UniformGrid::centered(10.0, 256).unwrap();
        let u0 = GridFunction::sample(g, FarField::linear(0.0, 0.0), |_| 0.0).unwrap();
        assert!(matches!(time_march(&u0, &c), Err(Error::Config(_))));
        let c = MarchConfig { slopes: (-2.0, 2.0), ..cfg(512, 0.1) };
        let u0 = corner_initial_height(2.0, 2.0, &c).unwrap();
        assert!(matches!(time_march(&u0, &c), Err(Error::Config(_))));
    }

    #[test]
    fn slope_mass_is_conserved() {
        // L = 20 keeps the oscillatory kernel tail off the clamped ends
        let c = MarchConfig { half_width: 20.0, ..cfg(2048, 0.2) };
        let g = c.grid().unwrap();
        let v0 = GridFunction::sample(g, FarField::constant(0.1, 0.1), |x| 0.1 + 0.05 * (-x * x).exp()).unwrap();
        let tr = derivative_march(&v0, &c).unwrap();
        let mass = |ys: &[f64]| ys.iter().map(|v| v - 0.1).sum::<f64>() * g.h;
        let drift = (mass(&tr.last().state.ys) - mass(&v0.ys)).abs();
        assert!(drift < 1e-6, "{drift}");
        let s0 = v0.ys.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(tr.last().state.ys.iter().all(|v| v.abs() <= 1.1 * s0));
    }

    #[test]
    fn spatial_self_convergence_is_second_order() {
        let run = |n: usize| {
            let c = MarchConfig { half_width: 20.0, nodes: n, t_end: 0.1, ..MarchConfig::default() };
            let v0 = GridFunction::sample(c.grid().unwrap(), FarField::constant(0.0, 0.0), |x| 0.2 * (-x * x).exp()).unwrap();
            derivative_march(&v0, &c).unwrap().last().state.ys.clone()
        };
        let (c, m, f) = (run(512), run(1024), run(2048));
        let diff = |a: &[f64], b: &[f64]| a.iter().enumerate().fold(0.0_f64, |acc, (j, v)| acc.max((v - b[2 * j]).abs()));
        let order = (diff(&c, &m) / diff(&m, &f)).log2();
        assert!(order >= 1.8, "observed order {order}");
    }

    #[test]
    fn mollified_corner_is_consistent() {
        let s = 0.1;
        for &x in &[-1.0, -0.05, 0.0, 0.2, 3.0] {
            let d = (mollified_corner(0.3, 0.2, s, x + 1e-6) - mollified_corner(0.3, 0.2, s, x - 1e-6)) / 2e-6;
            assert!((d - mollified_step(0.3, 0.2, s, x)).abs() < 1e-8);
        }
        assert!((mollified_corner(0.3, 0.2, s, 2.0) - 0.6).abs() < 1e-12);
        assert!((mollified_corner(0.3, 0.2, s, -2.0) - 0.4).abs() < 1e-12);
    }
}
