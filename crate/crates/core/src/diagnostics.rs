//! Identities, inequalities and growth functionals for candidate profile curves.
//!
//! Every check works on a [`CurveGeometry`], so computed profiles, analytic
//! test graphs and user-supplied samples are treated alike. Sup norms are taken
//! over interior nodes only: the inner 80% of the grid, away from boundary and
//! kink stencils.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::fd::{self, Stencil};
use crate::grid::{write_columns, FarField, FarKind, GridFunction, UniformGrid};
use crate::mild::{self, SimilarityProfile};
use crate::quadrature::GaussJacobi;
use crate::semigroup::{linear_fit, KernelTable};
use crate::surface_calculus::{geometry_with, ClosedCurve, CurveGeometry};

/// Interior nodes for quantities involving `levels` nested arclength derivatives.
pub fn interior(geom: &CurveGeometry, levels: usize) -> Vec<usize> {
    let n = geom.len();
    let cut = ((n as f64) * 0.1).floor() as usize;
    let r = geom.reliable(levels);
    (r.start.max(cut)..r.end.min(n - cut)).filter(|&i| !geom.near_kink(i, levels)).collect()
}

fn sup_on(ys: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| ys[i].abs()).fold(0.0_f64, f64::max)
}

fn field(geom: &CurveGeometry, ys: Vec<f64>) -> Result<GridFunction> {
    geom.grid_function(ys)
}

fn curvature_sq(geom: &CurveGeometry) -> Vec<f64> {
    geom.curvature.iter().map(|k| k * k).collect()
}

/// `∂_s²(k² + |x|²/4) − 1/2 − 2(∂_s k)²`; vanishes on forward profiles.
pub fn key_identity_residual(geom: &CurveGeometry) -> Result<GridFunction> {
    let ks = geom.ds(&geom.curvature);
    let f: Vec<f64> = curvature_sq(geom).iter().zip(geom.radius_sq()).map(|(k2, r2)| k2 + 0.25 * r2).collect();
    let lhs = geom.ds2(&f);
    field(geom, (0..geom.len()).map(|i| lhs[i] - 0.5 - 2.0 * ks[i] * ks[i]).collect())
}

/// `∂_s²(k² − |x|²/4) + 1/2 − 2(∂_s k)²`; vanishes on backward profiles.
pub fn backward_identity_residual(geom: &CurveGeometry) -> Result<GridFunction> {
    let ks = geom.ds(&geom.curvature);
    let f: Vec<f64> = curvature_sq(geom).iter().zip(geom.radius_sq()).map(|(k2, r2)| k2 - 0.25 * r2).collect();
    let lhs = geom.ds2(&f);
    field(geom, (0..geom.len()).map(|i| lhs[i] + 0.5 - 2.0 * ks[i] * ks[i]).collect())
}

/// `(φ − xφ')/(4v) + ∂_s² k`; vanishes on forward profiles.
pub fn profile_equation_residual(geom: &CurveGeometry) -> Result<GridFunction> {
    let kss = geom.ds2(&geom.curvature);
    field(geom, (0..geom.len()).map(|i| 0.25 * geom.normal_coord[i] + kss[i]).collect())
}

/// Comparison function used in the convexity argument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QVariant {
    /// `k² + ¼{|x|² − s² + φ(0)² − 2αs − 2β}`
    Family { alpha: f64, beta: f64 },
    /// `k² + |x|²/4 − ¼(s + |φ(0)|)²`
    Growth,
}

#[derive(Debug, Clone)]
pub struct QConvexity {
    pub q: GridFunction,
    pub d2q: GridFunction,
    /// `2(∂_s k)²`
    pub slope_term: GridFunction,
    pub min_d2q: f64,
    /// `max|∂_s²Q − 2(∂_s k)²|` over interior nodes
    pub max_defect: f64,
}

pub fn q_function(geom: &CurveGeometry, variant: QVariant) -> Vec<f64> {
    let p0 = geom.phi[geom.origin];
    let r2 = geom.radius_sq();
    (0..geom.len())
        .map(|i| {
            let k = geom.curvature[i];
            let s = geom.arclength[i];
            match variant {
                QVariant::Family { alpha, beta } => {
                    k * k + 0.25 * (r2[i] - s * s + p0 * p0 - 2.0 * alpha * s - 2.0 * beta)
                }
                QVariant::Growth => k * k + 0.25 * r2[i] - 0.25 * (s + p0.abs()).powi(2),
            }
        })
        .collect()
}

pub fn q_convexity(geom: &CurveGeometry, variant: QVariant) -> Result<QConvexity> {
    let q = q_function(geom, variant);
    let d2q = geom.ds2(&q);
    let ks = geom.ds(&geom.curvature);
    let slope_term: Vec<f64> = ks.iter().map(|v| 2.0 * v * v).collect();
    let idx = interior(geom, 2);
    let min_d2q = idx.iter().map(|&i| d2q[i]).fold(f64::INFINITY, f64::min);
    let max_defect = idx.iter().map(|&i| (d2q[i] - slope_term[i]).abs()).fold(0.0_f64, f64::max);
    Ok(QConvexity { q: field(geom, q)?, d2q: field(geom, d2q)?, slope_term: field(geom, slope_term)?, min_d2q, max_defect })
}

#[derive(Debug, Clone)]
pub struct GrowthFunctionals {
    /// `φ² + x² − (s + |φ(0)|)²`
    pub d0: GridFunction,
    /// `φ² + x² − s²`
    pub d: GridFunction,
}

pub fn d0_and_d(geom: &CurveGeometry) -> Result<GrowthFunctionals> {
    let p0 = geom.phi[geom.origin].abs();
    let r2 = geom.radius_sq();
    let d0 = (0..geom.len()).map(|i| r2[i] - (geom.arclength[i] + p0).powi(2)).collect();
    let d = (0..geom.len()).map(|i| r2[i] - geom.arclength[i].powi(2)).collect();
    Ok(GrowthFunctionals { d0: field(geom, d0)?, d: field(geom, d)? })
}

/// Running maxima of a functional to the left and right of the origin, over
/// `|x| ≤ fraction · L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionalMax {
    pub left: f64,
    pub right: f64,
    pub extent: f64,
}

pub fn directional_max(f: &GridFunction, fraction: f64) -> DirectionalMax {
    let extent = fraction * f.xs[0].abs().min(f.xs[f.len() - 1].abs());
    let mut out = DirectionalMax { left: f64::NEG_INFINITY, right: f64::NEG_INFINITY, extent };
    for (x, y) in f.xs.iter().zip(&f.ys) {
        if x.abs() > extent {
            continue;
        }
        if *x <= 0.0 {
            out.left = out.left.max(*y);
        }
        if *x >= 0.0 {
            out.right = out.right.max(*y);
        }
    }
    out
}

/// Growth of running maxima between a domain and one twice as large.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthComparison {
    pub small: DirectionalMax,
    pub large: DirectionalMax,
    pub left_factor: f64,
    pub right_factor: f64,
}

impl GrowthComparison {
    pub fn new(small: DirectionalMax, large: DirectionalMax) -> Self {
        let ratio = |a: f64, b: f64| if a > 0.0 { b / a } else { f64::NAN };
        Self { small, large, left_factor: ratio(small.left, large.left), right_factor: ratio(small.right, large.right) }
    }

    /// Whether the running maximum grows by at least `factor` in some direction.
    pub fn grows(&self, factor: f64) -> bool {
        self.left_factor >= factor || self.right_factor >= factor
    }
}

#[derive(Debug, Clone)]
pub struct EspCheck {
    pub alpha: f64,
    pub beta: f64,
    /// `αs + β − φ(0)φ(x)`
    pub margin: GridFunction,
    pub min_margin: f64,
    /// slopes of the margin in `|x|` along the linear far fields, when declared
    pub asymptotic_slopes: Option<(f64, f64)>,
    pub pass: bool,
}

/// Tests `φ(0)φ(x) ≤ αs + β`. When `φ` has declared linear far fields the
/// margin is affine in `|x|` beyond the grid, so a negative asymptotic slope is
/// a violation even if none occurs on the sampled interval.
pub fn esp_check(geom: &CurveGeometry, phi_far: &FarField, alpha: f64, beta: f64, tol: f64) -> Result<EspCheck> {
    let p0 = geom.phi[geom.origin];
    let margin: Vec<f64> = (0..geom.len()).map(|i| alpha * geom.arclength[i] + beta - p0 * geom.phi[i]).collect();
    let min_margin = margin.iter().copied().fold(f64::INFINITY, f64::min);
    let asymptotic_slopes = (phi_far.kind == FarKind::Linear && phi_far.left.is_finite() && phi_far.right.is_finite())
        .then(|| {
            // s ~ ±√(1+p²)|x|, φ ~ p x on each side
            let right = alpha * (1.0 + phi_far.right.powi(2)).sqrt() - p0 * phi_far.right;
            let left = -alpha * (1.0 + phi_far.left.powi(2)).sqrt() + p0 * phi_far.left;
            (left, right)
        });
    let asym_ok = asymptotic_slopes.is_none_or(|(l, r)| l >= -tol && r >= -tol);
    Ok(EspCheck { alpha, beta, margin: field(geom, margin)?, min_margin, asymptotic_slopes, pass: min_margin >= -tol && asym_ok })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum L1Bound {
    Bound {
        beta: f64,
        /// `max(φ(z) − a₀z − β)` over the grid; the bound holds when ≤ 0
        max_excess: f64,
        holds: bool,
        /// `φ − a₀z` at the right end, the constant the bound is normalised by
        right_offset: f64,
    },
    NotApplicable { left_tail: f64, right_tail: f64 },
}

/// `β = ∫|φ' − a₀|` and the bound `φ(z) ≤ a₀z + β`, provided `φ' − a₀` is
/// small at both ends of the grid.
pub fn l1_linear_bound(geom: &CurveGeometry, a0: f64, tail_tol: f64) -> L1Bound {
    let dev: Vec<f64> = geom.slope.iter().map(|p| (p - a0).abs()).collect();
    let n = dev.len();
    let (left_tail, right_tail) = (dev[0], dev[n - 1]);
    if !(left_tail < tail_tol && right_tail < tail_tol) {
        return L1Bound::NotApplicable { left_tail, right_tail };
    }
    let beta = fd::simpson(&dev, geom.h);
    let max_excess = (0..n).map(|i| geom.phi[i] - a0 * geom.xs[i] - beta).fold(f64::NEG_INFINITY, f64::max);
    L1Bound::Bound { beta, max_excess, holds: max_excess <= 0.0, right_offset: geom.phi[n - 1] - a0 * geom.xs[n - 1] }
}

/// `s² + φ(0)² + 2φ(0)(φ − φ(0)) − |x|²`, which equals `s² − chord²` for the
/// chord from `(0, φ(0))`; evaluated in factored form.
pub fn peg_bound_check(geom: &CurveGeometry) -> Result<GridFunction> {
    let p0 = geom.phi[geom.origin];
    let margin = (0..geom.len())
        .map(|i| {
            let dx = geom.xs[i] - geom.xs[geom.origin];
            let dy = geom.phi[i] - p0;
            let chord = dx.hypot(dy);
            let s = geom.arclength[i].abs();
            (s - chord) * (s + chord)
        })
        .collect();
    field(geom, margin)
}

#[derive(Debug, Clone)]
pub struct Counterexample {
    pub a: f64,
    pub eps: f64,
    pub mollified: bool,
    pub phi: GridFunction,
    pub d: GridFunction,
    /// `|x| − s`
    pub gap: GridFunction,
    /// expected asymptotic value `ε(√(1+A²) − 1)`
    pub expected_gap: f64,
    /// `max||x| − s − expected|` over nodes with `y > ε`
    pub gap_error: f64,
    /// least-squares slope of `D` against `y` on `y ≥ 2ε`
    pub slope_fit: f64,
    pub expected_slope: f64,
}

/// Builds `φ_ε(y) = Aε` for `|y| < ε`, `A|y|` otherwise (optionally smoothed
/// with a Gaussian of width `ε/4`) on `[-half_width, half_width)` with `h = ε/16`.
pub fn counterexample_phi_eps(a: f64, eps: f64, half_width: f64, mollified: bool) -> Result<Counterexample> {
    if a == 0.0 || !a.is_finite() {
        return Err(Error::Config("the counterexample needs a nonzero finite slope".into()));
    }
    if !(eps > 0.0 && eps.is_finite()) || half_width < 4.0 * eps {
        return Err(Error::Config(format!("need eps > 0 and half width ≥ 4 eps (eps {eps}, half width {half_width})")));
    }
    let h = eps / 16.0;
    let half_nodes = (half_width / h).round() as usize;
    let grid = UniformGrid::centered(half_nodes as f64 * h, 2 * half_nodes)?;
    let sigma = eps / 4.0;
    // E[max(y + σZ - c, 0)] for Z standard normal
    let smooth_relu = |y: f64| {
        let z = y / sigma;
        y * 0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2)) + sigma * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
    };
    let phi_fn = |y: f64| {
        if mollified {
            a * (eps + smooth_relu(y - eps) + smooth_relu(-y - eps))
        } else {
            a * y.abs().max(eps)
        }
    };
    let phi = GridFunction::sample(grid, FarField::linear(-a, a), phi_fn)?;
    let stencil = if mollified { Stencil::Fourth } else { Stencil::Second };
    let geom = geometry_with(&phi, stencil)?;
    let funcs = d0_and_d(&geom)?;
    let r2 = geom.radius_sq();
    let gap: Vec<f64> = (0..geom.len()).map(|i| r2[i].sqrt() - geom.arclength[i].abs()).collect();
    let w = (1.0 + a * a).sqrt();
    let expected_gap = eps * (w - 1.0);
    let expected_slope = 2.0 * eps * w * (w - 1.0);
    let far = interior(&geom, 1);
    let gap_error = far
        .iter()
        .filter(|&&i| geom.xs[i] > eps * (1.0 + 1e-9))
        .map(|&i| (gap[i] - expected_gap).abs())
        .fold(0.0_f64, f64::max);
    let pts: Vec<(f64, f64)> = far.iter().filter(|&&i| geom.xs[i] >= 2.0 * eps).map(|&i| (geom.xs[i], funcs.d.ys[i])).collect();
    let slope_fit = linear_fit(&pts).0;
    Ok(Counterexample {
        a,
        eps,
        mollified,
        gap: field(&geom, gap)?,
        phi,
        d: funcs.d,
        expected_gap,
        gap_error,
        slope_fit,
        expected_slope,
    })
}

/// Scan sets for the discrete `X_∞` norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormScan {
    pub t_range: (f64, f64),
    pub t_count: usize,
    pub r_range: (f64, f64),
    pub r_count: usize,
    /// centres are scanned on `[-x_extent, x_extent]`
    pub x_extent: f64,
    pub x_count: usize,
    /// Gauss-Legendre nodes per panel
    pub quad: usize,
}

impl Default for NormScan {
    fn default() -> Self {
        Self { t_range: (1e-2, 1e2), t_count: 9, r_range: (0.25, 4.0), r_count: 9, x_extent: 4.0, x_count: 33, quad: 12 }
    }
}

impl NormScan {
    /// Same ranges with (roughly) doubled density.
    pub fn refined(&self) -> Self {
        Self {
            t_count: 2 * self.t_count - 1,
            r_count: 2 * self.r_count - 1,
            x_count: 2 * self.x_count - 1,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XInftyNorm {
    /// `sup_t ‖u_x(t)‖_∞`
    pub gradient: f64,
    /// `sup_{x,R} R^{2/7} ‖u_xx‖_{L⁷(B_R(x) × (R⁴/2, R⁴))}`
    pub local: f64,
    pub total: f64,
    /// `‖u₀'‖_∞ = max(|A|, |B|)`
    pub data_gradient: f64,
}

fn log_points(range: (f64, f64), count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![range.0];
    }
    (0..count).map(|i| (range.0.ln() + (range.1.ln() - range.0.ln()) * i as f64 / (count - 1) as f64).exp()).collect()
}

/// Discrete surrogate of the `X_∞` norm of the self-similar solution
/// `u_x(x,t) = ψ(x t^{-1/4})` in one space dimension.
pub fn x_infty_norm(profile: &SimilarityProfile, table: &KernelTable, scan: NormScan) -> Result<XInftyNorm> {
    let grid = profile.psi.grid();
    let (d1, _) = mild::slope_derivatives(&profile.psi.ys, profile.corner, grid, table);
    let gradient = log_points(scan.t_range, scan.t_count)
        .iter()
        .map(|&t| mild::rescaled(&profile.psi, t).iter().fold(0.0_f64, |m, v| m.max(v.abs())))
        .fold(0.0_f64, f64::max);
    let rule = GaussJacobi::legendre(scan.quad)?;
    let uxx = |y: f64, t: f64| -> f64 {
        let s = t.powf(-0.25);
        s * fd::interpolate(&d1, grid.x0, grid.h, y * s).unwrap_or(0.0)
    };
    let centres: Vec<f64> = if scan.x_count <= 1 {
        vec![0.0]
    } else {
        (0..scan.x_count).map(|i| -scan.x_extent + 2.0 * scan.x_extent * i as f64 / (scan.x_count - 1) as f64).collect()
    };
    const PANELS: usize = 8;
    let radii = log_points(scan.r_range, scan.r_count);
    let local = radii
        .par_iter()
        .map(|&r| {
            let (t0, t1) = (0.5 * r.powi(4), r.powi(4));
            centres
                .iter()
                .map(|&xc| {
                    let mut acc = 0.0;
                    for (&tn, &tw) in rule.nodes.iter().zip(&rule.weights) {
                        let t = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * tn;
                        let wt = 0.5 * (t1 - t0) * tw;
                        for p in 0..PANELS {
                            let a = xc - r + 2.0 * r * p as f64 / PANELS as f64;
                            let b = a + 2.0 * r / PANELS as f64;
                            for (&yn, &yw) in rule.nodes.iter().zip(&rule.weights) {
                                let y = 0.5 * (a + b) + 0.5 * (b - a) * yn;
                                acc += wt * 0.5 * (b - a) * yw * uxx(y, t).abs().powi(7);
                            }
                        }
                    }
                    r.powf(2.0 / 7.0) * acc.powf(1.0 / 7.0)
                })
                .fold(0.0_f64, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(XInftyNorm { gradient, local, total: gradient + local, data_gradient: profile.corner.max_slope() })
}

/// Report of the closed-curve sign argument: at a maximum of `k² + |x|²/4`
/// the second arclength derivative is `≤ 0`, while a forward profile would
/// need it to equal `1/2 + 2(∂_s k)² ≥ 1/2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompactnessReport {
    pub max_index: usize,
    pub max_point: [f64; 2],
    pub max_value: f64,
    /// `∂_s²(k² + |x|²/4)` at the maximum
    pub lhs_at_max: f64,
    /// `1/2 + 2(∂_s k)²` at the maximum
    pub rhs_at_max: f64,
    /// `rhs − lhs` at every node
    pub deficit: Vec<f64>,
    pub min_deficit: f64,
}

pub fn compactness_contradiction_demo(curve: &ClosedCurve) -> CompactnessReport {
    let r2 = curve.radius_sq();
    let f: Vec<f64> = curve.curvature.iter().zip(&r2).map(|(k, r)| k * k + 0.25 * r).collect();
    let lhs = curve.ds(&curve.ds(&f));
    let ks = curve.ds(&curve.curvature);
    let deficit: Vec<f64> = (0..f.len()).map(|i| 0.5 + 2.0 * ks[i] * ks[i] - lhs[i]).collect();
    let max_index = (0..f.len()).max_by(|&a, &b| f[a].total_cmp(&f[b])).unwrap_or(0);
    CompactnessReport {
        max_index,
        max_point: curve.points[max_index],
        max_value: f[max_index],
        lhs_at_max: lhs[max_index],
        rhs_at_max: 0.5 + 2.0 * ks[max_index].powi(2),
        min_deficit: deficit.iter().copied().fold(f64::INFINITY, f64::min),
        deficit,
    }
}

/// One line of the report summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub name: String,
    pub sup_residual: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl CheckSummary {
    pub fn new(name: &str, sup_residual: f64, threshold: f64) -> Self {
        Self { name: name.into(), sup_residual, threshold, pass: sup_residual.is_finite() && sup_residual <= threshold }
    }
}

/// Convergence of a residual under one grid halving.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub coarse: f64,
    pub fine: f64,
    pub ratio: f64,
    pub observed_order: f64,
    /// `10 ×` the fine-grid error predicted from the coarse one at the
    /// stencil's nominal order
    pub threshold: f64,
}

impl Refinement {
    pub fn new(coarse: f64, fine: f64, nominal_order: f64) -> Self {
        let ratio = coarse / fine;
        Self { coarse, fine, ratio, observed_order: ratio.log2(), threshold: 10.0 * coarse / 2f64.powf(nominal_order) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseOptions {
    /// pass threshold for identity residuals on a single grid
    pub identity_tol: f64,
    /// tolerance for inequalities that hold on every graph
    pub inequality_tol: f64,
    pub esp_alpha: f64,
    pub esp_beta: f64,
    /// `a₀` for the `L¹` bound; `None` uses the right far-field slope
    pub l1_slope: Option<f64>,
    pub l1_tail_tol: f64,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        Self { identity_tol: 1e-4, inequality_tol: 1e-10, esp_alpha: 0.0, esp_beta: 0.0, l1_slope: None, l1_tail_tol: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct DiagnosticsReport {
    pub e2d_residual: GridFunction,
    pub backward_residual: GridFunction,
    pub profile_eq_residual: GridFunction,
    pub q_function: GridFunction,
    pub q_d2: GridFunction,
    pub d0_samples: GridFunction,
    pub d_samples: GridFunction,
    pub esp_margin: GridFunction,
    pub peg_margin: GridFunction,
    pub l1_bound: Option<f64>,
    pub l1: L1Bound,
    pub phi0: f64,
    pub d0_max: DirectionalMax,
    pub summary: Vec<CheckSummary>,
    /// qualitative observations (nonlinear profile, growth of `D₀`, ...)
    pub flags: Vec<String>,
}

/// Runs every single-grid check on `geom`; `far` is the far-field declaration
/// of the height function.
pub fn diagnose(geom: &CurveGeometry, far: &FarField, opts: DiagnoseOptions) -> Result<DiagnosticsReport> {
    let e2d = key_identity_residual(geom)?;
    let bwd = backward_identity_residual(geom)?;
    let prof = profile_equation_residual(geom)?;
    let q = q_convexity(geom, QVariant::Family { alpha: 0.0, beta: 0.0 })?;
    let growth = d0_and_d(geom)?;
    let esp = esp_check(geom, far, opts.esp_alpha, opts.esp_beta, opts.inequality_tol)?;
    let peg = peg_bound_check(geom)?;
    let a0 = opts.l1_slope.unwrap_or(if far.right.is_finite() { far.right } else { geom.slope[geom.len() - 1] });
    let l1 = l1_linear_bound(geom, a0, opts.l1_tail_tol);
    let phi0 = geom.phi[geom.origin];

    let idx2 = interior(geom, 2);
    let idx0 = interior(geom, 0);
    let mut summary = vec![
        CheckSummary::new("key_identity", sup_on(&e2d.ys, &idx2), opts.identity_tol),
        CheckSummary::new("profile_equation", sup_on(&prof.ys, &idx2), opts.identity_tol),
        CheckSummary::new("q_convexity", q.max_defect, opts.identity_tol),
        CheckSummary::new(
            "peg_bound",
            idx0.iter().map(|&i| (-peg.ys[i]).max(0.0)).fold(0.0_f64, f64::max),
            opts.inequality_tol,
        ),
    ];
    let mut esp_line = CheckSummary::new("esp_inequality", (-esp.min_margin).max(0.0), opts.inequality_tol);
    esp_line.pass = esp.pass;
    summary.push(esp_line);
    match l1 {
        L1Bound::Bound { max_excess, holds, .. } => {
            let mut line = CheckSummary::new("l1_linear_bound", max_excess.max(0.0), 0.0);
            line.pass = holds;
            summary.push(line);
        }
        L1Bound::NotApplicable { .. } => {}
    }

    let d0_max = directional_max(&growth.d0, 0.8);
    let half = directional_max(&growth.d0, 0.4);
    let mut flags = Vec::new();
    if phi0.abs() > 1e-3 {
        flags.push(format!("phi(0) = {phi0:.6e} is nonzero: the profile is not a line through the origin"));
    }
    let sup_d = sup_on(&growth.d.ys, &idx0);
    if sup_d <= 1e-10 * (1.0 + geom.radius_sq().iter().fold(0.0_f64, |m, v| m.max(*v))) {
        flags.push("D vanishes identically".into());
    }
    for (side, near, far_v) in [("left", half.left, d0_max.left), ("right", half.right, d0_max.right)] {
        if near > 0.0 && far_v >= 1.5 * near {
            flags.push(format!("D0 running max grows to the {side}: {near:.4e} at |x| <= {:.1} -> {far_v:.4e} at |x| <= {:.1}", half.extent, d0_max.extent));
        }
    }
    if let L1Bound::NotApplicable { left_tail, right_tail } = l1 {
        flags.push(format!("L1 bound not applicable for a0 = {a0}: tails {left_tail:.3e} / {right_tail:.3e}"));
    }
    if !esp.pass {
        flags.push(format!("esp inequality fails for alpha = {}, beta = {}", esp.alpha, esp.beta));
    }

    Ok(DiagnosticsReport {
        e2d_residual: e2d,
        backward_residual: bwd,
        profile_eq_residual: prof,
        q_function: q.q,
        q_d2: q.d2q,
        d0_samples: growth.d0,
        d_samples: growth.d,
        esp_margin: esp.margin,
        peg_margin: peg,
        l1_bound: match l1 {
            L1Bound::Bound { beta, .. } => Some(beta),
            L1Bound::NotApplicable { .. } => None,
        },
        l1,
        phi0,
        d0_max,
        summary,
        flags,
    })
}

#[derive(Serialize)]
struct ReportJson<'a> {
    checks: &'a [CheckSummary],
    flags: &'a [String],
    phi0: f64,
    l1: L1Bound,
    d0_running_max: DirectionalMax,
}

impl DiagnosticsReport {
    pub fn all_pass(&self) -> bool {
        self.summary.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> Result<String> {
        let r = ReportJson { checks: &self.summary, flags: &self.flags, phi0: self.phi0, l1: self.l1, d0_running_max: self.d0_max };
        Ok(serde_json::to_string_pretty(&r)?)
    }

    /// `report.json` plus a per-node residual dump `residuals.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json()?)?;
        write_columns(
            &dir.join("residuals.csv"),
            &["x", "key_identity", "backward_identity", "profile_equation", "q", "d2q", "d0", "d", "esp_margin", "peg_margin"],
            &[
                &self.e2d_residual.xs,
                &self.e2d_residual.ys,
                &self.backward_residual.ys,
                &self.profile_eq_residual.ys,
                &self.q_function.ys,
                &self.q_d2.ys,
                &self.d0_samples.ys,
                &self.d_samples.ys,
                &self.esp_margin.ys,
                &self.peg_margin.ys,
            ],
        )
    }

    pub fn table(&self) -> String {
        let mut out = format!("{:<20} {:>14} {:>12}  result\n", "check", "sup residual", "threshold");
        for c in &self.summary {
            out += &format!("{:<20} {:>14.4e} {:>12.2e}  {}\n", c.name, c.sup_residual, c.threshold, if c.pass { "PASS" } else { "FAIL" });
        }
        for f in &self.flags {
            out += &format!("note: {f}\n");
        }
        out
    }
}
