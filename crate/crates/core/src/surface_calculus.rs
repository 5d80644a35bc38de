//! Differential geometry of planar graph curves `x2 = φ(x1)`, closed planar
//! curves, and the elementary surface-calculus identities on analytic test
//! hypersurfaces.

use crate::error::{Error, Result};
use crate::fd::{self, Stencil};
use crate::grid::{FarField, GridFunction};

/// Pointwise geometry of the graph of `φ` with arclength measured from `x1 = 0`.
#[derive(Debug, Clone)]
pub struct CurveGeometry {
    pub xs: Vec<f64>,
    pub phi: Vec<f64>,
    /// `φ'`
    pub slope: Vec<f64>,
    /// `φ''`
    pub second: Vec<f64>,
    /// `v = sqrt(1 + φ'^2)`
    pub metric: Vec<f64>,
    /// `k = φ'' / v^3` (upward curvature)
    pub curvature: Vec<f64>,
    /// signed arclength `s(x1)`, `s(0) = 0`
    pub arclength: Vec<f64>,
    /// `x·n = (φ - x1 φ') / v` with the upward unit normal
    pub normal_coord: Vec<f64>,
    pub h: f64,
    pub origin: usize,
    pub stencil: Stencil,
    /// Smooth pieces between detected kinks (inclusive index ranges).
    pub segments: Vec<(usize, usize)>,
}

/// Geometry with the default five-point stencil.
pub fn geometry(phi: &GridFunction) -> Result<CurveGeometry> {
    geometry_with(phi, Stencil::default())
}

/// Geometry with derivatives of `φ` taken by finite differences.
pub fn geometry_with(phi: &GridFunction, stencil: Stencil) -> Result<CurveGeometry> {
    let h = phi.h();
    let segments = fd::segments(phi.len(), &fd::detect_kinks(&phi.ys, h));
    let slope = fd::per_segment(&phi.ys, &segments, |s| fd::derivative(s, h, stencil));
    build(phi, slope, segments, stencil)
}

/// Geometry when `φ'` is known on the grid (e.g. a computed slope field);
/// only `φ''` is obtained by differencing.
pub fn geometry_with_slope(phi: &GridFunction, slope: &GridFunction, stencil: Stencil) -> Result<CurveGeometry> {
    if !phi.grid().same_as(&slope.grid()) {
        return Err(Error::GridMismatch("profile and slope live on different grids".into()));
    }
    let segments = vec![(0, phi.len() - 1)];
    build(phi, slope.ys.clone(), segments, stencil)
}

fn build(phi: &GridFunction, slope: Vec<f64>, segments: Vec<(usize, usize)>, stencil: Stencil) -> Result<CurveGeometry> {
    let h = phi.h();
    let origin = phi.grid().origin_index().ok_or(Error::GridMissingOrigin)?;
    let second = fd::per_segment(&slope, &segments, |s| fd::derivative(s, h, stencil));
    let n = phi.len();
    let mut metric = vec![0.0; n];
    let mut curvature = vec![0.0; n];
    let mut normal_coord = vec![0.0; n];
    for i in 0..n {
        let v = (1.0 + slope[i] * slope[i]).sqrt();
        metric[i] = v;
        curvature[i] = second[i] / (v * v * v);
        normal_coord[i] = (phi.ys[i] - phi.xs[i] * slope[i]) / v;
        if !(curvature[i].is_finite() && normal_coord[i].is_finite()) {
            return Err(Error::NonFiniteGeometry { index: i, x: phi.xs[i] });
        }
    }
    let arclength = segmented_arclength(&slope, &segments, h, origin);
    Ok(CurveGeometry {
        xs: phi.xs.clone(),
        phi: phi.ys.clone(),
        slope,
        second,
        metric,
        curvature,
        arclength,
        normal_coord,
        h,
        origin,
        stencil,
        segments,
    })
}

/// Cumulative arclength, integrating each smooth piece with its own one-sided
/// slope values so corners do not smear.
fn segmented_arclength(slope: &[f64], segs: &[(usize, usize)], h: f64, origin: usize) -> Vec<f64> {
    let n = slope.len();
    let mut s = vec![0.0; n];
    // segment-local metric, recomputed from one-sided slopes at kink nodes
    let local_metric = |a: usize, b: usize| -> Vec<f64> {
        let mut v: Vec<f64> = slope[a..=b].iter().map(|p| (1.0 + p * p).sqrt()).collect();
        let len = b - a + 1;
        if segs.len() > 1 && len >= 3 {
            let p0 = 2.0 * slope[a + 1] - slope[a + 2];
            let p1 = 2.0 * slope[b - 1] - slope[b - 2];
            if a != 0 {
                v[0] = (1.0 + p0 * p0).sqrt();
            }
            if b != n - 1 {
                v[len - 1] = (1.0 + p1 * p1).sqrt();
            }
        }
        v
    };
    let seg_of = |i: usize| segs.iter().position(|&(a, b)| a <= i && i <= b).unwrap_or(0);
    // walk right
    let mut k = seg_of(origin);
    let mut start = origin;
    while k < segs.len() {
        let (a, b) = segs[k];
        let v = local_metric(a, b);
        let cum = fd::cumulative_integral(&v, h, start - a);
        let base = s[start];
        for i in start..=b {
            s[i] = base + cum[i - a];
        }
        start = b;
        k += 1;
    }
    // walk left
    let mut k = seg_of(origin) as isize;
    let mut end = origin;
    while k >= 0 {
        let (a, b) = segs[k as usize];
        let v = local_metric(a, b);
        let cum = fd::cumulative_integral(&v, h, end - a);
        let base = s[end];
        for i in a..=end {
            s[i] = base + cum[i - a];
        }
        end = a;
        k -= 1;
    }
    s
}

impl CurveGeometry {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// `∂_s f = f' / v` on raw samples.
    pub fn ds(&self, f: &[f64]) -> Vec<f64> {
        let d = fd::per_segment(f, &self.segments, |s| fd::derivative(s, self.h, self.stencil));
        d.iter().zip(&self.metric).map(|(a, v)| a / v).collect()
    }

    pub fn ds2(&self, f: &[f64]) -> Vec<f64> {
        self.ds(&self.ds(f))
    }

    /// `|x|^2` at each node.
    pub fn radius_sq(&self) -> Vec<f64> {
        self.xs.iter().zip(&self.phi).map(|(x, p)| x * x + p * p).collect()
    }

    /// Nodes at least two stencil widths (per nested derivative level) away from
    /// the boundary; every reported sup norm is taken here.
    pub fn reliable(&self, levels: usize) -> std::ops::Range<usize> {
        let w = 2 * (2 * self.stencil.radius() + 1) * levels.max(1);
        w.min(self.len())..self.len().saturating_sub(w)
    }

    /// Nodes adjacent to a kink are as unreliable as boundary nodes.
    pub fn near_kink(&self, i: usize, levels: usize) -> bool {
        let w = 2 * (2 * self.stencil.radius() + 1) * levels.max(1);
        self.segments.iter().skip(1).any(|&(a, _)| i.abs_diff(a) <= w)
    }

    pub fn grid_function(&self, ys: Vec<f64>) -> Result<GridFunction> {
        GridFunction::new(self.xs.clone(), ys, FarField::linear(f64::NAN, f64::NAN))
    }
}

/// Result of an arclength derivative; values outside `reliable` are boundary
/// polluted.
#[derive(Debug, Clone)]
pub struct ArcDerivative {
    pub field: GridFunction,
    pub reliable: std::ops::Range<usize>,
}

/// Arclength derivative of order 1 (`f'/v`) or 2 (`∂_s(∂_s f)`).
pub fn ds_derivative(f: &GridFunction, geom: &CurveGeometry, order: usize) -> Result<ArcDerivative> {
    if f.len() != geom.len() || (f.h() - geom.h).abs() > 1e-12 * geom.h || (f.xs[0] - geom.xs[0]).abs() > 1e-9 * geom.h {
        return Err(Error::GridMismatch("function and geometry sampled on different grids".into()));
    }
    let ys = match order {
        1 => geom.ds(&f.ys),
        2 => geom.ds2(&f.ys),
        _ => return Err(Error::Config(format!("arclength derivative order {order} not supported (1 or 2)"))),
    };
    let far = FarField::linear(f64::NAN, f64::NAN);
    Ok(ArcDerivative { field: GridFunction::new(f.xs.clone(), ys, far)?, reliable: geom.reliable(order) })
}

/// Closed planar curve sampled uniformly in a periodic parameter.
#[derive(Debug, Clone)]
pub struct ClosedCurve {
    pub points: Vec<[f64; 2]>,
    /// `|r'(θ)|`
    pub speed: Vec<f64>,
    /// signed curvature (positive for counter-clockwise convex curves)
    pub curvature: Vec<f64>,
    dtheta: f64,
}

fn periodic_derivative(ys: &[f64], dt: f64) -> Vec<f64> {
    let n = ys.len();
    let at = |i: isize| ys[i.rem_euclid(n as isize) as usize];
    (0..n as isize)
        .map(|i| (at(i - 2) - 8.0 * at(i - 1) + 8.0 * at(i + 1) - at(i + 2)) / (12.0 * dt))
        .collect()
}

impl ClosedCurve {
    /// `points` sample one period of a smooth closed curve at equal parameter steps.
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.len() < 16 {
            return Err(Error::InvalidGrid(format!("{} samples on a closed curve, need 16", points.len())));
        }
        let dtheta = 2.0 * std::f64::consts::PI / points.len() as f64;
        let xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
        let ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
        let (x1, y1) = (periodic_derivative(&xs, dtheta), periodic_derivative(&ys, dtheta));
        let (x2, y2) = (periodic_derivative(&x1, dtheta), periodic_derivative(&y1, dtheta));
        let mut speed = Vec::with_capacity(points.len());
        let mut curvature = Vec::with_capacity(points.len());
        for i in 0..points.len() {
            let sp = x1[i].hypot(y1[i]);
            speed.push(sp);
            curvature.push((x1[i] * y2[i] - y1[i] * x2[i]) / (sp * sp * sp));
        }
        Ok(Self { points, speed, curvature, dtheta })
    }

    pub fn parametric(n: usize, r: impl Fn(f64) -> [f64; 2]) -> Result<Self> {
        let dt = 2.0 * std::f64::consts::PI / n as f64;
        Self::new((0..n).map(|i| r(i as f64 * dt)).collect())
    }

    pub fn ds(&self, f: &[f64]) -> Vec<f64> {
        periodic_derivative(f, self.dtheta).iter().zip(&self.speed).map(|(d, s)| d / s).collect()
    }

    pub fn radius_sq(&self) -> Vec<f64> {
        self.points.iter().map(|p| p[0] * p[0] + p[1] * p[1]).collect()
    }
}

/// Analytic test hypersurfaces for the surface-calculus identities.
#[derive(Debug, Clone)]
pub enum AnalyticSurface {
    /// Sphere of radius `radius` centred at the origin of `R^dim`, outward normal.
    Sphere { radius: f64, dim: usize },
    /// Line `x2 = slope x1` in the plane.
    Line { slope: f64 },
    /// Graph curve of `φ` in the plane, upward normal; derivatives by finite differences.
    Graph { phi: GridFunction, stencil: Stencil },
}

impl AnalyticSurface {
    pub fn dim(&self) -> usize {
        match self {
            AnalyticSurface::Sphere { dim, .. } => *dim,
            _ => 2,
        }
    }

    /// Closed-form mean curvature (`H = -div_Γ n`) where available.
    pub fn mean_curvature(&self) -> Option<f64> {
        match self {
            AnalyticSurface::Sphere { radius, dim } => Some(-((*dim as f64) - 1.0) / radius),
            AnalyticSurface::Line { .. } => Some(0.0),
            AnalyticSurface::Graph { .. } => None,
        }
    }
}

/// Residuals of the four elementary identities at the sample points.
#[derive(Debug, Clone, Default)]
pub struct PeiResiduals {
    /// `div_Γ x - (d-1)`
    pub div_position: Vec<f64>,
    /// `div_Γ(n) + H`
    pub div_normal: Vec<f64>,
    /// `div_Γ(|x|^2 n) + |x|^2 H`
    pub div_weighted_normal: Vec<f64>,
    /// max component of `∇_Γ(|x|^2/2) - (x - n (x·n))`
    pub tangential_gradient: Vec<f64>,
    /// `Δ_Γ(|x|^2/2) - (d-1) - H (x·n)`
    pub laplacian: Vec<f64>,
}

impl PeiResiduals {
    pub fn sup(&self) -> [f64; 5] {
        let m = |v: &[f64]| v.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        [
            m(&self.div_position),
            m(&self.div_normal),
            m(&self.div_weighted_normal),
            m(&self.tangential_gradient),
            m(&self.laplacian),
        ]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Evaluates the identities
/// (i) `div_Γ x = d-1`, (ii) `div_Γ(a n) = -aH`, (iii) `∇_Γ(|x|^2/2) = x - n(x·n)`,
/// (iv) `Δ_Γ(|x|^2/2) = d-1 + H(x·n)`.
///
/// Sphere samples are directions (projected radially onto the sphere), line
/// samples are `[x1]`. Graph residuals are reported at the reliable grid nodes
/// and `samples` is ignored.
pub fn pei_residuals(surface: &AnalyticSurface, samples: &[Vec<f64>]) -> Result<PeiResiduals> {
    match surface {
        AnalyticSurface::Sphere { radius, dim } => {
            let (r, d) = (*radius, *dim);
            let hc = surface.mean_curvature().unwrap();
            let mut out = PeiResiduals::default();
            for p in samples {
                if p.len() != d {
                    return Err(Error::Config(format!("sample of length {} on a sphere in R^{d}", p.len())));
                }
                let norm = dot(p, p).sqrt();
                let x: Vec<f64> = p.iter().map(|c| r * c / norm).collect();
                let n: Vec<f64> = x.iter().map(|c| c / r).collect();
                closed_form_point(&x, &n, 1.0 / r, hc, d, &mut out);
            }
            Ok(out)
        }
        AnalyticSurface::Line { slope } => {
            let c = *slope;
            let v = (1.0 + c * c).sqrt();
            let n = [-c / v, 1.0 / v];
            let mut out = PeiResiduals::default();
            for p in samples {
                let x1 = *p.first().ok_or_else(|| Error::Config("empty sample".into()))?;
                closed_form_point(&[x1, c * x1], &n, 0.0, 0.0, 2, &mut out);
            }
            Ok(out)
        }
        AnalyticSurface::Graph { phi, stencil } => graph_residuals(phi, *stencil),
    }
}

/// Closed-form evaluation for surfaces whose shape operator is `dn = kappa P`
/// (umbilic: spheres, `kappa = 1/R`; lines, `kappa = 0`).
fn closed_form_point(x: &[f64], n: &[f64], kappa: f64, hc: f64, d: usize, out: &mut PeiResiduals) {
    let nn = dot(n, n);
    let xn = dot(x, n);
    // tr(P) with P = I - n n^T
    let tr_p = d as f64 - nn;
    out.div_position.push(tr_p - (d as f64 - 1.0));
    // div_Γ n = tr(P dn) = kappa tr(P)
    let div_n = kappa * tr_p;
    out.div_normal.push(div_n + hc);
    // a = |x|^2: div_Γ(a n) = a div_Γ n + (P ∇a)·n, ∇a = 2x
    let a = dot(x, x);
    let p_grad_a_dot_n = 2.0 * (xn - nn * xn);
    out.div_weighted_normal.push(a * div_n + p_grad_a_dot_n + a * hc);
    // ∇_Γ(|x|^2/2) = P x
    let mut worst = 0.0_f64;
    for i in 0..d {
        let px = x[i] - n[i] * xn;
        let rhs = x[i] - n[i] * xn;
        worst = worst.max((px - rhs).abs());
    }
    out.tangential_gradient.push(worst);
    // Δ_Γ f = tr(P D^2 f) - (n·∇f) div_Γ n with D^2 f = I, ∇f = x
    let lap = tr_p - xn * div_n;
    out.laplacian.push(lap - (d as f64 - 1.0) - hc * xn);
}

fn graph_residuals(phi: &GridFunction, stencil: Stencil) -> Result<PeiResiduals> {
    let g = geometry_with(phi, stencil)?;
    let n = g.len();
    let tau: Vec<[f64; 2]> = (0..n).map(|i| [1.0 / g.metric[i], g.slope[i] / g.metric[i]]).collect();
    let nrm: Vec<[f64; 2]> = (0..n).map(|i| [-g.slope[i] / g.metric[i], 1.0 / g.metric[i]]).collect();
    // curve divergence of a vector field X: (∂_s X)·τ
    let div = |fx: &[f64], fy: &[f64]| -> Vec<f64> {
        let (dx, dy) = (g.ds(fx), g.ds(fy));
        (0..n).map(|i| dx[i] * tau[i][0] + dy[i] * tau[i][1]).collect()
    };
    let div_x = div(&g.xs, &g.phi);
    let n1: Vec<f64> = nrm.iter().map(|v| v[0]).collect();
    let n2: Vec<f64> = nrm.iter().map(|v| v[1]).collect();
    let div_n = div(&n1, &n2);
    let r2 = g.radius_sq();
    let an1: Vec<f64> = (0..n).map(|i| r2[i] * n1[i]).collect();
    let an2: Vec<f64> = (0..n).map(|i| r2[i] * n2[i]).collect();
    let div_an = div(&an1, &an2);
    let half: Vec<f64> = r2.iter().map(|r| 0.5 * r).collect();
    let dhalf = g.ds(&half);
    let lap = g.ds(&dhalf);
    // H = -div_Γ n = k for the upward normal
    let mut out = PeiResiduals::default();
    for i in g.reliable(2) {
        if g.near_kink(i, 2) {
            continue;
        }
        let h = g.curvature[i];
        let xn = g.normal_coord[i];
        out.div_position.push(div_x[i] - 1.0);
        out.div_normal.push(div_n[i] + h);
        out.div_weighted_normal.push(div_an[i] + r2[i] * h);
        let x = [g.xs[i], g.phi[i]];
        let gx = [dhalf[i] * tau[i][0], dhalf[i] * tau[i][1]];
        let rhs = [x[0] - nrm[i][0] * xn, x[1] - nrm[i][1] * xn];
        out.tangential_gradient.push((gx[0] - rhs[0]).abs().max((gx[1] - rhs[1]).abs()));
        out.laplacian.push(lap[i] - 1.0 - h * xn);
    }
    Ok(out)
}
