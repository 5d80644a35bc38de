//! Finite differences, cumulative quadrature and interpolation on uniform grids.

use serde::{Deserialize, Serialize};

/// Central difference family used for derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stencil {
    /// Three-point central differences.
    Second,
    /// Five-point central differences.
    #[default]
    Fourth,
}

impl Stencil {
    pub fn nominal_order(self) -> f64 {
        match self {
            Stencil::Second => 2.0,
            Stencil::Fourth => 4.0,
        }
    }

    /// Half-width of the interior stencil.
    pub fn radius(self) -> usize {
        match self {
            Stencil::Second => 1,
            Stencil::Fourth => 2,
        }
    }
}

/// First derivative. Interior nodes use the central stencil; the outermost
/// nodes fall back to second-order one-sided/central differences.
pub fn derivative(ys: &[f64], h: f64, stencil: Stencil) -> Vec<f64> {
    let n = ys.len();
    assert!(n >= 3, "derivative needs at least three samples");
    let mut d = vec![0.0; n];
    let inv2h = 0.5 / h;
    d[0] = (-3.0 * ys[0] + 4.0 * ys[1] - ys[2]) * inv2h;
    d[n - 1] = (3.0 * ys[n - 1] - 4.0 * ys[n - 2] + ys[n - 3]) * inv2h;
    match stencil {
        Stencil::Second => {
            for i in 1..n - 1 {
                d[i] = (ys[i + 1] - ys[i - 1]) * inv2h;
            }
        }
        Stencil::Fourth => {
            if n < 5 {
                return derivative(ys, h, Stencil::Second);
            }
            d[1] = (ys[2] - ys[0]) * inv2h;
            d[n - 2] = (ys[n - 1] - ys[n - 3]) * inv2h;
            let c = 1.0 / (12.0 * h);
            for i in 2..n - 2 {
                d[i] = (ys[i - 2] - 8.0 * ys[i - 1] + 8.0 * ys[i + 1] - ys[i + 2]) * c;
            }
        }
    }
    d
}

/// Second derivative with the same boundary policy as [`derivative`].
pub fn second_derivative(ys: &[f64], h: f64, stencil: Stencil) -> Vec<f64> {
    let n = ys.len();
    assert!(n >= 4, "second derivative needs at least four samples");
    let mut d = vec![0.0; n];
    let ih2 = 1.0 / (h * h);
    d[0] = (2.0 * ys[0] - 5.0 * ys[1] + 4.0 * ys[2] - ys[3]) * ih2;
    d[n - 1] = (2.0 * ys[n - 1] - 5.0 * ys[n - 2] + 4.0 * ys[n - 3] - ys[n - 4]) * ih2;
    match stencil {
        Stencil::Second => {
            for i in 1..n - 1 {
                d[i] = (ys[i - 1] - 2.0 * ys[i] + ys[i + 1]) * ih2;
            }
        }
        Stencil::Fourth => {
            if n < 5 {
                return second_derivative(ys, h, Stencil::Second);
            }
            d[1] = (ys[0] - 2.0 * ys[1] + ys[2]) * ih2;
            d[n - 2] = (ys[n - 3] - 2.0 * ys[n - 2] + ys[n - 1]) * ih2;
            let c = ih2 / 12.0;
            for i in 2..n - 2 {
                d[i] = (-ys[i - 2] + 16.0 * ys[i - 1] - 30.0 * ys[i] + 16.0 * ys[i + 1] - ys[i + 2]) * c;
            }
        }
    }
    d
}

/// Integral over cell `[i, i+1]` from the cubic through four neighbouring samples.
fn cell_integral(ys: &[f64], h: f64, i: usize) -> f64 {
    let n = ys.len();
    if n < 4 {
        return 0.5 * h * (ys[i] + ys[i + 1]);
    }
    if i >= 1 && i + 2 < n {
        h / 24.0 * (-ys[i - 1] + 13.0 * ys[i] + 13.0 * ys[i + 1] - ys[i + 2])
    } else if i == 0 {
        h / 24.0 * (9.0 * ys[0] + 19.0 * ys[1] - 5.0 * ys[2] + ys[3])
    } else {
        h / 24.0 * (9.0 * ys[i + 1] + 19.0 * ys[i] - 5.0 * ys[i - 1] + ys[i - 2])
    }
}

/// Cumulative integral `∫_{x_origin}^{x_i} f` at every node (negative to the left).
/// The running sums are compensated so long integrals keep full precision.
pub fn cumulative_integral(ys: &[f64], h: f64, origin: usize) -> Vec<f64> {
    let n = ys.len();
    let mut out = vec![0.0; n];
    let mut acc = Neumaier::default();
    for i in origin + 1..n {
        acc.add(cell_integral(ys, h, i - 1));
        out[i] = acc.value();
    }
    let mut acc = Neumaier::default();
    for i in (0..origin).rev() {
        acc.add(-cell_integral(ys, h, i));
        out[i] = acc.value();
    }
    out
}

#[derive(Debug, Default, Clone, Copy)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Composite Simpson over all samples (trapezoid correction on a leftover cell).
pub fn simpson(ys: &[f64], h: f64) -> f64 {
    let n = ys.len();
    if n < 2 {
        return 0.0;
    }
    let cells = n - 1;
    let even = cells - cells % 2;
    let mut s = 0.0;
    let mut i = 0;
    while i < even {
        s += h / 3.0 * (ys[i] + 4.0 * ys[i + 1] + ys[i + 2]);
        i += 2;
    }
    if cells % 2 == 1 {
        s += cell_integral(ys, h, cells - 1);
    }
    s
}

/// Nodes where the second difference spikes relative to its neighbourhood.
///
/// Piecewise-linear data yields isolated spikes of size `|jump| / h`; smooth
/// data yields second differences of comparable size on neighbouring nodes.
pub fn detect_kinks(ys: &[f64], h: f64) -> Vec<usize> {
    let n = ys.len();
    if n < 9 {
        return Vec::new();
    }
    let d2: Vec<f64> = (1..n - 1).map(|i| (ys[i - 1] - 2.0 * ys[i] + ys[i + 1]) / (h * h)).collect();
    let scale = ys.iter().fold(0.0_f64, |m, y| m.max(y.abs())).max(1.0);
    let floor = 1e-6 / h;
    let mut kinks = Vec::new();
    let mut last: Option<usize> = None;
    for k in 2..d2.len() - 2 {
        let a = d2[k].abs();
        let neigh = d2[k - 2].abs().max(d2[k + 2].abs());
        let jump = a * h;
        if jump > floor && jump > 1e3 * f64::EPSILON * scale / h && a > 50.0 * neigh {
            let i = k + 1;
            if last.is_none_or(|l| i >= l + 5) && i >= 4 && i + 4 < n {
                kinks.push(i);
                last = Some(i);
            }
        }
    }
    kinks
}

/// Splits `0..n` into inclusive segments that share the kink nodes.
pub fn segments(n: usize, kinks: &[usize]) -> Vec<(usize, usize)> {
    let mut segs = Vec::with_capacity(kinks.len() + 1);
    let mut start = 0;
    for &k in kinks {
        segs.push((start, k));
        start = k;
    }
    segs.push((start, n - 1));
    segs
}

/// Applies `op` to each segment and writes the results back; kink nodes get
/// the mean of the two one-sided values.
pub fn per_segment(ys: &[f64], segs: &[(usize, usize)], op: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let mut out = vec![0.0; ys.len()];
    let mut hits = vec![0u8; ys.len()];
    for &(a, b) in segs {
        let local = op(&ys[a..=b]);
        for (k, v) in local.into_iter().enumerate() {
            out[a + k] += v;
            hits[a + k] += 1;
        }
    }
    for (o, &c) in out.iter_mut().zip(&hits) {
        if c > 1 {
            *o /= c as f64;
        }
    }
    out
}

/// Number of points in the interpolation stencil of [`interpolate`].
pub const INTERP_POINTS: usize = 8;

/// Lagrange interpolation on a uniform grid using the `INTERP_POINTS` nearest
/// samples. Returns `None` outside `[x0, x0 + (n-1)h]`.
pub fn interpolate(ys: &[f64], x0: f64, h: f64, x: f64) -> Option<f64> {
    let n = ys.len();
    let u = (x - x0) / h;
    if !(u >= 0.0 && u <= (n - 1) as f64) {
        return None;
    }
    let m = INTERP_POINTS.min(n);
    let j = u.floor() as usize;
    let start = j.saturating_sub(m / 2 - 1).min(n - m);
    let t = u - start as f64;
    let r = t.round();
    if (t - r).abs() < 1e-13 {
        return Some(ys[start + r as usize]);
    }
    // Barycentric form with the equispaced weights (-1)^k C(m-1, k).
    let mut num = 0.0;
    let mut den = 0.0;
    let mut binom = 1.0;
    for k in 0..m {
        let w = if k % 2 == 0 { binom } else { -binom } / (t - k as f64);
        num += w * ys[start + k];
        den += w;
        binom = binom * (m - 1 - k) as f64 / (k + 1) as f64;
    }
    Some(num / den)
}
