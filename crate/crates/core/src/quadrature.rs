//! Gauss-Jacobi rules and adaptive Gauss-Kronrod integration.

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Gauss-Jacobi rule for `∫_{-1}^{1} (1-x)^alpha (1+x)^beta f(x) dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussJacobi {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
}

impl GaussJacobi {
    /// Golub-Welsch: eigen-decomposition of the Jacobi matrix of the
    /// three-term recurrence.
    pub fn new(n: usize, alpha: f64, beta: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("Gauss-Jacobi needs at least 2 nodes, got {n}")));
        }
        if !(alpha > -1.0 && beta > -1.0) {
            return Err(Error::Config(format!("Jacobi exponents must exceed -1 (alpha {alpha}, beta {beta})")));
        }
        let ab = alpha + beta;
        let mut jm = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            let k = i as f64;
            let d = 2.0 * k + ab;
            jm[(i, i)] = if i == 0 {
                (beta - alpha) / (ab + 2.0)
            } else {
                (beta * beta - alpha * alpha) / (d * (d + 2.0))
            };
            if i + 1 < n {
                let k1 = k + 1.0;
                let d1 = 2.0 * k1 + ab;
                let off = 2.0 / d1 * (k1 * (k1 + alpha) * (k1 + beta) * (k1 + ab) / ((d1 + 1.0) * (d1 - 1.0))).sqrt();
                jm[(i, i + 1)] = off;
                jm[(i + 1, i)] = off;
            }
        }
        let mu0 = ((ab + 1.0) * 2f64.ln() + ln_gamma(alpha + 1.0) + ln_gamma(beta + 1.0) - ln_gamma(ab + 2.0)).exp();
        let eig = SymmetricEigen::new(jm);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let v0 = eig.eigenvectors[(0, i)];
                (eig.eigenvalues[i], mu0 * v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
            alpha,
            beta,
        })
    }

    pub fn legendre(n: usize) -> Result<Self> {
        Self::new(n, 0.0, 0.0)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights for `∫_0^1 (1-u)^alpha u^beta f(u) du`.
    pub fn unit_interval(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let scale = 0.5f64.powf(self.alpha + self.beta + 1.0);
        self.nodes.iter().zip(&self.weights).map(move |(&x, &w)| (0.5 * (x + 1.0), w * scale))
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let hl = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = hl * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * hl, ((k - g) * hl).abs())
}

/// Adaptive 7/15-point Gauss-Kronrod quadrature to absolute tolerance `tol`.
///
/// Returns `None` if the interval budget is exhausted before the error
/// estimate drops below `tol`.
pub fn adaptive_gk(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, max_intervals: usize) -> Option<f64> {
    let mut stack = vec![(a, b)];
    let mut total = 0.0;
    let mut count = 0;
    let width = b - a;
    while let Some((lo, hi)) = stack.pop() {
        count += 1;
        if count > max_intervals {
            return None;
        }
        let (v, err) = gk15(&f, lo, hi);
        let budget = tol * (hi - lo) / width;
        if err <= budget.max(1e-300) || (hi - lo) < 1e-12 * width {
            total += v;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi));
            stack.push((lo, mid));
        }
    }
    Some(total)
}
