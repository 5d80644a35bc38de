//! Fourier multipliers on a zero-padded uniform grid.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::UniformGrid;

/// FFT workspace for a grid of `n` nodes padded to `2n`.
///
/// Data occupy the first `n` slots; the rest is zero so a kernel narrower than
/// the domain never wraps onto itself.
#[derive(Clone)]
pub struct PaddedFft {
    pub grid: UniformGrid,
    pub m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// angular wavenumber of each FFT slot
    pub k: Vec<f64>,
}

impl std::fmt::Debug for PaddedFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PaddedFft").field("grid", &self.grid).field("m", &self.m).finish()
    }
}

impl PaddedFft {
    pub fn new(grid: UniformGrid) -> Self {
        let m = 2 * grid.n;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let dk = 2.0 * std::f64::consts::PI / (m as f64 * grid.h);
        let k = (0..m)
            .map(|q| if q <= m / 2 { q as f64 * dk } else { (q as f64 - m as f64) * dk })
            .collect();
        Self { grid, m, forward, inverse, k }
    }

    /// Whether slot `q` is the (real-valued) Nyquist frequency.
    #[inline]
    pub fn is_nyquist(&self, q: usize) -> bool {
        q == self.m / 2
    }

    pub fn forward(&self, data: &[f64]) -> Vec<Complex64> {
        assert_eq!(data.len(), self.grid.n);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.m];
        for (b, &d) in buf.iter_mut().zip(data) {
            b.re = d;
        }
        self.forward.process(&mut buf);
        buf
    }

    /// Inverse transform; returns the real part on the unpadded nodes.
    pub fn inverse(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.inverse.process(&mut spec);
        let scale = 1.0 / self.m as f64;
        spec.iter().take(self.grid.n).map(|c| c.re * scale).collect()
    }

    /// DFT coefficient of slot `q` from a continuous Fourier transform value
    /// `f̂(k) = ∫ f(x) e^{-ikx} dx`.
    #[inline]
    pub fn coefficient_from_transform(&self, q: usize, fhat: Complex64) -> Complex64 {
        let phase = Complex64::from_polar(1.0, self.k[q] * self.grid.x0);
        fhat * phase / self.grid.h
    }

    /// `(ik)^order`, with odd orders zeroed at the Nyquist slot.
    #[inline]
    pub fn derivative_symbol(&self, q: usize, order: usize) -> Complex64 {
        if order % 2 == 1 && self.is_nyquist(q) {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::new(0.0, self.k[q]).powu(order as u32)
    }

    /// Applies the multiplier `(ik)^order e^{-t k^4}` to sampled data that
    /// decays to zero at both ends.
    pub fn apply(&self, data: &[f64], t: f64, order: usize) -> Vec<f64> {
        let mut spec = self.forward(data);
        for (q, c) in spec.iter_mut().enumerate() {
            let k = self.k[q];
            *c *= self.derivative_symbol(q, order) * (-t * k * k * k * k).exp();
        }
        self.inverse(spec)
    }
}
