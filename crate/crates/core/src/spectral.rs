//! Periodic grids and the FFT backend used by every gridded computation.
//!
//! Fields are stored row-major: for `d = 2` the node `(i0, i1)` lives at
//! `i0 * m + i1` and `i0` indexes the first coordinate axis.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::real::Real;

/// Uniform periodic grid on the box `[0, L)^d` with `m` nodes per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    dim: usize,
    resolution: usize,
    length: T,
}

impl<T: Real> Grid<T> {
    pub fn new(dim: usize, resolution: usize, length: T) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::param("dim", format!("supported dimensions are 1 and 2, got {dim}")));
        }
        if resolution < 2 {
            return Err(Error::param("resolution", "need at least 2 nodes per axis"));
        }
        if !(length > T::zero()) || !length.is_finite() {
            return Err(Error::param("length", "box side must be positive and finite"));
        }
        Ok(Self {
            dim,
            resolution,
            length,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn length(&self) -> T {
        self.length
    }

    /// Number of nodes, `m^d`.
    pub fn len(&self) -> usize {
        self.resolution.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> T {
        self.length / T::from_usize_exact(self.resolution)
    }

    pub fn cell_volume(&self) -> T {
        self.spacing().powi(self.dim as i32)
    }

    pub fn volume(&self) -> T {
        self.length.powi(self.dim as i32)
    }

    /// Per-axis node indices of a flat index.
    pub fn unflatten(&self, flat: usize) -> [usize; 2] {
        if self.dim == 1 {
            [flat, 0]
        } else {
            [flat / self.resolution, flat % self.resolution]
        }
    }

    /// Physical coordinates of node `flat`.
    pub fn node(&self, flat: usize) -> [T; 2] {
        let h = self.spacing();
        let [i0, i1] = self.unflatten(flat);
        [T::from_usize_exact(i0) * h, T::from_usize_exact(i1) * h]
    }

    /// Signed integer wavenumber of FFT index `i` along one axis.
    pub fn wavenumber(&self, i: usize) -> i64 {
        let m = self.resolution;
        if i < m.div_ceil(2) {
            i as i64
        } else {
            i as i64 - m as i64
        }
    }

    pub fn is_nyquist(&self, i: usize) -> bool {
        self.resolution.is_multiple_of(2) && i == self.resolution / 2
    }

    /// Angular frequency `2 pi k / L` of FFT index `i`.
    pub fn angular(&self, i: usize) -> T {
        T::lit(2.0) * T::PI() * T::lit(self.wavenumber(i) as f64) / self.length
    }

    /// Angular frequency vector of flat spectral index `flat`.
    pub fn frequency(&self, flat: usize) -> [T; 2] {
        let [i0, i1] = self.unflatten(flat);
        if self.dim == 1 {
            [self.angular(i0), T::zero()]
        } else {
            [self.angular(i0), self.angular(i1)]
        }
    }

    /// Wraps a coordinate into `[0, L)`.
    pub fn wrap(&self, x: T) -> T {
        let l = self.length;
        let mut y = x - l * (x / l).floor();
        if y >= l {
            y = y - l;
        }
        if y < T::zero() {
            y = T::zero();
        }
        y
    }

    /// Minimum-image displacement.
    pub fn minimum_image(&self, dx: T) -> T {
        dx - self.length * (dx / self.length).round()
    }

    pub fn same_geometry(&self, other: &Grid<T>) -> bool {
        self == other
    }
}

/// FFT plans for one grid.
#[derive(Clone)]
pub struct Spectral<T: Real> {
    grid: Grid<T>,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Real> std::fmt::Debug for Spectral<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl<T: Real> Spectral<T> {
    pub fn new(grid: Grid<T>) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(grid.resolution());
        let inverse = planner.plan_fft_inverse(grid.resolution());
        Self {
            grid,
            forward,
            inverse,
        }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    fn transform(&self, data: &mut [Complex<T>], plan: &Arc<dyn Fft<T>>) {
        let m = self.grid.resolution();
        plan.process(data);
        if self.grid.dim() == 2 {
            let mut column = vec![Complex::new(T::zero(), T::zero()); m * m];
            for i0 in 0..m {
                for i1 in 0..m {
                    column[i1 * m + i0] = data[i0 * m + i1];
                }
            }
            plan.process(&mut column);
            for i0 in 0..m {
                for i1 in 0..m {
                    data[i0 * m + i1] = column[i1 * m + i0];
                }
            }
        }
    }

    /// Unnormalised forward DFT of real nodal values.
    pub fn forward(&self, values: &[T]) -> Vec<Complex<T>> {
        debug_assert_eq!(values.len(), self.grid.len());
        let mut data: Vec<Complex<T>> = values.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.transform(&mut data, &self.forward);
        data
    }

    /// Inverse DFT normalised by `m^d`, keeping the real part.
    pub fn inverse(&self, mut spectrum: Vec<Complex<T>>) -> Vec<T> {
        self.transform(&mut spectrum, &self.inverse);
        let scale = T::one() / T::from_usize_exact(self.grid.len());
        spectrum.into_iter().map(|c| c.re * scale).collect()
    }

    /// Multiplies a spectrum by `i * xi_axis`, zeroing the Nyquist mode.
    pub fn differentiate_spectrum(&self, spectrum: &[Complex<T>], axis: usize) -> Vec<Complex<T>> {
        spectrum
            .iter()
            .enumerate()
            .map(|(flat, &c)| {
                let idx = self.grid.unflatten(flat)[axis];
                if self.grid.is_nyquist(idx) {
                    Complex::new(T::zero(), T::zero())
                } else {
                    let xi = self.grid.angular(idx);
                    Complex::new(-c.im * xi, c.re * xi)
                }
            })
            .collect()
    }

    /// Spectral partial derivative along `axis`.
    pub fn derivative(&self, values: &[T], axis: usize) -> Vec<T> {
        let spec = self.forward(values);
        self.inverse(self.differentiate_spectrum(&spec, axis))
    }

    /// Zeroes every mode with `3 |k| >= m` along some axis.
    pub fn dealias(&self, spectrum: &mut [Complex<T>]) {
        let m = self.grid.resolution() as i64;
        for (flat, c) in spectrum.iter_mut().enumerate() {
            let idx = self.grid.unflatten(flat);
            let kill = (0..self.grid.dim()).any(|a| 3 * self.grid.wavenumber(idx[a]).abs() >= m);
            if kill {
                *c = Complex::new(T::zero(), T::zero());
            }
        }
    }

    /// Applies a real radial-or-not Fourier multiplier `mult(xi)`.
    pub fn apply_multiplier(&self, spectrum: &mut [Complex<T>], mult: impl Fn([T; 2]) -> T) {
        for (flat, c) in spectrum.iter_mut().enumerate() {
            let m = mult(self.grid.frequency(flat));
            *c = *c * m;
        }
    }

    /// Band-limited resampling onto another grid with the same box.
    pub fn resample(&self, values: &[T], target: &Grid<T>) -> Result<Vec<T>> {
        if target.dim() != self.grid.dim() || target.length() != self.grid.length() {
            return Err(Error::param("target", "resampling requires the same box and dimension"));
        }
        let src = self.forward(values);
        let ms = self.grid.resolution();
        let mt = target.resolution();
        let kmax = (ms.min(mt) as i64 - 1) / 2;
        let index = |k: i64, m: usize| -> usize {
            if k >= 0 {
                k as usize
            } else {
                (m as i64 + k) as usize
            }
        };
        let ratio = T::from_usize_exact(target.len()) / T::from_usize_exact(self.grid.len());
        let mut out = vec![Complex::new(T::zero(), T::zero()); target.len()];
        if self.grid.dim() == 1 {
            for k in -kmax..=kmax {
                out[index(k, mt)] = src[index(k, ms)] * ratio;
            }
        } else {
            for k0 in -kmax..=kmax {
                for k1 in -kmax..=kmax {
                    out[index(k0, mt) * mt + index(k1, mt)] = src[index(k0, ms) * ms + index(k1, ms)] * ratio;
                }
            }
        }
        Ok(Spectral::new(target.clone()).inverse(out))
    }

    /// Trigonometric interpolant of nodal values.
    pub fn interpolant(&self, values: &[T]) -> TrigInterpolant<T> {
        let spectrum = self.forward(values);
        let gradients = (0..self.grid.dim())
            .map(|a| self.inverse(self.differentiate_spectrum(&spectrum, a)))
            .collect();
        TrigInterpolant {
            grid: self.grid.clone(),
            spectrum,
            nodal: values.to_vec(),
            nodal_gradient: gradients,
        }
    }
}

/// Per-axis phase factors of the trigonometric interpolant at one coordinate.
struct AxisPhases<T> {
    value: Vec<Complex<T>>,
    slope: Vec<Complex<T>>,
}

fn axis_phases<T: Real>(grid: &Grid<T>, x: T) -> AxisPhases<T> {
    let m = grid.resolution();
    let two_pi_over_l = T::lit(2.0) * T::PI() / grid.length();
    let mut value = vec![Complex::new(T::zero(), T::zero()); m];
    let mut slope = vec![Complex::new(T::zero(), T::zero()); m];
    let theta = two_pi_over_l * x;
    let (s1, c1) = theta.sin_cos();
    let base = Complex::new(c1, s1);
    let mut pos = Complex::new(T::one(), T::zero());
    let half = m / 2;
    for k in 0..=half {
        if k > 0 {
            // reseed periodically to keep the recurrence accurate
            pos = if k % 64 == 0 {
                let (s, c) = (theta * T::from_usize_exact(k)).sin_cos();
                Complex::new(c, s)
            } else {
                pos * base
            };
        }
        let kf = T::from_usize_exact(k);
        if grid.is_nyquist(k) {
            value[k] = Complex::new(pos.re, T::zero());
            slope[k] = Complex::new(-two_pi_over_l * kf * pos.im, T::zero());
            continue;
        }
        value[k] = pos;
        slope[k] = Complex::new(-pos.im, pos.re) * (two_pi_over_l * kf);
        if k > 0 {
            let neg = m - k;
            value[neg] = pos.conj();
            slope[neg] = Complex::new(-pos.im, -pos.re) * (two_pi_over_l * kf);
        }
    }
    AxisPhases { value, slope }
}

/// Spectral (trigonometric) interpolation of a periodic field and its gradient.
#[derive(Clone, Debug)]
pub struct TrigInterpolant<T> {
    grid: Grid<T>,
    spectrum: Vec<Complex<T>>,
    nodal: Vec<T>,
    nodal_gradient: Vec<Vec<T>>,
}

impl<T: Real> TrigInterpolant<T> {
    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    fn node_index(&self, x: &[T]) -> Option<usize> {
        let h = self.grid.spacing();
        let m = self.grid.resolution();
        let mut flat = 0usize;
        for &xa in x.iter().take(self.grid.dim()) {
            let y = self.grid.wrap(xa);
            let j = (y / h).round();
            if j * h != y {
                return None;
            }
            let j = j.to_usize()? % m;
            flat = flat * m + j;
        }
        Some(flat)
    }

    /// Value at `x`; nodes return the stored value exactly.
    pub fn value(&self, x: &[T]) -> T {
        self.value_and_gradient(x).0
    }

    /// Value and gradient at `x` (gradient has `dim` entries).
    pub fn value_and_gradient(&self, x: &[T]) -> (T, Vec<T>) {
        let d = self.grid.dim();
        if let Some(flat) = self.node_index(x) {
            let grad = (0..d).map(|a| self.nodal_gradient[a][flat]).collect();
            return (self.nodal[flat], grad);
        }
        let m = self.grid.resolution();
        let norm = T::one() / T::from_usize_exact(self.grid.len());
        let zero = Complex::new(T::zero(), T::zero());
        if d == 1 {
            let p = axis_phases(&self.grid, x[0]);
            let mut v = zero;
            let mut g = zero;
            for i in 0..m {
                v = v + self.spectrum[i] * p.value[i];
                g = g + self.spectrum[i] * p.slope[i];
            }
            (v.re * norm, vec![g.re * norm])
        } else {
            let p0 = axis_phases(&self.grid, x[0]);
            let p1 = axis_phases(&self.grid, x[1]);
            let mut v = zero;
            let mut g0 = zero;
            let mut g1 = zero;
            for i0 in 0..m {
                let mut row_v = zero;
                let mut row_s = zero;
                for i1 in 0..m {
                    let c = self.spectrum[i0 * m + i1];
                    row_v = row_v + c * p1.value[i1];
                    row_s = row_s + c * p1.slope[i1];
                }
                v = v + row_v * p0.value[i0];
                g0 = g0 + row_v * p0.slope[i0];
                g1 = g1 + row_s * p0.value[i0];
            }
            (v.re * norm, vec![g0.re * norm, g1.re * norm])
        }
    }
}
