//! Moderate-interaction mollifiers.
//!
//! The base density `phi_1^r` is a unit profile `psi` dilated by a bandwidth
//! `b`; its self-convolution is `phi_1`. With `eps_N = b N^(-beta/d)` every
//! member of the family is a dilation of a unit profile:
//!
//! ```text
//! phi_N^r(x) = N^beta phi_1^r(N^(beta/d) x) = eps_N^-d psi(x / eps_N)
//! phi_N(x)   = N^beta phi_1(N^(beta/d) x)   = eps_N^-d (psi * psi)(x / eps_N)
//! ```
//!
//! so `phi_N^r * phi_N^r = phi_N` and every member has unit mass.

use std::sync::{Arc, OnceLock};

use rustfft::num_complex::Complex;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::spectral::{Grid, Spectral};

/// Two-sided 99.99% quantile of the standard normal.
const GAUSS_MASS_1D: f64 = 3.890_591_886_413_12;
/// Radius holding 99.99% of a standard two-dimensional normal, `sqrt(-2 ln 1e-4)`.
const GAUSS_MASS_2D: f64 = 4.291_932_052_178_1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaseDensity {
    /// Standard normal density.
    Gaussian,
    /// Normalised `exp(-1 / (1 - |u|^2))` on the unit ball.
    Bump,
}

impl std::str::FromStr for BaseDensity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "bump" => Ok(Self::Bump),
            other => Err(Error::Parse(format!("unknown kernel base `{other}` (gaussian|bump)"))),
        }
    }
}

impl std::fmt::Display for BaseDensity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Gaussian => "gaussian",
            Self::Bump => "bump",
        })
    }
}

/// Radial table of the unit bump and its self-convolution.
#[derive(Debug)]
struct BumpTable {
    norm: f64,
    step: f64,
    conv: Vec<f64>,
    conv_slope: Vec<f64>,
    conv_curve: Vec<f64>,
}

fn bump_raw(r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r2)).exp()
    }
}

/// `d/dr` of the raw bump divided by `r`, so the gradient is `u * bump_slope_over_r`.
fn bump_slope_over_r(r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        let w = 1.0 - r2;
        -2.0 * (-1.0 / w).exp() / (w * w)
    }
}

impl BumpTable {
    fn build(dim: usize) -> Self {
        let n = 20_000;
        let norm = if dim == 1 {
            let h = 2.0 / n as f64;
            (0..=n).map(|i| bump_raw((-1.0 + i as f64 * h).powi(2))).sum::<f64>() * h
        } else {
            let h = 1.0 / n as f64;
            2.0 * std::f64::consts::PI * (0..=n).map(|i| {
                let r = i as f64 * h;
                bump_raw(r * r) * r
            }).sum::<f64>() * h
        };
        let c = 1.0 / norm;
        let points = 1025;
        let step = 2.0 / (points - 1) as f64;
        let mut conv = vec![0.0; points];
        let mut conv_slope = vec![0.0; points];
        if dim == 1 {
            let q = 4000;
            let h = 2.0 / q as f64;
            for (k, (v, s)) in conv.iter_mut().zip(conv_slope.iter_mut()).enumerate() {
                let x = k as f64 * step;
                let (mut a, mut b) = (0.0, 0.0);
                for i in 0..=q {
                    let y = -1.0 + i as f64 * h;
                    let u = x - y;
                    let w = bump_raw(y * y);
                    a += w * bump_raw(u * u);
                    b += w * u * bump_slope_over_r(u * u);
                }
                *v = a * h * c * c;
                *s = b * h * c * c;
            }
        } else {
            let q = 256;
            let h = 2.0 / q as f64;
            for (k, (v, s)) in conv.iter_mut().zip(conv_slope.iter_mut()).enumerate() {
                let x = k as f64 * step;
                let (mut a, mut b) = (0.0, 0.0);
                for i in 0..=q {
                    let y0 = -1.0 + i as f64 * h;
                    for j in 0..=q {
                        let y1 = -1.0 + j as f64 * h;
                        let w = bump_raw(y0 * y0 + y1 * y1);
                        if w == 0.0 {
                            continue;
                        }
                        let u0 = x - y0;
                        let r2 = u0 * u0 + y1 * y1;
                        a += w * bump_raw(r2);
                        b += w * u0 * bump_slope_over_r(r2);
                    }
                }
                *v = a * h * h * c * c;
                *s = b * h * h * c * c;
            }
        }
        let last = points - 1;
        let conv_curve = (0..points)
            .map(|k| {
                if k == 0 {
                    (conv_slope[1] - conv_slope[0]) / step
                } else if k == last {
                    (conv_slope[last] - conv_slope[last - 1]) / step
                } else {
                    (conv_slope[k + 1] - conv_slope[k - 1]) / (2.0 * step)
                }
            })
            .collect();
        Self {
            norm: c,
            step,
            conv,
            conv_slope,
            conv_curve,
        }
    }

    /// Cubic Hermite interpolation of `(values, slopes)` at radius `r`.
    fn hermite(&self, values: &[f64], slopes: &[f64], r: f64) -> f64 {
        let pos = r / self.step;
        let k = pos.floor() as usize;
        if k + 1 >= values.len() {
            return 0.0;
        }
        let t = pos - k as f64;
        let h = self.step;
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * values[k]
            + (t3 - 2.0 * t2 + t) * h * slopes[k]
            + (-2.0 * t3 + 3.0 * t2) * values[k + 1]
            + (t3 - t2) * h * slopes[k + 1]
    }

    fn conv_value(&self, r: f64) -> f64 {
        self.hermite(&self.conv, &self.conv_slope, r)
    }

    fn conv_radial_slope(&self, r: f64) -> f64 {
        self.hermite(&self.conv_slope, &self.conv_curve, r)
    }
}

/// The mollifier family `phi_N^r`, `phi_N` for one base density, exponent and bandwidth.
#[derive(Clone, Debug)]
pub struct KernelFamily<T> {
    base: BaseDensity,
    beta: T,
    dim: usize,
    bandwidth: T,
    table: Arc<OnceLock<BumpTable>>,
}

impl<T: Real> KernelFamily<T> {
    pub fn new(base: BaseDensity, beta: T, dim: usize, bandwidth: T) -> Result<Self> {
        if !(beta > T::zero() && beta < T::one()) {
            return Err(Error::param("beta", "need 0 < beta < 1"));
        }
        if dim != 1 && dim != 2 {
            return Err(Error::param("dim", "kernels are implemented for d = 1, 2"));
        }
        if !(bandwidth > T::zero()) || !bandwidth.is_finite() {
            return Err(Error::param("bandwidth", "bandwidth must be positive"));
        }
        Ok(Self {
            base,
            beta,
            dim,
            bandwidth,
            table: Arc::new(OnceLock::new()),
        })
    }

    pub fn gaussian(beta: T, dim: usize, bandwidth: T) -> Result<Self> {
        Self::new(BaseDensity::Gaussian, beta, dim, bandwidth)
    }

    pub fn base(&self) -> BaseDensity {
        self.base
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bandwidth(&self) -> T {
        self.bandwidth
    }

    fn table(&self) -> &BumpTable {
        self.table.get_or_init(|| BumpTable::build(self.dim))
    }

    /// Width `eps_N = b N^(-beta/d)` of `phi_N^r`.
    pub fn width(&self, n: usize) -> T {
        if n == 1 {
            return self.bandwidth;
        }
        let d = T::from_usize_exact(self.dim);
        self.bandwidth / T::from_usize_exact(n).powf(self.beta / d)
    }

    fn inv_volume(&self, eps: T) -> T {
        T::one() / eps.powi(self.dim as i32)
    }

    fn radius2(x: &[T]) -> T {
        x.iter().fold(T::zero(), |a, &v| a + v * v)
    }

    /// Unit profile `psi(u)` and `grad psi(u) = u * slope`.
    fn unit_r(&self, u: &[T]) -> (T, T) {
        let r2 = Self::radius2(u);
        match self.base {
            BaseDensity::Gaussian => {
                let c = (T::lit(2.0) * T::PI()).powf(-T::lit(self.dim as f64) / T::lit(2.0));
                let v = c * (-r2 / T::lit(2.0)).exp();
                (v, -v)
            }
            BaseDensity::Bump => {
                let r2 = r2.to_f64_lossy();
                let c = self.table().norm;
                (T::lit(c * bump_raw(r2)), T::lit(c * bump_slope_over_r(r2)))
            }
        }
    }

    /// Unit self-convolution `(psi * psi)(u)` and `grad = u * slope`.
    fn unit(&self, u: &[T]) -> (T, T) {
        let r2 = Self::radius2(u);
        match self.base {
            BaseDensity::Gaussian => {
                let c = (T::lit(4.0) * T::PI()).powf(-T::lit(self.dim as f64) / T::lit(2.0));
                let v = c * (-r2 / T::lit(4.0)).exp();
                (v, -v / T::lit(2.0))
            }
            BaseDensity::Bump => {
                let r = r2.to_f64_lossy().sqrt();
                let t = self.table();
                let v = t.conv_value(r);
                let slope = if r > 0.0 { t.conv_radial_slope(r) / r } else { t.conv_curve[0] };
                (T::lit(v), T::lit(slope))
            }
        }
    }

    fn scaled(&self, eps: T, x: &[T], unit: impl Fn(&[T]) -> (T, T)) -> (T, [T; 2]) {
        let mut u = [T::zero(); 2];
        for (a, &xa) in x.iter().take(self.dim).enumerate() {
            u[a] = xa / eps;
        }
        let (v, slope) = unit(&u[..self.dim]);
        let amp = self.inv_volume(eps);
        let g = amp * slope / eps;
        (amp * v, [g * u[0], g * u[1]])
    }

    /// `phi_N(x) = N^beta phi_1(N^(beta/d) x)`.
    pub fn phi_n(&self, n: usize, x: &[T]) -> T {
        self.scaled(self.width(n), x, |u| self.unit(u)).0
    }

    /// `grad phi_N(x)`; the second entry is zero when `d = 1`.
    pub fn grad_phi_n(&self, n: usize, x: &[T]) -> [T; 2] {
        self.scaled(self.width(n), x, |u| self.unit(u)).1
    }

    /// `phi_N(x)` and its gradient together.
    pub fn phi_n_with_grad(&self, n: usize, x: &[T]) -> (T, [T; 2]) {
        self.scaled(self.width(n), x, |u| self.unit(u))
    }

    /// `phi_N^r(x) = N^beta phi_1^r(N^(beta/d) x)`.
    pub fn phi_r_n(&self, n: usize, x: &[T]) -> T {
        self.scaled(self.width(n), x, |u| self.unit_r(u)).0
    }

    pub fn grad_phi_r_n(&self, n: usize, x: &[T]) -> [T; 2] {
        self.scaled(self.width(n), x, |u| self.unit_r(u)).1
    }

    /// Closed-form Fourier transform of `phi_N^r` at angular frequency `xi`, when available.
    pub fn fourier_r(&self, n: usize, xi: [T; 2]) -> Option<T> {
        match self.base {
            BaseDensity::Gaussian => {
                let eps = self.width(n);
                let k2 = xi.iter().take(self.dim).fold(T::zero(), |a, &v| a + v * v);
                Some((-eps * eps * k2 / T::lit(2.0)).exp())
            }
            BaseDensity::Bump => None,
        }
    }

    /// Radius containing 99.99% of the mass of `phi_N^r`.
    pub fn mass_radius_r(&self, n: usize) -> T {
        let unit = match (self.base, self.dim) {
            (BaseDensity::Gaussian, 1) => GAUSS_MASS_1D,
            (BaseDensity::Gaussian, _) => GAUSS_MASS_2D,
            (BaseDensity::Bump, _) => 1.0,
        };
        T::lit(unit) * self.width(n)
    }

    /// Radius containing 99.99% of the mass of `phi_N`.
    pub fn mass_radius(&self, n: usize) -> T {
        let factor = match self.base {
            BaseDensity::Gaussian => std::f64::consts::SQRT_2,
            BaseDensity::Bump => 2.0,
        };
        T::lit(factor) * self.mass_radius_r(n)
    }

    /// Refuses kernels whose effective support reaches half the box.
    pub fn check_support(&self, n: usize, grid: &Grid<T>) -> Result<()> {
        let radius = self.mass_radius(n);
        let half = grid.length() / T::lit(2.0);
        if radius >= half {
            return Err(Error::KernelSupport {
                radius: radius.to_f64_lossy(),
                half_box: half.to_f64_lossy(),
            });
        }
        Ok(())
    }

    /// Grid cells per kernel width `eps_N`.
    pub fn cells_per_width(&self, n: usize, grid: &Grid<T>) -> T {
        self.width(n) / grid.spacing()
    }

    /// Fourier multiplier of `phi_N^r` at every spectral index of the grid.
    ///
    /// Closed form for the Gaussian; for other bases the periodised kernel is
    /// sampled and transformed, which requires at least four cells per width.
    pub fn multiplier_r(&self, n: usize, spectral: &Spectral<T>) -> Result<Vec<T>> {
        let grid = spectral.grid();
        if grid.dim() != self.dim {
            return Err(Error::GridMismatch("kernel and grid dimensions differ".into()));
        }
        if self.fourier_r(n, [T::zero(); 2]).is_some() {
            return Ok((0..grid.len())
                .map(|flat| self.fourier_r(n, grid.frequency(flat)).unwrap_or(T::zero()))
                .collect());
        }
        let cells = self.cells_per_width(n, grid);
        if cells < T::lit(4.0) {
            return Err(Error::UnderResolved {
                cells_per_bandwidth: cells.to_f64_lossy(),
                required: 4,
            });
        }
        let samples: Vec<T> = (0..grid.len())
            .map(|flat| {
                let node = grid.node(flat);
                let x = [grid.minimum_image(node[0]), grid.minimum_image(node[1])];
                self.phi_r_n(n, &x[..self.dim])
            })
            .collect();
        let vol = grid.cell_volume();
        Ok(spectral.forward(&samples).into_iter().map(|c| c.re * vol).collect())
    }

    /// Evaluates the technical hypotheses on `phi_1^r` (report-only).
    pub fn check_hypotheses(&self) -> HypothesisReport {
        let profile = |x: &[f64]| {
            let xt: Vec<T> = x.iter().map(|&v| T::lit(v)).collect();
            let (v, g) = self.scaled(self.bandwidth, &xt, |u| self.unit_r(u));
            (v.to_f64_lossy(), [g[0].to_f64_lossy(), g[1].to_f64_lossy()])
        };
        check_hypotheses_for(profile, self.dim)
    }
}

/// `f * phi_N^r` for a periodic gridded field.
pub fn mollify<T: Real>(field: &[T], spectral: &Spectral<T>, kernel: &KernelFamily<T>, n: usize) -> Result<Vec<T>> {
    let grid = spectral.grid();
    if field.len() != grid.len() {
        return Err(Error::GridMismatch("field does not match the grid".into()));
    }
    kernel.check_support(n, grid)?;
    let mult = kernel.multiplier_r(n, spectral)?;
    let mut spec = spectral.forward(field);
    for (c, &m) in spec.iter_mut().zip(&mult) {
        *c = *c * m;
    }
    Ok(spectral.inverse(spec))
}

/// `|f - f * phi_N^r|_inf / (N^(-beta/d) |grad f|_inf)` on the grid nodes.
pub fn mollification_ratio<T: Real>(
    field: &[T],
    grad_sup: T,
    spectral: &Spectral<T>,
    kernel: &KernelFamily<T>,
    n: usize,
) -> Result<T> {
    let smooth = mollify(field, spectral, kernel, n)?;
    let sup = field
        .iter()
        .zip(&smooth)
        .fold(T::zero(), |a, (&f, &g)| a.max((f - g).abs()));
    let d = T::from_usize_exact(kernel.dim());
    let rate = T::from_usize_exact(n).powf(-kernel.beta() / d);
    Ok(sup / (rate * grad_sup))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HypothesisStatus {
    Pass,
    Fail,
    /// The Fourier transform of the base vanishes somewhere, so the ratio is undefined.
    Inapplicable,
}

impl std::fmt::Display for HypothesisStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Pass => "pass",
            Self::Fail => "fail",
            Self::Inapplicable => "inapplicable",
        })
    }
}

/// Worst ratios of the three kernel hypotheses over test lattices.
#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisReport {
    /// `sup (1 + |x|^(d+2)) |phi_1^r(x)|` over `1 <= |x| <= 20`.
    pub c1_margin: f64,
    /// `sup |U_alpha^q(x)| (1 + |x|^(d+1))^(1/2)` over `|alpha| = L + 1`.
    pub cotauj_margin: f64,
    /// `sup |U_alpha^q^(lambda)| / |phi_1^r^(lambda)|` over `1 <= |alpha| <= L`.
    pub cotawildeu_ratio: f64,
    pub cotawildeu_status: HypothesisStatus,
    /// `L = floor((d + 2) / 2)`.
    pub order: usize,
}

/// Multi-indices of length `dim` with total order `n`.
fn multi_indices(dim: usize, n: usize) -> Vec<[usize; 2]> {
    if dim == 1 {
        vec![[n, 0]]
    } else {
        (0..=n).map(|a| [a, n - a]).collect()
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `U_alpha^q(x) = (-1)^(1+|alpha|) x^alpha / alpha! d_q phi(x)`.
fn u_value(alpha: [usize; 2], q: usize, x: &[f64], grad: [f64; 2]) -> f64 {
    let order = alpha[0] + alpha[1];
    let sign = if (1 + order).is_multiple_of(2) { 1.0 } else { -1.0 };
    let mut mono = 1.0;
    let mut fact = 1.0;
    for (a, &xa) in x.iter().enumerate() {
        mono *= xa.powi(alpha[a] as i32);
        fact *= factorial(alpha[a]);
    }
    sign * mono / fact * grad[q]
}

/// Hypothesis report for an arbitrary test function given as `x -> (value, gradient)`.
pub fn check_hypotheses_for(profile: impl Fn(&[f64]) -> (f64, [f64; 2]), dim: usize) -> HypothesisReport {
    let order = (dim + 2) / 2;
    let directions: Vec<[f64; 2]> = if dim == 1 {
        vec![[1.0, 0.0], [-1.0, 0.0]]
    } else {
        (0..16)
            .map(|k| {
                let th = std::f64::consts::PI * k as f64 / 8.0;
                [th.cos(), th.sin()]
            })
            .collect()
    };
    let radii = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect::<Vec<_>>()
    };
    let df = dim as f64;

    let mut c1: f64 = 0.0;
    for r in radii(1.0, 20.0, 200) {
        for dir in &directions {
            let x = [r * dir[0], r * dir[1]];
            let (v, _) = profile(&x[..dim]);
            c1 = c1.max((1.0 + r.powf(df + 2.0)) * v.abs());
        }
    }

    let mut uj: f64 = 0.0;
    let mut probe = vec![0.0];
    probe.extend(radii(1e-3, 20.0, 300));
    for r in probe {
        for dir in &directions {
            let x = [r * dir[0], r * dir[1]];
            let (_, g) = profile(&x[..dim]);
            for alpha in multi_indices(dim, order + 1) {
                for q in 0..dim {
                    let u = u_value(alpha, q, &x[..dim], g);
                    uj = uj.max(u.abs() * (1.0 + r.powf(df + 1.0)).sqrt());
                }
            }
        }
    }

    let (ratio, status) = fourier_ratio(&profile, dim, order);
    HypothesisReport {
        c1_margin: c1,
        cotauj_margin: uj,
        cotawildeu_ratio: ratio,
        cotawildeu_status: status,
        order,
    }
}

/// Compares `|U^|` with `|phi^|` on the frequencies where `phi^` is resolved.
/// The ratio fails when its maximum over the upper half of that band exceeds
/// twice the maximum over the lower half (growth towards infinity).
fn fourier_ratio(profile: &impl Fn(&[f64]) -> (f64, [f64; 2]), dim: usize, order: usize) -> (f64, HypothesisStatus) {
    let m = if dim == 1 { 4096 } else { 256 };
    let half_width = 40.0;
    let grid = match Grid::new(dim, m, 2.0 * half_width) {
        Ok(g) => g,
        Err(_) => return (f64::NAN, HypothesisStatus::Inapplicable),
    };
    let spectral = Spectral::new(grid.clone());
    let coords: Vec<[f64; 2]> = (0..grid.len())
        .map(|flat| {
            let node = grid.node(flat);
            [grid.minimum_image(node[0]), grid.minimum_image(node[1])]
        })
        .collect();
    let evals: Vec<(f64, [f64; 2])> = coords.iter().map(|x| profile(&x[..dim])).collect();
    let base: Vec<Complex<f64>> = spectral.forward(&evals.iter().map(|e| e.0).collect::<Vec<_>>());
    let peak = base.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return (0.0, HypothesisStatus::Pass);
    }
    let resolved: Vec<usize> = (0..grid.len()).filter(|&k| base[k].norm() > 1e-9 * peak).collect();
    let radius = |k: usize| {
        let f = grid.frequency(k);
        (f[0] * f[0] + f[1] * f[1]).sqrt()
    };
    let band = resolved.iter().map(|&k| radius(k)).fold(0.0, f64::max);
    // a sign change of the real transform inside the band means a zero of phi^
    let mut signs = resolved.iter().map(|&k| base[k].re.signum());
    let first = signs.next().unwrap_or(1.0);
    if signs.any(|s| s != first) {
        return (f64::INFINITY, HypothesisStatus::Inapplicable);
    }
    let (mut lower, mut upper) = (0.0f64, 0.0f64);
    for n in 1..=order {
        for alpha in multi_indices(dim, n) {
            for q in 0..dim {
                let u: Vec<f64> = coords
                    .iter()
                    .zip(&evals)
                    .map(|(x, e)| u_value(alpha, q, &x[..dim], e.1))
                    .collect();
                let uh = spectral.forward(&u);
                for &k in &resolved {
                    let r = uh[k].norm() / base[k].norm();
                    if radius(k) <= 0.5 * band {
                        lower = lower.max(r);
                    } else {
                        upper = upper.max(r);
                    }
                }
            }
        }
    }
    let worst = lower.max(upper);
    let status = if upper > 2.0 * lower.max(f64::MIN_POSITIVE) && upper > 1e-12 {
        HypothesisStatus::Fail
    } else {
        HypothesisStatus::Pass
    };
    (worst, status)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_peak_closed_form() {
        for &(d, beta) in &[(1usize, 0.6), (2, 0.4)] {
            let k = KernelFamily::gaussian(beta, d, 1.0).unwrap();
            for &n in &[1usize, 16, 1000] {
                let want = (n as f64).powf(beta) * (4.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0);
                let got = k.phi_n(n, &[0.0, 0.0][..d]);
                assert!((got - want).abs() < 1e-12 * want, "{got} vs {want}");
                assert_eq!(k.grad_phi_n(n, &[0.0, 0.0][..d]), [0.0, 0.0]);
            }
        }
    }

    #[test]
    fn scaling_consistency_at_one() {
        let k = KernelFamily::gaussian(0.5, 1, 0.3).unwrap();
        let x = [0.17];
        let direct = (4.0 * std::f64::consts::PI * 0.09).powf(-0.5) * (-(0.17f64 * 0.17) / (4.0 * 0.09)).exp();
        assert!((k.phi_n(1, &x) - direct).abs() < 1e-14);
    }

    #[test]
    fn gradient_is_antisymmetric() {
        for base in [BaseDensity::Gaussian, BaseDensity::Bump] {
            let k = KernelFamily::new(base, 0.6, 2, 0.5).unwrap();
            let x = [0.11, -0.07];
            let g = k.grad_phi_n(64, &x);
            let h = k.grad_phi_n(64, &[-0.11, 0.07]);
            assert_eq!(g[0], -h[0]);
            assert_eq!(g[1], -h[1]);
        }
    }

    #[test]
    fn gradient_matches_finite_difference() {
        for base in [BaseDensity::Gaussian, BaseDensity::Bump] {
            let k = KernelFamily::<f64>::new(base, 0.6, 1, 1.0).unwrap();
            for &x in &[0.3, 0.9, 1.4] {
                let h = 1e-5;
                let fd = (k.phi_n(1, &[x + h]) - k.phi_n(1, &[x - h])) / (2.0 * h);
                let g = k.grad_phi_n(1, &[x])[0];
                assert!((fd - g).abs() < 1e-5 * (1.0 + g.abs()), "{base:?} {x}: {fd} vs {g}");
            }
        }
    }

    #[test]
    fn unit_mass_by_quadrature() {
        for base in [BaseDensity::Gaussian, BaseDensity::Bump] {
            let k = KernelFamily::new(base, 0.7, 1, 0.05).unwrap();
            for &n in &[1usize, 100, 10_000] {
                let m = 40_000;
                let half = 4.0 * k.mass_radius(n);
                let h = 2.0 * half / m as f64;
                let s: f64 = (0..m).map(|i| k.phi_n(n, &[-half + i as f64 * h]) * h).sum();
                let r: f64 = (0..m).map(|i| k.phi_r_n(n, &[-half + i as f64 * h]) * h).sum();
                assert!((s - 1.0).abs() < 1e-6, "{base:?} N={n}: {s}");
                assert!((r - 1.0).abs() < 1e-8, "{base:?} N={n}: {r}");
            }
        }
    }

    #[test]
    fn mollify_preserves_constants() {
        let grid = Grid::new(1, 128, 1.0).unwrap();
        let sp = Spectral::new(grid);
        let k = KernelFamily::<f64>::gaussian(0.6, 1, 0.05).unwrap();
        let out = mollify(&[2.5; 128], &sp, &k, 256).unwrap();
        assert!(out.iter().all(|&v| (v - 2.5).abs() < 1e-14));
    }

    #[test]
    fn mollify_refuses_wide_kernels() {
        let grid = Grid::new(1, 64, 1.0).unwrap();
        let sp = Spectral::new(grid);
        let k = KernelFamily::gaussian(0.6, 1, 0.5).unwrap();
        assert!(matches!(mollify(&[1.0; 64], &sp, &k, 1), Err(Error::KernelSupport { .. })));
    }

    #[test]
    fn zero_test_function_passes() {
        let r = check_hypotheses_for(|_| (0.0, [0.0, 0.0]), 1);
        assert_eq!(r.c1_margin, 0.0);
        assert_eq!(r.cotauj_margin, 0.0);
        assert_eq!(r.cotawildeu_status, HypothesisStatus::Pass);
    }

    #[test]
    fn gaussian_hypotheses() {
        let k = KernelFamily::gaussian(0.6, 1, 1.0).unwrap();
        let r = k.check_hypotheses();
        assert!(r.c1_margin.is_finite() && r.c1_margin < 1.0);
        assert!(r.cotauj_margin.is_finite() && r.cotauj_margin < 1.0);
        assert_eq!(r.cotawildeu_status, HypothesisStatus::Fail);
        assert_eq!(r.order, 1);
    }
}
