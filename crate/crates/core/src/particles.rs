//! The interacting particle system on a periodic box.
//!
//! Each particle obeys
//!
//! ```text
//! dX^k = V^k dt
//! dV^k = -(1/N) sum_l grad phi_N(X^k - X^l) dt + sigma(t, X^k) dY
//! ```
//!
//! integrated by velocity Verlet for the interaction followed by a Young–Euler
//! kick with the driver increment. Interaction forces come either from the
//! direct pairwise sum (minimum image) or from a smooth particle-mesh scheme:
//! cardinal B-spline deposition, spline-factor deconvolution, the `phi_N`
//! Fourier multiplier, and spline-derivative interpolation.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex;

use crate::error::{Error, Result};
use crate::field::{Field, VectorField};
use crate::kernel::KernelFamily;
use crate::real::Real;
use crate::spectral::{Grid, Spectral};

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble<T> {
    length: T,
    dim: usize,
    positions: Vec<T>,
    velocities: Vec<T>,
    time: T,
}

impl<T: Real> ParticleEnsemble<T> {
    /// Flat `N * d` positions (wrapped into the box) and velocities.
    pub fn new(length: T, dim: usize, positions: Vec<T>, velocities: Vec<T>, time: T) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::param("dim", "particles live in d = 1 or 2"));
        }
        if positions.is_empty() || !positions.len().is_multiple_of(dim) || positions.len() != velocities.len() {
            return Err(Error::param("positions", "need N >= 1 particles with matching velocities"));
        }
        if !(length > T::zero()) {
            return Err(Error::param("length", "box side must be positive"));
        }
        if positions.iter().chain(&velocities).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                time: time.to_f64_lossy(),
                what: "particle state".into(),
            });
        }
        let mut ens = Self {
            length,
            dim,
            positions,
            velocities,
            time,
        };
        ens.wrap();
        Ok(ens)
    }

    fn wrap(&mut self) {
        let l = self.length;
        for x in &mut self.positions {
            if *x < T::zero() || *x >= l {
                let mut y = *x - l * (*x / l).floor();
                if y >= l {
                    y = y - l;
                }
                if y < T::zero() {
                    y = T::zero();
                }
                *x = y;
            }
        }
    }

    pub fn count(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn length(&self) -> T {
        self.length
    }

    pub fn time(&self) -> T {
        self.time
    }

    pub fn positions(&self) -> &[T] {
        &self.positions
    }

    pub fn velocities(&self) -> &[T] {
        &self.velocities
    }

    pub fn position(&self, k: usize) -> &[T] {
        &self.positions[k * self.dim..(k + 1) * self.dim]
    }

    pub fn velocity(&self, k: usize) -> &[T] {
        &self.velocities[k * self.dim..(k + 1) * self.dim]
    }

    /// Shifts every particle by `shift` (then wraps).
    pub fn translate(&mut self, shift: &[T]) {
        for k in 0..self.count() {
            for a in 0..self.dim {
                self.positions[k * self.dim + a] = self.positions[k * self.dim + a] + shift[a];
            }
        }
        self.wrap();
    }

    /// Particle indices in lexicographic order of `(position, velocity)`.
    ///
    /// Reductions run in this order, so relabelling particles leaves them bitwise unchanged.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.count()).collect();
        idx.sort_by(|&a, &b| {
            let pa = self.position(a).iter().chain(self.velocity(a));
            let pb = self.position(b).iter().chain(self.velocity(b));
            for (x, y) in pa.zip(pb) {
                let o = x.to_f64_lossy().total_cmp(&y.to_f64_lossy());
                if o != std::cmp::Ordering::Equal {
                    return o;
                }
            }
            a.cmp(&b)
        });
        idx
    }

    /// `(1/N) sum_k V^k`.
    pub fn mean_velocity(&self) -> Vec<T> {
        let n = T::from_usize_exact(self.count());
        (0..self.dim)
            .map(|q| {
                crate::exact::exact_sum((0..self.count()).map(|k| self.velocities[k * self.dim + q])) / n
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitStrategy {
    /// Midpoint quantiles of the density (tensor-stratified in two dimensions).
    Quantile,
    /// Independent draws from the density.
    Random { seed: u64 },
}

/// Phase factors `e^{i xi_k x}` in FFT index order; the Nyquist entry holds `cos`.
fn phases<T: Real>(m: usize, length: T, x: T) -> Vec<Complex<T>> {
    let w = T::lit(2.0) * T::PI() / length;
    let mut out = vec![Complex::new(T::zero(), T::zero()); m];
    let step = Complex::new((w * x).cos(), (w * x).sin());
    let mut z = Complex::new(T::one(), T::zero());
    let half = m / 2;
    for k in 0..=half {
        if k % 64 == 0 {
            let a = w * T::from_usize_exact(k) * x;
            z = Complex::new(a.cos(), a.sin());
        }
        if k == half && m.is_multiple_of(2) {
            out[k] = Complex::new(z.re, T::zero());
        } else {
            out[k] = z;
            if k > 0 {
                out[m - k] = z.conj();
            }
        }
        z = z * step;
    }
    out
}

/// Periodic density on `[0, L)` given by its Fourier coefficients, with a
/// closed-form antiderivative.
struct SpectralDensity<T> {
    coef: Vec<Complex<T>>,
    length: T,
}

impl<T: Real> SpectralDensity<T> {
    fn total(&self) -> T {
        self.coef[0].re * self.length
    }

    fn value(&self, x: T) -> T {
        let p = phases(self.coef.len(), self.length, x);
        self.coef.iter().zip(&p).fold(T::zero(), |a, (c, z)| a + (c * z).re)
    }

    fn cdf(&self, x: T) -> T {
        let m = self.coef.len();
        let w = T::lit(2.0) * T::PI() / self.length;
        let p = phases(m, self.length, x);
        let mut acc = self.coef[0].re * x;
        for k in 1..m {
            let kk = if k <= m / 2 { k as f64 } else { k as f64 - m as f64 };
            let xi = w * T::lit(kk);
            if m.is_multiple_of(2) && k == m / 2 {
                acc = acc + self.coef[k].re * (xi * x).sin() / xi;
                continue;
            }
            // c (e^{i xi x} - 1) / (i xi)
            let num = p[k] - Complex::new(T::one(), T::zero());
            let v = self.coef[k] * num * Complex::new(T::zero(), -T::one() / xi);
            acc = acc + v.re;
        }
        acc
    }

    /// Smallest root of `cdf(x) = u` by safeguarded Newton iteration.
    fn invert(&self, u: T) -> T {
        let total = self.total();
        let (mut lo, mut hi) = (T::zero(), self.length);
        let mut x = (u / total * self.length).max(lo).min(hi);
        let tol = T::lit(4.0) * T::epsilon() * total.abs();
        for _ in 0..200 {
            let r = self.cdf(x) - u;
            if r.abs() <= tol {
                break;
            }
            if r > T::zero() {
                hi = x;
            } else {
                lo = x;
            }
            let slope = self.value(x);
            let mut next = x - r / slope;
            if !(slope > T::zero()) || !(next > lo && next < hi) {
                next = (lo + hi) / T::lit(2.0);
            }
            if next == x || hi - lo <= T::epsilon() * self.length {
                break;
            }
            x = next;
        }
        x
    }
}

fn check_density<T: Real>(rho0: &Field<T>) -> Result<()> {
    let min = rho0.min();
    if !(min > T::zero()) {
        return Err(Error::NonPositiveDensity { min: min.to_f64_lossy() });
    }
    let mass = rho0.integral().to_f64_lossy();
    if (mass - 1.0).abs() > 1e-8 {
        return Err(Error::param("rho0", format!("initial density must have unit mass, got {mass}")));
    }
    Ok(())
}

/// Places `n` particles distributed according to `rho0` with velocities `v0(X)`.
pub fn init_from_fields<T: Real>(
    rho0: &Field<T>,
    v0: &VectorField<T>,
    n: usize,
    strategy: InitStrategy,
) -> Result<ParticleEnsemble<T>> {
    check_density(rho0)?;
    let grid = rho0.grid().clone();
    if !grid.same_geometry(v0.grid()) {
        return Err(Error::GridMismatch("density and velocity grids differ".into()));
    }
    if n == 0 {
        return Err(Error::param("n", "need at least one particle"));
    }
    let m = grid.resolution();
    let length = grid.length();
    let spectral = Spectral::new(grid.clone());
    let spec = spectral.forward(rho0.values());
    let mut rng = match strategy {
        InitStrategy::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        InitStrategy::Quantile => None,
    };
    let mut draw = |k: usize, count: usize| -> T {
        match rng.as_mut() {
            Some(r) => T::lit(r.random::<f64>()),
            None => (T::from_usize_exact(k) + T::lit(0.5)) / T::from_usize_exact(count),
        }
    };
    let mut positions = Vec::with_capacity(n * grid.dim());
    if grid.dim() == 1 {
        let inv = T::one() / T::from_usize_exact(m);
        let density = SpectralDensity {
            coef: spec.iter().map(|c| c * inv).collect(),
            length,
        };
        let total = density.total();
        for k in 0..n {
            positions.push(density.invert(draw(k, n) * total));
        }
    } else {
        let inv = T::one() / T::from_usize_exact(m * m);
        let marginal = SpectralDensity {
            coef: (0..m).map(|k0| spec[k0 * m] * inv * length).collect(),
            length,
        };
        let side = match strategy {
            InitStrategy::Quantile => {
                let s = (n as f64).sqrt().round() as usize;
                if s * s != n {
                    return Err(Error::param("n", "tensor quantile placement needs a perfect square N"));
                }
                s
            }
            InitStrategy::Random { .. } => n,
        };
        let conditional = |x0: T| {
            let p = phases(m, length, x0);
            SpectralDensity {
                coef: (0..m)
                    .map(|k1| (0..m).fold(Complex::new(T::zero(), T::zero()), |a, k0| a + spec[k0 * m + k1] * p[k0]) * inv)
                    .collect(),
                length,
            }
        };
        match strategy {
            InitStrategy::Quantile => {
                for i in 0..side {
                    let x0 = marginal.invert(draw(i, side) * marginal.total());
                    let cond = conditional(x0);
                    for j in 0..side {
                        positions.push(x0);
                        positions.push(cond.invert(draw(j, side) * cond.total()));
                    }
                }
            }
            InitStrategy::Random { .. } => {
                for k in 0..n {
                    let x0 = marginal.invert(draw(k, n) * marginal.total());
                    let cond = conditional(x0);
                    positions.push(x0);
                    positions.push(cond.invert(draw(k, n) * cond.total()));
                }
            }
        }
    }
    let interps: Vec<_> = (0..grid.dim())
        .map(|q| spectral.interpolant(v0.component(q)))
        .collect();
    let d = grid.dim();
    let mut velocities = Vec::with_capacity(n * d);
    for k in 0..n {
        let x = &positions[k * d..(k + 1) * d];
        for it in &interps {
            velocities.push(it.value(x));
        }
    }
    ParticleEnsemble::new(length, d, positions, velocities, T::zero())
}

/// Noise coefficient `sigma_q(t, x)` multiplying `dY^q`.
#[derive(Clone)]
pub struct SigmaField<T> {
    dim: usize,
    kind: SigmaKind<T>,
    scale: T,
}

type SigmaFn<T> = Arc<dyn Fn(T, &[T], usize) -> T + Send + Sync>;

#[derive(Clone)]
enum SigmaKind<T> {
    Constant(Vec<T>),
    Cosine { amplitude: T, modulation: T, length: T },
    Custom(SigmaFn<T>),
}

impl<T: Real> std::fmt::Debug for SigmaField<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.kind {
            SigmaKind::Constant(c) => write!(f, "SigmaField::Constant({c:?}, scale {})", self.scale),
            SigmaKind::Cosine {
                amplitude,
                modulation,
                length,
            } => write!(
                f,
                "SigmaField::Cosine(amplitude {amplitude}, modulation {modulation}, length {length}, scale {})",
                self.scale
            ),
            SigmaKind::Custom(_) => write!(f, "SigmaField::Custom(scale {})", self.scale),
        }
    }
}

impl<T: Real> SigmaField<T> {
    pub fn zero(dim: usize) -> Self {
        Self::constant(vec![T::zero(); dim])
    }

    pub fn constant(values: Vec<T>) -> Self {
        Self {
            dim: values.len(),
            kind: SigmaKind::Constant(values),
            scale: T::one(),
        }
    }

    /// `sigma_q(t, x) = amplitude (1 + modulation * mean_a cos(2 pi x_a / L))` for every `q`.
    pub fn cosine(dim: usize, amplitude: T, modulation: T, length: T) -> Self {
        Self {
            dim,
            kind: SigmaKind::Cosine {
                amplitude,
                modulation,
                length,
            },
            scale: T::one(),
        }
    }

    pub fn custom(dim: usize, f: impl Fn(T, &[T], usize) -> T + Send + Sync + 'static) -> Self {
        Self {
            dim,
            kind: SigmaKind::Custom(Arc::new(f)),
            scale: T::one(),
        }
    }

    /// The same field multiplied by `c`.
    pub fn scaled(&self, c: T) -> Self {
        Self {
            dim: self.dim,
            kind: self.kind.clone(),
            scale: self.scale * c,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_space_independent(&self) -> bool {
        matches!(self.kind, SigmaKind::Constant(_))
    }

    pub fn value(&self, t: T, x: &[T], q: usize) -> T {
        let raw = match &self.kind {
            SigmaKind::Constant(c) => c[q],
            SigmaKind::Cosine {
                amplitude,
                modulation,
                length,
            } => {
                let w = T::lit(2.0) * T::PI() / *length;
                let mean = x.iter().fold(T::zero(), |a, &v| a + (w * v).cos()) / T::from_usize_exact(x.len());
                *amplitude * (T::one() + *modulation * mean)
            }
            SigmaKind::Custom(f) => f(t, x, q),
        };
        if self.scale == T::one() {
            raw
        } else {
            raw * self.scale
        }
    }
}

/// How interaction forces are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForceBackend {
    /// No interaction (`phi = 0`).
    Free,
    /// Exact `O(N^2)` pairwise sum with minimum-image displacements.
    Direct,
    /// Particle-mesh scheme on a grid with `resolution` nodes per axis and B-splines of `order`.
    Grid { resolution: usize, order: usize },
}

/// Cardinal B-spline weights `w[i] = M_p(frac + p - 1 - i)` and their derivatives,
/// for nodes `floor(u) - p + 1 + i`.
fn bspline<T: Real>(frac: T, order: usize, w: &mut [T], dw: &mut [T]) {
    let n = order;
    w[n - 1] = T::zero();
    w[1] = frac;
    w[0] = T::one() - frac;
    for k in 3..n {
        let div = T::one() / T::from_usize_exact(k - 1);
        w[k - 1] = div * frac * w[k - 2];
        for j in 1..(k - 1) {
            let jf = T::from_usize_exact(j);
            let kj = T::from_usize_exact(k - j);
            w[k - j - 1] = div * ((frac + jf) * w[k - j - 2] + (kj - frac) * w[k - j - 1]);
        }
        w[0] = div * (T::one() - frac) * w[0];
    }
    dw[0] = -w[0];
    for j in 1..n {
        dw[j] = w[j - 1] - w[j];
    }
    let div = T::one() / T::from_usize_exact(n - 1);
    w[n - 1] = div * frac * w[n - 2];
    for j in 1..(n - 1) {
        let jf = T::from_usize_exact(j);
        let nj = T::from_usize_exact(n - j);
        w[n - j - 1] = div * ((frac + jf) * w[n - j - 2] + (nj - frac) * w[n - j - 1]);
    }
    w[0] = div * (T::one() - frac) * w[0];
}

/// `|b(k)|^2` of the spline interpolation along one axis.
fn spline_factor<T: Real>(m: usize, order: usize) -> Vec<T> {
    let mut w = vec![T::zero(); order];
    let mut dw = vec![T::zero(); order];
    bspline(T::zero(), order, &mut w, &mut dw);
    (0..m)
        .map(|k| {
            let mut d = Complex::new(T::zero(), T::zero());
            for j in 0..order - 1 {
                let a = T::lit(2.0) * T::PI() * T::from_usize_exact(j * k % m) / T::from_usize_exact(m);
                d = d + Complex::new(a.cos(), a.sin()) * w[order - 2 - j];
            }
            let n2 = d.norm_sqr();
            if n2 < T::lit(1e-10) {
                T::zero()
            } else {
                T::one() / n2
            }
        })
        .collect()
}

/// Precomputed particle-mesh operator for one kernel, `N` and grid.
pub struct MeshForce<T: Real> {
    spectral: Spectral<T>,
    order: usize,
    multiplier: Vec<T>,
}

impl<T: Real> MeshForce<T> {
    pub fn new(kernel: &KernelFamily<T>, n: usize, length: T, resolution: usize, order: usize) -> Result<Self> {
        if !(3..=12).contains(&order) {
            return Err(Error::param("order", "B-spline order must lie in 3..=12"));
        }
        let grid = Grid::new(kernel.dim(), resolution, length)?;
        kernel.check_support(n, &grid)?;
        let spectral = Spectral::new(grid.clone());
        let phi_r = kernel.multiplier_r(n, &spectral)?;
        let b = spline_factor::<T>(resolution, order);
        let inv_vol = T::one() / grid.cell_volume();
        let multiplier = (0..grid.len())
            .map(|flat| {
                let [i0, i1] = grid.unflatten(flat);
                let bb = if grid.dim() == 1 { b[i0] } else { b[i0] * b[i1] };
                phi_r[flat] * phi_r[flat] * bb * inv_vol
            })
            .collect();
        Ok(Self {
            spectral,
            order,
            multiplier,
        })
    }

    pub fn grid(&self) -> &Grid<T> {
        self.spectral.grid()
    }

    /// Node indices and weights of one particle along one axis.
    fn stencil(&self, x: T, w: &mut [T], dw: &mut [T]) -> usize {
        let grid = self.grid();
        let m = grid.resolution();
        let u = grid.wrap(x) / grid.spacing();
        let fl = u.floor();
        let base = fl.to_usize().unwrap_or(0) % m;
        bspline(u - fl, self.order, w, dw);
        (base + m * 2 - (self.order - 1)) % m
    }

    /// Accelerations `-grad (S^N * phi_N)(X^k)` as a flat `N * d` vector.
    pub fn accelerations(&self, ens: &ParticleEnsemble<T>) -> Vec<T> {
        let grid = self.grid();
        let m = grid.resolution();
        let d = grid.dim();
        let p = self.order;
        let n = ens.count();
        let mass = T::one() / T::from_usize_exact(n);
        let mut q = vec![T::zero(); grid.len()];
        let mut w = vec![vec![T::zero(); p]; d];
        let mut dw = vec![vec![T::zero(); p]; d];
        let mut start = [0usize; 2];
        for k in 0..n {
            let x = ens.position(k);
            for a in 0..d {
                start[a] = self.stencil(x[a], &mut w[a], &mut dw[a]);
            }
            if d == 1 {
                for i in 0..p {
                    q[(start[0] + i) % m] = q[(start[0] + i) % m] + mass * w[0][i];
                }
            } else {
                for i in 0..p {
                    let row = ((start[0] + i) % m) * m;
                    let wi = mass * w[0][i];
                    for j in 0..p {
                        let c = row + (start[1] + j) % m;
                        q[c] = q[c] + wi * w[1][j];
                    }
                }
            }
        }
        let mut spec = self.spectral.forward(&q);
        for (c, &mlt) in spec.iter_mut().zip(&self.multiplier) {
            *c = *c * mlt;
        }
        let theta = self.spectral.inverse(spec);
        let inv_h = T::one() / grid.spacing();
        let order = self.order;
        let mut acc = (0..n)
            .into_par_iter()
            .flat_map_iter(|k| {
                let mut w = vec![vec![T::zero(); order]; d];
                let mut dw = vec![vec![T::zero(); order]; d];
                let mut start = [0usize; 2];
                let x = ens.position(k);
                for a in 0..d {
                    start[a] = self.stencil(x[a], &mut w[a], &mut dw[a]);
                }
                let mut g = [T::zero(); 2];
                if d == 1 {
                    for i in 0..order {
                        g[0] = g[0] + theta[(start[0] + i) % m] * dw[0][i];
                    }
                } else {
                    for i in 0..order {
                        let row = ((start[0] + i) % m) * m;
                        for j in 0..order {
                            let t = theta[row + (start[1] + j) % m];
                            g[0] = g[0] + t * dw[0][i] * w[1][j];
                            g[1] = g[1] + t * w[0][i] * dw[1][j];
                        }
                    }
                }
                (0..d).map(move |a| -g[a] * inv_h).collect::<Vec<_>>()
            })
            .collect::<Vec<_>>();
        // B-spline interpolation leaves a small net self-force; remove it so
        // the total momentum stays put like the pairwise sum
        for a in 0..d {
            let net = crate::exact::exact_sum(acc.iter().skip(a).step_by(d).copied()) * mass;
            for f in acc.iter_mut().skip(a).step_by(d) {
                *f = *f - net;
            }
        }
        acc
    }
}

/// `-(1/N) sum_l grad phi_N(X^k - X^l)` by direct summation.
pub fn direct_accelerations<T: Real>(ens: &ParticleEnsemble<T>, kernel: &KernelFamily<T>) -> Result<Vec<T>> {
    let grid = Grid::new(ens.dim(), 2, ens.length())?;
    kernel.check_support(ens.count(), &grid)?;
    let n = ens.count();
    let d = ens.dim();
    let inv_n = T::one() / T::from_usize_exact(n);
    let order = ens.canonical_order();
    Ok((0..n)
        .into_par_iter()
        .flat_map_iter(|k| {
            let xk = ens.position(k);
            let mut acc = [T::zero(); 2];
            let mut dx = [T::zero(); 2];
            for &l in &order {
                let xl = ens.position(l);
                for a in 0..d {
                    dx[a] = grid.minimum_image(xk[a] - xl[a]);
                }
                let g = kernel.grad_phi_n(n, &dx[..d]);
                acc[0] = acc[0] + g[0];
                acc[1] = acc[1] + g[1];
            }
            (0..d).map(move |a| -acc[a] * inv_n).collect::<Vec<_>>()
        })
        .collect())
}

/// Interaction accelerations with the selected backend.
pub fn interaction_force<T: Real>(
    ens: &ParticleEnsemble<T>,
    kernel: &KernelFamily<T>,
    backend: ForceBackend,
) -> Result<Vec<T>> {
    match backend {
        ForceBackend::Free => Ok(vec![T::zero(); ens.positions.len()]),
        ForceBackend::Direct => direct_accelerations(ens, kernel),
        ForceBackend::Grid { resolution, order } => {
            Ok(MeshForce::new(kernel, ens.count(), ens.length(), resolution, order)?.accelerations(ens))
        }
    }
}

/// `(1/N) sum_k |V^k|^2 / 2 + (1/(2 N^2)) sum_{k,l} phi_N(X^k - X^l)`.
pub fn hamiltonian<T: Real>(ens: &ParticleEnsemble<T>, kernel: &KernelFamily<T>) -> Result<T> {
    let grid = Grid::new(ens.dim(), 2, ens.length())?;
    let n = ens.count();
    let d = ens.dim();
    let nf = T::from_usize_exact(n);
    let kinetic = crate::exact::exact_sum(ens.velocities.iter().map(|&v| v * v)) / (T::lit(2.0) * nf);
    let order = ens.canonical_order();
    let rows: Vec<T> = (0..n)
        .into_par_iter()
        .map(|k| {
            let xk = ens.position(k);
            let mut s = T::zero();
            let mut dx = [T::zero(); 2];
            for &l in &order {
                let xl = ens.position(l);
                for a in 0..d {
                    dx[a] = grid.minimum_image(xk[a] - xl[a]);
                }
                s = s + kernel.phi_n(n, &dx[..d]);
            }
            s
        })
        .collect();
    let potential = crate::exact::exact_sum(rows) / (T::lit(2.0) * nf * nf);
    Ok(kinetic + potential)
}

/// Advances ensembles in time, caching the forces at the current positions.
pub struct ParticleStepper<T: Real> {
    kernel: KernelFamily<T>,
    backend: ForceBackend,
    mesh: Option<MeshForce<T>>,
    cached: Option<(Vec<T>, Vec<T>)>,
}

impl<T: Real> ParticleStepper<T> {
    pub fn new(kernel: KernelFamily<T>, backend: ForceBackend) -> Self {
        Self {
            kernel,
            backend,
            mesh: None,
            cached: None,
        }
    }

    pub fn kernel(&self) -> &KernelFamily<T> {
        &self.kernel
    }

    fn forces(&mut self, ens: &ParticleEnsemble<T>) -> Result<Vec<T>> {
        if let Some((pos, acc)) = &self.cached {
            if pos == &ens.positions {
                return Ok(acc.clone());
            }
        }
        let acc = match self.backend {
            ForceBackend::Grid { resolution, order } => {
                if self.mesh.is_none() {
                    self.mesh = Some(MeshForce::new(&self.kernel, ens.count(), ens.length(), resolution, order)?);
                }
                self.mesh.as_ref().map(|m| m.accelerations(ens)).unwrap_or_default()
            }
            other => interaction_force(ens, &self.kernel, other)?,
        };
        self.cached = Some((ens.positions.clone(), acc.clone()));
        Ok(acc)
    }

    /// One step of length `dt` with driver increment `dy` (one entry per dimension).
    pub fn step(&mut self, ens: &mut ParticleEnsemble<T>, dt: T, dy: &[T], sigma: &SigmaField<T>) -> Result<()> {
        if !(dt > T::zero()) {
            return Err(Error::param("dt", "time step must be positive"));
        }
        if dy.len() != ens.dim || sigma.dim() != ens.dim {
            return Err(Error::GridMismatch("noise increment dimension differs from the box".into()));
        }
        let half = dt / T::lit(2.0);
        let t0 = ens.time;
        let a0 = self.forces(ens)?;
        for (v, a) in ens.velocities.iter_mut().zip(&a0) {
            *v = *v + half * *a;
        }
        for (x, v) in ens.positions.iter_mut().zip(&ens.velocities) {
            *x = *x + dt * *v;
        }
        ens.wrap();
        let a1 = self.forces(ens)?;
        for (v, a) in ens.velocities.iter_mut().zip(&a1) {
            *v = *v + half * *a;
        }
        let d = ens.dim;
        for k in 0..ens.count() {
            for q in 0..d {
                let s = sigma.value(t0, &ens.positions[k * d..(k + 1) * d], q);
                ens.velocities[k * d + q] = ens.velocities[k * d + q] + s * dy[q];
            }
        }
        ens.time = t0 + dt;
        if ens.velocities.iter().chain(&ens.positions).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                time: ens.time.to_f64_lossy(),
                what: "particle state".into(),
            });
        }
        Ok(())
    }
}

/// Fourier coefficients `sum_k w_k e^{-i xi X^k}` of weighted Dirac masses, in canonical order.
fn dirac_spectrum<T: Real>(
    ens: &ParticleEnsemble<T>,
    grid: &Grid<T>,
    order: &[usize],
    weight: impl Fn(usize) -> T,
) -> Vec<Complex<T>> {
    let m = grid.resolution();
    let zero = Complex::new(T::zero(), T::zero());
    let mut spec = vec![zero; grid.len()];
    for &k in order {
        let x = ens.position(k);
        let wk = weight(k);
        if wk == T::zero() {
            continue;
        }
        let p0 = phases(m, grid.length(), -x[0]);
        if grid.dim() == 1 {
            for (s, z) in spec.iter_mut().zip(&p0) {
                *s = *s + *z * wk;
            }
        } else {
            let p1 = phases(m, grid.length(), -x[1]);
            for i0 in 0..m {
                let a = p0[i0] * wk;
                let row = &mut spec[i0 * m..(i0 + 1) * m];
                for (s, z) in row.iter_mut().zip(&p1) {
                    *s = *s + a * *z;
                }
            }
        }
    }
    spec
}

fn require_resolved<T: Real>(kernel: &KernelFamily<T>, n: usize, grid: &Grid<T>) -> Result<()> {
    let cells = kernel.cells_per_width(n, grid);
    if cells < T::lit(4.0) {
        return Err(Error::UnderResolved {
            cells_per_bandwidth: cells.to_f64_lossy(),
            required: 4,
        });
    }
    kernel.check_support(n, grid)
}

fn smoothed<T: Real>(
    ens: &ParticleEnsemble<T>,
    kernel: &KernelFamily<T>,
    spectral: &Spectral<T>,
    order: &[usize],
    weight: impl Fn(usize) -> T,
) -> Result<Vec<T>> {
    let grid = spectral.grid();
    let n = ens.count();
    let mut spec = dirac_spectrum(ens, grid, order, weight);
    let mult = kernel.multiplier_r(n, spectral)?;
    let scale = T::one() / (T::from_usize_exact(n) * grid.cell_volume());
    for (c, &m) in spec.iter_mut().zip(&mult) {
        *c = *c * (m * scale);
    }
    Ok(spectral.inverse(spec))
}

/// `S^N * phi_N^r` on the grid.
pub fn empirical_density<T: Real>(
    ens: &ParticleEnsemble<T>,
    kernel: &KernelFamily<T>,
    spectral: &Spectral<T>,
) -> Result<Field<T>> {
    let grid = spectral.grid();
    check_box(ens, grid)?;
    require_resolved(kernel, ens.count(), grid)?;
    let order = ens.canonical_order();
    Field::new(grid.clone(), smoothed(ens, kernel, spectral, &order, |_| T::one())?)
}

/// `V^N * phi_N^r` on the grid, one component per dimension.
pub fn empirical_momentum<T: Real>(
    ens: &ParticleEnsemble<T>,
    kernel: &KernelFamily<T>,
    spectral: &Spectral<T>,
) -> Result<VectorField<T>> {
    let grid = spectral.grid();
    check_box(ens, grid)?;
    require_resolved(kernel, ens.count(), grid)?;
    let order = ens.canonical_order();
    let d = ens.dim();
    let comps = (0..d)
        .map(|q| smoothed(ens, kernel, spectral, &order, |k| ens.velocities[k * d + q]))
        .collect::<Result<Vec<_>>>()?;
    VectorField::new(grid.clone(), comps)
}

/// Mass-conserving nearest-node deposition of `S^N` (each particle adds `1/(N h^d)`).
pub fn deposit_nearest<T: Real>(ens: &ParticleEnsemble<T>, grid: &Grid<T>, weight: impl Fn(usize) -> T) -> Result<Field<T>> {
    check_box(ens, grid)?;
    let m = grid.resolution();
    let h = grid.spacing();
    let scale = T::one() / (T::from_usize_exact(ens.count()) * grid.cell_volume());
    let mut values = vec![T::zero(); grid.len()];
    for k in ens.canonical_order() {
        let x = ens.position(k);
        let mut flat = 0;
        for &xa in x {
            let j = (grid.wrap(xa) / h).round().to_usize().unwrap_or(0) % m;
            flat = flat * m + j;
        }
        values[flat] = values[flat] + weight(k) * scale;
    }
    Field::new(grid.clone(), values)
}

fn check_box<T: Real>(ens: &ParticleEnsemble<T>, grid: &Grid<T>) -> Result<()> {
    if grid.dim() != ens.dim() || grid.length() != ens.length() {
        return Err(Error::GridMismatch("grid box differs from the particle box".into()));
    }
    Ok(())
}

/// Writes `k, x.., v..` rows for one time.
pub fn write_snapshot_csv<T: Real>(ens: &ParticleEnsemble<T>, path: &Path) -> Result<()> {
    let d = ens.dim();
    let mut out = String::new();
    let _ = writeln!(out, "# holderflow-particles v1");
    let _ = writeln!(out, "# n={},dim={},length={},time={}", ens.count(), d, ens.length(), ens.time());
    out.push('k');
    for a in 0..d {
        let _ = write!(out, ",x{a}");
    }
    for a in 0..d {
        let _ = write!(out, ",v{a}");
    }
    out.push('\n');
    for k in 0..ens.count() {
        let _ = write!(out, "{k}");
        for v in ens.position(k).iter().chain(ens.velocity(k)) {
            let _ = write!(out, ",{:.16e}", v.to_f64_lossy());
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
