//! Fractional Brownian motion sampling and Hölder-path utilities.
//!
//! Every path lives on a uniform grid `t_i = i T / M` and starts at the
//! origin. Three exact-in-law samplers are available:
//!
//! * dense Cholesky of the covariance of the increments (reference, `O(M^3)`),
//! * Durbin–Levinson recursion (Hosking), the same lower-triangular factor
//!   computed in `O(M^2)` without storing it,
//! * circulant embedding (Davies–Harte) in `O(M log M)`.
//!
//! With [`FbmMethod::Auto`] the Levinson factorization is used up to
//! [`DENSE_LIMIT`] steps and circulant embedding above.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::real::Real;

/// Largest step count sampled by covariance factorization under [`FbmMethod::Auto`].
pub const DENSE_LIMIT: usize = 4096;

/// Offset between the Hurst index and the nominal Hölder exponent of a sampled path.
pub const HOLDER_OFFSET: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSpec<T> {
    pub hurst: T,
    pub dim: usize,
    pub horizon: T,
    pub steps: usize,
    pub seed: u64,
}

impl<T: Real> NoiseSpec<T> {
    pub fn validate(&self) -> Result<()> {
        let h = self.hurst.to_f64_lossy();
        if !(h > 0.5 && h < 1.0) {
            return Err(Error::param("hurst", format!("need 1/2 < hurst < 1, got {h}")));
        }
        if self.dim == 0 {
            return Err(Error::param("dim", "dimension must be positive"));
        }
        if !(self.horizon > T::zero()) || !self.horizon.is_finite() {
            return Err(Error::param("horizon", "horizon must be positive"));
        }
        if self.steps < 2 {
            return Err(Error::param("steps", "need at least 2 steps"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FbmMethod {
    Auto,
    DenseCholesky,
    Hosking,
    CirculantEmbedding,
}

/// Provenance carried by sampled paths so exported files are replayable.
#[derive(Clone, Debug, PartialEq)]
pub struct PathMeta {
    pub hurst: f64,
    pub seed: u64,
}

/// A `d`-vector valued path on a uniform time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledPath<T> {
    times: Vec<T>,
    values: Vec<T>,
    dim: usize,
    alpha: T,
    meta: Option<PathMeta>,
}

impl<T: Real> SampledPath<T> {
    /// Builds a path from flat values (`(M + 1) * dim` entries) on `[0, horizon]`.
    pub fn new(horizon: T, dim: usize, values: Vec<T>, alpha: T) -> Result<Self> {
        if dim == 0 || !values.len().is_multiple_of(dim) || values.len() / dim < 2 {
            return Err(Error::param("values", "need at least two points of the given dimension"));
        }
        if !(horizon > T::zero()) {
            return Err(Error::param("horizon", "horizon must be positive"));
        }
        if !(alpha > T::zero() && alpha <= T::one()) {
            return Err(Error::param("alpha", "Hölder exponent must lie in (0, 1]"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("values", "path values must be finite"));
        }
        let steps = values.len() / dim - 1;
        Ok(Self {
            times: uniform_times(horizon, steps),
            values,
            dim,
            alpha,
            meta: None,
        })
    }

    /// Scalar path sampled from a function of time.
    pub fn from_fn(horizon: T, steps: usize, alpha: T, f: impl Fn(T) -> T) -> Result<Self> {
        let times = uniform_times(horizon, steps);
        let values = times.iter().map(|&t| f(t)).collect();
        Self::new(horizon, 1, values, alpha)
    }

    pub fn with_meta(mut self, meta: PathMeta) -> Self {
        self.meta = Some(meta);
        self
    }

    pub fn meta(&self) -> Option<&PathMeta> {
        self.meta.as_ref()
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> T {
        self.times[self.times.len() - 1]
    }

    pub fn dt(&self) -> T {
        self.horizon() / T::from_usize_exact(self.steps())
    }

    /// The value at grid node `i`.
    pub fn point(&self, i: usize) -> &[T] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Component `q` at grid node `i`.
    pub fn at(&self, i: usize, q: usize) -> T {
        self.values[i * self.dim + q]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Component `q` as a scalar path.
    pub fn component(&self, q: usize) -> SampledPath<T> {
        let values = (0..=self.steps()).map(|i| self.at(i, q)).collect();
        SampledPath {
            times: self.times.clone(),
            values,
            dim: 1,
            alpha: self.alpha,
            meta: self.meta.clone(),
        }
    }

    /// Every `factor`-th node of the path; the horizon is unchanged.
    pub fn restrict(&self, factor: usize) -> Result<SampledPath<T>> {
        if factor == 0 || !self.steps().is_multiple_of(factor) {
            return Err(Error::GridMismatch(format!(
                "restriction factor {factor} does not divide {} steps",
                self.steps()
            )));
        }
        let coarse = self.steps() / factor;
        let mut values = Vec::with_capacity((coarse + 1) * self.dim);
        for i in 0..=coarse {
            values.extend_from_slice(self.point(i * factor));
        }
        Ok(SampledPath {
            times: (0..=coarse).map(|i| self.times[i * factor]).collect(),
            values,
            dim: self.dim,
            alpha: self.alpha,
            meta: self.meta.clone(),
        })
    }

    fn locate(&self, t: T) -> Result<(usize, T)> {
        let horizon = self.horizon();
        if !(t >= T::zero() && t <= horizon) {
            return Err(Error::OutOfHorizon {
                value: t.to_f64_lossy(),
                horizon: horizon.to_f64_lossy(),
            });
        }
        let m = self.steps();
        let pos = t / self.dt();
        let mut i = pos.floor().to_usize().unwrap_or(0).min(m);
        if i == m {
            return Ok((m, T::zero()));
        }
        if self.times[i] > t && i > 0 {
            i -= 1;
        }
        let theta = (t - self.times[i]) / self.dt();
        Ok((i, theta.max(T::zero()).min(T::one())))
    }

    /// Piecewise-linear value at time `t`; exact at grid nodes.
    pub fn value_at(&self, t: T) -> Result<Vec<T>> {
        let (i, theta) = self.locate(t)?;
        if theta == T::zero() {
            return Ok(self.point(i).to_vec());
        }
        let (a, b) = (self.point(i), self.point(i + 1));
        Ok(a.iter().zip(b).map(|(&x, &y)| x + theta * (y - x)).collect())
    }

    /// `phi_t - phi_s` with linear interpolation off the grid.
    pub fn increment(&self, s: T, t: T) -> Result<Vec<T>> {
        if s > t {
            return Err(Error::param("s", "increment requires s <= t"));
        }
        let a = self.value_at(s)?;
        let b = self.value_at(t)?;
        Ok(b.iter().zip(&a).map(|(&y, &x)| y - x).collect())
    }
}

pub(crate) fn uniform_times<T: Real>(horizon: T, steps: usize) -> Vec<T> {
    let m = T::from_usize_exact(steps);
    (0..=steps)
        .map(|i| {
            if i == steps {
                horizon
            } else {
                horizon * T::from_usize_exact(i) / m
            }
        })
        .collect()
}

fn euclid<T: Real>(xs: impl Iterator<Item = T>) -> T {
    xs.fold(T::zero(), |acc, x| acc + x * x).sqrt()
}

/// Exact `O(M^2)` α-Hölder seminorm `max_{s<t} |phi_t - phi_s| / (t - s)^alpha` over grid pairs.
pub fn holder_seminorm<T: Real>(path: &SampledPath<T>, alpha: T) -> T {
    let m = path.steps();
    let d = path.dim();
    let dt = path.dt();
    let lag_pow: Vec<T> = (0..=m).map(|k| (dt * T::from_usize_exact(k)).powf(alpha)).collect();
    let mut best = T::zero();
    for i in 0..m {
        let a = path.point(i);
        for j in (i + 1)..=m {
            let b = path.point(j);
            let num = if d == 1 {
                (b[0] - a[0]).abs()
            } else {
                euclid(a.iter().zip(b).map(|(&x, &y)| y - x))
            };
            let ratio = num / lag_pow[j - i];
            if ratio > best {
                best = ratio;
            }
        }
    }
    best
}

/// Regression-based estimators of the Hölder (Hurst) exponent of a scalar path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HolderEstimator {
    /// Slope of the mean over blocks of `log max |increment|` against `log lag`.
    /// Each block holds 32 non-overlapping increments, so by self-similarity
    /// the block maxima at every lag share one law up to the factor `lag^H`.
    SupIncrement,
    /// Slope of `log E|increment|^2 / 2` against `log lag`.
    Variogram,
}

/// Estimates the Hölder exponent of component `q` over dyadic lags `1, 2, 4, ...`
/// keeping at least 512 increments per lag.
pub fn estimate_holder_exponent<T: Real>(path: &SampledPath<T>, q: usize, estimator: HolderEstimator) -> f64 {
    let m = path.steps();
    let dt = path.dt().to_f64_lossy();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut lag = 1usize;
    while m / lag >= 512 {
        let n = m - lag;
        let stat = match estimator {
            HolderEstimator::SupIncrement => {
                let span = 32 * lag;
                let blocks = m / span;
                let mut acc = 0.0f64;
                for b in 0..blocks {
                    let mut best = 0.0f64;
                    for i in (b * span..(b + 1) * span).step_by(lag) {
                        best = best.max((path.at(i + lag, q) - path.at(i, q)).to_f64_lossy().abs());
                    }
                    acc += best.ln();
                }
                acc / blocks as f64
            }
            HolderEstimator::Variogram => {
                let mut acc = 0.0f64;
                for i in 0..n {
                    let d = (path.at(i + lag, q) - path.at(i, q)).to_f64_lossy();
                    acc += d * d;
                }
                0.5 * (acc / n as f64).ln()
            }
        };
        xs.push((lag as f64 * dt).ln());
        ys.push(stat);
        lag *= 2;
    }
    crate::stats::linear_fit(&xs, &ys).map(|f| f.slope).unwrap_or(f64::NAN)
}

/// Autocovariance of unit-step fractional Gaussian noise.
pub fn fgn_autocovariance(hurst: f64, k: usize) -> f64 {
    let h2 = 2.0 * hurst;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
}

/// Closed-form fBm covariance `E B_t B_s`.
pub fn fbm_covariance(hurst: f64, s: f64, t: f64) -> f64 {
    let h2 = 2.0 * hurst;
    0.5 * (t.abs().powf(h2) + s.abs().powf(h2) - (t - s).abs().powf(h2))
}

enum Factor {
    Dense(Vec<f64>),
    Hosking,
    Circulant(Vec<f64>),
}

/// Reusable exact fBm sampler for one (hurst, steps, horizon) triple.
pub struct FbmSampler {
    hurst: f64,
    steps: usize,
    horizon: f64,
    factor: Factor,
}

impl FbmSampler {
    pub fn new(hurst: f64, steps: usize, horizon: f64, method: FbmMethod) -> Result<Self> {
        let method = match method {
            FbmMethod::Auto if steps <= DENSE_LIMIT => FbmMethod::Hosking,
            FbmMethod::Auto => FbmMethod::CirculantEmbedding,
            m => m,
        };
        let factor = match method {
            FbmMethod::DenseCholesky => Factor::Dense(dense_cholesky(hurst, steps)?),
            FbmMethod::Hosking => Factor::Hosking,
            FbmMethod::CirculantEmbedding => Factor::Circulant(circulant_spectrum(hurst, steps)?),
            FbmMethod::Auto => unreachable!(),
        };
        Ok(Self {
            hurst,
            steps,
            horizon,
            factor,
        })
    }

    /// One scalar fBm path `B_{t_0}, ..., B_{t_M}` with `B_0 = 0`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let m = self.steps;
        let noise = match &self.factor {
            Factor::Dense(l) => {
                let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
                (0..m)
                    .map(|i| (0..=i).map(|j| l[i * m + j] * z[j]).sum::<f64>())
                    .collect::<Vec<_>>()
            }
            Factor::Hosking => hosking_fgn(self.hurst, m, rng)?,
            Factor::Circulant(sqrt_eig) => {
                let n = sqrt_eig.len();
                let mut w: Vec<Complex<f64>> = sqrt_eig
                    .iter()
                    .map(|&s| {
                        let a: f64 = rng.sample(StandardNormal);
                        let b: f64 = rng.sample(StandardNormal);
                        Complex::new(s * a, s * b)
                    })
                    .collect();
                FftPlanner::new().plan_fft_forward(n).process(&mut w);
                w.iter().take(m).map(|c| c.re).collect()
            }
        };
        let scale = (self.horizon / m as f64).powf(self.hurst);
        let mut path = Vec::with_capacity(m + 1);
        path.push(0.0);
        let mut acc = 0.0;
        for x in noise {
            acc += x * scale;
            path.push(acc);
        }
        Ok(path)
    }
}

fn dense_cholesky(hurst: f64, m: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..=i {
            let mut s = fgn_autocovariance(hurst, i - j);
            for k in 0..j {
                s -= l[i * m + k] * l[j * m + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(Error::CovarianceFactorization {
                        index: i,
                        reason: format!("non-positive pivot {s:e}"),
                    });
                }
                l[i * m + i] = s.sqrt();
            } else {
                l[i * m + j] = s / l[j * m + j];
            }
        }
    }
    Ok(l)
}

/// Durbin–Levinson innovations: `X_n = sum_j phi_{n,j} X_{n-j} + sqrt(v_n) z_n`.
fn hosking_fgn<R: Rng + ?Sized>(hurst: f64, m: usize, rng: &mut R) -> Result<Vec<f64>> {
    let gamma: Vec<f64> = (0..=m).map(|k| fgn_autocovariance(hurst, k)).collect();
    let mut x = Vec::with_capacity(m);
    let mut phi: Vec<f64> = Vec::with_capacity(m);
    let mut next = vec![0.0; m];
    let mut v = gamma[0];
    let z0: f64 = rng.sample(StandardNormal);
    x.push(v.sqrt() * z0);
    for n in 1..m {
        // extend the predictor from order n-1 to n
        let mut num = gamma[n];
        for j in 0..phi.len() {
            num -= phi[j] * gamma[n - 1 - j];
        }
        let kappa = num / v;
        for j in 0..phi.len() {
            next[j] = phi[j] - kappa * phi[phi.len() - 1 - j];
        }
        next[phi.len()] = kappa;
        phi.clear();
        phi.extend_from_slice(&next[..n]);
        v *= 1.0 - kappa * kappa;
        if v <= 0.0 || !v.is_finite() {
            return Err(Error::CovarianceFactorization {
                index: n,
                reason: format!("innovation variance {v:e} not positive"),
            });
        }
        let mean: f64 = phi.iter().enumerate().map(|(j, p)| p * x[n - 1 - j]).sum();
        let z: f64 = rng.sample(StandardNormal);
        x.push(mean + v.sqrt() * z);
    }
    Ok(x)
}

/// Square roots of the scaled circulant eigenvalues, `sqrt(lambda_k / 2M)`.
fn circulant_spectrum(hurst: f64, m: usize) -> Result<Vec<f64>> {
    let n = 2 * m;
    let mut c: Vec<Complex<f64>> = (0..n)
        .map(|k| {
            let lag = if k <= m { k } else { n - k };
            Complex::new(fgn_autocovariance(hurst, lag), 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut c);
    let max = c.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
    c.iter()
        .enumerate()
        .map(|(k, z)| {
            if z.re < -1e-10 * max {
                Err(Error::CovarianceFactorization {
                    index: k,
                    reason: format!("negative circulant eigenvalue {:e}", z.re),
                })
            } else {
                Ok((z.re.max(0.0) / n as f64).sqrt())
            }
        })
        .collect()
}

/// One realization of a `d`-dimensional fBm with independent components.
pub fn sample_fbm<T: Real>(spec: &NoiseSpec<T>) -> Result<SampledPath<T>> {
    sample_fbm_with(spec, FbmMethod::Auto)
}

pub fn sample_fbm_with<T: Real>(spec: &NoiseSpec<T>, method: FbmMethod) -> Result<SampledPath<T>> {
    spec.validate()?;
    let hurst = spec.hurst.to_f64_lossy();
    let sampler = FbmSampler::new(hurst, spec.steps, spec.horizon.to_f64_lossy(), method)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let m = spec.steps;
    let mut values = vec![T::zero(); (m + 1) * spec.dim];
    for q in 0..spec.dim {
        let comp = sampler.sample(&mut rng)?;
        for (i, v) in comp.into_iter().enumerate() {
            values[i * spec.dim + q] = T::lit(v);
        }
    }
    let alpha = T::lit(hurst - HOLDER_OFFSET);
    Ok(SampledPath::new(spec.horizon, spec.dim, values, alpha)?.with_meta(PathMeta {
        hurst,
        seed: spec.seed,
    }))
}

/// Writes a path as CSV with a replay header.
pub fn write_path_csv<T: Real>(path: &SampledPath<T>, file: &Path) -> Result<()> {
    let mut out = String::new();
    let meta = path.meta();
    let _ = writeln!(out, "# holderflow-path v1");
    let _ = writeln!(
        out,
        "# hurst={},horizon={},steps={},seed={},dim={},alpha={}",
        meta.map(|m| m.hurst.to_string()).unwrap_or_else(|| "nan".into()),
        path.horizon(),
        path.steps(),
        meta.map(|m| m.seed.to_string()).unwrap_or_else(|| "0".into()),
        path.dim(),
        path.alpha()
    );
    out.push('t');
    for q in 0..path.dim() {
        let _ = write!(out, ",y{q}");
    }
    out.push('\n');
    for i in 0..=path.steps() {
        let _ = write!(out, "{:.16e}", path.times()[i].to_f64_lossy());
        for q in 0..path.dim() {
            let _ = write!(out, ",{:.16e}", path.at(i, q).to_f64_lossy());
        }
        out.push('\n');
    }
    let mut f = std::fs::File::create(file).map_err(|e| Error::io(file, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(file, e))
}

/// Reads a path written by [`write_path_csv`].
pub fn read_path_csv<T: Real>(file: &Path) -> Result<SampledPath<T>> {
    let f = std::fs::File::open(file).map_err(|e| Error::io(file, e))?;
    let mut header = std::collections::BTreeMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(file, e))?;
        let line = line.trim();
        if let Some(rest) = line.strip_prefix('#') {
            for kv in rest.split(',') {
                if let Some((k, v)) = kv.split_once('=') {
                    header.insert(k.trim().to_string(), v.trim().to_string());
                }
            }
            continue;
        }
        if line.is_empty() || line.starts_with('t') {
            continue;
        }
        let row = line
            .split(',')
            .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let get = |k: &str| {
        header
            .get(k)
            .ok_or_else(|| Error::Parse(format!("missing header field `{k}`")))
    };
    let dim: usize = get("dim")?.parse().map_err(|_| Error::Parse("dim".into()))?;
    let alpha: f64 = get("alpha")?.parse().map_err(|_| Error::Parse("alpha".into()))?;
    let horizon: f64 = get("horizon")?.parse().map_err(|_| Error::Parse("horizon".into()))?;
    let hurst: f64 = get("hurst")?.parse().unwrap_or(f64::NAN);
    let seed: u64 = get("seed")?.parse().unwrap_or(0);
    let mut values = Vec::with_capacity(rows.len() * dim);
    for row in &rows {
        if row.len() != dim + 1 {
            return Err(Error::Parse(format!("expected {} columns, found {}", dim + 1, row.len())));
        }
        values.extend(row[1..].iter().map(|&v| T::lit(v)));
    }
    let path = SampledPath::new(T::lit(horizon), dim, values, T::lit(alpha))?;
    Ok(if hurst.is_finite() {
        path.with_meta(PathMeta { hurst, seed })
    } else {
        path
    })
}
