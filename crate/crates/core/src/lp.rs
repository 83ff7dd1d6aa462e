//! Littlewood–Paley decomposition on the periodic lattice and the Besov /
//! Triebel–Lizorkin norms built on it.
//!
//! Frequencies are measured in integer wavenumbers `|k| = |xi| L / (2 pi)`.
//! The low-pass profile `chi` equals 1 on `|k| <= r0 / lambda`, vanishes for
//! `|k| >= lambda r0` and follows a quintic smoothstep in between; the annulus
//! profile is `phi(k) = chi(k/2) - chi(k)` and `phi_j(k) = phi(2^-j k)` for
//! `j >= 0`, `phi_{-1} = chi`. The blocks therefore telescope to one exactly.

use rustfft::num_complex::Complex;

use crate::error::{Error, Result};
use crate::exact::exact_sum;
use crate::field::Field;
use crate::real::Real;
use crate::spectral::{Grid, Spectral};

pub const DEFAULT_LAMBDA: f64 = 1.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Profile {
    /// `6u^5 - 15u^4 + 10u^3`.
    #[default]
    Quintic,
    /// `3u^2 - 2u^3`.
    Cubic,
}

impl Profile {
    fn step(self, u: f64) -> f64 {
        match self {
            Profile::Quintic => u * u * u * (u * (6.0 * u - 15.0) + 10.0),
            Profile::Cubic => u * u * (3.0 - 2.0 * u),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum NormKind {
    #[default]
    Besov,
    Triebel,
}

impl std::str::FromStr for NormKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "besov" => Ok(NormKind::Besov),
            "triebel" => Ok(NormKind::Triebel),
            other => Err(Error::Parse(format!("unknown norm kind `{other}` (besov|triebel)"))),
        }
    }
}

impl std::fmt::Display for NormKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NormKind::Besov => "besov",
            NormKind::Triebel => "triebel",
        })
    }
}

/// Dyadic partition of unity tabulated on the frequency lattice of one grid.
#[derive(Clone, Debug)]
pub struct DyadicPartition<T: Real> {
    spectral: Spectral<T>,
    lambda: f64,
    r0: f64,
    profile: Profile,
    /// `weights[j + 1][flat]` is `phi_j` at the lattice frequency `flat`.
    weights: Vec<Vec<T>>,
}

impl<T: Real> DyadicPartition<T> {
    pub fn new(grid: Grid<T>, lambda: f64) -> Result<Self> {
        Self::with_profile(grid, lambda, 1.0, Profile::Quintic)
    }

    pub fn with_profile(grid: Grid<T>, lambda: f64, r0: f64, profile: Profile) -> Result<Self> {
        if !(lambda > 1.0 && lambda < std::f64::consts::SQRT_2) {
            return Err(Error::param("lambda", "lambda must lie in (1, sqrt 2)"));
        }
        if !(r0 > 0.0) {
            return Err(Error::param("r0", "base radius must be positive"));
        }
        let kmax = (0..grid.len()).map(|f| lattice_radius(&grid, f)).fold(0.0, f64::max);
        // smallest J with 2^(J+1) r0 / lambda >= kmax
        let mut top = -1i32;
        while 2f64.powi(top + 1) * r0 / lambda < kmax {
            top += 1;
        }
        let chi = |k: f64| -> f64 {
            let (a, b) = (r0 / lambda, r0 * lambda);
            if k <= a {
                1.0
            } else if k >= b {
                0.0
            } else {
                1.0 - profile.step((k - a) / (b - a))
            }
        };
        let mut weights = Vec::with_capacity((top + 2) as usize);
        for j in -1..=top {
            let w = (0..grid.len())
                .map(|f| {
                    let k = lattice_radius(&grid, f);
                    let v = if j < 0 {
                        chi(k)
                    } else {
                        let s = 2f64.powi(-j);
                        chi(k * s / 2.0) - chi(k * s)
                    };
                    T::lit(v)
                })
                .collect();
            weights.push(w);
        }
        Ok(Self {
            spectral: Spectral::new(grid),
            lambda,
            r0,
            profile,
            weights,
        })
    }

    pub fn grid(&self) -> &Grid<T> {
        self.spectral.grid()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn profile(&self) -> Profile {
        self.profile
    }

    /// Index `J` of the last block.
    pub fn top(&self) -> i32 {
        self.weights.len() as i32 - 2
    }

    /// `phi_j` on the lattice, `j >= -1`.
    pub fn weight(&self, j: i32) -> &[T] {
        &self.weights[(j + 1) as usize]
    }

    /// `sum_j phi_j` on the lattice.
    pub fn total(&self) -> Vec<T> {
        (0..self.grid().len())
            .map(|f| self.weights.iter().fold(T::zero(), |a, w| a + w[f]))
            .collect()
    }
}

fn lattice_radius<T: Real>(grid: &Grid<T>, flat: usize) -> f64 {
    let idx = grid.unflatten(flat);
    let k2: f64 = (0..grid.dim())
        .map(|a| {
            let k = grid.wavenumber(idx[a]) as f64;
            k * k
        })
        .sum();
    k2.sqrt()
}

/// The blocks `Delta_j f`, `j = -1..=J`.
#[derive(Clone, Debug)]
pub struct DyadicDecomposition<T> {
    blocks: Vec<Vec<T>>,
}

impl<T: Real> DyadicDecomposition<T> {
    pub fn block(&self, j: i32) -> &[T] {
        &self.blocks[(j + 1) as usize]
    }

    pub fn blocks(&self) -> &[Vec<T>] {
        &self.blocks
    }

    pub fn top(&self) -> i32 {
        self.blocks.len() as i32 - 2
    }

    /// Low-frequency cut-off `S_j f = sum_{i <= j-1} Delta_i f`.
    pub fn partial_sum(&self, j: i32) -> Vec<T> {
        let len = self.blocks[0].len();
        let upto = ((j + 1).max(0) as usize).min(self.blocks.len());
        (0..len)
            .map(|i| exact_sum(self.blocks[..upto].iter().map(|b| b[i])))
            .collect()
    }

    /// `sum_j Delta_j f`.
    pub fn reconstruct(&self) -> Vec<T> {
        self.partial_sum(self.top() + 1)
    }
}

fn check_grid<T: Real>(f: &Field<T>, part: &DyadicPartition<T>) -> Result<()> {
    if !f.grid().same_geometry(part.grid()) {
        return Err(Error::GridMismatch("field and partition use different grids".into()));
    }
    Ok(())
}

pub fn dyadic_blocks<T: Real>(f: &Field<T>, part: &DyadicPartition<T>) -> Result<DyadicDecomposition<T>> {
    check_grid(f, part)?;
    dyadic_blocks_from_spectrum(&part.spectral.forward(f.values()), part)
}

/// Blocks of the field whose unnormalised DFT is `spec`.
pub fn dyadic_blocks_from_spectrum<T: Real>(
    spec: &[Complex<T>],
    part: &DyadicPartition<T>,
) -> Result<DyadicDecomposition<T>> {
    if spec.len() != part.grid().len() {
        return Err(Error::GridMismatch("spectrum size differs from the partition grid".into()));
    }
    let blocks = part
        .weights
        .iter()
        .map(|w| {
            let s: Vec<Complex<T>> = spec.iter().zip(w).map(|(&c, &m)| c * m).collect();
            if w.iter().all(|&m| m == T::zero()) {
                vec![T::zero(); s.len()]
            } else {
                part.spectral.inverse(s)
            }
        })
        .collect();
    Ok(DyadicDecomposition { blocks })
}

/// Weight `2^(s max(j, 0))`: the low-pass block carries weight one, which keeps
/// the norms monotone in `s`.
fn block_weight(j: i32, s: f64) -> f64 {
    2f64.powf(s * j.max(0) as f64)
}

fn lp_norm<T: Real>(values: &[T], p: f64, cell: f64) -> f64 {
    let sum: f64 = values.iter().map(|v| v.to_f64_lossy().abs().powf(p)).sum();
    (sum * cell).powf(1.0 / p)
}

fn lq_combine(terms: impl Iterator<Item = f64>, q: f64) -> f64 {
    if q.is_infinite() {
        terms.fold(0.0, f64::max)
    } else {
        terms.map(|t| t.powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

fn check_indices(p: f64, q: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::param("p", "integrability index must lie in (1, inf)"));
    }
    if !(q >= 1.0) {
        return Err(Error::param("q", "summability index must be at least 1"));
    }
    Ok(())
}

/// `|| (2^{js} ||Delta_j f||_{L^p})_j ||_{l^q}`.
pub fn besov_norm<T: Real>(f: &Field<T>, s: f64, p: f64, q: f64, part: &DyadicPartition<T>) -> Result<f64> {
    check_indices(p, q)?;
    let dec = dyadic_blocks(f, part)?;
    let cell = f.grid().cell_volume().to_f64_lossy();
    Ok(lq_combine(
        dec.blocks
            .iter()
            .enumerate()
            .map(|(i, b)| block_weight(i as i32 - 1, s) * lp_norm(b, p, cell)),
        q,
    ))
}

/// `|| ( sum_j |2^{js} Delta_j f|^q )^{1/q} ||_{L^p}`.
pub fn triebel_norm<T: Real>(f: &Field<T>, s: f64, p: f64, q: f64, part: &DyadicPartition<T>) -> Result<f64> {
    check_indices(p, q)?;
    let dec = dyadic_blocks(f, part)?;
    let cell = f.grid().cell_volume().to_f64_lossy();
    let weights: Vec<f64> = (0..dec.blocks.len()).map(|i| block_weight(i as i32 - 1, s)).collect();
    let pointwise: Vec<f64> = (0..f.grid().len())
        .map(|x| {
            lq_combine(
                dec.blocks
                    .iter()
                    .zip(&weights)
                    .map(|(b, w)| w * b[x].to_f64_lossy().abs()),
                q,
            )
        })
        .collect();
    Ok(lp_norm(&pointwise, p, cell))
}

pub fn norm<T: Real>(
    kind: NormKind,
    f: &Field<T>,
    s: f64,
    p: f64,
    q: f64,
    part: &DyadicPartition<T>,
) -> Result<f64> {
    match kind {
        NormKind::Besov => besov_norm(f, s, p, q, part),
        NormKind::Triebel => triebel_norm(f, s, p, q, part),
    }
}

/// `|| measure - target ||` at smoothness `-eta`, `p = 2`, summability `q_hat`.
///
/// For `eta <= d/2 + 1` Dirac masses fall outside the space; the norm is still
/// computed on the lattice but a warning is logged.
pub fn negative_distance<T: Real>(
    measure: &Field<T>,
    target: &Field<T>,
    eta: f64,
    q_hat: f64,
    kind: NormKind,
    part: &DyadicPartition<T>,
) -> Result<f64> {
    let d = measure.grid().dim() as f64;
    if eta <= d / 2.0 + 1.0 {
        log::warn!("eta = {eta} does not exceed d/2 + 1 = {}; point masses are not in this space", d / 2.0 + 1.0);
    }
    let diff = measure.sub(target)?;
    norm(kind, &diff, -eta, 2.0, q_hat, part)
}

/// `(sup |f| + [f]_gamma) / ||f||_{B^s_{p,q}}` with `gamma = s - d/p - floor(s - d/p)`.
///
/// The Hölder quotient is scanned over node pairs along each axis.
pub fn sobolev_embedding_check<T: Real>(f: &Field<T>, s: f64, p: f64, q: f64, part: &DyadicPartition<T>) -> Result<f64> {
    let grid = f.grid();
    let d = grid.dim();
    if s <= d as f64 / p {
        return Err(Error::param("s", "embedding into bounded continuous functions needs s > d/p"));
    }
    let r = s - d as f64 / p;
    let gamma = r - r.floor();
    let nrm = besov_norm(f, s, p, q, part)?;
    if nrm == 0.0 {
        return Ok(0.0);
    }
    let vals: Vec<f64> = f.values().iter().map(|v| v.to_f64_lossy()).collect();
    let sup = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut quotient = 0.0f64;
    if gamma > 0.0 {
        let m = grid.resolution();
        let h = grid.spacing().to_f64_lossy();
        for flat in 0..grid.len() {
            let idx = grid.unflatten(flat);
            for a in 0..d {
                for off in 1..=m / 2 {
                    let mut j = idx;
                    j[a] = (j[a] + off) % m;
                    let other = if d == 1 { j[0] } else { j[0] * m + j[1] };
                    let q = (vals[flat] - vals[other]).abs() / (off as f64 * h).powf(gamma);
                    quotient = quotient.max(q);
                }
            }
        }
    }
    Ok((sup + quotient) / nrm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn partition_sums_to_one_and_is_disjoint() {
        for dim in [1, 2] {
            let g = Grid::<f64>::new(dim, 64, 1.0).unwrap();
            let part = DyadicPartition::new(g, DEFAULT_LAMBDA).unwrap();
            assert!(part.total().iter().all(|t| (t - 1.0).abs() <= 1e-12));
            for i in -1..=part.top() {
                for j in (i + 2)..=part.top() {
                    let w = part.weight(i).iter().zip(part.weight(j)).fold(0.0f64, |a, (x, y)| a.max(x * y));
                    assert_eq!(w, 0.0);
                }
            }
        }
    }

    #[test]
    fn pure_mode_localises() {
        let g = Grid::<f64>::new(1, 128, 1.0).unwrap();
        let part = DyadicPartition::new(g.clone(), DEFAULT_LAMBDA).unwrap();
        for i in 0..6 {
            let k = 1usize << i;
            let mut spec = vec![Complex::new(0.0, 0.0); 128];
            spec[k] = Complex::new(64.0, 0.0);
            spec[128 - k] = Complex::new(64.0, 0.0);
            let dec = dyadic_blocks_from_spectrum(&spec, &part).unwrap();
            let f = Field::from_fn(g.clone(), |x: [f64; 2]| (2.0 * PI * k as f64 * x[0]).cos());
            let sampled = dyadic_blocks(&f, &part).unwrap();
            for j in -1..=dec.top() {
                if !(i - 1..=i + 1).contains(&j) {
                    assert!(dec.block(j).iter().all(|&v| v == 0.0), "mode {k} block {j}");
                    assert!(sampled.block(j).iter().all(|&v| v.abs() < 1e-13));
                }
            }
        }
    }

    #[test]
    fn b_and_f_agree_for_p_q_two() {
        let g = Grid::<f64>::new(1, 64, 1.0).unwrap();
        let part = DyadicPartition::new(g.clone(), DEFAULT_LAMBDA).unwrap();
        let f = Field::from_fn(g, |x: [f64; 2]| (2.0 * PI * x[0]).sin() + 0.3 * (14.0 * PI * x[0]).cos());
        for s in [-2.5, 0.0, 1.5] {
            let b = besov_norm(&f, s, 2.0, 2.0, &part).unwrap();
            let t = triebel_norm(&f, s, 2.0, 2.0, &part).unwrap();
            assert!((b - t).abs() <= 1e-10 * b);
        }
    }

    #[test]
    fn lambda_out_of_range() {
        let g = Grid::<f64>::new(1, 16, 1.0).unwrap();
        assert!(DyadicPartition::new(g.clone(), 1.0).is_err());
        assert!(DyadicPartition::new(g, 1.5).is_err());
    }
}
