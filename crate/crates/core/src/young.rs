//! Young integration against Hölder paths and residual checks of the
//! associated calculus identities (integration by parts, chain rule,
//! Itô–Wentzell).
//!
//! Riemann–Young sums are accumulated with [`ExactSum`], each term
//! `X_r (Y_{r+1} - Y_r)` being split into two exactly represented products.
//! Identities that telescope therefore give residuals of exactly zero.

use crate::error::{Error, Result};
use crate::exact::ExactSum;
use crate::noise::{holder_seminorm, SampledPath};
use crate::real::Real;
use crate::spectral::{Grid, Spectral};

/// Where the integrand is evaluated inside each subinterval.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Tag {
    #[default]
    Left,
    /// Integrand at the interval midpoint of its piecewise-linear interpolant,
    /// i.e. the average of the two endpoint values.
    Midpoint,
}

/// How a sample `X_r` acts on a driver increment `Y_{rs} in R^d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    /// `X_r` is a scalar multiplying every component.
    Scalar,
    /// `X_r in R^d` multiplies componentwise.
    Diagonal,
    /// `X_r` is a row-major `rows x d` matrix.
    Matrix { rows: usize },
}

/// An integrand sampled on a uniform grid, stored as a path whose points are
/// the flattened samples.
#[derive(Clone, Debug, PartialEq)]
pub struct IntegrandPath<T> {
    path: SampledPath<T>,
    action: Action,
}

impl<T: Real> IntegrandPath<T> {
    pub fn new(path: SampledPath<T>, action: Action) -> Self {
        Self { path, action }
    }

    /// A scalar integrand from a scalar path; `beta` is its Hölder exponent.
    pub fn scalar(path: &SampledPath<T>) -> Result<Self> {
        if path.dim() != 1 {
            return Err(Error::param("integrand", "scalar integrand needs a one-dimensional path"));
        }
        Ok(Self::new(path.clone(), Action::Scalar))
    }

    /// A scalar integrand `f(t_i)` on the grid of `like`.
    pub fn from_fn(like: &SampledPath<T>, beta: T, f: impl Fn(T) -> T) -> Result<Self> {
        let p = SampledPath::from_fn(like.horizon(), like.steps(), beta, f)?;
        Ok(Self::new(p, Action::Scalar))
    }

    /// Scalar integrand `f(Y_{t_i})` for a scalar path `Y`.
    pub fn compose(y: &SampledPath<T>, beta: T, f: impl Fn(T) -> T) -> Result<Self> {
        let values = (0..=y.steps()).map(|i| f(y.at(i, 0))).collect();
        let p = SampledPath::new(y.horizon(), 1, values, beta)?;
        Ok(Self::new(p, Action::Scalar))
    }

    pub fn path(&self) -> &SampledPath<T> {
        &self.path
    }

    pub fn action(&self) -> Action {
        self.action
    }

    pub fn beta(&self) -> T {
        self.path.alpha()
    }

    fn output_dim(&self, d: usize) -> usize {
        match self.action {
            Action::Scalar | Action::Diagonal => d,
            Action::Matrix { rows } => rows,
        }
    }

    fn check_width(&self, d: usize) -> Result<()> {
        let want = match self.action {
            Action::Scalar => 1,
            Action::Diagonal => d,
            Action::Matrix { rows } => rows * d,
        };
        if self.path.dim() != want {
            return Err(Error::GridMismatch(format!(
                "integrand width {} does not match action on R^{d} (expected {want})",
                self.path.dim()
            )));
        }
        Ok(())
    }
}

fn require_young<T: Real>(alpha: T, beta: T) -> Result<()> {
    let sum = (alpha + beta).to_f64_lossy();
    if sum > 1.0 {
        Ok(())
    } else {
        Err(Error::YoungCondition { sum })
    }
}

/// Brings two paths on nested uniform grids to the coarser of the two.
fn common_grid<T: Real>(a: &SampledPath<T>, b: &SampledPath<T>) -> Result<(SampledPath<T>, SampledPath<T>)> {
    if a.horizon() != b.horizon() {
        return Err(Error::GridMismatch(format!(
            "horizons differ: {} vs {}",
            a.horizon(),
            b.horizon()
        )));
    }
    let (ma, mb) = (a.steps(), b.steps());
    if ma == mb {
        Ok((a.clone(), b.clone()))
    } else if ma % mb == 0 {
        Ok((a.restrict(ma / mb)?, b.clone()))
    } else if mb % ma == 0 {
        Ok((a.clone(), b.restrict(mb / ma)?))
    } else {
        Err(Error::GridMismatch(format!("grids with {ma} and {mb} steps are not nested")))
    }
}

/// Partition `{s} ∪ (interior nodes) ∪ {t}` together with the integrand and
/// driver values on it.
struct Partition<T> {
    x: Vec<Vec<T>>,
    y: Vec<Vec<T>>,
}

fn partition<T: Real>(x: &SampledPath<T>, y: &SampledPath<T>, s: T, t: T) -> Result<Partition<T>> {
    if !(s <= t) {
        return Err(Error::param("s", "integration bounds need s <= t"));
    }
    let horizon = y.horizon();
    for v in [s, t] {
        if !(v >= T::zero() && v <= horizon) {
            return Err(Error::OutOfHorizon {
                value: v.to_f64_lossy(),
                horizon: horizon.to_f64_lossy(),
            });
        }
    }
    let mut xs = vec![x.value_at(s)?];
    let mut ys = vec![y.value_at(s)?];
    for (i, &r) in y.times().iter().enumerate() {
        if r > s && r < t {
            xs.push(x.point(i).to_vec());
            ys.push(y.point(i).to_vec());
        }
    }
    if t > s {
        xs.push(x.value_at(t)?);
        ys.push(y.value_at(t)?);
    }
    Ok(Partition { x: xs, y: ys })
}

/// Adds `X (b - a)` exactly to the accumulators, one per output component.
fn accumulate<T: Real>(acc: &mut [ExactSum<T>], action: Action, xv: &[T], a: &[T], b: &[T], weight: T) {
    let d = a.len();
    match action {
        Action::Scalar => {
            for q in 0..d {
                let c = xv[0] * weight;
                acc[q].add_product(c, b[q]);
                acc[q].add_product(-c, a[q]);
            }
        }
        Action::Diagonal => {
            for q in 0..d {
                let c = xv[q] * weight;
                acc[q].add_product(c, b[q]);
                acc[q].add_product(-c, a[q]);
            }
        }
        Action::Matrix { rows } => {
            for (r, slot) in acc.iter_mut().enumerate().take(rows) {
                for q in 0..d {
                    let c = xv[r * d + q] * weight;
                    slot.add_product(c, b[q]);
                    slot.add_product(-c, a[q]);
                }
            }
        }
    }
}

fn riemann_sums<T: Real>(p: &Partition<T>, action: Action, tag: Tag, out_dim: usize) -> Vec<ExactSum<T>> {
    let mut acc = vec![ExactSum::new(); out_dim];
    let half = T::lit(0.5);
    for k in 0..p.y.len().saturating_sub(1) {
        match tag {
            Tag::Left => accumulate(&mut acc, action, &p.x[k], &p.y[k], &p.y[k + 1], T::one()),
            Tag::Midpoint => {
                accumulate(&mut acc, action, &p.x[k], &p.y[k], &p.y[k + 1], half);
                accumulate(&mut acc, action, &p.x[k + 1], &p.y[k], &p.y[k + 1], half);
            }
        }
    }
    acc
}

/// Left-point Young integral `∫_s^t X_r dY_r` on the common grid.
pub fn young_integral<T: Real>(x: &IntegrandPath<T>, y: &SampledPath<T>, s: T, t: T) -> Result<Vec<T>> {
    young_integral_with(x, y, s, t, Tag::Left)
}

pub fn young_integral_with<T: Real>(
    x: &IntegrandPath<T>,
    y: &SampledPath<T>,
    s: T,
    t: T,
    tag: Tag,
) -> Result<Vec<T>> {
    require_young(y.alpha(), x.beta())?;
    x.check_width(y.dim())?;
    let (xp, yp) = common_grid(&x.path, y)?;
    let part = partition(&xp, &yp, s, t)?;
    let sums = riemann_sums(&part, x.action, tag, x.output_dim(y.dim()));
    Ok(sums.iter().map(ExactSum::value).collect())
}

/// Quadrature defect of one Young–Loève window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoeveDefect<T> {
    pub defect: T,
    /// `defect / (|Y|_alpha |X|_beta |t - s|^(alpha + beta))`, zero for constant paths.
    pub bound_factor: T,
}

/// Caches the Hölder seminorms of a fixed integrand/driver pair so many
/// windows can be evaluated cheaply.
pub struct LoeveProbe<T> {
    x: IntegrandPath<T>,
    y: SampledPath<T>,
    x_norm: T,
    y_norm: T,
}

impl<T: Real> LoeveProbe<T> {
    pub fn new(x: &IntegrandPath<T>, y: &SampledPath<T>) -> Result<Self> {
        require_young(y.alpha(), x.beta())?;
        x.check_width(y.dim())?;
        let (xp, yp) = common_grid(&x.path, y)?;
        let x_norm = holder_seminorm(&xp, x.beta());
        let y_norm = holder_seminorm(&yp, yp.alpha());
        Ok(Self {
            x: IntegrandPath::new(xp, x.action),
            y: yp,
            x_norm,
            y_norm,
        })
    }

    pub fn seminorms(&self) -> (T, T) {
        (self.x_norm, self.y_norm)
    }

    pub fn defect(&self, s: T, t: T) -> Result<LoeveDefect<T>> {
        let part = partition(&self.x.path, &self.y, s, t)?;
        let d = self.y.dim();
        let mut sums = riemann_sums(&part, self.x.action, Tag::Left, self.x.output_dim(d));
        let first = part.x[0].clone();
        let (ys, yt) = (&part.y[0], &part.y[part.y.len() - 1]);
        accumulate(&mut sums, self.x.action, &first, ys, yt, -T::one());
        let defect = sums
            .iter()
            .map(|s| {
                let v = s.value();
                v * v
            })
            .fold(T::zero(), |a, b| a + b)
            .sqrt();
        let scale = self.y_norm * self.x_norm * (t - s).powf(self.y.alpha() + self.x.beta());
        let bound_factor = if scale > T::zero() { defect / scale } else { T::zero() };
        Ok(LoeveDefect { defect, bound_factor })
    }
}

/// `|∫_s^t X dY - X_s Y_{st}|` and its ratio to the Young–Loève bound.
pub fn young_loeve_defect<T: Real>(
    x: &IntegrandPath<T>,
    y: &SampledPath<T>,
    s: T,
    t: T,
) -> Result<LoeveDefect<T>> {
    LoeveProbe::new(x, y)?.defect(s, t)
}

/// Scaling of the Young–Loève defect with the window length.
#[derive(Clone, Debug, PartialEq)]
pub struct LoeveScaling {
    /// `(window length, mean defect over disjoint windows of that length)`.
    pub points: Vec<(f64, f64)>,
    pub exponent: f64,
}

/// Mean defect over the disjoint windows of length `T / 2^k`, `k = 0, 1, ...`,
/// down to windows of `min_cells` grid cells, and the fitted log-log slope.
pub fn loeve_scaling<T: Real>(x: &IntegrandPath<T>, y: &SampledPath<T>, min_cells: usize) -> Result<LoeveScaling> {
    let probe = LoeveProbe::new(x, y)?;
    let m = probe.y.steps();
    let times = probe.y.times().to_vec();
    let mut points = Vec::new();
    let mut cells = m;
    while cells >= min_cells.max(1) && m % cells == 0 {
        let windows = m / cells;
        let mut total = 0.0;
        for w in 0..windows {
            total += probe.defect(times[w * cells], times[(w + 1) * cells])?.defect.to_f64_lossy();
        }
        let len = (times[cells] - times[0]).to_f64_lossy();
        points.push((len, total / windows as f64));
        if cells % 2 != 0 {
            break;
        }
        cells /= 2;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().map(|&(l, d)| (l.ln(), d.ln())).unzip();
    let exponent = crate::stats::linear_fit(&xs, &ys)?.slope;
    Ok(LoeveScaling { points, exponent })
}

fn scalar_pair<T: Real>(a: &SampledPath<T>, b: &SampledPath<T>) -> Result<(SampledPath<T>, SampledPath<T>)> {
    if a.dim() != 1 || b.dim() != 1 {
        return Err(Error::param("path", "identity checks take scalar paths"));
    }
    common_grid(a, b)
}

/// `|X_T Y_T - X_0 Y_0 - ∫ X dY - ∫ Y dX|` on the working mesh.
pub fn check_integration_by_parts<T: Real>(x: &SampledPath<T>, y: &SampledPath<T>, tag: Tag) -> Result<T> {
    require_young(x.alpha(), y.alpha())?;
    let (x, y) = scalar_pair(x, y)?;
    let horizon = y.horizon();
    let acc = riemann_sums(&partition(&x, &y, T::zero(), horizon)?, Action::Scalar, tag, 1).remove(0);
    let other = riemann_sums(&partition(&y, &x, T::zero(), horizon)?, Action::Scalar, tag, 1).remove(0);
    let mut r = ExactSum::new();
    let m = x.steps();
    r.add_product(x.at(m, 0), y.at(m, 0));
    r.add_product(-x.at(0, 0), y.at(0, 0));
    acc.negate_into(&mut r);
    other.negate_into(&mut r);
    Ok(r.value().abs())
}

/// `|f(X_T) - f(X_0) - ∫ Df(X_r) dX_r|` for a scalar path.
pub fn check_chain_rule<T: Real>(
    f: impl Fn(T) -> T,
    df: impl Fn(T) -> T,
    x: &SampledPath<T>,
    tag: Tag,
) -> Result<T> {
    if x.dim() != 1 {
        return Err(Error::param("path", "identity checks take scalar paths"));
    }
    let integrand: Vec<Vec<T>> = (0..=x.steps()).map(|i| vec![df(x.at(i, 0))]).collect();
    let driver: Vec<Vec<T>> = (0..=x.steps()).map(|i| x.point(i).to_vec()).collect();
    let sums = riemann_sums(
        &Partition {
            x: integrand,
            y: driver,
        },
        Action::Scalar,
        tag,
        1,
    );
    let mut r = ExactSum::new();
    r.add(f(x.at(x.steps(), 0)));
    r.add(-f(x.at(0, 0)));
    sums[0].negate_into(&mut r);
    Ok(r.value().abs())
}

/// A random field `g_t(x) = g_0(x) + ∫_0^t h_s(x) dY_s` tabulated on a periodic
/// one-dimensional grid at every node of the driver's time grid.
pub struct WentzellField<T: Real> {
    spectral: Spectral<T>,
    /// `g[i]` holds `g_{t_i}` on the spatial grid.
    g: Vec<Vec<T>>,
    /// `h[i]` holds `h_{t_i}` on the spatial grid.
    h: Vec<Vec<T>>,
}

impl<T: Real> WentzellField<T> {
    /// `g0` and every `h(t)` are nodal values on `grid`; `y` is a scalar driver.
    pub fn build(grid: Grid<T>, g0: &[T], h: impl Fn(T) -> Vec<T>, y: &SampledPath<T>, tag: Tag) -> Result<Self> {
        if grid.dim() != 1 || y.dim() != 1 {
            return Err(Error::param("grid", "the Itô–Wentzell check is one-dimensional"));
        }
        if g0.len() != grid.len() {
            return Err(Error::GridMismatch("g0 does not match the spatial grid".into()));
        }
        let hs: Vec<Vec<T>> = y.times().iter().map(|&t| h(t)).collect();
        if hs.iter().any(|v| v.len() != grid.len()) {
            return Err(Error::GridMismatch("h does not match the spatial grid".into()));
        }
        let n = grid.len();
        let mut acc: Vec<ExactSum<T>> = g0
            .iter()
            .map(|&v| {
                let mut s = ExactSum::new();
                s.add(v);
                s
            })
            .collect();
        let mut g = vec![g0.to_vec()];
        let half = T::lit(0.5);
        for i in 0..y.steps() {
            let (a, b) = (y.at(i, 0), y.at(i + 1, 0));
            for (j, slot) in acc.iter_mut().enumerate().take(n) {
                match tag {
                    Tag::Left => {
                        slot.add_product(hs[i][j], b);
                        slot.add_product(-hs[i][j], a);
                    }
                    Tag::Midpoint => {
                        for c in [hs[i][j] * half, hs[i + 1][j] * half] {
                            slot.add_product(c, b);
                            slot.add_product(-c, a);
                        }
                    }
                }
            }
            g.push(acc.iter().map(ExactSum::value).collect());
        }
        Ok(Self {
            spectral: Spectral::new(grid),
            g,
            h: hs,
        })
    }

    pub fn grid(&self) -> &Grid<T> {
        self.spectral.grid()
    }

    /// `g_{t_i}` on the spatial grid.
    pub fn at_time(&self, i: usize) -> &[T] {
        &self.g[i]
    }
}

/// `|g_T(X_T) - g_0(X_0) - ∫ h_s(X_s) dY_s - ∫ D_x g_s(X_s) dX_s|`.
///
/// Spatial values and derivatives come from trigonometric interpolation of the
/// tabulated field; `X` is wrapped periodically into the spatial box.
pub fn check_ito_wentzell<T: Real>(
    field: &WentzellField<T>,
    y: &SampledPath<T>,
    x: &SampledPath<T>,
    tag: Tag,
) -> Result<T> {
    let (x, y) = scalar_pair(x, y)?;
    if y.steps() + 1 != field.g.len() {
        return Err(Error::GridMismatch("field was built on a different time grid".into()));
    }
    let m = y.steps();
    let mut h_at = Vec::with_capacity(m + 1);
    let mut dg_at = Vec::with_capacity(m + 1);
    let mut g_end = T::zero();
    let mut g_start = T::zero();
    for i in 0..=m {
        let xi = [x.at(i, 0)];
        h_at.push(vec![field.spectral.interpolant(&field.h[i]).value(&xi)]);
        let (gv, grad) = field.spectral.interpolant(&field.g[i]).value_and_gradient(&xi);
        dg_at.push(vec![grad[0]]);
        if i == 0 {
            g_start = gv;
        }
        if i == m {
            g_end = gv;
        }
    }
    let ys: Vec<Vec<T>> = (0..=m).map(|i| y.point(i).to_vec()).collect();
    let xs: Vec<Vec<T>> = (0..=m).map(|i| x.point(i).to_vec()).collect();
    let noise_part = riemann_sums(&Partition { x: h_at, y: ys }, Action::Scalar, tag, 1)[0].value();
    let transport = riemann_sums(&Partition { x: dg_at, y: xs }, Action::Scalar, tag, 1).remove(0);
    let mut r = ExactSum::new();
    r.add(g_end);
    r.add(-g_start);
    // g is stored rounded, so the noise integral enters rounded too
    r.add(-noise_part);
    transport.negate_into(&mut r);
    Ok(r.value().abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{sample_fbm, NoiseSpec};

    fn fbm(seed: u64, steps: usize) -> SampledPath<f64> {
        sample_fbm(&NoiseSpec {
            hurst: 0.75,
            dim: 1,
            horizon: 1.0,
            steps,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn constant_integrand_telescopes() {
        let y = fbm(1, 256);
        let x = IntegrandPath::from_fn(&y, 1.0, |_| 2.5).unwrap();
        let v = young_integral(&x, &y, 0.0, 1.0).unwrap()[0];
        assert!((v - 2.5 * y.at(256, 0)).abs() <= 1e-15 * v.abs().max(1.0));
    }

    #[test]
    fn riemann_limit_of_identity() {
        let y = SampledPath::<f64>::from_fn(1.0, 4096, 1.0, |t| t).unwrap();
        let x = IntegrandPath::from_fn(&y, 1.0, |t| t).unwrap();
        let v = young_integral(&x, &y, 0.0, 1.0).unwrap()[0];
        assert!((v - 0.5).abs() < 2e-4);
        let w = young_integral_with(&x, &y, 0.0, 1.0, Tag::Midpoint).unwrap()[0];
        assert!((w - 0.5).abs() < 1e-15);
    }

    #[test]
    fn refuses_rough_pairs() {
        let y = fbm(1, 64);
        let x = IntegrandPath::from_fn(&y, 0.2, |t| t).unwrap();
        assert!(matches!(young_integral(&x, &y, 0.0, 1.0), Err(Error::YoungCondition { .. })));
    }

    #[test]
    fn trivial_identities_are_exact() {
        let y = fbm(3, 512);
        let one = SampledPath::from_fn(1.0, 512, 1.0, |_| 1.0).unwrap();
        for tag in [Tag::Left, Tag::Midpoint] {
            assert_eq!(check_integration_by_parts(&one, &y, tag).unwrap(), 0.0);
            assert_eq!(check_chain_rule(|_| 4.0, |_| 0.0, &y, tag).unwrap(), 0.0);
            assert_eq!(check_chain_rule(|v| v, |_| 1.0, &y, tag).unwrap(), 0.0);
        }
    }

    #[test]
    fn constant_integrand_has_no_defect() {
        let y = fbm(4, 128);
        let x = IntegrandPath::from_fn(&y, 1.0, |_| -1.5).unwrap();
        let d = young_loeve_defect(&x, &y, 0.25, 0.75).unwrap();
        assert_eq!(d.defect, 0.0);
        assert_eq!(d.bound_factor, 0.0);
    }

    #[test]
    fn wentzell_with_space_independent_h_is_exact() {
        let grid = Grid::new(1, 16, std::f64::consts::TAU).unwrap();
        let y = fbm(5, 256);
        let x = fbm(6, 256);
        for tag in [Tag::Left, Tag::Midpoint] {
            let field = WentzellField::build(grid.clone(), &[0.0; 16], |t| vec![1.0 + t; 16], &y, tag).unwrap();
            assert_eq!(check_ito_wentzell(&field, &y, &x, tag).unwrap(), 0.0);
        }
    }

    #[test]
    fn matrix_action() {
        let y = sample_fbm(&NoiseSpec {
            hurst: 0.7,
            dim: 2,
            horizon: 1.0,
            steps: 64,
            seed: 8,
        })
        .unwrap();
        // constant matrix [[1, 2], [0, -1]]
        let values: Vec<f64> = (0..=64).flat_map(|_| [1.0, 2.0, 0.0, -1.0]).collect();
        let x = IntegrandPath::new(SampledPath::new(1.0, 4, values, 1.0).unwrap(), Action::Matrix { rows: 2 });
        let v = young_integral(&x, &y, 0.0, 1.0).unwrap();
        let (a, b) = (y.at(64, 0), y.at(64, 1));
        assert!((v[0] - (a + 2.0 * b)).abs() < 1e-14);
        assert!((v[1] + b).abs() < 1e-14);
    }
}
