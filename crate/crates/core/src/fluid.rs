//! Pseudo-spectral solver for the stochastic compressible Euler system
//!
//! ```text
//! d rho = -div(rho v) dt
//! d v_q = -((1/rho) d_q p + v . grad v_q) dt + sigma_q dY^q,   p = rho^2 / 2
//! ```
//!
//! on a periodic box. Products are dealiased with the 2/3 rule, the drift is
//! advanced by SSP-RK3 and the noise enters as a velocity kick after each step.

use rustfft::num_complex::Complex;

use crate::error::{Error, Result};
use crate::exact::exact_sum;
use crate::field::{Field, VectorField};
use crate::particles::SigmaField;
use crate::real::Real;
use crate::spectral::{Grid, Spectral, TrigInterpolant};

pub const DEFAULT_VACUUM_FLOOR: f64 = 1e-3;
pub const DEFAULT_CFL: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct FluidState<T> {
    pub rho: Field<T>,
    pub v: VectorField<T>,
    pub time: T,
}

impl<T: Real> FluidState<T> {
    pub fn new(rho: Field<T>, v: VectorField<T>, time: T) -> Result<Self> {
        if !rho.grid().same_geometry(v.grid()) {
            return Err(Error::GridMismatch("density and velocity grids differ".into()));
        }
        Ok(Self { rho, v, time })
    }

    pub fn grid(&self) -> &Grid<T> {
        self.rho.grid()
    }
}

/// Drift of the system together with the discrepancy between the two pressure forms.
#[derive(Clone, Debug)]
pub struct Drift<T> {
    pub drho: Vec<T>,
    pub dv: Vec<Vec<T>>,
    /// `max |(1/rho) grad(rho^2/2) - grad rho|` over the nodes and axes.
    pub pressure_gap: T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluidDiagnostics {
    pub mass: f64,
    pub momentum: [f64; 2],
    pub min_density: f64,
    pub max_speed: f64,
}

pub struct FluidSolver<T: Real> {
    spectral: Spectral<T>,
    cfl: T,
    vacuum_floor: T,
}

impl<T: Real> FluidSolver<T> {
    pub fn new(grid: Grid<T>, cfl: T, vacuum_floor: T) -> Result<Self> {
        if !(cfl > T::zero()) {
            return Err(Error::param("cfl", "CFL number must be positive"));
        }
        if !(vacuum_floor > T::zero()) {
            return Err(Error::param("vacuum_floor", "vacuum floor must be positive"));
        }
        Ok(Self {
            spectral: Spectral::new(grid),
            cfl,
            vacuum_floor,
        })
    }

    pub fn with_defaults(grid: Grid<T>) -> Self {
        Self {
            spectral: Spectral::new(grid),
            cfl: T::lit(DEFAULT_CFL),
            vacuum_floor: T::lit(DEFAULT_VACUUM_FLOOR),
        }
    }

    pub fn spectral(&self) -> &Spectral<T> {
        &self.spectral
    }

    pub fn grid(&self) -> &Grid<T> {
        self.spectral.grid()
    }

    fn check_vacuum(&self, rho: &[T]) -> Result<()> {
        let min = rho.iter().copied().fold(T::infinity(), T::min);
        if !(min > self.vacuum_floor) {
            return Err(Error::Vacuum {
                min: min.to_f64_lossy(),
                floor: self.vacuum_floor.to_f64_lossy(),
            });
        }
        Ok(())
    }

    fn dealiased(&self, values: &[T]) -> Vec<Complex<T>> {
        let mut s = self.spectral.forward(values);
        self.spectral.dealias(&mut s);
        s
    }

    fn drift_raw(&self, rho: &[T], v: &[Vec<T>]) -> Result<Drift<T>> {
        self.check_vacuum(rho)?;
        let sp = &self.spectral;
        let d = self.grid().dim();
        let len = rho.len();
        let mut div = vec![Complex::new(T::zero(), T::zero()); len];
        for a in 0..d {
            let flux: Vec<T> = rho.iter().zip(&v[a]).map(|(&r, &u)| r * u).collect();
            let ds = sp.differentiate_spectrum(&self.dealiased(&flux), a);
            for (acc, c) in div.iter_mut().zip(ds) {
                *acc = *acc + c;
            }
        }
        let drho: Vec<T> = sp.inverse(div).into_iter().map(|x| -x).collect();
        let rho_spec = sp.forward(rho);
        let half_sq: Vec<T> = rho.iter().map(|&r| r * r / T::lit(2.0)).collect();
        let p_spec = sp.forward(&half_sq);
        let v_spec: Vec<Vec<Complex<T>>> = v.iter().map(|c| sp.forward(c)).collect();
        let mut gap = T::zero();
        let mut dv = Vec::with_capacity(d);
        for q in 0..d {
            let grad_rho = sp.inverse(sp.differentiate_spectrum(&rho_spec, q));
            let grad_p = sp.inverse(sp.differentiate_spectrum(&p_spec, q));
            for ((&gr, &gp), &r) in grad_rho.iter().zip(&grad_p).zip(rho) {
                gap = gap.max((gp / r - gr).abs());
            }
            let mut adv = vec![T::zero(); len];
            for a in 0..d {
                let dvq = sp.inverse(sp.differentiate_spectrum(&v_spec[q], a));
                for ((acc, &u), &g) in adv.iter_mut().zip(&v[a]).zip(&dvq) {
                    *acc = *acc + u * g;
                }
            }
            let adv = sp.inverse(self.dealiased(&adv));
            let mut grs = rho_spec.clone();
            sp.dealias(&mut grs);
            let grad_rho_d = sp.inverse(sp.differentiate_spectrum(&grs, q));
            dv.push(adv.iter().zip(&grad_rho_d).map(|(&a, &g)| -a - g).collect());
        }
        Ok(Drift {
            drho,
            dv,
            pressure_gap: gap,
        })
    }

    /// Deterministic drift `(drho, dv)` at a state.
    pub fn rhs_deterministic(&self, state: &FluidState<T>) -> Result<Drift<T>> {
        self.check_grid(state)?;
        self.drift_raw(state.rho.values(), state.v.components())
    }

    fn check_grid(&self, state: &FluidState<T>) -> Result<()> {
        if !state.grid().same_geometry(self.grid()) {
            return Err(Error::GridMismatch("state lives on a different grid than the solver".into()));
        }
        Ok(())
    }

    /// Largest admissible step `cfl * h / max(|v| + sqrt(rho))`.
    pub fn stable_dt(&self, state: &FluidState<T>) -> T {
        let len = self.grid().len();
        let mut speed = T::zero();
        for i in 0..len {
            let v2 = state.v.components().iter().fold(T::zero(), |a, c| a + c[i] * c[i]);
            let r = state.rho.values()[i].max(T::zero());
            speed = speed.max(v2.sqrt() + r.sqrt());
        }
        if speed == T::zero() {
            return T::infinity();
        }
        self.cfl * self.grid().spacing() / speed
    }

    /// One SSP-RK3 step of the drift followed by the kick `v_q += sigma_q(t, x) dY^q`.
    pub fn step(&self, state: &FluidState<T>, dt: T, dy: &[T], sigma: &SigmaField<T>) -> Result<FluidState<T>> {
        self.check_grid(state)?;
        let d = self.grid().dim();
        if dy.len() != d || sigma.dim() != d {
            return Err(Error::GridMismatch("noise increment dimension differs from the box".into()));
        }
        if !(dt > T::zero()) {
            return Err(Error::param("dt", "time step must be positive"));
        }
        let bound = self.stable_dt(state);
        if dt > bound {
            return Err(Error::Cfl {
                dt: dt.to_f64_lossy(),
                bound: bound.to_f64_lossy(),
            });
        }
        let r0 = state.rho.values();
        let v0 = state.v.components();
        let axpy = |a: T, x: &[T], b: T, y: &[T], c: T, z: &[T]| -> Vec<T> {
            x.iter()
                .zip(y)
                .zip(z)
                .map(|((&x, &y), &z)| a * x + b * y + c * z)
                .collect()
        };
        let zero = T::zero();
        let one = T::one();
        let k0 = self.drift_raw(r0, v0)?;
        let r1 = axpy(one, r0, dt, &k0.drho, zero, r0);
        let v1: Vec<Vec<T>> = (0..d).map(|q| axpy(one, &v0[q], dt, &k0.dv[q], zero, &v0[q])).collect();
        let k1 = self.drift_raw(&r1, &v1)?;
        let (a, b) = (T::lit(0.75), T::lit(0.25));
        let r2 = axpy(a, r0, b, &r1, b * dt, &k1.drho);
        let v2: Vec<Vec<T>> = (0..d).map(|q| axpy(a, &v0[q], b, &v1[q], b * dt, &k1.dv[q])).collect();
        let k2 = self.drift_raw(&r2, &v2)?;
        let (a, b) = (one / T::lit(3.0), T::lit(2.0) / T::lit(3.0));
        let r3 = axpy(a, r0, b, &r2, b * dt, &k2.drho);
        let mut v3: Vec<Vec<T>> = (0..d).map(|q| axpy(a, &v0[q], b, &v2[q], b * dt, &k2.dv[q])).collect();
        self.kick(&mut v3, state.time, dy, sigma);
        self.check_vacuum(&r3)?;
        let time = state.time + dt;
        if r3.iter().chain(v3.iter().flatten()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                time: time.to_f64_lossy(),
                what: "fluid state".into(),
            });
        }
        let grid = self.grid().clone();
        FluidState::new(Field::new(grid.clone(), r3)?, VectorField::new(grid, v3)?, time)
    }

    fn kick(&self, v: &mut [Vec<T>], t: T, dy: &[T], sigma: &SigmaField<T>) {
        let grid = self.grid();
        let d = grid.dim();
        for (q, comp) in v.iter_mut().enumerate() {
            if dy[q] == T::zero() {
                continue;
            }
            for (i, val) in comp.iter_mut().enumerate() {
                let x = grid.node(i);
                *val = *val + sigma.value(t, &x[..d], q) * dy[q];
            }
        }
    }

    pub fn diagnostics(&self, state: &FluidState<T>) -> FluidDiagnostics {
        diagnostics(state)
    }
}

/// Mass, momentum `int rho v`, minimum density and maximum speed.
pub fn diagnostics<T: Real>(state: &FluidState<T>) -> FluidDiagnostics {
    let rho = state.rho.values();
    let vol = state.grid().cell_volume();
    let d = state.grid().dim();
    let mut momentum = [0.0; 2];
    for (q, m) in momentum.iter_mut().enumerate().take(d) {
        let c = state.v.component(q);
        *m = (exact_sum(rho.iter().zip(c).map(|(&r, &u)| r * u)) * vol).to_f64_lossy();
    }
    FluidDiagnostics {
        mass: state.rho.integral().to_f64_lossy(),
        momentum,
        min_density: state.rho.min().to_f64_lossy(),
        max_speed: state.v.max_norm().to_f64_lossy(),
    }
}

/// Point values of a fluid state and their gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct PointState<T> {
    pub rho: T,
    pub v: Vec<T>,
    /// `grad_v[q][a] = d_a v_q`.
    pub grad_v: Vec<Vec<T>>,
    pub grad_rho: Vec<T>,
}

/// Trigonometric interpolants of all fields of a state, built once and queried many times.
#[derive(Clone, Debug)]
pub struct StateInterpolant<T> {
    rho: TrigInterpolant<T>,
    v: Vec<TrigInterpolant<T>>,
}

impl<T: Real> StateInterpolant<T> {
    pub fn new(state: &FluidState<T>) -> Self {
        let sp = Spectral::new(state.grid().clone());
        Self {
            rho: sp.interpolant(state.rho.values()),
            v: state.v.components().iter().map(|c| sp.interpolant(c)).collect(),
        }
    }

    pub fn at(&self, x: &[T]) -> PointState<T> {
        let (rho, grad_rho) = self.rho.value_and_gradient(x);
        let mut v = Vec::with_capacity(self.v.len());
        let mut grad_v = Vec::with_capacity(self.v.len());
        for it in &self.v {
            let (val, g) = it.value_and_gradient(x);
            v.push(val);
            grad_v.push(g);
        }
        PointState { rho, v, grad_v, grad_rho }
    }

    /// Velocity only.
    pub fn velocity(&self, x: &[T]) -> Vec<T> {
        self.v.iter().map(|it| it.value(x)).collect()
    }
}

/// Spectral interpolation of `(rho, v, grad v, grad rho)` at `x`.
pub fn interpolate_state<T: Real>(state: &FluidState<T>, x: &[T]) -> PointState<T> {
    StateInterpolant::new(state).at(x)
}
