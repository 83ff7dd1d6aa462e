//! Coupled particle / fluid experiments driven by one noise path, the
//! modulated energy
//!
//! ```text
//! Q_t^N = (1/N) sum_k |V^k - v(X^k, t)|^2 + || S^N * phi_N^r - rho(t) ||_{L^2}^2
//! ```
//!
//! and the log-log rate fits across particle counts.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{BackendChoice, ExperimentConfig, InitChoice, SigmaChoice};
use crate::error::{Error, Result};
use crate::exact::exact_sum;
use crate::field::{Field, VectorField};
use crate::fluid::{FluidSolver, FluidState, StateInterpolant};
use crate::kernel::KernelFamily;
use crate::lp::{negative_distance, DyadicPartition};
use crate::noise::{sample_fbm, NoiseSpec, SampledPath};
use crate::particles::{
    deposit_nearest, empirical_density, init_from_fields, ForceBackend, InitStrategy, ParticleEnsemble,
    ParticleStepper, SigmaField,
};
use crate::real::Real;
use crate::spectral::{Grid, Spectral};
use crate::stats::linear_fit;

pub const REPORT_VERSION: &str = "1";

/// One evaluation of the modulated energy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyRecord {
    pub t: f64,
    pub kinetic_term: f64,
    pub density_term: f64,
    pub q: f64,
}

fn check_times<T: Real>(particles: T, fluid: T) -> Result<()> {
    let (p, f) = (particles.to_f64_lossy(), fluid.to_f64_lossy());
    if (p - f).abs() > 1e-9 * p.abs().max(f.abs()).max(1.0) {
        return Err(Error::TimeMismatch { particles: p, fluid: f });
    }
    Ok(())
}

/// `Q_t^N` of an ensemble against a fluid state at the same time.
///
/// The density term is evaluated on `diag`, onto which `rho` is resampled spectrally.
pub fn energy_q<T: Real>(
    ens: &ParticleEnsemble<T>,
    fluid: &FluidState<T>,
    kernel: &KernelFamily<T>,
    diag: &Spectral<T>,
) -> Result<EnergyRecord> {
    check_times(ens.time(), fluid.time)?;
    let interp = StateInterpolant::new(fluid);
    energy_q_with(ens, fluid, &interp, kernel, diag)
}

fn energy_q_with<T: Real>(
    ens: &ParticleEnsemble<T>,
    fluid: &FluidState<T>,
    interp: &StateInterpolant<T>,
    kernel: &KernelFamily<T>,
    diag: &Spectral<T>,
) -> Result<EnergyRecord> {
    let n = ens.count();
    let order = ens.canonical_order();
    let mismatch: Vec<T> = order
        .par_iter()
        .map(|&k| {
            let v = interp.velocity(ens.position(k));
            ens.velocity(k)
                .iter()
                .zip(&v)
                .fold(T::zero(), |a, (&x, &y)| a + (x - y) * (x - y))
        })
        .collect();
    let kinetic = exact_sum(mismatch) / T::from_usize_exact(n);
    let smoothed = empirical_density(ens, kernel, diag)?;
    let rho = if fluid.grid().same_geometry(diag.grid()) {
        fluid.rho.clone()
    } else {
        let sp = Spectral::new(fluid.grid().clone());
        Field::new(diag.grid().clone(), sp.resample(fluid.rho.values(), diag.grid())?)?
    };
    let density = smoothed.sub(&rho)?.l2_squared();
    let kinetic = kinetic.to_f64_lossy();
    let density = density.to_f64_lossy();
    Ok(EnergyRecord {
        t: ens.time().to_f64_lossy(),
        kinetic_term: kinetic,
        density_term: density,
        q: kinetic + density,
    })
}

/// One CSV row: a checkpoint of one `(seed, N)` run.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub seed: u64,
    pub n: usize,
    pub energy: EnergyRecord,
    /// Negative-order distances `||S^N - rho||`, one per configured `eta`.
    pub besov_s: Vec<f64>,
    /// Negative-order distances `||V^N - rho v||`, one per configured `eta`.
    pub besov_v: Vec<f64>,
    pub flags: String,
}

/// Outcome of one `(seed, N)` particle run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub seed: u64,
    pub n: usize,
    pub rows: Vec<ReportRow>,
    /// Reason code when the run aborted.
    pub failure: Option<String>,
}

/// Everything a coupled run produces for one seed.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub runs: Vec<RunOutcome>,
    pub fluid_failure: Option<String>,
}

fn reason_code(e: &Error) -> &'static str {
    match e {
        Error::Vacuum { .. } => "vacuum",
        Error::Cfl { .. } => "cfl",
        Error::NonFinite { .. } => "nonfinite",
        Error::UnderResolved { .. } => "underresolved",
        Error::KernelSupport { .. } => "support",
        _ => "error",
    }
}

/// Initial fields `rho0 = (1 + a prod_q sin(2 pi x_q / L)) / L^d`, `v0_q = b sin(2 pi x_q / L)`.
pub fn initial_fields<T: Real>(cfg: &ExperimentConfig, grid: &Grid<T>) -> (Field<T>, VectorField<T>) {
    let l = cfg.length;
    let d = cfg.dim;
    let w = 2.0 * std::f64::consts::PI / l;
    let a = cfg.rho_amplitude;
    let b = cfg.v_amplitude;
    let rho = Field::from_fn(grid.clone(), |x| {
        let prod: f64 = (0..d).map(|q| (w * x[q].to_f64_lossy()).sin()).product();
        T::lit((1.0 + a * prod) / l.powi(d as i32))
    });
    let v = VectorField::from_fn(grid.clone(), |x| {
        let mut out = [T::zero(); 2];
        for q in 0..d {
            out[q] = T::lit(b * (w * x[q].to_f64_lossy()).sin());
        }
        out
    });
    (rho, v)
}

pub fn sigma_field<T: Real>(cfg: &ExperimentConfig) -> SigmaField<T> {
    match cfg.sigma {
        SigmaChoice::Zero => SigmaField::zero(cfg.dim),
        SigmaChoice::Constant => SigmaField::constant(vec![T::lit(cfg.sigma_amplitude); cfg.dim]),
        SigmaChoice::Cosine => SigmaField::cosine(
            cfg.dim,
            T::lit(cfg.sigma_amplitude),
            T::lit(cfg.sigma_modulation),
            T::lit(cfg.length),
        ),
    }
}

pub fn kernel_for<T: Real>(cfg: &ExperimentConfig) -> Result<KernelFamily<T>> {
    KernelFamily::new(cfg.kernel_base, T::lit(cfg.beta), cfg.dim, T::lit(cfg.bandwidth))
}

/// Smallest power of two `>= floor` giving at least `cells` nodes per `width`.
fn resolving_grid(length: f64, width: f64, cells: f64, floor: usize) -> usize {
    let mut m = floor.next_power_of_two().max(8);
    while length / (m as f64) > width / cells {
        m *= 2;
    }
    m
}

/// Force grid used for `N` particles.
pub fn force_backend_for(cfg: &ExperimentConfig, n: usize) -> ForceBackend {
    match cfg.force_backend {
        BackendChoice::Direct => ForceBackend::Direct,
        BackendChoice::Grid => {
            let resolution = if cfg.force_grid > 0 {
                cfg.force_grid
            } else {
                let k = kernel_for::<f64>(cfg).expect("validated kernel");
                resolving_grid(cfg.length, k.width(n) * std::f64::consts::SQRT_2, 4.0, 64)
            };
            ForceBackend::Grid {
                resolution,
                order: cfg.spline_order,
            }
        }
    }
}

/// Grid on which the mollified empirical density is compared with `rho`.
pub fn diag_resolution_for(cfg: &ExperimentConfig, n: usize) -> usize {
    if cfg.diag_resolution > 0 {
        return cfg.diag_resolution;
    }
    let k = kernel_for::<f64>(cfg).expect("validated kernel");
    resolving_grid(cfg.length, k.width(n), 4.0, cfg.pde_resolution)
}

/// Fluid states at the checkpoints `0, T/c, ..., T` on the master path.
pub fn fluid_trajectory<T: Real>(
    cfg: &ExperimentConfig,
    path: &SampledPath<T>,
    sigma: &SigmaField<T>,
) -> Result<Vec<FluidState<T>>> {
    let grid = Grid::new(cfg.dim, cfg.pde_resolution, T::lit(cfg.length))?;
    let solver = FluidSolver::new(grid.clone(), T::lit(cfg.cfl), T::lit(cfg.vacuum_floor))?;
    let (rho, v) = initial_fields(cfg, &grid);
    let mut state = FluidState::new(rho, v, T::zero())?;
    let every = cfg.steps / cfg.checkpoints;
    let mut out = vec![state.clone()];
    let dt = path.dt();
    let d = cfg.dim;
    let mut dy = vec![T::zero(); d];
    for i in 0..cfg.steps {
        for (q, v) in dy.iter_mut().enumerate() {
            *v = path.at(i + 1, q) - path.at(i, q);
        }
        let mut next = solver.step(&state, dt, &dy, sigma)?;
        // pin checkpoint times to the grid instead of the accumulated sum
        next.time = path.times()[i + 1];
        state = next;
        if (i + 1) % every == 0 {
            out.push(state.clone());
        }
    }
    Ok(out)
}

struct Analysis<T: Real> {
    partition: DyadicPartition<T>,
    etas: Vec<f64>,
    q_hat: f64,
    kind: crate::lp::NormKind,
}

impl<T: Real> Analysis<T> {
    fn distances(&self, ens: &ParticleEnsemble<T>, fluid: &FluidState<T>) -> Result<(Vec<f64>, Vec<f64>)> {
        let grid = self.partition.grid();
        let d = ens.dim();
        let rho = if fluid.grid().same_geometry(grid) {
            fluid.rho.clone()
        } else {
            let sp = Spectral::new(fluid.grid().clone());
            Field::new(grid.clone(), sp.resample(fluid.rho.values(), grid)?)?
        };
        let s_dep = deposit_nearest(ens, grid, |_| T::one())?;
        let mut targets = Vec::with_capacity(d);
        let mut deps = Vec::with_capacity(d);
        for q in 0..d {
            let vq = if fluid.grid().same_geometry(grid) {
                fluid.v.component(q).to_vec()
            } else {
                Spectral::new(fluid.grid().clone()).resample(fluid.v.component(q), grid)?
            };
            let target: Vec<T> = rho.values().iter().zip(&vq).map(|(&r, &v)| r * v).collect();
            targets.push(Field::new(grid.clone(), target)?);
            deps.push(deposit_nearest(ens, grid, |k| ens.velocity(k)[q])?);
        }
        let mut bs = Vec::with_capacity(self.etas.len());
        let mut bv = Vec::with_capacity(self.etas.len());
        for &eta in &self.etas {
            bs.push(negative_distance(&s_dep, &rho, eta, self.q_hat, self.kind, &self.partition)?);
            let mut sq = 0.0;
            for q in 0..d {
                let x = negative_distance(&deps[q], &targets[q], eta, self.q_hat, self.kind, &self.partition)?;
                sq += x * x;
            }
            bv.push(sq.sqrt());
        }
        Ok((bs, bv))
    }
}

/// Runs the particle system with `n` particles against a precomputed fluid trajectory.
pub fn run_particles<T: Real>(
    cfg: &ExperimentConfig,
    seed: u64,
    n: usize,
    path: &SampledPath<T>,
    sigma: &SigmaField<T>,
    fluid: &[FluidState<T>],
) -> RunOutcome {
    let mut rows = Vec::new();
    let failure = match particle_rows(cfg, seed, n, path, sigma, fluid, &mut rows) {
        Ok(()) => None,
        Err(e) => {
            log::warn!("seed {seed}, N = {n}: run aborted: {e}");
            Some(reason_code(&e).to_string())
        }
    };
    if let Some(code) = &failure {
        let t = rows.last().map(|r: &ReportRow| r.energy.t).unwrap_or(0.0);
        rows.push(ReportRow {
            seed,
            n,
            energy: EnergyRecord {
                t,
                kinetic_term: f64::NAN,
                density_term: f64::NAN,
                q: f64::NAN,
            },
            besov_s: vec![f64::NAN; cfg.etas.len()],
            besov_v: vec![f64::NAN; cfg.etas.len()],
            flags: format!("aborted:{code}"),
        });
    }
    RunOutcome { seed, n, rows, failure }
}

fn particle_rows<T: Real>(
    cfg: &ExperimentConfig,
    seed: u64,
    n: usize,
    path: &SampledPath<T>,
    sigma: &SigmaField<T>,
    fluid: &[FluidState<T>],
    rows: &mut Vec<ReportRow>,
) -> Result<()> {
    let kernel = kernel_for::<T>(cfg)?;
    let strategy = match cfg.init {
        InitChoice::Quantile => InitStrategy::Quantile,
        InitChoice::Random => InitStrategy::Random { seed: seed ^ ((n as u64) << 32) },
    };
    let mut ens = init_from_fields(&fluid[0].rho, &fluid[0].v, n, strategy)?;
    let diag = Spectral::new(Grid::new(cfg.dim, diag_resolution_for(cfg, n), T::lit(cfg.length))?);
    let lp_grid = Grid::new(cfg.dim, cfg.lp_grid_resolution(), T::lit(cfg.length))?;
    let analysis = Analysis {
        partition: DyadicPartition::new(lp_grid, cfg.lambda)?,
        etas: cfg.etas.clone(),
        q_hat: cfg.q_hat,
        kind: cfg.norm,
    };
    let mut stepper = ParticleStepper::new(kernel.clone(), force_backend_for(cfg, n));
    let stride = cfg.stride()?;
    let coarse = if stride == 1 { path.clone() } else { path.restrict(stride)? };
    let per_checkpoint = cfg.steps / cfg.checkpoints / stride;
    let dt = coarse.dt();
    let d = cfg.dim;
    let mut dy = vec![T::zero(); d];
    let record = |ens: &ParticleEnsemble<T>, state: &FluidState<T>, rows: &mut Vec<ReportRow>| -> Result<()> {
        let interp = StateInterpolant::new(state);
        let energy = energy_q_with(ens, state, &interp, &kernel, &diag)?;
        let (bs, bv) = analysis.distances(ens, state)?;
        rows.push(ReportRow {
            seed,
            n,
            energy,
            besov_s: bs,
            besov_v: bv,
            flags: "ok".into(),
        });
        Ok(())
    };
    record(&ens, &fluid[0], rows)?;
    let mut i = 0;
    for state in &fluid[1..] {
        for _ in 0..per_checkpoint {
            for (q, v) in dy.iter_mut().enumerate() {
                *v = coarse.at(i + 1, q) - coarse.at(i, q);
            }
            stepper.step(&mut ens, dt, &dy, sigma)?;
            i += 1;
        }
        check_times(ens.time(), state.time)?;
        record(&ens, state, rows)?;
    }
    Ok(())
}

/// Full coupled run for one seed: master path, fluid trajectory, then every `N` in parallel.
pub fn run_seed<T: Real>(cfg: &ExperimentConfig, seed: u64, sigma_scale: f64) -> Result<SeedRun> {
    cfg.validate()?;
    let spec = NoiseSpec {
        hurst: T::lit(cfg.hurst),
        dim: cfg.dim,
        horizon: T::lit(cfg.horizon),
        steps: cfg.steps,
        seed,
    };
    let path = sample_fbm(&spec)?;
    let sigma = sigma_field::<T>(cfg).scaled(T::lit(sigma_scale));
    let fluid = match fluid_trajectory(cfg, &path, &sigma) {
        Ok(f) => f,
        Err(e) => {
            log::warn!("seed {seed}: fluid run aborted: {e}");
            return Ok(SeedRun {
                seed,
                runs: Vec::new(),
                fluid_failure: Some(reason_code(&e).to_string()),
            });
        }
    };
    let runs = cfg
        .n_list
        .par_iter()
        .map(|&n| run_particles(cfg, seed, n, &path, &sigma, &fluid))
        .collect();
    Ok(SeedRun {
        seed,
        runs,
        fluid_failure: None,
    })
}

/// Runs every seed of the configuration, streaming CSV rows to `csv` (if given) as seeds finish.
pub fn run_coupled<T: Real>(cfg: &ExperimentConfig, sigma_scale: f64, csv: Option<&Path>) -> Result<Vec<SeedRun>> {
    let mut writer = match csv {
        Some(p) => {
            let mut f = std::fs::File::create(p).map_err(|e| Error::io(p, e))?;
            f.write_all(csv_header(cfg).as_bytes()).map_err(|e| Error::io(p, e))?;
            Some((f, p.to_path_buf()))
        }
        None => None,
    };
    let mut out = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let run = run_seed::<T>(cfg, seed, sigma_scale)?;
        if let Some((f, p)) = writer.as_mut() {
            f.write_all(csv_rows(&run).as_bytes()).map_err(|e| Error::io(&*p, e))?;
            f.flush().map_err(|e| Error::io(&*p, e))?;
        }
        out.push(run);
    }
    Ok(out)
}

fn csv_header(cfg: &ExperimentConfig) -> String {
    format!(
        "# holderflow-converge v{REPORT_VERSION} config_sha256={} tool={} eta={}\nseed,N,t,kinetic_term,density_term,Q,besov_S,besov_V,flags\n",
        cfg.hash(),
        env!("CARGO_PKG_VERSION"),
        cfg.etas[0]
    )
}

fn csv_rows(run: &SeedRun) -> String {
    let mut s = String::new();
    if let Some(code) = &run.fluid_failure {
        let _ = writeln!(s, "{},0,0,NaN,NaN,NaN,NaN,NaN,fluid_aborted:{code}", run.seed);
    }
    for r in run.runs.iter().flat_map(|o| &o.rows) {
        let _ = writeln!(
            s,
            "{},{},{:.6e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{}",
            r.seed,
            r.n,
            r.energy.t,
            r.energy.kinetic_term,
            r.energy.density_term,
            r.energy.q,
            r.besov_s[0],
            r.besov_v[0],
            r.flags
        );
    }
    s
}

/// Per-`N` summary entering the rate fit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateRow {
    pub n: usize,
    pub sup_q: f64,
    pub q0: f64,
    /// Terminal `||S^N - rho||` per `eta`.
    pub besov_s: Vec<f64>,
    /// Terminal `||V^N - rho v||` per `eta`.
    pub besov_v: Vec<f64>,
}

/// Summaries of the completed runs of one seed, sorted by `N`.
pub fn rate_rows(run: &SeedRun) -> Vec<RateRow> {
    let mut rows: Vec<RateRow> = run
        .runs
        .iter()
        .filter(|o| o.failure.is_none() && !o.rows.is_empty())
        .map(|o| {
            let last = o.rows.last().expect("nonempty");
            RateRow {
                n: o.n,
                sup_q: o.rows.iter().map(|r| r.energy.q).fold(0.0, f64::max),
                q0: o.rows[0].energy.q,
                besov_s: last.besov_s.clone(),
                besov_v: last.besov_v.clone(),
            }
        })
        .collect();
    rows.sort_by_key(|r| r.n);
    rows
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub ci95: [f64; 2],
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RateStatus {
    Fitted { fit: SlopeFit },
    FloorLimited,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    /// `N` values where `Q_0^N > sup_t Q_t^N / 2`.
    pub floor_flagged: Vec<usize>,
    pub q_rate: RateStatus,
    /// Slopes of the squared and plain distances `||S^N - rho||` per `eta`.
    pub besov_s_sq: Vec<Option<SlopeFit>>,
    pub besov_v_sq: Vec<Option<SlopeFit>>,
    pub besov_v: Vec<Option<SlopeFit>>,
}

fn slope_of(ns: &[f64], ys: &[f64]) -> Option<SlopeFit> {
    let pts: Vec<(f64, f64)> = ns
        .iter()
        .zip(ys)
        .filter(|(_, y)| **y > 0.0 && y.is_finite())
        .map(|(n, y)| (n.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let fit = linear_fit(&xs, &ys).ok()?;
    let ci = fit.slope_interval(0.95);
    Some(SlopeFit {
        slope: fit.slope,
        ci95: [ci.0, ci.1],
        points: fit.points,
    })
}

/// Least-squares slopes of `log sup_t Q` and the squared distances against `log N`.
pub fn fit_rate(rows: &[RateRow]) -> RateReport {
    let floor_flagged: Vec<usize> = rows.iter().filter(|r| r.q0 > 0.5 * r.sup_q).map(|r| r.n).collect();
    let clean: Vec<&RateRow> = rows.iter().filter(|r| !floor_flagged.contains(&r.n)).collect();
    let q_rate = if clean.len() >= 3 {
        let ns: Vec<f64> = clean.iter().map(|r| r.n as f64).collect();
        let qs: Vec<f64> = clean.iter().map(|r| r.sup_q).collect();
        match slope_of(&ns, &qs) {
            Some(fit) => RateStatus::Fitted { fit },
            None => RateStatus::FloorLimited,
        }
    } else {
        RateStatus::FloorLimited
    };
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let etas = rows.first().map(|r| r.besov_s.len()).unwrap_or(0);
    let per_eta = |f: &dyn Fn(&RateRow, usize) -> f64| -> Vec<Option<SlopeFit>> {
        (0..etas)
            .map(|e| slope_of(&ns, &rows.iter().map(|r| f(r, e)).collect::<Vec<_>>()))
            .collect()
    };
    RateReport {
        rows: rows.to_vec(),
        floor_flagged,
        q_rate,
        besov_s_sq: per_eta(&|r, e| r.besov_s[e] * r.besov_s[e]),
        besov_v_sq: per_eta(&|r, e| r.besov_v[e] * r.besov_v[e]),
        besov_v: per_eta(&|r, e| r.besov_v[e]),
    }
}

/// Smallest `c` with `sup_t Q_t^N <= e^{cT} (Q_0^N + N^{-beta/d})` over the rows.
pub fn gronwall_constant(rows: &[RateRow], beta: f64, dim: usize, horizon: f64) -> f64 {
    rows.iter()
        .map(|r| (r.sup_q / (r.q0 + (r.n as f64).powf(-beta / dim as f64))).ln() / horizon)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub report_version: &'static str,
    pub tool_version: &'static str,
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub sigma_scale: f64,
    pub config: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub report: RateReport,
    pub gronwall_c: f64,
    pub failures: Vec<(usize, String)>,
    pub fluid_failure: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub manifest: Manifest,
    pub etas: Vec<f64>,
    pub seeds: Vec<SeedSummary>,
    /// Mean over seeds of the fitted `sup_t Q` slopes (seeds that fitted).
    pub mean_q_slope: Option<f64>,
}

pub fn summarize(cfg: &ExperimentConfig, runs: &[SeedRun], sigma_scale: f64) -> Summary {
    let seeds: Vec<SeedSummary> = runs
        .iter()
        .map(|run| {
            let rows = rate_rows(run);
            SeedSummary {
                seed: run.seed,
                gronwall_c: gronwall_constant(&rows, cfg.beta, cfg.dim, cfg.horizon),
                report: fit_rate(&rows),
                failures: run
                    .runs
                    .iter()
                    .filter_map(|o| o.failure.clone().map(|f| (o.n, f)))
                    .collect(),
                fluid_failure: run.fluid_failure.clone(),
            }
        })
        .collect();
    let slopes: Vec<f64> = seeds
        .iter()
        .filter_map(|s| match &s.report.q_rate {
            RateStatus::Fitted { fit } => Some(fit.slope),
            RateStatus::FloorLimited => None,
        })
        .collect();
    Summary {
        manifest: Manifest {
            report_version: REPORT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION"),
            config_sha256: cfg.hash(),
            seeds: cfg.seeds.clone(),
            sigma_scale,
            config: cfg.emit(),
        },
        etas: cfg.etas.clone(),
        seeds,
        mean_q_slope: if slopes.is_empty() {
            None
        } else {
            Some(slopes.iter().sum::<f64>() / slopes.len() as f64)
        },
    }
}

/// Writes `report.csv` and `summary.json` into `dir`; returns their paths.
pub fn emit_report(cfg: &ExperimentConfig, runs: &[SeedRun], sigma_scale: f64, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join("report.csv");
    let mut text = csv_header(cfg);
    for run in runs {
        text.push_str(&csv_rows(run));
    }
    std::fs::write(&csv, text).map_err(|e| Error::io(&csv, e))?;
    let json = dir.join("summary.json");
    let summary = summarize(cfg, runs, sigma_scale);
    let body = serde_json::to_string_pretty(&summary).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(&json, body + "\n").map_err(|e| Error::io(&json, e))?;
    Ok((csv, json))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(q: impl Fn(f64) -> f64, q0: impl Fn(f64) -> f64, exps: std::ops::RangeInclusive<i32>) -> Vec<RateRow> {
        exps.map(|e| {
            let n = 2f64.powi(e);
            RateRow {
                n: n as usize,
                sup_q: q(n),
                q0: q0(n),
                besov_s: vec![n.powf(-0.3)],
                besov_v: vec![n.powf(-0.3)],
            }
        })
        .collect()
    }

    #[test]
    fn exact_power_law() {
        let rows = synthetic(|n| n.powf(-0.6), |_| 0.0, 8..=12);
        match fit_rate(&rows).q_rate {
            RateStatus::Fitted { fit } => assert!((fit.slope + 0.6).abs() < 1e-6),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn floor_is_flagged() {
        let rows = synthetic(|n| 1e-8 + n.powf(-0.6), |_| 1e-8, 4..=50);
        let r = fit_rate(&rows);
        assert!(r.floor_flagged.contains(&(1usize << 50)));
        assert!(!r.floor_flagged.contains(&16));
        match r.q_rate {
            RateStatus::Fitted { fit } => assert!(fit.slope < -0.5, "{fit:?}"),
            other => panic!("{other:?}"),
        }
        let all = synthetic(|_| 1.0, |_| 1.0, 8..=12);
        assert_eq!(fit_rate(&all).q_rate, RateStatus::FloorLimited);
    }
}
