//! Plain-text experiment configuration.
//!
//! ```text
//! # comment
//! [noise]
//! hurst = 0.75
//! seeds = 1, 2, 3
//! ```
//!
//! Unknown sections or keys are rejected. Parsing runs every hypothesis check,
//! and [`ExperimentConfig::emit`] writes a canonical form that parses back to
//! the same value.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kernel::BaseDensity;
use crate::lp::NormKind;
use crate::noise::HOLDER_OFFSET;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackendChoice {
    Direct,
    Grid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitChoice {
    Quantile,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SigmaChoice {
    Zero,
    Constant,
    Cosine,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub length: f64,
    pub hurst: f64,
    pub horizon: f64,
    /// Steps of the master noise grid; the fluid advances on it.
    pub steps: usize,
    pub seeds: Vec<u64>,
    pub kernel_base: BaseDensity,
    pub beta: f64,
    pub bandwidth: f64,
    pub n_list: Vec<usize>,
    /// Particle time step; `None` uses the master step.
    pub particle_dt: Option<f64>,
    pub force_backend: BackendChoice,
    /// Force grid nodes per axis; 0 picks one resolving `phi_N` with four cells per width.
    pub force_grid: usize,
    pub spline_order: usize,
    pub init: InitChoice,
    pub pde_resolution: usize,
    pub cfl: f64,
    pub vacuum_floor: f64,
    pub sigma: SigmaChoice,
    pub sigma_amplitude: f64,
    pub sigma_modulation: f64,
    pub rho_amplitude: f64,
    pub v_amplitude: f64,
    /// Smoothness indices of the negative distances; the first is the primary one.
    pub etas: Vec<f64>,
    pub q_hat: f64,
    pub norm: NormKind,
    pub lambda: f64,
    pub checkpoints: usize,
    /// Nodes per axis of the grid carrying the deposited measures; 0 picks the smallest
    /// power of two with one node per particle spacing at the largest `N` (and at least
    /// the fluid resolution).
    pub lp_resolution: usize,
    /// Grid for the mollified density; 0 picks one with four cells per `phi_N^r` width.
    pub diag_resolution: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dim: 1,
            length: 1.0,
            hurst: 0.75,
            horizon: 0.5,
            steps: 1024,
            seeds: vec![1, 2, 3],
            kernel_base: BaseDensity::Gaussian,
            beta: 0.6,
            bandwidth: 0.5,
            n_list: vec![256, 512, 1024, 2048, 4096],
            particle_dt: None,
            force_backend: BackendChoice::Grid,
            force_grid: 0,
            spline_order: 6,
            init: InitChoice::Quantile,
            pde_resolution: 256,
            cfl: crate::fluid::DEFAULT_CFL,
            vacuum_floor: crate::fluid::DEFAULT_VACUUM_FLOOR,
            sigma: SigmaChoice::Cosine,
            sigma_amplitude: 0.2,
            sigma_modulation: 0.5,
            rho_amplitude: 0.1,
            v_amplitude: 0.0,
            etas: vec![2.0, 3.5],
            q_hat: 2.0,
            norm: NormKind::Besov,
            lambda: crate::lp::DEFAULT_LAMBDA,
            checkpoints: 16,
            lp_resolution: 0,
            diag_resolution: 0,
        }
    }
}

fn cfg_err(line: usize, reason: impl Into<String>) -> Error {
    Error::Config {
        line,
        reason: reason.into(),
    }
}

fn parse_num<V: FromStr>(line: usize, key: &str, v: &str) -> Result<V>
where
    V::Err: std::fmt::Display,
{
    v.trim()
        .parse::<V>()
        .map_err(|e| cfg_err(line, format!("`{key}`: cannot parse `{}`: {e}", v.trim())))
}

fn parse_list<V: FromStr>(line: usize, key: &str, v: &str) -> Result<Vec<V>>
where
    V::Err: std::fmt::Display,
{
    let items: Vec<&str> = v.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(cfg_err(line, format!("`{key}` needs at least one value")));
    }
    items.into_iter().map(|s| parse_num(line, key, s)).collect()
}

fn join<V: std::fmt::Display>(xs: &[V]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(name) = body.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| cfg_err(line, "unterminated section header"))?;
                section = name.trim().to_string();
                if !["noise", "kernel", "particles", "pde", "sigma", "initial", "analysis"].contains(&section.as_str()) {
                    return Err(cfg_err(line, format!("unknown section `[{section}]`")));
                }
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| cfg_err(line, "expected `key = value`"))?;
            let key = key.trim();
            let value = value.trim();
            let full = format!("{section}.{key}");
            match full.as_str() {
                "noise.hurst" => c.hurst = parse_num(line, key, value)?,
                "noise.horizon" => c.horizon = parse_num(line, key, value)?,
                "noise.steps" => c.steps = parse_num(line, key, value)?,
                "noise.dim" => c.dim = parse_num(line, key, value)?,
                "noise.seeds" => c.seeds = parse_list(line, key, value)?,
                "kernel.base" => c.kernel_base = value.parse().map_err(|e: Error| cfg_err(line, e.to_string()))?,
                "kernel.beta" => c.beta = parse_num(line, key, value)?,
                "kernel.bandwidth" => c.bandwidth = parse_num(line, key, value)?,
                "particles.n_list" => c.n_list = parse_list(line, key, value)?,
                "particles.dt" => {
                    c.particle_dt = if value == "auto" {
                        None
                    } else {
                        Some(parse_num(line, key, value)?)
                    }
                }
                "particles.force_backend" => {
                    c.force_backend = match value {
                        "direct" => BackendChoice::Direct,
                        "grid" => BackendChoice::Grid,
                        other => return Err(cfg_err(line, format!("force_backend `{other}` (direct|grid)"))),
                    }
                }
                "particles.force_grid" => c.force_grid = parse_num(line, key, value)?,
                "particles.spline_order" => c.spline_order = parse_num(line, key, value)?,
                "particles.init" => {
                    c.init = match value {
                        "quantile" => InitChoice::Quantile,
                        "random" => InitChoice::Random,
                        other => return Err(cfg_err(line, format!("init `{other}` (quantile|random)"))),
                    }
                }
                "pde.resolution" => c.pde_resolution = parse_num(line, key, value)?,
                "pde.length" => c.length = parse_num(line, key, value)?,
                "pde.cfl" => c.cfl = parse_num(line, key, value)?,
                "pde.vacuum_floor" => c.vacuum_floor = parse_num(line, key, value)?,
                "sigma.kind" => {
                    c.sigma = match value {
                        "zero" => SigmaChoice::Zero,
                        "constant" => SigmaChoice::Constant,
                        "cosine" => SigmaChoice::Cosine,
                        other => return Err(cfg_err(line, format!("sigma kind `{other}` (zero|constant|cosine)"))),
                    }
                }
                "sigma.amplitude" => c.sigma_amplitude = parse_num(line, key, value)?,
                "sigma.modulation" => c.sigma_modulation = parse_num(line, key, value)?,
                "initial.rho_amplitude" => c.rho_amplitude = parse_num(line, key, value)?,
                "initial.v_amplitude" => c.v_amplitude = parse_num(line, key, value)?,
                "analysis.eta" => c.etas = parse_list(line, key, value)?,
                "analysis.q_hat" => c.q_hat = parse_num(line, key, value)?,
                "analysis.norm" => c.norm = value.parse().map_err(|e: Error| cfg_err(line, e.to_string()))?,
                "analysis.lambda" => c.lambda = parse_num(line, key, value)?,
                "analysis.checkpoints" => c.checkpoints = parse_num(line, key, value)?,
                "analysis.lp_resolution" => c.lp_resolution = parse_num(line, key, value)?,
                "analysis.diag_resolution" => c.diag_resolution = parse_num(line, key, value)?,
                _ if section.is_empty() => return Err(cfg_err(line, format!("key `{key}` outside any section"))),
                _ => return Err(cfg_err(line, format!("unknown key `{full}`"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    /// Hypothesis and consistency checks.
    pub fn validate(&self) -> Result<()> {
        let alpha = self.hurst - HOLDER_OFFSET;
        if !(self.hurst > 0.5 && self.hurst < 1.0) || !(alpha > 0.5) {
            return Err(Error::Hypothesis(format!(
                "hurst = {}: alpha > 1/2 required (Young regime; alpha = hurst - {HOLDER_OFFSET}, hurst < 1)",
                self.hurst
            )));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Hypothesis(format!(
                "beta = {}: beta in (0,1) required (moderate interaction scaling of the mollifier)",
                self.beta
            )));
        }
        let floor = self.dim as f64 / 2.0 + 1.0;
        if let Some(eta) = self.etas.iter().find(|&&e| e <= floor) {
            return Err(Error::Hypothesis(format!(
                "eta = {eta}: eta > d/2 + 1 = {floor} required (negative-order distance of point masses)"
            )));
        }
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::param("dim", "d must be 1 or 2"));
        }
        if !(self.horizon > 0.0 && self.length > 0.0 && self.bandwidth > 0.0) {
            return Err(Error::param("horizon", "horizon, box length and bandwidth must be positive"));
        }
        if self.seeds.is_empty() || self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(Error::param("n_list", "need at least one seed and positive particle counts"));
        }
        if self.checkpoints == 0 || !self.steps.is_multiple_of(self.checkpoints) {
            return Err(Error::param("checkpoints", "checkpoints must divide the master step count"));
        }
        let stride = self.stride()?;
        if !(self.steps / self.checkpoints).is_multiple_of(stride) {
            return Err(Error::param("particles.dt", "particle steps must land on every checkpoint"));
        }
        if !(self.q_hat >= 1.0) {
            return Err(Error::param("q_hat", "summability index must be at least 1"));
        }
        if self.pde_resolution < 8 {
            return Err(Error::param("pde.resolution", "need at least 8 nodes per axis"));
        }
        if !(self.rho_amplitude.abs() < 1.0) {
            return Err(Error::param("initial.rho_amplitude", "initial density must stay positive"));
        }
        if self.init == InitChoice::Quantile && self.dim == 2 {
            if let Some(n) = self.n_list.iter().find(|&&n| {
                let s = (n as f64).sqrt().round() as usize;
                s * s != n
            }) {
                return Err(Error::param("n_list", format!("tensor quantile placement needs square N, got {n}")));
            }
        }
        Ok(())
    }

    /// Resolution of the grid carrying the deposited measures.
    pub fn lp_grid_resolution(&self) -> usize {
        if self.lp_resolution > 0 {
            return self.lp_resolution;
        }
        let n = self.n_list.iter().copied().max().unwrap_or(1) as f64;
        let per_axis = n.powf(1.0 / self.dim as f64).ceil() as usize;
        per_axis.next_power_of_two().max(self.pde_resolution)
    }

    pub fn master_dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Master steps per particle step.
    pub fn stride(&self) -> Result<usize> {
        match self.particle_dt {
            None => Ok(1),
            Some(dt) => {
                let r = dt / self.master_dt();
                let s = r.round();
                if !(s >= 1.0) || (r - s).abs() > 1e-9 * r || !self.steps.is_multiple_of(s as usize) {
                    return Err(Error::param(
                        "particles.dt",
                        "particle step must be a whole multiple of the master step dividing the horizon",
                    ));
                }
                Ok(s as usize)
            }
        }
    }

    /// Canonical text form; parsing it returns `self`.
    pub fn emit(&self) -> String {
        let mut o = String::new();
        let _ = writeln!(o, "[noise]");
        let _ = writeln!(o, "hurst = {}", self.hurst);
        let _ = writeln!(o, "horizon = {}", self.horizon);
        let _ = writeln!(o, "steps = {}", self.steps);
        let _ = writeln!(o, "dim = {}", self.dim);
        let _ = writeln!(o, "seeds = {}", join(&self.seeds));
        let _ = writeln!(o, "\n[kernel]");
        let _ = writeln!(o, "base = {}", self.kernel_base);
        let _ = writeln!(o, "beta = {}", self.beta);
        let _ = writeln!(o, "bandwidth = {}", self.bandwidth);
        let _ = writeln!(o, "\n[particles]");
        let _ = writeln!(o, "n_list = {}", join(&self.n_list));
        match self.particle_dt {
            None => {
                let _ = writeln!(o, "dt = auto");
            }
            Some(dt) => {
                let _ = writeln!(o, "dt = {dt}");
            }
        }
        let backend = match self.force_backend {
            BackendChoice::Direct => "direct",
            BackendChoice::Grid => "grid",
        };
        let _ = writeln!(o, "force_backend = {backend}");
        let _ = writeln!(o, "force_grid = {}", self.force_grid);
        let _ = writeln!(o, "spline_order = {}", self.spline_order);
        let init = match self.init {
            InitChoice::Quantile => "quantile",
            InitChoice::Random => "random",
        };
        let _ = writeln!(o, "init = {init}");
        let _ = writeln!(o, "\n[pde]");
        let _ = writeln!(o, "resolution = {}", self.pde_resolution);
        let _ = writeln!(o, "length = {}", self.length);
        let _ = writeln!(o, "cfl = {}", self.cfl);
        let _ = writeln!(o, "vacuum_floor = {}", self.vacuum_floor);
        let _ = writeln!(o, "\n[sigma]");
        let kind = match self.sigma {
            SigmaChoice::Zero => "zero",
            SigmaChoice::Constant => "constant",
            SigmaChoice::Cosine => "cosine",
        };
        let _ = writeln!(o, "kind = {kind}");
        let _ = writeln!(o, "amplitude = {}", self.sigma_amplitude);
        let _ = writeln!(o, "modulation = {}", self.sigma_modulation);
        let _ = writeln!(o, "\n[initial]");
        let _ = writeln!(o, "rho_amplitude = {}", self.rho_amplitude);
        let _ = writeln!(o, "v_amplitude = {}", self.v_amplitude);
        let _ = writeln!(o, "\n[analysis]");
        let _ = writeln!(o, "eta = {}", join(&self.etas));
        let _ = writeln!(o, "q_hat = {}", self.q_hat);
        let _ = writeln!(o, "norm = {}", self.norm);
        let _ = writeln!(o, "lambda = {}", self.lambda);
        let _ = writeln!(o, "checkpoints = {}", self.checkpoints);
        let _ = writeln!(o, "lp_resolution = {}", self.lp_resolution);
        let _ = writeln!(o, "diag_resolution = {}", self.diag_resolution);
        o
    }

    /// SHA-256 of the canonical form, hex encoded.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.emit().as_bytes());
        digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}
