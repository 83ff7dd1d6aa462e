use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use holderflow::config::ExperimentConfig;
use holderflow::field::{read_field, write_field_csv};
use holderflow::lab::{
    emit_report, fluid_trajectory, force_backend_for, kernel_for, run_coupled, sigma_field, summarize,
};
use holderflow::lp::{norm, DyadicPartition, NormKind};
use holderflow::noise::{sample_fbm_with, write_path_csv, FbmMethod, NoiseSpec};
use holderflow::particles::{init_from_fields, write_snapshot_csv, InitStrategy, ParticleStepper};
use holderflow::selfcheck::{full_suite, quick_suite};
use holderflow::{Error, InitChoice};

const EXIT_USAGE: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_IO: u8 = 4;
const EXIT_NUMERICAL: u8 = 5;
const EXIT_CHECK: u8 = 6;

const CONFIG_SCHEMA: &str = "\
Config files are `key = value` lines grouped in sections; `#` starts a comment.
Unknown sections or keys are errors.

  [noise]     hurst (0.5, 1), horizon, steps, dim (1|2), seeds = 1, 2, 3
  [kernel]    base (gaussian|bump), beta (0, 1), bandwidth
  [particles] n_list = 256, 512, dt (auto|value), force_backend (grid|direct),
              force_grid (0 = auto), spline_order, init (quantile|random)
  [pde]       resolution, length, cfl, vacuum_floor
  [sigma]     kind (zero|constant|cosine), amplitude, modulation
  [initial]   rho_amplitude, v_amplitude
  [analysis]  eta = 2.0, 3.5, q_hat, norm (besov|triebel), lambda,
              checkpoints, lp_resolution (0 = auto), diag_resolution (0 = auto)

The output directory defaults to ./holderflow-out; HOLDERFLOW_OUT overrides the
default and --out overrides both.

Exit codes: 0 success, 2 usage, 3 configuration or hypothesis violation,
4 I/O, 5 numerical failure (vacuum, CFL, non-finite state), 6 failed check.";

#[derive(Parser)]
#[command(name = "holderflow", version, about = "Particle systems with Hölder noise and their Euler limit")]
#[command(after_help = CONFIG_SCHEMA)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutArg {
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl OutArg {
    fn dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os("HOLDERFLOW_OUT").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("holderflow-out"))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample a fractional Brownian path and write it as CSV.
    Noise {
        #[arg(long, default_value_t = 0.75)]
        hurst: f64,
        #[arg(long, default_value_t = 1024)]
        steps: usize,
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// auto | hosking | cholesky | circulant
        #[arg(long, default_value = "auto")]
        method: String,
        #[command(flatten)]
        out: OutArg,
    },
    /// Run the particle system for one N and write snapshots at every checkpoint.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Run the fluid solver on one noise path and write field snapshots.
    Pde {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Besov or Triebel–Lizorkin norm of a field file.
    Besov {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        s: f64,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        #[arg(long, default_value = "besov")]
        kind: String,
        #[arg(long, default_value_t = holderflow::lp::DEFAULT_LAMBDA)]
        lambda: f64,
    },
    /// Full convergence experiment: report.csv and summary.json.
    Converge {
        #[arg(long)]
        config: PathBuf,
        /// Multiplies the noise coefficient (same paths).
        #[arg(long, default_value_t = 1.0)]
        sigma_scale: f64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Run the identity and oracle suite.
    Check {
        /// Skip the three experiment-scale criteria.
        #[arg(long)]
        quick: bool,
        #[command(flatten)]
        out: OutArg,
    },
    /// Print the canonical form of a config file with defaults filled in.
    Config {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Hypothesis(_) | Error::InvalidParameter { .. } | Error::Parse(_) => EXIT_CONFIG,
        Error::Io { .. } => EXIT_IO,
        _ => EXIT_NUMERICAL,
    }
}

fn mkdir(dir: &Path) -> holderflow::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn noise(hurst: f64, steps: usize, horizon: f64, dim: usize, seed: u64, method: &str, dir: &Path) -> holderflow::Result<()> {
    let method = match method {
        "auto" => FbmMethod::Auto,
        "hosking" => FbmMethod::Hosking,
        "cholesky" => FbmMethod::DenseCholesky,
        "circulant" => FbmMethod::CirculantEmbedding,
        other => {
            return Err(Error::Parse(format!(
                "unknown method `{other}` (auto|hosking|cholesky|circulant)"
            )))
        }
    };
    let spec = NoiseSpec {
        hurst,
        dim,
        horizon,
        steps,
        seed,
    };
    let path = sample_fbm_with(&spec, method)?;
    mkdir(dir)?;
    let file = dir.join(format!("fbm_h{hurst}_seed{seed}.csv"));
    write_path_csv(&path, &file)?;
    println!("{}", file.display());
    Ok(())
}

fn master_path(cfg: &ExperimentConfig, seed: u64) -> holderflow::Result<holderflow::SampledPath<f64>> {
    holderflow::sample_fbm(&NoiseSpec {
        hurst: cfg.hurst,
        dim: cfg.dim,
        horizon: cfg.horizon,
        steps: cfg.steps,
        seed,
    })
}

fn write_manifest(cfg: &ExperimentConfig, dir: &Path) -> holderflow::Result<()> {
    let file = dir.join("config.echo");
    let text = format!(
        "# config_sha256={} tool={}\n{}",
        cfg.hash(),
        env!("CARGO_PKG_VERSION"),
        cfg.emit()
    );
    std::fs::write(&file, text).map_err(|e| Error::Io { path: file, source: e })
}

fn simulate(cfg: &ExperimentConfig, n: usize, seed: u64, dir: &Path) -> holderflow::Result<()> {
    let path = master_path(cfg, seed)?;
    let sigma = sigma_field::<f64>(cfg);
    let fluid = fluid_trajectory(cfg, &path, &sigma)?;
    let strategy = match cfg.init {
        InitChoice::Quantile => InitStrategy::Quantile,
        InitChoice::Random => InitStrategy::Random { seed: seed ^ ((n as u64) << 32) },
    };
    let mut ens = init_from_fields(&fluid[0].rho, &fluid[0].v, n, strategy)?;
    let mut stepper = ParticleStepper::new(kernel_for::<f64>(cfg)?, force_backend_for(cfg, n));
    let stride = cfg.stride()?;
    let coarse = if stride == 1 { path.clone() } else { path.restrict(stride)? };
    let per_checkpoint = cfg.steps / cfg.checkpoints / stride;
    mkdir(dir)?;
    write_manifest(cfg, dir)?;
    write_snapshot_csv(&ens, &dir.join("particles_0000.csv"))?;
    let mut dy = vec![0.0; cfg.dim];
    let mut i = 0;
    for c in 1..=cfg.checkpoints {
        for _ in 0..per_checkpoint {
            for (q, v) in dy.iter_mut().enumerate() {
                *v = coarse.at(i + 1, q) - coarse.at(i, q);
            }
            stepper.step(&mut ens, coarse.dt(), &dy, &sigma)?;
            i += 1;
        }
        write_snapshot_csv(&ens, &dir.join(format!("particles_{c:04}.csv")))?;
    }
    println!("{} snapshots in {}", cfg.checkpoints + 1, dir.display());
    Ok(())
}

fn pde(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> holderflow::Result<()> {
    let path = master_path(cfg, seed)?;
    let states = fluid_trajectory(cfg, &path, &sigma_field::<f64>(cfg))?;
    mkdir(dir)?;
    write_manifest(cfg, dir)?;
    for (c, s) in states.iter().enumerate() {
        write_field_csv(&s.rho, s.time, &dir.join(format!("rho_{c:04}.csv")))?;
        for q in 0..cfg.dim {
            write_field_csv(&s.v.component_field(q), s.time, &dir.join(format!("v{q}_{c:04}.csv")))?;
        }
    }
    println!("{} checkpoints in {}", states.len(), dir.display());
    Ok(())
}

fn besov(input: &Path, s: f64, p: f64, q: f64, kind: &str, lambda: f64) -> holderflow::Result<()> {
    let kind: NormKind = kind.parse()?;
    let (field, _) = read_field::<f64>(input)?;
    let part = DyadicPartition::new(field.grid().clone(), lambda)?;
    println!("{:.12e}", norm(kind, &field, s, p, q, &part)?);
    Ok(())
}

fn converge(cfg: &ExperimentConfig, sigma_scale: f64, dir: &Path) -> holderflow::Result<()> {
    mkdir(dir)?;
    // rows are streamed so an interrupted run keeps the finished seeds
    let runs = run_coupled::<f64>(cfg, sigma_scale, Some(&dir.join("report.csv")))?;
    let (csv, json) = emit_report(cfg, &runs, sigma_scale, dir)?;
    let summary = summarize(cfg, &runs, sigma_scale);
    for s in &summary.seeds {
        match &s.report.q_rate {
            holderflow::lab::RateStatus::Fitted { fit } => println!(
                "seed {}: sup Q slope {:.3} [{:.3}, {:.3}]",
                s.seed, fit.slope, fit.ci95[0], fit.ci95[1]
            ),
            holderflow::lab::RateStatus::FloorLimited => println!("seed {}: floor-limited", s.seed),
        }
    }
    println!("{}\n{}", csv.display(), json.display());
    Ok(())
}

fn check(quick: bool, dir: &Path) -> Result<bool, Error> {
    let verdicts = if quick {
        quick_suite()
    } else {
        mkdir(dir)?;
        full_suite(dir)
    };
    for v in &verdicts {
        println!("{v}");
    }
    Ok(verdicts.iter().all(|v| v.passed))
}

fn load(path: &Path) -> holderflow::Result<ExperimentConfig> {
    ExperimentConfig::from_file(path)
}

fn run(cli: Cli) -> Result<(), u8> {
    let report = |e: Error| {
        eprintln!("error: {e}");
        if matches!(e, Error::Config { .. }) {
            eprintln!("\n{CONFIG_SCHEMA}");
        }
        exit_code(&e)
    };
    match cli.command {
        Command::Noise {
            hurst,
            steps,
            horizon,
            dim,
            seed,
            method,
            out,
        } => noise(hurst, steps, horizon, dim, seed, &method, &out.dir()).map_err(report),
        Command::Simulate { config, n, seed, out } => load(&config)
            .and_then(|cfg| simulate(&cfg, n, seed, &out.dir()))
            .map_err(report),
        Command::Pde { config, seed, out } => load(&config).and_then(|cfg| pde(&cfg, seed, &out.dir())).map_err(report),
        Command::Besov {
            input,
            s,
            p,
            q,
            kind,
            lambda,
        } => besov(&input, s, p, q, &kind, lambda).map_err(report),
        Command::Converge {
            config,
            sigma_scale,
            out,
        } => load(&config)
            .and_then(|cfg| converge(&cfg, sigma_scale, &out.dir()))
            .map_err(report),
        Command::Check { quick, out } => match check(quick, &out.dir().join("check")) {
            Ok(true) => Ok(()),
            Ok(false) => Err(EXIT_CHECK),
            Err(e) => Err(report(e)),
        },
        Command::Config { config } => {
            let cfg = match config {
                Some(p) => load(&p).map_err(report)?,
                None => ExperimentConfig::default(),
            };
            print!("{}", cfg.emit());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}
