use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use wgflow_cli::config::RunConfig;
use wgflow_cli::init::generate_initial;
use wgflow_cli::manifest::{ensemble_digest, sha256_hex, RunManifest, SweepSummary};
use wgflow_core::bounds::{self, BoundInputs};
use wgflow_core::convergence::{parse_rational, run_sweep, ReferenceKind, SweepPlan};
use wgflow_core::diagnostics::{
    check_classical_stability, check_energy_almost_decreasing, check_gradient_decay,
    check_refined_decay, check_refined_stability, CheckReport, DEFAULT_REL_TOL,
};
use wgflow_core::energy::{convexity_probe, default_probe_step};
use wgflow_core::rng::CounterRng;
use wgflow_core::stepper::{resolve_inner, run_trajectory};
use wgflow_core::{GradientField, Result, TrajectoryRecord, WgError};

#[derive(Parser)]
#[command(name = "wgflow", version, about = "Particle solver for Wasserstein gradient flows")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory and write its artifacts to a directory.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a time-step refinement sweep against a fine-step reference.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated step sizes, each an exact rational like "1/64".
        #[arg(long)]
        taus: String,
        #[arg(long = "tau-ref")]
        tau_ref: String,
        #[arg(long = "t-final")]
        t_final: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Probe convexity of the configured energy along random directions.
    Probe {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 16)]
        directions: usize,
        #[arg(long)]
        h: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate the closed-form scheme constants and error bounds.
    Bounds {
        #[arg(long)]
        lambda: f64,
        #[arg(long = "L")]
        lipschitz: Option<f64>,
        #[arg(long)]
        tau: f64,
        #[arg(long = "T")]
        t_horizon: Option<f64>,
        #[arg(long = "init-error")]
        init_error: Option<f64>,
        #[arg(long = "init-grad")]
        init_grad: Option<f64>,
        #[arg(long)]
        curvature: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
    },
    /// Re-check the stability inequalities against a recorded run.
    Validate {
        /// Run directory (or its timeseries.csv) containing manifest.json.
        #[arg(long)]
        record: PathBuf,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long = "L")]
        lipschitz: Option<f64>,
        #[arg(long = "T")]
        t_horizon: Option<f64>,
    },
}

fn thread_cap() -> usize {
    std::env::var("WGFLOW_THREADS")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(0)
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli.cmd) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    };
    std::process::exit(code);
}

fn run(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Simulate { config, out } => simulate(&config, &out).map(|_| true),
        Command::Sweep {
            config,
            taus,
            tau_ref,
            t_final,
            out,
        } => sweep(&config, &taus, &tau_ref, &t_final, &out).map(|_| true),
        Command::Probe {
            config,
            directions,
            h,
            seed,
        } => probe(&config, directions, h, seed).map(|_| true),
        Command::Bounds {
            lambda,
            lipschitz,
            tau,
            t_horizon,
            init_error,
            init_grad,
            curvature,
            alpha,
        } => print_bounds(
            lambda, lipschitz, tau, t_horizon, init_error, init_grad, curvature, alpha,
        )
        .map(|_| true),
        Command::Validate {
            record,
            lambda,
            lipschitz,
            t_horizon,
        } => validate(&record, lambda, lipschitz, t_horizon),
    }
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path)
        .map_err(|e| WgError::Parameter(format!("cannot create {}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes)
        .map_err(|e| WgError::Parameter(format!("cannot write {}: {e}", path.display())))
}

fn simulate(config_path: &Path, out: &Path) -> Result<()> {
    let cfg = RunConfig::load(config_path)?;
    let spec = cfg.energy.to_spec()?;
    let x0 = generate_initial(
        cfg.dimension,
        cfg.particles.count,
        &cfg.particles.init,
        cfg.particles.seed,
    )?;
    let scheme = cfg.to_scheme_config()?;
    let resolved = resolve_inner(&scheme, &spec, &x0)?;

    let started = Instant::now();
    let (record, snapshots) = run_trajectory(&x0, &spec, &resolved, cfg.output.save_every)?;
    let wall = started.elapsed().as_secs_f64();

    ensure_dir(out)?;
    for (step, ensemble) in &snapshots {
        let mut buf = Vec::new();
        ensemble.write_csv(&mut buf)?;
        write_file(&out.join(format!("snapshot_{step:08}.csv")), &buf)?;
    }
    let mut series = Vec::new();
    record.write_csv(&mut series)?;
    write_file(&out.join("timeseries.csv"), &series)?;

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: "simulate".to_string(),
        config: cfg.clone(),
        config_digest: sha256_hex(cfg.canonical_json().as_bytes()),
        energy_digest: spec.digest(),
        initial_digest: ensemble_digest(&x0)?,
        resolved_inner: resolved.inner,
        trajectory: Some(record.meta.clone()),
        sweep: None,
        wall_secs: wall,
    };
    manifest.write(&out.join("manifest.json"))?;

    if !record.meta.complete {
        return Err(WgError::Domain(
            record
                .meta
                .failure
                .unwrap_or_else(|| "incomplete trajectory".into()),
        ));
    }
    Ok(())
}

fn sweep(config_path: &Path, taus: &str, tau_ref: &str, t_final: &str, out: &Path) -> Result<()> {
    let cfg = RunConfig::load(config_path)?;
    let spec = cfg.energy.to_spec()?;
    let x0 = generate_initial(
        cfg.dimension,
        cfg.particles.count,
        &cfg.particles.init,
        cfg.particles.seed,
    )?;
    let scheme = cfg.to_scheme_config()?;

    let tau_list = taus
        .split(',')
        .map(|s| parse_rational(s.trim()))
        .collect::<Result<Vec<_>>>()?;
    let plan = SweepPlan {
        taus: tau_list.clone(),
        t_final: parse_rational(t_final)?,
        reference: ReferenceKind::FineTau(parse_rational(tau_ref)?),
        spec: spec.clone(),
        scheme: scheme.scheme,
        inner: scheme.inner,
        lambda: cfg.lambda,
        lipschitz: cfg.lipschitz,
        curvature_l2: None,
        alpha: 1.0,
    };

    let started = Instant::now();
    let report = run_sweep(&plan, &x0, thread_cap())?;
    let wall = started.elapsed().as_secs_f64();

    ensure_dir(out)?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    write_file(&out.join("convergence.csv"), &buf)?;

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: "sweep".to_string(),
        config: cfg.clone(),
        config_digest: sha256_hex(cfg.canonical_json().as_bytes()),
        energy_digest: spec.digest(),
        initial_digest: ensemble_digest(&x0)?,
        resolved_inner: scheme.inner,
        trajectory: None,
        sweep: Some(SweepSummary {
            taus: tau_list.iter().map(|t| t.to_string()).collect(),
            reference: report.reference_desc.clone(),
            t_final: t_final.to_string(),
            fitted_order: report.fitted_order,
            fit_residual: report.fit_residual,
        }),
        wall_secs: wall,
    };
    manifest.write(&out.join("manifest.json"))?;

    println!(
        "fitted_order,{}",
        report.fitted_order
    );
    Ok(())
}

const STREAM_PROBE: u64 = 0x1217_0004;

fn probe(config_path: &Path, directions: usize, h: Option<f64>, seed: u64) -> Result<()> {
    if directions == 0 {
        return Err(WgError::Parameter("directions must be >= 1".into()));
    }
    let cfg = RunConfig::load(config_path)?;
    let spec = cfg.energy.to_spec()?;
    let x0 = generate_initial(
        cfg.dimension,
        cfg.particles.count,
        &cfg.particles.init,
        cfg.particles.seed,
    )?;
    let h = h.unwrap_or_else(|| default_probe_step(&x0));

    let rng = CounterRng::new(seed, STREAM_PROBE);
    let stride = x0.as_slice().len() as u64;
    let n = x0.len() as f64;

    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    writeln!(w, "direction,first,second")?;
    let mut min_second = f64::INFINITY;
    let mut max_abs_second = 0.0f64;
    for j in 0..directions {
        let raw: Vec<f64> = (0..x0.as_slice().len())
            .map(|k| rng.normal(j as u64 * stride + k as u64))
            .collect();
        let norm = (raw.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        if norm == 0.0 {
            return Err(WgError::Sampling(j));
        }
        let v = GradientField::new(x0.dim(), raw.iter().map(|x| x / norm).collect())?;
        let (first, second) = convexity_probe(&x0, &v, &spec, h)?;
        // Directions are unit in L²(ρ₀), so `second` is a Rayleigh quotient.
        min_second = min_second.min(second);
        max_abs_second = max_abs_second.max(second.abs());
        writeln!(
            w,
            "{},{},{}",
            j,
            wgflow_core::fmt_f64(first),
            wgflow_core::fmt_f64(second)
        )?;
    }
    writeln!(w, "# lambda_hat={min_second} lipschitz_hat={max_abs_second}")?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn print_bounds(
    lambda: f64,
    lipschitz: Option<f64>,
    tau: f64,
    t_horizon: Option<f64>,
    init_error: Option<f64>,
    init_grad: Option<f64>,
    curvature: Option<f64>,
    alpha: f64,
) -> Result<()> {
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    writeln!(w, "lambda_tau,{}", bounds::lambda_tau(lambda, tau)?)?;
    writeln!(
        w,
        "gradient_decay_factor,{}",
        bounds::gradient_decay_factor(lambda, tau)?
    )?;
    if let Some(l) = lipschitz {
        writeln!(w, "lambda_tau_l,{}", bounds::lambda_tau_l(lambda, tau, l)?)?;
    }
    if let Some(t) = t_horizon {
        writeln!(
            w,
            "stability_factor,{}",
            bounds::stability_factor(lambda, tau, t)?
        )?;
        if let (Some(e0), Some(g0)) = (init_error, init_grad) {
            let mut inputs = BoundInputs {
                lambda,
                lipschitz: lipschitz.unwrap_or(0.0),
                tau,
                t,
                init_error: e0,
                init_grad_norm: g0,
                curvature_l2: curvature.unwrap_or(0.0),
                alpha,
            };
            writeln!(w, "evi_error_bound,{}", bounds::evi_error_bound(&inputs)?)?;
            if let Some(l) = lipschitz {
                inputs.lipschitz = l;
                writeln!(
                    w,
                    "refined_error_bound,{}",
                    bounds::refined_error_bound(&inputs)?
                )?;
            }
        }
        if let (Some(l), Some(c)) = (lipschitz, curvature) {
            let inputs = BoundInputs {
                lambda,
                lipschitz: l,
                tau,
                t,
                init_error: init_error.unwrap_or(0.0),
                init_grad_norm: init_grad.unwrap_or(0.0),
                curvature_l2: c,
                alpha,
            };
            writeln!(
                w,
                "smooth_error_bound,{}",
                bounds::smooth_error_bound(&inputs)?
            )?;
        }
    }
    Ok(())
}

fn validate(
    record: &Path,
    lambda: Option<f64>,
    lipschitz: Option<f64>,
    t_horizon: Option<f64>,
) -> Result<bool> {
    let (manifest_path, series_path) = if record.is_dir() {
        (record.join("manifest.json"), record.join("timeseries.csv"))
    } else {
        let dir = record
            .parent()
            .ok_or_else(|| WgError::Parameter("record path has no parent directory".into()))?;
        (dir.join("manifest.json"), record.to_path_buf())
    };
    let manifest = RunManifest::read(&manifest_path)?;
    let meta = manifest
        .trajectory
        .ok_or_else(|| WgError::Format("manifest has no trajectory metadata".into()))?;
    let file = fs::File::open(&series_path)
        .map_err(|e| WgError::Parameter(format!("cannot open {}: {e}", series_path.display())))?;
    let rec = TrajectoryRecord::read_csv(meta, std::io::BufReader::new(file))?;

    let lambda = lambda.or(rec.meta.lambda);
    let lipschitz = lipschitz.or(rec.meta.lipschitz);
    let t_horizon = t_horizon.unwrap_or(rec.meta.t_final);
    let tol = DEFAULT_REL_TOL;

    let mut reports: Vec<CheckReport> = Vec::new();
    reports.push(check_energy_almost_decreasing(&rec, tol)?);
    if let Some(lam) = lambda {
        reports.push(check_gradient_decay(&rec, lam, tol)?);
        reports.push(check_classical_stability(&rec, lam, t_horizon, tol)?);
        if let Some(l) = lipschitz {
            match check_refined_decay(&rec, lam, l, tol) {
                Ok(mut refined) => reports.append(&mut refined),
                Err(WgError::Applicability(msg)) => {
                    eprintln!("skipping refined decay: {msg}")
                }
                Err(e) => return Err(e),
            }
            match check_refined_stability(&rec, lam, l, t_horizon, tol) {
                Ok(r) => reports.push(r),
                Err(WgError::Applicability(msg)) => {
                    eprintln!("skipping refined stability: {msg}")
                }
                Err(e) => return Err(e),
            }
        }
    }

    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    let mut all = true;
    for r in &reports {
        r.write_csv(&mut w)?;
        all &= r.pass;
    }
    Ok(all)
}
