use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use capsim::config::{parse_config, ConfigError, ExperimentConfig};
use capsim::experiment::{run_experiment_with, sweep, theory, Status};
use capsim::io::{num, write_json, write_series, RunWriter};
use capsim::validate::run_validation;
use capsim::zonal::{dtheta_g_star, phi_dot_star};

#[derive(Parser)]
#[command(version, about = "Contour dynamics of vortex caps on the rotating sphere")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, default_value = "capsim_out")]
    out: PathBuf,
    /// Worker threads for velocity evaluation and sweeps.
    #[arg(long, global = true, env = "CAPSIM_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the zonal profile and drift-gap theory of a cap.
    Zonal {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 181)]
        samples: usize,
    },
    /// Run one filamentation experiment.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the experiment for each bump amplitude.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated amplitudes.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        mu: Vec<f64>,
    },
    /// Run the cross-check suite.
    Validate {
        #[arg(long, default_value_t = 20240917)]
        seed: u64,
    },
}

enum Failure {
    Usage(anyhow::Error),
    Checks,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

fn load(path: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    match path {
        Some(p) => parse_config(p).map_err(|e| Failure::Usage(e.into())),
        None => {
            let cfg = ExperimentConfig::default();
            cfg.validate().map_err(|e: ConfigError| Failure::Usage(e.into()))?;
            Ok(cfg)
        }
    }
}

fn zonal(cfg: &ExperimentConfig, samples: usize, out: &Path) -> Result<()> {
    let cap = cfg.zonal_cap()?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut table = String::from("theta,dtheta_g,phi_dot\n");
    for i in 0..samples {
        let t = std::f64::consts::PI * (i as f64 + 0.5) / samples as f64;
        let g = dtheta_g_star(&cap, t)?;
        let p = phi_dot_star(&cap, t)?;
        table.push_str(&format!("{},{},{}\n", num(t), num(g), num(p)));
    }
    print!("{table}");
    std::fs::write(out.join("zonal.csv"), &table)?;
    if cfg.bump.mu != 0.0 {
        let th = theory(&cap, cfg.bump.k0, cfg.bump.mu, std::f64::consts::PI)?;
        eprintln!(
            "k0={} mu={} alpha={:.6e} beta={:.6e} kappa={:.6e} a1={:.6e} a2={:.6e} mu_hat={:.6e}",
            cfg.bump.k0, cfg.bump.mu, th.alpha, th.beta, th.kappa, th.a1, th.a2, th.mu_hat
        );
        write_json(&out.join("theory.json"), &th)?;
    }
    Ok(())
}

fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<bool> {
    let mut writer = RunWriter::create(out, cfg)?;
    let summary = run_experiment_with(cfg, &mut |f, s| writer.frame(f, s))?;
    writer.finish(&summary)?;
    if let Status::Aborted { t, error } = &summary.status {
        eprintln!("run aborted at t = {t}: {error}");
    }
    eprintln!(
        "kappa_hat={:.6e} stretch_slope={:.6e} flags={}",
        summary.fit.kappa_hat,
        summary.fit.stretch_slope,
        serde_json::to_string(&summary.flags)?
    );
    Ok(summary.flags.all_pass())
}

fn run_sweep(cfg: &ExperimentConfig, mus: &[f64], out: &Path) -> Result<bool> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.resolved.toml"), cfg.to_toml())?;
    let entries = sweep(cfg, mus);
    for (i, e) in entries.iter().enumerate() {
        match &e.summary {
            Ok(s) => {
                let d = out.join(format!("run_{i:03}"));
                std::fs::create_dir_all(&d)?;
                write_series(&d.join("series.csv"), &s.series)?;
                eprintln!(
                    "mu={} slope={:.6e} predicted={:.6e} pass={}",
                    e.mu, s.fit.stretch_slope, e.predicted_slope, e.pass
                );
            }
            Err(err) => eprintln!("mu={} failed: {err}", e.mu),
        }
    }
    write_json(&out.join("sweep.json"), &entries)?;
    Ok(entries.iter().all(|e| e.pass))
}

fn validate(seed: u64, out: &Path) -> Result<bool> {
    let checks = run_validation(seed)?;
    std::fs::create_dir_all(out)?;
    write_json(&out.join("validation.json"), &checks)?;
    for c in &checks {
        println!(
            "{:<28} {} max_error={:.3e} tolerance={:.3e}",
            c.check_name,
            if c.pass { "PASS" } else { "FAIL" },
            c.max_error,
            c.tolerance
        );
    }
    Ok(checks.iter().all(|c| c.pass))
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring thread pool")?;
    }
    let ok = match &cli.command {
        Command::Zonal { config, samples } => {
            let cfg = load(config.as_deref())?;
            zonal(&cfg, *samples, &cli.out)?;
            true
        }
        Command::Simulate { config } => simulate(&load(config.as_deref())?, &cli.out)?,
        Command::Sweep { config, mu } => run_sweep(&load(config.as_deref())?, mu, &cli.out)?,
        Command::Validate { seed } => validate(*seed, &cli.out)?,
    };
    if ok {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => ExitCode::from(1),
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
