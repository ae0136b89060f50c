use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mobisec::experiments::output::{
    unix_now, write_convergence, write_gains, write_gap, write_manifest, write_results, write_summary, write_traces,
    write_trajectories, ManifestInput,
};
use mobisec::experiments::{
    gain_patterns, prepare, run_grid, solve_scenario, summarize, Calibration, ExperimentConfig, RunRecord, Scheme,
    SweepAxis,
};
use mobisec::Error;

/// Secrecy-rate experiments for movable-antenna and trajectory-optimized UAV
/// transmitters.
#[derive(Debug, Parser)]
#[command(name = "mobisec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Comma-separated seeds, overriding `run.seeds`.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Scheme to run, overriding `run.scheme`.
    #[arg(long, global = true)]
    scheme: Option<Scheme>,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the configured scenario and report convergence traces.
    Converge,
    /// Run the configured sweep.
    Sweep,
    /// Run the sweep for both schemes and report the rate gap.
    Gap,
    /// Export beam-gain patterns of the optimized beams.
    Gain,
    /// Check the configuration and exit.
    ValidateConfig,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Converge => "converge",
            Command::Sweep => "sweep",
            Command::Gap => "gap",
            Command::Gain => "gain",
            Command::ValidateConfig => "validate-config",
        }
    }
}

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            if let Error::Config(list) = &e {
                for p in list {
                    eprintln!("config error: {p}");
                }
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(if e.is_config_error() { EXIT_CONFIG } else { EXIT_SOLVER })
        }
    }
}

fn load_config(cli: &Cli) -> mobisec::Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seeds) = &cli.seeds {
        config.run.seeds = seeds.clone();
    }
    if let Some(scheme) = cli.scheme {
        config.run.scheme = scheme;
    }
    let problems = config.problems();
    if problems.is_empty() {
        Ok(config)
    } else {
        Err(Error::Config(problems))
    }
}

fn run(cli: &Cli) -> mobisec::Result<ExitCode> {
    let mut config = load_config(cli)?;
    if let Command::ValidateConfig = cli.command {
        println!("ok {}", config.hash()?);
        return Ok(ExitCode::SUCCESS);
    }
    match cli.command {
        Command::Sweep | Command::Gap if config.sweep.axis == SweepAxis::None => {
            return Err(Error::Config(vec![format!(
                "sweep.axis: '{}' needs a sweep axis other than none",
                cli.command.name()
            )]));
        }
        Command::Gap => config.run.scheme = Scheme::Both,
        Command::Converge | Command::Gain => {
            config.sweep.axis = SweepAxis::None;
            config.sweep.values.clear();
        }
        _ => {}
    }

    let started = unix_now();
    let hash = config.hash()?;
    std::fs::create_dir_all(&cli.out)?;
    let (config, calibration) = prepare(&config)?;
    if let (Some(c), false) = (&calibration, cli.quiet) {
        eprintln!(
            "calibrated noise {:.4} dBm (ASR {:.4} for target {}, {} runs)",
            c.noise_dbm, c.achieved_asr, c.target_asr, c.evaluations
        );
    }

    if let Command::Gain = cli.command {
        return gain(cli, &config, &hash, calibration.as_ref(), started);
    }

    let quiet = cli.quiet;
    let progress = move |r: &RunRecord| {
        if quiet {
            return;
        }
        match &r.outcome {
            Ok(o) => eprintln!(
                "{} {}={} seed {}: ASR {:.4} ({:.1} s)",
                r.scheme,
                r.axis,
                r.value,
                r.seed,
                o.asr(),
                r.runtime_s
            ),
            Err(e) => eprintln!("{} {}={} seed {}: failed: {e}", r.scheme, r.axis, r.value, r.seed),
        }
    };
    let records = run_grid(
        &config,
        &[config.run.scheme],
        config.sweep.axis,
        &config.sweep_points(),
        &config.run.seeds,
        &progress,
    );

    let mut files = vec![
        write_results(&cli.out, &hash, &records)?,
        write_summary(&cli.out, &records)?,
    ];
    files.extend(write_traces(&cli.out, &records)?);
    files.extend(write_trajectories(&cli.out, &records)?);
    match cli.command {
        Command::Converge => files.push(write_convergence(&cli.out, &records, 0.01)?),
        Command::Gap => files.push(write_gap(&cli.out, &records)?),
        _ => {}
    }
    finish(cli, &config, &hash, calibration.as_ref(), started, &records, &files)?;

    if !cli.quiet {
        for s in summarize(&records) {
            println!(
                "{:<4} {}={:<8} mean {:.4} sd {:.4} ({} runs, {} failed)",
                s.scheme, s.axis, s.value, s.mean, s.stddev, s.runs, s.failures
            );
        }
    }
    Ok(if records.iter().any(|r| r.outcome.is_err()) {
        ExitCode::from(EXIT_SOLVER)
    } else {
        ExitCode::SUCCESS
    })
}

fn gain(
    cli: &Cli,
    config: &ExperimentConfig,
    hash: &str,
    calibration: Option<&Calibration>,
    started: f64,
) -> mobisec::Result<ExitCode> {
    let seed = config.run.seeds[0];
    let mut records = Vec::new();
    let mut files = Vec::new();
    for scheme in config.run.scheme.expand() {
        let t = std::time::Instant::now();
        let outcome = solve_scenario(config, &config.scenario, scheme, seed)?;
        let patterns = gain_patterns(config, &config.scenario, &outcome)?;
        files.extend(write_gains(&cli.out, &patterns)?);
        if !cli.quiet {
            for p in &patterns {
                println!(
                    "{} slot {}: Bob {:.3} dB, Eve {:.3} dB, gap {:.3} dB",
                    p.scheme,
                    p.slot,
                    p.bob.1,
                    p.eve.1,
                    p.bob.1 - p.eve.1
                );
            }
        }
        records.push(RunRecord {
            scheme,
            axis: SweepAxis::None,
            value: 0.0,
            seed,
            outcome: Ok(outcome),
            runtime_s: t.elapsed().as_secs_f64(),
        });
    }
    files.extend(write_trajectories(&cli.out, &records)?);
    finish(cli, config, hash, calibration, started, &records, &files)?;
    Ok(ExitCode::SUCCESS)
}

fn finish(
    cli: &Cli,
    config: &ExperimentConfig,
    hash: &str,
    calibration: Option<&Calibration>,
    started: f64,
    records: &[RunRecord],
    files: &[PathBuf],
) -> mobisec::Result<()> {
    let dir: &Path = &cli.out;
    write_manifest(
        dir,
        &ManifestInput {
            command: cli.command.name(),
            config_hash: hash,
            config,
            calibration,
            started_unix_s: started,
            records,
            files,
        },
    )?;
    Ok(())
}
