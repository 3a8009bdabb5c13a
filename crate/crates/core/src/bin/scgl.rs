use clap::{Args, Parser, Subcommand};
use scgl::error::Error;
use scgl::experiments::{run_manifest, ExperimentKind, ExperimentManifest, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "scgl", version, about = "Simulate and verify the renormalized stochastic complex Ginzburg-Landau equation")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "scgl-out")]
    out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Exit with status 1 when an acceptance check fails.
    #[arg(long, global = true)]
    check: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run replicas of the solver and write diagnostics and snapshots.
    Simulate {
        /// Continue an interrupted run from its latest snapshots.
        #[arg(long)]
        resume: bool,
    },
    /// Renormalization constant against the cutoff.
    RenormScan {
        /// Comma-separated viscosities.
        #[arg(long, value_delimiter = ',')]
        mu: Option<Vec<f64>>,
        /// Cutoffs: a comma-separated list or a doubling range `a..b`.
        #[arg(long)]
        n: Option<String>,
    },
    /// Besov norms of stationary OU samples.
    BesovScan,
    /// Covariance kernel against its logarithmic profile.
    KernelCheck,
    /// Wick-power ladder, time-step tables and solution ladder.
    Convergence {
        /// Comma-separated sections: wick, timestep, solution, renorm.
        #[arg(long, value_delimiter = ',')]
        sections: Option<Vec<String>>,
    },
    /// Uniformity in the initial amplitude.
    ComingDown,
    /// Bismut-Elworthy-Li identity by Monte Carlo.
    BelCheck,
    /// Fast invariant suite.
    Selftest,
}

fn parse_ladder(s: &str) -> Result<Vec<usize>, Error> {
    let bad = || Error::Config(format!("cannot parse cutoff list {s:?}"));
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        if a == 0 || b < a {
            return Err(bad());
        }
        let mut v = vec![a];
        while v.last().unwrap() * 2 <= b {
            v.push(v.last().unwrap() * 2);
        }
        return Ok(v);
    }
    s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Input(_) | Error::Format(_) | Error::GridMismatch(_) => 2,
        Error::Io(_) | Error::BlowUp { .. } => 3,
    }
}

fn run(cli: Cli) -> Result<bool, Error> {
    let mut config = match &cli.global.config {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::default(),
    };
    let seed = cli.global.seed.unwrap_or(config.solver.seed);
    let mut resume = false;
    let kind = match cli.command {
        Command::Simulate { resume: r } => {
            resume = r;
            ExperimentKind::Simulate
        }
        Command::RenormScan { mu, n } => {
            if let Some(mu) = mu {
                config.renorm_scan.mu = mu;
            }
            if let Some(n) = n {
                config.renorm_scan.n = parse_ladder(&n)?;
            }
            ExperimentKind::RenormScan
        }
        Command::BesovScan => ExperimentKind::BesovScan,
        Command::KernelCheck => ExperimentKind::KernelCheck,
        Command::Convergence { sections } => {
            if let Some(s) = sections {
                config.convergence.sections = s;
            }
            ExperimentKind::Convergence
        }
        Command::ComingDown => ExperimentKind::ComingDown,
        Command::BelCheck => ExperimentKind::BelCheck,
        Command::Selftest => ExperimentKind::Selftest,
    };
    let manifest = ExperimentManifest::new(kind, config, seed, cli.global.out.clone());
    let outcome = run_manifest(&manifest, cli.global.workers, resume)?;
    for (name, ok) in &outcome.checks {
        println!("{} {name}", if *ok { "PASS" } else { "FAIL" });
    }
    for f in &outcome.files {
        eprintln!("wrote {}", f.display());
    }
    Ok(outcome.passed || !cli.global.check)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("scgl: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
