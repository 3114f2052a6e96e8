//! Configuration-driven front end: one run directory per command, each with
//! CSV/JSON/SVG outputs and a deterministic manifest.

pub mod commands;
pub mod config;
pub mod output;
pub mod svg;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::Failure;
use config::{Overrides, RunConfig};
use output::RunDir;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "taylor-lab",
    version,
    about = "Spectral laboratory for Taylor dispersion in shear flows"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output root (TAYLOR_LAB_OUT takes precedence).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub nu: Option<f64>,
    /// Cross-section truncation M.
    #[arg(long, global = true)]
    pub modes: Option<usize>,
    /// Center-manifold / remainder order N.
    #[arg(long, global = true)]
    pub order: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses the global pool.
    #[arg(long, global = true)]
    pub parallel: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Eigenvalue sweep, spectral separation and perturbation coefficients.
    Spectrum,
    /// Spreading runs: effective diffusivity, Gaussian and remainder rates, regime decay.
    Dispersion,
    /// Center-manifold coefficients, invariance, attraction and reduced rates.
    Manifold,
    /// Hypocoercivity certificate and functional decay over the intermediate band.
    Hypo,
    /// Every command in turn.
    All,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Dispersion => "dispersion",
            Command::Manifold => "manifold",
            Command::Hypo => "hypo",
            Command::All => "all",
        }
    }
}

/// Resolves the configuration: file, then flag overrides, then validation.
pub fn resolve(cli: &Cli) -> Result<RunConfig, config::ConfigError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.apply(&Overrides {
        nu: cli.nu,
        modes: cli.modes,
        order: cli.order,
        seed: cli.seed,
        threads: cli.parallel,
    });
    cfg.validate()?;
    Ok(cfg)
}

fn run_one(command: Command, cfg: &RunConfig, root: &std::path::Path) -> i32 {
    let hash = cfg.hash();
    let dir = root.join(format!("{}-{}", command.name(), &hash[..12]));
    let mut run = match RunDir::create(dir.clone()) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("cannot create {}: {e}", dir.display());
            return EXIT_FAIL;
        }
    };
    let result = taylor_lab::par::with_threads(cfg.threads, || match command {
        Command::Spectrum => commands::spectrum(cfg, &mut run),
        Command::Dispersion => commands::dispersion(cfg, &mut run),
        Command::Manifold => commands::manifold(cfg, &mut run),
        Command::Hypo => commands::hypo(cfg, &mut run),
        Command::All => unreachable!("expanded by the caller"),
    });
    let code = match &result {
        Ok(()) => None,
        Err(Failure::Config(m)) => {
            eprintln!("{}: invalid config: {m}", command.name());
            Some(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("{}: {e}", command.name());
            run.verdict("completed", false, e.to_string());
            Some(EXIT_FAIL)
        }
    };
    for v in run.verdicts.iter() {
        let tag = match (v.pass, v.asserted) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "note",
        };
        println!("[{}] {tag} {}: {}", command.name(), v.name, v.detail);
    }
    let pass = match run.finish(command.name(), cfg) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("cannot write manifest: {e}");
            return EXIT_FAIL;
        }
    };
    println!(
        "[{}] {} -> {}",
        command.name(),
        if pass && code.is_none() {
            "pass"
        } else {
            "fail"
        },
        dir.display()
    );
    match code {
        Some(c) => c,
        None if pass => EXIT_PASS,
        None => EXIT_FAIL,
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let cfg = match resolve(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    let root = output::output_root(cli.out.as_deref(), &cfg);
    let commands: &[Command] = match cli.command {
        Command::All => &[
            Command::Spectrum,
            Command::Manifold,
            Command::Hypo,
            Command::Dispersion,
        ],
        ref c => std::slice::from_ref(c),
    };
    let mut worst = EXIT_PASS;
    for c in commands {
        let code = run_one(*c, &cfg, &root);
        worst = worst.max(code);
    }
    worst
}

/// Parses `args` (including the program name) and runs; clap usage errors map to exit 2.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_CONFIG
            } else {
                EXIT_PASS
            }
        }
    }
}
