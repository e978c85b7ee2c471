use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Parser, Subcommand};

use goalfem::config::{bundled, ExperimentConfig, BUNDLED};
use goalfem::experiments::{compute_reference, run_experiment};
use goalfem::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "goalfem", version, about = "Goal-oriented adaptive finite element experiments")]
struct Cli {
    /// Directory receiving one subdirectory per experiment.
    #[arg(long, global = true, default_value = "results")]
    output_dir: PathBuf,
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run experiments given as TOML paths or bundled names.
    Run {
        #[arg(required = true)]
        configs: Vec<String>,
        /// Number of experiments run in parallel processes.
        #[arg(long, short, default_value_t = 1)]
        jobs: usize,
    },
    /// Print the bundled experiments.
    List,
    /// Print goal values from a higher-order adaptive run of a config.
    Reference {
        config: String,
        #[arg(long, default_value_t = 2)]
        degree: usize,
        #[arg(long, default_value_t = 200_000)]
        max_dofs: usize,
    },
}

fn load(spec: &str) -> Result<ExperimentConfig, Error> {
    let path = Path::new(spec);
    if path.exists() {
        return ExperimentConfig::from_path(path);
    }
    bundled(spec).unwrap_or_else(|| Err(Error::Config(format!("{spec}: no such file or bundled experiment"))))
}

fn run_one(spec: &str, out: &Path, quiet: bool) -> u8 {
    let cfg = match load(spec) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{spec}: {e}");
            return EXIT_CONFIG;
        }
    };
    match run_experiment(&cfg, out) {
        Ok(rep) => {
            if !quiet {
                if let Ok(t) = std::fs::read_to_string(rep.dir.join("table.txt")) {
                    print!("{t}");
                }
                println!("wrote {}", rep.dir.display());
            }
            match rep.failure {
                Some(e) => {
                    eprintln!("{}: {e}", cfg.name);
                    EXIT_NUMERIC
                }
                None => 0,
            }
        }
        Err(e) if e.is_config() => {
            eprintln!("{}: {e}", cfg.name);
            EXIT_CONFIG
        }
        Err(e) => {
            eprintln!("{}: {e}", cfg.name);
            EXIT_NUMERIC
        }
    }
}

/// Runs every config in a child process, at most `jobs` at a time.
fn run_parallel(configs: &[String], jobs: usize, out: &Path, quiet: bool) -> u8 {
    let exe = match std::env::current_exe() {
        Ok(e) => e,
        Err(e) => {
            eprintln!("cannot locate executable: {e}");
            return EXIT_NUMERIC;
        }
    };
    let next = AtomicUsize::new(0);
    let codes = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..jobs.min(configs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(spec) = configs.get(i) else { break };
                let mut cmd = Command::new(&exe);
                cmd.arg("--output-dir").arg(out).arg("run").arg(spec);
                if quiet {
                    cmd.arg("--quiet");
                }
                let code = match cmd.status() {
                    Ok(st) => st.code().map_or(EXIT_NUMERIC, |c| c as u8),
                    Err(e) => {
                        eprintln!("{spec}: {e}");
                        EXIT_NUMERIC
                    }
                };
                codes.lock().expect("lock").push(code);
            });
        }
    });
    combine(&codes.into_inner().expect("lock"))
}

fn combine(codes: &[u8]) -> u8 {
    if codes.contains(&EXIT_CONFIG) {
        EXIT_CONFIG
    } else {
        codes.iter().copied().max().unwrap_or(0)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let code = match &cli.command {
        Cmd::List => {
            for (name, src) in BUNDLED {
                let desc = ExperimentConfig::from_toml(src).map(|c| c.description).unwrap_or_else(|e| format!("invalid: {e}"));
                println!("{name:<32} {desc}");
            }
            0
        }
        Cmd::Run { configs, jobs } => {
            if *jobs > 1 && configs.len() > 1 {
                run_parallel(configs, *jobs, &cli.output_dir, cli.quiet)
            } else {
                let codes: Vec<u8> = configs.iter().map(|c| run_one(c, &cli.output_dir, cli.quiet)).collect();
                combine(&codes)
            }
        }
        Cmd::Reference { config, degree, max_dofs } => match load(config).and_then(|c| {
            let r = compute_reference(&c, *degree, *max_dofs)?;
            Ok((c, r))
        }) {
            Ok((c, r)) => {
                println!("# {}: Q{}/Q{} adaptive, {} steps, {} dofs, eta_h {:.3e}", c.name, degree, degree + 1, r.steps, r.dofs, r.eta_h);
                for (label, v) in c.goal_labels().iter().zip(&r.values) {
                    println!("{label} = {v:.16e}");
                }
                0
            }
            Err(e) => {
                eprintln!("{config}: {e}");
                if e.is_config() {
                    EXIT_CONFIG
                } else {
                    EXIT_NUMERIC
                }
            }
        },
    };
    ExitCode::from(code)
}
