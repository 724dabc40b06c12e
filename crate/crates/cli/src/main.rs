use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rmalm_core::experiment::{self, ExperimentConfig, Overrides};
use rmalm_core::{par, Error, Result};

#[derive(Parser)]
#[command(name = "rmalm", version, about = "Constrained stochastic optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured problem instance to `instance.json`.
    Generate(RunArgs),
    /// Run the configured solver over all seeds.
    Solve(RunArgs),
    /// Compute the reference solution and write `ground_truth.json`.
    Oracle(RunArgs),
    /// Fit the dual convergence rate across metrics files.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Comma-separated seed list.
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Metrics CSV files, one per seed.
    #[arg(required = true, value_name = "CSV")]
    csvs: Vec<PathBuf>,
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Dual strong concavity modulus.
    #[arg(long, requires = "c")]
    alpha: Option<f64>,
    /// Penalty parameter of the runs.
    #[arg(long, requires = "alpha")]
    c: Option<f64>,
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        if self.threads == Some(0) {
            return Err(Error::Validation(vec!["--threads must be positive".into()]));
        }
        let cfg = ExperimentConfig::load(
            &self.config,
            &Overrides {
                out: self.out.clone(),
                seeds: self.seeds.clone(),
                threads: self.threads,
            },
        )?;
        if let Some(t) = cfg.run.threads {
            par::set_threads(t);
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(args) => {
            let cfg = args.load()?;
            let path = experiment::generate(&cfg, &args.config)?;
            println!("{}", path.display());
        }
        Command::Solve(args) => {
            let cfg = args.load()?;
            let summary = experiment::run_experiment(&cfg, &args.config)?;
            for s in &summary.seeds {
                match (&s.last, s.final_dist_sq_y) {
                    (Some(row), _) => println!(
                        "seed {}: k {} obj {} avg_viol {:.3e} max_viol {:.3e}",
                        s.seed,
                        row.k,
                        row.obj.map_or("-".into(), |v| format!("{v:.8e}")),
                        row.avg_viol,
                        row.max_viol
                    ),
                    (None, Some(d)) => println!("seed {}: final |y - y*|^2 {d:.3e}", s.seed),
                    (None, None) => {}
                }
            }
            if let Some(r) = &summary.rate {
                println!("rate {:.6} (r_squared {:.4})", r.measured_rate, r.fit.r_squared);
            }
            println!("{}", cfg.run.out.join("summary.json").display());
        }
        Command::Oracle(args) => {
            let cfg = args.load()?;
            let built = cfg.problem.build(config_dir(&args.config))?;
            let gt = experiment::ground_truth(&cfg, &args.config, &built)?;
            println!("f_opt {:.12e}", gt.f_opt);
            println!("{}", cfg.run.out.join("ground_truth.json").display());
        }
        Command::Report(args) => {
            if let Some(t) = args.threads {
                par::set_threads(t);
            }
            let alpha_c = args.alpha.zip(args.c);
            let report = experiment::emit_rate_report(&args.csvs, alpha_c, &args.out)?;
            print!("{}", report.to_table());
        }
    }
    Ok(())
}

fn config_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new(""))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
