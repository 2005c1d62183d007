use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, warn};

use moorl::experiment::{
    compare, merged_front, run_experiment, CompareOptions, ExperimentConfig, Metric, RunOptions,
    OUTPUT_ROOT_ENV,
};
use moorl::problems::{Environment, Problem};
use moorl::Error;

#[derive(Parser)]
#[command(name = "moorl", version, about = "Multi-objective optimization experiments")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every problem x algorithm x seed cell of an experiment file.
    Run {
        config: PathBuf,
        /// Replace existing results in the output directory.
        #[arg(long)]
        force: bool,
        /// Number of cells to run concurrently.
        #[arg(long, default_value_t = 1)]
        parallel_cells: usize,
        /// Directory that relative output paths are resolved against.
        #[arg(long, env = OUTPUT_ROOT_ENV)]
        output_root: Option<PathBuf>,
    },
    /// Compare runs from one or more experiment output directories.
    Compare {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Significance level of the post-hoc test.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Metric used for the rank tests: hv, gd, igd, eps, i_c or c_metric.
        #[arg(long, default_value = "hv")]
        metric: String,
        /// Where to write the report; defaults to `<first dir>/comparison`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the front of a run, or the merged front of every run below a directory.
    Front { run_dir: PathBuf },
    /// Print points of a problem's true Pareto front.
    RefFront {
        problem: String,
        #[arg(short = 'n', long = "count", default_value_t = 1000)]
        count: usize,
    },
}

fn print_rows(header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> io::Result<()> {
    let mut out = io::BufWriter::new(io::stdout().lock());
    writeln!(out, "{}", header.join(","))?;
    for r in rows {
        let line: Vec<String> = r.iter().map(f64::to_string).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()
}

fn objective_header(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("f{i}")).collect()
}

fn execute(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Run {
            config,
            force,
            parallel_cells,
            output_root,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let opts = RunOptions {
                force,
                parallel_cells,
                output_root,
            };
            let report = run_experiment(&cfg, &opts)?;
            println!(
                "{} runs written to {}",
                report.metrics.len(),
                report.output_dir.display()
            );
            if report.succeeded() {
                Ok(ExitCode::SUCCESS)
            } else {
                for (id, msg) in &report.failures {
                    error!("{id}: {msg}");
                }
                eprintln!("{} run(s) failed", report.failures.len());
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Compare {
            dirs,
            alpha,
            metric,
            out,
        } => {
            let opts = CompareOptions {
                alpha,
                metric: Metric::from_name(&metric)?,
            };
            let report = compare(&dirs, &opts)?;
            let out = out.unwrap_or_else(|| dirs[0].join("comparison"));
            report.write(&out)?;
            for w in &report.warnings {
                warn!("{w}");
            }
            let mut stdout = io::stdout().lock();
            write!(stdout, "{}", report.render())
                .and_then(|_| writeln!(stdout, "report written to {}", out.display()))
                .or_else(ignore_broken_pipe)
                .map_err(io_error)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Front { run_dir } => {
            let front = merged_front(&run_dir)?;
            let mut header = objective_header(front.n_obj);
            header.push("cv".into());
            let rows = front.objectives.into_iter().zip(front.cv).map(|(mut f, cv)| {
                f.push(cv);
                f
            });
            print_rows(&header, rows).or_else(ignore_broken_pipe).map_err(io_error)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::RefFront { problem, count } => {
            let p = Problem::by_name(&problem)?;
            let points = p.reference_front(count)?;
            print_rows(&objective_header(p.n_obj()), points.into_iter())
                .or_else(ignore_broken_pipe)
                .map_err(io_error)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn ignore_broken_pipe(e: io::Error) -> io::Result<()> {
    if e.kind() == io::ErrorKind::BrokenPipe {
        Ok(())
    } else {
        Err(e)
    }
}

fn io_error(e: io::Error) -> Error {
    Error::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) | Error::Config { .. } | Error::Toml(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
