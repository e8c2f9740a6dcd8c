//! `regulab`: experiment runner for the Hölder metric regularity laboratory.
//!
//! Exit codes: 0 on success, 1 when any task errored (a failed PASS is not
//! an error), 2 on schema violations. `REGULAB_SEED` overrides `--seed`.

mod expr;
mod instance;
mod report;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use instance::{parse_instance_file, Task};
use report::emit_convergence_table;
use runner::{run_batch, run_instance};

#[derive(Parser)]
#[command(name = "regulab", version, about = "Hölder metric regularity laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch file and write report.csv / report.json into --out.
    Run {
        batch: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker pool size (default: one per core).
        #[arg(long, default_value_t = 0)]
        parallel: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Stream per-instance progress to stderr.
        #[arg(long)]
        verbose: bool,
    },
    /// Solve a newton-task instance and print a JSON summary.
    Newton {
        instance: PathBuf,
        /// Override the starting point (comma-separated coordinates).
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        x0: Option<Vec<f64>>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        /// Write the convergence table to this path.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the instances of a file without writing reports; rows go to stdout.
    Estimate {
        instance: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        verbose: bool,
    },
}

fn effective_seed(cli_seed: u64) -> u64 {
    match std::env::var("REGULAB_SEED") {
        Ok(text) => text.trim().parse().unwrap_or(cli_seed),
        Err(_) => cli_seed,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, instance::SchemaError> {
    match cli.command {
        Command::Run { batch, out, parallel, seed, verbose } => {
            let instances = parse_instance_file(&batch)?;
            let summary = run_batch(&instances, parallel, effective_seed(seed), &out, verbose)
                .map_err(|source| instance::SchemaError::Io {
                    path: out.display().to_string(),
                    source,
                })?;
            let passed = summary.rows.iter().filter(|r| r.pass == Some(true)).count();
            eprintln!(
                "[regulab] {} rows ({passed} passed, {} errored) -> {}",
                summary.rows.len(),
                summary.failures.len(),
                out.display()
            );
            Ok(if summary.failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Newton { instance, x0, tol, max_iter, table, seed } => {
            let instances = parse_instance_file(&instance)?;
            let Some(mut inst) = instances.into_iter().find(|i| i.task == Task::Newton) else {
                return Err(instance::SchemaError::Invalid {
                    id: instance.display().to_string(),
                    message: "file contains no newton-task instance".into(),
                });
            };
            let spec = inst.newton.as_mut().expect("validated newton block");
            if let Some(x0) = x0 {
                if x0.len() != inst.base_point.x.len() {
                    return Err(instance::SchemaError::Invalid {
                        id: inst.id.clone(),
                        message: "--x0 dimension mismatch".into(),
                    });
                }
                spec.x0 = x0;
            }
            if let Some(tol) = tol {
                spec.tol = tol;
            }
            if let Some(mi) = max_iter {
                spec.max_iter = mi;
            }
            let row = run_instance(&inst, effective_seed(seed), None);
            let errored = row.is_error();
            if let Some(path) = table {
                // Re-run the solve to emit the table next to the summary.
                let f = inst.perturbation.as_ref().expect("validated");
                let map = inst.mapping.build().map_err(|message| {
                    instance::SchemaError::Invalid { id: inst.id.clone(), message }
                })?;
                let ge = regulab_core::newton::GeneralizedEquation::new(
                    f.to_vector_fn(),
                    f.to_jacobian_fn(),
                    map,
                )
                .map_err(|e| instance::SchemaError::Invalid {
                    id: inst.id.clone(),
                    message: e.to_string(),
                })?;
                let spec = inst.newton.as_ref().unwrap();
                let cfg = regulab_core::newton::NewtonConfig::new(regulab_core::Vector64::new(
                    spec.x0.clone(),
                ))
                .with_tol(spec.tol)
                .with_max_iter(spec.max_iter);
                let mut trace = regulab_core::newton::josephy_newton(&ge, &cfg).map_err(|e| {
                    instance::SchemaError::Invalid { id: inst.id.clone(), message: e.to_string() }
                })?;
                if let Some(reference) = &inst.reference_solution {
                    trace = trace.with_reference(&regulab_core::Vector64::new(reference.clone()));
                }
                emit_convergence_table(&trace, &path).map_err(|source| {
                    instance::SchemaError::Io { path: path.display().to_string(), source }
                })?;
            }
            println!("{}", serde_json::to_string_pretty(&row).expect("row serializes"));
            Ok(if errored { ExitCode::from(1) } else { ExitCode::SUCCESS })
        }
        Command::Estimate { instance, seed, verbose } => {
            let instances = parse_instance_file(&instance)?;
            let seed = effective_seed(seed);
            let mut errored = false;
            let mut rows = Vec::new();
            for inst in &instances {
                if verbose {
                    eprintln!("[regulab] running {} ({})", inst.id, inst.task.name());
                }
                let row = run_instance(inst, seed, None);
                errored |= row.is_error();
                rows.push(row);
            }
            println!("{}", serde_json::to_string_pretty(&rows).expect("rows serialize"));
            Ok(if errored { ExitCode::from(1) } else { ExitCode::SUCCESS })
        }
    }
}
