use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rcpump_cli::config::Scenario;
use rcpump_cli::{compare, output, rc_info, sweep};

/// Charge pumping through a driven quantum dot with Lorentzian reservoirs.
///
/// Exit status: 0 on success, 1 for unusable input (config, files), 2 when
/// some grid points failed or a comparison found differences.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// Log progress and per-point failures.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a scenario and write a CSV table.
    Run {
        config: PathBuf,
        /// Output file; defaults to the scenario's `output` or `<name>.csv`.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Worker threads; 0 uses all cores.
        #[arg(short = 'j', long, default_value_t = 0)]
        threads: usize,
        /// Leave the wall_ms column empty so reruns are byte-identical.
        #[arg(long)]
        no_timing: bool,
    },
    /// Print the reaction-coordinate parameters of a scenario.
    RcInfo { config: PathBuf },
    /// Compare two result tables column by column, ignoring timing.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        rtol: f64,
        #[arg(long, default_value_t = 1e-12)]
        atol: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli.command) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn execute(command: Command) -> Result<ExitCode, String> {
    match command {
        Command::Run {
            config,
            out,
            threads,
            no_timing,
        } => {
            let scenario = Scenario::load(&config).map_err(|e| e.to_string())?;
            let path = out
                .or_else(|| scenario.output.clone())
                .unwrap_or_else(|| PathBuf::from(format!("{}.csv", scenario.name)));
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| e.to_string())?;
            log::info!("{}: {} points", scenario.name, scenario.grid().len());
            let rows = pool.install(|| sweep::run(&scenario, !no_timing));
            output::write_atomic(&path, &scenario, &rows).map_err(|e| format!("{}: {e}", path.display()))?;
            let failed = rows.iter().filter(|r| !r.ok()).count();
            println!("{}: {} rows written to {}", scenario.name, rows.len(), path.display());
            if failed > 0 {
                eprintln!("{failed} of {} points failed; see the status column", rows.len());
                return Ok(ExitCode::from(2));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::RcInfo { config } => {
            let scenario = Scenario::load(&config).map_err(|e| e.to_string())?;
            println!("gamma,width,lambda,residual,lambda_over_omega");
            for l in rc_info(&scenario) {
                println!(
                    "{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}",
                    l.gamma, l.width, l.lambda, l.residual, l.lambda_over_omega
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { a, b, rtol, atol } => {
            let ta = output::read_table(&a).map_err(|e| format!("{}: {e}", a.display()))?;
            let tb = output::read_table(&b).map_err(|e| format!("{}: {e}", b.display()))?;
            let cmp = compare::compare(&ta, &tb)?;
            println!("column,max_abs,max_rel");
            for c in &cmp.columns {
                println!("{},{:.3e},{:.3e}", c.column, c.max_abs, c.max_rel);
            }
            println!("status mismatches: {}", cmp.status_mismatches);
            if cmp.within(rtol, atol) {
                println!("match");
                Ok(ExitCode::SUCCESS)
            } else {
                println!("differ");
                Ok(ExitCode::from(2))
            }
        }
    }
}
