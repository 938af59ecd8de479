use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hfb_core::config::RunConfig;
use hfb_core::driver::{self, exit_code, EXIT_CONFIG, EXIT_INVARIANT};
use hfb_core::observables;
use hfb_core::snapshot::Snapshot;
use hfb_core::state;
use hfb_core::verify::{self, Suite};
use hfb_core::HfbError;

#[derive(Parser)]
#[command(name = "hfb", version, about = "Hartree-Fock-Bogoliubov dynamics on a periodic box")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve a configured system and write diagnostics and snapshots.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed for randomized initial data (overrides `initial.seed`).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a verification suite and print a JSON report.
    Verify {
        /// conservation, positivity, free-flow, order, picard, bogoliubov or inequalities
        #[arg(long)]
        suite: String,
    },
    /// Print the header and summary quantities of a snapshot file.
    SnapshotInfo { file: PathBuf },
}

fn fail(err: &HfbError) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(exit_code(err) as u8)
}

fn run(config: PathBuf, out: Option<PathBuf>, seed: Option<u64>) -> ExitCode {
    let cfg = match RunConfig::from_file(&config) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    match driver::run(&cfg, out.as_deref(), seed) {
        Ok(s) => {
            println!("wrote {} ({} steps, {} records, {:.2} s)", s.out_dir.display(), s.steps, s.records, s.wall_time);
            if let Some(d) = s.free_flow_deviation {
                println!("free-flow max deviation {d:.3e}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn verify(name: &str) -> ExitCode {
    let suite: Suite = match name.parse() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}; expected one of {}", Suite::ALL.map(|s| s.name()).join(", "));
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    match verify::run_suite(suite) {
        Ok(report) => {
            println!("{}", report.to_json());
            if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_INVARIANT as u8)
            }
        }
        Err(e) => fail(&e),
    }
}

fn snapshot_info(file: PathBuf) -> ExitCode {
    let snap = match Snapshot::read(&file) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    let s = &snap.state;
    let report = state::validate(s, state::EVOLVED_TOLERANCE);
    println!("file = {}", file.display());
    println!("grid.d = {}", snap.dim);
    println!("grid.n = {}", snap.points);
    println!("grid.L = {:?}", snap.length);
    println!("nodes = {}", s.len());
    println!("weight = {:?}", snap.weight());
    println!("n_total = {}", observables::format_float(observables::particle_number(s)));
    println!("n_gamma = {}", observables::format_float(s.trace_gamma()));
    println!("n_phi = {}", observables::format_float(s.phi_norm_sqr()));
    println!("gamma_floor = {}", observables::format_float(observables::gamma_floor(s)));
    println!("tolerance = {:e}", report.tolerance);
    println!("valid = {}", report.is_valid());
    for (what, value) in report.violations() {
        println!("violation = {what} ({value:e})");
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, seed } => run(config, out, seed),
        Command::Verify { suite } => verify(&suite),
        Command::SnapshotInfo { file } => snapshot_info(file),
    }
}
