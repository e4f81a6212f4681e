use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use helmscat_cli::{run, Command};

#[derive(Parser)]
#[command(name = "helmscat", version, about = "2-D diffraction tomography with multigrid Helmholtz solvers")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate measurements of a scene.
    Simulate(Common),
    /// Reconstruct a refractive-index map from measurements.
    Reconstruct(Common),
    /// Sweep disk contrast and radius for both forward models.
    Bench(Common),
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Reconstruct(a) => (Command::Reconstruct, a),
        Cmd::Bench(a) => (Command::Bench, a),
    };
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(command, &args.config, &args.out_dir, args.seed) {
        Ok(outputs) => {
            for w in &outputs.warnings {
                eprintln!("warning: {w}");
            }
            for (name, _) in &outputs.files {
                println!("{}", args.out_dir.join(name).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
