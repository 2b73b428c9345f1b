use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rpvf_harness::{parse_config_text, run, ExperimentConfig, ExperimentId};

#[derive(Parser, Debug)]
#[command(
    name = "rpvf",
    version,
    about = "Spectral-basis policy iteration experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Discount factor
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Reward-diffusion temperature
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Gaussian kernel width
    #[arg(long, global = true)]
    sigma: Option<f64>,
    /// Basis size
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Base seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of grid instances
    #[arg(long, global = true)]
    instances: Option<usize>,
    /// Initial policies per instance
    #[arg(long, global = true)]
    policies: Option<usize>,
    /// Output root; results go to <out>/<experiment>/
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Flat key=value file; flags given on the command line take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Gaussian-kernel eigenvectors against the optimal three-room values
    KernelEig,
    /// Three-room random-walk basis against the wall-penalty reward basis
    ThreeroomBasis,
    /// Oracle, PVF, shaped PVF and RPVF on the goal grid
    GoalgridCompare,
    /// PVF against RPVF on seeded mine grids
    MinegridBench,
    /// Every experiment in turn
    All,
}

impl Cli {
    fn overrides(&self) -> Result<Vec<(String, String)>, String> {
        let mut pairs = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
                parse_config_text(&text).map_err(|e| format!("{}: {e}", path.display()))?
            }
            None => Vec::new(),
        };
        let flags = [
            ("alpha", self.alpha.map(|v| v.to_string())),
            ("beta", self.beta.map(|v| v.to_string())),
            ("sigma", self.sigma.map(|v| v.to_string())),
            ("k", self.k.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("instances", self.instances.map(|v| v.to_string())),
            ("policies", self.policies.map(|v| v.to_string())),
            ("out", self.out.as_ref().map(|v| v.display().to_string())),
        ];
        pairs.extend(
            flags
                .into_iter()
                .filter_map(|(k, v)| v.map(|v| (k.to_string(), v))),
        );
        Ok(pairs)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let experiments: Vec<ExperimentId> = match cli.command {
        Command::KernelEig => vec![ExperimentId::KernelEig],
        Command::ThreeroomBasis => vec![ExperimentId::ThreeroomBasis],
        Command::GoalgridCompare => vec![ExperimentId::GoalgridCompare],
        Command::MinegridBench => vec![ExperimentId::MinegridBench],
        Command::All => ExperimentId::ALL.to_vec(),
    };
    let overrides = match cli.overrides() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    for id in experiments {
        let config = match ExperimentConfig::resolve(id, &overrides) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {id}: {e}");
                return ExitCode::from(2);
            }
        };
        let report = match run(&config) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("error: {id}: {e}");
                return ExitCode::FAILURE;
            }
        };
        let dir = config.output_dir();
        if let Err(e) = report.write_to(&dir, &config) {
            eprintln!("error: writing {}: {e}", dir.display());
            return ExitCode::FAILURE;
        }
        print!("{}", report.render());
        println!("written to {}\n", dir.display());
    }
    ExitCode::SUCCESS
}
