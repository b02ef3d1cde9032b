use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ucp_dilation_cli::{exit_code, run_dims, run_random, run_verify, CliError, InstanceSpec, INPUT_ERROR};

#[derive(Parser)]
#[command(name = "ucp-dilation", version, about = "Dilations of UCP maps on multi-matrix algebras")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the checks listed in a JSON instance.
    Verify {
        spec: PathBuf,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the tolerance in the spec.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Generate a seeded random channel and run every default check.
    Random {
        /// Block sizes, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "2")]
        blocks: Vec<usize>,
        #[arg(long, default_value_t = 2)]
        kraus: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        level: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the dimensions of every space without running checks.
    Dims { spec: PathBuf },
}

fn read_spec(path: &Path) -> Result<InstanceSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    InstanceSpec::from_json(&text)
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (result, out_path) = match cli.command {
        Command::Verify { spec, out, tol } => {
            let r = read_spec(&spec).and_then(|mut s| {
                if let Some(t) = tol {
                    s.tol = t;
                }
                run_verify(&s)
            });
            (r, out)
        }
        Command::Random {
            blocks,
            kraus,
            seed,
            level,
            out,
        } => (run_random(&blocks, kraus, seed, level), out),
        Command::Dims { spec } => {
            return match read_spec(&spec).and_then(|s| run_dims(&s)) {
                Ok(t) => {
                    print!("{}", t.render());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(INPUT_ERROR as u8)
                }
            };
        }
    };
    match result {
        Ok(report) => {
            print!("{}", report.summary());
            if let Some(p) = &out_path {
                if let Err(e) = write(p, &report.to_json()) {
                    eprintln!("error: {e}");
                    return ExitCode::from(INPUT_ERROR as u8);
                }
            }
            ExitCode::from(exit_code(&report) as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(p) = &out_path {
                let json = serde_json::to_string_pretty(&e.report()).expect("error report serializes");
                let _ = write(p, &json);
            }
            ExitCode::from(INPUT_ERROR as u8)
        }
    }
}
