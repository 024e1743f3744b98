use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spectral_ops::bench::{write_csv, BenchRow};
use spectral_ops::fftconv::bench_conv;
use spectral_ops::fit::{bench_mixing, fit_forward, FitConfig, FitModel, Mixer};
use spectral_ops::ftns::{read_tensor_as, write_tensor};
use spectral_ops::{verify, Error, Rng, Tensor};

const SEED_VAR: &str = "SPECTRAL_OPS_SEED";
const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(name = "spectral-ops", version, about = "FFT-based neural operators: verification, benchmarks and demo inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the oracle-equivalence and invariant suites.
    Verify {
        /// Run a single suite (tensor, spectral, fftconv, fit, ssm, gconv).
        #[arg(long)]
        suite: Option<String>,
    },
    /// Time direct vs FFT operators and write CSV.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Load a FiT model directory and classify one FTNS image.
    Demo {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Write a freshly initialised FiT model directory (seeded by SPECTRAL_OPS_SEED).
    InitModel {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = Mixer::Fourier)]
        mixer: Mixer,
    },
    /// Write an input image as an FTNS file (random, seeded by SPECTRAL_OPS_SEED).
    GenInput {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [3usize, 32, 32])]
        shape: Vec<usize>,
        /// All-zero image instead of random values.
        #[arg(long)]
        zeros: bool,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Same-mode cross-correlation, direct vs FFT, on n×n images with m×m kernels.
    Conv {
        #[arg(long, value_delimiter = ',', required = true, value_parser = positive)]
        image_sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true, value_parser = positive)]
        kernel_sizes: Vec<usize>,
        #[command(flatten)]
        common: BenchArgs,
    },
    /// Fourier vs attention token mixing on [S, d] inputs.
    Mixing {
        #[arg(long, value_delimiter = ',', required = true, value_parser = positive)]
        seq_lens: Vec<usize>,
        #[arg(long, value_parser = positive)]
        dim: usize,
        #[command(flatten)]
        common: BenchArgs,
    },
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 5, value_parser = positive)]
    repeats: usize,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn positive(s: &str) -> Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(0) => Err("must be positive".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<ExitCode, Failure> {
    match command {
        Command::Verify { suite } => cmd_verify(suite.as_deref()),
        Command::Bench(BenchCommand::Conv {
            image_sizes,
            kernel_sizes,
            common,
        }) => {
            let rows = bench_conv::<f32>(&image_sizes, &kernel_sizes, common.repeats, seed()?)?;
            emit_csv(&rows, common.out.as_deref())
        }
        Command::Bench(BenchCommand::Mixing { seq_lens, dim, common }) => {
            let rows = bench_mixing::<f32>(&seq_lens, dim, common.repeats, seed()?)?;
            emit_csv(&rows, common.out.as_deref())
        }
        Command::Demo { model, input } => cmd_demo(&model, &input),
        Command::InitModel { out, mixer } => {
            let config = FitConfig::cifar_small(mixer);
            let model = FitModel::<f64>::init(&config, &mut Rng::new(seed()?))?;
            model.save(&config, &out)?;
            println!("wrote {} model ({} parameters) to {}", mixer, model.param_count(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::GenInput { out, shape, zeros } => {
            let image: Tensor<f64> = if zeros {
                Tensor::zeros(shape)?
            } else {
                Rng::new(seed()?).randn(shape)?
            };
            write_tensor(&image, &out)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn seed() -> Result<u64, Failure> {
    match std::env::var(SEED_VAR) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("{SEED_VAR} must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

fn cmd_verify(suite: Option<&str>) -> Result<ExitCode, Failure> {
    if let Some(name) = suite {
        if !verify::SUITES.contains(&name) {
            return Err(Failure::Usage(format!(
                "unknown suite {name:?}; expected one of {}",
                verify::SUITES.join(", ")
            )));
        }
    }
    let reports = verify::run(suite)?;
    let mut all = true;
    for report in &reports {
        print!("{report}");
        all &= report.passed();
    }
    let failed = reports.iter().filter(|r| !r.passed()).count();
    println!("{} suites, {} failed", reports.len(), failed);
    Ok(if all { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn emit_csv(rows: &[BenchRow], out: Option<&Path>) -> Result<ExitCode, Failure> {
    match out {
        Some(path) => {
            let file = File::create(path).map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
            write_csv(rows, BufWriter::new(file))?;
        }
        None => write_csv(rows, io::stdout().lock())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_demo(model_dir: &Path, input: &Path) -> Result<ExitCode, Failure> {
    let (config, model) = FitModel::<f64>::load(model_dir)?;
    let image = read_tensor_as::<f64>(input)?;
    let logits = fit_forward(&image, &model, &config)?;
    let mut out = io::stdout().lock();
    let line = logits.data().iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(" ");
    let argmax = logits
        .data()
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v > logits.data()[best] { i } else { best });
    writeln!(out, "mixer: {}", config.mixer)
        .and_then(|_| writeln!(out, "logits: {line}"))
        .and_then(|_| writeln!(out, "argmax: {argmax}"))
        .map_err(|e| Error::Io {
            path: PathBuf::from("<stdout>"),
            source: e,
        })?;
    Ok(ExitCode::SUCCESS)
}
