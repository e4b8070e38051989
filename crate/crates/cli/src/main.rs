use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mssnet_cli::commands::{self, ReportFormat, ToyDataOptions};
use mssnet_cli::config::RunConfig;
use mssnet_cli::dataset::DatasetLayout;
use mssnet_cli::Result;
use mssnet_core::audit::DEFAULT_RESOLUTION;
use mssnet_core::metrics::SsimMode;

#[derive(Parser)]
#[command(name = "mssnet", version, about = "Multi-scale-stage deblurring network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Kv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ssim {
    Grayscale,
    PerChannel,
}

#[derive(Subcommand)]
enum Command {
    /// Count parameters and MACs and compare with the published figures.
    Audit {
        /// Preset name, or `all`.
        variant: String,
        #[arg(long, default_value_t = DEFAULT_RESOLUTION.1)]
        width: usize,
        #[arg(long, default_value_t = DEFAULT_RESOLUTION.0)]
        height: usize,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Compare backward-mode gradients with finite differences (64-bit).
    Gradcheck {
        /// Preset name or `tiny`; presets run with 4/6/8 channels.
        variant: String,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train on a blur/ + sharp/ dataset.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint path; the run config is written next to it as `<out>.toml`.
        #[arg(long)]
        out: PathBuf,
        /// Loss history CSV (default `<out>.csv`).
        #[arg(long)]
        history: Option<PathBuf>,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Deblur one image.
    Infer {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Preset to build instead of the checkpoint's sidecar config.
        #[arg(long)]
        variant: Option<String>,
    },
    /// Mean PSNR/SSIM over a dataset.
    Eval {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        variant: Option<String>,
        #[arg(long, value_enum, default_value = "grayscale")]
        ssim: Ssim,
        /// Also print one line per image.
        #[arg(long)]
        per_image: bool,
    },
    /// Write a motion-blurred toy dataset.
    MakeToyData {
        /// Directory of sharp images; synthetic ones are drawn when absent.
        #[arg(long)]
        sharp: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 9)]
        len: usize,
        #[arg(long, default_value_t = 0.0)]
        angle: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
    },
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Audit {
            variant,
            width,
            height,
            format,
        } => {
            let format = match format {
                Format::Text => ReportFormat::Text,
                Format::Kv => ReportFormat::KeyValue,
            };
            commands::audit(&variant, height, width, format, &mut std::io::stdout())
        }
        Command::Gradcheck { variant, tol, seed } => {
            let rep = commands::gradcheck(&variant, tol, seed)?;
            for v in rep.failures() {
                println!("FAIL {:<40} rel {:.3e}", v.name, v.max_rel_error);
            }
            let worst = rep.worst().map(|w| (w.name.as_str(), w.max_rel_error)).unwrap_or(("-", 0.0));
            let refined: usize = rep.variables.iter().map(|v| v.refined).sum();
            println!(
                "{} variables, worst {} at {:.3e}, tol {:.0e}, {} samples re-stepped past kinks: {}",
                rep.variables.len(),
                worst.0,
                worst.1,
                tol,
                refined,
                if rep.passed() { "PASS" } else { "FAIL" }
            );
            Ok(rep.passed())
        }
        Command::Train {
            config,
            data,
            out,
            history,
            seed,
        } => {
            let mut cfg = match &config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let history = history.unwrap_or_else(|| {
                let mut s = out.as_os_str().to_owned();
                s.push(".csv");
                PathBuf::from(s)
            });
            let sum = commands::run_training(&cfg, &data, &out, &history)?;
            println!(
                "{} iterations ({:.1} epochs), loss {:.5} -> {:.5}; weights {}, history {}",
                sum.iterations,
                sum.epochs,
                sum.first_loss,
                sum.last_loss,
                out.display(),
                history.display()
            );
            Ok(true)
        }
        Command::Infer {
            weights,
            input,
            out,
            variant,
        } => {
            commands::infer(&weights, variant.as_deref(), &input, &out)?;
            Ok(true)
        }
        Command::Eval {
            weights,
            data,
            variant,
            ssim,
            per_image,
        } => {
            let model = commands::load_model(&weights, variant.as_deref())?;
            let layout = DatasetLayout::open(&data)?;
            let mode = match ssim {
                Ssim::Grayscale => SsimMode::Grayscale,
                Ssim::PerChannel => SsimMode::PerChannel,
            };
            let sum = commands::evaluate(&model, &layout, mode)?;
            if per_image {
                for s in &sum.images {
                    println!("{:<32} psnr {:>8.4} ssim {:.5}", s.name, s.psnr, s.ssim);
                }
            }
            println!("images {} psnr {:.4} ssim {:.5}", sum.images.len(), sum.mean_psnr, sum.mean_ssim);
            Ok(true)
        }
        Command::MakeToyData {
            sharp,
            out,
            len,
            angle,
            seed,
            count,
            size,
        } => {
            let names = commands::make_toy_data(&ToyDataOptions {
                sharp,
                out: out.clone(),
                len,
                angle,
                seed,
                count,
                size,
            })?;
            println!("{} pairs written to {}", names.len(), out.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
