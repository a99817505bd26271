use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use xmodal::pipeline::{self, Config, EvalOptions, InferRequest};
use xmodal::scenes::{generate_corpus, CorpusOptions, ScenarioMix};

#[derive(Parser)]
#[command(name = "xmodal", version, about = "RGB + thermal cross-modal depth estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus in the dataset layout.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scenario fractions, e.g. `day:0.4,night:0.4,rain:0.2`.
        #[arg(long)]
        mix: Option<ScenarioMix>,
    },
    /// Train all networks jointly from a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score a checkpoint on a dataset split; CSV on stdout.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Also write the CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Score ground truth against itself (pipeline sanity check).
        #[arg(long, hide = true)]
        inject_gt: bool,
    },
    /// Predict fused depth for one RGB + thermal pair.
    Infer {
        #[arg(long)]
        rgb: PathBuf,
        #[arg(long)]
        thr: PathBuf,
        #[arg(long)]
        calib: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write C_RGB as an 8-bit PGM next to the output.
        #[arg(long)]
        emit_confidence: bool,
    },
}

fn run(cmd: Command) -> xmodal::Result<()> {
    match cmd {
        Command::Gen { n, out, seed, mix } => {
            let mut opts = CorpusOptions::new(n, seed);
            if let Some(mix) = mix {
                opts.mix = mix;
            }
            let index = generate_corpus(&opts, &out)?;
            for (split, ids) in &index.splits {
                println!("{split}: {} samples", ids.len());
            }
        }
        Command::Train { config } => {
            let cfg = Config::load(&config)?;
            let samples = pipeline::load_split(&cfg.dataset_root, &cfg.train_split)?;
            println!("{}", pipeline::LOG_HEADER);
            let report = pipeline::train_samples(&cfg, &samples, |row| {
                println!("{}", row.to_csv_row());
            })?;
            eprintln!("wrote {}", report.final_checkpoint.display());
        }
        Command::Eval {
            config,
            ckpt,
            split,
            out,
            inject_gt,
        } => {
            let cfg = Config::load(&config)?;
            let report = pipeline::evaluate(&cfg, &ckpt, &split, EvalOptions { inject_gt })?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            let csv = report.to_csv();
            print!("{csv}");
            if let Some(path) = out {
                std::fs::write(&path, csv).map_err(|e| xmodal::Error::Io { path, source: e })?;
            }
        }
        Command::Infer {
            rgb,
            thr,
            calib,
            ckpt,
            out,
            emit_confidence,
        } => {
            let res = pipeline::infer(&InferRequest {
                rgb,
                thr,
                calib,
                ckpt,
                out,
                emit_confidence,
            })?;
            eprintln!("wrote {}", res.depth_path.display());
            if let Some(p) = res.confidence_path {
                eprintln!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { 2 } else { 1 })
        }
    }
}
