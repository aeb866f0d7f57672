use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ssdm::checkpoint;
use ssdm::data::{read_file, Manifest};
use ssdm::synth::{make_synthetic, SynthConfig};
use ssdm::train::{evaluate, inspect, train, TrainConfig};
use ssdm::Error;

#[derive(Parser)]
#[command(name = "ssdm", version, about = "Semi-supervised deep patch metrics for rectified stereo")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a patch metric without ground truth.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `manifest_path` from the config file.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report the winner-take-all 3-pixel error of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Generate a synthetic stereo dataset with ground truth.
    MakeSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        pairs: usize,
        #[arg(long, default_value_t = 256)]
        width: usize,
        #[arg(long, default_value_t = 128)]
        height: usize,
        #[arg(long, default_value_t = 16)]
        dmax: usize,
        /// Leave the right view radiometrically untouched.
        #[arg(long)]
        no_perturb: bool,
        /// One fronto-parallel plane at this disparity.
        #[arg(long)]
        constant_disparity: Option<usize>,
    },
    /// Dump the similarity matrix and match path of one image row.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Pair id (left image stem) or manifest index.
        #[arg(long)]
        pair: String,
        #[arg(long)]
        row: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        t_occ: usize,
    },
}

fn run(cli: Cli) -> ssdm::Result<()> {
    match cli.command {
        Command::Train { config, manifest, out } => {
            let text = String::from_utf8(read_file(&config)?)
                .map_err(|e| Error::Config(format!("{}: {e}", config.display())))?;
            let cfg = TrainConfig::parse(&text)?;
            let manifest_path = manifest
                .or_else(|| cfg.manifest_path.clone())
                .ok_or_else(|| Error::Config("no manifest given (--manifest or manifest_path)".into()))?;
            let manifest = Manifest::load(&manifest_path)?;
            let outcome = train(&cfg, &manifest, &out)?;
            if let Some(last) = outcome.epochs.last() {
                println!("epochs={} final_loss={:.6}", last.epoch, last.mean_loss);
            }
            println!("checkpoint={}", outcome.checkpoint.display());
        }
        Command::Eval { checkpoint, manifest } => {
            let net = checkpoint::load(&checkpoint)?;
            let outcome = evaluate(&net, &Manifest::load(&manifest)?)?;
            for id in &outcome.skipped {
                eprintln!("warning: {id} has no ground truth; skipped");
            }
            print!("{}", outcome.report);
            println!("{}", outcome.report.key_values());
        }
        Command::MakeSynthetic {
            out,
            seed,
            pairs,
            width,
            height,
            dmax,
            no_perturb,
            constant_disparity,
        } => {
            let cfg = SynthConfig {
                seed,
                pairs,
                width,
                height,
                d_max: dmax,
                perturb: !no_perturb,
                constant_disparity,
            };
            make_synthetic(&out, &cfg)?;
            println!("manifest={}", out.join("manifest.txt").display());
        }
        Command::Inspect {
            checkpoint,
            manifest,
            pair,
            row,
            out,
            t_occ,
        } => {
            let net = checkpoint::load(&checkpoint)?;
            let manifest = Manifest::load(&manifest)?;
            let entry = manifest
                .find(&pair)
                .ok_or_else(|| Error::Config(format!("pair `{pair}` not in manifest")))?;
            let path = inspect(&net, &entry.load_pair()?, row, t_occ, &out)?;
            println!("path_cells={} mean_energy={:.6}", path.len(), path.mean_energy);
        }
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    if err.is_numeric_error() {
        3
    } else if err.is_data_error() {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
