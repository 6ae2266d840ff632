//! `loclc` command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use loclc::codec::{self, TimingRecord};
use loclc::model::save_weights;
use loclc::{CompressedStream, Error, ImageTensor, LocalModel, ModelConfig, Scheme, WeightSet};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "loclc",
    version,
    about = "Lossless image codec with a local autoregressive model"
)]
struct Cli {
    /// Worker threads; 0 picks the machine default.
    #[arg(long, global = true, env = "LOCLC_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RawShape {
    /// Height of a headerless .raw input.
    #[arg(long, requires = "width")]
    height: Option<usize>,
    /// Width of a headerless .raw input.
    #[arg(long, requires = "height")]
    width: Option<usize>,
    /// Channels of a headerless .raw input.
    #[arg(long, default_value_t = 3)]
    channels: usize,
}

impl RawShape {
    fn get(&self) -> Option<(usize, usize, usize)> {
        Some((self.height?, self.width?, self.channels))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compress a PGM/PPM (or raw) image.
    Compress {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        raw: RawShape,
    },
    /// Decompress a stream with any decoder.
    Decompress {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "shear")]
        scheme: Scheme,
    },
    /// Check that encoding is thread-independent and all decoders agree.
    Verify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[command(flatten)]
        raw: RawShape,
    },
    /// Time the decoders.
    Bench {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        image: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "seq,par,shear")]
        schemes: Vec<Scheme>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Describe a compressed stream or weight file.
    Info { file: PathBuf },
    /// Write a weight file with seeded random (or uniform-head) weights.
    GenModel {
        output: PathBuf,
        #[arg(long, default_value_t = 3)]
        horizon: usize,
        #[arg(long, default_value_t = 3)]
        channels: usize,
        #[arg(long, default_value_t = 64)]
        hidden: usize,
        #[arg(long, default_value_t = 2)]
        resblocks: usize,
        #[arg(long, default_value_t = 5)]
        mixtures: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Predict every value with equal probability (forces 128 mixtures).
        #[arg(long)]
        uniform: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
    Csv,
}

#[derive(Serialize)]
struct BenchRow {
    image: String,
    #[serde(flatten)]
    record: TimingRecord,
    /// Sequential time over this scheme's time, when the sequential row exists.
    speedup: Option<f64>,
}

fn load_model(path: &Path) -> loclc::Result<LocalModel> {
    LocalModel::from_bytes(&fs::read(path)?)
}

fn run(cli: Cli) -> loclc::Result<()> {
    let threads = cli.threads;
    match cli.command {
        Command::Compress {
            input,
            output,
            model,
            raw,
        } => {
            let model = load_model(&model)?;
            let image = ImageTensor::read(&input, raw.get())?;
            let stream = codec::encode(&image, &model, threads)?;
            fs::write(&output, stream.to_bytes())?;
            println!(
                "{}x{}x{}: {} bytes, {:.4} bpd",
                image.height(),
                image.width(),
                image.channels(),
                stream.payload.len() + codec::HEADER_LEN,
                stream.bits_per_dim()
            );
        }
        Command::Decompress {
            input,
            output,
            model,
            scheme,
        } => {
            let model = load_model(&model)?;
            let stream = CompressedStream::from_bytes(&fs::read(&input)?)?;
            let decoded = codec::decode(&stream, &model, scheme, threads)?;
            decoded.image.write(&output)?;
            println!("{scheme}: {} rounds", decoded.rounds);
        }
        Command::Verify { model, image, raw } => {
            let model = load_model(&model)?;
            let image = ImageTensor::read(&image, raw.get())?;
            let reference = codec::encode(&image, &model, 1)?;
            for t in [2, 8] {
                if codec::encode(&image, &model, t)? != reference {
                    return Err(Error::Validation(format!(
                        "encoding with {t} threads changed the bytes"
                    )));
                }
            }
            let mut identical = 0;
            for scheme in Scheme::ALL {
                let decoded = codec::decode(&reference, &model, scheme, threads)?;
                if decoded.image == image {
                    identical += 1;
                } else {
                    eprintln!("{scheme}: decoded image differs");
                }
            }
            println!("{identical}/{} schemes identical", Scheme::ALL.len());
            if identical != Scheme::ALL.len() {
                return Err(Error::Validation("decoders disagree".into()));
            }
        }
        Command::Bench {
            model,
            image,
            schemes,
            repeats,
            format,
        } => {
            let model = load_model(&model)?;
            let mut rows = Vec::new();
            for path in &image {
                let img = ImageTensor::read(path, None)?;
                let records = schemes
                    .iter()
                    .map(|&s| codec::measure(&model, &img, s, repeats, threads))
                    .collect::<loclc::Result<Vec<_>>>()?;
                let seq = records
                    .iter()
                    .find(|r| r.scheme == Scheme::Sequential)
                    .map(|r| r.wall_seconds);
                for record in records {
                    let speedup = seq.map(|s| s / record.wall_seconds.max(1e-12));
                    rows.push(BenchRow {
                        image: path.display().to_string(),
                        record,
                        speedup,
                    });
                }
            }
            print_bench(&rows, format)?;
        }
        Command::Info { file } => {
            let bytes = fs::read(&file)?;
            if bytes.starts_with(codec::MAGIC) {
                let s = CompressedStream::from_bytes(&bytes)?;
                println!(
                    "stream {}x{}x{}, horizon {}",
                    s.height, s.width, s.channels, s.horizon
                );
                println!("model  {:016x}", s.model_hash);
                println!(
                    "payload {} bytes, {:.4} bpd",
                    s.payload.len(),
                    s.bits_per_dim()
                );
            } else {
                let m = LocalModel::from_bytes(&bytes)?;
                let c = m.config();
                println!(
                    "model {:016x}: horizon {}, channels {}, hidden {}, resblocks {}, mixtures {}{}",
                    m.hash(),
                    c.horizon,
                    c.channels,
                    c.hidden,
                    c.resblocks,
                    c.mixtures,
                    if m.is_sheared() { ", sheared" } else { "" }
                );
            }
        }
        Command::GenModel {
            output,
            horizon,
            channels,
            hidden,
            resblocks,
            mixtures,
            seed,
            uniform,
        } => {
            let mixtures = if uniform { 128 } else { mixtures };
            let config = ModelConfig {
                horizon,
                channels,
                hidden,
                resblocks,
                mixtures,
            };
            config.validate()?;
            let weights = if uniform {
                WeightSet::uniform_head(&config)?
            } else {
                WeightSet::random(&config, seed)
            };
            let model = LocalModel::new(config, weights)?;
            fs::write(&output, save_weights(model.config(), model.weights()))?;
            println!("wrote {} ({:016x})", output.display(), model.hash());
        }
    }
    Ok(())
}

fn print_bench(rows: &[BenchRow], format: Format) -> loclc::Result<()> {
    match format {
        Format::Json => {
            let text =
                serde_json::to_string_pretty(rows).map_err(|e| Error::Internal(e.to_string()))?;
            println!("{text}");
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            w.write_record([
                "image",
                "scheme",
                "wall_seconds",
                "rounds",
                "bits",
                "bpd",
                "speedup",
            ])
            .map_err(|e| Error::Internal(e.to_string()))?;
            for r in rows {
                w.write_record([
                    r.image.clone(),
                    r.record.scheme.short_name().to_string(),
                    format!("{:.6}", r.record.wall_seconds),
                    r.record.rounds.to_string(),
                    r.record.bits.to_string(),
                    format!("{:.6}", r.record.bpd),
                    r.speedup.map(|s| format!("{s:.3}")).unwrap_or_default(),
                ])
                .map_err(|e| Error::Internal(e.to_string()))?;
            }
            w.flush()?;
        }
        Format::Table => {
            println!(
                "{:<24} {:<6} {:>10} {:>8} {:>10} {:>8} {:>8}",
                "image", "scheme", "seconds", "rounds", "bits", "bpd", "speedup"
            );
            for r in rows {
                let speedup = r
                    .speedup
                    .map(|s| format!("{s:.2}x"))
                    .unwrap_or_else(|| "-".into());
                println!(
                    "{:<24} {:<6} {:>10.4} {:>8} {:>10} {:>8.4} {:>8}",
                    r.image,
                    r.record.scheme.short_name(),
                    r.record.wall_seconds,
                    r.record.rounds,
                    r.record.bits,
                    r.record.bpd,
                    speedup
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors by itself.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
