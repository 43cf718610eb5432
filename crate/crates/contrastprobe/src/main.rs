use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use contrastprobe::cpm::read_model;
use contrastprobe::dataset::load_dataset;
use contrastprobe::image::decode_image;
use contrastprobe::report::{emit_reports, encode_winner_map, failures_json, write_atomically};
use contrastprobe::sweep::{run_sweep, sweep_model, Split, SweepError, SweepOptions};
use contrastprobe_core::probe::{winner_map, BinKey};
use contrastprobe_core::{adjust_contrast, ContrastLevel, ContrastSchedule, GatingMode, TapPoint};

#[derive(Parser)]
#[command(name = "contrastprobe", version, about = "Contrast-consistency analysis of CNN winner kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full sweep: accuracy, consistency matrices, aggregates, bins, reference curves.
    Sweep(SweepArgs),
    /// Accuracy per contrast level only.
    Accuracy(CommonArgs),
    /// Winner map of one layer for a single image (debugging).
    Winners(WinnersArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// CPM model file.
    #[arg(long)]
    model: PathBuf,
    /// Directory holding the images.
    #[arg(long)]
    data: PathBuf,
    /// CSV with `filename,class_id` rows.
    #[arg(long)]
    labels: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated contrast levels in percent.
    #[arg(long, default_value = "1,3,5,7,10,13,15,30,50,75,100", value_parser = parse_levels)]
    levels: ContrastSchedule,
    /// Worker threads (defaults to available parallelism).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum, default_value_t = ModeArg::Gated)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = TapArg::PreRelu)]
    tap: TapArg,
    #[arg(long, value_enum, default_value_t = BinKeyArg::HighContrast)]
    bin_key: BinKeyArg,
    #[arg(long, value_enum, default_value_t = SplitArg::Both)]
    split: SplitArg,
    /// Also write every winner map as a CPWM file under `winners/`.
    #[arg(long)]
    dump_winners: bool,
}

#[derive(Args)]
struct WinnersArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    image: PathBuf,
    /// Contrast level in percent.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u32).range(1..=100))]
    level: u32,
    /// Probed conv node id (defaults to the first probe).
    #[arg(long)]
    layer: Option<String>,
    #[arg(long, value_enum, default_value_t = TapArg::PreRelu)]
    tap: TapArg,
    /// Write the map as CPWM instead of printing a grid only.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Gated,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum TapArg {
    PreRelu,
    PostRelu,
}

#[derive(Clone, Copy, ValueEnum)]
enum BinKeyArg {
    HighContrast,
    Min,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Both,
    Correct,
    Incorrect,
}

impl From<TapArg> for TapPoint {
    fn from(t: TapArg) -> Self {
        match t {
            TapArg::PreRelu => TapPoint::PreRelu,
            TapArg::PostRelu => TapPoint::PostRelu,
        }
    }
}

fn parse_levels(s: &str) -> Result<ContrastSchedule, String> {
    s.parse().map_err(|e: contrastprobe_core::Error| e.to_string())
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn sweep(common: &CommonArgs, options: SweepOptions, dump_winners: bool) -> Result<()> {
    let model = read_model(&common.model).with_context(|| format!("loading {}", common.model.display()))?;
    let dataset = load_dataset(&common.data, &common.labels, Some(model.class_count()))?;
    match run_sweep(&model, &dataset, &options) {
        Ok(outcome) => {
            emit_reports(&outcome, &common.out, dump_winners)
                .with_context(|| format!("writing reports to {}", common.out.display()))?;
            for f in &outcome.failures {
                eprintln!("warning: skipped {}: {}", f.image_id, f.error);
            }
            Ok(())
        }
        Err(SweepError::TooManyFailures { total, failures }) => {
            write_atomically(&common.out, &[("failures.json".into(), failures_json(&failures).into_bytes())])?;
            bail!("{} of {total} images failed; see {}", failures.len(), common.out.join("failures.json").display())
        }
        Err(e) => Err(e.into()),
    }
}

fn winners(args: &WinnersArgs) -> Result<()> {
    let model = sweep_model(&read_model(&args.model)?, false)?;
    let layer = match &args.layer {
        Some(l) => l.clone(),
        None => model.probe_ids().first().cloned().context("model has no conv layers to probe")?,
    };
    let model = model.with_probes(vec![layer.clone()])?;
    let image = decode_image(&args.image)?;
    let level = ContrastLevel::new(args.level)?;
    let out = model.classify(&adjust_contrast(&image, level)?, args.tap.into())?;
    let map = winner_map(&out.taps[0]);
    println!(
        "layer {layer} at contrast {level}: class {} (confidence {}), winner map {}x{}",
        out.prediction.class_id,
        out.prediction.confidence,
        map.height(),
        map.width()
    );
    for y in 0..map.height() {
        let row: Vec<String> = (0..map.width()).map(|x| map.get(y, x).to_string()).collect();
        println!("{}", row.join(" "));
    }
    if let Some(path) = &args.out {
        write_file(path, &encode_winner_map(&map)?)?;
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sweep(a) => {
            let options = SweepOptions {
                schedule: a.common.levels.clone(),
                mode: match a.mode {
                    ModeArg::Gated => GatingMode::Gated,
                    ModeArg::All => GatingMode::All,
                },
                tap: a.tap.into(),
                bin_key: match a.bin_key {
                    BinKeyArg::HighContrast => BinKey::HighContrast,
                    BinKeyArg::Min => BinKey::Min,
                },
                split: match a.split {
                    SplitArg::Both => Split::Both,
                    SplitArg::Correct => Split::Correct,
                    SplitArg::Incorrect => Split::Incorrect,
                },
                threads: a.common.threads.unwrap_or_else(default_threads),
                accuracy_only: false,
            };
            sweep(&a.common, options, a.dump_winners)
        }
        Command::Accuracy(c) => {
            let options = SweepOptions {
                schedule: c.levels.clone(),
                threads: c.threads.unwrap_or_else(default_threads),
                accuracy_only: true,
                ..SweepOptions::default()
            };
            sweep(&c, options, false)
        }
        Command::Winners(w) => winners(&w),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
