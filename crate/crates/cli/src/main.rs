use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use utrack::contrastive::{train_embedder, TrainConfig, TrainingSequence};
use utrack::eval::{id_switches, pseudo_accuracy, uncertainty_separation};
use utrack::io;
use utrack::simulator::generate;
use utrack::tga::{augment_detections, plan_augmentation, AnchorSampling};
use utrack::tracker::{track_sequence, TrackerConfig};
use utrack::uncertainty::UncertaintyMargins;

/// Uncertainty-aware tracklet labeling and self-supervised embedding training.
#[derive(Debug, Parser)]
#[command(name = "utrack", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scene bundle.
    Simulate {
        /// `key = value` scenario file; omitted keys take their defaults.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the tracker on detections and embeddings.
    Track {
        #[arg(long)]
        dets: PathBuf,
        #[arg(long)]
        embs: PathBuf,
        /// Results file (MOT-style lines).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "on")]
        utl: Switch,
        #[arg(long, default_value_t = 0.5)]
        m1: f64,
        #[arg(long, default_value_t = 0.05)]
        m2: f64,
        #[arg(long, default_value_t = 0.1)]
        beta: f64,
        #[arg(long = "K", default_value_t = 5)]
        k: usize,
        /// Optional uncertainty log.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Score a tracking run against ground truth.
    Eval {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 100)]
        max_age: usize,
    },
    /// Print one tracklet-guided augmentation plan.
    Augment {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        frame: u32,
        #[arg(long)]
        seed: u64,
        /// Corner jitter in pixels; defaults to 2% of the anchor diagonal.
        #[arg(long)]
        jitter: Option<f64>,
    },
    /// Train a linear embedder on the bundle's raw features.
    Train {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Weights file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the uncertainty separation report of a log.
    Stats {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
}

enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

impl From<utrack::Error> for Failure {
    fn from(e: utrack::Error) -> Self {
        Failure::Data(e.into())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_frames(dets: &Path, embs: &Path) -> anyhow::Result<Vec<utrack::tracker::Frame>> {
    let mut frames = io::read_detections(dets).with_context(|| format!("reading {}", dets.display()))?;
    let fixed = io::read_embeddings(embs, &mut frames).with_context(|| format!("reading {}", embs.display()))?;
    if fixed > 0 {
        eprintln!("warning: renormalized {fixed} embeddings");
    }
    Ok(frames)
}

fn load_bundle(dir: &Path) -> anyhow::Result<io::LoadedSequence> {
    let loaded = io::load_bundle(&io::SequenceBundle::in_dir(dir))
        .with_context(|| format!("loading bundle {}", dir.display()))?;
    if loaded.renormalized > 0 {
        eprintln!("warning: renormalized {} embeddings", loaded.renormalized);
    }
    Ok(loaded)
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate { config, out } => {
            let text = io::read_text(&config)?;
            let cfg = io::parse_scenario_config(&text).context("scenario config")?;
            let scene = generate(&cfg)?;
            io::write_scene(&out, &scene)?;
            println!(
                "wrote {} frames, {} detections to {}",
                scene.frames.len(),
                scene.ground_truth.len(),
                out.display()
            );
        }
        Command::Track { dets, embs, out, utl, m1, m2, beta, k, log } => {
            let cfg = TrackerConfig {
                margins: UncertaintyMargins { m1, m2, ..Default::default() },
                beta,
                k,
                utl_enabled: utl == Switch::On,
                ..Default::default()
            };
            cfg.validate().map_err(|e| Failure::Usage(e.into()))?;
            let frames = load_frames(&dets, &embs)?;
            let run = track_sequence(&frames, &cfg)?;
            io::write_results(&run.tracklets, &out)?;
            if let Some(log) = log {
                io::write_atomic(&log, &io::format_log(&run.log))?;
            }
            println!("{} tracklets over {} frames", run.tracklets.len(), frames.len());
        }
        Command::Eval { results, gt, log, report, max_age } => {
            let tracklets = io::parse_results(&io::read_text(&results)?)?;
            let gt = io::parse_ground_truth(&io::read_text(&gt)?)?;
            let log = io::parse_log(&io::read_text(&log)?)?;
            let sep = uncertainty_separation(&log, &gt)?;
            let curve = pseudo_accuracy(&tracklets, &gt, max_age)?;
            let ids = id_switches(&tracklets, &gt)?;
            let mut text = sep.to_text();
            text.push_str(&format!("id_switches: {ids}\n"));
            if let Some(acc) = curve.at(max_age) {
                text.push_str(&format!("accuracy_at_max_age: {acc:.6}\n"));
            }
            text.push('\n');
            text.push_str(&curve.to_csv());
            io::write_atomic(&report, &text)?;
            println!("{}id_switches: {ids}", sep.to_text());
        }
        Command::Augment { bundle, frame, seed, jitter } => {
            if jitter.is_some_and(|j| !(j >= 0.0 && j.is_finite())) {
                return Err(Failure::Usage(anyhow!("--jitter must be a non-negative number")));
            }
            let loaded = load_bundle(&bundle)?;
            let run = track_sequence(&loaded.frames, &TrackerConfig::default())?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let plan = plan_augmentation(&run.tracklets, frame, jitter, None, AnchorSampling::Uncertainty, &mut rng)?;
            let current = loaded
                .frames
                .iter()
                .find(|f| f.index == frame)
                .ok_or_else(|| anyhow!("frame {frame} is not in the bundle"))?;
            print!("{}", io::format_plan(&plan, &augment_detections(&current.detections, &plan)));
        }
        Command::Train { bundle, epochs, lr, seed, out } => {
            let cfg = TrainConfig { epochs, lr, seed, ..Default::default() };
            cfg.validate().map_err(|e| Failure::Usage(e.into()))?;
            let loaded = load_bundle(&bundle)?;
            let raw =
                loaded.raw.as_ref().ok_or_else(|| anyhow!("bundle {} has no {}", bundle.display(), io::RAW_FILE))?;
            let outcome = train_embedder(&[TrainingSequence { frames: &loaded.frames, raw }], &cfg)?;
            io::write_atomic(&out, &outcome.embedder.to_text())?;
            for (k, loss) in outcome.epoch_losses.iter().enumerate() {
                println!("epoch {}: loss {loss:.6}", k + 1);
            }
        }
        Command::Stats { log, gt } => {
            let log = io::parse_log(&io::read_text(&log)?)?;
            let gt = io::parse_ground_truth(&io::read_text(&gt)?)?;
            print!("{}", uncertainty_separation(&log, &gt)?.to_text());
        }
    }
    Ok(())
}
