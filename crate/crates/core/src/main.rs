//! Command-line front end: runs individual pipeline stages or a whole
//! experiment, and ships small utilities for poking at session logs.
//!
//! Exit codes: 0 success, 2 usage, 3 bad configuration, 4 filesystem
//! failures outside any stage, 10-15 the failed stage (simulate, record,
//! preprocess, train, eval, report).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use beamfuse::bus::log::{open_log, NextFrame};
use beamfuse::bus::socket;
use beamfuse::experiment::{
    self, evaluate_checkpoint, load_experiment, preprocess_log, record_session, run_experiment,
    simulate_session, train_model, ExperimentError, Stage,
};
use beamfuse::metrics::TopKReport;
use beamfuse::sensors::{stream_name, SessionStats};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "beamfuse",
    version,
    about = "Simulated multimodal sessions and beam prediction models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a session in memory and print per-stream record counts.
    Simulate {
        /// Experiment TOML file.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a session and write its framed log.
    Record {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Log file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Align a session log into a training dataset.
    Preprocess {
        #[arg(long)]
        config: PathBuf,
        /// Session log to read.
        #[arg(long)]
        log: PathBuf,
        /// Dataset file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one ablation on a dataset and write a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Ablation name from the config's `[[ablations]]` list.
        #[arg(long)]
        ablation: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Checkpoint file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on a dataset's chronological test split.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Rebuild the report files, reusing every cached artifact.
    Report {
        #[arg(long)]
        config: PathBuf,
        /// Directory holding the experiment's artifacts.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run every stage for every (ablation, seed) pair.
    All {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Print a session log's header and per-stream frame counts.
    Inspect {
        #[arg(long)]
        log: PathBuf,
    },
    /// Serve a recorded session over a Unix socket.
    Replay {
        #[arg(long)]
        log: PathBuf,
        /// Socket path to listen on; removed and re-created.
        #[arg(long)]
        socket: PathBuf,
        /// Playback speed multiple; 0 streams flat out.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(u8::try_from(err.exit_code()).unwrap_or(1))
        }
    }
}

fn other_err<E: std::fmt::Display>(e: E) -> ExperimentError {
    ExperimentError::Io {
        context: "io".into(),
        message: e.to_string(),
    }
}

fn run(command: Command) -> Result<(), ExperimentError> {
    match command {
        Command::Simulate { config, seed } => {
            let loaded = load_experiment(&config)?;
            let stats =
                simulate_session(&loaded.scene, &loaded.codebook, &loaded.config.simulate, seed)?;
            print_stats(&stats);
            Ok(())
        }
        Command::Record { config, seed, out } => {
            let loaded = load_experiment(&config)?;
            let scene_hash = hash_of(loaded.scene_text.as_bytes());
            let config_hash = hash_of(format!("{:?}/{seed}", loaded.config.simulate).as_bytes());
            let stats = record_session(
                &loaded.scene,
                &loaded.codebook,
                &loaded.config.simulate,
                seed,
                scene_hash,
                config_hash,
                &out,
            )?;
            print_stats(&stats);
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Preprocess { config, log, out } => {
            let loaded = load_experiment(&config)?;
            let ds = preprocess_log(&log, &loaded.config.preprocess.options(), &out)?;
            println!(
                "anchors {}  kept {}  dropped {} (no bracket {}, stale {})  train {}",
                ds.anchors,
                ds.samples.len(),
                ds.drops.total(),
                ds.drops.no_bracket,
                ds.drops.stale,
                ds.train_count
            );
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Train {
            config,
            dataset,
            ablation,
            seed,
            out,
        } => {
            let loaded = load_experiment(&config)?;
            let ablation = loaded
                .config
                .ablations
                .iter()
                .find(|a| a.name == ablation)
                .ok_or_else(|| {
                    ExperimentError::Config(format!("no ablation named {ablation:?} in the config"))
                })?;
            let ds = beamfuse::align::load_dataset(&dataset)
                .map_err(|e| stage_failure(Stage::Train, e))?;
            let report = train_model(
                &ds,
                &loaded.config.model,
                ablation,
                &loaded.config.train,
                seed,
                &loaded.config.name,
                &out,
            )?;
            for (i, loss) in report.epoch_losses.iter().enumerate() {
                println!("epoch {:>3}  loss {loss:.6}", i + 1);
            }
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Eval {
            config,
            dataset,
            checkpoint,
        } => {
            let loaded = load_experiment(&config)?;
            let ds = beamfuse::align::load_dataset(&dataset)
                .map_err(|e| stage_failure(Stage::Eval, e))?;
            let (meta, report) = evaluate_checkpoint(&ds, &checkpoint, loaded.config.eval.max_k)?;
            println!("ablation {}  seed {}", meta.ablation, meta.seed);
            print_topk("model", &report);
            Ok(())
        }
        Command::Report { config, out_dir } | Command::All { config, out_dir } => {
            let outcome = run_experiment(&config, &out_dir)?;
            for row in &outcome.rows {
                println!(
                    "{:<10} seed {:<4} {}",
                    row.ablation,
                    row.seed,
                    topk_cells(&row.report)
                );
            }
            for mean in &outcome.means {
                println!(
                    "{:<10} mean      {}",
                    mean.ablation,
                    mean.accuracy
                        .iter()
                        .enumerate()
                        .map(|(i, v)| format!("top{}={v:.3}", i + 1))
                        .collect::<Vec<_>>()
                        .join("  ")
                );
            }
            for row in &outcome.baselines {
                println!(
                    "{:<10} seed {:<4} {}",
                    row.kind,
                    row.seed,
                    topk_cells(&row.report)
                );
            }
            for file in [
                experiment::REPORT_FILE,
                experiment::ABLATION_FILE,
                experiment::BASELINE_FILE,
                experiment::PLOT_FILE,
            ] {
                println!("wrote {}", out_dir.join(file).display());
            }
            Ok(())
        }
        Command::Inspect { log } => inspect_log(&log),
        Command::Replay { log, socket, speed } => replay_log(&log, &socket, speed),
    }
}

fn stage_failure<E: std::fmt::Display>(stage: Stage, e: E) -> ExperimentError {
    ExperimentError::Stage {
        stage,
        message: e.to_string(),
    }
}

fn hash_of(bytes: &[u8]) -> [u8; 32] {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).into()
}

fn print_stats(stats: &SessionStats) {
    for (id, &count) in stats.counts.iter().enumerate() {
        if count > 0 {
            println!("{:<12} {count}", stream_name(id as u8));
        }
    }
    println!("{:<12} {}", "total", stats.total());
}

fn topk_cells(report: &TopKReport) -> String {
    report
        .accuracy
        .iter()
        .enumerate()
        .map(|(i, v)| format!("top{}={v:.3}", i + 1))
        .collect::<Vec<_>>()
        .join("  ")
}

fn print_topk(name: &str, report: &TopKReport) {
    println!(
        "{name}: {} samples, {} classes, {}",
        report.samples,
        report.classes,
        topk_cells(report)
    );
}

fn inspect_log(path: &Path) -> Result<(), ExperimentError> {
    let (header, mut frames) = open_log(path).map_err(other_err)?;
    println!("version {}", header.version);
    println!("scene   {}", hex32(&header.scene_hash));
    println!("config  {}", hex32(&header.config_hash));
    println!("start   {} ns", header.start_time_ns);
    let mut counts = [0u64; 6];
    let mut other = 0u64;
    let mut truncated = false;
    loop {
        match frames.next_frame().map_err(other_err)? {
            NextFrame::Frame(rec) => match counts.get_mut(rec.stream_id as usize) {
                Some(c) => *c += 1,
                None => other += 1,
            },
            NextFrame::TornTail => {
                truncated = true;
                break;
            }
            NextFrame::End => break,
        }
    }
    for (id, &count) in counts.iter().enumerate() {
        if count > 0 {
            println!("{:<12} {count}", stream_name(id as u8));
        }
    }
    if other > 0 {
        println!("{:<12} {other}", "unknown");
    }
    if truncated {
        println!("log ends mid-frame; trailing bytes ignored");
    }
    Ok(())
}

fn replay_log(log: &Path, socket_path: &Path, speed: f64) -> Result<(), ExperimentError> {
    let session = beamfuse::bus::log::read_log(log).map_err(other_err)?;
    let listener = socket::bind(socket_path).map_err(other_err)?;
    println!(
        "serving {} records on {}",
        session.records.len(),
        socket_path.display()
    );
    let (stream, _) = listener.accept().map_err(other_err)?;
    let speed = if speed > 0.0 { Some(speed) } else { None };
    let sent = socket::send_records(stream, &session.records, speed).map_err(other_err)?;
    println!("sent {sent} records");
    Ok(())
}

fn hex32(digest: &[u8; 32]) -> String {
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
