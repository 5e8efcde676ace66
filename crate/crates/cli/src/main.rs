use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use trailgrade::dataset::{class_histogram, read_sample_archive, write_sample_archive, WindowConfig, WindowSample};
use trailgrade::experiments::{
    curves_svg, describe_samples, generate_synthetic, prepare_and_train, report_table, results_csv, run_grid,
    window_all, GridSpec, SyntheticSpec,
};
use trailgrade::ingest::{load_session, read_session_archive, write_session_archive, SessionManifest, SyncedSession};
use trailgrade::labeling::{apply_overrides, map_grade, parse_osm_difficulties, parse_segments_csv, parse_track_csv, write_track_csv, LabelTrack};
use trailgrade::nn::{load_checkpoint, save_checkpoint, ModelConfig};
use trailgrade::training::{evaluate, history_csv, TrainConfig};
use trailgrade::Error;

const SESSION_EXT: &str = "tgss";
const TRACK_SUFFIX: &str = ".labels.csv";

#[derive(Parser)]
#[command(name = "trailgrade", version, about = "Trail difficulty classification from IMU recordings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, align and resample sensor CSVs into a session archive.
    Ingest {
        /// Session manifest; repeat for several rides.
        #[arg(long = "session", required = true)]
        sessions: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Look up a way's difficulty, or apply manual overrides to a label track.
    Label(LabelArgs),
    /// Cut labeled sessions into stacked window samples.
    Window {
        /// Session archive, or a directory of `<name>.tgss` + `<name>.labels.csv` pairs.
        #[arg(long = "session", required = true)]
        sessions: Vec<PathBuf>,
        /// Label track for the archive at the same position.
        #[arg(long = "track")]
        tracks: Vec<PathBuf>,
        #[arg(long)]
        window_ms: u32,
        #[arg(long, default_value_t = 0.75)]
        overlap: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split, balance and train a model on a sample archive.
    Train {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        kernel_len: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        l2: Option<f64>,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 1500)]
        max_epochs: usize,
        #[arg(long, default_value_t = 250)]
        patience: usize,
        #[arg(long)]
        out_model: PathBuf,
        #[arg(long)]
        out_history: PathBuf,
        /// Optional SVG plot of the accuracy curves.
        #[arg(long)]
        out_curves: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// Evaluate a checkpoint on a sample archive.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out_confusion: PathBuf,
    },
    /// Run the window × kernel grid over a directory of labeled sessions.
    Grid {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1500)]
        max_epochs: usize,
        #[arg(long, default_value_t = 250)]
        patience: usize,
    },
    /// Write labeled synthetic sessions.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        sessions_per_class: usize,
        #[arg(long)]
        seconds: u32,
        #[arg(long)]
        seed: u64,
    },
}

#[derive(Args)]
struct LabelArgs {
    #[arg(long, requires = "way", conflicts_with_all = ["track", "overrides", "out"])]
    osm: Option<PathBuf>,
    #[arg(long)]
    way: Option<i64>,
    #[arg(long, requires_all = ["overrides", "out"])]
    track: Option<PathBuf>,
    #[arg(long)]
    overrides: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.into())
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::NonFiniteLoss(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn run(cmd: Command) -> CliResult {
    match cmd {
        Command::Ingest { sessions, out } => {
            let mut loaded = Vec::new();
            for path in &sessions {
                let s = load_session(&SessionManifest::load(path)?)?;
                eprintln!("{}: {} points ({} ms)", s.name, s.length_points, s.duration_ms());
                loaded.push(s);
            }
            write_session_archive(BufWriter::new(File::create(&out)?), &loaded)?;
            Ok(())
        }
        Command::Label(args) => label(args),
        Command::Window { sessions, tracks, window_ms, overlap, out } => {
            let data = load_labeled(&sessions, &tracks)?;
            let config = WindowConfig::new(window_ms).with_overlap(overlap);
            let samples = window_all(&data, &config)?;
            eprintln!("{}", describe_samples(&samples));
            write_sample_archive(BufWriter::new(File::create(&out)?), &samples)?;
            Ok(())
        }
        Command::Train {
            samples,
            kernel_len,
            seed,
            l2,
            batch,
            max_epochs,
            patience,
            out_model,
            out_history,
            out_curves,
            quiet,
        } => {
            let samples = read_samples(&samples)?;
            let mut model = ModelConfig::new(samples[0].window_points, kernel_len);
            if let Some(l2) = l2 {
                model.l2_coeff = l2;
            }
            let train_config = TrainConfig {
                batch_size: batch,
                max_epochs,
                patience,
                ..TrainConfig::new(seed)
            };
            train_config.validate()?;
            model.validate()?;
            eprintln!("{}", describe_samples(&samples));
            let run = prepare_and_train_logged(samples, &model, &train_config, seed, quiet)?;
            let r = &run.result;
            save_checkpoint(&r.best_params, &out_model)?;
            fs::write(&out_history, history_csv(&r.history))?;
            if let Some(path) = out_curves {
                fs::write(path, curves_svg(&r.history)?)?;
            }
            println!(
                "best_test_sca={} best_epoch={} epochs={} stopped_early={} train={} oversampled={} test={}",
                r.best_test_sca,
                r.best_epoch,
                r.history.len(),
                r.stopped_early,
                run.train_count,
                run.oversampled_train_count,
                run.test_count
            );
            Ok(())
        }
        Command::Eval { model, samples, out_confusion } => {
            let params = load_checkpoint(&model)?;
            let samples = read_samples(&samples)?;
            let (acc, confusion) = evaluate(&params, &samples)?;
            fs::write(&out_confusion, confusion.to_csv())?;
            println!("accuracy={acc} samples={}", samples.len());
            Ok(())
        }
        Command::Grid { data, seed, jobs, out, max_epochs, patience } => {
            if !data.is_dir() {
                return Err(Failure::Usage(format!("{} is not a directory", data.display())));
            }
            let labeled = load_labeled(&[data], &[])?;
            let mut spec = GridSpec::new(seed);
            spec.train.max_epochs = max_epochs;
            spec.train.patience = patience;
            let results = run_grid(&labeled, &spec, jobs)?;
            fs::create_dir_all(&out)?;
            let table = report_table(&results);
            print!("{table}");
            fs::write(out.join("table.txt"), &table)?;
            fs::write(out.join("results.csv"), results_csv(&results))?;
            for r in results.iter().filter(|r| !r.history.is_empty()) {
                let stem = format!("history_w{}_k{}", r.window_ms, r.kernel_len);
                fs::write(out.join(format!("{stem}.csv")), history_csv(&r.history))?;
                fs::write(out.join(format!("{stem}.svg")), curves_svg(&r.history)?)?;
            }
            Ok(())
        }
        Command::Synth { out, sessions_per_class, seconds, seed } => {
            let data = generate_synthetic(&SyntheticSpec::new(sessions_per_class, seconds, seed))?;
            fs::create_dir_all(&out)?;
            for (session, track) in &data {
                let path = out.join(format!("{}.{SESSION_EXT}", session.name));
                write_session_archive(BufWriter::new(File::create(path)?), std::slice::from_ref(session))?;
                fs::write(out.join(format!("{}{TRACK_SUFFIX}", session.name)), write_track_csv(track))?;
            }
            eprintln!("wrote {} sessions to {}", data.len(), out.display());
            Ok(())
        }
    }
}

fn prepare_and_train_logged(
    samples: Vec<WindowSample>,
    model: &ModelConfig,
    config: &TrainConfig,
    seed: u64,
    quiet: bool,
) -> Result<trailgrade::experiments::PipelineRun, Error> {
    if quiet {
        return prepare_and_train(samples, model, config, seed);
    }
    let h = class_histogram(&samples);
    eprintln!("training on classes {h:?}, kernel ({},2)", model.kernel_len);
    let run = prepare_and_train(samples, model, config, seed)?;
    for r in run.result.history.iter().filter(|r| r.epoch % 50 == 0 || r.epoch == 1) {
        eprintln!(
            "epoch {:>5} loss {:.4} train_sca {:.4} test_sca {:.4}",
            r.epoch, r.train_loss, r.train_sca, r.test_sca
        );
    }
    Ok(run)
}

fn label(args: LabelArgs) -> CliResult {
    match args {
        LabelArgs { osm: Some(osm), way: Some(way), .. } => {
            let map = parse_osm_difficulties(&fs::read_to_string(osm)?)?;
            let grade = map
                .get(way)
                .ok_or_else(|| Failure::Data(Error::UnknownGrade(format!("way {way} has no difficulty tag"))))?;
            println!("{}", map_grade(grade)?.value());
            Ok(())
        }
        LabelArgs { track: Some(track), overrides: Some(overrides), out: Some(out), .. } => {
            let track = parse_track_csv(&fs::read_to_string(track)?)?;
            let overrides = parse_segments_csv(&fs::read_to_string(overrides)?)?;
            fs::write(out, write_track_csv(&apply_overrides(&track, &overrides)?))?;
            Ok(())
        }
        _ => Err(Failure::Usage("label needs --osm/--way or --track/--overrides/--out".into())),
    }
}

fn read_archive(path: &Path) -> Result<Vec<SyncedSession>, Error> {
    read_session_archive(BufReader::new(File::open(path)?))
}

fn read_samples(path: &Path) -> Result<Vec<WindowSample>, Failure> {
    let samples = read_sample_archive(BufReader::new(File::open(path)?))?;
    if samples.is_empty() {
        return Err(Error::EmptyDataset("sample archive").into());
    }
    Ok(samples)
}

/// Sessions paired with tracks. Directories are scanned for
/// `<name>.tgss` files with a sibling `<name>.labels.csv`; archive paths
/// pair positionally with `tracks`.
fn load_labeled(sessions: &[PathBuf], tracks: &[PathBuf]) -> Result<Vec<(SyncedSession, LabelTrack)>, Failure> {
    let files: Vec<&PathBuf> = sessions.iter().filter(|p| !p.is_dir()).collect();
    if files.len() != tracks.len() {
        return Err(Failure::Usage(format!(
            "{} session archives but {} tracks",
            files.len(),
            tracks.len()
        )));
    }
    let mut out = Vec::new();
    let mut tracks = tracks.iter();
    for path in sessions {
        if path.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(path)?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<_, _>>()?;
            entries.retain(|p| p.extension().is_some_and(|e| e == SESSION_EXT));
            entries.sort();
            for archive in entries {
                let stem = archive.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
                let track_path = archive.with_file_name(format!("{stem}{TRACK_SUFFIX}"));
                let track = parse_track_csv(&fs::read_to_string(&track_path)?)?;
                for s in read_archive(&archive)? {
                    out.push((s, track.clone()));
                }
            }
        } else {
            let track = parse_track_csv(&fs::read_to_string(tracks.next().expect("counts checked"))?)?;
            for s in read_archive(path)? {
                out.push((s, track.clone()));
            }
        }
    }
    if out.is_empty() {
        return Err(Error::NoUsableSessions.into());
    }
    Ok(out)
}
