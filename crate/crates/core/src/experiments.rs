//! The window × kernel experiment grid, a labeled synthetic session
//! generator, and report/curve rendering.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::dataset::{
    class_histogram, oversample_present, shuffle, slice_windows, split_train_test, WindowConfig, WindowSample,
    DEFAULT_OVERLAP, WINDOW_SIZES_MS,
};
use crate::error::{Error, Result};
use crate::ingest::{build_session, SensorChannel, SyncedSession, CHANNEL_ORDER, SensorKind, TARGET_RATE_HZ};
use crate::labeling::{DifficultyLabel, LabelTrack};
use crate::nn::model::KERNEL_LENGTHS;
use crate::nn::ModelConfig;
use crate::training::{history_csv, train, EpochRecord, TrainConfig, TrainResult};

pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub window_ms_list: Vec<u32>,
    pub kernel_len_list: Vec<usize>,
    pub train: TrainConfig,
    pub seed: u64,
}

impl GridSpec {
    pub fn new(seed: u64) -> Self {
        GridSpec {
            window_ms_list: WINDOW_SIZES_MS.to_vec(),
            kernel_len_list: KERNEL_LENGTHS.to_vec(),
            train: TrainConfig::new(seed),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_ms_list.is_empty() || self.kernel_len_list.is_empty() {
            return Err(Error::InvalidSpec("window and kernel lists must be non-empty".into()));
        }
        if self.window_ms_list.contains(&0) || self.kernel_len_list.contains(&0) {
            return Err(Error::InvalidSpec("window sizes and kernel lengths must be positive".into()));
        }
        self.train.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    Completed,
    SkippedKernelTooLong,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub window_ms: u32,
    pub kernel_len: usize,
    pub window_points: usize,
    pub status: CellStatus,
    pub best_test_sca: Option<f64>,
    pub best_epoch: Option<usize>,
    pub sample_count: usize,
    pub oversampled_train_count: Option<usize>,
    pub history: Vec<EpochRecord>,
}

/// The grid's skip rule.
pub fn kernel_too_long(kernel_len: usize, window_points: usize) -> bool {
    kernel_len > window_points
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of one grid cell, independent of every other cell.
pub fn cell_seed(seed: u64, window_ms: u32, kernel_len: usize) -> u64 {
    seed ^ splitmix64(((window_ms as u64) << 32) | kernel_len as u64)
}

/// Outcome of [`prepare_and_train`].
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub result: TrainResult,
    pub train_count: usize,
    pub test_count: usize,
    pub oversampled_train_count: usize,
}

/// Split 80/20, oversample the training part, shuffle it, train. Every
/// stage draws its own seed from `seed`.
pub fn prepare_and_train(
    samples: Vec<WindowSample>,
    model: &ModelConfig,
    train_config: &TrainConfig,
    seed: u64,
) -> Result<PipelineRun> {
    let split = split_train_test(samples, TRAIN_FRACTION, splitmix64(seed))?;
    let (train_count, test_count) = (split.train.len(), split.test.len());
    let balanced = oversample_present(&split.train, splitmix64(seed ^ 1));
    let balanced = shuffle(balanced, splitmix64(seed ^ 2));
    let mut cfg = train_config.clone();
    cfg.seed = splitmix64(seed ^ 3);
    let result = train(&balanced, &split.test, model, &cfg)?;
    Ok(PipelineRun {
        result,
        train_count,
        test_count,
        oversampled_train_count: balanced.len(),
    })
}

/// Windows every session long enough for `config`, in input order.
pub fn window_all(data: &[(SyncedSession, LabelTrack)], config: &WindowConfig) -> Result<Vec<WindowSample>> {
    let w = config.window_points()?;
    let mut out = Vec::new();
    for (session, track) in data.iter().filter(|(s, _)| s.length_points >= w) {
        out.extend(slice_windows(session, track, config)?);
    }
    Ok(out)
}

fn run_cell(
    data: &[(SyncedSession, LabelTrack)],
    spec: &GridSpec,
    window_ms: u32,
    kernel_len: usize,
) -> Result<ExperimentResult> {
    let wc = WindowConfig::new(window_ms).with_overlap(DEFAULT_OVERLAP);
    let window_points = wc.window_points()?;
    let samples = window_all(data, &wc)?;
    let mut res = ExperimentResult {
        window_ms,
        kernel_len,
        window_points,
        status: CellStatus::SkippedKernelTooLong,
        best_test_sca: None,
        best_epoch: None,
        sample_count: samples.len(),
        oversampled_train_count: None,
        history: Vec::new(),
    };
    if kernel_too_long(kernel_len, window_points) {
        return Ok(res);
    }
    let run = prepare_and_train(
        samples,
        &ModelConfig::new(window_points, kernel_len),
        &spec.train,
        cell_seed(spec.seed, window_ms, kernel_len),
    )?;
    res.status = CellStatus::Completed;
    res.best_test_sca = Some(run.result.best_test_sca);
    res.best_epoch = Some(run.result.best_epoch);
    res.oversampled_train_count = Some(run.oversampled_train_count);
    res.history = run.result.history;
    Ok(res)
}

/// Runs every (window, kernel) cell with at most `jobs` cells in flight.
/// Results come back in row-major order whatever the completion order.
pub fn run_grid(data: &[(SyncedSession, LabelTrack)], spec: &GridSpec, jobs: usize) -> Result<Vec<ExperimentResult>> {
    spec.validate()?;
    let mut largest = 0;
    for &w in &spec.window_ms_list {
        largest = largest.max(WindowConfig::new(w).window_points()?);
    }
    if !data.iter().any(|(s, _)| s.length_points >= largest) {
        return Err(Error::NoUsableSessions);
    }
    let cells: Vec<(u32, usize)> = spec
        .window_ms_list
        .iter()
        .flat_map(|&w| spec.kernel_len_list.iter().map(move |&k| (w, k)))
        .collect();
    let slots: Mutex<Vec<Option<Result<ExperimentResult>>>> = Mutex::new((0..cells.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = jobs.clamp(1, cells.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(w, k)) = cells.get(i) else { break };
                let r = run_cell(data, spec, w, k);
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("workers joined")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect()
}

fn cell_text(r: &ExperimentResult) -> String {
    match (r.status, r.best_test_sca, r.best_epoch) {
        (CellStatus::Completed, Some(sca), Some(epoch)) => format!("{sca:.4} ({epoch})"),
        _ => "-".to_string(),
    }
}

/// Text grid: one row per window size, one column per kernel length, plus
/// the number of windowed samples per row.
pub fn report_table(results: &[ExperimentResult]) -> String {
    let mut windows: Vec<u32> = Vec::new();
    let mut kernels: Vec<usize> = Vec::new();
    for r in results {
        if !windows.contains(&r.window_ms) {
            windows.push(r.window_ms);
        }
        if !kernels.contains(&r.kernel_len) {
            kernels.push(r.kernel_len);
        }
    }
    let mut out = format!("{:>9} {:>6} {:>8}", "window_ms", "points", "samples");
    for k in &kernels {
        let _ = write!(out, " {:>14}", format!("({k},2)"));
    }
    out.push('\n');
    for w in &windows {
        let row: Vec<&ExperimentResult> = results.iter().filter(|r| r.window_ms == *w).collect();
        let _ = write!(out, "{:>9} {:>6} {:>8}", w, row[0].window_points, row[0].sample_count);
        for k in &kernels {
            let text = row.iter().find(|r| r.kernel_len == *k).map_or("-".to_string(), |r| cell_text(r));
            let _ = write!(out, " {text:>14}");
        }
        out.push('\n');
    }
    out
}

pub const RESULTS_HEADER: &str =
    "window_ms,kernel_len,window_points,status,best_test_sca,best_epoch,sample_count,oversampled_train_count";

pub fn results_csv(results: &[ExperimentResult]) -> String {
    let mut out = format!("{RESULTS_HEADER}\n");
    for r in results {
        let status = match r.status {
            CellStatus::Completed => "completed",
            CellStatus::SkippedKernelTooLong => "skipped_kernel_too_long",
        };
        let opt = |v: Option<String>| v.unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.window_ms,
            r.kernel_len,
            r.window_points,
            status,
            opt(r.best_test_sca.map(|v| v.to_string())),
            opt(r.best_epoch.map(|v| v.to_string())),
            r.sample_count,
            opt(r.oversampled_train_count.map(|v| v.to_string())),
        );
    }
    out
}

/// CSV of a training history.
pub fn curves_csv(history: &[EpochRecord]) -> Result<String> {
    if history.is_empty() {
        return Err(Error::EmptyHistory);
    }
    Ok(history_csv(history))
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 400.0;
const MARGIN: f64 = 40.0;

/// Line plot of train (blue) and test (red) accuracy over epochs.
pub fn curves_svg(history: &[EpochRecord]) -> Result<String> {
    if history.is_empty() {
        return Err(Error::EmptyHistory);
    }
    let max_epoch = history.iter().map(|r| r.epoch).max().unwrap_or(1);
    let x = |epoch: usize| {
        if max_epoch <= 1 {
            MARGIN
        } else {
            MARGIN + (epoch as f64 - 1.0) / (max_epoch as f64 - 1.0) * (SVG_W - 2.0 * MARGIN)
        }
    };
    let y = |v: f64| SVG_H - MARGIN - v.clamp(0.0, 1.0) * (SVG_H - 2.0 * MARGIN);
    let line = |pick: fn(&EpochRecord) -> f64| {
        history
            .iter()
            .map(|r| format!("{:.2},{:.2}", x(r.epoch), y(pick(r))))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let (x0, x1, y0, y1) = (MARGIN, SVG_W - MARGIN, MARGIN, SVG_H - MARGIN);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<path d="M{x0},{y0} L{x0},{y1} L{x1},{y1}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    let _ = writeln!(svg, r#"<text x="{x0}" y="{}" font-size="12">1</text>"#, y0 - 5.0);
    let _ = writeln!(svg, r#"<text x="{x1}" y="{}" font-size="12" text-anchor="end">epoch {max_epoch}</text>"#, y1 + 15.0);
    let _ = writeln!(
        svg,
        r#"<polyline id="train_sca" fill="none" stroke="blue" stroke-width="1.5" points="{}"/>"#,
        line(|r| r.train_sca)
    );
    let _ = writeln!(
        svg,
        r#"<polyline id="test_sca" fill="none" stroke="red" stroke-width="1.5" points="{}"/>"#,
        line(|r| r.test_sca)
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Per-class signal parameters of the synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassSignature {
    /// Vibration amplitude in g.
    pub amplitude_g: f64,
    pub frequency_hz: f64,
    /// Gyroscope swing in deg/s.
    pub gyro_swing_dps: f64,
    /// Mean impulses per second.
    pub impulse_rate_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub sessions_per_class: usize,
    pub session_seconds: u32,
    pub signatures: [ClassSignature; DifficultyLabel::COUNT],
    pub noise_std: f64,
    pub seed: u64,
}

/// Helmet signals are the frame signals damped by this factor.
pub const HELMET_DAMPING: f64 = 0.6;
pub const GRAVITY_G: f64 = 1.0;

impl SyntheticSpec {
    pub fn new(sessions_per_class: usize, session_seconds: u32, seed: u64) -> Self {
        let sig = |amplitude_g, frequency_hz, gyro_swing_dps, impulse_rate_hz| ClassSignature {
            amplitude_g,
            frequency_hz,
            gyro_swing_dps,
            impulse_rate_hz,
        };
        SyntheticSpec {
            sessions_per_class,
            session_seconds,
            signatures: [sig(0.1, 2.0, 20.0, 0.2), sig(0.4, 4.0, 60.0, 0.5), sig(1.0, 6.0, 150.0, 1.0)],
            noise_std: 0.05,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sessions_per_class == 0 || self.session_seconds == 0 {
            return Err(Error::InvalidSpec("sessions per class and seconds must be positive".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::InvalidSpec(format!("noise std {}", self.noise_std)));
        }
        for s in &self.signatures {
            let positive = [s.amplitude_g, s.frequency_hz, s.gyro_swing_dps]
                .iter()
                .all(|v| *v > 0.0 && v.is_finite());
            if !positive || !(s.impulse_rate_hz >= 0.0 && s.impulse_rate_hz.is_finite()) {
                return Err(Error::InvalidSpec(format!("bad class signature {s:?}")));
            }
            if s.frequency_hz >= TARGET_RATE_HZ / 2.0 {
                return Err(Error::InvalidSpec(format!("{} Hz aliases at the sample rate", s.frequency_hz)));
            }
        }
        for (i, a) in self.signatures.iter().enumerate() {
            if self.signatures[i + 1..].contains(a) {
                return Err(Error::InvalidSpec("class signatures must differ".into()));
            }
        }
        Ok(())
    }
}

/// Point indices of a Poisson impulse train over `len` points.
fn impulse_points(rate_hz: f64, len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut out = Vec::new();
    if rate_hz <= 0.0 {
        return out;
    }
    let gaps = Exp::new(rate_hz).expect("positive rate");
    let mut t = 0.0;
    loop {
        t += gaps.sample(rng);
        let idx = (t * TARGET_RATE_HZ).floor() as usize;
        if idx >= len {
            return out;
        }
        out.push(idx);
    }
}

fn synth_session(name: String, sig: &ClassSignature, spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Result<SyncedSession> {
    let len = spec.session_seconds as usize * TARGET_RATE_HZ as usize;
    let noise = Normal::new(0.0, spec.noise_std).expect("validated noise");
    let impulses = impulse_points(sig.impulse_rate_hz, len, rng);
    let mut channels = Vec::with_capacity(4);
    for (mount, kind) in CHANNEL_ORDER {
        let gain = if mount == crate::ingest::Mount::Helmet { HELMET_DAMPING } else { 1.0 };
        let (amp, freq) = match kind {
            SensorKind::Accelerometer => (sig.amplitude_g * gain, sig.frequency_hz),
            SensorKind::Gyroscope => (sig.gyro_swing_dps * gain, sig.frequency_hz / 2.0),
        };
        let phases: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.0..std::f64::consts::TAU));
        let mut values = Vec::with_capacity(len);
        for i in 0..len {
            let t = i as f64 / TARGET_RATE_HZ;
            let xyz: [f64; 3] = std::array::from_fn(|a| {
                let mut v = amp * (std::f64::consts::TAU * freq * t + phases[a]).sin();
                if kind == SensorKind::Accelerometer && a == 2 {
                    v += GRAVITY_G;
                }
                v
            });
            values.push(xyz);
        }
        if kind == SensorKind::Accelerometer {
            for &i in &impulses {
                for v in values[i].iter_mut() {
                    *v += 3.0 * amp;
                }
            }
        }
        if spec.noise_std > 0.0 {
            for xyz in values.iter_mut() {
                for v in xyz.iter_mut() {
                    *v += noise.sample(rng);
                }
            }
        }
        channels.push(SensorChannel {
            sensor_kind: kind,
            mount,
            start_time_ms: 0,
            rate_hz: TARGET_RATE_HZ,
            values,
        });
    }
    build_session(name, channels)
}

/// Labeled synthetic sessions, `sessions_per_class` per class in class
/// order. Each session carries one label over its whole span.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<(SyncedSession, LabelTrack)>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.sessions_per_class * DifficultyLabel::COUNT);
    for label in DifficultyLabel::all() {
        let sig = &spec.signatures[label.index()];
        for i in 0..spec.sessions_per_class {
            let session = synth_session(format!("synth-c{}-{i:03}", label.value()), sig, spec, &mut rng)?;
            let track = LabelTrack::uniform(session.duration_ms(), label)?;
            out.push((session, track));
        }
    }
    Ok(out)
}

/// Per-class window counts, for reporting.
pub fn describe_samples(samples: &[WindowSample]) -> String {
    let h = class_histogram(samples);
    format!("{} samples (class 0: {}, class 1: {}, class 2: {})", samples.len(), h[0], h[1], h[2])
}
