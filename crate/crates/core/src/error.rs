use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    // ingest
    #[error("malformed line {line}: {reason}")]
    MalformedLine { line: u64, reason: String },
    #[error("timestamp {timestamp} ms at line {line} is not after the previous sample")]
    NonMonotonicTimestamp { line: u64, timestamp: i64 },
    #[error("sensor log has no samples")]
    EmptyLog,
    #[error("no samples left at or after the common start time in the {0} log")]
    EmptyAfterSync(String),
    #[error("resampling needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("invalid resample rate {0} Hz")]
    InvalidRate(f64),
    #[error("channel set must contain each sensor/mount pair exactly once: {0}")]
    WrongChannelSet(String),
    #[error("channels do not share a start time or rate")]
    MismatchedStart,
    #[error("manifest: {0}")]
    Manifest(String),

    // labeling
    #[error("malformed OSM XML: {0}")]
    MalformedXml(String),
    #[error("way id {0} appears more than once")]
    DuplicateWayId(i64),
    #[error("unknown difficulty grade {0:?}")]
    UnknownGrade(String),
    #[error("invalid interval [{start_ms}, {end_ms})")]
    InvalidInterval { start_ms: i64, end_ms: i64 },
    #[error("label {0} is outside 0..=2")]
    InvalidLabel(i64),
    #[error("label track segments overlap or are unsorted near {0} ms")]
    InvalidTrack(i64),

    // dataset
    #[error("invalid window config: {0}")]
    InvalidWindowConfig(String),
    #[error("session has {length} points, window needs {window}")]
    SessionTooShort { length: usize, window: usize },
    #[error("window [{start}, {start}+{len}) exceeds session length {length}")]
    OutOfRange { start: usize, len: usize, length: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFewDataSamples { needed: usize, got: usize },
    #[error("class {0} has no samples to duplicate")]
    EmptyClass(u8),

    // nn
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("batch normalization needs at least 2 values per channel in train mode")]
    DegenerateBatch,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("kernel length {kernel} exceeds window length {window}")]
    KernelTooLong { kernel: usize, window: usize },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("forward cache does not belong to the current parameters")]
    StaleCache,
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("unsupported file version or magic: {0}")]
    VersionMismatch(String),
    #[error("corrupt archive: {0}")]
    CorruptArchive(String),

    // training
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),
    #[error("non-finite loss at epoch {0}")]
    NonFiniteLoss(usize),

    // experiments
    #[error("no session is long enough for the requested windows")]
    NoUsableSessions,
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("history is empty")]
    EmptyHistory,
}
