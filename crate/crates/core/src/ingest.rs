//! Sensor log parsing, start-time alignment and resampling onto the shared
//! 25 Hz grid.
//!
//! Every ride is recorded by two units (frame downtube and helmet), each
//! carrying an accelerometer (g) and a gyroscope (deg/s). The four streams
//! arrive at different rates and start times; after [`synchronize`] and
//! [`resample_linear`] they are bundled into a [`SyncedSession`] whose rows
//! are always in [`CHANNEL_ORDER`].

use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Rate every channel is resampled to.
pub const TARGET_RATE_HZ: f64 = 25.0;
/// Grid spacing at [`TARGET_RATE_HZ`].
pub const GRID_STEP_MS: i64 = 40;

const CSV_HEADER: [&str; 4] = ["timestamp_ms", "x", "y", "z"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SensorKind {
    Accelerometer,
    Gyroscope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mount {
    Frame,
    Helmet,
}

/// Row order of the stacked sample representation.
pub const CHANNEL_ORDER: [(Mount, SensorKind); 4] = [
    (Mount::Frame, SensorKind::Accelerometer),
    (Mount::Frame, SensorKind::Gyroscope),
    (Mount::Helmet, SensorKind::Accelerometer),
    (Mount::Helmet, SensorKind::Gyroscope),
];

/// Position of a sensor/mount pair in [`CHANNEL_ORDER`].
pub fn channel_index(mount: Mount, kind: SensorKind) -> usize {
    CHANNEL_ORDER
        .iter()
        .position(|&c| c == (mount, kind))
        .expect("every pair is listed")
}

impl SensorKind {
    /// Rate the vendor units deliver for this sensor.
    pub fn default_rate_hz(self) -> f64 {
        match self {
            SensorKind::Accelerometer => 12.5,
            SensorKind::Gyroscope => 25.0,
        }
    }
}

impl fmt::Display for SensorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SensorKind::Accelerometer => "accel",
            SensorKind::Gyroscope => "gyro",
        })
    }
}

impl fmt::Display for Mount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mount::Frame => "frame",
            Mount::Helmet => "helmet",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawSample {
    pub timestamp_ms: i64,
    pub xyz: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawSensorLog {
    pub sensor_kind: SensorKind,
    pub mount: Mount,
    pub samples: Vec<RawSample>,
    pub nominal_rate_hz: f64,
}

impl RawSensorLog {
    /// Milliseconds between the first and last sample.
    pub fn span_ms(&self) -> i64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.timestamp_ms - a.timestamp_ms,
            _ => 0,
        }
    }

    fn label(&self) -> String {
        format!("{}-{}", self.mount, self.sensor_kind)
    }
}

/// One sensor resampled onto a regular grid; `values[i]` belongs to
/// `start_time_ms + i * 1000 / rate_hz`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorChannel {
    pub sensor_kind: SensorKind,
    pub mount: Mount,
    pub start_time_ms: i64,
    pub rate_hz: f64,
    pub values: Vec<[f64; 3]>,
}

/// Four aligned channels in [`CHANNEL_ORDER`], truncated to a common length.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncedSession {
    pub name: String,
    pub channels: [SensorChannel; 4],
    pub length_points: usize,
    pub start_time_ms: i64,
}

impl SyncedSession {
    /// Axis `axis` of channel row `row` at grid point `point`.
    #[inline]
    pub fn value(&self, point: usize, row: usize, axis: usize) -> f64 {
        self.channels[row].values[point][axis]
    }

    pub fn duration_ms(&self) -> i64 {
        self.length_points as i64 * GRID_STEP_MS
    }
}

/// Parses a `timestamp_ms,x,y,z` sensor export.
pub fn parse_sensor_csv(text: &str, sensor_kind: SensorKind, mount: Mount) -> Result<RawSensorLog> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let header = reader.headers().map_err(|e| Error::MalformedLine {
        line: 1,
        reason: e.to_string(),
    })?;
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::MalformedLine {
            line: 1,
            reason: format!("expected header {:?}", CSV_HEADER.join(",")),
        });
    }

    let mut samples: Vec<RawSample> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::MalformedLine {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 4 {
            return Err(Error::MalformedLine {
                line,
                reason: format!("expected 4 fields, found {}", record.len()),
            });
        }
        let timestamp_ms: i64 = record[0].parse().map_err(|_| Error::MalformedLine {
            line,
            reason: format!("bad timestamp {:?}", &record[0]),
        })?;
        let mut xyz = [0.0; 3];
        for (axis, slot) in xyz.iter_mut().enumerate() {
            let field = &record[axis + 1];
            *slot = field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::MalformedLine {
                    line,
                    reason: format!("bad value {field:?}"),
                })?;
        }
        if let Some(prev) = samples.last() {
            if timestamp_ms <= prev.timestamp_ms {
                return Err(Error::NonMonotonicTimestamp { line, timestamp: timestamp_ms });
            }
        }
        samples.push(RawSample { timestamp_ms, xyz });
    }

    if samples.is_empty() {
        return Err(Error::EmptyLog);
    }
    let nominal_rate_hz = if samples.len() >= 2 {
        let span = (samples[samples.len() - 1].timestamp_ms - samples[0].timestamp_ms) as f64;
        (samples.len() - 1) as f64 * 1000.0 / span
    } else {
        sensor_kind.default_rate_hz()
    };
    Ok(RawSensorLog {
        sensor_kind,
        mount,
        samples,
        nominal_rate_hz,
    })
}

/// Writes a log in the format read by [`parse_sensor_csv`] (LF line endings).
pub fn write_sensor_csv(log: &RawSensorLog) -> String {
    let mut out = String::from("timestamp_ms,x,y,z\n");
    for s in &log.samples {
        out.push_str(&format!("{},{},{},{}\n", s.timestamp_ms, s.xyz[0], s.xyz[1], s.xyz[2]));
    }
    out
}

/// Aligns four logs to the latest first timestamp and rebases them to 0.
pub fn synchronize(logs: [RawSensorLog; 4]) -> Result<[RawSensorLog; 4]> {
    if logs.iter().any(|l| l.samples.is_empty()) {
        return Err(Error::EmptyLog);
    }
    let t0 = logs
        .iter()
        .map(|l| l.samples[0].timestamp_ms)
        .max()
        .expect("four logs");

    let mut out = logs;
    for log in out.iter_mut() {
        let keep_from = log.samples.partition_point(|s| s.timestamp_ms < t0);
        if keep_from == log.samples.len() {
            return Err(Error::EmptyAfterSync(log.label()));
        }
        log.samples.drain(..keep_from);
        for s in log.samples.iter_mut() {
            s.timestamp_ms -= t0;
        }
    }
    Ok(out)
}

/// Linearly interpolates a log onto a regular grid starting at its first
/// timestamp. Grid points past the last input sample are not produced.
pub fn resample_linear(log: &RawSensorLog, target_hz: f64) -> Result<SensorChannel> {
    if !(target_hz.is_finite() && target_hz > 0.0) {
        return Err(Error::InvalidRate(target_hz));
    }
    let samples = &log.samples;
    if samples.len() < 2 {
        return Err(Error::TooFewSamples(samples.len()));
    }
    let start = samples[0].timestamp_ms;
    let last = (samples[samples.len() - 1].timestamp_ms - start) as f64;
    let step = 1000.0 / target_hz;

    let mut values = Vec::new();
    let mut seg = 0;
    for k in 0.. {
        let t = k as f64 * step;
        if t > last + 1e-9 {
            break;
        }
        while seg + 2 < samples.len() && ((samples[seg + 1].timestamp_ms - start) as f64) < t {
            seg += 1;
        }
        let a = &samples[seg];
        let b = &samples[seg + 1];
        let ta = (a.timestamp_ms - start) as f64;
        let tb = (b.timestamp_ms - start) as f64;
        let frac = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
        let mut xyz = [0.0; 3];
        for axis in 0..3 {
            xyz[axis] = if frac == 0.0 {
                a.xyz[axis]
            } else if frac == 1.0 {
                b.xyz[axis]
            } else {
                a.xyz[axis] + frac * (b.xyz[axis] - a.xyz[axis])
            };
        }
        values.push(xyz);
    }

    Ok(SensorChannel {
        sensor_kind: log.sensor_kind,
        mount: log.mount,
        start_time_ms: start,
        rate_hz: target_hz,
        values,
    })
}

/// Orders four channels into a session and truncates them to their common length.
pub fn build_session(name: impl Into<String>, channels: Vec<SensorChannel>) -> Result<SyncedSession> {
    if channels.len() != 4 {
        return Err(Error::WrongChannelSet(format!("expected 4 channels, got {}", channels.len())));
    }
    let mut slots: [Option<SensorChannel>; 4] = [None, None, None, None];
    for ch in channels {
        let idx = channel_index(ch.mount, ch.sensor_kind);
        if slots[idx].is_some() {
            return Err(Error::WrongChannelSet(format!("duplicate {}-{}", ch.mount, ch.sensor_kind)));
        }
        slots[idx] = Some(ch);
    }
    let mut channels = slots.map(|s| s.expect("4 distinct channels fill every slot"));

    let start = channels[0].start_time_ms;
    let rate = channels[0].rate_hz;
    if channels.iter().any(|c| c.start_time_ms != start || c.rate_hz != rate) {
        return Err(Error::MismatchedStart);
    }
    let length_points = channels.iter().map(|c| c.values.len()).min().unwrap_or(0);
    if length_points == 0 {
        return Err(Error::EmptyLog);
    }
    for c in channels.iter_mut() {
        c.values.truncate(length_points);
    }
    Ok(SyncedSession {
        name: name.into(),
        channels,
        length_points,
        start_time_ms: start,
    })
}

/// Binding of the four sensor CSV files that make up one ride.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionManifest {
    pub name: String,
    /// Paths in [`CHANNEL_ORDER`].
    pub files: [PathBuf; 4],
}

const MANIFEST_KEYS: [&str; 4] = ["frame_accel", "frame_gyro", "helmet_accel", "helmet_gyro"];

impl SessionManifest {
    /// Parses `key=value` lines; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut name = None;
        let mut files: [Option<PathBuf>; 4] = Default::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with('[') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Manifest(format!("line {}: expected key=value", lineno + 1)))?;
            let key = key.trim();
            let value = value.trim().trim_matches('"');
            if key == "name" {
                name = Some(value.to_string());
            } else if let Some(idx) = MANIFEST_KEYS.iter().position(|k| *k == key) {
                if files[idx].is_some() {
                    return Err(Error::Manifest(format!("duplicate key {key}")));
                }
                files[idx] = Some(base_dir.join(value));
            } else {
                return Err(Error::Manifest(format!("unknown key {key}")));
            }
        }
        let name = name.ok_or_else(|| Error::Manifest("missing name".into()))?;
        let mut out: [PathBuf; 4] = Default::default();
        for (idx, slot) in files.into_iter().enumerate() {
            out[idx] = slot.ok_or_else(|| Error::Manifest(format!("missing {}", MANIFEST_KEYS[idx])))?;
        }
        Ok(SessionManifest { name, files: out })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

/// Linear interpolation of `log` at `t`, if `t` lies strictly inside it.
/// Lets every channel's resampling grid start exactly at the common start.
fn sample_at(log: &RawSensorLog, t: i64) -> Option<RawSample> {
    let i = log.samples.partition_point(|s| s.timestamp_ms < t);
    if i == 0 || i == log.samples.len() {
        return None;
    }
    let (a, b) = (&log.samples[i - 1], &log.samples[i]);
    let frac = (t - a.timestamp_ms) as f64 / (b.timestamp_ms - a.timestamp_ms) as f64;
    let xyz = std::array::from_fn(|axis| a.xyz[axis] + frac * (b.xyz[axis] - a.xyz[axis]));
    Some(RawSample { timestamp_ms: t, xyz })
}

/// Parses, synchronizes and resamples the four files named by a manifest.
pub fn load_session(manifest: &SessionManifest) -> Result<SyncedSession> {
    let mut logs = Vec::with_capacity(4);
    for (path, &(mount, kind)) in manifest.files.iter().zip(CHANNEL_ORDER.iter()) {
        let text = fs::read_to_string(path)?;
        logs.push(parse_sensor_csv(&text, kind, mount)?);
    }
    let logs: [RawSensorLog; 4] = logs.try_into().expect("four logs");
    let t0 = logs.iter().filter_map(|l| l.samples.first()).map(|s| s.timestamp_ms).max();
    let heads: Vec<Option<RawSample>> = match t0 {
        Some(t0) => logs.iter().map(|l| sample_at(l, t0)).collect(),
        None => vec![None; 4],
    };
    let mut synced = synchronize(logs)?;
    for (log, head) in synced.iter_mut().zip(heads) {
        if let Some(mut h) = head {
            if log.samples[0].timestamp_ms > 0 {
                h.timestamp_ms = 0;
                log.samples.insert(0, h);
            }
        }
    }
    let channels = synced
        .iter()
        .map(|log| resample_linear(log, TARGET_RATE_HZ))
        .collect::<Result<Vec<_>>>()?;
    build_session(manifest.name.clone(), channels)
}

const SESSION_MAGIC: &[u8; 4] = b"TGSS";
const SESSION_VERSION: u8 = 1;

/// Writes sessions to the binary session archive (`TGSS`, values as
/// little-endian f64 so the round trip is exact).
pub fn write_session_archive<W: Write>(mut w: W, sessions: &[SyncedSession]) -> Result<()> {
    w.write_all(SESSION_MAGIC)?;
    w.write_all(&[SESSION_VERSION])?;
    w.write_all(&(sessions.len() as u32).to_le_bytes())?;
    for s in sessions {
        let name = s.name.as_bytes();
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&s.start_time_ms.to_le_bytes())?;
        w.write_all(&(s.length_points as u32).to_le_bytes())?;
        for ch in &s.channels {
            for v in &ch.values[..s.length_points] {
                for x in v {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

pub fn read_session_archive<R: Read>(mut r: R) -> Result<Vec<SyncedSession>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut cur = crate::codec::Cursor::new(&bytes);
    let magic = cur.take(4).map_err(Error::CorruptArchive)?;
    if magic != SESSION_MAGIC {
        return Err(Error::VersionMismatch("not a session archive".into()));
    }
    let version = cur.u8().map_err(Error::CorruptArchive)?;
    if version != SESSION_VERSION {
        return Err(Error::VersionMismatch(format!("session archive version {version}")));
    }
    let count = cur.u32().map_err(Error::CorruptArchive)? as usize;
    let mut sessions = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name_len = cur.u16().map_err(Error::CorruptArchive)? as usize;
        let name = String::from_utf8(cur.take(name_len).map_err(Error::CorruptArchive)?.to_vec())
            .map_err(|_| Error::CorruptArchive("session name is not UTF-8".into()))?;
        let start_time_ms = cur.i64().map_err(Error::CorruptArchive)?;
        let length_points = cur.u32().map_err(Error::CorruptArchive)? as usize;
        let mut channels = Vec::with_capacity(4);
        for &(mount, sensor_kind) in CHANNEL_ORDER.iter() {
            let mut values = Vec::with_capacity(length_points);
            for _ in 0..length_points {
                let mut xyz = [0.0; 3];
                for x in xyz.iter_mut() {
                    *x = cur.f64().map_err(Error::CorruptArchive)?;
                }
                values.push(xyz);
            }
            channels.push(SensorChannel {
                sensor_kind,
                mount,
                start_time_ms,
                rate_hz: TARGET_RATE_HZ,
                values,
            });
        }
        sessions.push(SyncedSession {
            name,
            channels: channels.try_into().expect("four channels"),
            length_points,
            start_time_ms,
        });
    }
    if !cur.is_empty() {
        return Err(Error::CorruptArchive("trailing bytes".into()));
    }
    Ok(sessions)
}
