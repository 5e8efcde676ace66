//! Windowed samples: sliding-window segmentation of sessions into stacked
//! `(n, 4, 3)` tensors, the train/test split, class balancing by duplication
//! and seeded shuffling.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::{SyncedSession, TARGET_RATE_HZ};
use crate::labeling::{DifficultyLabel, LabelTrack};

/// Window sizes evaluated in the experiment grid, in milliseconds.
pub const WINDOW_SIZES_MS: [u32; 5] = [1000, 2000, 5000, 10000, 20000];
pub const DEFAULT_OVERLAP: f64 = 0.75;
/// Sensor rows per sample.
pub const ROWS: usize = 4;
/// Axis channels per sensor row.
pub const AXES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowConfig {
    pub window_ms: u32,
    pub overlap_fraction: f64,
    pub rate_hz: f64,
}

impl WindowConfig {
    pub fn new(window_ms: u32) -> Self {
        WindowConfig {
            window_ms,
            overlap_fraction: DEFAULT_OVERLAP,
            rate_hz: TARGET_RATE_HZ,
        }
    }

    pub fn with_overlap(mut self, overlap_fraction: f64) -> Self {
        self.overlap_fraction = overlap_fraction;
        self
    }

    /// Grid points per window; `window_ms * rate_hz / 1000` must be a
    /// positive integer.
    pub fn window_points(&self) -> Result<usize> {
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(Error::InvalidWindowConfig(format!(
                "overlap {} outside [0, 1)",
                self.overlap_fraction
            )));
        }
        let exact = self.window_ms as f64 * self.rate_hz / 1000.0;
        let points = exact.round();
        if points < 1.0 || (exact - points).abs() > 1e-9 {
            return Err(Error::InvalidWindowConfig(format!(
                "{} ms at {} Hz is {exact} points",
                self.window_ms, self.rate_hz
            )));
        }
        Ok(points as usize)
    }

    pub fn stride(&self) -> Result<usize> {
        let w = self.window_points()?;
        Ok(stride_for(w, self.overlap_fraction))
    }
}

/// `max(1, floor(w * (1 - overlap)))`.
pub fn stride_for(window_points: usize, overlap_fraction: f64) -> usize {
    let s = (window_points as f64 * (1.0 - overlap_fraction) + 1e-9).floor() as usize;
    s.max(1)
}

/// Number of fully contained window placements: `floor((L - w) / s) + 1`.
pub fn candidate_count(length: usize, window: usize, stride: usize) -> usize {
    if length < window {
        0
    } else {
        (length - window) / stride + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Origin {
    pub session: String,
    pub start_ms: i64,
}

/// One stacked window; `data` is row-major over (time, sensor row, axis).
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub data: Vec<f64>,
    pub window_points: usize,
    pub label: DifficultyLabel,
    pub origin: Origin,
}

impl WindowSample {
    #[inline]
    pub fn at(&self, t: usize, row: usize, axis: usize) -> f64 {
        self.data[(t * ROWS + row) * AXES + axis]
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.window_points, ROWS, AXES]
    }
}

/// Copies `window_points` grid points starting at `start_index` into a
/// stacked sample.
pub fn stack_sample(
    session: &SyncedSession,
    start_index: usize,
    window_points: usize,
    label: DifficultyLabel,
) -> Result<WindowSample> {
    let end = start_index
        .checked_add(window_points)
        .filter(|&e| e <= session.length_points && window_points > 0)
        .ok_or(Error::OutOfRange {
            start: start_index,
            len: window_points,
            length: session.length_points,
        })?;
    let mut data = Vec::with_capacity(window_points * ROWS * AXES);
    for t in start_index..end {
        for ch in &session.channels {
            data.extend_from_slice(&ch.values[t]);
        }
    }
    Ok(WindowSample {
        data,
        window_points,
        label,
        origin: Origin {
            session: session.name.clone(),
            start_ms: point_time_ms(session, start_index),
        },
    })
}

fn point_time_ms(session: &SyncedSession, index: usize) -> i64 {
    (index as f64 * 1000.0 / TARGET_RATE_HZ).round() as i64 + session.start_time_ms
}

/// Cuts a session into overlapping windows. Windows whose time span is not
/// covered by a single label (a label change or unlabeled time) are dropped.
pub fn slice_windows(session: &SyncedSession, track: &LabelTrack, config: &WindowConfig) -> Result<Vec<WindowSample>> {
    let w = config.window_points()?;
    let s = stride_for(w, config.overlap_fraction);
    if session.length_points < w {
        return Err(Error::SessionTooShort {
            length: session.length_points,
            window: w,
        });
    }
    let n = candidate_count(session.length_points, w, s);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let start = k * s;
        let t0 = point_time_ms(session, start);
        let t1 = point_time_ms(session, start + w);
        if let Some(label) = track.uniform_label(t0, t1) {
            out.push(stack_sample(session, start, w, label)?);
        }
    }
    Ok(out)
}

pub fn class_histogram(samples: &[WindowSample]) -> [usize; DifficultyLabel::COUNT] {
    let mut h = [0; DifficultyLabel::COUNT];
    for s in samples {
        h[s.label.index()] += 1;
    }
    h
}

pub fn shuffle(samples: Vec<WindowSample>, seed: u64) -> Vec<WindowSample> {
    let mut samples = samples;
    samples.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    samples
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
    pub seed: u64,
}

fn train_size(total: usize, train_fraction: f64) -> usize {
    ((total as f64 * train_fraction).round() as usize).clamp(1, total - 1)
}

fn check_fraction(train_fraction: f64) -> Result<()> {
    if train_fraction > 0.0 && train_fraction < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidWindowConfig(format!("train fraction {train_fraction} outside (0, 1)")))
    }
}

/// Seeded sample-level split: shuffle, then the first `round(f * N)` go to
/// train. Both sides always get at least one sample.
pub fn split_train_test(samples: Vec<WindowSample>, train_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    check_fraction(train_fraction)?;
    if samples.len() < 2 {
        return Err(Error::TooFewDataSamples { needed: 2, got: samples.len() });
    }
    let mut samples = shuffle(samples, seed);
    let k = train_size(samples.len(), train_fraction);
    let test = samples.split_off(k);
    Ok(DatasetSplit { train: samples, test, seed })
}

/// Split by recording instead of by window: whole sessions go to one side,
/// so overlapping windows never straddle the split.
pub fn split_by_session(samples: Vec<WindowSample>, train_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    check_fraction(train_fraction)?;
    let names: BTreeSet<&str> = samples.iter().map(|s| s.origin.session.as_str()).collect();
    if names.len() < 2 {
        return Err(Error::TooFewDataSamples { needed: 2, got: names.len() });
    }
    let mut names: Vec<String> = names.into_iter().map(str::to_string).collect();
    names.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let train_names: BTreeSet<String> = names[..train_size(names.len(), train_fraction)].iter().cloned().collect();
    let (train, test) = samples
        .into_iter()
        .partition(|s| train_names.contains(&s.origin.session));
    Ok(DatasetSplit {
        train: shuffle(train, seed.wrapping_add(1)),
        test: shuffle(test, seed.wrapping_add(2)),
        seed,
    })
}

/// Raises every class to the majority count by duplicating its members:
/// whole passes over the class in origin order, then a seeded draw without
/// replacement for the remainder. Originals come first, duplicates after.
///
/// Fails with [`Error::EmptyClass`] when any of the three classes is absent;
/// use [`oversample_present`] to balance only the classes that occur.
pub fn oversample_balance(train: &[WindowSample], seed: u64) -> Result<Vec<WindowSample>> {
    let hist = class_histogram(train);
    if let Some(c) = hist.iter().position(|&n| n == 0) {
        return Err(Error::EmptyClass(c as u8));
    }
    Ok(oversample_present(train, seed))
}

/// Like [`oversample_balance`], ignoring classes with no members.
pub fn oversample_present(train: &[WindowSample], seed: u64) -> Vec<WindowSample> {
    let hist = class_histogram(train);
    let target = hist.iter().copied().max().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = train.to_vec();
    for label in DifficultyLabel::all() {
        let mut members: Vec<&WindowSample> = train.iter().filter(|s| s.label == label).collect();
        let have = members.len();
        if have == 0 || have == target {
            continue;
        }
        members.sort_by(|a, b| a.origin.cmp(&b.origin));
        let missing = target - have;
        for _ in 0..missing / have {
            out.extend(members.iter().map(|s| (*s).clone()));
        }
        let rest = missing % have;
        out.extend(members.choose_multiple(&mut rng, rest).map(|s| (*s).clone()));
    }
    out
}

const SAMPLE_MAGIC: &[u8; 4] = b"TGDS";
const SAMPLE_VERSION: u8 = 1;

/// Writes samples to the `TGDS` archive. Values are stored as little-endian
/// f32, so only f32-representable data survives the round trip unchanged.
pub fn write_sample_archive<W: Write>(mut w: W, samples: &[WindowSample]) -> Result<()> {
    let n = samples.first().map_or(0, |s| s.window_points);
    if let Some(bad) = samples.iter().find(|s| s.window_points != n) {
        return Err(Error::ShapeMismatch(format!(
            "archive holds {n}-point windows, got {}",
            bad.window_points
        )));
    }
    let mut buf = Vec::with_capacity(9 + samples.len() * (n * ROWS * AXES * 4 + 32));
    buf.extend_from_slice(SAMPLE_MAGIC);
    buf.push(SAMPLE_VERSION);
    buf.extend_from_slice(&(samples.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    for s in samples {
        buf.push(s.label.value());
        let name = s.origin.session.as_bytes();
        let name_len = u16::try_from(name.len())
            .map_err(|_| Error::InvalidWindowConfig("session name longer than 65535 bytes".into()))?;
        buf.extend_from_slice(&name_len.to_le_bytes());
        buf.extend_from_slice(name);
        buf.extend_from_slice(&s.origin.start_ms.to_le_bytes());
        for &v in &s.data {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_sample_archive<R: Read>(mut r: R) -> Result<Vec<WindowSample>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut cur = crate::codec::Cursor::new(&bytes);
    if cur.take(4).map_err(Error::CorruptArchive)? != SAMPLE_MAGIC {
        return Err(Error::VersionMismatch("not a sample archive".into()));
    }
    let version = cur.u8().map_err(Error::CorruptArchive)?;
    if version != SAMPLE_VERSION {
        return Err(Error::VersionMismatch(format!("sample archive version {version}")));
    }
    let count = cur.u32().map_err(Error::CorruptArchive)? as usize;
    let n = cur.u32().map_err(Error::CorruptArchive)? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let label = cur.u8().map_err(Error::CorruptArchive)?;
        let label = DifficultyLabel::new(label).map_err(|_| Error::CorruptArchive(format!("label {label}")))?;
        let name_len = cur.u16().map_err(Error::CorruptArchive)? as usize;
        let session = String::from_utf8(cur.take(name_len).map_err(Error::CorruptArchive)?.to_vec())
            .map_err(|_| Error::CorruptArchive("session name is not UTF-8".into()))?;
        let start_ms = cur.i64().map_err(Error::CorruptArchive)?;
        let mut data = Vec::with_capacity(n * ROWS * AXES);
        for _ in 0..n * ROWS * AXES {
            data.push(cur.f32().map_err(Error::CorruptArchive)? as f64);
        }
        out.push(WindowSample {
            data,
            window_points: n,
            label,
            origin: Origin { session, start_ms },
        });
    }
    if !cur.is_empty() {
        return Err(Error::CorruptArchive("trailing bytes".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_session, SensorChannel, CHANNEL_ORDER};
    use crate::labeling::Segment;
    use proptest::prelude::*;
    use rand::Rng;

    fn session(name: &str, len: usize, seed: u64) -> SyncedSession {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chans = CHANNEL_ORDER
            .iter()
            .map(|&(mount, kind)| SensorChannel {
                sensor_kind: kind,
                mount,
                start_time_ms: 0,
                rate_hz: 25.0,
                values: (0..len).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect(),
            })
            .collect();
        build_session(name, chans).unwrap()
    }

    fn lab(v: u8) -> DifficultyLabel {
        DifficultyLabel::new(v).unwrap()
    }

    fn labeled(counts: [usize; 3]) -> Vec<WindowSample> {
        let mut out = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            for i in 0..n {
                out.push(WindowSample {
                    data: vec![c as f64, i as f64],
                    window_points: 1,
                    label: lab(c as u8),
                    origin: Origin { session: format!("s{c}"), start_ms: i as i64 * 40 },
                });
            }
        }
        out
    }

    #[test]
    fn paper_window_points() {
        let pts: Vec<usize> = WINDOW_SIZES_MS
            .iter()
            .map(|&ms| WindowConfig::new(ms).window_points().unwrap())
            .collect();
        assert_eq!(pts, vec![25, 50, 125, 250, 500]);
        assert_eq!(WindowConfig::new(1000).stride().unwrap(), 6);
        assert_eq!(WindowConfig::new(5000).stride().unwrap(), 31);
        assert!(WindowConfig::new(1001).window_points().is_err());
        assert!(WindowConfig::new(1000).with_overlap(1.0).window_points().is_err());
        assert_eq!(WindowConfig::new(1000).with_overlap(0.99).stride().unwrap(), 1);
    }

    #[test]
    fn thirteen_windows_in_twenty_seconds() {
        let s = session("a", 500, 1);
        let track = LabelTrack::uniform(s.duration_ms(), lab(1)).unwrap();
        let starts: Vec<usize> = (0..).map(|k| k * 31).take_while(|&a| a + 125 <= 500).collect();
        assert_eq!(starts.len(), 13);
        assert_eq!(*starts.last().unwrap(), 372);
        let w = slice_windows(&s, &track, &WindowConfig::new(5000)).unwrap();
        assert_eq!(w.len(), 13);
        assert_eq!(w[12].origin.start_ms, 372 * 40);
    }

    #[test]
    fn single_placement_and_too_short() {
        let s = session("a", 125, 2);
        let track = LabelTrack::uniform(s.duration_ms(), lab(0)).unwrap();
        assert_eq!(slice_windows(&s, &track, &WindowConfig::new(5000)).unwrap().len(), 1);
        assert!(matches!(
            slice_windows(&s, &track, &WindowConfig::new(10000)),
            Err(Error::SessionTooShort { length: 125, window: 250 })
        ));
    }

    #[test]
    fn boundary_windows_dropped() {
        let s = session("a", 500, 3);
        let track = LabelTrack::new(vec![
            Segment::new(0, 10_000, lab(0)).unwrap(),
            Segment::new(10_000, 20_000, lab(2)).unwrap(),
        ])
        .unwrap();
        let cfg = WindowConfig::new(5000);
        let w = slice_windows(&s, &track, &cfg).unwrap();
        // brute force: check every candidate's span against the per-point labels
        let mut expected = Vec::new();
        for k in 0..candidate_count(500, 125, 31) {
            let a = k * 31;
            let labels: BTreeSet<_> = (a..a + 125).map(|i| track.label_at(i as i64 * 40)).collect();
            if labels.len() == 1 && labels.iter().next().unwrap().is_some() {
                expected.push((a as i64 * 40, labels.into_iter().next().unwrap().unwrap()));
            }
        }
        let got: Vec<_> = w.iter().map(|s| (s.origin.start_ms, s.label)).collect();
        assert_eq!(got, expected);
        assert!(got.len() < 13);
    }

    #[test]
    fn stack_layout() {
        let s = session("a", 10, 4);
        let one = stack_sample(&s, 3, 1, lab(1)).unwrap();
        assert_eq!(one.shape(), [1, 4, 3]);
        assert_eq!(one.data.len(), 12);
        assert_eq!(one.at(0, 0, 2), s.channels[0].values[3][2]);
        for r in 0..4 {
            for a in 0..3 {
                assert_eq!(one.at(0, r, a), s.value(3, r, a));
            }
        }
        assert!(matches!(stack_sample(&s, 8, 3, lab(0)), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn split_counts() {
        let split = split_train_test(labeled([575, 0, 0]), 0.8, 7).unwrap();
        assert_eq!((split.train.len(), split.test.len()), (460, 115));
        let split = split_train_test(labeled([10, 0, 0]), 0.8, 7).unwrap();
        assert_eq!((split.train.len(), split.test.len()), (8, 2));
        assert!(matches!(split_train_test(labeled([1, 0, 0]), 0.8, 7), Err(Error::TooFewDataSamples { .. })));
    }

    #[test]
    fn split_determinism() {
        let data = labeled([30, 30, 30]);
        let a = split_train_test(data.clone(), 0.8, 11).unwrap();
        let b = split_train_test(data.clone(), 0.8, 11).unwrap();
        assert_eq!(a, b);
        let orders: BTreeSet<Vec<Origin>> = (0..50)
            .map(|seed| {
                split_train_test(data.clone(), 0.8, seed)
                    .unwrap()
                    .train
                    .into_iter()
                    .map(|s| s.origin)
                    .collect()
            })
            .collect();
        assert_eq!(orders.len(), 50);
    }

    #[test]
    fn split_by_session_keeps_sessions_whole() {
        let mut data = Vec::new();
        for i in 0..10 {
            let s = session(&format!("ride{i}"), 200, i);
            let track = LabelTrack::uniform(s.duration_ms(), lab((i % 3) as u8)).unwrap();
            data.extend(slice_windows(&s, &track, &WindowConfig::new(2000)).unwrap());
        }
        let split = split_by_session(data, 0.8, 3).unwrap();
        let tr: BTreeSet<_> = split.train.iter().map(|s| s.origin.session.clone()).collect();
        let te: BTreeSet<_> = split.test.iter().map(|s| s.origin.session.clone()).collect();
        assert_eq!((tr.len(), te.len()), (8, 2));
        assert!(tr.is_disjoint(&te));
    }

    #[test]
    fn oversample_examples() {
        let out = oversample_balance(&labeled([2, 5, 1]), 3).unwrap();
        assert_eq!(class_histogram(&out), [5, 5, 5]);
        assert_eq!(out.len(), 15);

        let balanced = labeled([4, 4, 4]);
        assert_eq!(oversample_balance(&balanced, 3).unwrap(), balanced);

        let out = oversample_balance(&labeled([320, 560, 120]), 9).unwrap();
        assert_eq!(class_histogram(&out), [560, 560, 560]);

        assert!(matches!(oversample_balance(&labeled([3, 0, 1]), 1), Err(Error::EmptyClass(1))));
        assert_eq!(class_histogram(&oversample_present(&labeled([3, 0, 1]), 1)), [3, 0, 3]);
    }

    #[test]
    fn oversample_full_cycles_then_draw() {
        // class 2 has 2 members and needs 5 more: two full passes plus one draw
        let input = labeled([7, 7, 2]);
        let out = oversample_balance(&input, 5).unwrap();
        let dups: Vec<i64> = out[input.len()..].iter().map(|s| s.origin.start_ms).collect();
        assert_eq!(&dups[..4], &[0, 40, 0, 40]);
        assert!(dups[4] == 0 || dups[4] == 40);
        assert_eq!(&out[..input.len()], &input[..]);
    }

    #[test]
    fn histogram_basics() {
        assert_eq!(class_histogram(&[]), [0, 0, 0]);
        let mut v = labeled([1, 2, 0]);
        assert_eq!(class_histogram(&v), [1, 2, 0]);
        v.clear();
        assert!(shuffle(v, 1).is_empty());
    }

    #[test]
    fn sample_archive_round_trip() {
        let s = session("ride", 300, 5);
        let track = LabelTrack::uniform(s.duration_ms(), lab(2)).unwrap();
        let mut samples = slice_windows(&s, &track, &WindowConfig::new(2000)).unwrap();
        for smp in samples.iter_mut() {
            for v in smp.data.iter_mut() {
                *v = *v as f32 as f64;
            }
        }
        let mut buf = Vec::new();
        write_sample_archive(&mut buf, &samples).unwrap();
        let back = read_sample_archive(&buf[..]).unwrap();
        assert_eq!(back, samples);
        let mut again = Vec::new();
        write_sample_archive(&mut again, &back).unwrap();
        assert_eq!(again, buf);

        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(matches!(read_sample_archive(&bad[..]), Err(Error::VersionMismatch(_))));
        assert!(matches!(read_sample_archive(&buf[..buf.len() - 1]), Err(Error::CorruptArchive(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn window_count_law(extra in 0usize..=200, wi in 0usize..3) {
            let w = [25usize, 50, 125][wi];
            let len = w + extra;
            let s = session("p", len, extra as u64);
            let track = LabelTrack::uniform(s.duration_ms(), lab(1)).unwrap();
            let ms = (w * 40) as u32;
            let got = slice_windows(&s, &track, &WindowConfig::new(ms)).unwrap();
            let stride = (w / 4).max(1);
            let brute = (0..len).filter(|a| a % stride == 0 && a + w <= len).count();
            prop_assert_eq!(got.len(), brute);
            prop_assert_eq!(got.len(), (len - w) / stride + 1);
            for (k, smp) in got.iter().enumerate() {
                let a = k * stride;
                for t in 0..w {
                    for r in 0..4 {
                        for x in 0..3 {
                            prop_assert_eq!(smp.at(t, r, x).to_bits(), s.value(a + t, r, x).to_bits());
                        }
                    }
                }
            }
        }

        #[test]
        fn oversample_invariants(c0 in 1usize..30, c1 in 1usize..30, c2 in 1usize..30, seed in any::<u64>()) {
            let input = labeled([c0, c1, c2]);
            let out = oversample_balance(&input, seed).unwrap();
            let h = class_histogram(&out);
            let m = c0.max(c1).max(c2);
            prop_assert_eq!(h, [m, m, m]);
            prop_assert_eq!(&out[..input.len()], &input[..]);
            for d in &out[input.len()..] {
                prop_assert!(input.iter().any(|s| s == d));
            }
        }

        #[test]
        fn shuffle_is_permutation(n in 0usize..60, seed in any::<u64>()) {
            let input = labeled([n, n / 2, 1]);
            let out = shuffle(input.clone(), seed);
            prop_assert_eq!(&out, &shuffle(input.clone(), seed));
            let mut a: Vec<_> = input.iter().map(|s| s.origin.clone()).collect();
            let mut b: Vec<_> = out.iter().map(|s| s.origin.clone()).collect();
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn histogram_recount(n0 in 0usize..20, n1 in 0usize..20, n2 in 0usize..20) {
            let v = labeled([n0, n1, n2]);
            let h = class_histogram(&v);
            for c in 0..3u8 {
                prop_assert_eq!(h[c as usize], v.iter().filter(|s| s.label.value() == c).count());
            }
            prop_assert_eq!(h.iter().sum::<usize>(), v.len());
        }
    }
}
