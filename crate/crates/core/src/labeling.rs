//! Difficulty labels: OSM `mtb:scale` extraction, grade coarsening to the
//! three classes, and per-interval label tracks with manual overrides.

use std::collections::BTreeMap;
use std::fmt;

use quick_xml::events::{BytesStart, Event};
use quick_xml::{Reader, XmlVersion};

use crate::error::{Error, Result};

/// Three-class difficulty: 0 easy (blue), 1 medium (red), 2 hard (black).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DifficultyLabel(u8);

impl DifficultyLabel {
    pub const EASY: DifficultyLabel = DifficultyLabel(0);
    pub const MEDIUM: DifficultyLabel = DifficultyLabel(1);
    pub const HARD: DifficultyLabel = DifficultyLabel(2);
    pub const COUNT: usize = 3;

    pub fn new(value: u8) -> Result<Self> {
        if value <= 2 {
            Ok(DifficultyLabel(value))
        } else {
            Err(Error::InvalidLabel(value as i64))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> [DifficultyLabel; 3] {
        [Self::EASY, Self::MEDIUM, Self::HARD]
    }
}

impl fmt::Display for DifficultyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Maps a Singletrail-Skala grade (`S0`..`S5`) or an `mtb:scale` numeral
/// (`0`..`5`, optional `+`/`-` suffix) to the three-class label.
pub fn map_grade(raw_grade: &str) -> Result<DifficultyLabel> {
    let unknown = || Error::UnknownGrade(raw_grade.to_string());
    let g = raw_grade.trim();
    let g = g.strip_prefix(['S', 's']).unwrap_or(g);
    let g = g.trim_end_matches(['+', '-']);
    let level: u8 = match g.as_bytes() {
        [d @ b'0'..=b'5'] => d - b'0',
        _ => return Err(unknown()),
    };
    Ok(match level {
        0 | 1 => DifficultyLabel::EASY,
        2 => DifficultyLabel::MEDIUM,
        _ => DifficultyLabel::HARD,
    })
}

/// Way id to raw `mtb:scale` value, for every way that carries the tag.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OsmDifficultyMap {
    pub entries: BTreeMap<i64, String>,
}

impl OsmDifficultyMap {
    pub fn get(&self, way_id: i64) -> Option<&str> {
        self.entries.get(&way_id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub const DIFFICULTY_TAG: &str = "mtb:scale";

fn attr(e: &BytesStart<'_>, name: &str) -> Result<Option<String>> {
    for a in e.attributes() {
        let a = a.map_err(|err| Error::MalformedXml(err.to_string()))?;
        if a.key.as_ref() == name {
            let v = a
                .normalized_value(XmlVersion::Implicit1_0)
                .map_err(|err| Error::MalformedXml(err.to_string()))?;
            return Ok(Some(v.into_owned()));
        }
    }
    Ok(None)
}

/// Extracts `mtb:scale` tags of `<way>` elements from an OSM XML export.
/// Nodes, relations and every other tag key are ignored.
pub fn parse_osm_difficulties(xml: &str) -> Result<OsmDifficultyMap> {
    let mut reader = Reader::from_str(xml);
    reader.config_mut().check_end_names = true;

    let mut depth = 0usize;
    let mut saw_root = false;
    let mut current_way: Option<i64> = None;
    let mut seen_ways = std::collections::BTreeSet::new();
    let mut out = OsmDifficultyMap::default();

    loop {
        let event = reader
            .read_event()
            .map_err(|e| Error::MalformedXml(format!("at byte {}: {e}", reader.buffer_position())))?;
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let is_empty = matches!(event, Event::Empty(_));
                let name = e.name();
                if depth == 0 {
                    if saw_root || name.as_ref() != "osm" {
                        return Err(Error::MalformedXml("root element must be <osm>".into()));
                    }
                    saw_root = true;
                } else if depth == 1 && name.as_ref() == "way" {
                    let id = attr(e, "id")?
                        .ok_or_else(|| Error::MalformedXml("way without id".into()))?;
                    let id: i64 = id
                        .trim()
                        .parse()
                        .map_err(|_| Error::MalformedXml(format!("bad way id {id:?}")))?;
                    if !seen_ways.insert(id) {
                        return Err(Error::DuplicateWayId(id));
                    }
                    if !is_empty {
                        current_way = Some(id);
                    }
                } else if depth == 2 && name.as_ref() == "tag" {
                    if let Some(way) = current_way {
                        if attr(e, "k")?.as_deref() == Some(DIFFICULTY_TAG) {
                            let v = attr(e, "v")?
                                .ok_or_else(|| Error::MalformedXml("tag without v".into()))?;
                            out.entries.insert(way, v);
                        }
                    }
                }
                if !is_empty {
                    depth += 1;
                }
            }
            Event::End(ref e) => {
                depth = depth.saturating_sub(1);
                if depth == 1 && e.name().as_ref() == "way" {
                    current_way = None;
                }
            }
            Event::Text(ref t) if depth == 0 => {
                if !AsRef::<str>::as_ref(t).trim().is_empty() {
                    return Err(Error::MalformedXml("text outside the root element".into()));
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if !saw_root {
        return Err(Error::MalformedXml("missing <osm> root".into()));
    }
    if depth != 0 {
        return Err(Error::MalformedXml("unclosed elements at end of input".into()));
    }
    Ok(out)
}

/// A labeled interval `[start_ms, end_ms)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub start_ms: i64,
    pub end_ms: i64,
    pub label: DifficultyLabel,
}

impl Segment {
    pub fn new(start_ms: i64, end_ms: i64, label: DifficultyLabel) -> Result<Self> {
        if start_ms >= end_ms {
            return Err(Error::InvalidInterval { start_ms, end_ms });
        }
        Ok(Segment { start_ms, end_ms, label })
    }
}

/// Sorted, non-overlapping labeled segments. Gaps are unlabeled time.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelTrack {
    segments: Vec<Segment>,
}

impl LabelTrack {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        for s in &segments {
            if s.start_ms >= s.end_ms {
                return Err(Error::InvalidInterval { start_ms: s.start_ms, end_ms: s.end_ms });
            }
        }
        for w in segments.windows(2) {
            if w[1].start_ms < w[0].end_ms {
                return Err(Error::InvalidTrack(w[1].start_ms));
            }
        }
        Ok(LabelTrack { segments })
    }

    /// One segment covering `[0, duration_ms)`.
    pub fn uniform(duration_ms: i64, label: DifficultyLabel) -> Result<Self> {
        Self::new(vec![Segment::new(0, duration_ms, label)?])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn label_at(&self, t_ms: i64) -> Option<DifficultyLabel> {
        let idx = self.segments.partition_point(|s| s.start_ms <= t_ms);
        let seg = self.segments[..idx].last()?;
        (t_ms < seg.end_ms).then_some(seg.label)
    }

    /// The label covering all of `[start_ms, end_ms)` without a gap or a
    /// label change, if there is one.
    pub fn uniform_label(&self, start_ms: i64, end_ms: i64) -> Option<DifficultyLabel> {
        let idx = self.segments.partition_point(|s| s.start_ms <= start_ms);
        let first = *self.segments[..idx].last()?;
        if start_ms >= first.end_ms {
            return None;
        }
        let mut covered = first.end_ms;
        for s in &self.segments[idx..] {
            if covered >= end_ms {
                break;
            }
            if s.start_ms != covered || s.label != first.label {
                return None;
            }
            covered = s.end_ms;
        }
        (covered >= end_ms).then_some(first.label)
    }
}

/// Free function form of [`LabelTrack::label_at`].
pub fn label_at(track: &LabelTrack, t_ms: i64) -> Option<DifficultyLabel> {
    track.label_at(t_ms)
}

/// Replaces the base labels inside every override span. Overrides apply in
/// order, so a later one wins where two overlap.
pub fn apply_overrides(track: &LabelTrack, overrides: &[Segment]) -> Result<LabelTrack> {
    let mut segments = track.segments.clone();
    for o in overrides {
        if o.start_ms >= o.end_ms {
            return Err(Error::InvalidInterval { start_ms: o.start_ms, end_ms: o.end_ms });
        }
        let mut next = Vec::with_capacity(segments.len() + 2);
        for s in segments {
            if s.end_ms <= o.start_ms || s.start_ms >= o.end_ms {
                next.push(s);
                continue;
            }
            if s.start_ms < o.start_ms {
                next.push(Segment { end_ms: o.start_ms, ..s });
            }
            if s.end_ms > o.end_ms {
                next.push(Segment { start_ms: o.end_ms, ..s });
            }
        }
        next.push(*o);
        next.sort_by_key(|s| s.start_ms);
        segments = next;
    }
    LabelTrack::new(segments)
}

/// Reads the `start_ms,end_ms,label` CSV used for both base tracks and
/// override lists. Rows are returned in file order.
pub fn parse_segments_csv(text: &str) -> Result<Vec<Segment>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::MalformedLine { line: 1, reason: e.to_string() })?;
    if header.iter().ne(["start_ms", "end_ms", "label"]) {
        return Err(Error::MalformedLine {
            line: 1,
            reason: "expected header start_ms,end_ms,label".into(),
        });
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::MalformedLine {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| -> Result<i64> {
            record
                .get(i)
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| Error::MalformedLine { line, reason: format!("bad field {}", i + 1) })
        };
        let (start, end, label) = (field(0)?, field(1)?, field(2)?);
        let label = u8::try_from(label)
            .map_err(|_| Error::InvalidLabel(label))
            .and_then(DifficultyLabel::new)?;
        out.push(Segment::new(start, end, label)?);
    }
    Ok(out)
}

pub fn parse_track_csv(text: &str) -> Result<LabelTrack> {
    let mut segs = parse_segments_csv(text)?;
    segs.sort_by_key(|s| s.start_ms);
    LabelTrack::new(segs)
}

pub fn write_track_csv(track: &LabelTrack) -> String {
    let mut out = String::from("start_ms,end_ms,label\n");
    for s in &track.segments {
        out.push_str(&format!("{},{},{}\n", s.start_ms, s.end_ms, s.label));
    }
    out
}
