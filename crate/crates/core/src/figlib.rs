//! FIgLib-style archive indexing: fire directories of time-stamped frames,
//! annotation sidecars, and sectioned split manifests.
//!
//! Archive layout: `<root>/<fire_id>/<frame files>` with an optional
//! `<root>/<fire_id>/annotations.json` sidecar mapping frame ids to contour
//! polygons and bounding boxes.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Frames of a complete sequence: 40 min before to 40 min after ignition,
/// spaced 60 s apart.
pub const FRAME_SPACING_SECONDS: i32 = 60;
pub const SEQUENCE_MIN_OFFSET: i32 = -2400;
pub const SEQUENCE_MAX_OFFSET: i32 = 2400;
/// Slots on the canonical grid: 81 frames.
pub const FULL_SEQUENCE_FRAMES: usize =
    ((SEQUENCE_MAX_OFFSET - SEQUENCE_MIN_OFFSET) / FRAME_SPACING_SECONDS) as usize + 1;

pub const ANNOTATION_SIDECAR: &str = "annotations.json";

#[derive(Debug, Error)]
pub enum FiglibError {
    #[error("unreadable archive directory {path}: {source}")]
    UnreadableDir {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("no signed offset token in frame name {0:?}")]
    NoOffsetToken(String),
    #[error("annotation sidecar {path} is malformed: {source}")]
    BadSidecar {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("split manifest line {line}: {msg}")]
    ManifestSyntax { line: usize, msg: String },
    #[error("split manifest: fire(s) listed in more than one section: {0:?}")]
    ManifestOverlap(Vec<String>),
    #[error("split manifest names fire(s) absent from the index: {0:?}")]
    ManifestUnknownFires(Vec<String>),
    #[error("indexed fire(s) missing from the split manifest: {0:?}")]
    ManifestUncoveredFires(Vec<String>),
}

/// A closed polygon in pixel coordinates. Vertices are (x, y).
pub type Polygon = Vec<[f64; 2]>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    #[serde(default)]
    pub contours: Vec<Polygon>,
    #[serde(default)]
    pub boxes: Vec<BoundingBox>,
}

impl AnnotationSet {
    pub fn is_empty(&self) -> bool {
        self.contours.is_empty() && self.boxes.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct FrameRecord {
    pub frame_id: String,
    pub offset_seconds: i32,
    pub image_path: PathBuf,
    /// Smoke present; always `offset_seconds >= 0` for indexed archives.
    pub image_label: bool,
    pub annotation: Option<AnnotationSet>,
}

#[derive(Debug, Clone)]
pub struct FireSequence {
    pub fire_id: String,
    pub camera_id: String,
    pub station: Option<String>,
    /// Strictly ordered by `offset_seconds`, no duplicates.
    pub frames: Vec<FrameRecord>,
    /// Frames whose names could not be parsed (skipped, counted).
    pub skipped_frames: usize,
    /// Absent slots on the canonical 60 s grid within +-40 min.
    pub missing_slots: usize,
}

impl FireSequence {
    pub fn missing_grid_offsets(&self) -> Vec<i32> {
        let present: BTreeSet<i32> = self.frames.iter().map(|f| f.offset_seconds).collect();
        (0..FULL_SEQUENCE_FRAMES)
            .map(|i| SEQUENCE_MIN_OFFSET + (i as i32) * FRAME_SPACING_SECONDS)
            .filter(|o| !present.contains(o))
            .collect()
    }
}

/// Binary image label from the frame's time offset: smoke from ignition
/// onward, so offset 0 is positive.
pub fn label_from_offset(offset_seconds: i32) -> bool {
    offset_seconds >= 0
}

/// How a frame's time offset is encoded in its file name.
///
/// The canonical writer emits a zero-padded signed-seconds token, e.g.
/// `+00060.jpg` or `fire_-02400.jpg`. Archives with a different convention
/// can select a prefixed token instead.
#[derive(Debug, Clone, Default)]
pub enum OffsetPattern {
    /// Last `+`/`-` digit run anywhere in the file stem.
    #[default]
    SignedToken,
    /// Signed digit run immediately following a fixed prefix, e.g. `t=`.
    Prefixed(String),
}

impl OffsetPattern {
    pub fn parse(&self, frame_name: &str) -> Result<i32, FiglibError> {
        let stem = frame_name
            .rsplit_once('.')
            .map_or(frame_name, |(stem, _)| stem);
        let hay = match self {
            OffsetPattern::SignedToken => stem,
            OffsetPattern::Prefixed(prefix) => match stem.rfind(prefix.as_str()) {
                Some(pos) => &stem[pos + prefix.len()..],
                None => return Err(FiglibError::NoOffsetToken(frame_name.to_string())),
            },
        };
        let bytes = hay.as_bytes();
        let mut best: Option<(usize, usize)> = None; // (start, end) of sign+digits
        let mut i = 0;
        while i < bytes.len() {
            if bytes[i] == b'+' || bytes[i] == b'-' {
                let mut j = i + 1;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                if j > i + 1 {
                    best = Some((i, j));
                    i = j;
                    continue;
                }
            }
            i += 1;
        }
        let (start, end) = best.ok_or_else(|| FiglibError::NoOffsetToken(frame_name.to_string()))?;
        hay[start..end]
            .parse::<i32>()
            .map_err(|_| FiglibError::NoOffsetToken(frame_name.to_string()))
    }
}

/// Canonical frame file name for a given offset: signed seconds, zero padded
/// to five digits.
pub fn canonical_frame_stem(offset_seconds: i32) -> String {
    format!("{offset_seconds:+06}")
}

fn is_image_file(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase),
        Some(ref e) if e == "jpg" || e == "jpeg" || e == "png"
    )
}

fn split_camera(fire_id: &str) -> (String, Option<String>) {
    let camera = fire_id.rsplit('_').next().unwrap_or(fire_id).to_string();
    let station = camera.split('-').next().filter(|s| s.len() < camera.len());
    (camera.clone(), station.map(str::to_string))
}

/// Result of walking an archive: one sequence per fire directory plus the
/// warnings produced along the way.
#[derive(Debug, Default)]
pub struct ArchiveIndex {
    pub fires: Vec<FireSequence>,
    pub warnings: Vec<String>,
}

impl ArchiveIndex {
    pub fn total_frames(&self) -> usize {
        self.fires.iter().map(|f| f.frames.len()).sum()
    }

    pub fn fire(&self, fire_id: &str) -> Option<&FireSequence> {
        self.fires.iter().find(|f| f.fire_id == fire_id)
    }
}

#[derive(Debug, Default, Deserialize, Serialize)]
struct SidecarFile(BTreeMap<String, AnnotationSet>);

fn load_sidecar(dir: &Path) -> Result<BTreeMap<String, AnnotationSet>, FiglibError> {
    let path = dir.join(ANNOTATION_SIDECAR);
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    let text = fs::read_to_string(&path).map_err(|source| FiglibError::Io {
        path: path.clone(),
        source,
    })?;
    let parsed: SidecarFile =
        serde_json::from_str(&text).map_err(|source| FiglibError::BadSidecar { path, source })?;
    Ok(parsed.0)
}

/// Walk an archive root and index every fire directory.
///
/// Frames sort by offset; unparsable names are skipped with a warning and
/// counted on the sequence. Missing frames stay missing (no interpolation).
pub fn index_archive(root: &Path, pattern: &OffsetPattern) -> Result<ArchiveIndex, FiglibError> {
    let entries = fs::read_dir(root).map_err(|source| FiglibError::UnreadableDir {
        path: root.to_path_buf(),
        source,
    })?;
    let mut dirs: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| FiglibError::UnreadableDir {
            path: root.to_path_buf(),
            source,
        })?;
        if entry.path().is_dir() {
            dirs.push(entry.path());
        }
    }
    dirs.sort();

    let mut index = ArchiveIndex::default();
    for dir in dirs {
        let fire_id = dir
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        if fire_id.is_empty() {
            continue;
        }
        let annotations = load_sidecar(&dir)?;
        let mut frames: Vec<FrameRecord> = Vec::new();
        let mut skipped = 0usize;
        let dir_entries = fs::read_dir(&dir).map_err(|source| FiglibError::UnreadableDir {
            path: dir.clone(),
            source,
        })?;
        let mut files: Vec<PathBuf> = dir_entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && is_image_file(p))
            .collect();
        files.sort();
        for file in files {
            let name = file
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default()
                .to_string();
            let frame_id = file
                .file_stem()
                .and_then(|n| n.to_str())
                .unwrap_or_default()
                .to_string();
            match pattern.parse(&name) {
                Ok(offset) => {
                    let annotation = annotations.get(&frame_id).cloned();
                    frames.push(FrameRecord {
                        frame_id,
                        offset_seconds: offset,
                        image_path: file,
                        image_label: label_from_offset(offset),
                        annotation,
                    });
                }
                Err(_) => {
                    skipped += 1;
                    index
                        .warnings
                        .push(format!("{fire_id}: skipped unparsable frame name {name:?}"));
                }
            }
        }
        frames.sort_by_key(|f| f.offset_seconds);
        // drop duplicate offsets, keeping the first
        let mut deduped: Vec<FrameRecord> = Vec::with_capacity(frames.len());
        for f in frames {
            if deduped
                .last()
                .is_some_and(|prev| prev.offset_seconds == f.offset_seconds)
            {
                skipped += 1;
                index.warnings.push(format!(
                    "{fire_id}: duplicate offset {} in frame {:?}, skipped",
                    f.offset_seconds, f.frame_id
                ));
            } else {
                deduped.push(f);
            }
        }
        let (camera_id, station) = split_camera(&fire_id);
        let mut seq = FireSequence {
            fire_id,
            camera_id,
            station,
            frames: deduped,
            skipped_frames: skipped,
            missing_slots: 0,
        };
        seq.missing_slots = seq.missing_grid_offsets().len();
        index.fires.push(seq);
    }
    index.fires.sort_by(|a, b| a.fire_id.cmp(&b.fire_id));
    Ok(index)
}

/// The four disjoint fire sets of a split manifest.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitManifest {
    pub train_fires: BTreeSet<String>,
    pub val_fires: BTreeSet<String>,
    pub test_fires: BTreeSet<String>,
    pub omitted_fires: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
    Omitted,
}

impl SplitManifest {
    pub fn set(&self, split: Split) -> &BTreeSet<String> {
        match split {
            Split::Train => &self.train_fires,
            Split::Val => &self.val_fires,
            Split::Test => &self.test_fires,
            Split::Omitted => &self.omitted_fires,
        }
    }

    pub fn split_of(&self, fire_id: &str) -> Option<Split> {
        for split in [Split::Train, Split::Val, Split::Test, Split::Omitted] {
            if self.set(split).contains(fire_id) {
                return Some(split);
            }
        }
        None
    }

    /// Render in the sectioned text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (header, set) in [
            ("[train]", &self.train_fires),
            ("[val]", &self.val_fires),
            ("[test]", &self.test_fires),
            ("[omit]", &self.omitted_fires),
        ] {
            out.push_str(header);
            out.push('\n');
            for fire in set {
                out.push_str(fire);
                out.push('\n');
            }
        }
        out
    }
}

/// Parse the sectioned plain-text manifest: `[train]`/`[val]`/`[test]`/
/// `[omit]` headers, one fire id per line, `#` comments.
pub fn parse_split_manifest(text: &str) -> Result<SplitManifest, FiglibError> {
    let mut manifest = SplitManifest::default();
    let mut current: Option<Split> = None;
    let mut overlaps: Vec<String> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line {
            "[train]" => current = Some(Split::Train),
            "[val]" => current = Some(Split::Val),
            "[test]" => current = Some(Split::Test),
            "[omit]" => current = Some(Split::Omitted),
            _ if line.starts_with('[') => {
                return Err(FiglibError::ManifestSyntax {
                    line: lineno + 1,
                    msg: format!("unknown section {line:?}"),
                });
            }
            fire => {
                let Some(split) = current else {
                    return Err(FiglibError::ManifestSyntax {
                        line: lineno + 1,
                        msg: "fire id before any section header".to_string(),
                    });
                };
                if manifest.split_of(fire).is_some() {
                    overlaps.push(fire.to_string());
                } else {
                    let set = match split {
                        Split::Train => &mut manifest.train_fires,
                        Split::Val => &mut manifest.val_fires,
                        Split::Test => &mut manifest.test_fires,
                        Split::Omitted => &mut manifest.omitted_fires,
                    };
                    set.insert(fire.to_string());
                }
            }
        }
    }
    if !overlaps.is_empty() {
        overlaps.sort();
        overlaps.dedup();
        return Err(FiglibError::ManifestOverlap(overlaps));
    }
    Ok(manifest)
}

/// Per-split fire and image counts, reported after validation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitReport {
    pub fires: BTreeMap<&'static str, usize>,
    pub images: BTreeMap<&'static str, usize>,
}

/// Load a manifest file and cross-check it against an index: the four sets
/// must be pairwise disjoint and together cover exactly the indexed fires.
pub fn load_split_manifest(
    path: &Path,
    index: &ArchiveIndex,
) -> Result<(SplitManifest, SplitReport), FiglibError> {
    let text = fs::read_to_string(path).map_err(|source| FiglibError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let manifest = parse_split_manifest(&text)?;
    validate_splits(&manifest, index).map(|report| (manifest, report))
}

pub fn validate_splits(
    manifest: &SplitManifest,
    index: &ArchiveIndex,
) -> Result<SplitReport, FiglibError> {
    let indexed: BTreeSet<&str> = index.fires.iter().map(|f| f.fire_id.as_str()).collect();
    let mut unknown: Vec<String> = Vec::new();
    for split in [Split::Train, Split::Val, Split::Test, Split::Omitted] {
        for fire in manifest.set(split) {
            if !indexed.contains(fire.as_str()) {
                unknown.push(fire.clone());
            }
        }
    }
    if !unknown.is_empty() {
        return Err(FiglibError::ManifestUnknownFires(unknown));
    }
    let uncovered: Vec<String> = index
        .fires
        .iter()
        .filter(|f| manifest.split_of(&f.fire_id).is_none())
        .map(|f| f.fire_id.clone())
        .collect();
    if !uncovered.is_empty() {
        return Err(FiglibError::ManifestUncoveredFires(uncovered));
    }
    let mut report = SplitReport::default();
    for (name, split) in [
        ("train", Split::Train),
        ("val", Split::Val),
        ("test", Split::Test),
        ("omit", Split::Omitted),
    ] {
        let fires = manifest.set(split);
        let images: usize = index
            .fires
            .iter()
            .filter(|f| fires.contains(&f.fire_id))
            .map(|f| f.frames.len())
            .sum();
        report.fires.insert(name, fires.len());
        report.images.insert(name, images);
    }
    Ok(report)
}

/// Where a frame's tile supervision comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupervisionSource {
    /// Contour polygons (or, for negative frames, the empty mask).
    Contour,
    /// Bounding boxes filled as polygons.
    BoxFill,
    /// Positive frame with no usable annotation: contributes no tile terms.
    Excluded,
}

pub fn resolve_supervision(frame: &FrameRecord) -> SupervisionSource {
    if !frame.image_label {
        return SupervisionSource::Contour;
    }
    match &frame.annotation {
        Some(a) if !a.contours.is_empty() => SupervisionSource::Contour,
        Some(a) if !a.boxes.is_empty() => SupervisionSource::BoxFill,
        _ => SupervisionSource::Excluded,
    }
}

/// Write an annotation sidecar for a fire directory.
pub fn write_sidecar(
    dir: &Path,
    annotations: &BTreeMap<String, AnnotationSet>,
) -> Result<(), FiglibError> {
    let path = dir.join(ANNOTATION_SIDECAR);
    let text = serde_json::to_string_pretty(&SidecarFile(annotations.clone()))
        .expect("annotations serialize");
    fs::write(&path, text).map_err(|source| FiglibError::Io { path, source })
}
