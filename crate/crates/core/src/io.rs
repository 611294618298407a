//! Text file formats.
//!
//! | file      | line format                                              |
//! |-----------|----------------------------------------------------------|
//! | `det.txt` | `frame,id,bb_left,bb_top,bb_width,bb_height,conf,x,y,z`  |
//! | `emb.csv` | `frame,det_index,v1,...,vD`                              |
//! | `raw.csv` | `frame,det_index,r1,...,rF`                              |
//! | `gt.txt`  | `frame,det_index,true_id`                                |
//! | results   | `frame,track_id,bb_left,bb_top,bb_width,bb_height,1,det_index,-1,-1` |
//! | log       | `frame,det_index,track_id,c1,c2,sigma,gamma,delta,stage` |
//!
//! `det_index` is the 0-based position of a detection among the lines of
//! its frame in `det.txt`. Reals are written with 6 decimals; `#` lines
//! are comments. Writes go to a temporary file that is renamed into place.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::simulator::{GroundTruth, GroundTruthRecord, ScenarioConfig, SimulatedScene};
use crate::tga::AugmentationPlan;
use crate::tracker::{Detection, Frame, LogRow, Stage, TrackRecord, Tracklet};

pub const DETECTIONS_FILE: &str = "det.txt";
pub const EMBEDDINGS_FILE: &str = "emb.csv";
pub const RAW_FILE: &str = "raw.csv";
pub const GT_FILE: &str = "gt.txt";
pub const CONFIG_FILE: &str = "config.txt";

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes via a sibling temporary file and `rename`.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let file_name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{file_name}.tmp{}", std::process::id()));
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(n, l)| {
        let l = l.trim();
        (!l.is_empty() && !l.starts_with('#')).then(|| (n + 1, l.split(',').map(str::trim).collect()))
    })
}

fn field<T: std::str::FromStr>(fields: &[&str], i: usize, line: usize, name: &str) -> Result<T> {
    let raw = fields.get(i).ok_or_else(|| Error::Parse { line, msg: format!("missing field `{name}`") })?;
    raw.parse().map_err(|_| Error::Parse { line, msg: format!("bad `{name}` value `{raw}`") })
}

fn real(fields: &[&str], i: usize, line: usize, name: &str) -> Result<f64> {
    let v: f64 = field(fields, i, line, name)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Parse { line, msg: format!("non-finite `{name}`") })
    }
}

/// Parses MOT-style detection lines. Frames are returned for every index
/// from 1 to the largest frame seen, empty where no detection exists.
/// Embeddings are left empty.
pub fn parse_detections(text: &str) -> Result<Vec<Frame>> {
    let mut by_frame: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
    for (line, f) in data_lines(text) {
        if f.len() < 7 {
            return Err(Error::Parse { line, msg: format!("expected at least 7 fields, found {}", f.len()) });
        }
        let frame: u32 = field(&f, 0, line, "frame")?;
        if frame == 0 {
            return Err(Error::Parse { line, msg: "frame indices are 1-based".into() });
        }
        let (left, top) = (real(&f, 2, line, "bb_left")?, real(&f, 3, line, "bb_top")?);
        let (w, h) = (real(&f, 4, line, "bb_width")?, real(&f, 5, line, "bb_height")?);
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::NonPositiveSize { line });
        }
        let confidence = real(&f, 6, line, "conf")?;
        let dets = by_frame.entry(frame).or_default();
        dets.push(Detection {
            frame,
            det_index: dets.len(),
            bbox: BoundingBox::from_tlwh(left, top, w, h).map_err(|_| Error::NonPositiveSize { line })?,
            confidence,
            embedding: Vec::new(),
        });
    }
    let last = by_frame.keys().next_back().copied().unwrap_or(0);
    Ok((1..=last).map(|index| Frame { index, detections: by_frame.remove(&index).unwrap_or_default() }).collect())
}

pub fn read_detections(path: &Path) -> Result<Vec<Frame>> {
    parse_detections(&read_text(path)?)
}

pub fn format_detections(frames: &[Frame]) -> String {
    let mut s = String::new();
    for f in frames {
        for d in &f.detections {
            let b = &d.bbox;
            s.push_str(&format!(
                "{},-1,{:.6},{:.6},{:.6},{:.6},{:.6},-1,-1,-1\n",
                f.index,
                b.left(),
                b.top(),
                b.w,
                b.h,
                d.confidence
            ));
        }
    }
    s
}

/// Rows of `frame,det_index,v1,...` keyed by `(frame, det_index)`.
fn parse_vectors(text: &str) -> Result<BTreeMap<(u32, usize), Vec<f64>>> {
    let mut out = BTreeMap::new();
    let mut dim: Option<usize> = None;
    for (line, f) in data_lines(text) {
        let frame: u32 = field(&f, 0, line, "frame")?;
        let det_index: usize = field(&f, 1, line, "det_index")?;
        let v: Vec<f64> = (2..f.len()).map(|i| real(&f, i, line, "component")).collect::<Result<_>>()?;
        if v.is_empty() {
            return Err(Error::Parse { line, msg: "empty vector".into() });
        }
        match dim {
            Some(d) if d != v.len() => return Err(Error::DimensionMismatch { expected: d, found: v.len() }),
            _ => dim = Some(v.len()),
        }
        if out.insert((frame, det_index), v).is_some() {
            return Err(Error::DuplicateEmbedding { frame, det_index });
        }
    }
    Ok(out)
}

fn take_vectors(frames: &[Frame], mut rows: BTreeMap<(u32, usize), Vec<f64>>) -> Result<Vec<Vec<Vec<f64>>>> {
    let out = frames
        .iter()
        .map(|f| {
            f.detections
                .iter()
                .map(|d| {
                    rows.remove(&(d.frame, d.det_index))
                        .ok_or(Error::MissingEmbedding { frame: d.frame, det_index: d.det_index })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(&(frame, det_index)) = rows.keys().next() {
        return Err(Error::Parse { line: 0, msg: format!("vector for unknown detection ({frame}, {det_index})") });
    }
    Ok(out)
}

/// Attaches unit embeddings to `frames`. Returns how many rows had to be
/// renormalized because their norm was off by more than `1e-6`.
pub fn attach_embeddings(frames: &mut [Frame], text: &str) -> Result<usize> {
    let vectors = take_vectors(frames, parse_vectors(text)?)?;
    let mut renormalized = 0;
    for (f, vs) in frames.iter_mut().zip(vectors) {
        for (d, mut v) in f.detections.iter_mut().zip(vs) {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::NonFinite("zero embedding"));
            }
            if (norm - 1.0).abs() > 1e-6 {
                renormalized += 1;
                v.iter_mut().for_each(|x| *x /= norm);
            }
            d.embedding = v;
        }
    }
    Ok(renormalized)
}

pub fn read_embeddings(path: &Path, frames: &mut [Frame]) -> Result<usize> {
    attach_embeddings(frames, &read_text(path)?)
}

/// Raw features aligned with `frames` (`[frame position][detection]`).
pub fn parse_raw_features(text: &str, frames: &[Frame]) -> Result<Vec<Vec<Vec<f64>>>> {
    take_vectors(frames, parse_vectors(text)?)
}

fn format_vector_rows<'a>(rows: impl Iterator<Item = (u32, usize, &'a [f64])>) -> String {
    let mut s = String::new();
    for (frame, det, v) in rows {
        s.push_str(&format!("{frame},{det}"));
        for x in v {
            s.push_str(&format!(",{x:.6}"));
        }
        s.push('\n');
    }
    s
}

pub fn format_embeddings(frames: &[Frame]) -> String {
    format_vector_rows(
        frames.iter().flat_map(|f| f.detections.iter().map(|d| (d.frame, d.det_index, d.embedding.as_slice()))),
    )
}

pub fn format_raw_features(frames: &[Frame], raw: &[Vec<Vec<f64>>]) -> String {
    format_vector_rows(
        frames
            .iter()
            .zip(raw)
            .flat_map(|(f, r)| f.detections.iter().zip(r).map(|(d, v)| (d.frame, d.det_index, v.as_slice()))),
    )
}

pub fn format_ground_truth(records: &[GroundTruthRecord]) -> String {
    records.iter().map(|r| format!("{},{},{}\n", r.frame, r.det_index, r.true_id)).collect()
}

pub fn parse_ground_truth(text: &str) -> Result<GroundTruth> {
    let mut records = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (line, f) in data_lines(text) {
        let r = GroundTruthRecord {
            frame: field(&f, 0, line, "frame")?,
            det_index: field(&f, 1, line, "det_index")?,
            true_id: field(&f, 2, line, "true_id")?,
        };
        if !seen.insert((r.frame, r.det_index)) {
            return Err(Error::Parse { line, msg: "duplicate (frame, det_index)".into() });
        }
        records.push(r);
    }
    Ok(GroundTruth::from_records(&records))
}

/// MOT-style result lines sorted by `(frame, track_id)`. The eighth column
/// carries the detection index so results can be joined with ground truth.
pub fn format_results(tracklets: &[Tracklet]) -> String {
    let mut rows: Vec<(u32, u32, &TrackRecord)> =
        tracklets.iter().flat_map(|t| t.records.iter().map(move |r| (r.frame, t.id, r))).collect();
    rows.sort_by_key(|r| (r.0, r.1));
    rows.iter()
        .map(|(frame, id, r)| {
            format!(
                "{frame},{id},{:.6},{:.6},{:.6},{:.6},1,{},-1,-1\n",
                r.bbox.left(),
                r.bbox.top(),
                r.bbox.w,
                r.bbox.h,
                r.det_index
            )
        })
        .collect()
}

pub fn write_results(tracklets: &[Tracklet], path: &Path) -> Result<()> {
    write_atomic(path, &format_results(tracklets))
}

/// Reads result lines back into tracklets (no embeddings, zero deltas).
pub fn parse_results(text: &str) -> Result<Vec<Tracklet>> {
    let mut by_id: BTreeMap<u32, Vec<TrackRecord>> = BTreeMap::new();
    for (line, f) in data_lines(text) {
        if f.len() < 8 {
            return Err(Error::Parse { line, msg: "result lines need a det_index column".into() });
        }
        let frame: u32 = field(&f, 0, line, "frame")?;
        let id: u32 = field(&f, 1, line, "id")?;
        let (w, h) = (real(&f, 4, line, "bb_width")?, real(&f, 5, line, "bb_height")?);
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::NonPositiveSize { line });
        }
        let bbox = BoundingBox::from_tlwh(real(&f, 2, line, "bb_left")?, real(&f, 3, line, "bb_top")?, w, h)
            .map_err(|_| Error::NonPositiveSize { line })?;
        let det_index: usize = field(&f, 7, line, "det_index")?;
        by_id.entry(id).or_default().push(TrackRecord { frame, det_index, bbox, embedding: Vec::new(), delta: 0.0 });
    }
    Ok(by_id
        .into_iter()
        .map(|(id, mut recs)| {
            recs.sort_by_key(|r| r.frame);
            Tracklet::from_records(id, recs)
        })
        .collect())
}

const LOG_HEADER: &str = "# frame,det_index,track_id,c1,c2,sigma,gamma,delta,stage\n";

pub fn format_log(log: &[LogRow]) -> String {
    let mut s = String::from(LOG_HEADER);
    for r in log {
        s.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
            r.frame,
            r.det_index,
            r.track_id,
            r.c1,
            r.c2,
            r.sigma,
            r.gamma,
            r.delta,
            r.stage.code()
        ));
    }
    s
}

pub fn parse_log(text: &str) -> Result<Vec<LogRow>> {
    data_lines(text)
        .map(|(line, f)| {
            let code: u8 = field(&f, 8, line, "stage")?;
            Ok(LogRow {
                frame: field(&f, 0, line, "frame")?,
                det_index: field(&f, 1, line, "det_index")?,
                track_id: field(&f, 2, line, "track_id")?,
                c1: real(&f, 3, line, "c1")?,
                c2: real(&f, 4, line, "c2")?,
                sigma: real(&f, 5, line, "sigma")?,
                gamma: real(&f, 6, line, "gamma")?,
                delta: real(&f, 7, line, "delta")?,
                stage: Stage::from_code(code)
                    .ok_or_else(|| Error::Parse { line, msg: format!("unknown stage {code}") })?,
            })
        })
        .collect()
}

/// Parses flat `key = value` lines; duplicate keys are errors.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) =
            line.split_once('=').ok_or_else(|| Error::Parse { line: n + 1, msg: "expected `key = value`".into() })?;
        let k = k.trim().to_string();
        if out.iter().any(|(e, _)| *e == k) {
            return Err(Error::Parse { line: n + 1, msg: format!("duplicate key `{k}`") });
        }
        out.push((k, v.trim().to_string()));
    }
    Ok(out)
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::config(key, format!("cannot parse `{v}`")))
}

/// Scenario config from `key = value` text; omitted keys keep their defaults.
pub fn parse_scenario_config(text: &str) -> Result<ScenarioConfig> {
    let mut c = ScenarioConfig::default();
    for (k, v) in parse_key_values(text)? {
        match k.as_str() {
            "num_objects" => c.num_objects = parse_value(&k, &v)?,
            "num_frames" => c.num_frames = parse_value(&k, &v)?,
            "arena_width" => c.arena.0 = parse_value(&k, &v)?,
            "arena_height" => c.arena.1 = parse_value(&k, &v)?,
            "embed_dim" => c.embed_dim = parse_value(&k, &v)?,
            "raw_dim" => c.raw_dim = parse_value(&k, &v)?,
            "appearance_noise" => c.appearance_noise = parse_value(&k, &v)?,
            "confusable_fraction" => c.confusable_fraction = parse_value(&k, &v)?,
            "occlusion_rate" => c.occlusion_rate = parse_value(&k, &v)?,
            "occlusion_noise_boost" => c.occlusion_noise_boost = parse_value(&k, &v)?,
            "dropout" => c.dropout = parse_value(&k, &v)?,
            "camera_drift" => c.camera_drift = parse_value(&k, &v)?,
            "speed" => c.speed = parse_value(&k, &v)?,
            "box_width" => c.box_size.0 = parse_value(&k, &v)?,
            "box_height" => c.box_size.1 = parse_value(&k, &v)?,
            "motion_noise" => c.motion_noise = parse_value(&k, &v)?,
            "seed" => c.seed = parse_value(&k, &v)?,
            _ => return Err(Error::config(&k, "unknown key")),
        }
    }
    c.validate()?;
    Ok(c)
}

pub fn format_scenario_config(c: &ScenarioConfig) -> String {
    format!(
        "num_objects = {}\nnum_frames = {}\narena_width = {:?}\narena_height = {:?}\nembed_dim = {}\nraw_dim = {}\n\
         appearance_noise = {:?}\nconfusable_fraction = {:?}\nocclusion_rate = {:?}\nocclusion_noise_boost = {:?}\n\
         dropout = {:?}\ncamera_drift = {:?}\nspeed = {:?}\nbox_width = {:?}\nbox_height = {:?}\nmotion_noise = {:?}\nseed = {}\n",
        c.num_objects,
        c.num_frames,
        c.arena.0,
        c.arena.1,
        c.embed_dim,
        c.raw_dim,
        c.appearance_noise,
        c.confusable_fraction,
        c.occlusion_rate,
        c.occlusion_noise_boost,
        c.dropout,
        c.camera_drift,
        c.speed,
        c.box_size.0,
        c.box_size.1,
        c.motion_noise,
        c.seed
    )
}

/// Plan header (source track, frames, coefficients) followed by one
/// `det_index,bb_left,bb_top,bb_width,bb_height` line per augmented box.
pub fn format_plan(plan: &AugmentationPlan, augmented: &[Detection]) -> String {
    let c = plan.transform.coeffs();
    let mut s = format!(
        "source_track_id: {}\ncurrent_frame: {}\ntarget_frame: {}\njitter: {:.6}\ntransform: {:.6} {:.6} {:.6} {:.6} {:.6} {:.6}\n",
        plan.source_track_id, plan.current_frame, plan.target_frame, plan.jitter_magnitude, c[0], c[1], c[2], c[3], c[4], c[5]
    );
    for d in augmented {
        let b = &d.bbox;
        s.push_str(&format!("{},{:.6},{:.6},{:.6},{:.6}\n", d.det_index, b.left(), b.top(), b.w, b.h));
    }
    s
}

/// Files of one sequence on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBundle {
    pub detections: PathBuf,
    pub embeddings: PathBuf,
    pub raw_features: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub frame_rate: Option<f64>,
}

impl SequenceBundle {
    /// Standard file names inside `dir`; optional files are kept only if present.
    pub fn in_dir(dir: &Path) -> Self {
        let opt = |name: &str| Some(dir.join(name)).filter(|p| p.exists());
        SequenceBundle {
            detections: dir.join(DETECTIONS_FILE),
            embeddings: dir.join(EMBEDDINGS_FILE),
            raw_features: opt(RAW_FILE),
            ground_truth: opt(GT_FILE),
            frame_rate: None,
        }
    }
}

/// Everything loaded from a bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSequence {
    pub frames: Vec<Frame>,
    pub raw: Option<Vec<Vec<Vec<f64>>>>,
    pub ground_truth: Option<GroundTruth>,
    pub renormalized: usize,
}

pub fn load_bundle(bundle: &SequenceBundle) -> Result<LoadedSequence> {
    let mut frames = read_detections(&bundle.detections)?;
    let renormalized = read_embeddings(&bundle.embeddings, &mut frames)?;
    let raw = match &bundle.raw_features {
        Some(p) => Some(parse_raw_features(&read_text(p)?, &frames)?),
        None => None,
    };
    let ground_truth = match &bundle.ground_truth {
        Some(p) => Some(parse_ground_truth(&read_text(p)?)?),
        None => None,
    };
    Ok(LoadedSequence { frames, raw, ground_truth, renormalized })
}

/// Writes `det.txt`, `emb.csv`, `raw.csv`, `gt.txt` and `config.txt`.
pub fn write_scene(dir: &Path, scene: &SimulatedScene) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join(DETECTIONS_FILE), &format_detections(&scene.frames))?;
    write_atomic(&dir.join(EMBEDDINGS_FILE), &format_embeddings(&scene.frames))?;
    write_atomic(&dir.join(RAW_FILE), &format_raw_features(&scene.frames, &scene.raw))?;
    write_atomic(&dir.join(GT_FILE), &format_ground_truth(&scene.ground_truth))?;
    write_atomic(&dir.join(CONFIG_FILE), &format_scenario_config(&scene.config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn detection_line_converts_corners() {
        let frames = parse_detections("1,-1,0,0,2,2,0.9,-1,-1,-1\n").unwrap();
        assert_eq!(frames.len(), 1);
        let d = &frames[0].detections[0];
        assert_eq!((d.frame, d.det_index), (1, 0));
        assert_eq!(d.bbox, BoundingBox::new(1.0, 1.0, 2.0, 2.0).unwrap());
        assert_eq!(d.confidence, 0.9);
    }

    #[test]
    fn empty_detection_file() {
        assert!(parse_detections("").unwrap().is_empty());
        assert!(parse_detections("# only a comment\n").unwrap().is_empty());
    }

    #[test]
    fn zero_width_rejected_with_line() {
        let err = parse_detections("1,-1,0,0,2,2,0.9,-1,-1,-1\n1,-1,0,0,0,2,0.9,-1,-1,-1\n").unwrap_err();
        assert!(matches!(err, Error::NonPositiveSize { line: 2 }));
    }

    #[test]
    fn malformed_lines_rejected() {
        assert!(matches!(parse_detections("1,-1,0,0,2\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_detections("x,-1,0,0,2,2,0.9\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_detections("0,-1,0,0,2,2,0.9\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn gaps_become_empty_frames() {
        let frames = parse_detections("3,-1,0,0,2,2,0.9\n1,-1,0,0,2,2,0.9\n1,-1,5,5,2,2,0.8\n").unwrap();
        assert_eq!(frames.iter().map(|f| f.detections.len()).collect::<Vec<_>>(), vec![2, 0, 1]);
        assert_eq!(frames[0].detections[1].det_index, 1);
    }

    #[test]
    fn embeddings_are_normalized() {
        let mut frames = parse_detections("1,-1,0,0,2,2,0.9\n").unwrap();
        let warnings = attach_embeddings(&mut frames, "1,0,3,4\n").unwrap();
        assert_eq!(warnings, 1);
        assert_abs_diff_eq!(frames[0].detections[0].embedding[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(frames[0].detections[0].embedding[1], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn embedding_errors() {
        let dets = "1,-1,0,0,2,2,0.9\n1,-1,4,0,2,2,0.9\n";
        let mut frames = parse_detections(dets).unwrap();
        assert!(matches!(
            attach_embeddings(&mut frames, "1,0,1,0\n"),
            Err(Error::MissingEmbedding { frame: 1, det_index: 1 })
        ));
        let mut frames = parse_detections(dets).unwrap();
        assert!(matches!(
            attach_embeddings(&mut frames, "1,0,1,0\n1,0,0,1\n1,1,1,0\n"),
            Err(Error::DuplicateEmbedding { frame: 1, det_index: 0 })
        ));
        let mut frames = parse_detections(dets).unwrap();
        assert!(matches!(attach_embeddings(&mut frames, "1,0,1,0\n1,1,1,0,0\n"), Err(Error::DimensionMismatch { .. })));
    }

    fn sample_tracklets() -> Vec<Tracklet> {
        let rec = |frame, det_index, cx| TrackRecord {
            frame,
            det_index,
            bbox: BoundingBox::new(cx, 10.0, 4.0, 8.0).unwrap(),
            embedding: vec![1.0],
            delta: 0.0,
        };
        vec![
            Tracklet::from_records(2, vec![rec(1, 1, 3.0), rec(2, 0, 4.0)]),
            Tracklet::from_records(1, vec![rec(1, 0, 20.0)]),
        ]
    }

    #[test]
    fn results_sorted_by_frame_then_id() {
        let text = format_results(&sample_tracklets());
        let keys: Vec<(u32, u32)> = text
            .lines()
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[0].parse().unwrap(), f[1].parse().unwrap())
            })
            .collect();
        assert_eq!(keys, vec![(1, 1), (1, 2), (2, 2)]);
        assert_eq!(format_results(&[]), "");
        assert_eq!(text, format_results(&sample_tracklets()));
    }

    #[test]
    fn results_round_trip_geometry() {
        let trks = sample_tracklets();
        let back = parse_results(&format_results(&trks)).unwrap();
        assert_eq!(back.len(), 2);
        let t2 = back.iter().find(|t| t.id == 2).unwrap();
        assert_eq!(t2.records.len(), 2);
        assert_eq!(t2.records[1].det_index, 0);
        assert_abs_diff_eq!(t2.records[1].bbox.cx, 4.0, epsilon = 1e-6);
        // The same lines also parse as detections.
        let dets = parse_detections(&format_results(&trks)).unwrap();
        assert_abs_diff_eq!(dets[1].detections[0].bbox.cx, 4.0, epsilon = 1e-6);
    }

    #[test]
    fn log_round_trip() {
        let rows = vec![
            LogRow {
                frame: 1,
                det_index: 0,
                track_id: 1,
                c1: 0.0,
                c2: 0.0,
                sigma: 0.0,
                gamma: 0.0,
                delta: 0.0,
                stage: Stage::Birth,
            },
            LogRow {
                frame: 2,
                det_index: 3,
                track_id: 1,
                c1: 0.9,
                c2: 0.25,
                sigma: 0.393,
                gamma: 2.59,
                delta: -2.197,
                stage: Stage::Matched,
            },
        ];
        assert_eq!(parse_log(&format_log(&rows)).unwrap(), rows);
        assert!(parse_log("1,0,1,0,0,0,0,0,7\n").is_err());
    }

    #[test]
    fn ground_truth_round_trip() {
        let recs = vec![
            GroundTruthRecord { frame: 1, det_index: 0, true_id: 4 },
            GroundTruthRecord { frame: 1, det_index: 1, true_id: 2 },
        ];
        let gt = parse_ground_truth(&format_ground_truth(&recs)).unwrap();
        assert_eq!(gt.records(), recs);
        assert!(parse_ground_truth("1,0,4\n1,0,5\n").is_err());
    }

    #[test]
    fn scenario_config_parsing() {
        let c = parse_scenario_config("# demo\nnum_objects = 5\nseed = 11 # inline\narena_width = 300\n").unwrap();
        assert_eq!(c.num_objects, 5);
        assert_eq!(c.seed, 11);
        assert_eq!(c.arena.0, 300.0);
        assert_eq!(parse_scenario_config(&format_scenario_config(&c)).unwrap(), c);

        let err = parse_scenario_config("colour = red\n").unwrap_err();
        assert!(matches!(err, Error::InvalidConfig { ref field, .. } if field == "colour"));
        assert!(parse_scenario_config("dropout = 2\n").is_err());
        assert!(parse_scenario_config("seed = 1\nseed = 2\n").is_err());
        assert!(parse_scenario_config("seed 1\n").is_err());
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = std::env::temp_dir().join(format!("utrack-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let p = dir.join("out.txt");
        write_atomic(&p, "a").unwrap();
        write_atomic(&p, "b").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "b");
        assert_eq!(fs::read_dir(&dir).unwrap().count(), 1);
        fs::remove_dir_all(&dir).unwrap();
    }
}
