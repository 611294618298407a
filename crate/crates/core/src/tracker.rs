//! Online tracking-by-association with uncertainty-aware labeling.
//!
//! Each frame runs four stages:
//!
//! 1. **Association**: cosine similarity between detections (rows) and every
//!    retained track (columns), solved with [`hungarian_max`].
//! 2. **Verification**: each matched pair gets an [`AssociationVerdict`];
//!    pairs with `δ > 0` are dissolved into an uncertain pool together with
//!    everything left unmatched.
//! 3. **Rectification**: the pool is re-matched on similarity averaged over
//!    the last `K` track embeddings, gated by `IoU > β` against the track's
//!    last box. Gated or non-positive entries are forbidden.
//! 4. **Propagation**: matched tracks grow, confident leftovers are born as
//!    new tracks, unmatched tracks age and are eventually removed.
//!
//! With `utl_enabled = false` stages 2 and 3 are skipped and the tracker is
//! plain appearance + Hungarian association.

use crate::assignment::{hungarian_max, Matching, SimilarityMatrix};
use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox};
use crate::uncertainty::{association_uncertainty, second_best, AssociationVerdict, UncertaintyMargins};

/// One observed object in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame: u32,
    /// Position of the detection within its frame.
    pub det_index: usize,
    pub bbox: BoundingBox,
    pub confidence: f64,
    /// Unit-norm appearance embedding.
    pub embedding: Vec<f64>,
}

/// All detections of a single frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Frame {
    pub index: u32,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackRecord {
    pub frame: u32,
    pub det_index: usize,
    pub bbox: BoundingBox,
    pub embedding: Vec<f64>,
    /// Association uncertainty of the match that produced this record; 0 at birth.
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackState {
    Active,
    Lost,
    Removed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet {
    pub id: u32,
    pub records: Vec<TrackRecord>,
    pub state: TrackState,
    /// Consecutive frames without a match.
    pub lost_age: u32,
    representative: Vec<f64>,
}

impl Tracklet {
    fn born(id: u32, det: &Detection) -> Self {
        Tracklet {
            id,
            records: vec![TrackRecord {
                frame: det.frame,
                det_index: det.det_index,
                bbox: det.bbox,
                embedding: det.embedding.clone(),
                delta: 0.0,
            }],
            state: TrackState::Active,
            lost_age: 0,
            representative: det.embedding.clone(),
        }
    }

    /// Builds a tracklet directly from its records, e.g. for evaluation or tests.
    pub fn from_records(id: u32, records: Vec<TrackRecord>) -> Self {
        let representative = records.last().map(|r| r.embedding.clone()).unwrap_or_default();
        Tracklet { id, records, state: TrackState::Active, lost_age: 0, representative }
    }

    pub fn last(&self) -> &TrackRecord {
        self.records.last().expect("tracklets are never empty")
    }

    pub fn first_frame(&self) -> u32 {
        self.records[0].frame
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn deltas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.delta).collect()
    }

    pub fn record_at(&self, frame: u32) -> Option<&TrackRecord> {
        self.records.binary_search_by_key(&frame, |r| r.frame).ok().map(|i| &self.records[i])
    }

    /// Embedding used as the track's column in the similarity matrix.
    pub fn representative(&self) -> &[f64] {
        &self.representative
    }

    fn push(&mut self, det: &Detection, delta: f64, mode: TrackEmbedding) {
        self.representative = match mode {
            TrackEmbedding::Last => det.embedding.clone(),
            TrackEmbedding::Ema(alpha) => {
                let mixed: Vec<f64> = self
                    .representative
                    .iter()
                    .zip(&det.embedding)
                    .map(|(r, f)| alpha * r + (1.0 - alpha) * f)
                    .collect();
                normalized(mixed)
            }
        };
        self.records.push(TrackRecord {
            frame: det.frame,
            det_index: det.det_index,
            bbox: det.bbox,
            embedding: det.embedding.clone(),
            delta,
        });
        self.state = TrackState::Active;
        self.lost_age = 0;
    }
}

/// How a track's column embedding is formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrackEmbedding {
    /// Embedding of the most recent record.
    Last,
    /// Normalized exponential moving average; `alpha` weights the history.
    Ema(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub margins: UncertaintyMargins,
    /// IoU gate for rectification.
    pub beta: f64,
    /// Rectification window in records.
    pub k: usize,
    /// Minimum confidence for an unmatched detection to start a track.
    pub det_conf_min: f64,
    /// Frames a track may stay unmatched before removal.
    pub max_lost: u32,
    /// Pairs with similarity at or below this are not associated.
    pub sim_floor: f64,
    pub utl_enabled: bool,
    pub track_embedding: TrackEmbedding,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            margins: UncertaintyMargins::default(),
            beta: 0.1,
            k: 5,
            det_conf_min: 0.6,
            max_lost: 30,
            sim_floor: f64::NEG_INFINITY,
            utl_enabled: true,
            track_embedding: TrackEmbedding::Last,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        self.margins.validate()?;
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::config("beta", "must lie in [0, 1)"));
        }
        if self.k == 0 {
            return Err(Error::config("K", "must be at least 1"));
        }
        if !self.det_conf_min.is_finite() {
            return Err(Error::config("det_conf_min", "must be finite"));
        }
        if self.sim_floor.is_nan() {
            return Err(Error::config("sim_floor", "must not be NaN"));
        }
        if let TrackEmbedding::Ema(a) = self.track_embedding {
            if !(0.0..1.0).contains(&a) {
                return Err(Error::config("track_embedding", "EMA weight must lie in [0, 1)"));
            }
        }
        Ok(())
    }
}

/// Which stage produced an uncertainty log row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Birth = 0,
    Matched = 1,
    Rectified = 2,
}

impl Stage {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Stage> {
        match code {
            0 => Some(Stage::Birth),
            1 => Some(Stage::Matched),
            2 => Some(Stage::Rectified),
            _ => None,
        }
    }
}

/// One association decision.
///
/// Every first-stage Hungarian pair is logged, including pairs that
/// verification later dissolved; rectified pairs get a second row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub frame: u32,
    pub det_index: usize,
    pub track_id: u32,
    pub c1: f64,
    pub c2: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub delta: f64,
    pub stage: Stage,
}

impl LogRow {
    fn from_verdict(frame: u32, det_index: usize, track_id: u32, v: &AssociationVerdict, stage: Stage) -> Self {
        LogRow { frame, det_index, track_id, c1: v.c1, c2: v.c2, sigma: v.sigma, gamma: v.gamma, delta: v.delta, stage }
    }

    fn birth(frame: u32, det_index: usize, track_id: u32) -> Self {
        LogRow { frame, det_index, track_id, c1: 0.0, c2: 0.0, sigma: 0.0, gamma: 0.0, delta: 0.0, stage: Stage::Birth }
    }
}

/// A verified first-stage pair. Indices refer to rows/columns of the
/// similarity matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifiedPair {
    pub det: usize,
    pub track: usize,
    pub verdict: AssociationVerdict,
}

/// Result of verification: certain pairs and the uncertain candidate pool.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Verification {
    pub certain: Vec<VerifiedPair>,
    pub uncertain: Vec<VerifiedPair>,
    /// Detections (rows) awaiting rectification, ascending.
    pub pool_dets: Vec<usize>,
    /// Tracks (columns) awaiting rectification, ascending.
    pub pool_tracks: Vec<usize>,
}

/// Per-frame summary returned by [`Tracker::step`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssociationOutcome {
    pub frame: u32,
    /// `(det_index, track_id, stage)` for every detection that joined or started a track.
    pub assignments: Vec<(usize, u32, Stage)>,
    pub uncertain_pairs: usize,
    pub rectified_pairs: usize,
    pub log: Vec<LogRow>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

/// Detection-by-track cosine similarities against each track's representative.
pub fn build_similarity(tracks: &[Tracklet], dets: &[Detection]) -> Result<SimilarityMatrix> {
    let dim =
        dets.first().map(|d| d.embedding.len()).or_else(|| tracks.first().map(|t| t.representative.len())).unwrap_or(0);
    for len in dets.iter().map(|d| d.embedding.len()).chain(tracks.iter().map(|t| t.representative.len())) {
        if len != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: len });
        }
    }
    let mut m = SimilarityMatrix::zeros(dets.len(), tracks.len());
    for (i, d) in dets.iter().enumerate() {
        for (j, t) in tracks.iter().enumerate() {
            m.set(i, j, dot(&d.embedding, &t.representative));
        }
    }
    Ok(m)
}

/// Scores every matched pair and splits the matching into certain pairs and
/// an uncertain pool (dissolved pairs plus all unmatched rows and columns).
pub fn verify(matching: &Matching, m: &SimilarityMatrix, margins: &UncertaintyMargins) -> Verification {
    let mut out = Verification {
        pool_dets: matching.unmatched_rows.clone(),
        pool_tracks: matching.unmatched_cols.clone(),
        ..Default::default()
    };
    for &(det, track) in &matching.pairs {
        let verdict = verdict_for(m, det, track, margins);
        let pair = VerifiedPair { det, track, verdict };
        if verdict.uncertain {
            out.pool_dets.push(det);
            out.pool_tracks.push(track);
            out.uncertain.push(pair);
        } else {
            out.certain.push(pair);
        }
    }
    out.pool_dets.sort_unstable();
    out.pool_tracks.sort_unstable();
    out
}

fn verdict_for(m: &SimilarityMatrix, det: usize, track: usize, margins: &UncertaintyMargins) -> AssociationVerdict {
    let row = m.row(det);
    association_uncertainty(row[track], second_best(row, track), margins)
}

/// Rectification matrix over the pool: similarity averaged over the last
/// `min(k, n)` track embeddings, zeroed where `IoU <= beta` or the average
/// is not positive.
pub fn rectification_matrix(
    pool_dets: &[&Detection],
    pool_tracks: &[&Tracklet],
    beta: f64,
    k: usize,
) -> SimilarityMatrix {
    let mut m = SimilarityMatrix::zeros(pool_dets.len(), pool_tracks.len());
    for (i, det) in pool_dets.iter().enumerate() {
        for (j, trk) in pool_tracks.iter().enumerate() {
            if iou(&det.bbox, &trk.last().bbox) <= beta {
                continue;
            }
            let window = &trk.records[trk.records.len().saturating_sub(k)..];
            let mean = window.iter().map(|r| dot(&det.embedding, &r.embedding)).sum::<f64>() / window.len() as f64;
            if mean > 0.0 {
                m.set(i, j, mean);
            }
        }
    }
    m
}

/// Re-matches the uncertain pool. Returns `(pool det position, pool track
/// position)` pairs; every returned pair passed the IoU gate.
pub fn rectify(pool_dets: &[&Detection], pool_tracks: &[&Tracklet], beta: f64, k: usize) -> Vec<(usize, usize)> {
    let m = rectification_matrix(pool_dets, pool_tracks, beta, k);
    hungarian_max(&m, 0.0).pairs
}

/// Online tracker state for one sequence.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    /// Active and lost tracks, in creation order.
    tracks: Vec<Tracklet>,
    removed: Vec<Tracklet>,
    next_id: u32,
    last_frame: Option<u32>,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Tracker { cfg, tracks: Vec::new(), removed: Vec::new(), next_id: 1, last_frame: None })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// Tracks still eligible for association.
    pub fn retained(&self) -> &[Tracklet] {
        &self.tracks
    }

    /// Processes one frame.
    pub fn step(&mut self, frame: u32, dets: &[Detection]) -> Result<AssociationOutcome> {
        if let Some(prev) = self.last_frame {
            if frame <= prev {
                return Err(Error::OutOfOrderFrame { previous: prev, got: frame });
            }
        }
        let sim = build_similarity(&self.tracks, dets)?;
        self.last_frame = Some(frame);
        let cfg = &self.cfg;
        let matching = hungarian_max(&sim, cfg.sim_floor);

        let mut outcome = AssociationOutcome { frame, ..Default::default() };
        // (det row, track column, delta, stage)
        let mut accepted: Vec<(usize, usize, f64, Stage)> = Vec::new();

        if cfg.utl_enabled {
            let v = verify(&matching, &sim, &cfg.margins);
            let mut stage1: Vec<&VerifiedPair> = v.certain.iter().chain(&v.uncertain).collect();
            stage1.sort_by_key(|p| p.det);
            for p in stage1 {
                outcome.log.push(LogRow::from_verdict(
                    frame,
                    dets[p.det].det_index,
                    self.tracks[p.track].id,
                    &p.verdict,
                    Stage::Matched,
                ));
            }
            accepted.extend(v.certain.iter().map(|p| (p.det, p.track, p.verdict.delta, Stage::Matched)));
            outcome.uncertain_pairs = v.uncertain.len();

            let pool_d: Vec<&Detection> = v.pool_dets.iter().map(|&i| &dets[i]).collect();
            let pool_t: Vec<&Tracklet> = v.pool_tracks.iter().map(|&j| &self.tracks[j]).collect();
            for (pi, pj) in rectify(&pool_d, &pool_t, cfg.beta, cfg.k) {
                let (det, track) = (v.pool_dets[pi], v.pool_tracks[pj]);
                // Recorded uncertainty always comes from the first-stage row.
                let verdict = verdict_for(&sim, det, track, &cfg.margins);
                outcome.log.push(LogRow::from_verdict(
                    frame,
                    dets[det].det_index,
                    self.tracks[track].id,
                    &verdict,
                    Stage::Rectified,
                ));
                accepted.push((det, track, verdict.delta, Stage::Rectified));
                outcome.rectified_pairs += 1;
            }
        } else {
            for &(det, track) in &matching.pairs {
                let verdict = verdict_for(&sim, det, track, &cfg.margins);
                outcome.log.push(LogRow::from_verdict(
                    frame,
                    dets[det].det_index,
                    self.tracks[track].id,
                    &verdict,
                    Stage::Matched,
                ));
                accepted.push((det, track, verdict.delta, Stage::Matched));
            }
        }

        self.propagate(dets, accepted, &mut outcome);
        Ok(outcome)
    }

    fn propagate(
        &mut self,
        dets: &[Detection],
        mut accepted: Vec<(usize, usize, f64, Stage)>,
        outcome: &mut AssociationOutcome,
    ) {
        accepted.sort_by_key(|a| a.0);
        let mut det_used = vec![false; dets.len()];
        let mut track_used = vec![false; self.tracks.len()];
        let mode = self.cfg.track_embedding;
        for &(det, track, delta, stage) in &accepted {
            debug_assert!(!det_used[det] && !track_used[track]);
            det_used[det] = true;
            track_used[track] = true;
            self.tracks[track].push(&dets[det], delta, mode);
            outcome.assignments.push((dets[det].det_index, self.tracks[track].id, stage));
        }

        let mut kept = Vec::with_capacity(self.tracks.len());
        for (j, mut trk) in std::mem::take(&mut self.tracks).into_iter().enumerate() {
            if !track_used[j] {
                trk.lost_age += 1;
                trk.state = TrackState::Lost;
                if trk.lost_age > self.cfg.max_lost {
                    trk.state = TrackState::Removed;
                    self.removed.push(trk);
                    continue;
                }
            }
            kept.push(trk);
        }
        self.tracks = kept;

        for (i, det) in dets.iter().enumerate() {
            if !det_used[i] && det.confidence >= self.cfg.det_conf_min {
                let id = self.next_id;
                self.next_id += 1;
                self.tracks.push(Tracklet::born(id, det));
                outcome.log.push(LogRow::birth(det.frame, det.det_index, id));
                outcome.assignments.push((det.det_index, id, Stage::Birth));
            }
        }
    }

    /// Every tracklet seen so far, including removed ones, sorted by id.
    pub fn into_tracklets(self) -> Vec<Tracklet> {
        let mut all = self.removed;
        all.extend(self.tracks);
        all.sort_by_key(|t| t.id);
        all
    }
}

/// Output of [`track_sequence`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingRun {
    pub tracklets: Vec<Tracklet>,
    pub log: Vec<LogRow>,
}

/// Runs the tracker over a whole sequence.
pub fn track_sequence(frames: &[Frame], cfg: &TrackerConfig) -> Result<TrackingRun> {
    if frames.is_empty() {
        return Err(Error::InsufficientData("empty sequence".into()));
    }
    let mut tracker = Tracker::new(cfg.clone())?;
    let mut log = Vec::new();
    for f in frames {
        log.extend(tracker.step(f.index, &f.detections)?.log);
    }
    Ok(TrackingRun { tracklets: tracker.into_tracklets(), log })
}
