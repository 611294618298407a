//! Ground-truth diagnostics for tracking runs and embeddings.
//!
//! "Correct" is anchored to the identity of a tracklet's birth detection:
//! a record is correct when its detection has the same true id as the
//! detection that started the tracklet.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::simulator::GroundTruth;
use crate::tracker::{Frame, LogRow, Stage, Tracklet};

/// How well the uncertainty flag separates wrong from correct associations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SeparationReport {
    pub wrong_total: usize,
    pub wrong_flagged_uncertain: usize,
    pub correct_total: usize,
    pub correct_flagged_certain: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl SeparationReport {
    pub fn wrong_flag_rate(&self) -> f64 {
        ratio(self.wrong_flagged_uncertain, self.wrong_total)
    }

    pub fn correct_certain_rate(&self) -> f64 {
        ratio(self.correct_flagged_certain, self.correct_total)
    }

    pub fn to_text(&self) -> String {
        format!(
            "wrong_total: {}\nwrong_flagged_uncertain: {}\ncorrect_total: {}\ncorrect_flagged_certain: {}\nwrong_flag_rate: {}\ncorrect_certain_rate: {}\n",
            self.wrong_total,
            self.wrong_flagged_uncertain,
            self.correct_total,
            self.correct_flagged_certain,
            self.wrong_flag_rate(),
            self.correct_certain_rate(),
        )
    }

    /// Parses the count fields written by [`to_text`](Self::to_text); rate
    /// lines and unrelated keys are ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let kv = parse_key_values(text)?;
        let get = |key: &str| -> Result<usize> {
            let (line, v) = kv.get(key).ok_or_else(|| Error::Parse { line: 0, msg: format!("missing key `{key}`") })?;
            v.parse().map_err(|_| Error::Parse { line: *line, msg: format!("bad count for `{key}`") })
        };
        let r = SeparationReport {
            wrong_total: get("wrong_total")?,
            wrong_flagged_uncertain: get("wrong_flagged_uncertain")?,
            correct_total: get("correct_total")?,
            correct_flagged_certain: get("correct_flagged_certain")?,
        };
        if r.wrong_flagged_uncertain > r.wrong_total || r.correct_flagged_certain > r.correct_total {
            return Err(Error::Parse { line: 0, msg: "flagged count exceeds total".into() });
        }
        Ok(r)
    }
}

fn parse_key_values(text: &str) -> Result<HashMap<String, (usize, String)>> {
    let mut out = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) =
            line.split_once(':').ok_or_else(|| Error::Parse { line: n + 1, msg: "expected `key: value`".into() })?;
        out.insert(k.trim().to_string(), (n + 1, v.trim().to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    /// Record position within the tracklet; the birth record is age 0.
    pub age: usize,
    pub accuracy: f64,
    /// Number of tracklets reaching this age.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AccuracyCurve {
    pub points: Vec<CurvePoint>,
}

impl AccuracyCurve {
    pub fn at(&self, age: usize) -> Option<f64> {
        self.points.iter().find(|p| p.age == age).map(|p| p.accuracy)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("age,accuracy,support\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{:.6},{}", p.age, p.accuracy, p.support);
        }
        s
    }
}

/// Birth-anchored identity accuracy as a function of tracklet age, for ages
/// `1..=max_age` that at least one tracklet reaches.
pub fn pseudo_accuracy(tracklets: &[Tracklet], gt: &GroundTruth, max_age: usize) -> Result<AccuracyCurve> {
    let mut correct = vec![0usize; max_age + 1];
    let mut total = vec![0usize; max_age + 1];
    for trk in tracklets {
        let anchor = gt.true_id(trk.records[0].frame, trk.records[0].det_index)?;
        for (age, rec) in trk.records.iter().enumerate().skip(1).take(max_age) {
            total[age] += 1;
            if gt.true_id(rec.frame, rec.det_index)? == anchor {
                correct[age] += 1;
            }
        }
    }
    let points = (1..=max_age)
        .filter(|&a| total[a] > 0)
        .map(|a| CurvePoint { age: a, accuracy: ratio(correct[a], total[a]), support: total[a] })
        .collect();
    Ok(AccuracyCurve { points })
}

/// Scores matched and rectified log rows against ground truth.
pub fn uncertainty_separation(log: &[LogRow], gt: &GroundTruth) -> Result<SeparationReport> {
    separation_for_stages(log, gt, &[Stage::Matched, Stage::Rectified])
}

/// Like [`uncertainty_separation`] restricted to the given stages.
pub fn separation_for_stages(log: &[LogRow], gt: &GroundTruth, stages: &[Stage]) -> Result<SeparationReport> {
    let mut birth_id: HashMap<u32, u32> = HashMap::new();
    for row in log.iter().filter(|r| r.stage == Stage::Birth) {
        birth_id.insert(row.track_id, gt.true_id(row.frame, row.det_index)?);
    }
    let mut report = SeparationReport::default();
    for row in log.iter().filter(|r| stages.contains(&r.stage)) {
        let anchor = *birth_id
            .get(&row.track_id)
            .ok_or_else(|| Error::InsufficientData(format!("track {} has no birth row", row.track_id)))?;
        let uncertain = row.delta > 0.0;
        if gt.true_id(row.frame, row.det_index)? == anchor {
            report.correct_total += 1;
            report.correct_flagged_certain += usize::from(!uncertain);
        } else {
            report.wrong_total += 1;
            report.wrong_flagged_uncertain += usize::from(uncertain);
        }
    }
    Ok(report)
}

/// Number of times a ground-truth trajectory changes tracklet id between
/// consecutive matched observations.
pub fn id_switches(tracklets: &[Tracklet], gt: &GroundTruth) -> Result<usize> {
    let mut per_truth: BTreeMap<u32, Vec<(u32, u32)>> = BTreeMap::new();
    for trk in tracklets {
        for rec in &trk.records {
            per_truth.entry(gt.true_id(rec.frame, rec.det_index)?).or_default().push((rec.frame, trk.id));
        }
    }
    Ok(per_truth
        .values_mut()
        .map(|obs| {
            obs.sort_unstable();
            obs.windows(2).filter(|w| w[0].1 != w[1].1).count()
        })
        .sum())
}

/// Summary of `Δ = c⁺ − c⁻` over consecutive-frame ground-truth matches.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSummary {
    pub count: usize,
    pub mean: f64,
    pub fraction_positive: f64,
    /// Bin edges `lo + k·width`, `k = 0..=bins`.
    pub histogram_lo: f64,
    pub histogram_width: f64,
    pub histogram: Vec<usize>,
}

const HIST_LO: f64 = -2.0;
const HIST_BINS: usize = 40;
const HIST_WIDTH: f64 = 0.1;

/// `c⁺` is the similarity to the same object in the next frame, `c⁻` the
/// largest similarity to any other next-frame object (0 when alone).
pub fn similarity_delta(frames: &[Frame], gt: &GroundTruth) -> Result<DeltaSummary> {
    let mut deltas = Vec::new();
    for pair in frames.windows(2) {
        let (cur, next) = (&pair[0], &pair[1]);
        if next.index != cur.index + 1 {
            continue;
        }
        let next_ids = next.detections.iter().map(|d| gt.true_id(d.frame, d.det_index)).collect::<Result<Vec<_>>>()?;
        for d in &cur.detections {
            let id = gt.true_id(d.frame, d.det_index)?;
            let Some(m) = next_ids.iter().position(|&n| n == id) else {
                continue;
            };
            let sims: Vec<f64> = next
                .detections
                .iter()
                .map(|o| d.embedding.iter().zip(&o.embedding).map(|(a, b)| a * b).sum())
                .collect();
            let c_neg = sims
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != m)
                .map(|(_, &s)| s)
                .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.max(s))))
                .unwrap_or(0.0);
            deltas.push(sims[m] - c_neg);
        }
    }
    let mut histogram = vec![0usize; HIST_BINS];
    for &d in &deltas {
        let k = ((d - HIST_LO) / HIST_WIDTH).floor().clamp(0.0, (HIST_BINS - 1) as f64) as usize;
        histogram[k] += 1;
    }
    let n = deltas.len();
    Ok(DeltaSummary {
        count: n,
        mean: if n == 0 { 0.0 } else { deltas.iter().sum::<f64>() / n as f64 },
        fraction_positive: ratio(deltas.iter().filter(|&&d| d > 0.0).count(), n),
        histogram_lo: HIST_LO,
        histogram_width: HIST_WIDTH,
        histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;
    use crate::simulator::GroundTruthRecord;
    use crate::tracker::{Detection, TrackRecord};

    fn rec(frame: u32, det_index: usize) -> TrackRecord {
        TrackRecord {
            frame,
            det_index,
            bbox: BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap(),
            embedding: vec![1.0],
            delta: 0.0,
        }
    }

    fn gt(entries: &[(u32, usize, u32)]) -> GroundTruth {
        let recs: Vec<_> = entries
            .iter()
            .map(|&(frame, det_index, true_id)| GroundTruthRecord { frame, det_index, true_id })
            .collect();
        GroundTruth::from_records(&recs)
    }

    #[test]
    fn perfect_tracking_accuracy() {
        let g = gt(&[(1, 0, 5), (2, 0, 5), (3, 0, 5), (1, 1, 6), (2, 1, 6)]);
        let trks = vec![
            Tracklet::from_records(1, vec![rec(1, 0), rec(2, 0), rec(3, 0)]),
            Tracklet::from_records(2, vec![rec(1, 1), rec(2, 1)]),
        ];
        let c = pseudo_accuracy(&trks, &g, 5).unwrap();
        assert_eq!(c.points.len(), 2);
        assert!(c.points.iter().all(|p| p.accuracy == 1.0));
        assert_eq!(c.points[0].support, 2);
        assert_eq!(id_switches(&trks, &g).unwrap(), 0);
    }

    #[test]
    fn wrong_record_at_age_three() {
        let g = gt(&[(1, 0, 1), (2, 0, 1), (3, 0, 1), (4, 0, 2)]);
        let trks = vec![Tracklet::from_records(1, vec![rec(1, 0), rec(2, 0), rec(3, 0), rec(4, 0)])];
        let c = pseudo_accuracy(&trks, &g, 3).unwrap();
        assert_eq!(c.at(1), Some(1.0));
        assert_eq!(c.at(2), Some(1.0));
        assert_eq!(c.at(3), Some(0.0));
    }

    #[test]
    fn missing_ground_truth_is_reported() {
        let trks = vec![Tracklet::from_records(1, vec![rec(1, 0), rec(2, 3)])];
        let err = pseudo_accuracy(&trks, &gt(&[(1, 0, 1)]), 2).unwrap_err();
        assert!(matches!(err, Error::MissingGroundTruth { frame: 2, det_index: 3 }));
    }

    #[test]
    fn id_switch_examples() {
        // One trajectory: tracklet A for frames 1-5, then tracklet B.
        let entries: Vec<_> = (1..=8).map(|f| (f, 0usize, 9u32)).collect();
        let g = gt(&entries);
        let a = Tracklet::from_records(1, (1..=5).map(|f| rec(f, 0)).collect());
        let b = Tracklet::from_records(2, (6..=8).map(|f| rec(f, 0)).collect());
        assert_eq!(id_switches(&[a, b], &g).unwrap(), 1);

        // Two trajectories swap tracklets at frame 3.
        let g = gt(&[(1, 0, 1), (2, 0, 1), (3, 0, 1), (4, 0, 1), (1, 1, 2), (2, 1, 2), (3, 1, 2), (4, 1, 2)]);
        let a = Tracklet::from_records(1, vec![rec(1, 0), rec(2, 0), rec(3, 1), rec(4, 1)]);
        let b = Tracklet::from_records(2, vec![rec(1, 1), rec(2, 1), rec(3, 0), rec(4, 0)]);
        assert_eq!(id_switches(&[a.clone(), b.clone()], &g).unwrap(), 2);
        // Renaming tracklet ids does not change the count.
        let a2 = Tracklet::from_records(70, a.records);
        let b2 = Tracklet::from_records(3, b.records);
        assert_eq!(id_switches(&[a2, b2], &g).unwrap(), 2);
    }

    fn log_row(frame: u32, det_index: usize, track_id: u32, delta: f64, stage: Stage) -> LogRow {
        LogRow { frame, det_index, track_id, c1: 0.0, c2: 0.0, sigma: 0.0, gamma: 0.0, delta, stage }
    }

    #[test]
    fn separation_examples() {
        let g = gt(&[(1, 0, 1), (2, 0, 1), (3, 0, 1), (2, 1, 2)]);
        let log = vec![
            log_row(1, 0, 1, 0.0, Stage::Birth),
            log_row(2, 0, 1, -3.0, Stage::Matched),
            log_row(3, 0, 1, -2.0, Stage::Matched),
        ];
        let r = uncertainty_separation(&log, &g).unwrap();
        assert_eq!(r.correct_certain_rate(), 1.0);
        assert_eq!(r.wrong_total, 0);

        let log = vec![log_row(1, 0, 1, 0.0, Stage::Birth), log_row(2, 1, 1, 0.4, Stage::Matched)];
        let r = uncertainty_separation(&log, &g).unwrap();
        assert_eq!(r.wrong_total, 1);
        assert_eq!(r.wrong_flag_rate(), 1.0);
    }

    #[test]
    fn separation_report_round_trip() {
        let r = SeparationReport {
            wrong_total: 7,
            wrong_flagged_uncertain: 5,
            correct_total: 300,
            correct_flagged_certain: 291,
        };
        assert_eq!(SeparationReport::from_text(&r.to_text()).unwrap(), r);
        assert!(SeparationReport::from_text("wrong_total: 1\n").is_err());
    }

    fn frame_of(index: u32, embs: &[Vec<f64>]) -> Frame {
        Frame {
            index,
            detections: embs
                .iter()
                .enumerate()
                .map(|(i, e)| Detection {
                    frame: index,
                    det_index: i,
                    bbox: BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap(),
                    confidence: 1.0,
                    embedding: e.clone(),
                })
                .collect(),
        }
    }

    #[test]
    fn similarity_delta_examples() {
        let g = gt(&[(1, 0, 1), (1, 1, 2), (2, 0, 2), (2, 1, 1)]);
        let frames =
            vec![frame_of(1, &[vec![1.0, 0.0], vec![0.0, 1.0]]), frame_of(2, &[vec![0.0, 1.0], vec![1.0, 0.0]])];
        let s = similarity_delta(&frames, &g).unwrap();
        assert_eq!(s.count, 2);
        assert_eq!(s.mean, 1.0);
        assert_eq!(s.fraction_positive, 1.0);

        let same = vec![frame_of(1, &[vec![1.0, 0.0], vec![1.0, 0.0]]), frame_of(2, &[vec![1.0, 0.0], vec![1.0, 0.0]])];
        let s = similarity_delta(&same, &g).unwrap();
        assert_eq!(s.mean, 0.0);
        assert_eq!(s.fraction_positive, 0.0);
        assert_eq!(s.histogram.iter().sum::<usize>(), 2);
    }
}
