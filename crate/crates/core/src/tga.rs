//! Tracklet-guided augmentation geometry.
//!
//! A source anchor tracklet is drawn with probability `∝ exp(−Ω)` so that
//! consistent tracklets drive the augmentation; a target frame along that
//! tracklet is then drawn with probability `∝ exp(δ)`, favoring the
//! historically uncertain (hard) frames. The plan is the affine transform
//! taking the anchor's current box onto its box in the target frame, with
//! bounded corner jitter applied before the fit.

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{apply_affine, box_to_affine, solve_affine, AffineTransform, BoundingBox};
use crate::tracker::{Detection, Tracklet};
use crate::uncertainty::tracklet_uncertainty;

/// Default jitter as a fraction of the anchor box diagonal.
pub const DEFAULT_JITTER_FRACTION: f64 = 0.02;

/// Categorical distribution over track ids or frame indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingWeights {
    pub candidates: Vec<(u32, f64)>,
}

impl SamplingWeights {
    /// Normalized softmax of `scores`, computed with max subtraction.
    pub fn softmax(keys: Vec<u32>, scores: &[f64]) -> Self {
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        SamplingWeights { candidates: keys.into_iter().zip(exps.iter().map(|e| e / z)).collect() }
    }

    pub fn uniform(keys: Vec<u32>) -> Self {
        let n = keys.len() as f64;
        SamplingWeights { candidates: keys.into_iter().map(|k| (k, 1.0 / n)).collect() }
    }

    pub fn weight_of(&self, key: u32) -> Option<f64> {
        self.candidates.iter().find(|c| c.0 == key).map(|c| c.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationPlan {
    pub source_track_id: u32,
    pub current_frame: u32,
    pub target_frame: u32,
    /// Maps current-frame coordinates into the target frame.
    pub transform: AffineTransform,
    pub jitter_magnitude: f64,
}

/// How anchors are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorSampling {
    /// Source by `exp(−Ω)`, target by `exp(δ)`.
    Uncertainty,
    /// Source by `exp(−Ω)`, target frame uniform.
    RandomTarget,
}

/// Deltas of `trk` up to and including frame `t`.
fn deltas_through(trk: &Tracklet, t: u32) -> Vec<f64> {
    trk.records.iter().take_while(|r| r.frame <= t).map(|r| r.delta).collect()
}

/// Source-anchor distribution over tracklets that have a record at `t`.
pub fn source_anchor_weights(tracklets: &[Tracklet], t: u32) -> Result<SamplingWeights> {
    let mut ids = Vec::new();
    let mut scores = Vec::new();
    for trk in tracklets.iter().filter(|trk| trk.record_at(t).is_some()) {
        ids.push(trk.id);
        scores.push(-tracklet_uncertainty(&deltas_through(trk, t))?);
    }
    if ids.is_empty() {
        return Err(Error::NoCandidates(t));
    }
    Ok(SamplingWeights::softmax(ids, &scores))
}

/// Target-frame distribution over the records of `trk` strictly before `t`.
pub fn target_anchor_weights(trk: &Tracklet, t: u32) -> Result<SamplingWeights> {
    let (frames, deltas): (Vec<u32>, Vec<f64>) =
        trk.records.iter().filter(|r| r.frame < t).map(|r| (r.frame, r.delta)).unzip();
    if frames.is_empty() {
        return Err(Error::NoHistory { track_id: trk.id, frame: t });
    }
    Ok(SamplingWeights::softmax(frames, &deltas))
}

/// Draws one candidate key by inverse-CDF on a single uniform variate.
pub fn sample<R: Rng + ?Sized>(weights: &SamplingWeights, rng: &mut R) -> u32 {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for &(key, w) in &weights.candidates {
        acc += w;
        if u < acc {
            return key;
        }
    }
    weights.candidates.last().expect("non-empty weights").0
}

/// Builds the anchor-aligning transform between frame `t` and `target`.
pub fn build_plan<R: Rng + ?Sized>(
    trk: &Tracklet,
    t: u32,
    target: u32,
    jitter: f64,
    rng: &mut R,
) -> Result<AugmentationPlan> {
    let missing = |frame| Error::NoHistory { track_id: trk.id, frame };
    let src = trk.record_at(t).ok_or_else(|| missing(t))?.bbox;
    let dst = trk.record_at(target).ok_or_else(|| missing(target))?.bbox;
    for b in [&src, &dst] {
        if !b.is_valid() {
            return Err(Error::DegenerateBox(format!("{b:?}")));
        }
    }
    if target >= t {
        return Err(Error::config("target_frame", "must precede the current frame"));
    }
    if !(jitter >= 0.0 && jitter.is_finite()) {
        return Err(Error::config("jitter", "must be finite and non-negative"));
    }
    let transform = if jitter == 0.0 {
        box_to_affine(&src, &dst)
    } else {
        let perturbed =
            dst.corners().map(|[x, y]| [x + rng.gen_range(-jitter..=jitter), y + rng.gen_range(-jitter..=jitter)]);
        solve_affine(&src.corners(), &perturbed)?
    };
    Ok(AugmentationPlan {
        source_track_id: trk.id,
        current_frame: t,
        target_frame: target,
        transform,
        jitter_magnitude: jitter,
    })
}

/// Picks anchors at frame `t` and builds a plan. `jitter = None` uses
/// [`DEFAULT_JITTER_FRACTION`] of the source anchor's diagonal. With
/// `max_offset = Some(k)` only target frames in `[t − k, t)` are considered.
pub fn plan_augmentation<R: Rng + ?Sized>(
    tracklets: &[Tracklet],
    t: u32,
    jitter: Option<f64>,
    max_offset: Option<u32>,
    mode: AnchorSampling,
    rng: &mut R,
) -> Result<AugmentationPlan> {
    let earliest = max_offset.map_or(0, |k| t.saturating_sub(k));
    let in_window = |trk: &Tracklet| trk.records.iter().any(|r| r.frame >= earliest && r.frame < t);
    let eligible: Vec<Tracklet> =
        tracklets.iter().filter(|trk| trk.record_at(t).is_some() && in_window(trk)).cloned().collect();
    let source = sample(&source_anchor_weights(&eligible, t)?, rng);
    let trk = eligible.iter().find(|trk| trk.id == source).expect("sampled id is eligible");
    let window = Tracklet::from_records(
        trk.id,
        trk.records.iter().filter(|r| r.frame >= earliest && r.frame <= t).cloned().collect(),
    );
    let target_weights = match mode {
        AnchorSampling::Uncertainty => target_anchor_weights(&window, t)?,
        AnchorSampling::RandomTarget => {
            SamplingWeights::uniform(window.records.iter().filter(|r| r.frame < t).map(|r| r.frame).collect())
        }
    };
    let target = sample(&target_weights, rng);
    let jitter =
        jitter.unwrap_or_else(|| DEFAULT_JITTER_FRACTION * trk.record_at(t).map_or(0.0, |r| r.bbox.diagonal()));
    build_plan(trk, t, target, jitter, rng)
}

/// Applies the plan to every box; embeddings and indices are carried over.
pub fn augment_detections(dets: &[Detection], plan: &AugmentationPlan) -> Vec<Detection> {
    dets.iter().map(|d| Detection { bbox: apply_affine(&plan.transform, &d.bbox), ..d.clone() }).collect()
}

/// Largest corner displacement between `apply(t, src)` and `dst`.
pub fn corner_error(t: &AffineTransform, src: &BoundingBox, dst: &BoundingBox) -> f64 {
    src.corners()
        .iter()
        .zip(dst.corners().iter())
        .map(|(s, d)| {
            let p = t.apply_point(*s);
            (p[0] - d[0]).abs().max((p[1] - d[1]).abs())
        })
        .fold(0.0, f64::max)
}
