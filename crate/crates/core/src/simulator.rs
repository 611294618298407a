//! Deterministic synthetic multi-object scenes with ground truth.
//!
//! # Generator contract
//!
//! All randomness comes from one `ChaCha8Rng` seeded with
//! `seed_from_u64(seed)`. Uniform variates are `rng.gen::<f64>()` (53-bit
//! mantissa in `[0, 1)`); Gaussian variates use the Box–Muller transform on
//! two consecutive uniforms `u1, u2`, returning only the cosine branch
//! `sqrt(−2 ln(1 − u1)) · cos(2π u2)`. Draw order is fixed:
//!
//! 1. per object: latent (`D` Gaussians). Latents of objects that are not
//!    the second member of a confusable pair are orthonormalized by
//!    Gram–Schmidt in id order, as long as there are at most `D` of them;
//! 2. per confusable pair `(2k, 2k+1)`: perturbation (`D` Gaussians) added
//!    to the latent of `2k`, giving the latent of `2k+1`;
//! 3. projection: `F × D` Gaussians, row-major, orthonormalized by
//!    column-wise Gram–Schmidt;
//! 4. per object: width factor, height factor, heading, then center x and
//!    center y, redrawn (up to 1000 times) until the box overlaps no
//!    earlier object;
//! 5. per frame: drift heading; per object motion noise (x, y); then per
//!    object in id order: occlusion draw, dropout draw, embedding noise
//!    (`D` Gaussians), raw-feature noise (`F` Gaussians); finally the
//!    detection-order shuffle (Fisher–Yates, `gen_range`).
//!
//! Appearance noise is isotropic Gaussian with per-component standard
//! deviation `σ_a · boost · NOISE_SCALE / √D` for embeddings and
//! `σ_a · boost · NOISE_SCALE / √F` for raw features, so `σ_a · NOISE_SCALE`
//! is the expected noise norm of an unoccluded observation.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox};
use crate::tracker::{normalized, Detection, Frame};

/// Ratio between the expected noise norm and `appearance_noise`.
pub const NOISE_SCALE: f64 = 1.2;
/// Per-component spread of the latent perturbation inside a confusable pair,
/// as a multiple of `1/√D`.
pub const CONFUSABLE_SPREAD: f64 = 2.0;
/// Position redraws per object when looking for a non-overlapping start.
const PLACEMENT_TRIES: usize = 1000;
/// Overlap above which an object counts as occluded.
pub const OCCLUSION_IOU: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub num_objects: usize,
    pub num_frames: usize,
    pub arena: (f64, f64),
    pub embed_dim: usize,
    pub raw_dim: usize,
    pub appearance_noise: f64,
    pub confusable_fraction: f64,
    /// Probability of a spontaneous occlusion, on top of overlap-induced ones.
    pub occlusion_rate: f64,
    pub occlusion_noise_boost: f64,
    pub dropout: f64,
    pub camera_drift: f64,
    pub speed: f64,
    /// Mean box size; each object scales it by a factor in `[0.8, 1.2]`.
    pub box_size: (f64, f64),
    /// Standard deviation of per-frame positional jitter.
    pub motion_noise: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            num_objects: 12,
            num_frames: 200,
            arena: (480.0, 360.0),
            embed_dim: 16,
            raw_dim: 32,
            appearance_noise: 0.25,
            confusable_fraction: 0.3,
            occlusion_rate: 0.0,
            occlusion_noise_boost: 3.0,
            dropout: 0.05,
            camera_drift: 2.0,
            speed: 3.0,
            box_size: (40.0, 90.0),
            motion_noise: 0.5,
            seed: 7,
        }
    }
}

fn check(ok: bool, field: &str, reason: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(field, reason))
    }
}

fn unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        check(self.num_frames >= 2, "num_frames", "must be at least 2")?;
        check(self.embed_dim >= 2, "embed_dim", "must be at least 2")?;
        check(self.raw_dim >= self.embed_dim, "raw_dim", "must be at least embed_dim")?;
        check(self.arena.0 > 0.0 && self.arena.1 > 0.0, "arena", "must be positive")?;
        check(self.box_size.0 > 0.0 && self.box_size.1 > 0.0, "box_size", "must be positive")?;
        check(
            self.box_size.0 * 1.2 < self.arena.0 && self.box_size.1 * 1.2 < self.arena.1,
            "box_size",
            "must fit inside the arena",
        )?;
        check(
            self.appearance_noise >= 0.0 && self.appearance_noise.is_finite(),
            "appearance_noise",
            "must be finite and >= 0",
        )?;
        check(unit(self.confusable_fraction), "confusable_fraction", "must lie in [0, 1]")?;
        check(unit(self.occlusion_rate), "occlusion_rate", "must lie in [0, 1]")?;
        check(
            self.occlusion_noise_boost >= 1.0 && self.occlusion_noise_boost.is_finite(),
            "occlusion_noise_boost",
            "must be >= 1",
        )?;
        check(unit(self.dropout), "dropout", "must lie in [0, 1]")?;
        check(self.camera_drift >= 0.0 && self.camera_drift.is_finite(), "camera_drift", "must be finite and >= 0")?;
        check(self.speed >= 0.0 && self.speed.is_finite(), "speed", "must be finite and >= 0")?;
        check(self.motion_noise >= 0.0 && self.motion_noise.is_finite(), "motion_noise", "must be finite and >= 0")?;
        Ok(())
    }

    /// Number of disjoint confusable pairs `(0,1), (2,3), ...`.
    pub fn confusable_pairs(&self) -> usize {
        ((self.confusable_fraction * self.num_objects as f64 / 2.0).round() as usize).min(self.num_objects / 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct GroundTruthRecord {
    pub frame: u32,
    pub det_index: usize,
    pub true_id: u32,
}

/// Ground truth keyed by `(frame, det_index)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    map: BTreeMap<(u32, usize), u32>,
}

impl GroundTruth {
    pub fn from_records(records: &[GroundTruthRecord]) -> Self {
        GroundTruth { map: records.iter().map(|r| ((r.frame, r.det_index), r.true_id)).collect() }
    }

    pub fn true_id(&self, frame: u32, det_index: usize) -> Result<u32> {
        self.map.get(&(frame, det_index)).copied().ok_or(Error::MissingGroundTruth { frame, det_index })
    }

    pub fn records(&self) -> Vec<GroundTruthRecord> {
        self.map.iter().map(|(&(frame, det_index), &true_id)| GroundTruthRecord { frame, det_index, true_id }).collect()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Simulator output: detections with reference embeddings, the matching
/// raw features (`raw[frame position][detection]`), and ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedScene {
    pub config: ScenarioConfig,
    pub frames: Vec<Frame>,
    pub raw: Vec<Vec<Vec<f64>>>,
    pub ground_truth: Vec<GroundTruthRecord>,
}

impl SimulatedScene {
    pub fn gt(&self) -> GroundTruth {
        GroundTruth::from_records(&self.ground_truth)
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen();
    let u2: f64 = rng.gen();
    (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * PI * u2).cos()
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    (0..n).map(|_| gaussian(rng) * std).collect()
}

/// Modified Gram–Schmidt over `vs[i]` for `i` in `which`, in that order.
fn orthonormalize(vs: &mut [Vec<f64>], which: &[usize]) {
    for (n, &i) in which.iter().enumerate() {
        for &j in &which[..n] {
            let proj: f64 = vs[i].iter().zip(&vs[j]).map(|(a, b)| a * b).sum();
            let (vi, vj) = (vs[i].clone(), &vs[j]);
            vs[i] = vi.iter().zip(vj).map(|(a, b)| a - proj * b).collect();
        }
        let v = std::mem::take(&mut vs[i]);
        vs[i] = normalized(v);
    }
}

/// `F × D` matrix with orthonormal columns, row-major.
fn random_projection(rng: &mut ChaCha8Rng, f: usize, d: usize) -> Vec<Vec<f64>> {
    let mut m: Vec<Vec<f64>> = (0..f).map(|_| gaussian_vec(rng, d, 1.0)).collect();
    for c in 0..d {
        for prev in 0..c {
            let proj: f64 = (0..f).map(|r| m[r][c] * m[r][prev]).sum();
            for row in m.iter_mut() {
                row[c] -= proj * row[prev];
            }
        }
        let norm = (0..f).map(|r| m[r][c] * m[r][c]).sum::<f64>().sqrt();
        for row in m.iter_mut() {
            row[c] /= norm;
        }
    }
    m
}

struct Object {
    pos: [f64; 2],
    vel: [f64; 2],
    w: f64,
    h: f64,
}

/// Generates a scene. Identical configs give identical scenes.
pub fn generate(cfg: &ScenarioConfig) -> Result<SimulatedScene> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.embed_dim;
    let f = cfg.raw_dim;

    let mut latents: Vec<Vec<f64>> = (0..cfg.num_objects).map(|_| normalized(gaussian_vec(&mut rng, d, 1.0))).collect();
    let pairs = cfg.confusable_pairs();
    let distinct: Vec<usize> = (0..cfg.num_objects).filter(|&i| !(i % 2 == 1 && i / 2 < pairs)).collect();
    if distinct.len() <= d {
        orthonormalize(&mut latents, &distinct);
    }
    for k in 0..pairs {
        let spread = gaussian_vec(&mut rng, d, CONFUSABLE_SPREAD / (d as f64).sqrt());
        latents[2 * k + 1] = normalized(latents[2 * k].iter().zip(&spread).map(|(a, b)| a + b).collect());
    }
    let projection = random_projection(&mut rng, f, d);

    let (aw, ah) = cfg.arena;
    let mut objects: Vec<Object> = Vec::with_capacity(cfg.num_objects);
    for _ in 0..cfg.num_objects {
        let w = cfg.box_size.0 * (0.8 + 0.4 * rng.gen::<f64>());
        let h = cfg.box_size.1 * (0.8 + 0.4 * rng.gen::<f64>());
        let heading = 2.0 * PI * rng.gen::<f64>();
        let mut pos = [0.0; 2];
        for _ in 0..PLACEMENT_TRIES {
            pos = [w / 2.0 + rng.gen::<f64>() * (aw - w), h / 2.0 + rng.gen::<f64>() * (ah - h)];
            let candidate = BoundingBox { cx: pos[0], cy: pos[1], w, h };
            if objects
                .iter()
                .all(|o| iou(&candidate, &BoundingBox { cx: o.pos[0], cy: o.pos[1], w: o.w, h: o.h }) == 0.0)
            {
                break;
            }
        }
        objects.push(Object { pos, vel: [cfg.speed * heading.cos(), cfg.speed * heading.sin()], w, h });
    }

    let emb_std = cfg.appearance_noise * NOISE_SCALE / (d as f64).sqrt();
    let raw_std = cfg.appearance_noise * NOISE_SCALE / (f as f64).sqrt();
    let mut offset = [0.0f64; 2];
    let mut frames = Vec::with_capacity(cfg.num_frames);
    let mut raw = Vec::with_capacity(cfg.num_frames);
    let mut ground_truth = Vec::new();

    for t in 1..=cfg.num_frames as u32 {
        if t > 1 {
            let heading = 2.0 * PI * rng.gen::<f64>();
            offset[0] += cfg.camera_drift * heading.cos();
            offset[1] += cfg.camera_drift * heading.sin();
            for o in objects.iter_mut() {
                let nx = gaussian(&mut rng) * cfg.motion_noise;
                let ny = gaussian(&mut rng) * cfg.motion_noise;
                step_object(o, [nx, ny], cfg.arena);
            }
        }
        let boxes: Vec<BoundingBox> = objects
            .iter()
            .map(|o| BoundingBox { cx: o.pos[0] + offset[0], cy: o.pos[1] + offset[1], w: o.w, h: o.h })
            .collect();
        let max_overlap: Vec<f64> = (0..boxes.len())
            .map(|i| (0..boxes.len()).filter(|&j| j != i).map(|j| iou(&boxes[i], &boxes[j])).fold(0.0, f64::max))
            .collect();

        let mut observed: Vec<(u32, Detection, Vec<f64>)> = Vec::new();
        for (i, latent) in latents.iter().enumerate() {
            let spontaneous = rng.gen::<f64>() < cfg.occlusion_rate;
            let dropped = rng.gen::<f64>() < cfg.dropout;
            let occluded = spontaneous || max_overlap[i] > OCCLUSION_IOU;
            let boost = if occluded { cfg.occlusion_noise_boost } else { 1.0 };
            let en = gaussian_vec(&mut rng, d, emb_std * boost);
            let rn = gaussian_vec(&mut rng, f, raw_std * boost);
            if dropped {
                continue;
            }
            let embedding = normalized(latent.iter().zip(&en).map(|(a, b)| a + b).collect());
            let raw_feat: Vec<f64> = projection
                .iter()
                .zip(&rn)
                .map(|(row, noise)| row.iter().zip(latent).map(|(p, l)| p * l).sum::<f64>() + noise)
                .collect();
            let det = Detection {
                frame: t,
                det_index: 0,
                bbox: boxes[i],
                confidence: 1.0 - max_overlap[i].min(0.9),
                embedding,
            };
            observed.push((i as u32 + 1, det, raw_feat));
        }
        for i in (1..observed.len()).rev() {
            let j = rng.gen_range(0..=i);
            observed.swap(i, j);
        }

        let mut dets = Vec::with_capacity(observed.len());
        let mut raws = Vec::with_capacity(observed.len());
        for (k, (true_id, mut det, r)) in observed.into_iter().enumerate() {
            det.det_index = k;
            ground_truth.push(GroundTruthRecord { frame: t, det_index: k, true_id });
            dets.push(det);
            raws.push(r);
        }
        frames.push(Frame { index: t, detections: dets });
        raw.push(raws);
    }
    Ok(SimulatedScene { config: cfg.clone(), frames, raw, ground_truth })
}

/// Constant-velocity step with reflection off the arena walls.
fn step_object(o: &mut Object, noise: [f64; 2], arena: (f64, f64)) {
    let half = [o.w / 2.0, o.h / 2.0];
    let limit = [arena.0, arena.1];
    for a in 0..2 {
        let lo = half[a];
        let hi = limit[a] - half[a];
        let mut p = o.pos[a] + o.vel[a] + noise[a];
        if p < lo {
            p = 2.0 * lo - p;
            o.vel[a] = o.vel[a].abs();
        } else if p > hi {
            p = 2.0 * hi - p;
            o.vel[a] = -o.vel[a].abs();
        }
        o.pos[a] = p.clamp(lo, hi);
    }
}
