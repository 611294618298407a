//! InfoNCE loss and a linear embedder trained on pseudo-tracklets.
//!
//! The encoder is a linear projection followed by ℓ2 normalization.
//! Gradients flow through the query only; positive and negative keys are
//! computed with the current weights and then held constant for the step.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tga::{augment_detections, plan_augmentation, AnchorSampling};
use crate::tracker::{normalized, track_sequence, Frame, TrackerConfig, Tracklet};

pub const DEFAULT_TEMPERATURE: f64 = 0.07;

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveBatch {
    pub query: Vec<f64>,
    pub positive: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
    pub temperature: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl ContrastiveBatch {
    /// Logits `q·k / ε`, positive first.
    fn logits(&self) -> Vec<f64> {
        std::iter::once(&self.positive).chain(&self.negatives).map(|k| dot(&self.query, k) / self.temperature).collect()
    }

    fn keys(&self) -> impl Iterator<Item = &Vec<f64>> {
        std::iter::once(&self.positive).chain(&self.negatives)
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// `−log(exp(q·k₊/ε) / Σᵢ exp(q·kᵢ/ε))`, the sum running over the positive
/// and every negative.
pub fn info_nce(batch: &ContrastiveBatch) -> f64 {
    let logits = batch.logits();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    (lse - logits[0]).max(0.0)
}

/// `∇_q L = (Σᵢ pᵢ kᵢ − k₊) / ε` with `pᵢ` the softmax weights of the logits.
pub fn info_nce_grad(batch: &ContrastiveBatch) -> Vec<f64> {
    let p = softmax(&batch.logits());
    let mut g = vec![0.0; batch.query.len()];
    for (w, k) in p.iter().zip(batch.keys()) {
        for (gi, ki) in g.iter_mut().zip(k) {
            *gi += w * ki;
        }
    }
    for (gi, ki) in g.iter_mut().zip(&batch.positive) {
        *gi = (*gi - ki) / batch.temperature;
    }
    g
}

/// Linear map from `F` raw features to a unit `D`-dimensional embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEmbedder {
    raw_dim: usize,
    embed_dim: usize,
    /// Row-major `F × D`.
    weights: Vec<f64>,
}

impl LinearEmbedder {
    /// Entries i.i.d. uniform in `[−1/√F, 1/√F]`.
    pub fn init(raw_dim: usize, embed_dim: usize, seed: u64) -> Self {
        Self::init_with(raw_dim, embed_dim, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn init_with<R: Rng>(raw_dim: usize, embed_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (raw_dim as f64).sqrt();
        let weights = (0..raw_dim * embed_dim).map(|_| rng.gen_range(-bound..=bound)).collect();
        LinearEmbedder { raw_dim, embed_dim, weights }
    }

    pub fn from_weights(raw_dim: usize, embed_dim: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != raw_dim * embed_dim {
            return Err(Error::DimensionMismatch { expected: raw_dim * embed_dim, found: weights.len() });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("embedder weights"));
        }
        Ok(LinearEmbedder { raw_dim, embed_dim, weights })
    }

    pub fn raw_dim(&self) -> usize {
        self.raw_dim
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Unnormalized projection `Wᵀx`.
    fn project(&self, raw: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.embed_dim];
        for (x, row) in raw.iter().zip(self.weights.chunks_exact(self.embed_dim)) {
            for (zi, w) in z.iter_mut().zip(row) {
                *zi += x * w;
            }
        }
        z
    }

    pub fn embed(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.raw_dim {
            return Err(Error::DimensionMismatch { expected: self.raw_dim, found: raw.len() });
        }
        Ok(normalized(self.project(raw)))
    }

    /// Copies `frames` with every embedding replaced by the embedder output.
    pub fn embed_frames(&self, frames: &[Frame], raw: &[Vec<Vec<f64>>]) -> Result<Vec<Frame>> {
        if frames.len() != raw.len() {
            return Err(Error::DimensionMismatch { expected: frames.len(), found: raw.len() });
        }
        frames
            .iter()
            .zip(raw)
            .map(|(f, r)| {
                if f.detections.len() != r.len() {
                    return Err(Error::DimensionMismatch { expected: f.detections.len(), found: r.len() });
                }
                let detections = f
                    .detections
                    .iter()
                    .zip(r)
                    .map(|(d, x)| Ok(crate::tracker::Detection { embedding: self.embed(x)?, ..d.clone() }))
                    .collect::<Result<_>>()?;
                Ok(Frame { index: f.index, detections })
            })
            .collect()
    }

    /// Gradient step for one query given `∂L/∂q`.
    fn accumulate_grad(&self, raw: &[f64], grad_q: &[f64], acc: &mut [f64]) {
        let z = self.project(raw);
        let norm = dot(&z, &z).sqrt();
        if norm == 0.0 {
            return;
        }
        let q: Vec<f64> = z.iter().map(|v| v / norm).collect();
        let qg = dot(&q, grad_q);
        // ∂L/∂z = (I − q qᵀ) ∂L/∂q / ‖z‖
        let gz: Vec<f64> = grad_q.iter().zip(&q).map(|(g, qi)| (g - qi * qg) / norm).collect();
        for (x, row) in raw.iter().zip(acc.chunks_exact_mut(self.embed_dim)) {
            for (a, g) in row.iter_mut().zip(&gz) {
                *a += x * g;
            }
        }
    }

    /// Text form: a `F D` header line, then `F` rows of `D` coefficients
    /// in shortest round-trip decimal.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.raw_dim, self.embed_dim);
        for row in self.weights.chunks_exact(self.embed_dim) {
            let line: Vec<String> = row.iter().map(|w| format!("{w:?}")).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "missing header".into() })?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Parse { line: 1, msg: format!("bad dimension `{t}`") }))
            .collect::<Result<_>>()?;
        let [f, d] = dims[..] else {
            return Err(Error::Parse { line: 1, msg: "header must be `F D`".into() });
        };
        let mut weights = Vec::with_capacity(f * d);
        for (n, line) in lines {
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| Error::Parse { line: n + 1, msg: format!("bad coefficient `{t}`") }))
                .collect::<Result<_>>()?;
            if row.len() != d {
                return Err(Error::Parse {
                    line: n + 1,
                    msg: format!("expected {d} coefficients, found {}", row.len()),
                });
            }
            weights.extend(row);
        }
        Self::from_weights(f, d, weights)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Queries per SGD update.
    pub batch_size: usize,
    pub seed: u64,
    pub temperature: f64,
    /// Largest frame gap between a query and its historical positive.
    pub max_offset: u32,
    pub sampling: AnchorSampling,
    pub tracker: TrackerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            lr: 0.05,
            batch_size: 16,
            seed: 0,
            temperature: DEFAULT_TEMPERATURE,
            max_offset: 10,
            sampling: AnchorSampling::Uncertainty,
            tracker: TrackerConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr", "must be positive and finite"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::config("temperature", "must be positive"));
        }
        if self.max_offset == 0 {
            return Err(Error::config("max_offset", "must be at least 1"));
        }
        self.tracker.validate()
    }
}

/// Training sequence: detections plus their raw features, aligned by position.
#[derive(Debug, Clone, Copy)]
pub struct TrainingSequence<'a> {
    pub frames: &'a [Frame],
    pub raw: &'a [Vec<Vec<f64>>],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome {
    pub embedder: LinearEmbedder,
    /// Mean per-query loss for each epoch.
    pub epoch_losses: Vec<f64>,
}

struct Query<'a> {
    raw: &'a [f64],
    positives: Vec<Vec<f64>>,
    negatives: Vec<Vec<f64>>,
}

/// Trains a linear embedder on self-generated pseudo-tracklets.
///
/// Each epoch re-embeds every detection, re-runs the tracker to refresh the
/// pseudo-labels, then visits every frame in shuffled order. At frame `t` a
/// tracklet-guided plan picks a target frame `t − τ` (`τ <= max_offset`);
/// every tracklet present in both frames contributes one query whose
/// positives are its own historical detection and its augmented copy, and
/// whose negatives are the other tracklets' detections in both frames.
pub fn train_embedder(sequences: &[TrainingSequence<'_>], cfg: &TrainConfig) -> Result<TrainingOutcome> {
    cfg.validate()?;
    let first = sequences
        .iter()
        .flat_map(|s| s.raw.iter().flatten())
        .next()
        .ok_or_else(|| Error::InsufficientData("no raw features".into()))?;
    let raw_dim = first.len();
    let embed_dim = sequences
        .iter()
        .flat_map(|s| s.frames.iter().flat_map(|f| f.detections.first()))
        .map(|d| d.embedding.len())
        .next()
        .unwrap_or(0);
    if embed_dim < 2 {
        return Err(Error::InsufficientData("embedding dimension below 2".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut embedder = LinearEmbedder::init_with(raw_dim, embed_dim, &mut rng);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut queries: Vec<Query<'_>> = Vec::new();
        for seq in sequences {
            let embedded = embedder.embed_frames(seq.frames, seq.raw)?;
            let run = track_sequence(&embedded, &cfg.tracker)?;
            if run.tracklets.len() < 2 {
                return Err(Error::InsufficientData(format!("sequence produced {} tracklet(s)", run.tracklets.len())));
            }
            let mut order: Vec<usize> = (0..embedded.len()).collect();
            order.shuffle(&mut rng);
            for pos in order {
                collect_queries(seq, &embedded, pos, &run.tracklets, cfg, &mut rng, &mut queries);
            }
        }

        let total_steps = queries.len().div_ceil(cfg.batch_size).max(1);
        let mut loss_sum = 0.0;
        let mut grad = vec![0.0; raw_dim * embed_dim];
        for (step, chunk) in queries.chunks(cfg.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for q in chunk {
                let query = embedder.embed(q.raw)?;
                let mut gq = vec![0.0; embed_dim];
                for pos in &q.positives {
                    let batch = ContrastiveBatch {
                        query: query.clone(),
                        positive: pos.clone(),
                        negatives: q.negatives.clone(),
                        temperature: cfg.temperature,
                    };
                    loss_sum += info_nce(&batch) / q.positives.len() as f64;
                    for (a, g) in gq.iter_mut().zip(info_nce_grad(&batch)) {
                        *a += g / q.positives.len() as f64;
                    }
                }
                embedder.accumulate_grad(q.raw, &gq, &mut grad);
            }
            let progress = (epoch as f64 + step as f64 / total_steps as f64) / cfg.epochs as f64;
            let lr = cfg.lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
            let scale = lr / chunk.len() as f64;
            for (w, g) in embedder.weights.iter_mut().zip(&grad) {
                *w -= scale * g;
            }
        }
        epoch_losses.push(if queries.is_empty() { 0.0 } else { loss_sum / queries.len() as f64 });
    }
    Ok(TrainingOutcome { embedder, epoch_losses })
}

fn collect_queries<'a>(
    seq: &TrainingSequence<'a>,
    embedded: &[Frame],
    pos: usize,
    tracklets: &[Tracklet],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<Query<'a>>,
) {
    let t = embedded[pos].index;
    let Ok(plan) = plan_augmentation(tracklets, t, None, Some(cfg.max_offset), cfg.sampling, rng) else {
        return;
    };
    let Some(target_pos) = embedded.iter().position(|f| f.index == plan.target_frame) else {
        return;
    };
    let current = &embedded[pos];
    let augmented = augment_detections(&current.detections, &plan);
    let target = &embedded[target_pos];

    let members: Vec<(usize, usize)> = tracklets
        .iter()
        .filter_map(|trk| Some((trk.record_at(t)?.det_index, trk.record_at(plan.target_frame)?.det_index)))
        .collect();
    // Every pseudo-labeled detection in either frame; filtered per query below.
    let labeled_now: Vec<usize> = tracklets.iter().filter_map(|trk| Some(trk.record_at(t)?.det_index)).collect();
    let labeled_then: Vec<usize> =
        tracklets.iter().filter_map(|trk| Some(trk.record_at(plan.target_frame)?.det_index)).collect();

    for &(now, then) in &members {
        let negatives: Vec<Vec<f64>> = labeled_then
            .iter()
            .filter(|&&k| k != then)
            .map(|&k| target.detections[k].embedding.clone())
            .chain(labeled_now.iter().filter(|&&k| k != now).map(|&k| current.detections[k].embedding.clone()))
            .collect();
        if negatives.is_empty() {
            continue;
        }
        out.push(Query {
            raw: &seq.raw[pos][now],
            positives: vec![target.detections[then].embedding.clone(), augmented[now].embedding.clone()],
            negatives,
        });
    }
}
