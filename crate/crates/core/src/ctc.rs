//! Phoneme recognizer: a single-layer tanh RNN emitting per-frame posteriors
//! over the inventory plus a blank, trained with the CTC objective.
//!
//! Everything runs in `f64`. The loss is computed with log-space
//! forward-backward over the blank-augmented label sequence, and gradients
//! are back-propagated through time by hand.

use std::collections::BTreeMap;
use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AudioBuffer, PhonemeInventory, PhonemeSequence, SpeechCorpus};
use crate::dsp::{self, DspError, FeatureConfig, FeatureMatrix, FeatureStats};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CtcError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("label sequence of length {labels} needs at least {required} frames, got {frames}")]
    LabelTooLong {
        labels: usize,
        required: usize,
        frames: usize,
    },
    #[error("label id {0} is not a phoneme (blank is {1})")]
    InvalidLabel(usize, usize),
    #[error("reference sequence is empty")]
    EmptyReference,
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("symbol {0:?} is not in the initial model's inventory")]
    InventoryMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("training cancelled")]
    Cancelled,
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("utterance {id}: {source}")]
    Utterance {
        id: String,
        #[source]
        source: Box<CtcError>,
    },
}

/// Dense row-major matrix used for activations and log-probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// In-place log-softmax; returns nothing, the slice holds log-probabilities afterwards.
pub fn log_softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter_mut().for_each(|v| *v -= lse);
}

/// A parameter tensor with an explicit shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    fn check(&self, name: &str, shape: &[usize]) -> Result<(), CtcError> {
        if self.shape != shape || self.data.len() != shape.iter().product::<usize>() {
            return Err(CtcError::InvalidModel(format!(
                "{name}: expected shape {shape:?}, found {:?} with {} values",
                self.shape,
                self.data.len()
            )));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(CtcError::InvalidModel(format!("{name}: non-finite value")));
        }
        Ok(())
    }
}

/// Weights of the recurrent layer and output projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnnParams {
    /// hidden × input
    pub w_x: Tensor,
    /// hidden × hidden
    pub w_h: Tensor,
    /// hidden
    pub b: Tensor,
    /// output × hidden
    pub v: Tensor,
    /// output
    pub c: Tensor,
}

/// Cached activations from a forward pass, needed by [`RnnParams::backward`].
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub hidden: Matrix,
    pub logprobs: Matrix,
}

impl RnnParams {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            w_x: Tensor::zeros(&[hidden, input]),
            w_h: Tensor::zeros(&[hidden, hidden]),
            b: Tensor::zeros(&[hidden]),
            v: Tensor::zeros(&[output, hidden]),
            c: Tensor::zeros(&[output]),
        }
    }

    /// Every parameter drawn uniformly from ±1/√hidden.
    pub fn init(input: usize, hidden: usize, output: usize, seed: u64) -> Self {
        let mut p = Self::zeros(input, hidden, output);
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in p.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = rng.random_range(-bound..bound));
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w_x.shape.get(1).copied().unwrap_or(0)
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_x.shape.first().copied().unwrap_or(0)
    }

    pub fn output_dim(&self) -> usize {
        self.v.shape.first().copied().unwrap_or(0)
    }

    pub fn tensors(&self) -> [&Tensor; 5] {
        [&self.w_x, &self.w_h, &self.b, &self.v, &self.c]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 5] {
        [&mut self.w_x, &mut self.w_h, &mut self.b, &mut self.v, &mut self.c]
    }

    pub fn validate(&self) -> Result<(), CtcError> {
        let (d, h, k) = (self.input_dim(), self.hidden_dim(), self.output_dim());
        self.w_x.check("w_x", &[h, d])?;
        self.w_h.check("w_h", &[h, h])?;
        self.b.check("b", &[h])?;
        self.v.check("v", &[k, h])?;
        self.c.check("c", &[k])
    }

    pub fn forward(&self, features: &FeatureMatrix) -> Result<ForwardPass, CtcError> {
        let (d, h, k) = (self.input_dim(), self.hidden_dim(), self.output_dim());
        if features.n_dims() != d {
            return Err(CtcError::DimensionMismatch {
                expected: d,
                found: features.n_dims(),
            });
        }
        let n = features.n_frames();
        let mut hidden = Matrix::zeros(n, h);
        let mut logprobs = Matrix::zeros(n, k);
        let mut prev = vec![0.0; h];
        for t in 0..n {
            let x = features.row(t);
            let mut cur = self.b.data.clone();
            for (i, acc) in cur.iter_mut().enumerate() {
                let wx = &self.w_x.data[i * d..(i + 1) * d];
                let wh = &self.w_h.data[i * h..(i + 1) * h];
                *acc += dot(wx, x) + dot(wh, &prev);
                *acc = acc.tanh();
            }
            let out = logprobs.row_mut(t);
            for (o, acc) in out.iter_mut().enumerate() {
                *acc = self.c.data[o] + dot(&self.v.data[o * h..(o + 1) * h], &cur);
            }
            log_softmax_in_place(out);
            hidden.row_mut(t).copy_from_slice(&cur);
            prev = cur;
        }
        Ok(ForwardPass { hidden, logprobs })
    }

    /// Back-propagation through time from gradients on the output logits.
    pub fn backward(&self, features: &FeatureMatrix, pass: &ForwardPass, grad_logits: &Matrix) -> RnnParams {
        let (d, h, k) = (self.input_dim(), self.hidden_dim(), self.output_dim());
        let mut g = RnnParams::zeros(d, h, k);
        let n = features.n_frames();
        let mut dh_next = vec![0.0; h];
        let mut da = vec![0.0; h];
        for t in (0..n).rev() {
            let ht = pass.hidden.row(t);
            let dz = grad_logits.row(t);
            let mut dh = dh_next.clone();
            for o in 0..k {
                let dzo = dz[o];
                g.c.data[o] += dzo;
                let vrow = &self.v.data[o * h..(o + 1) * h];
                let gvrow = &mut g.v.data[o * h..(o + 1) * h];
                for i in 0..h {
                    gvrow[i] += dzo * ht[i];
                    dh[i] += vrow[i] * dzo;
                }
            }
            for i in 0..h {
                da[i] = dh[i] * (1.0 - ht[i] * ht[i]);
            }
            let x = features.row(t);
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..h {
                let dai = da[i];
                g.b.data[i] += dai;
                let gwx = &mut g.w_x.data[i * d..(i + 1) * d];
                for (gw, xj) in gwx.iter_mut().zip(x) {
                    *gw += dai * xj;
                }
                let wh = &self.w_h.data[i * h..(i + 1) * h];
                if t > 0 {
                    let hp = pass.hidden.row(t - 1);
                    let gwh = &mut g.w_h.data[i * h..(i + 1) * h];
                    for j in 0..h {
                        gwh[j] += dai * hp[j];
                    }
                }
                for j in 0..h {
                    dh_next[j] += wh[j] * dai;
                }
            }
        }
        g
    }

    fn add_assign(&mut self, other: &RnnParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.data.iter_mut().zip(&b.data).for_each(|(x, y)| *x += y);
        }
    }

    fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|x| *x *= s);
        }
    }

    fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CtcConfig {
    pub hidden_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    pub batch_size: usize,
    pub grad_clip_norm: f64,
    pub features: FeatureConfig,
}

impl Default for CtcConfig {
    fn default() -> Self {
        Self {
            hidden_size: 64,
            epochs: 100,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
            batch_size: 1,
            grad_clip_norm: 5.0,
            features: FeatureConfig::default(),
        }
    }
}

impl CtcConfig {
    pub fn validate(&self) -> Result<(), CtcError> {
        let positive = self.hidden_size > 0
            && self.learning_rate > 0.0
            && self.batch_size > 0
            && self.grad_clip_norm > 0.0
            && self.adam_epsilon > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2);
        if !positive {
            return Err(CtcError::InvalidConfig(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcousticModel {
    pub inventory: PhonemeInventory,
    pub feature_config: FeatureConfig,
    pub feature_stats: FeatureStats,
    pub params: RnnParams,
    pub config: CtcConfig,
}

impl AcousticModel {
    /// Blank id; one past the last phoneme id.
    pub fn blank(&self) -> usize {
        self.inventory.len()
    }

    pub fn validate(&self) -> Result<(), CtcError> {
        self.params.validate()?;
        if self.params.output_dim() != self.inventory.len() + 1 {
            return Err(CtcError::InvalidModel(format!(
                "output dimension {} != inventory size {} + 1",
                self.params.output_dim(),
                self.inventory.len()
            )));
        }
        let d = self.params.input_dim();
        if self.feature_stats.mean.len() != d || self.feature_stats.std.len() != d || self.feature_config.n_mels != d
        {
            return Err(CtcError::InvalidModel("feature dimensions disagree".into()));
        }
        Ok(())
    }

    /// Normalized log-mel features as seen by the network.
    pub fn features(&self, audio: &AudioBuffer) -> Result<FeatureMatrix, CtcError> {
        let raw = dsp::log_mel(audio, &self.feature_config)?;
        Ok(dsp::normalize(&raw, &self.feature_stats)?)
    }

    pub fn transcribe(&self, audio: &AudioBuffer, beam_width: Option<usize>) -> Result<PhonemeSequence, CtcError> {
        let logprobs = model_forward(self, &self.features(audio)?)?;
        Ok(match beam_width {
            Some(w) if w > 1 => beam_decode(&logprobs, w).0,
            _ => greedy_decode(&logprobs),
        })
    }
}

/// Per-frame log-probabilities (`T × (n+1)`, blank last).
pub fn model_forward(model: &AcousticModel, features: &FeatureMatrix) -> Result<Matrix, CtcError> {
    Ok(model.params.forward(features)?.logprobs)
}

fn check_labels(labels: &[usize], blank: usize, frames: usize) -> Result<(), CtcError> {
    if let Some(&bad) = labels.iter().find(|&&l| l >= blank) {
        return Err(CtcError::InvalidLabel(bad, blank));
    }
    let repeats = labels.windows(2).filter(|w| w[0] == w[1]).count();
    let required = labels.len() + repeats;
    if frames < required {
        return Err(CtcError::LabelTooLong {
            labels: labels.len(),
            required,
            frames,
        });
    }
    Ok(())
}

struct Lattice {
    ext: Vec<usize>,
    alpha: Matrix,
    log_prob: f64,
}

fn forward_lattice(logprobs: &Matrix, labels: &[usize]) -> Result<Lattice, CtcError> {
    let blank = logprobs.cols() - 1;
    let t_max = logprobs.rows();
    check_labels(labels, blank, t_max)?;
    let mut ext = Vec::with_capacity(2 * labels.len() + 1);
    ext.push(blank);
    for &l in labels {
        ext.push(l);
        ext.push(blank);
    }
    let s_max = ext.len();
    let mut alpha = Matrix {
        rows: t_max,
        cols: s_max,
        data: vec![f64::NEG_INFINITY; t_max * s_max],
    };
    if t_max == 0 {
        // only reachable with empty labels
        return Ok(Lattice {
            ext,
            alpha,
            log_prob: 0.0,
        });
    }
    alpha.set(0, 0, logprobs.get(0, blank));
    if s_max > 1 {
        alpha.set(0, 1, logprobs.get(0, ext[1]));
    }
    for t in 1..t_max {
        for s in 0..s_max {
            let mut acc = alpha.get(t - 1, s);
            if s >= 1 {
                acc = log_add(acc, alpha.get(t - 1, s - 1));
            }
            if s >= 2 && ext[s] != blank && ext[s] != ext[s - 2] {
                acc = log_add(acc, alpha.get(t - 1, s - 2));
            }
            alpha.set(t, s, acc + logprobs.get(t, ext[s]));
        }
    }
    let mut log_prob = alpha.get(t_max - 1, s_max - 1);
    if s_max > 1 {
        log_prob = log_add(log_prob, alpha.get(t_max - 1, s_max - 2));
    }
    Ok(Lattice { ext, alpha, log_prob })
}

/// `log p(labels | logprobs)` summed over all alignments.
pub fn ctc_log_likelihood(logprobs: &Matrix, labels: &[usize]) -> Result<f64, CtcError> {
    Ok(forward_lattice(logprobs, labels)?.log_prob)
}

/// CTC negative log-likelihood and its gradient with respect to the
/// pre-softmax logits that produced `logprobs`.
pub fn ctc_loss(logprobs: &Matrix, labels: &[usize]) -> Result<(f64, Matrix), CtcError> {
    let Lattice { ext, alpha, log_prob } = forward_lattice(logprobs, labels)?;
    let (t_max, k) = (logprobs.rows(), logprobs.cols());
    let blank = k - 1;
    let s_max = ext.len();
    if !log_prob.is_finite() {
        return Err(CtcError::LabelTooLong {
            labels: labels.len(),
            required: labels.len(),
            frames: t_max,
        });
    }
    // beta(t, s): log-probability of emitting the remaining labels after frame t
    let mut beta = Matrix {
        rows: t_max,
        cols: s_max,
        data: vec![f64::NEG_INFINITY; t_max * s_max],
    };
    if t_max > 0 {
        beta.set(t_max - 1, s_max - 1, 0.0);
        if s_max > 1 {
            beta.set(t_max - 1, s_max - 2, 0.0);
        }
    }
    for t in (0..t_max.saturating_sub(1)).rev() {
        for s in 0..s_max {
            let mut acc = beta.get(t + 1, s) + logprobs.get(t + 1, ext[s]);
            if s + 1 < s_max {
                acc = log_add(acc, beta.get(t + 1, s + 1) + logprobs.get(t + 1, ext[s + 1]));
            }
            if s + 2 < s_max && ext[s + 2] != blank && ext[s + 2] != ext[s] {
                acc = log_add(acc, beta.get(t + 1, s + 2) + logprobs.get(t + 1, ext[s + 2]));
            }
            beta.set(t, s, acc);
        }
    }
    let mut grad = Matrix::zeros(t_max, k);
    for t in 0..t_max {
        let mut occupancy = vec![f64::NEG_INFINITY; k];
        for s in 0..s_max {
            occupancy[ext[s]] = log_add(occupancy[ext[s]], alpha.get(t, s) + beta.get(t, s));
        }
        for c in 0..k {
            let posterior = (occupancy[c] - log_prob).exp();
            grad.set(t, c, logprobs.get(t, c).exp() - posterior);
        }
    }
    Ok((-log_prob, grad))
}

/// Collapses a frame path: merges repeats, then drops blanks.
pub fn collapse_path(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut last = None;
    for &p in path {
        if Some(p) != last && p != blank {
            out.push(p);
        }
        last = Some(p);
    }
    out
}

/// Best-path decoding; ties go to the lowest id.
pub fn greedy_decode(logprobs: &Matrix) -> PhonemeSequence {
    let blank = logprobs.cols() - 1;
    let path: Vec<usize> = (0..logprobs.rows())
        .map(|t| {
            let row = logprobs.row(t);
            (0..row.len()).fold(0, |best, c| if row[c] > row[best] { c } else { best })
        })
        .collect();
    PhonemeSequence(collapse_path(&path, blank))
}

/// CTC prefix beam search. Returns the best prefix and its log-probability.
pub fn beam_decode(logprobs: &Matrix, width: usize) -> (PhonemeSequence, f64) {
    let width = width.max(1);
    let blank = logprobs.cols() - 1;
    // prefix -> (log p ending in blank, log p ending in non-blank)
    let mut beams: BTreeMap<Vec<usize>, (f64, f64)> = BTreeMap::new();
    beams.insert(Vec::new(), (0.0, f64::NEG_INFINITY));
    for t in 0..logprobs.rows() {
        let row = logprobs.row(t);
        let mut next: BTreeMap<Vec<usize>, (f64, f64)> = BTreeMap::new();
        for (prefix, &(pb, pnb)) in &beams {
            let total = log_add(pb, pnb);
            let entry = next.entry(prefix.clone()).or_insert((f64::NEG_INFINITY, f64::NEG_INFINITY));
            entry.0 = log_add(entry.0, total + row[blank]);
            for c in (0..blank).filter(|&c| row[c] > f64::NEG_INFINITY) {
                let mut extended = prefix.clone();
                extended.push(c);
                if prefix.last() == Some(&c) {
                    let e = next.entry(extended).or_insert((f64::NEG_INFINITY, f64::NEG_INFINITY));
                    e.1 = log_add(e.1, pb + row[c]);
                    let same = next.get_mut(prefix).expect("inserted above");
                    same.1 = log_add(same.1, pnb + row[c]);
                } else {
                    let e = next.entry(extended).or_insert((f64::NEG_INFINITY, f64::NEG_INFINITY));
                    e.1 = log_add(e.1, total + row[c]);
                }
            }
        }
        let mut ranked: Vec<(Vec<usize>, (f64, f64))> = next.into_iter().collect();
        // stable sort keeps lexicographic order among equal scores
        ranked.sort_by(|a, b| log_add(b.1 .0, b.1 .1).total_cmp(&log_add(a.1 .0, a.1 .1)));
        ranked.truncate(width);
        beams = ranked.into_iter().collect();
    }
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    for (prefix, (pb, pnb)) in beams {
        let score = log_add(pb, pnb);
        if score > best.1 {
            best = (prefix, score);
        }
    }
    (PhonemeSequence(best.0), best.1)
}

/// Unit-cost Levenshtein distance.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=hypothesis.len()).collect();
    let mut cur = vec![0; hypothesis.len() + 1];
    for (i, r) in reference.iter().enumerate() {
        cur[0] = i + 1;
        for (j, h) in hypothesis.iter().enumerate() {
            let sub = prev[j] + usize::from(r != h);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[hypothesis.len()]
}

/// Edit distance divided by the reference length; may exceed 1.
pub fn phoneme_error_rate(reference: &PhonemeSequence, hypothesis: &PhonemeSequence) -> Result<f64, CtcError> {
    if reference.is_empty() {
        return Err(CtcError::EmptyReference);
    }
    Ok(edit_distance(reference.ids(), hypothesis.ids()) as f64 / reference.len() as f64)
}

/// Pooled error rate: total edits over total reference length.
pub fn corpus_error_rate<'a, I>(pairs: I) -> Result<f64, CtcError>
where
    I: IntoIterator<Item = (&'a [usize], &'a [usize])>,
{
    let (mut edits, mut total) = (0usize, 0usize);
    for (r, h) in pairs {
        edits += edit_distance(r, h);
        total += r.len();
    }
    if total == 0 {
        return Err(CtcError::EmptyReference);
    }
    Ok(edits as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub final_per: f64,
    pub epochs: usize,
}

/// Progress notification passed to the training observer after each epoch.
#[derive(Debug, Clone, Copy)]
pub struct EpochEvent {
    pub epoch: usize,
    pub total_epochs: usize,
    pub mean_loss: f64,
}

pub fn train_acoustic(
    corpus: &SpeechCorpus,
    cfg: &CtcConfig,
    init: Option<&AcousticModel>,
) -> Result<(AcousticModel, TrainReport), CtcError> {
    train_acoustic_with(corpus, cfg, init, |_| ControlFlow::Continue(()))
}

struct Adam {
    m: RnnParams,
    v: RnnParams,
    step: i32,
}

impl Adam {
    fn new(like: &RnnParams) -> Self {
        let zeros = RnnParams::zeros(like.input_dim(), like.hidden_dim(), like.output_dim());
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    fn update(&mut self, params: &mut RnnParams, grad: &RnnParams, cfg: &CtcConfig) {
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step);
        let bc2 = 1.0 - cfg.beta2.powi(self.step);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grad.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for (((p, g), m), v) in tensors {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * gi;
                v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * gi * gi;
                let mhat = m.data[i] / bc1;
                let vhat = v.data[i] / bc2;
                p.data[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.adam_epsilon);
            }
        }
    }
}

/// Trains (or fine-tunes, when `init` is given) an acoustic model.
///
/// `observer` runs after every epoch; returning `Break` aborts with
/// [`CtcError::Cancelled`].
pub fn train_acoustic_with<F>(
    corpus: &SpeechCorpus,
    cfg: &CtcConfig,
    init: Option<&AcousticModel>,
    mut observer: F,
) -> Result<(AcousticModel, TrainReport), CtcError>
where
    F: FnMut(EpochEvent) -> ControlFlow<()>,
{
    if corpus.is_empty() {
        return Err(CtcError::EmptyCorpus);
    }
    cfg.validate()?;
    let (inventory, remap): (PhonemeInventory, Vec<usize>) = match init {
        Some(m) => {
            let remap = corpus
                .inventory
                .symbols()
                .iter()
                .map(|s| m.inventory.id(s).ok_or_else(|| CtcError::InventoryMismatch(s.clone())))
                .collect::<Result<_, _>>()?;
            (m.inventory.clone(), remap)
        }
        None => (corpus.inventory.clone(), (0..corpus.inventory.len()).collect()),
    };
    let feature_config = init.map_or_else(|| cfg.features.clone(), |m| m.feature_config.clone());

    let mut raw = Vec::with_capacity(corpus.len());
    for item in &corpus.items {
        let feats = dsp::log_mel(&item.audio, &feature_config).map_err(|e| CtcError::Utterance {
            id: item.utterance_id.clone(),
            source: Box::new(e.into()),
        })?;
        raw.push(feats);
    }
    let feature_stats = match init {
        Some(m) => m.feature_stats.clone(),
        None => FeatureStats::compute(&raw)?,
    };
    let mut data = Vec::with_capacity(corpus.len());
    for (item, feats) in corpus.items.iter().zip(&raw) {
        let labels: Vec<usize> = item.transcript.ids().iter().map(|&id| remap[id]).collect();
        let feats = dsp::normalize(feats, &feature_stats)?;
        check_labels(&labels, inventory.len(), feats.n_frames()).map_err(|e| CtcError::Utterance {
            id: item.utterance_id.clone(),
            source: Box::new(e),
        })?;
        data.push((feats, labels));
    }

    let mut params = match init {
        Some(m) => {
            m.validate()?;
            m.params.clone()
        }
        None => RnnParams::init(feature_config.n_mels, cfg.hidden_size, inventory.len() + 1, cfg.seed),
    };
    let mut adam = Adam::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let (d, h, k) = (params.input_dim(), params.hidden_dim(), params.output_dim());

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = RnnParams::zeros(d, h, k);
            for &idx in batch {
                let (feats, labels) = &data[idx];
                let pass = params.forward(feats)?;
                let (loss, dlogits) = ctc_loss(&pass.logprobs, labels)?;
                total += loss;
                grad.add_assign(&params.backward(feats, &pass, &dlogits));
            }
            grad.scale(1.0 / batch.len() as f64);
            let norm = grad.l2_norm();
            if norm > cfg.grad_clip_norm {
                grad.scale(cfg.grad_clip_norm / norm);
            }
            adam.update(&mut params, &grad, cfg);
        }
        let mean_loss = total / data.len() as f64;
        epoch_losses.push(mean_loss);
        let event = EpochEvent {
            epoch: epoch + 1,
            total_epochs: cfg.epochs,
            mean_loss,
        };
        if observer(event).is_break() {
            return Err(CtcError::Cancelled);
        }
    }

    let mut decoded = Vec::with_capacity(data.len());
    for (feats, labels) in &data {
        let hyp = greedy_decode(&params.forward(feats)?.logprobs);
        decoded.push((labels.clone(), hyp.0));
    }
    let final_per = corpus_error_rate(decoded.iter().map(|(r, h)| (r.as_slice(), h.as_slice())))?;
    let mut config = cfg.clone();
    config.hidden_size = params.hidden_dim();
    config.features = feature_config.clone();
    let model = AcousticModel {
        inventory,
        feature_config,
        feature_stats,
        params,
        config,
    };
    Ok((
        model,
        TrainReport {
            epochs: epoch_losses.len(),
            epoch_losses,
            final_per,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs_to_logprobs(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.iter().map(|p| p.ln()).collect()).collect::<Vec<_>>())
    }

    /// Sums every frame path that collapses to `labels`.
    fn brute_force_prob(logprobs: &Matrix, labels: &[usize]) -> f64 {
        let (t_max, k) = (logprobs.rows(), logprobs.cols());
        let mut total = 0.0;
        let mut path = vec![0usize; t_max];
        for code in 0..k.pow(t_max as u32) {
            let mut c = code;
            for p in path.iter_mut() {
                *p = c % k;
                c /= k;
            }
            if collapse_path(&path, k - 1) == labels {
                total += path.iter().enumerate().map(|(t, &p)| logprobs.get(t, p)).sum::<f64>().exp();
            }
        }
        total
    }

    #[test]
    fn two_frame_example() {
        let lp = probs_to_logprobs(&[vec![0.6, 0.4], vec![0.5, 0.5]]);
        assert!((brute_force_prob(&lp, &[0]) - 0.8).abs() < 1e-12);
        let (loss, _) = ctc_loss(&lp, &[0]).unwrap();
        assert!((loss - (-(0.8f64).ln())).abs() < 1e-12);
        assert!((loss - 0.22314).abs() < 1e-5);
    }

    #[test]
    fn single_frame_single_path() {
        let lp = probs_to_logprobs(&[vec![0.3, 0.7]]);
        let (loss, _) = ctc_loss(&lp, &[0]).unwrap();
        assert!((loss + 0.3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn repeated_labels_need_a_blank() {
        let lp = probs_to_logprobs(&[vec![0.5, 0.5], vec![0.5, 0.5]]);
        assert_eq!(
            ctc_loss(&lp, &[0, 0]).unwrap_err(),
            CtcError::LabelTooLong {
                labels: 2,
                required: 3,
                frames: 2
            }
        );
        let lp3 = probs_to_logprobs(&[vec![0.5, 0.5], vec![0.5, 0.5], vec![0.5, 0.5]]);
        let (loss, _) = ctc_loss(&lp3, &[0, 0]).unwrap();
        assert!((loss + 0.125f64.ln()).abs() < 1e-12);
        assert_eq!(ctc_loss(&lp3, &[1]).unwrap_err(), CtcError::InvalidLabel(1, 1));
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let lp = probs_to_logprobs(&[vec![0.2, 0.3, 0.5], vec![0.6, 0.1, 0.3], vec![0.3, 0.3, 0.4]]);
        let (_, grad) = ctc_loss(&lp, &[0, 1]).unwrap();
        for t in 0..3 {
            assert!(grad.row(t).iter().sum::<f64>().abs() < 1e-12);
        }
    }

    fn tiny_model(inventory: &[&str], hidden: usize, dims: usize, seed: u64) -> AcousticModel {
        let inventory = PhonemeInventory::from_symbols(inventory.iter().copied()).unwrap();
        let k = inventory.len() + 1;
        AcousticModel {
            inventory,
            feature_config: FeatureConfig {
                n_mels: dims,
                ..FeatureConfig::default()
            },
            feature_stats: FeatureStats::identity(dims),
            params: RnnParams::init(dims, hidden, k, seed),
            config: CtcConfig::default(),
        }
    }

    #[test]
    fn forward_with_zero_weights_is_uniform() {
        let mut model = tiny_model(&["a", "b"], 4, 3, 1);
        model.params = RnnParams::zeros(3, 4, 3);
        let feats = FeatureMatrix::from_rows(vec![vec![1.0, -2.0, 0.5]; 5], 100.0).unwrap();
        let lp = model_forward(&model, &feats).unwrap();
        assert_eq!((lp.rows(), lp.cols()), (5, 3));
        for v in lp.as_slice() {
            assert!((v - (1.0f64 / 3.0).ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_rows_normalize_and_check_dims() {
        let model = tiny_model(&["a", "b", "c"], 6, 4, 9);
        let feats = FeatureMatrix::from_rows((0..7).map(|t| vec![t as f64 * 0.3 - 1.0; 4]).collect(), 100.0).unwrap();
        let lp = model_forward(&model, &feats).unwrap();
        for t in 0..lp.rows() {
            let s: f64 = lp.row(t).iter().map(|v| v.exp()).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
        let wrong = FeatureMatrix::from_rows(vec![vec![0.0; 5]], 100.0).unwrap();
        assert_eq!(
            model_forward(&model, &wrong).unwrap_err(),
            CtcError::DimensionMismatch { expected: 4, found: 5 }
        );
    }

    #[test]
    fn greedy_collapse_rules() {
        // ids: a=0, b=1, blank=2
        let one_hot = |path: &[usize]| {
            let rows: Vec<Vec<f64>> = path
                .iter()
                .map(|&p| (0..3).map(|c| if c == p { 0.9 } else { 0.05 }).collect())
                .collect();
            probs_to_logprobs(&rows)
        };
        assert_eq!(greedy_decode(&one_hot(&[0, 0, 2, 1])).ids(), &[0, 1]);
        assert!(greedy_decode(&one_hot(&[2, 2, 2])).is_empty());
        assert_eq!(greedy_decode(&one_hot(&[0, 2, 0])).ids(), &[0, 0]);
        // exact tie goes to the lowest id
        let tie = probs_to_logprobs(&[vec![0.4, 0.4, 0.2]]);
        assert_eq!(greedy_decode(&tie).ids(), &[0]);
    }

    #[test]
    fn beam_matches_greedy_on_one_hot() {
        let rows = vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 0.0], vec![0.0, 1.0, 0.0]];
        let lp = probs_to_logprobs(&rows);
        let (seq, score) = beam_decode(&lp, 4);
        assert_eq!(seq, greedy_decode(&lp));
        assert_eq!(score, 0.0);
    }

    #[test]
    fn per_examples() {
        let s = |v: &[usize]| PhonemeSequence(v.to_vec());
        assert_eq!(phoneme_error_rate(&s(&[0, 1, 2, 1]), &s(&[0, 1, 2, 1])).unwrap(), 0.0);
        assert_eq!(phoneme_error_rate(&s(&[0, 1, 2, 1]), &s(&[0, 1, 2])).unwrap(), 0.25);
        assert_eq!(phoneme_error_rate(&s(&[0]), &s(&[1, 2])).unwrap(), 2.0);
        assert_eq!(phoneme_error_rate(&s(&[]), &s(&[1])), Err(CtcError::EmptyReference));
    }

    #[test]
    fn edit_distance_basics() {
        assert_eq!(edit_distance(b"kitten", b"sitting"), 3);
        assert_eq!(edit_distance::<u8>(b"", b"abc"), 3);
        assert_eq!(edit_distance::<u8>(b"abc", b""), 3);
    }
}
