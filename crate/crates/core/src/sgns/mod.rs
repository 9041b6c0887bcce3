//! Negative-sampling trainer for skip-gram, CBOW and subword (FastText)
//! embeddings.
//!
//! Parameters are stored as `f32`; dot products and gradients accumulate
//! in `f64`. In FastText mode the input matrix holds only hashed n-gram
//! buckets: a word is represented by the sum of its n-gram rows during
//! training and by their mean when embeddings are emitted.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{NegativeSamplingTable, Sentence, Vocabulary};
use crate::embio::WordEmbeddings;
use crate::error::{Error, Result};
use crate::math::{axpy, decayed_lr, dot, log_sigmoid, sigmoid, Hogwild};

mod ngrams;

pub use ngrams::{fnv1a, ngrams, NgramSet};

/// Exponent applied to unigram counts for the noise distribution.
pub const NOISE_POWER: f64 = 0.75;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SgnsMode {
    SkipGram,
    Cbow,
    FastText,
}

impl SgnsMode {
    pub fn name(self) -> &'static str {
        match self {
            SgnsMode::SkipGram => "w2v-sg",
            SgnsMode::Cbow => "w2v-cbow",
            SgnsMode::FastText => "fasttext",
        }
    }

    /// Conventional starting learning rate for the mode.
    pub fn default_lr(self) -> f64 {
        match self {
            SgnsMode::Cbow => 0.05,
            SgnsMode::SkipGram | SgnsMode::FastText => 0.025,
        }
    }
}

impl fmt::Display for SgnsMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SgnsMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "w2v-sg" | "skipgram" => Ok(SgnsMode::SkipGram),
            "w2v-cbow" | "cbow" => Ok(SgnsMode::Cbow),
            "fasttext" => Ok(SgnsMode::FastText),
            _ => Err(Error::InvalidConfig(format!("unknown model {s:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SgnsConfig {
    pub dim: usize,
    /// Maximum context radius; the radius for each position is drawn
    /// uniformly from `1..=window`.
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub initial_lr: f64,
    pub mode: SgnsMode,
    pub min_n: usize,
    pub max_n: usize,
    pub bucket_count: u32,
    pub seed: u64,
    pub workers: usize,
    /// Write per-epoch progress lines to standard error.
    pub verbose: bool,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        SgnsConfig {
            dim: 300,
            window: 5,
            negatives: 5,
            epochs: 10,
            initial_lr: SgnsMode::SkipGram.default_lr(),
            mode: SgnsMode::SkipGram,
            min_n: 3,
            max_n: 6,
            bucket_count: 2_000_000,
            seed: 1,
            workers: 1,
            verbose: false,
        }
    }
}

impl SgnsConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.dim == 0 {
            return bad("dim must be at least 1");
        }
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if self.negatives == 0 {
            return bad("negatives must be at least 1");
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.min_n == 0 || self.min_n > self.max_n {
            return bad("n-gram bounds must satisfy 1 <= min_n <= max_n");
        }
        if self.bucket_count == 0 {
            return bad("bucket_count must be at least 1");
        }
        Ok(())
    }

    fn metadata(&self) -> Vec<(&'static str, String)> {
        let mut m = vec![
            ("model", self.mode.name().to_owned()),
            ("dim", self.dim.to_string()),
            ("window", self.window.to_string()),
            ("negatives", self.negatives.to_string()),
            ("epochs", self.epochs.to_string()),
            ("lr", self.initial_lr.to_string()),
            ("seed", self.seed.to_string()),
        ];
        if self.mode == SgnsMode::FastText {
            m.push(("min_n", self.min_n.to_string()));
            m.push(("max_n", self.max_n.to_string()));
            m.push(("buckets", self.bucket_count.to_string()));
        }
        m
    }
}

/// Sparse gradient of a single training example, one entry per touched
/// row.
#[derive(Clone, Debug, Default)]
pub struct Gradient {
    pub loss: f64,
    pub input: BTreeMap<u32, Vec<f64>>,
    pub output: BTreeMap<u32, Vec<f64>>,
}

/// Reusable buffers for one worker.
struct Scratch {
    hidden: Vec<f64>,
    grad_hidden: Vec<f64>,
    coeffs: Vec<f64>,
}

impl Scratch {
    fn new(dim: usize) -> Self {
        Scratch {
            hidden: vec![0.0; dim],
            grad_hidden: vec![0.0; dim],
            coeffs: Vec::new(),
        }
    }
}

/// Input (`u`) and output (`v`) matrices of a negative-sampling model.
#[derive(Clone, Debug)]
pub struct SgnsModel {
    mode: SgnsMode,
    dim: usize,
    vocab: Vocabulary,
    min_n: usize,
    max_n: usize,
    bucket_count: u32,
    input: Vec<f32>,
    output: Vec<f32>,
    /// Input rows making up each vocabulary word.
    subwords: Vec<Vec<u32>>,
}

impl SgnsModel {
    /// Input rows uniform in `[-0.5/d, 0.5/d]`, output rows zero.
    pub fn new<R: Rng + ?Sized>(vocab: &Vocabulary, cfg: &SgnsConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        if vocab.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        let (input_rows, subwords) = match cfg.mode {
            SgnsMode::FastText => (
                cfg.bucket_count as usize,
                vocab
                    .words()
                    .iter()
                    .map(|w| NgramSet::new(w, cfg.min_n, cfg.max_n, cfg.bucket_count).ngram_ids)
                    .collect(),
            ),
            _ => (vocab.len(), (0..vocab.len() as u32).map(|i| vec![i]).collect()),
        };
        let bound = 0.5 / cfg.dim as f64;
        let input = (0..input_rows * cfg.dim)
            .map(|_| rng.gen_range(-bound..=bound) as f32)
            .collect();
        Ok(SgnsModel {
            mode: cfg.mode,
            dim: cfg.dim,
            vocab: vocab.clone(),
            min_n: cfg.min_n,
            max_n: cfg.max_n,
            bucket_count: cfg.bucket_count,
            input,
            output: vec![0.0; vocab.len() * cfg.dim],
            subwords,
        })
    }

    pub fn mode(&self) -> SgnsMode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn input(&self) -> &[f32] {
        &self.input
    }

    pub fn output(&self) -> &[f32] {
        &self.output
    }

    pub fn input_mut(&mut self) -> &mut [f32] {
        &mut self.input
    }

    pub fn output_mut(&mut self) -> &mut [f32] {
        &mut self.output
    }

    /// Input rows composing `word` (a single row outside FastText mode).
    pub fn input_rows(&self, word: u32) -> &[u32] {
        &self.subwords[word as usize]
    }

    fn input_row(&self, row: u32) -> &[f32] {
        let s = row as usize * self.dim;
        &self.input[s..s + self.dim]
    }

    fn output_row(&self, row: u32) -> &[f32] {
        let s = row as usize * self.dim;
        &self.output[s..s + self.dim]
    }

    fn check_ids(&self, ids: &[u32]) -> Result<()> {
        match ids.iter().find(|&&id| id as usize >= self.vocab.len()) {
            Some(&id) => Err(Error::InvalidConfig(format!(
                "word id {id} out of range for vocabulary of {}",
                self.vocab.len()
            ))),
            None => Ok(()),
        }
    }

    /// Sum of the input rows of `word` into `out`.
    fn word_sum(&self, word: u32, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        self.add_word(word, 1.0, out);
    }

    fn add_word(&self, word: u32, scale: f64, out: &mut [f64]) {
        for &row in self.input_rows(word) {
            for (o, &x) in out.iter_mut().zip(self.input_row(row)) {
                *o += scale * x as f64;
            }
        }
    }

    /// Mean over context words of their input representation.
    fn context_mean(&self, context: &[u32], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        let scale = 1.0 / context.len() as f64;
        for &w in context {
            self.add_word(w, scale, out);
        }
    }

    /// Loss and `dℓ/d(dot)` coefficients for the positive target followed
    /// by the negatives; accumulates `dℓ/dh` into `grad_hidden`.
    fn score_targets(
        &self,
        hidden: &[f64],
        positive: u32,
        negatives: &[u32],
        coeffs: &mut Vec<f64>,
        grad_hidden: &mut [f64],
        input_owner: u32,
    ) -> Result<f64> {
        coeffs.clear();
        grad_hidden.iter_mut().for_each(|x| *x = 0.0);
        let mut loss = 0.0;
        for (i, &target) in std::iter::once(&positive).chain(negatives).enumerate() {
            let v = self.output_row(target);
            let score = dot(v, hidden);
            if !score.is_finite() {
                return Err(if hidden.iter().all(|x| x.is_finite()) {
                    Error::NumericOverflow {
                        matrix: "output",
                        row: target as usize,
                    }
                } else {
                    Error::NumericOverflow {
                        matrix: "input",
                        row: input_owner as usize,
                    }
                });
            }
            let (label, signed) = if i == 0 { (1.0, score) } else { (0.0, -score) };
            loss -= log_sigmoid(signed);
            let g = sigmoid(score) - label;
            coeffs.push(g);
            for (gh, &x) in grad_hidden.iter_mut().zip(v) {
                *gh += g * x as f64;
            }
        }
        Ok(loss)
    }

    fn apply_output(&mut self, positive: u32, negatives: &[u32], coeffs: &[f64], hidden: &[f64], lr: f64) {
        let dim = self.dim;
        for (&target, &g) in std::iter::once(&positive).chain(negatives).zip(coeffs) {
            let s = target as usize * dim;
            axpy(&mut self.output[s..s + dim], -lr * g, hidden);
        }
    }

    fn apply_input(&mut self, word: u32, scale: f64, grad_hidden: &[f64]) {
        let dim = self.dim;
        for i in 0..self.subwords[word as usize].len() {
            let s = self.subwords[word as usize][i] as usize * dim;
            axpy(&mut self.input[s..s + dim], -scale, grad_hidden);
        }
    }

    /// Negative-sampling loss of predicting `context` from `center`,
    /// without updating.
    pub fn sgns_loss(&self, center: u32, context: u32, negatives: &[u32]) -> Result<f64> {
        self.check_ids(&[center, context])?;
        self.check_ids(negatives)?;
        let mut s = Scratch::new(self.dim);
        self.word_sum(center, &mut s.hidden);
        self.score_targets(&s.hidden, context, negatives, &mut s.coeffs, &mut s.grad_hidden, center)
    }

    pub fn sgns_gradient(&self, center: u32, context: u32, negatives: &[u32]) -> Result<Gradient> {
        self.check_ids(&[center, context])?;
        self.check_ids(negatives)?;
        let mut s = Scratch::new(self.dim);
        self.word_sum(center, &mut s.hidden);
        let loss = self.score_targets(&s.hidden, context, negatives, &mut s.coeffs, &mut s.grad_hidden, center)?;
        let mut grad = Gradient {
            loss,
            ..Default::default()
        };
        self.collect_output_grad(&mut grad, context, negatives, &s.coeffs, &s.hidden);
        self.collect_input_grad(&mut grad, &[center], 1.0, &s.grad_hidden);
        Ok(grad)
    }

    /// One SGD step on the skip-gram loss. Returns the loss before the
    /// update.
    pub fn sgns_step(&mut self, center: u32, context: u32, negatives: &[u32], lr: f64) -> Result<f64> {
        self.check_ids(&[center, context])?;
        self.check_ids(negatives)?;
        let mut s = Scratch::new(self.dim);
        self.sgns_step_with(center, context, negatives, lr, &mut s)
    }

    fn sgns_step_with(&mut self, center: u32, context: u32, negatives: &[u32], lr: f64, s: &mut Scratch) -> Result<f64> {
        self.word_sum(center, &mut s.hidden);
        let loss = self.score_targets(&s.hidden, context, negatives, &mut s.coeffs, &mut s.grad_hidden, center)?;
        self.apply_output(context, negatives, &s.coeffs, &s.hidden, lr);
        self.apply_input(center, lr, &s.grad_hidden);
        Ok(loss)
    }

    /// Negative-sampling loss of predicting `target` from the mean of the
    /// context representations. Zero for an empty context.
    pub fn cbow_loss(&self, context: &[u32], target: u32, negatives: &[u32]) -> Result<f64> {
        self.check_ids(context)?;
        self.check_ids(&[target])?;
        self.check_ids(negatives)?;
        if context.is_empty() {
            return Ok(0.0);
        }
        let mut s = Scratch::new(self.dim);
        self.context_mean(context, &mut s.hidden);
        self.score_targets(&s.hidden, target, negatives, &mut s.coeffs, &mut s.grad_hidden, context[0])
    }

    pub fn cbow_gradient(&self, context: &[u32], target: u32, negatives: &[u32]) -> Result<Gradient> {
        self.check_ids(context)?;
        self.check_ids(&[target])?;
        self.check_ids(negatives)?;
        if context.is_empty() {
            return Ok(Gradient::default());
        }
        let mut s = Scratch::new(self.dim);
        self.context_mean(context, &mut s.hidden);
        let loss = self.score_targets(&s.hidden, target, negatives, &mut s.coeffs, &mut s.grad_hidden, context[0])?;
        let mut grad = Gradient {
            loss,
            ..Default::default()
        };
        self.collect_output_grad(&mut grad, target, negatives, &s.coeffs, &s.hidden);
        self.collect_input_grad(&mut grad, context, 1.0 / context.len() as f64, &s.grad_hidden);
        Ok(grad)
    }

    /// One SGD step on the CBOW loss; an empty context is skipped.
    pub fn cbow_step(&mut self, context: &[u32], target: u32, negatives: &[u32], lr: f64) -> Result<f64> {
        self.check_ids(context)?;
        self.check_ids(&[target])?;
        self.check_ids(negatives)?;
        let mut s = Scratch::new(self.dim);
        self.cbow_step_with(context, target, negatives, lr, &mut s)
    }

    fn cbow_step_with(&mut self, context: &[u32], target: u32, negatives: &[u32], lr: f64, s: &mut Scratch) -> Result<f64> {
        if context.is_empty() {
            return Ok(0.0);
        }
        self.context_mean(context, &mut s.hidden);
        let loss = self.score_targets(&s.hidden, target, negatives, &mut s.coeffs, &mut s.grad_hidden, context[0])?;
        self.apply_output(target, negatives, &s.coeffs, &s.hidden, lr);
        let scale = lr / context.len() as f64;
        for &w in context {
            self.apply_input(w, scale, &s.grad_hidden);
        }
        Ok(loss)
    }

    fn collect_output_grad(&self, grad: &mut Gradient, positive: u32, negatives: &[u32], coeffs: &[f64], hidden: &[f64]) {
        for (&t, &g) in std::iter::once(&positive).chain(negatives).zip(coeffs) {
            let row = grad.output.entry(t).or_insert_with(|| vec![0.0; self.dim]);
            for (r, h) in row.iter_mut().zip(hidden) {
                *r += g * h;
            }
        }
    }

    fn collect_input_grad(&self, grad: &mut Gradient, words: &[u32], scale: f64, grad_hidden: &[f64]) {
        for &w in words {
            for &row_id in self.input_rows(w) {
                let row = grad.input.entry(row_id).or_insert_with(|| vec![0.0; self.dim]);
                for (r, g) in row.iter_mut().zip(grad_hidden) {
                    *r += scale * g;
                }
            }
        }
    }

    /// Mean of the given input rows.
    fn mean_rows(&self, rows: &[u32]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &r in rows {
            for (o, &x) in out.iter_mut().zip(self.input_row(r)) {
                *o += x as f64;
            }
        }
        let n = rows.len() as f64;
        out.iter_mut().for_each(|x| *x /= n);
        out
    }

    /// Vector for an arbitrary word. Known words get their emitted
    /// embedding; in FastText mode unknown words are composed from their
    /// n-gram rows, otherwise `None`.
    pub fn word_vector(&self, word: &str) -> Option<Vec<f64>> {
        if let Some(id) = self.vocab.id(word) {
            return Some(self.mean_rows(self.input_rows(id)));
        }
        if self.mode != SgnsMode::FastText || word.is_empty() {
            return None;
        }
        let set = NgramSet::new(word, self.min_n, self.max_n, self.bucket_count);
        Some(self.mean_rows(&set.ngram_ids))
    }

    /// Emitted embeddings: input rows, or the mean of each word's n-gram
    /// rows in FastText mode.
    pub fn embeddings(&self) -> Result<WordEmbeddings> {
        let mut matrix = Vec::with_capacity(self.vocab.len() * self.dim);
        for id in 0..self.vocab.len() as u32 {
            matrix.extend(self.mean_rows(self.input_rows(id)).into_iter().map(|x| x as f32));
        }
        WordEmbeddings::new(self.vocab.clone(), self.dim, matrix)
    }
}

/// Result of [`train`].
#[derive(Debug)]
pub struct Trained {
    pub embeddings: WordEmbeddings,
    pub model: SgnsModel,
    /// Mean loss per training example for each epoch.
    pub epoch_losses: Vec<f64>,
}

struct Progress {
    processed: AtomicU64,
    total: u64,
}

impl Progress {
    fn lr(&self, initial: f64) -> f64 {
        let done = self.processed.load(Ordering::Relaxed);
        decayed_lr(initial, done as f64 / self.total.max(1) as f64)
    }
}

fn train_shard<R: Rng>(
    model: &mut SgnsModel,
    shard: &[Vec<u32>],
    cfg: &SgnsConfig,
    table: &NegativeSamplingTable,
    progress: &Progress,
    rng: &mut R,
) -> Result<(f64, u64)> {
    let mut scratch = Scratch::new(cfg.dim);
    let mut negatives = Vec::with_capacity(cfg.negatives);
    let mut context = Vec::with_capacity(2 * cfg.window);
    let (mut loss_sum, mut examples) = (0.0, 0u64);

    for sentence in shard {
        for t in 0..sentence.len() {
            let lr = progress.lr(cfg.initial_lr);
            let radius = rng.gen_range(1..=cfg.window);
            let lo = t.saturating_sub(radius);
            let hi = (t + radius).min(sentence.len() - 1);
            match cfg.mode {
                SgnsMode::SkipGram | SgnsMode::FastText => {
                    for j in (lo..=hi).filter(|&j| j != t) {
                        table.sample_negatives(rng, sentence[j], cfg.negatives, &mut negatives);
                        loss_sum += model.sgns_step_with(sentence[t], sentence[j], &negatives, lr, &mut scratch)?;
                        examples += 1;
                    }
                }
                SgnsMode::Cbow => {
                    context.clear();
                    context.extend((lo..=hi).filter(|&j| j != t).map(|j| sentence[j]));
                    if !context.is_empty() {
                        table.sample_negatives(rng, sentence[t], cfg.negatives, &mut negatives);
                        loss_sum += model.cbow_step_with(&context, sentence[t], &negatives, lr, &mut scratch)?;
                        examples += 1;
                    }
                }
            }
            progress.processed.fetch_add(1, Ordering::Relaxed);
        }
    }
    Ok((loss_sum, examples))
}

fn worker_seed(seed: u64, epoch: usize, worker: usize, workers: usize) -> u64 {
    seed ^ ((epoch * workers + worker + 1) as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Train embeddings over `corpus` for `cfg.epochs` passes.
///
/// With a single worker and a fixed seed the output is bit-reproducible.
/// With several workers the matrices are updated without locks.
pub fn train(corpus: &[Sentence], vocab: &Vocabulary, cfg: &SgnsConfig) -> Result<Trained> {
    cfg.validate()?;
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let encoded: Vec<Vec<u32>> = corpus
        .iter()
        .map(|s| vocab.encode(s))
        .filter(|s| !s.is_empty())
        .collect();
    let tokens: u64 = encoded.iter().map(|s| s.len() as u64).sum();
    if tokens == 0 {
        return Err(Error::EmptyCorpus);
    }

    let table = NegativeSamplingTable::new(vocab, NOISE_POWER)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = SgnsModel::new(vocab, cfg, &mut rng)?;
    let progress = Progress {
        processed: AtomicU64::new(0),
        total: tokens * cfg.epochs as u64,
    };
    let workers = cfg.workers.max(1).min(encoded.len());
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let (loss_sum, examples) = if workers == 1 {
            train_shard(&mut model, &encoded, cfg, &table, &progress, &mut rng)?
        } else {
            let shared = Hogwild(&mut model as *mut SgnsModel);
            let chunk = encoded.len().div_ceil(workers);
            let results: Vec<Result<(f64, u64)>> = std::thread::scope(|scope| {
                let handles: Vec<_> = encoded
                    .chunks(chunk)
                    .enumerate()
                    .map(|(w, shard)| {
                        let (table, progress) = (&table, &progress);
                        scope.spawn(move || {
                            let mut rng = ChaCha8Rng::seed_from_u64(worker_seed(cfg.seed, epoch, w, workers));
                            // SAFETY: `model` outlives the scope; racy row updates are accepted.
                            let model = unsafe { shared.get() };
                            train_shard(model, shard, cfg, table, progress, &mut rng)
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("training worker panicked")).collect()
            });
            let mut totals = (0.0, 0u64);
            for r in results {
                let (l, n) = r?;
                totals.0 += l;
                totals.1 += n;
            }
            totals
        };
        let mean = if examples == 0 { 0.0 } else { loss_sum / examples as f64 };
        epoch_losses.push(mean);
        if cfg.verbose {
            eprintln!(
                "epoch={} tokens={} lr={:.6} loss={:.6}",
                epoch + 1,
                progress.processed.load(Ordering::Relaxed),
                progress.lr(cfg.initial_lr),
                mean
            );
        }
    }

    let mut embeddings = model.embeddings()?;
    for (k, v) in cfg.metadata() {
        embeddings = embeddings.with_metadata(k, v);
    }
    Ok(Trained {
        embeddings,
        model,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    fn vocab(words: &[&str]) -> Vocabulary {
        let text = words.join(" ");
        Vocabulary::from_sentences(&[tokenize(&text)], 1).unwrap()
    }

    fn small_cfg(mode: SgnsMode) -> SgnsConfig {
        SgnsConfig {
            dim: 8,
            mode,
            bucket_count: 97,
            epochs: 2,
            ..Default::default()
        }
    }

    #[test]
    fn zero_vectors_give_closed_form_loss() {
        let v = vocab(&["a", "b", "c", "d", "e", "f", "g"]);
        for mode in [SgnsMode::SkipGram, SgnsMode::FastText] {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let mut m = SgnsModel::new(&v, &small_cfg(mode), &mut rng).unwrap();
            m.input_mut().iter_mut().for_each(|x| *x = 0.0);
            let loss = m.sgns_step(0, 1, &[2, 3, 4, 5, 6], 0.1).unwrap();
            assert!((loss - 6.0 * std::f64::consts::LN_2).abs() < 1e-12);
            assert!(m.input().iter().chain(m.output()).all(|x| x.is_finite()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = SgnsModel::new(&v, &small_cfg(SgnsMode::Cbow), &mut rng).unwrap();
        m.input_mut().iter_mut().for_each(|x| *x = 0.0);
        let loss = m.cbow_step(&[0, 1], 2, &[3, 4, 5, 6, 0], 0.1).unwrap();
        assert!((loss - 6.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn saturated_positive_has_no_loss() {
        let v = vocab(&["a", "b"]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = SgnsModel::new(&v, &SgnsConfig { dim: 1, ..Default::default() }, &mut rng).unwrap();
        m.input_mut()[0] = 5.0;
        m.output_mut()[1] = 8.0;
        let loss = m.sgns_step(0, 1, &[], 0.1).unwrap();
        assert!(loss < 1e-15);
    }

    #[test]
    fn single_word_cbow_matches_skipgram() {
        let v = vocab(&["a", "b", "c", "d"]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = SgnsModel::new(&v, &small_cfg(SgnsMode::Cbow), &mut rng).unwrap();
        m.output_mut().iter_mut().for_each(|x| *x = rng.gen_range(-0.5..0.5));
        let sg = m.sgns_loss(1, 2, &[0, 3]).unwrap();
        let cb = m.cbow_loss(&[1], 2, &[0, 3]).unwrap();
        assert_eq!(sg, cb);
        let mut a = m.clone();
        let mut b = m.clone();
        a.sgns_step(1, 2, &[0, 3], 0.05).unwrap();
        b.cbow_step(&[1], 2, &[0, 3], 0.05).unwrap();
        assert_eq!(a.input(), b.input());
        assert_eq!(a.output(), b.output());
    }

    #[test]
    fn empty_context_is_skipped() {
        let v = vocab(&["a", "b"]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = SgnsModel::new(&v, &small_cfg(SgnsMode::Cbow), &mut rng).unwrap();
        let before = m.clone();
        assert_eq!(m.cbow_step(&[], 1, &[0], 0.1).unwrap(), 0.0);
        assert_eq!(m.input(), before.input());
    }

    #[test]
    fn overflow_names_the_row() {
        let v = vocab(&["a", "b", "c"]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = SgnsModel::new(&v, &small_cfg(SgnsMode::SkipGram), &mut rng).unwrap();
        m.output_mut()[2 * 8] = f32::INFINITY;
        m.input_mut()[0] = 1.0;
        match m.sgns_step(0, 1, &[2], 0.1) {
            Err(Error::NumericOverflow { matrix: "output", row: 2 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_range_ids_are_rejected() {
        let v = vocab(&["a", "b"]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = SgnsModel::new(&v, &small_cfg(SgnsMode::SkipGram), &mut rng).unwrap();
        assert!(m.sgns_step(0, 7, &[], 0.1).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = [
            SgnsConfig { dim: 0, ..Default::default() },
            SgnsConfig { window: 0, ..Default::default() },
            SgnsConfig { negatives: 0, ..Default::default() },
            SgnsConfig { min_n: 4, max_n: 3, ..Default::default() },
            SgnsConfig { bucket_count: 0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
        assert!(SgnsConfig::default().validate().is_ok());
    }

    #[test]
    fn defaults_match_reference_configuration() {
        let cfg = SgnsConfig::default();
        assert_eq!((cfg.dim, cfg.window, cfg.negatives, cfg.epochs), (300, 5, 5, 10));
        assert_eq!((cfg.min_n, cfg.max_n, cfg.bucket_count), (3, 6, 2_000_000));
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let corpus = vec![tokenize("a b c a b")];
        let v = Vocabulary::from_sentences(&corpus, 1).unwrap();
        let cfg = SgnsConfig { epochs: 0, ..small_cfg(SgnsMode::SkipGram) };
        let trained = train(&corpus, &v, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let init = SgnsModel::new(&v, &cfg, &mut rng).unwrap();
        assert_eq!(trained.model.input(), init.input());
        assert_eq!(trained.embeddings.matrix(), init.embeddings().unwrap().matrix());
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let v = vocab(&["a"]);
        assert!(matches!(
            train(&[tokenize("x y")], &v, &small_cfg(SgnsMode::SkipGram)),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn fasttext_vectors() {
        let corpus: Vec<Sentence> = (0..50).map(|_| tokenize("kedi köpek kediler ev evler")).collect();
        let v = Vocabulary::from_sentences(&corpus, 1).unwrap();
        let cfg = SgnsConfig { bucket_count: 5000, ..small_cfg(SgnsMode::FastText) };
        let trained = train(&corpus, &v, &cfg).unwrap();
        let m = &trained.model;

        let kedi = m.word_vector("kedi").unwrap();
        let row: Vec<f32> = kedi.iter().map(|&x| x as f32).collect();
        assert_eq!(trained.embeddings.get("kedi").unwrap(), &row[..]);

        let oov = m.word_vector("kedilerdenmiş").unwrap();
        assert!(oov.iter().all(|x| x.is_finite()));
        assert!(oov.iter().map(|x| x * x).sum::<f64>() > 0.0);

        // The n-gram path reproduces a known word exactly.
        let set = NgramSet::new("kedi", 3, 6, 5000);
        assert_eq!(m.mean_rows(&set.ngram_ids), kedi);
    }

    #[test]
    fn fasttext_sum_and_mean_differ_by_ngram_count() {
        let v = vocab(&["kitap", "ev"]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = SgnsModel::new(&v, &small_cfg(SgnsMode::FastText), &mut rng).unwrap();
        let id = v.id("kitap").unwrap();
        let mut sum = vec![0.0; 8];
        m.word_sum(id, &mut sum);
        let mean = m.word_vector("kitap").unwrap();
        let n = m.input_rows(id).len() as f64;
        for (s, x) in sum.iter().zip(&mean) {
            assert!((s / n - x).abs() < 1e-15);
        }
    }

    #[test]
    fn non_fasttext_has_no_oov_vectors() {
        let v = vocab(&["a"]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = SgnsModel::new(&v, &small_cfg(SgnsMode::SkipGram), &mut rng).unwrap();
        assert!(m.word_vector("b").is_none());
        assert!(m.word_vector("a").is_some());
    }

    #[test]
    fn multi_worker_training_stays_finite() {
        let corpus: Vec<Sentence> = (0..200)
            .map(|i| tokenize(&format!("w{} w{} w{} w{}", i % 7, i % 5, i % 3, i % 11)))
            .collect();
        let v = Vocabulary::from_sentences(&corpus, 1).unwrap();
        let cfg = SgnsConfig { workers: 4, ..small_cfg(SgnsMode::SkipGram) };
        let t = train(&corpus, &v, &cfg).unwrap();
        assert!(t.model.input().iter().chain(t.model.output()).all(|x| x.is_finite()));
        assert_eq!(t.epoch_losses.len(), 2);
    }
}
