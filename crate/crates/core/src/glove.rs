//! Global co-occurrence counts and the GloVe weighted least-squares fit.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Sentence, Vocabulary};
use crate::embio::WordEmbeddings;
use crate::error::{Error, Result};
use crate::math::Hogwild;

pub const COOC_MAGIC: &[u8; 8] = b"GLVCOOC1";

/// Largest supported window. Weights are accumulated exactly as integer
/// multiples of `1 / lcm(1..=window)`, which must fit comfortably in `u128`.
pub const MAX_WINDOW: usize = 64;

const CLIP: f64 = 100.0;

/// Sparse symmetric co-occurrence matrix. Only the `i <= j` half is
/// stored, sorted by `(i, j)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CoocMatrix {
    entries: Vec<(u32, u32, f64)>,
}

fn lcm_upto(n: usize) -> u128 {
    fn gcd(a: u128, b: u128) -> u128 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    (1..=n as u128).fold(1, |l, k| l / gcd(l, k) * k)
}

type Units = HashMap<(u32, u32), u128>;

fn accumulate_units(sentences: &[Vec<u32>], window: usize, scale: u128) -> Units {
    let mut map = Units::new();
    for s in sentences {
        for (p, &a) in s.iter().enumerate() {
            for d in 1..=window.min(s.len() - 1 - p) {
                let b = s[p + d];
                let key = (a.min(b), a.max(b));
                // Both X[a][b] and X[b][a] receive 1/d; a diagonal cell gets both.
                let add = if a == b { 2 * scale / d as u128 } else { scale / d as u128 };
                *map.entry(key).or_insert(0) += add;
            }
        }
    }
    map
}

impl CoocMatrix {
    /// Build from upper-half entries. Entries are sorted; duplicates and
    /// non-positive weights are rejected.
    pub fn from_entries(mut entries: Vec<(u32, u32, f64)>) -> Result<Self> {
        for e in entries.iter_mut() {
            if e.0 > e.1 {
                *e = (e.1, e.0, e.2);
            }
        }
        entries.sort_by_key(|e| (e.0, e.1));
        for w in entries.windows(2) {
            if (w[0].0, w[0].1) == (w[1].0, w[1].1) {
                return Err(Error::InvalidConfig(format!("duplicate entry ({}, {})", w[0].0, w[0].1)));
            }
        }
        let m = CoocMatrix { entries };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        match self.entries.iter().find(|e| !(e.2 > 0.0 && e.2.is_finite())) {
            Some(&(i, j, x)) => Err(Error::CorruptMatrix { i, j, x }),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Stored `(i, j, x)` entries with `i <= j`.
    pub fn entries(&self) -> &[(u32, u32, f64)] {
        &self.entries
    }

    /// `X[i][j]`, zero when absent.
    pub fn get(&self, i: u32, j: u32) -> f64 {
        let key = (i.min(j), i.max(j));
        self.entries
            .binary_search_by_key(&key, |e| (e.0, e.1))
            .map_or(0.0, |k| self.entries[k].2)
    }

    /// Sum over the full symmetric matrix, counting off-diagonal cells in
    /// both orientations.
    pub fn total_mass(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, x)| if i == j { x } else { 2.0 * x })
            .sum()
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(COOC_MAGIC)?;
        for &(i, j, x) in &self.entries {
            w.write_all(&i.to_le_bytes())?;
            w.write_all(&j.to_le_bytes())?;
            w.write_all(&x.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        self.write(BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() < 8 || &bytes[..8] != COOC_MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: "missing GLVCOOC1 header".into(),
            });
        }
        let body = &bytes[8..];
        if body.len() % 16 != 0 {
            return Err(Error::Format {
                offset: (8 + body.len() / 16 * 16) as u64,
                message: "truncated entry".into(),
            });
        }
        let mut entries = Vec::with_capacity(body.len() / 16);
        for (k, rec) in body.chunks_exact(16).enumerate() {
            let offset = (8 + 16 * k) as u64;
            let i = u32::from_le_bytes(rec[0..4].try_into().unwrap());
            let j = u32::from_le_bytes(rec[4..8].try_into().unwrap());
            let x = f64::from_le_bytes(rec[8..16].try_into().unwrap());
            if i > j {
                return Err(Error::Format {
                    offset,
                    message: format!("entry ({i}, {j}) below the diagonal"),
                });
            }
            if let Some(&(pi, pj, _)) = entries.last() {
                if (pi, pj) >= (i, j) {
                    return Err(Error::Format {
                        offset,
                        message: format!("entry ({i}, {j}) out of order"),
                    });
                }
            }
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::CorruptMatrix { i, j, x });
            }
            entries.push((i, j, x));
        }
        Ok(CoocMatrix { entries })
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::read(BufReader::new(std::fs::File::open(path)?))
    }
}

/// Count co-occurrences within `window` tokens, weighting a pair at
/// distance `d` by `1/d`. Sentence boundaries cut the window.
pub fn accumulate_cooccurrence(corpus: &[Sentence], vocab: &Vocabulary, window: usize) -> Result<CoocMatrix> {
    accumulate_cooccurrence_parallel(corpus, vocab, window, 1)
}

/// Sharded variant of [`accumulate_cooccurrence`]. Shards are merged in
/// exact integer arithmetic, so the result does not depend on `workers`.
pub fn accumulate_cooccurrence_parallel(
    corpus: &[Sentence],
    vocab: &Vocabulary,
    window: usize,
    workers: usize,
) -> Result<CoocMatrix> {
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    if window == 0 || window > MAX_WINDOW {
        return Err(Error::InvalidConfig(format!("window must be in 1..={MAX_WINDOW}")));
    }
    let encoded: Vec<Vec<u32>> = corpus.iter().map(|s| vocab.encode(s)).collect();
    let scale = lcm_upto(window);
    let workers = workers.max(1);
    let merged = if workers == 1 || encoded.len() < 2 {
        accumulate_units(&encoded, window, scale)
    } else {
        let chunk = encoded.len().div_ceil(workers);
        let shards: Vec<Units> = std::thread::scope(|scope| {
            let handles: Vec<_> = encoded
                .chunks(chunk)
                .map(|c| scope.spawn(move || accumulate_units(c, window, scale)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("counting worker panicked")).collect()
        });
        let mut merged = Units::new();
        for shard in shards {
            for (k, v) in shard {
                *merged.entry(k).or_insert(0) += v;
            }
        }
        merged
    };
    let mut entries: Vec<(u32, u32, f64)> = merged
        .into_iter()
        .map(|((i, j), units)| (i, j, units as f64 / scale as f64))
        .collect();
    entries.sort_by_key(|e| (e.0, e.1));
    Ok(CoocMatrix { entries })
}

/// `(x / x_max)^alpha`, capped at 1.
pub fn weight(x: f64, x_max: f64, alpha: f64) -> f64 {
    if x >= x_max {
        1.0
    } else {
        (x / x_max).powf(alpha)
    }
}

#[derive(Clone, Debug)]
pub struct GloveConfig {
    pub dim: usize,
    pub window: usize,
    pub x_max: f64,
    pub alpha: f64,
    pub iterations: usize,
    pub initial_lr: f64,
    pub seed: u64,
    pub workers: usize,
    pub verbose: bool,
}

impl Default for GloveConfig {
    fn default() -> Self {
        GloveConfig {
            dim: 300,
            window: 5,
            x_max: 100.0,
            alpha: 0.75,
            iterations: 100,
            initial_lr: 0.05,
            seed: 1,
            workers: 1,
            verbose: false,
        }
    }
}

impl GloveConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.dim == 0 {
            return bad("dim must be at least 1");
        }
        if self.window == 0 || self.window > MAX_WINDOW {
            return bad("window out of range");
        }
        if !(self.x_max > 0.0 && self.x_max.is_finite()) {
            return bad("x_max must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}

/// Word and context vectors, biases and their AdaGrad accumulators.
#[derive(Clone, Debug, PartialEq)]
pub struct GloveModel {
    pub dim: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub gu: Vec<f64>,
    pub gv: Vec<f64>,
    pub gb: Vec<f64>,
    pub gc: Vec<f64>,
}

/// Gradient of one oriented term `h(x)(u_i·v_j + b_i + c_j - ln x)²`.
#[derive(Clone, Debug, PartialEq)]
pub struct EntryGradient {
    pub loss: f64,
    pub u_i: Vec<f64>,
    pub v_j: Vec<f64>,
    pub b_i: f64,
    pub c_j: f64,
}

impl GloveModel {
    /// Vectors uniform in `[-0.5/d, 0.5/d]`, zero biases, accumulators 1.
    pub fn new<R: Rng + ?Sized>(vocab_size: usize, dim: usize, rng: &mut R) -> Self {
        let bound = 0.5 / dim as f64;
        let n = vocab_size * dim;
        let u = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
        let v = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
        GloveModel {
            dim,
            u,
            v,
            b: vec![0.0; vocab_size],
            c: vec![0.0; vocab_size],
            gu: vec![1.0; n],
            gv: vec![1.0; n],
            gb: vec![1.0; vocab_size],
            gc: vec![1.0; vocab_size],
        }
    }

    /// All parameters zero, accumulators 1.
    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        let n = vocab_size * dim;
        GloveModel {
            dim,
            u: vec![0.0; n],
            v: vec![0.0; n],
            b: vec![0.0; vocab_size],
            c: vec![0.0; vocab_size],
            gu: vec![1.0; n],
            gv: vec![1.0; n],
            gb: vec![1.0; vocab_size],
            gc: vec![1.0; vocab_size],
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.b.len()
    }

    fn residual(&self, i: u32, j: u32, log_x: f64) -> f64 {
        let (i, j, d) = (i as usize, j as usize, self.dim);
        let ui = &self.u[i * d..(i + 1) * d];
        let vj = &self.v[j * d..(j + 1) * d];
        ui.iter().zip(vj).map(|(a, b)| a * b).sum::<f64>() + self.b[i] + self.c[j] - log_x
    }

    /// Loss and raw gradient of one oriented term. The weighted residual
    /// is clipped at ±100 as in training.
    pub fn entry_gradient(&self, i: u32, j: u32, x: f64, cfg: &GloveConfig) -> Result<EntryGradient> {
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::CorruptMatrix { i, j, x });
        }
        let h = weight(x, cfg.x_max, cfg.alpha);
        let diff = self.residual(i, j, x.ln());
        let g = 2.0 * (h * diff).clamp(-CLIP, CLIP);
        let d = self.dim;
        let (iu, ju) = (i as usize, j as usize);
        Ok(EntryGradient {
            loss: h * diff * diff,
            u_i: self.v[ju * d..(ju + 1) * d].iter().map(|x| g * x).collect(),
            v_j: self.u[iu * d..(iu + 1) * d].iter().map(|x| g * x).collect(),
            b_i: g,
            c_j: g,
        })
    }

    /// One AdaGrad step on an oriented term; returns the term's loss
    /// before the update.
    fn adagrad_step(&mut self, i: u32, j: u32, log_x: f64, h: f64, lr: f64) -> f64 {
        let (i, j, d) = (i as usize, j as usize, self.dim);
        let diff = self.residual(i as u32, j as u32, log_x);
        let g = 2.0 * (h * diff).clamp(-CLIP, CLIP);
        for k in 0..d {
            let (ui, vj) = (self.u[i * d + k], self.v[j * d + k]);
            let (du, dv) = (g * vj, g * ui);
            self.gu[i * d + k] += du * du;
            self.gv[j * d + k] += dv * dv;
            self.u[i * d + k] -= lr * du / self.gu[i * d + k].sqrt();
            self.v[j * d + k] -= lr * dv / self.gv[j * d + k].sqrt();
        }
        self.gb[i] += g * g;
        self.gc[j] += g * g;
        self.b[i] -= lr * g / self.gb[i].sqrt();
        self.c[j] -= lr * g / self.gc[j].sqrt();
        h * diff * diff
    }

    /// `u_i + v_i` for every word.
    pub fn combined(&self) -> Vec<f64> {
        self.u.iter().zip(&self.v).map(|(a, b)| a + b).collect()
    }
}

/// Objective over the full symmetric matrix: each stored off-diagonal
/// entry contributes both orientations `(i, j)` and `(j, i)`.
pub fn glove_loss(model: &GloveModel, matrix: &CoocMatrix, cfg: &GloveConfig) -> Result<f64> {
    check_ids(matrix, model.vocab_size())?;
    let mut total = 0.0;
    for &(i, j, x) in &matrix.entries {
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::CorruptMatrix { i, j, x });
        }
        let h = weight(x, cfg.x_max, cfg.alpha);
        let lx = x.ln();
        let r = model.residual(i, j, lx);
        total += h * r * r;
        if i != j {
            let r = model.residual(j, i, lx);
            total += h * r * r;
        }
    }
    Ok(total)
}

fn check_ids(matrix: &CoocMatrix, vocab_size: usize) -> Result<()> {
    match matrix.entries.iter().map(|e| e.1).max() {
        Some(j) if j as usize >= vocab_size => Err(Error::VocabularyMismatch(format!(
            "matrix references word id {j} but vocabulary has {vocab_size} words"
        ))),
        _ => Ok(()),
    }
}

#[derive(Debug)]
pub struct GloveTrained {
    pub embeddings: WordEmbeddings,
    pub model: GloveModel,
    /// Objective before the first iteration.
    pub initial_loss: f64,
    /// Objective after the last iteration.
    pub final_loss: f64,
    /// Sum of term losses seen during each pass.
    pub iteration_losses: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Cell {
    i: u32,
    j: u32,
    log_x: f64,
    h: f64,
}

/// Fit the model with AdaGrad for `cfg.iterations` passes over shuffled
/// entries and emit `u + v`.
pub fn glove_train(matrix: &CoocMatrix, vocab: &Vocabulary, cfg: &GloveConfig) -> Result<GloveTrained> {
    cfg.validate()?;
    if matrix.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    matrix.validate()?;
    let max_id = matrix.entries.iter().map(|e| e.1).max().unwrap_or(0);
    if max_id as usize >= vocab.len() {
        return Err(Error::VocabularyMismatch(format!(
            "matrix references word id {max_id} but vocabulary has {} words",
            vocab.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = GloveModel::new(vocab.len(), cfg.dim, &mut rng);
    let initial_loss = glove_loss(&model, matrix, cfg)?;

    let mut cells = Vec::with_capacity(matrix.len() * 2);
    for &(i, j, x) in &matrix.entries {
        let (log_x, h) = (x.ln(), weight(x, cfg.x_max, cfg.alpha));
        cells.push(Cell { i, j, log_x, h });
        if i != j {
            cells.push(Cell { i: j, j: i, log_x, h });
        }
    }

    let workers = cfg.workers.max(1).min(cells.len());
    let mut iteration_losses = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        cells.shuffle(&mut rng);
        let loss = if workers == 1 {
            cells
                .iter()
                .map(|c| model.adagrad_step(c.i, c.j, c.log_x, c.h, cfg.initial_lr))
                .sum::<f64>()
        } else {
            let shared = Hogwild(&mut model as *mut GloveModel);
            let chunk = cells.len().div_ceil(workers);
            std::thread::scope(|scope| {
                let handles: Vec<_> = cells
                    .chunks(chunk)
                    .map(|part| {
                        scope.spawn(move || {
                            // SAFETY: `model` outlives the scope; racy updates are accepted.
                            let m = unsafe { shared.get() };
                            part.iter()
                                .map(|c| m.adagrad_step(c.i, c.j, c.log_x, c.h, cfg.initial_lr))
                                .sum::<f64>()
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("training worker panicked")).sum()
            })
        };
        if !loss.is_finite() {
            return Err(Error::Diverged { iteration: it + 1 });
        }
        if cfg.verbose {
            eprintln!("iteration={} loss={:.6}", it + 1, loss);
        }
        iteration_losses.push(loss);
    }

    let final_loss = glove_loss(&model, matrix, cfg)?;
    if !final_loss.is_finite() || model.u.iter().chain(&model.v).any(|x| !x.is_finite()) {
        return Err(Error::Diverged {
            iteration: cfg.iterations,
        });
    }
    let embeddings = WordEmbeddings::from_f64(vocab.clone(), cfg.dim, &model.combined())?
        .with_metadata("model", "glove")
        .with_metadata("dim", cfg.dim.to_string())
        .with_metadata("window", cfg.window.to_string())
        .with_metadata("x_max", cfg.x_max.to_string())
        .with_metadata("alpha", cfg.alpha.to_string())
        .with_metadata("iterations", cfg.iterations.to_string())
        .with_metadata("lr", cfg.initial_lr.to_string())
        .with_metadata("seed", cfg.seed.to_string());
    Ok(GloveTrained {
        embeddings,
        model,
        initial_loss,
        final_loss,
        iteration_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    fn cooc(text: &str, window: usize) -> (Vocabulary, CoocMatrix) {
        let corpus: Vec<Sentence> = text.lines().map(tokenize).collect();
        let v = Vocabulary::from_sentences(&corpus, 1).unwrap();
        let m = accumulate_cooccurrence(&corpus, &v, window).unwrap();
        (v, m)
    }

    fn x(v: &Vocabulary, m: &CoocMatrix, a: &str, b: &str) -> f64 {
        m.get(v.id(a).unwrap(), v.id(b).unwrap())
    }

    #[test]
    fn distance_weighting() {
        let (v, m) = cooc("a b c", 5);
        assert_eq!(x(&v, &m, "a", "b"), 1.0);
        assert_eq!(x(&v, &m, "b", "c"), 1.0);
        assert_eq!(x(&v, &m, "a", "c"), 0.5);
        assert_eq!(x(&v, &m, "c", "a"), 0.5);
        let (v, m) = cooc("a b c", 1);
        assert_eq!(x(&v, &m, "a", "c"), 0.0);
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn sentence_boundaries_cut_windows() {
        let (v, m) = cooc("a b\nc d", 5);
        assert_eq!(x(&v, &m, "b", "c"), 0.0);
    }

    #[test]
    fn repeated_word_fills_diagonal() {
        let (v, m) = cooc("a a", 2);
        assert_eq!(x(&v, &m, "a", "a"), 2.0);
        assert_eq!(m.total_mass(), 2.0);
    }

    #[test]
    fn empty_corpus_gives_empty_matrix() {
        let v = Vocabulary::from_words(["a"]).unwrap();
        assert!(accumulate_cooccurrence(&[], &v, 5).unwrap().is_empty());
    }

    #[test]
    fn empty_vocabulary_is_an_error() {
        let v = Vocabulary::from_words(Vec::<String>::new()).unwrap();
        assert!(matches!(accumulate_cooccurrence(&[], &v, 5), Err(Error::EmptyVocabulary)));
    }

    #[test]
    fn weight_examples() {
        assert_eq!(weight(100.0, 100.0, 0.75), 1.0);
        assert_eq!(weight(0.0, 100.0, 0.75), 0.0);
        assert!((weight(6.25, 100.0, 0.75) - 0.125).abs() < 1e-15);
        assert_eq!(weight(1e6, 100.0, 0.75), 1.0);
    }

    #[test]
    fn single_entry_losses() {
        let cfg = GloveConfig::default();
        let model = GloveModel::zeros(1, 4);
        let m = CoocMatrix::from_entries(vec![(0, 0, 1.0)]).unwrap();
        assert_eq!(glove_loss(&model, &m, &cfg).unwrap(), 0.0);
        let m = CoocMatrix::from_entries(vec![(0, 0, 100.0)]).unwrap();
        let expected = 100f64.ln().powi(2);
        assert!((glove_loss(&model, &m, &cfg).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 21.2076).abs() < 1e-4);
    }

    #[test]
    fn perfect_fit_has_zero_loss() {
        let cfg = GloveConfig::default();
        let mut model = GloveModel::zeros(2, 1);
        let m = CoocMatrix::from_entries(vec![(0, 1, 3.0), (0, 0, 5.0)]).unwrap();
        model.u = vec![1.0, 0.0];
        model.v = vec![5f64.ln(), 3f64.ln()];
        model.b = vec![0.0, 3f64.ln()];
        model.c = vec![0.0, 0.0];
        assert!(glove_loss(&model, &m, &cfg).unwrap() < 1e-24);
    }

    #[test]
    fn corrupt_entries_are_rejected() {
        assert!(matches!(
            CoocMatrix::from_entries(vec![(0, 1, 0.0)]),
            Err(Error::CorruptMatrix { i: 0, j: 1, .. })
        ));
        let bad = CoocMatrix {
            entries: vec![(0, 0, -1.0)],
        };
        assert!(matches!(
            glove_loss(&GloveModel::zeros(1, 2), &bad, &GloveConfig::default()),
            Err(Error::CorruptMatrix { .. })
        ));
    }

    #[test]
    fn file_round_trip() {
        let (_, m) = cooc("a b c d a c\nb d d a", 3);
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        assert_eq!(&buf[..8], COOC_MAGIC);
        assert_eq!(buf.len(), 8 + 16 * m.len());
        assert_eq!(CoocMatrix::read(&buf[..]).unwrap(), m);

        assert!(matches!(CoocMatrix::read(&b"NOTMAGIC"[..]), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(
            CoocMatrix::read(&buf[..buf.len() - 3]),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn read_rejects_unsorted_entries() {
        let mut buf = COOC_MAGIC.to_vec();
        for (i, j) in [(1u32, 2u32), (0, 1)] {
            buf.extend(i.to_le_bytes());
            buf.extend(j.to_le_bytes());
            buf.extend(1.0f64.to_le_bytes());
        }
        assert!(matches!(CoocMatrix::read(&buf[..]), Err(Error::Format { offset: 24, .. })));
    }

    #[test]
    fn empty_matrix_cannot_be_trained() {
        let v = Vocabulary::from_words(["a"]).unwrap();
        assert!(matches!(
            glove_train(&CoocMatrix::default(), &v, &GloveConfig::default()),
            Err(Error::EmptyMatrix)
        ));
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let text = "the cat sat on the mat\nthe dog sat on the log\na cat and a dog\n".repeat(20);
        let (v, m) = cooc(&text, 3);
        let cfg = GloveConfig {
            dim: 8,
            iterations: 30,
            ..Default::default()
        };
        let a = glove_train(&m, &v, &cfg).unwrap();
        let b = glove_train(&m, &v, &cfg).unwrap();
        assert!(a.final_loss < a.initial_loss);
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(a.iteration_losses.len(), 30);
    }

    #[test]
    fn clipping_keeps_huge_counts_finite() {
        let v = Vocabulary::from_words(["a", "b"]).unwrap();
        let m = CoocMatrix::from_entries(vec![(0, 1, 1e300), (0, 0, 1e-300)]).unwrap();
        let cfg = GloveConfig {
            dim: 2,
            iterations: 5,
            ..Default::default()
        };
        let t = glove_train(&m, &v, &cfg).unwrap();
        assert!(t.model.u.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn config_validation() {
        for cfg in [
            GloveConfig { x_max: 0.0, ..Default::default() },
            GloveConfig { alpha: 0.0, ..Default::default() },
            GloveConfig { alpha: 1.5, ..Default::default() },
            GloveConfig { iterations: 0, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
        let d = GloveConfig::default();
        assert_eq!((d.dim, d.window, d.x_max, d.alpha, d.iterations, d.initial_lr), (300, 5, 100.0, 0.75, 100, 0.05));
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn total_mass_matches_closed_form(len in 2usize..40, window in 1usize..8) {
            // Distinct tokens so every pair lands off the diagonal.
            let words: Vec<String> = (0..len).map(|i| format!("t{i}")).collect();
            let s = Sentence::new(words.clone());
            let v = Vocabulary::from_words(words).unwrap();
            let m = accumulate_cooccurrence(&[s], &v, window).unwrap();
            let expected: f64 = 2.0 * (1..=window.min(len - 1)).map(|d| (len - d) as f64 / d as f64).sum::<f64>();
            prop_assert!((m.total_mass() - expected).abs() < 1e-9);
        }

        #[test]
        fn sharding_is_exact(ids in prop::collection::vec(prop::collection::vec(0u8..6, 0..12), 1..30), window in 1usize..6, workers in 2usize..5) {
            let corpus: Vec<Sentence> = ids.iter().map(|s| Sentence::new(s.iter().map(|i| format!("w{i}")))).collect();
            let v = Vocabulary::from_words((0..6).map(|i| format!("w{i}"))).unwrap();
            let single = accumulate_cooccurrence(&corpus, &v, window).unwrap();
            let sharded = accumulate_cooccurrence_parallel(&corpus, &v, window, workers).unwrap();
            prop_assert_eq!(single, sharded);
        }

        #[test]
        fn weight_is_monotone(a in 0.0f64..500.0, b in 0.0f64..500.0, alpha in 0.05f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(weight(lo, 100.0, alpha) <= weight(hi, 100.0, alpha));
            if lo >= 100.0 {
                prop_assert_eq!(weight(lo, 100.0, alpha), 1.0);
            }
        }
    }
}
