//! Static embeddings from precomputed contextual token vectors: pooling
//! over occurrences, and a distillation trainer.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{open_text, NegativeSamplingTable, Sentence, Vocabulary};
use crate::embio::WordEmbeddings;
use crate::error::{Error, Result};
use crate::math::{decayed_lr, log_sigmoid, sigmoid, Hogwild};
use crate::sgns::NOISE_POWER;

/// One sentence of teacher output: tokens and their vectors, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenSentence {
    pub tokens: Vec<String>,
    pub vectors: Vec<f64>,
}

impl TokenSentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn vector(&self, i: usize, dim: usize) -> &[f64] {
        &self.vectors[i * dim..(i + 1) * dim]
    }
}

/// Per-token teacher vectors grouped by sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenVectorStream {
    pub dim: usize,
    pub sentences: Vec<TokenSentence>,
}

impl TokenVectorStream {
    /// Build from `(token, vector)` lists, checking dimensions and
    /// finiteness.
    pub fn new(dim: usize, sentences: Vec<Vec<(String, Vec<f64>)>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("teacher dimension must be at least 1".into()));
        }
        let mut out = Vec::with_capacity(sentences.len());
        for (s, records) in sentences.into_iter().enumerate() {
            let mut sent = TokenSentence {
                tokens: Vec::with_capacity(records.len()),
                vectors: Vec::with_capacity(records.len() * dim),
            };
            for (p, (token, v)) in records.into_iter().enumerate() {
                check_record(s, p, dim, &v)?;
                sent.tokens.push(token);
                sent.vectors.extend(v);
            }
            out.push(sent);
        }
        Ok(TokenVectorStream { dim, sentences: out })
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(TokenSentence::len).sum()
    }

    /// Parse the `#dim=<d>` header followed by `token<TAB>v1 ... vd` lines,
    /// with blank lines separating sentences.
    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let mut line_no = 0;
        let dim = loop {
            line_no += 1;
            let Some(line) = lines.next() else {
                return Err(Error::Parse {
                    line: line_no,
                    message: "missing #dim header".into(),
                });
            };
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let dim = line
                .trim()
                .strip_prefix("#dim=")
                .and_then(|d| d.parse::<usize>().ok())
                .filter(|&d| d > 0);
            match dim {
                Some(d) => break d,
                None => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("expected #dim=<d> header, found {line:?}"),
                    })
                }
            }
        };

        let mut sentences = Vec::new();
        let mut current = TokenSentence {
            tokens: Vec::new(),
            vectors: Vec::new(),
        };
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                if !current.is_empty() {
                    sentences.push(std::mem::replace(
                        &mut current,
                        TokenSentence {
                            tokens: Vec::new(),
                            vectors: Vec::new(),
                        },
                    ));
                }
                continue;
            }
            let (s, p) = (sentences.len(), current.len());
            let record_err = |message: String| Error::Record {
                sentence: s,
                position: p,
                message,
            };
            let (token, values) = line
                .split_once('\t')
                .ok_or_else(|| record_err("missing tab between token and vector".into()))?;
            if token.is_empty() {
                return Err(record_err("empty token".into()));
            }
            let start = current.vectors.len();
            for field in values.split_ascii_whitespace() {
                let x: f64 = field
                    .parse()
                    .map_err(|_| record_err(format!("bad number {field:?}")))?;
                current.vectors.push(x);
            }
            check_record(s, p, dim, &current.vectors[start..])?;
            current.tokens.push(token.to_owned());
        }
        if !current.is_empty() {
            sentences.push(current);
        }
        Ok(TokenVectorStream { dim, sentences })
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::read(open_text(path)?)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "#dim={}", self.dim)?;
        for (k, s) in self.sentences.iter().enumerate() {
            if k > 0 {
                writeln!(w)?;
            }
            for (i, token) in s.tokens.iter().enumerate() {
                write!(w, "{token}\t")?;
                for (j, x) in s.vector(i, self.dim).iter().enumerate() {
                    if j > 0 {
                        write!(w, " ")?;
                    }
                    write!(w, "{x}")?;
                }
                writeln!(w)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        self.write(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

fn check_record(sentence: usize, position: usize, dim: usize, v: &[f64]) -> Result<()> {
    let err = |message: String| Error::Record {
        sentence,
        position,
        message,
    };
    if v.len() != dim {
        return Err(err(format!("expected {dim} values, found {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(err("non-finite value".into()));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Pooling {
    #[default]
    Mean,
    Max,
}

impl FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Pooling::Mean),
            "max" => Ok(Pooling::Max),
            _ => Err(Error::InvalidConfig(format!("unknown pooling {s:?}"))),
        }
    }
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pooling::Mean => "mean",
            Pooling::Max => "max",
        })
    }
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
struct Compensated {
    sum: f64,
    comp: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn merge(&mut self, other: &Compensated) {
        self.add(other.sum);
        self.add(other.comp);
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Per-word partial pooling state over a shard of sentences.
struct Pool {
    dim: usize,
    pooling: Pooling,
    counts: Vec<u64>,
    sums: Vec<Compensated>,
    maxes: Vec<f64>,
}

impl Pool {
    fn new(words: usize, dim: usize, pooling: Pooling) -> Self {
        let n = words * dim;
        Pool {
            dim,
            pooling,
            counts: vec![0; words],
            sums: match pooling {
                Pooling::Mean => vec![Compensated::default(); n],
                Pooling::Max => Vec::new(),
            },
            maxes: match pooling {
                Pooling::Mean => Vec::new(),
                Pooling::Max => vec![f64::NEG_INFINITY; n],
            },
        }
    }

    fn add_sentences(&mut self, sentences: &[TokenSentence], vocab: &Vocabulary) {
        let d = self.dim;
        for s in sentences {
            for (i, token) in s.tokens.iter().enumerate() {
                let Some(id) = vocab.id(token) else { continue };
                let id = id as usize;
                self.counts[id] += 1;
                let v = s.vector(i, d);
                match self.pooling {
                    Pooling::Mean => {
                        for (acc, &x) in self.sums[id * d..(id + 1) * d].iter_mut().zip(v) {
                            acc.add(x);
                        }
                    }
                    Pooling::Max => {
                        for (m, &x) in self.maxes[id * d..(id + 1) * d].iter_mut().zip(v) {
                            *m = m.max(x);
                        }
                    }
                }
            }
        }
    }

    fn merge(&mut self, other: Pool) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            a.merge(b);
        }
        for (a, b) in self.maxes.iter_mut().zip(&other.maxes) {
            *a = a.max(*b);
        }
    }
}

/// Pool each vocabulary word's teacher vectors over all its occurrences.
/// Words that never occur are left out of the result.
pub fn aggregate(stream: &TokenVectorStream, vocab: &Vocabulary, pooling: Pooling) -> Result<WordEmbeddings> {
    aggregate_parallel(stream, vocab, pooling, 1)
}

/// Sharded variant of [`aggregate`].
pub fn aggregate_parallel(
    stream: &TokenVectorStream,
    vocab: &Vocabulary,
    pooling: Pooling,
    workers: usize,
) -> Result<WordEmbeddings> {
    if stream.token_count() == 0 {
        return Err(Error::EmptyCorpus);
    }
    let d = stream.dim;
    for (s, sent) in stream.sentences.iter().enumerate() {
        if sent.vectors.len() != sent.len() * d {
            return Err(Error::Record {
                sentence: s,
                position: sent.vectors.len() / d,
                message: format!("vector storage does not match {} tokens of dimension {d}", sent.len()),
            });
        }
    }

    let workers = workers.max(1).min(stream.sentences.len());
    let pool = if workers <= 1 {
        let mut pool = Pool::new(vocab.len(), d, pooling);
        pool.add_sentences(&stream.sentences, vocab);
        pool
    } else {
        let chunk = stream.sentences.len().div_ceil(workers);
        let parts: Vec<Pool> = std::thread::scope(|scope| {
            let handles: Vec<_> = stream
                .sentences
                .chunks(chunk)
                .map(|part| {
                    scope.spawn(move || {
                        let mut pool = Pool::new(vocab.len(), d, pooling);
                        pool.add_sentences(part, vocab);
                        pool
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("pooling worker panicked")).collect()
        });
        let mut parts = parts.into_iter();
        let mut pool = parts.next().expect("at least one shard");
        for p in parts {
            pool.merge(p);
        }
        pool
    };

    let present: Vec<u32> = (0..vocab.len() as u32).filter(|&id| pool.counts[id as usize] > 0).collect();
    let mut matrix = Vec::with_capacity(present.len() * d);
    for &id in &present {
        let id = id as usize;
        match pooling {
            Pooling::Mean => {
                let n = pool.counts[id] as f64;
                matrix.extend(pool.sums[id * d..(id + 1) * d].iter().map(|c| c.value() / n));
            }
            Pooling::Max => matrix.extend_from_slice(&pool.maxes[id * d..(id + 1) * d]),
        }
    }
    Ok(WordEmbeddings::from_f64(vocab.subset(&present), d, &matrix)?
        .with_metadata("model", "aggregate")
        .with_metadata("pooling", pooling.to_string()))
}

/// Mean of all vectors except the one at `target`; `None` when the
/// sentence has no other token.
pub fn pool_context(vectors: &[Vec<f64>], target: usize) -> Option<Vec<f64>> {
    if vectors.len() < 2 || target >= vectors.len() {
        return None;
    }
    let dim = vectors[0].len();
    let mut out = vec![0.0; dim];
    for (i, v) in vectors.iter().enumerate() {
        if i != target {
            for (o, x) in out.iter_mut().zip(v) {
                *o += x;
            }
        }
    }
    let n = (vectors.len() - 1) as f64;
    out.iter_mut().for_each(|x| *x /= n);
    Some(out)
}

#[derive(Clone, Debug)]
pub struct X2StaticConfig {
    pub dim: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub initial_lr: f64,
    /// Weight λ of the `‖u_w - P·c‖²` alignment term.
    pub alignment_weight: f64,
    pub seed: u64,
    pub workers: usize,
    pub verbose: bool,
}

impl Default for X2StaticConfig {
    fn default() -> Self {
        X2StaticConfig {
            dim: 300,
            negatives: 5,
            epochs: 5,
            initial_lr: 0.025,
            alignment_weight: 0.1,
            seed: 1,
            workers: 1,
            verbose: false,
        }
    }
}

impl X2StaticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.dim == 0 {
            return bad("dim must be at least 1");
        }
        if !(self.alignment_weight >= 0.0 && self.alignment_weight.is_finite()) {
            return bad("alignment weight must be non-negative");
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}

/// Student input rows `u`, output rows `v` and the projection `P` from
/// teacher to student space (`dim` rows of `teacher_dim`).
#[derive(Clone, Debug, PartialEq)]
pub struct X2StaticModel {
    pub dim: usize,
    pub teacher_dim: usize,
    pub lambda: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub p: Vec<f64>,
}

/// Gradient of one distillation example.
#[derive(Clone, Debug, Default)]
pub struct X2StaticGradient {
    pub loss: f64,
    pub u: Vec<f64>,
    pub v: BTreeMap<u32, Vec<f64>>,
    pub p: Vec<f64>,
}

impl X2StaticModel {
    /// `u` uniform in `[-0.5/d, 0.5/d]`, `v` zero, `P` uniform in
    /// `[-1/sqrt(teacher_dim), 1/sqrt(teacher_dim)]`.
    pub fn new<R: Rng + ?Sized>(vocab_size: usize, teacher_dim: usize, cfg: &X2StaticConfig, rng: &mut R) -> Self {
        let ub = 0.5 / cfg.dim as f64;
        let pb = (1.0 / teacher_dim as f64).sqrt();
        X2StaticModel {
            dim: cfg.dim,
            teacher_dim,
            lambda: cfg.alignment_weight,
            u: (0..vocab_size * cfg.dim).map(|_| rng.gen_range(-ub..=ub)).collect(),
            v: vec![0.0; vocab_size * cfg.dim],
            p: (0..cfg.dim * teacher_dim).map(|_| rng.gen_range(-pb..=pb)).collect(),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.u.len() / self.dim
    }

    fn project(&self, context: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.p.chunks_exact(self.teacher_dim)) {
            *o = row.iter().zip(context).map(|(a, b)| a * b).sum();
        }
    }

    fn check(&self, target: u32, context: &[f64], negatives: &[u32]) -> Result<()> {
        if context.len() != self.teacher_dim {
            return Err(Error::DimensionMismatch {
                expected: self.teacher_dim,
                found: context.len(),
            });
        }
        let n = self.vocab_size() as u32;
        if let Some(&id) = std::iter::once(&target).chain(negatives).find(|&&id| id >= n) {
            return Err(Error::InvalidConfig(format!("word id {id} out of range")));
        }
        Ok(())
    }

    /// Loss, output coefficients, `dℓ/dp` and the alignment residual
    /// `u_w - p`, all from current parameter values.
    fn forward(&self, target: u32, negatives: &[u32], proj: &[f64], coeffs: &mut Vec<f64>, grad_p: &mut [f64], resid: &mut [f64]) -> Result<f64> {
        let d = self.dim;
        coeffs.clear();
        grad_p.iter_mut().for_each(|x| *x = 0.0);
        let mut loss = 0.0;
        for (k, &t) in std::iter::once(&target).chain(negatives).enumerate() {
            let vt = &self.v[t as usize * d..(t as usize + 1) * d];
            let score: f64 = vt.iter().zip(proj).map(|(a, b)| a * b).sum();
            if !score.is_finite() {
                return Err(Error::NumericOverflow {
                    matrix: "output",
                    row: t as usize,
                });
            }
            let (label, signed) = if k == 0 { (1.0, score) } else { (0.0, -score) };
            loss -= log_sigmoid(signed);
            let g = sigmoid(score) - label;
            coeffs.push(g);
            for (gp, x) in grad_p.iter_mut().zip(vt) {
                *gp += g * x;
            }
        }
        let uw = &self.u[target as usize * d..(target as usize + 1) * d];
        let mut align = 0.0;
        for ((r, a), b) in resid.iter_mut().zip(uw).zip(proj) {
            *r = a - b;
            align += *r * *r;
        }
        for (gp, r) in grad_p.iter_mut().zip(resid.iter()) {
            *gp -= 2.0 * self.lambda * r;
        }
        let loss = loss + self.lambda * align;
        if !loss.is_finite() {
            return Err(Error::NumericOverflow {
                matrix: "input",
                row: target as usize,
            });
        }
        Ok(loss)
    }

    pub fn loss(&self, target: u32, context: &[f64], negatives: &[u32]) -> Result<f64> {
        self.check(target, context, negatives)?;
        let mut proj = vec![0.0; self.dim];
        self.project(context, &mut proj);
        let (mut grad_p, mut resid) = (vec![0.0; self.dim], vec![0.0; self.dim]);
        self.forward(target, negatives, &proj, &mut Vec::new(), &mut grad_p, &mut resid)
    }

    pub fn gradient(&self, target: u32, context: &[f64], negatives: &[u32]) -> Result<X2StaticGradient> {
        self.check(target, context, negatives)?;
        let d = self.dim;
        let mut proj = vec![0.0; d];
        self.project(context, &mut proj);
        let (mut coeffs, mut grad_p, mut resid) = (Vec::new(), vec![0.0; d], vec![0.0; d]);
        let loss = self.forward(target, negatives, &proj, &mut coeffs, &mut grad_p, &mut resid)?;
        let mut grad = X2StaticGradient {
            loss,
            u: resid.iter().map(|r| 2.0 * self.lambda * r).collect(),
            v: BTreeMap::new(),
            p: Vec::with_capacity(d * self.teacher_dim),
        };
        for (&t, &g) in std::iter::once(&target).chain(negatives).zip(&coeffs) {
            let row = grad.v.entry(t).or_insert_with(|| vec![0.0; d]);
            for (r, x) in row.iter_mut().zip(&proj) {
                *r += g * x;
            }
        }
        for gp in &grad_p {
            grad.p.extend(context.iter().map(|c| gp * c));
        }
        Ok(grad)
    }

    /// One SGD step; returns the loss before the update.
    pub fn step(&mut self, target: u32, context: &[f64], negatives: &[u32], lr: f64) -> Result<f64> {
        self.check(target, context, negatives)?;
        let mut s = Scratch::new(self.dim);
        self.step_with(target, context, negatives, lr, &mut s)
    }

    fn step_with(&mut self, target: u32, context: &[f64], negatives: &[u32], lr: f64, s: &mut Scratch) -> Result<f64> {
        let d = self.dim;
        self.project(context, &mut s.proj);
        let loss = self.forward(target, negatives, &s.proj, &mut s.coeffs, &mut s.grad_p, &mut s.resid)?;
        for (&t, &g) in std::iter::once(&target).chain(negatives).zip(&s.coeffs) {
            for (x, p) in self.v[t as usize * d..(t as usize + 1) * d].iter_mut().zip(&s.proj) {
                *x -= lr * g * p;
            }
        }
        let scale = 2.0 * self.lambda * lr;
        for (x, r) in self.u[target as usize * d..(target as usize + 1) * d].iter_mut().zip(&s.resid) {
            *x -= scale * r;
        }
        for (row, gp) in self.p.chunks_exact_mut(self.teacher_dim).zip(&s.grad_p) {
            for (x, c) in row.iter_mut().zip(context) {
                *x -= lr * gp * c;
            }
        }
        Ok(loss)
    }
}

struct Scratch {
    proj: Vec<f64>,
    coeffs: Vec<f64>,
    grad_p: Vec<f64>,
    resid: Vec<f64>,
}

impl Scratch {
    fn new(dim: usize) -> Self {
        Scratch {
            proj: vec![0.0; dim],
            coeffs: Vec::new(),
            grad_p: vec![0.0; dim],
            resid: vec![0.0; dim],
        }
    }
}

/// Check that every corpus token matches the stream token at the same
/// sentence and position.
pub fn check_alignment(corpus: &[Sentence], stream: &TokenVectorStream) -> Result<()> {
    const END: &str = "<end of sentence>";
    let n = corpus.len().max(stream.sentences.len());
    for s in 0..n {
        let expected = corpus.get(s).map_or(&[][..], |x| x.tokens());
        let found = stream.sentences.get(s).map_or(&[][..], |x| &x.tokens[..]);
        if s >= corpus.len() || s >= stream.sentences.len() {
            return Err(Error::Alignment {
                sentence: s,
                position: 0,
                expected: expected.first().map_or("<end of corpus>", String::as_str).to_owned(),
                found: found.first().map_or("<end of stream>", String::as_str).to_owned(),
            });
        }
        for p in 0..expected.len().max(found.len()) {
            let e = expected.get(p).map_or(END, String::as_str);
            let f = found.get(p).map_or(END, String::as_str);
            if e != f {
                return Err(Error::Alignment {
                    sentence: s,
                    position: p,
                    expected: e.to_owned(),
                    found: f.to_owned(),
                });
            }
        }
    }
    Ok(())
}

#[derive(Debug)]
pub struct X2StaticTrained {
    pub embeddings: WordEmbeddings,
    pub model: X2StaticModel,
    pub epoch_losses: Vec<f64>,
}

struct Progress {
    processed: AtomicU64,
    total: u64,
}

fn train_shard<R: Rng>(
    model: &mut X2StaticModel,
    shard: &[(Vec<Option<u32>>, &TokenSentence)],
    cfg: &X2StaticConfig,
    table: &NegativeSamplingTable,
    progress: &Progress,
    rng: &mut R,
) -> Result<(f64, u64)> {
    let td = model.teacher_dim;
    let mut scratch = Scratch::new(cfg.dim);
    let mut negatives = Vec::with_capacity(cfg.negatives);
    let (mut sum, mut context) = (vec![0.0; td], vec![0.0; td]);
    let (mut loss_sum, mut examples) = (0.0, 0u64);
    for (ids, sent) in shard {
        let n = sent.len();
        if n >= 2 {
            sum.iter_mut().for_each(|x| *x = 0.0);
            for i in 0..n {
                for (a, x) in sum.iter_mut().zip(sent.vector(i, td)) {
                    *a += x;
                }
            }
        }
        for (t, id) in ids.iter().enumerate() {
            let done = progress.processed.fetch_add(1, Ordering::Relaxed);
            let (Some(id), true) = (id, n >= 2) else { continue };
            let lr = decayed_lr(cfg.initial_lr, done as f64 / progress.total.max(1) as f64);
            let inv = 1.0 / (n - 1) as f64;
            for ((c, s), x) in context.iter_mut().zip(&sum).zip(sent.vector(t, td)) {
                *c = (s - x) * inv;
            }
            table.sample_negatives(rng, *id, cfg.negatives, &mut negatives);
            loss_sum += model.step_with(*id, &context, &negatives, lr, &mut scratch)?;
            examples += 1;
        }
    }
    Ok((loss_sum, examples))
}

/// Train student embeddings against the teacher stream. Corpus and stream
/// must agree token for token; emitted embeddings are the `u` rows.
pub fn x2static_train(
    corpus: &[Sentence],
    stream: &TokenVectorStream,
    vocab: &Vocabulary,
    cfg: &X2StaticConfig,
) -> Result<X2StaticTrained> {
    cfg.validate()?;
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    check_alignment(corpus, stream)?;

    let encoded: Vec<(Vec<Option<u32>>, &TokenSentence)> = stream
        .sentences
        .iter()
        .map(|s| (s.tokens.iter().map(|t| vocab.id(t)).collect(), s))
        .collect();
    let tokens: u64 = encoded.iter().map(|(ids, _)| ids.len() as u64).sum();
    if !encoded.iter().any(|(ids, s)| s.len() >= 2 && ids.iter().any(Option::is_some)) {
        return Err(Error::EmptyCorpus);
    }

    let table = NegativeSamplingTable::new(vocab, NOISE_POWER)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = X2StaticModel::new(vocab.len(), stream.dim, cfg, &mut rng);
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
            let shared = Hogwild(&mut model as *mut X2StaticModel);
            let chunk = encoded.len().div_ceil(workers);
            let results: Vec<Result<(f64, u64)>> = std::thread::scope(|scope| {
                let handles: Vec<_> = encoded
                    .chunks(chunk)
                    .enumerate()
                    .map(|(w, shard)| {
                        let (table, progress) = (&table, &progress);
                        scope.spawn(move || {
                            let seed = cfg.seed ^ ((epoch * workers + w + 1) as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
                            let mut rng = ChaCha8Rng::seed_from_u64(seed);
                            // SAFETY: `model` outlives the scope; racy updates are accepted.
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
        if cfg.verbose {
            eprintln!(
                "epoch={} tokens={} loss={:.6}",
                epoch + 1,
                progress.processed.load(Ordering::Relaxed),
                mean
            );
        }
        epoch_losses.push(mean);
    }

    let embeddings = WordEmbeddings::from_f64(vocab.clone(), cfg.dim, &model.u)?
        .with_metadata("model", "x2static")
        .with_metadata("dim", cfg.dim.to_string())
        .with_metadata("teacher_dim", stream.dim.to_string())
        .with_metadata("negatives", cfg.negatives.to_string())
        .with_metadata("epochs", cfg.epochs.to_string())
        .with_metadata("lr", cfg.initial_lr.to_string())
        .with_metadata("lambda", cfg.alignment_weight.to_string())
        .with_metadata("seed", cfg.seed.to_string());
    Ok(X2StaticTrained {
        embeddings,
        model,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    fn stream(dim: usize, sentences: &[&[(&str, &[f64])]]) -> TokenVectorStream {
        TokenVectorStream::new(
            dim,
            sentences
                .iter()
                .map(|s| s.iter().map(|(t, v)| (t.to_string(), v.to_vec())).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn mean_and_max_pooling() {
        let st = stream(2, &[&[("a", &[1.0, 0.0]), ("b", &[3.0, 3.0])], &[("a", &[0.0, 1.0])]]);
        let vocab = Vocabulary::from_words(["a", "b", "c"]).unwrap();
        let mean = aggregate(&st, &vocab, Pooling::Mean).unwrap();
        assert_eq!(mean.get("a").unwrap(), &[0.5, 0.5]);
        assert_eq!(mean.get("b").unwrap(), &[3.0, 3.0]);
        assert!(mean.get("c").is_none());
        assert_eq!(mean.len(), 2);
        let max = aggregate(&st, &vocab, Pooling::Max).unwrap();
        assert_eq!(max.get("a").unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn parallel_aggregate_matches_serial() {
        let sentences: Vec<Vec<(String, Vec<f64>)>> = (0..40)
            .map(|s| {
                (0..5)
                    .map(|p| (format!("w{}", (s + p) % 7), vec![s as f64 * 0.1, p as f64 - 2.0, 1e8]))
                    .collect()
            })
            .collect();
        let st = TokenVectorStream::new(3, sentences).unwrap();
        let vocab = Vocabulary::from_words((0..7).map(|i| format!("w{i}"))).unwrap();
        let a = aggregate(&st, &vocab, Pooling::Mean).unwrap();
        let b = aggregate_parallel(&st, &vocab, Pooling::Mean, 4).unwrap();
        for (x, y) in a.matrix().iter().zip(b.matrix()) {
            assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn empty_stream_is_an_error() {
        let st = TokenVectorStream::new(2, vec![]).unwrap();
        let vocab = Vocabulary::from_words(["a"]).unwrap();
        assert!(aggregate(&st, &vocab, Pooling::Mean).is_err());
    }

    #[test]
    fn context_pooling() {
        assert_eq!(pool_context(&[vec![2.0, 0.0], vec![0.0, 2.0]], 0).unwrap(), [0.0, 2.0]);
        let same = vec![vec![1.5, -2.0]; 3];
        assert_eq!(pool_context(&same, 1).unwrap(), [1.5, -2.0]);
        let v = [vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 2.0]];
        assert_eq!(pool_context(&v, 2).unwrap(), [0.5, 0.5]);
        assert!(pool_context(&[vec![1.0]], 0).is_none());
    }

    #[test]
    fn stream_round_trip() {
        let st = stream(2, &[&[("kedi", &[0.1, -2.5]), ("uyudu", &[1e-7, 3.0])], &[("ev", &[0.0, 1.0])]]);
        let mut buf = Vec::new();
        st.write(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("#dim=2\nkedi\t0.1 -2.5\n"));
        assert!(text.contains("\n\nev\t"));
        assert_eq!(TokenVectorStream::read(&buf[..]).unwrap(), st);
    }

    #[test]
    fn stream_errors_name_the_record() {
        let bad = "#dim=2\na\t1 2\nb\t1 2 3\n";
        assert!(matches!(
            TokenVectorStream::read(bad.as_bytes()),
            Err(Error::Record { sentence: 0, position: 1, .. })
        ));
        let bad = "#dim=2\na\t1 2\n\nb\t1 x\n";
        assert!(matches!(
            TokenVectorStream::read(bad.as_bytes()),
            Err(Error::Record { sentence: 1, position: 0, .. })
        ));
        assert!(matches!(
            TokenVectorStream::read("a\t1 2\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(TokenVectorStream::read("#dim=1\na\tNaN\n".as_bytes()).is_err());
    }

    #[test]
    fn alignment_is_checked_everywhere() {
        let st = stream(1, &[&[("a", &[1.0]), ("b", &[1.0])], &[("c", &[1.0]), ("d", &[1.0])]]);
        assert!(check_alignment(&[tokenize("a b"), tokenize("c d")], &st).is_ok());
        match check_alignment(&[tokenize("a b"), tokenize("c x")], &st) {
            Err(Error::Alignment { sentence: 1, position: 1, expected, found }) => {
                assert_eq!((expected.as_str(), found.as_str()), ("x", "d"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            check_alignment(&[tokenize("a b"), tokenize("c d e")], &st),
            Err(Error::Alignment { sentence: 1, position: 2, .. })
        ));
        assert!(matches!(
            check_alignment(&[tokenize("a b")], &st),
            Err(Error::Alignment { sentence: 1, position: 0, .. })
        ));
    }

    #[test]
    fn zero_teacher_gives_closed_form_loss() {
        let cfg = X2StaticConfig {
            dim: 4,
            alignment_weight: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut m = X2StaticModel::new(6, 3, &cfg, &mut rng);
        m.v.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        let loss = m.step(0, &[0.0; 3], &[1, 2, 3, 4, 5], 0.1).unwrap();
        assert!((loss - 6.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let corpus = vec![tokenize("a b c"), tokenize("b c")];
        let st = stream(2, &[&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0]), ("c", &[1.0, 1.0])], &[("b", &[0.0, 1.0]), ("c", &[1.0, 1.0])]]);
        let vocab = Vocabulary::from_sentences(&corpus, 1).unwrap();
        let cfg = X2StaticConfig {
            dim: 3,
            epochs: 0,
            ..Default::default()
        };
        let t = x2static_train(&corpus, &st, &vocab, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let init = X2StaticModel::new(vocab.len(), 2, &cfg, &mut rng);
        assert_eq!(t.model, init);
    }

    #[test]
    fn misaligned_training_input_is_rejected() {
        let corpus = vec![tokenize("a b")];
        let st = stream(1, &[&[("a", &[1.0]), ("c", &[1.0])]]);
        let vocab = Vocabulary::from_sentences(&corpus, 1).unwrap();
        assert!(matches!(
            x2static_train(&corpus, &st, &vocab, &X2StaticConfig::default()),
            Err(Error::Alignment { .. })
        ));
    }

    #[test]
    fn single_token_sentences_are_skipped() {
        let corpus = vec![tokenize("a"), tokenize("b")];
        let st = stream(1, &[&[("a", &[1.0])], &[("b", &[1.0])]]);
        let vocab = Vocabulary::from_sentences(&corpus, 1).unwrap();
        assert!(matches!(
            x2static_train(&corpus, &st, &vocab, &X2StaticConfig::default()),
            Err(Error::EmptyCorpus)
        ));
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn single_occurrence_is_returned_verbatim(v in prop::collection::vec(-1e3f64..1e3, 1..6)) {
            let st = TokenVectorStream::new(v.len(), vec![vec![("w".into(), v.clone())]]).unwrap();
            let vocab = Vocabulary::from_words(["w"]).unwrap();
            let e = aggregate(&st, &vocab, Pooling::Mean).unwrap();
            let expected: Vec<f32> = v.iter().map(|&x| x as f32).collect();
            prop_assert_eq!(e.get("w").unwrap(), &expected[..]);
        }

        #[test]
        fn pooled_context_excludes_target(rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 2..8), t in 0usize..8) {
            let t = t % rows.len();
            let pooled = pool_context(&rows, t).unwrap();
            for k in 0..3 {
                let brute: f64 = rows.iter().enumerate().filter(|(i, _)| *i != t).map(|(_, r)| r[k]).sum::<f64>() / (rows.len() - 1) as f64;
                prop_assert!((pooled[k] - brute).abs() < 1e-12);
            }
        }
    }
}
