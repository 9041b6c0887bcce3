//! Corpus reading, tokenization and vocabulary construction.
//!
//! Corpora are UTF-8 text with one sentence per line, optionally
//! gzip-compressed. Tokens are maximal runs of non-whitespace characters;
//! no case folding or punctuation handling is applied.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use rand::Rng;

use crate::error::{Error, Result};

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

/// A tokenized line of text.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Sentence {
    tokens: Vec<String>,
}

impl Sentence {
    /// Create a sentence, dropping empty tokens.
    pub fn new<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Self {
        Sentence {
            tokens: tokens
                .into_iter()
                .map(Into::into)
                .filter(|t: &String| !t.is_empty())
                .collect(),
        }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Split a line on whitespace.
pub fn tokenize(line: &str) -> Sentence {
    Sentence {
        tokens: line.split_whitespace().map(str::to_owned).collect(),
    }
}

/// Decode and tokenize a raw line. `base_offset` is the position of the
/// line in its stream and is used to report the offending byte.
pub fn tokenize_bytes(line: &[u8], base_offset: u64) -> Result<Sentence> {
    match std::str::from_utf8(line) {
        Ok(s) => Ok(tokenize(s)),
        Err(e) => Err(Error::Decode {
            offset: base_offset + e.valid_up_to() as u64,
        }),
    }
}

/// Open a file for buffered reading, transparently decompressing gzip
/// input (detected by its magic bytes).
pub fn open_text<P: AsRef<Path>>(path: P) -> Result<Box<dyn BufRead + Send>> {
    let mut reader = BufReader::new(File::open(path)?);
    let is_gzip = reader.fill_buf()?.starts_with(&GZIP_MAGIC);
    if is_gzip {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(reader))))
    } else {
        Ok(Box::new(reader))
    }
}

/// Streaming reader yielding one sentence per line.
pub struct SentenceReader<R> {
    inner: R,
    offset: u64,
    buf: Vec<u8>,
}

impl<R: BufRead> SentenceReader<R> {
    pub fn new(inner: R) -> Self {
        SentenceReader {
            inner,
            offset: 0,
            buf: Vec::new(),
        }
    }
}

impl SentenceReader<Box<dyn BufRead + Send>> {
    pub fn open<P: AsRef<Path>>(path: P) -> Result<Self> {
        Ok(SentenceReader::new(open_text(path)?))
    }
}

impl<R: BufRead> Iterator for SentenceReader<R> {
    type Item = Result<Sentence>;

    fn next(&mut self) -> Option<Self::Item> {
        self.buf.clear();
        match self.inner.read_until(b'\n', &mut self.buf) {
            Ok(0) => None,
            Ok(n) => {
                let start = self.offset;
                self.offset += n as u64;
                Some(tokenize_bytes(&self.buf, start))
            }
            Err(e) => Some(Err(e.into())),
        }
    }
}

/// Read a whole corpus into memory.
pub fn read_corpus<P: AsRef<Path>>(path: P) -> Result<Vec<Sentence>> {
    SentenceReader::open(path)?.collect()
}

/// Word ↔ id map with occurrence counts.
///
/// Ids are dense and assigned by descending count, ties broken
/// lexicographically.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, u32>,
    total_tokens: u64,
    min_count: u64,
}

impl Vocabulary {
    /// Build a vocabulary from a sentence collection.
    pub fn from_sentences<'a, I>(sentences: I, min_count: u64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Sentence>,
    {
        check_min_count(min_count)?;
        let mut counts = HashMap::new();
        for s in sentences {
            add_counts(&mut counts, s);
        }
        Self::from_counts(counts, min_count)
    }

    /// Build a vocabulary from a fallible sentence stream such as a
    /// [`SentenceReader`].
    pub fn from_stream<I>(sentences: I, min_count: u64) -> Result<Self>
    where
        I: IntoIterator<Item = Result<Sentence>>,
    {
        check_min_count(min_count)?;
        let mut counts = HashMap::new();
        for s in sentences {
            add_counts(&mut counts, &s?);
        }
        Self::from_counts(counts, min_count)
    }

    /// Count tokens with `workers` threads, each over a contiguous shard,
    /// and merge. Integer counts make the merge exact.
    pub fn from_sentences_parallel(
        sentences: &[Sentence],
        min_count: u64,
        workers: usize,
    ) -> Result<Self> {
        check_min_count(min_count)?;
        let workers = workers.max(1);
        if workers == 1 || sentences.len() < 2 {
            return Self::from_sentences(sentences, min_count);
        }
        let chunk = sentences.len().div_ceil(workers);
        let partials: Vec<HashMap<String, u64>> = std::thread::scope(|scope| {
            let handles: Vec<_> = sentences
                .chunks(chunk)
                .map(|shard| {
                    scope.spawn(move || {
                        let mut counts = HashMap::new();
                        for s in shard {
                            add_counts(&mut counts, s);
                        }
                        counts
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("counting worker panicked"))
                .collect()
        });
        let mut merged: HashMap<String, u64> = HashMap::new();
        for part in partials {
            for (w, c) in part {
                *merged.entry(w).or_default() += c;
            }
        }
        Self::from_counts(merged, min_count)
    }

    /// Build from raw counts, dropping words below `min_count`.
    pub fn from_counts(counts: HashMap<String, u64>, min_count: u64) -> Result<Self> {
        check_min_count(min_count)?;
        let mut entries: Vec<(String, u64)> =
            counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(Self::from_sorted_entries(entries, min_count))
    }

    /// A vocabulary without frequency information, keeping the given
    /// word order. Used for embeddings loaded from disk.
    pub fn from_words<S: Into<String>>(words: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut vocab = Vocabulary::default();
        for w in words {
            let w = w.into();
            if vocab.index.contains_key(&w) {
                return Err(Error::VocabularyMismatch(format!("duplicate word {w:?}")));
            }
            vocab.push(w, 0);
        }
        Ok(vocab)
    }

    /// Restrict to the given ids, keeping their relative order and counts.
    pub fn subset(&self, ids: &[u32]) -> Self {
        let mut vocab = Vocabulary {
            min_count: self.min_count,
            ..Default::default()
        };
        for &id in ids {
            vocab.push(self.words[id as usize].clone(), self.counts[id as usize]);
        }
        vocab
    }

    fn from_sorted_entries(entries: Vec<(String, u64)>, min_count: u64) -> Self {
        let mut vocab = Vocabulary {
            min_count,
            ..Default::default()
        };
        for (w, c) in entries {
            vocab.push(w, c);
        }
        vocab
    }

    fn push(&mut self, word: String, count: u64) {
        let id = self.words.len() as u32;
        self.index.insert(word.clone(), id);
        self.words.push(word);
        self.counts.push(count);
        self.total_tokens += count;
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    pub fn count(&self, id: u32) -> Option<u64> {
        self.counts.get(id as usize).copied()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    /// Map a sentence to ids, dropping out-of-vocabulary tokens.
    pub fn encode(&self, sentence: &Sentence) -> Vec<u32> {
        sentence.tokens().iter().filter_map(|t| self.id(t)).collect()
    }

    /// Inverse of [`encode`](Self::encode) for in-vocabulary ids.
    pub fn decode(&self, ids: &[u32]) -> Sentence {
        Sentence {
            tokens: ids
                .iter()
                .filter_map(|&id| self.word(id))
                .map(str::to_owned)
                .collect(),
        }
    }

    /// Write as `#tokens=<n>` followed by `word<TAB>count` lines.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "#tokens={}", self.total_tokens)?;
        for (word, count) in self.words.iter().zip(&self.counts) {
            writeln!(w, "{word}\t{count}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        self.write(std::io::BufWriter::new(File::create(path)?))
    }

    /// Read a vocabulary file. The header total must match the sum of the
    /// counts; the frequency floor is taken to be the smallest count.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let header_total = match lines.next() {
            Some((_, line)) => {
                let line = line?;
                line.strip_prefix("#tokens=")
                    .and_then(|n| n.trim().parse::<u64>().ok())
                    .ok_or_else(|| Error::Parse {
                        line: 1,
                        message: format!("expected `#tokens=<n>` header, found {line:?}"),
                    })?
            }
            None => {
                return Err(Error::Parse {
                    line: 1,
                    message: "missing header".into(),
                })
            }
        };

        let mut entries = Vec::new();
        let mut seen = HashMap::new();
        for (idx, line) in lines {
            let line = line?;
            let lineno = idx + 1;
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: lineno,
                message,
            };
            let (word, count) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected `word<TAB>count`".into()))?;
            let count: u64 = count
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("bad count {count:?}")))?;
            if word.is_empty() {
                return Err(parse_err("empty word".into()));
            }
            if seen.insert(word.to_owned(), ()).is_some() {
                return Err(parse_err(format!("duplicate word {word:?}")));
            }
            entries.push((word.to_owned(), count));
        }

        let min_count = entries.iter().map(|e| e.1).min().unwrap_or(1);
        let vocab = Self::from_sorted_entries(entries, min_count);
        if vocab.total_tokens != header_total {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "header declares {header_total} tokens but counts sum to {}",
                    vocab.total_tokens
                ),
            });
        }
        Ok(vocab)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::read(open_text(path)?)
    }
}

fn check_min_count(min_count: u64) -> Result<()> {
    if min_count == 0 {
        return Err(Error::InvalidConfig("min_count must be at least 1".into()));
    }
    Ok(())
}

fn add_counts(counts: &mut HashMap<String, u64>, sentence: &Sentence) {
    for t in sentence.tokens() {
        match counts.get_mut(t.as_str()) {
            Some(c) => *c += 1,
            None => {
                counts.insert(t.clone(), 1);
            }
        }
    }
}

/// Noise distribution for negative sampling: unigram counts raised to
/// `power`, stored as a cumulative table.
#[derive(Clone, Debug)]
pub struct NegativeSamplingTable {
    cumulative: Vec<f64>,
    power: f64,
}

impl NegativeSamplingTable {
    pub fn new(vocab: &Vocabulary, power: f64) -> Result<Self> {
        Self::from_counts(vocab.counts(), power)
    }

    pub fn from_counts(counts: &[u64], power: f64) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        if !(power > 0.0 && power <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "sampling power must lie in (0, 1], got {power}"
            )));
        }
        // Zero counts (embeddings loaded without frequencies) get unit mass.
        let weights: Vec<f64> = counts
            .iter()
            .map(|&c| (c.max(1) as f64).powf(power))
            .collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w;
                acc / total
            })
            .collect();
        *cumulative.last_mut().unwrap() = 1.0;
        Ok(NegativeSamplingTable { cumulative, power })
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn probability(&self, id: u32) -> f64 {
        let i = id as usize;
        let lo = if i == 0 { 0.0 } else { self.cumulative[i - 1] };
        self.cumulative[i] - lo
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.gen();
        let idx = self.cumulative.partition_point(|&c| c <= u);
        idx.min(self.cumulative.len() - 1) as u32
    }

    /// Draw `k` negatives into `out`, redrawing any that equal `positive`.
    /// With a single-word vocabulary no valid negative exists and `out`
    /// is left empty.
    pub fn sample_negatives<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        positive: u32,
        k: usize,
        out: &mut Vec<u32>,
    ) {
        out.clear();
        if self.cumulative.len() < 2 {
            return;
        }
        while out.len() < k {
            let id = self.sample(rng);
            if id != positive {
                out.push(id);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn corpus(text: &str) -> Vec<Sentence> {
        text.lines().map(tokenize).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize("Numarayı bir deftere yaz").tokens(),
            ["Numarayı", "bir", "deftere", "yaz"]
        );
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("a\t b").tokens(), ["a", "b"]);
        assert_eq!(tokenize("Kedi, köpek.").tokens(), ["Kedi,", "köpek."]);
    }

    #[test]
    fn invalid_utf8_reports_offset() {
        let err = tokenize_bytes(b"ab \xff cd", 100).unwrap_err();
        assert!(matches!(err, Error::Decode { offset: 103 }));
    }

    #[test]
    fn reader_reports_absolute_offset() {
        let data: &[u8] = b"iyi gunler\nab\xffc\n";
        let results: Vec<_> = SentenceReader::new(data).collect();
        assert_eq!(results[0].as_ref().unwrap().len(), 2);
        assert!(matches!(results[1], Err(Error::Decode { offset: 13 })));
    }

    #[test]
    fn vocabulary_examples() {
        let c = corpus("a a b");
        let v = Vocabulary::from_sentences(&c, 2).unwrap();
        assert_eq!(v.words(), ["a"]);
        assert_eq!(v.count(0), Some(2));
        assert_eq!(v.total_tokens(), 2);

        let v = Vocabulary::from_sentences(&c, 1).unwrap();
        assert_eq!(v.words(), ["a", "b"]);
        assert_eq!(v.counts(), [2, 1]);

        let v = Vocabulary::from_sentences(&[], 1).unwrap();
        assert!(v.is_empty());
        assert_eq!(v.total_tokens(), 0);

        assert!(Vocabulary::from_sentences(&c, 0).is_err());
    }

    #[test]
    fn ties_are_lexicographic() {
        let v = Vocabulary::from_sentences(&corpus("c b a c b a d"), 1).unwrap();
        assert_eq!(v.words(), ["a", "b", "c", "d"]);
    }

    #[test]
    fn encode_examples() {
        let v = Vocabulary::from_sentences(&corpus("a b"), 1).unwrap();
        let (a, b) = (v.id("a").unwrap(), v.id("b").unwrap());
        assert_eq!(v.encode(&tokenize("a x b")), vec![a, b]);
        assert!(v.encode(&tokenize("x y")).is_empty());
        assert_eq!(v.encode(&tokenize("b a")), vec![b, a]);
    }

    #[test]
    fn parallel_counting_matches_single() {
        let text = "bir iki üç\n".repeat(7) + &"dört bir\n".repeat(13) + "beş";
        let c = corpus(&text);
        let single = Vocabulary::from_sentences(&c, 2).unwrap();
        for workers in 2..6 {
            assert_eq!(
                Vocabulary::from_sentences_parallel(&c, 2, workers).unwrap(),
                single
            );
        }
    }

    #[test]
    fn vocabulary_file_round_trip() {
        let v = Vocabulary::from_sentences(&corpus("a a a b b c\nd"), 1).unwrap();
        let mut buf = Vec::new();
        v.write(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("#tokens=7\na\t3\n"));
        assert_eq!(Vocabulary::read(&buf[..]).unwrap(), v);
    }

    #[test]
    fn vocabulary_file_rejects_bad_total() {
        let err = Vocabulary::read("#tokens=5\na\t3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = Vocabulary::read("#tokens=3\na\tx\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn gzip_corpus_is_detected() {
        use flate2::write::GzEncoder;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt.gz");
        let mut enc = GzEncoder::new(File::create(&path).unwrap(), Default::default());
        enc.write_all("ev ve araba\nev\n".as_bytes()).unwrap();
        enc.finish().unwrap();
        let sentences = read_corpus(&path).unwrap();
        assert_eq!(sentences.len(), 2);
        assert_eq!(sentences[0].tokens(), ["ev", "ve", "araba"]);
    }

    #[test]
    fn sampling_table_examples() {
        let t = NegativeSamplingTable::from_counts(&[3, 1], 0.75).unwrap();
        let expected = 3f64.powf(0.75) / (3f64.powf(0.75) + 1.0);
        assert!((t.probability(0) - expected).abs() < 1e-12);
        assert!((expected - 0.6951).abs() < 1e-4);

        let t = NegativeSamplingTable::from_counts(&[5], 0.3).unwrap();
        assert_eq!(t.probability(0), 1.0);

        let t = NegativeSamplingTable::from_counts(&[1, 1], 0.75).unwrap();
        assert!((t.probability(0) - 0.5).abs() < 1e-12);
        assert!((t.probability(1) - 0.5).abs() < 1e-12);

        assert!(matches!(
            NegativeSamplingTable::from_counts(&[], 0.75),
            Err(Error::EmptyVocabulary)
        ));
        assert!(NegativeSamplingTable::from_counts(&[1], 0.0).is_err());
    }

    #[test]
    fn sampling_table_empirical_frequency() {
        let t = NegativeSamplingTable::from_counts(&[3, 1], 0.75).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let hits = (0..n).filter(|_| t.sample(&mut rng) == 0).count();
        assert!((hits as f64 / n as f64 - 0.6951).abs() < 0.01);
    }

    #[test]
    fn negatives_avoid_positive() {
        let t = NegativeSamplingTable::from_counts(&[100, 1, 1], 0.75).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut out = Vec::new();
        for _ in 0..100 {
            t.sample_negatives(&mut rng, 0, 5, &mut out);
            assert_eq!(out.len(), 5);
            assert!(out.iter().all(|&id| id != 0));
        }
        let single = NegativeSamplingTable::from_counts(&[4], 0.75).unwrap();
        single.sample_negatives(&mut rng, 0, 5, &mut out);
        assert!(out.is_empty());
    }
}
