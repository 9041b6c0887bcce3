use std::io::{BufRead, Write};
use std::path::Path;

use crate::corpus::open_text;
use crate::embio::WordEmbeddings;
use crate::error::{Error, Result};
use crate::eval::metrics::{correlation_p_value, cosine, pearson, spearman};

#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityPair {
    pub w1: String,
    pub w2: String,
    /// Gold score on the 0–10 scale.
    pub gold: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimilarityDataset {
    pub pairs: Vec<SimilarityPair>,
}

impl SimilarityDataset {
    /// Parse `w1<TAB>w2<TAB>score` lines. Blank lines and `#` comments are
    /// ignored; scores must lie in `[0, 10]`.
    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut pairs = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                line: idx + 1,
                message,
            };
            let fields: Vec<&str> = trimmed.split('\t').collect();
            if fields.len() != 3 {
                return Err(err(format!("expected 3 tab-separated fields, found {}", fields.len())));
            }
            let gold: f64 = fields[2]
                .trim()
                .parse()
                .map_err(|_| err(format!("bad score {:?}", fields[2])))?;
            if !(0.0..=10.0).contains(&gold) {
                return Err(err(format!("score {gold} outside [0, 10]")));
            }
            if fields[0].is_empty() || fields[1].is_empty() {
                return Err(err("empty word".into()));
            }
            pairs.push(SimilarityPair {
                w1: fields[0].to_owned(),
                w2: fields[1].to_owned(),
                gold,
            });
        }
        Ok(SimilarityDataset { pairs })
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::read(open_text(path)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityReport {
    pub pearson: f64,
    pub pearson_p: f64,
    pub spearman: f64,
    pub spearman_p: f64,
    /// Fraction of pairs dropped because a word has no embedding.
    pub oov_ratio: f64,
    pub evaluated_pairs: usize,
    pub total_pairs: usize,
}

impl SimilarityReport {
    pub fn write_table<W: Write>(&self, name: &str, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{name}")?;
        writeln!(w, "  Pearson   {:>8.4}  (p = {:.3e})", self.pearson, self.pearson_p)?;
        writeln!(w, "  Spearman  {:>8.4}  (p = {:.3e})", self.spearman, self.spearman_p)?;
        writeln!(
            w,
            "  OOV ratio {:>8.4}  ({} of {} pairs evaluated)",
            self.oov_ratio, self.evaluated_pairs, self.total_pairs
        )
    }

    /// `dataset<TAB>pearson<TAB>pearson_p<TAB>spearman<TAB>spearman_p<TAB>oov_ratio<TAB>evaluated_pairs`.
    pub fn write_tsv<W: Write>(&self, name: &str, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "{name}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.pearson, self.pearson_p, self.spearman, self.spearman_p, self.oov_ratio, self.evaluated_pairs
        )
    }
}

/// Correlate embedding cosines with gold scores over pairs whose words
/// both have embeddings.
pub fn similarity_evaluate(emb: &WordEmbeddings, dataset: &SimilarityDataset) -> Result<SimilarityReport> {
    if dataset.pairs.is_empty() {
        return Err(Error::InsufficientData("similarity dataset is empty".into()));
    }
    let mut predicted = Vec::new();
    let mut gold = Vec::new();
    for p in &dataset.pairs {
        let (Some(u), Some(v)) = (emb.vector(&p.w1), emb.vector(&p.w2)) else {
            continue;
        };
        match cosine(&u, &v) {
            Ok(c) => {
                predicted.push(c);
                gold.push(p.gold);
            }
            Err(Error::ZeroVector) => continue,
            Err(e) => return Err(e),
        }
    }
    let n = predicted.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "only {n} of {} pairs have embeddings; need at least 3",
            dataset.pairs.len()
        )));
    }
    let r = pearson(&predicted, &gold)?;
    let rho = spearman(&predicted, &gold)?;
    Ok(SimilarityReport {
        pearson: r,
        pearson_p: correlation_p_value(r, n),
        spearman: rho,
        spearman_p: correlation_p_value(rho, n),
        oov_ratio: (dataset.pairs.len() - n) as f64 / dataset.pairs.len() as f64,
        evaluated_pairs: n,
        total_pairs: dataset.pairs.len(),
    })
}
