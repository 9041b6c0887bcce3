use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::open_text;
use crate::embio::{rank_by_cosine, Neighbor, WordEmbeddings};
use crate::error::{Error, Result};

/// Cutoff below which a correct answer scores zero.
pub const DEFAULT_TOP_K: usize = 10;

/// "a is to b as c is to d".
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnalogyQuery {
    pub a: String,
    pub b: String,
    pub c: String,
    pub d: String,
}

/// Analogy queries grouped into named categories, in file order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnalogyDataset {
    categories: Vec<(String, Vec<AnalogyQuery>)>,
}

impl AnalogyDataset {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a query; repeated category names extend the existing category.
    pub fn push(&mut self, category: &str, query: AnalogyQuery) {
        match self.categories.iter_mut().find(|(name, _)| name == category) {
            Some((_, qs)) => qs.push(query),
            None => self.categories.push((category.to_owned(), vec![query])),
        }
    }

    pub fn categories(&self) -> &[(String, Vec<AnalogyQuery>)] {
        &self.categories
    }

    pub fn len(&self) -> usize {
        self.categories.iter().map(|(_, q)| q.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parse `: <category>` header lines followed by `a b c d` query lines.
    /// Queries before the first header land in category `default`.
    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut ds = AnalogyDataset::new();
        let mut current = String::from("default");
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix(':') {
                let name = name.trim();
                if name.is_empty() {
                    return Err(Error::Parse {
                        line: idx + 1,
                        message: "empty category name".into(),
                    });
                }
                current = name.to_owned();
                continue;
            }
            let words: Vec<&str> = line.split_whitespace().collect();
            if words.len() != 4 {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected 4 words, found {}", words.len()),
                });
            }
            ds.push(
                &current,
                AnalogyQuery {
                    a: words[0].into(),
                    b: words[1].into(),
                    c: words[2].into(),
                    d: words[3].into(),
                },
            );
        }
        Ok(ds)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::read(open_text(path)?)
    }
}

/// Rank candidates for `b - a + c` by cosine similarity. The query words
/// themselves are never returned.
pub fn analogy_query(
    emb: &WordEmbeddings,
    a: &str,
    b: &str,
    c: &str,
    top_k: usize,
) -> Result<Vec<Neighbor>> {
    let vocab = emb.vocab();
    let missing: Vec<String> = [a, b, c]
        .iter()
        .filter(|w| vocab.id(w).is_none())
        .map(|w| w.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingWords(missing));
    }
    let ids = [vocab.id(a).unwrap(), vocab.id(b).unwrap(), vocab.id(c).unwrap()];
    let target: Vec<f64> = emb
        .row(ids[0])
        .iter()
        .zip(emb.row(ids[1]))
        .zip(emb.row(ids[2]))
        .map(|((&va, &vb), &vc)| vb as f64 - va as f64 + vc as f64)
        .collect();
    rank_by_cosine(emb, &target, &ids, top_k)
}

/// Metrics for one category (or the overall row).
#[derive(Clone, Debug, PartialEq)]
pub struct CategoryScore {
    pub name: String,
    /// Mean reciprocal rank over answered queries.
    pub mrr: f64,
    /// Fraction of queries with an out-of-vocabulary `a`, `b` or `c`.
    pub miss_ratio: f64,
    pub answered: usize,
    pub missed: usize,
    pub reciprocal_rank_sum: f64,
}

impl CategoryScore {
    fn from_sums(name: String, reciprocal_rank_sum: f64, answered: usize, missed: usize) -> Self {
        let total = answered + missed;
        CategoryScore {
            name,
            mrr: if answered == 0 { 0.0 } else { reciprocal_rank_sum / answered as f64 },
            miss_ratio: if total == 0 { 0.0 } else { missed as f64 / total as f64 },
            answered,
            missed,
            reciprocal_rank_sum,
        }
    }

    pub fn total(&self) -> usize {
        self.answered + self.missed
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalogyReport {
    pub categories: Vec<CategoryScore>,
    pub overall: CategoryScore,
}

impl AnalogyReport {
    /// Aligned table with one row per category and a final overall row.
    pub fn write_table<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let width = self
            .categories
            .iter()
            .map(|c| c.name.chars().count())
            .chain(["Category".len(), "overall".len()])
            .max()
            .unwrap_or(8);
        writeln!(w, "{:<width$}  {:>10}  {:>7}  {:>8}  {:>6}", "Category", "Miss Ratio", "MRR", "Answered", "Missed")?;
        writeln!(w, "{}", "-".repeat(width + 41))?;
        for c in self.categories.iter().chain(std::iter::once(&self.overall)) {
            if std::ptr::eq(c, &self.overall) {
                writeln!(w, "{}", "-".repeat(width + 41))?;
            }
            let pad = width - c.name.chars().count();
            writeln!(
                w,
                "{}{}  {:>10.3}  {:>7.3}  {:>8}  {:>6}",
                c.name,
                " ".repeat(pad),
                c.miss_ratio,
                c.mrr,
                c.answered,
                c.missed
            )?;
        }
        Ok(())
    }

    /// `category<TAB>mrr<TAB>miss_ratio<TAB>answered<TAB>missed` per
    /// category, then the `overall` row.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for c in self.categories.iter().chain(std::iter::once(&self.overall)) {
            writeln!(w, "{}\t{}\t{}\t{}\t{}", c.name, c.mrr, c.miss_ratio, c.answered, c.missed)?;
        }
        Ok(())
    }
}

enum Outcome {
    Answered(f64),
    Missed,
}

fn score_query(emb: &WordEmbeddings, q: &AnalogyQuery, top_k: usize) -> Result<Outcome> {
    match analogy_query(emb, &q.a, &q.b, &q.c, top_k) {
        Ok(ranked) => Ok(Outcome::Answered(
            ranked
                .iter()
                .position(|n| n.word == q.d)
                .map_or(0.0, |rank| 1.0 / (rank + 1) as f64),
        )),
        Err(Error::MissingWords(_)) => Ok(Outcome::Missed),
        // b - a + c cancelled out exactly; nothing can be ranked.
        Err(Error::ZeroVector) => Ok(Outcome::Answered(0.0)),
        Err(e) => Err(e),
    }
}

/// Score every query by the reciprocal rank of `d` in the top-`k` list
/// (zero if absent). Queries with a missing `a`, `b` or `c` only count
/// toward the miss ratio.
pub fn mrr_evaluate(emb: &WordEmbeddings, dataset: &AnalogyDataset, top_k: usize) -> Result<AnalogyReport> {
    if dataset.is_empty() {
        return Err(Error::InsufficientData("analogy dataset is empty".into()));
    }
    if top_k == 0 {
        return Err(Error::InvalidConfig("top_k must be at least 1".into()));
    }
    let flat: Vec<(usize, &AnalogyQuery)> = dataset
        .categories()
        .iter()
        .enumerate()
        .flat_map(|(ci, (_, qs))| qs.iter().map(move |q| (ci, q)))
        .collect();
    let outcomes: Vec<(usize, Outcome)> = flat
        .par_iter()
        .map(|&(ci, q)| score_query(emb, q, top_k).map(|o| (ci, o)))
        .collect::<Result<_>>()?;

    let n_cat = dataset.categories().len();
    let mut sums = vec![(0.0f64, 0usize, 0usize); n_cat];
    for (ci, outcome) in outcomes {
        match outcome {
            Outcome::Answered(s) => {
                sums[ci].0 += s;
                sums[ci].1 += 1;
            }
            Outcome::Missed => sums[ci].2 += 1,
        }
    }

    let categories: Vec<CategoryScore> = dataset
        .categories()
        .iter()
        .zip(&sums)
        .map(|((name, _), &(s, a, m))| CategoryScore::from_sums(name.clone(), s, a, m))
        .collect();
    let overall = CategoryScore::from_sums(
        "overall".into(),
        categories.iter().map(|c| c.reciprocal_rank_sum).sum(),
        categories.iter().map(|c| c.answered).sum(),
        categories.iter().map(|c| c.missed).sum(),
    );
    Ok(AnalogyReport { categories, overall })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;

    fn emb(words: &[&str], dim: usize, values: &[f64]) -> WordEmbeddings {
        WordEmbeddings::from_f64(Vocabulary::from_words(words.iter().copied()).unwrap(), dim, values).unwrap()
    }

    fn q(a: &str, b: &str, c: &str, d: &str) -> AnalogyQuery {
        AnalogyQuery {
            a: a.into(),
            b: b.into(),
            c: c.into(),
            d: d.into(),
        }
    }

    #[test]
    fn constructed_optimum_ranks_first() {
        // d = b - a + c; the distractor is orthogonal to everything else.
        let e = emb(
            &["a", "b", "c", "d", "x"],
            4,
            &[
                1.0, 0.0, 0.0, 0.0, //
                1.0, 1.0, 0.0, 0.0, //
                0.0, 0.0, 1.0, 0.0, //
                0.0, 1.0, 1.0, 0.0, //
                0.0, 0.0, 0.0, 1.0,
            ],
        );
        let res = analogy_query(&e, "a", "b", "c", 10).unwrap();
        assert_eq!(res[0].word, "d");
        assert!((res[0].similarity - 1.0).abs() < 1e-12);
        assert!(res.iter().all(|n| !["a", "b", "c"].contains(&n.word.as_str())));
    }

    #[test]
    fn nearest_query_word_is_excluded() {
        // Target = [0.1, 0, 1.0]: c itself scores 0.995, y 0.866, z 0.
        let e = emb(
            &["a", "b", "c", "y", "z"],
            3,
            &[
                1.0, 0.0, 0.0, //
                1.1, 0.0, 0.0, //
                0.0, 0.0, 1.0, //
                0.0, 1.0, 1.732, //
                0.0, 1.0, 0.0,
            ],
        );
        let res = analogy_query(&e, "a", "b", "c", 2).unwrap();
        assert_eq!(res[0].word, "y");
        assert_eq!(res[1].word, "z");
    }

    #[test]
    fn missing_words_are_named() {
        let e = emb(&["a", "b"], 1, &[1.0, 2.0]);
        match analogy_query(&e, "yok", "b", "hic", 10) {
            Err(Error::MissingWords(w)) => assert_eq!(w, ["yok", "hic"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn mrr_fixture() -> WordEmbeddings {
        // Query q1 (a1:b1::c1:?) has answer at rank 1; distances chosen so
        // that q2's answer lands at rank 2.
        emb(
            &["a", "b", "c", "d", "e", "f"],
            3,
            &[
                1.0, 0.0, 0.0, //
                1.0, 1.0, 0.0, //
                0.0, 0.0, 1.0, //
                0.0, 1.0, 1.0, //
                0.0, 0.9, 1.0, //
                0.0, 0.0, -1.0,
            ],
        )
    }

    #[test]
    fn mrr_examples() {
        let e = mrr_fixture();
        let mut ds = AnalogyDataset::new();
        ds.push("x", q("a", "b", "c", "d"));
        let r = mrr_evaluate(&e, &ds, 10).unwrap();
        assert_eq!(r.overall.mrr, 1.0);
        assert_eq!(r.overall.miss_ratio, 0.0);

        let mut ds = AnalogyDataset::new();
        ds.push("x", q("a", "b", "c", "d"));
        ds.push("x", q("a", "b", "c", "e"));
        ds.push("x", q("a", "b", "c", "f"));
        let r = mrr_evaluate(&e, &ds, 2).unwrap();
        assert!((r.overall.mrr - 0.5).abs() < 1e-12);

        let mut ds = AnalogyDataset::new();
        for _ in 0..3 {
            ds.push("x", q("a", "b", "c", "d"));
        }
        ds.push("x", q("a", "yok", "c", "d"));
        let r = mrr_evaluate(&e, &ds, 10).unwrap();
        assert_eq!(r.overall.miss_ratio, 0.25);
        assert_eq!(r.overall.mrr, 1.0);
        assert_eq!((r.overall.answered, r.overall.missed), (3, 1));
    }

    #[test]
    fn dataset_parsing() {
        let text = ": capital\nankara türkiye paris fransa\n\n: plural\nkedi kediler ev evler\n: capital\nroma italya berlin almanya\n";
        let ds = AnalogyDataset::read(text.as_bytes()).unwrap();
        assert_eq!(ds.categories().len(), 2);
        assert_eq!(ds.categories()[0].1.len(), 2);
        assert_eq!(ds.categories()[1].0, "plural");
        assert_eq!(ds.len(), 3);

        let err = AnalogyDataset::read(": c\na b c\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn empty_dataset_is_rejected() {
        assert!(mrr_evaluate(&mrr_fixture(), &AnalogyDataset::new(), 10).is_err());
    }

    #[test]
    fn tsv_and_table_layout() {
        let e = mrr_fixture();
        let mut ds = AnalogyDataset::new();
        ds.push("isim", q("a", "b", "c", "d"));
        ds.push("fiil", q("a", "yok", "c", "d"));
        let r = mrr_evaluate(&e, &ds, 10).unwrap();
        let mut buf = Vec::new();
        r.write_tsv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "isim\t1\t0\t1\t0\nfiil\t0\t1\t0\t1\noverall\t1\t0.5\t1\t1\n"
        );
        let mut buf = Vec::new();
        r.write_table(&mut buf).unwrap();
        let table = String::from_utf8(buf).unwrap();
        assert!(table.contains("Miss Ratio"));
        assert!(table.lines().last().unwrap().starts_with("overall"));
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use crate::corpus::Vocabulary;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn mrr_monotonicity(scores in prop::collection::vec(0usize..12, 1..20), misses in 0usize..5) {
            let sum: f64 = scores.iter().map(|&r| if r == 0 || r > 10 { 0.0 } else { 1.0 / r as f64 }).sum();
            let base = CategoryScore::from_sums("c".into(), sum, scores.len(), misses);
            prop_assert!((0.0..=1.0).contains(&base.mrr));
            let plus_hit = CategoryScore::from_sums("c".into(), sum + 1.0, scores.len() + 1, misses);
            prop_assert!(plus_hit.mrr >= base.mrr);
            let plus_miss = CategoryScore::from_sums("c".into(), sum, scores.len(), misses + 1);
            prop_assert_eq!(plus_miss.mrr, base.mrr);
            prop_assert!(plus_miss.miss_ratio > base.miss_ratio);
        }

        #[test]
        fn analogy_never_returns_query_words(values in prop::collection::vec(-1.0f64..1.0, 24), k in 1usize..10) {
            let words: Vec<String> = (0..8).map(|i| format!("w{i}")).collect();
            let e = WordEmbeddings::from_f64(Vocabulary::from_words(words).unwrap(), 3, &values).unwrap();
            if let Ok(res) = analogy_query(&e, "w0", "w1", "w2", k) {
                prop_assert!(res.len() <= k);
                prop_assert!(res.iter().all(|n| n.id > 2));
            }
        }
    }
}
