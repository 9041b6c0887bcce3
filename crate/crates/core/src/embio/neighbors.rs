use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::embio::WordEmbeddings;
use crate::error::{Error, Result};

/// A word with its cosine similarity to a query.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighbor {
    pub id: u32,
    pub word: String,
    pub similarity: f64,
}

/// What to search around.
#[derive(Clone, Copy, Debug)]
pub enum Query<'a> {
    Word(&'a str),
    Vector(&'a [f64]),
}

// Heap entry ordered so that the *worst* candidate is the maximum.
#[derive(PartialEq)]
struct Candidate {
    score: f64,
    id: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then_with(|| self.id.cmp(&other.id))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Top-`k` words by cosine similarity to `target`, descending, ties broken
/// by ascending id. Ids in `exclude` and zero-norm rows are skipped.
pub fn rank_by_cosine(
    emb: &WordEmbeddings,
    target: &[f64],
    exclude: &[u32],
    k: usize,
) -> Result<Vec<Neighbor>> {
    if target.len() != emb.dim() {
        return Err(Error::DimensionMismatch {
            expected: emb.dim(),
            found: target.len(),
        });
    }
    let target_norm = target.iter().map(|x| x * x).sum::<f64>().sqrt();
    if target_norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    if k == 0 {
        return Ok(Vec::new());
    }

    let norms = emb.norms();
    let mut heap = BinaryHeap::with_capacity(k + 1);
    for (id, row) in emb.matrix().chunks_exact(emb.dim()).enumerate() {
        let id = id as u32;
        if norms[id as usize] == 0.0 || exclude.contains(&id) {
            continue;
        }
        let dot: f64 = row.iter().zip(target).map(|(&a, &b)| a as f64 * b).sum();
        let score = dot / (norms[id as usize] * target_norm);
        let cand = Candidate { score, id };
        if heap.len() < k {
            heap.push(cand);
        } else if cand < *heap.peek().unwrap() {
            heap.pop();
            heap.push(cand);
        }
    }

    Ok(heap
        .into_sorted_vec()
        .into_iter()
        .map(|c| Neighbor {
            id: c.id,
            word: emb.vocab().word(c.id).unwrap().to_owned(),
            similarity: c.score,
        })
        .collect())
}

/// Nearest neighbours of a word (excluding itself) or of a raw vector.
pub fn nearest_neighbors(emb: &WordEmbeddings, query: Query<'_>, k: usize) -> Result<Vec<Neighbor>> {
    match query {
        Query::Word(w) => {
            let id = emb
                .vocab()
                .id(w)
                .ok_or_else(|| Error::MissingWords(vec![w.to_owned()]))?;
            let target: Vec<f64> = emb.row(id).iter().map(|&x| x as f64).collect();
            rank_by_cosine(emb, &target, &[id], k)
        }
        Query::Vector(v) => rank_by_cosine(emb, v, &[], k),
    }
}
