use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embio::WordEmbeddings;
use crate::error::{Error, Result};

const TOLERANCE: f64 = 1e-9;
const MAX_ITERATIONS: usize = 1000;

/// Words projected onto the top two principal components.
#[derive(Clone, Debug)]
pub struct ProjectionResult {
    /// `(word, x, y)` in input order.
    pub points: Vec<(String, f64, f64)>,
    /// Variance along each component (sample covariance eigenvalues).
    pub explained_variance: [f64; 2],
    pub components: [Vec<f64>; 2],
    /// Requested words that were not in the vocabulary.
    pub skipped: Vec<String>,
}

impl ProjectionResult {
    /// TSV with an `#explained_variance=v1,v2` header.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "#explained_variance={},{}",
            self.explained_variance[0], self.explained_variance[1]
        )?;
        for (word, x, y) in &self.points {
            writeln!(w, "{word}\t{x}\t{y}")?;
        }
        Ok(())
    }
}

/// Project the selected words to 2-D with PCA.
///
/// Rows are mean-centred; the top two components come from power
/// iteration with deflation on the implicit covariance `XᵀX / (n-1)`.
/// Each component is signed so that its first nonzero coordinate is
/// positive.
pub fn pca_project<S: AsRef<str>>(emb: &WordEmbeddings, words: &[S]) -> Result<ProjectionResult> {
    let mut selected: Vec<(String, u32)> = Vec::new();
    let mut skipped = Vec::new();
    for w in words {
        let w = w.as_ref();
        match emb.vocab().id(w) {
            Some(id) if !selected.iter().any(|(_, i)| *i == id) => selected.push((w.to_owned(), id)),
            Some(_) => {}
            None => skipped.push(w.to_owned()),
        }
    }
    if selected.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "PCA needs at least 3 distinct in-vocabulary words, got {}",
            selected.len()
        )));
    }

    let dim = emb.dim();
    let n = selected.len();
    let mut data: Vec<f64> = Vec::with_capacity(n * dim);
    for (_, id) in &selected {
        data.extend(emb.row(*id).iter().map(|&x| x as f64));
    }
    let mut mean = vec![0.0; dim];
    for row in data.chunks_exact(dim) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    for row in data.chunks_exact_mut(dim) {
        for (x, m) in row.iter_mut().zip(&mean) {
            *x -= m;
        }
    }

    let cov = Covariance { data: &data, dim, n };
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let first = power_iteration(&cov, &[], &mut rng);
    let second = power_iteration(&cov, std::slice::from_ref(&first.0), &mut rng);

    let components = [first.0, second.0];
    let points = selected
        .iter()
        .zip(data.chunks_exact(dim))
        .map(|((w, _), row)| (w.clone(), dot(row, &components[0]), dot(row, &components[1])))
        .collect();

    Ok(ProjectionResult {
        points,
        explained_variance: [first.1, second.1],
        components,
        skipped,
    })
}

struct Covariance<'a> {
    data: &'a [f64],
    dim: usize,
    n: usize,
}

impl Covariance<'_> {
    fn apply(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for row in self.data.chunks_exact(self.dim) {
            let s = dot(row, v);
            for (o, x) in out.iter_mut().zip(row) {
                *o += s * x;
            }
        }
        let scale = 1.0 / (self.n - 1) as f64;
        out.iter_mut().for_each(|o| *o *= scale);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let p = dot(v, b);
        for (x, y) in v.iter_mut().zip(b) {
            *x -= p * y;
        }
    }
}

fn fix_sign(v: &mut [f64]) {
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Dominant eigenpair of the covariance restricted to the complement of
/// `found`.
fn power_iteration(cov: &Covariance<'_>, found: &[Vec<f64>], rng: &mut ChaCha8Rng) -> (Vec<f64>, f64) {
    let mut v: Vec<f64> = (0..cov.dim).map(|_| rng.gen::<f64>() - 0.5).collect();
    orthogonalize(&mut v, found);
    normalize(&mut v);
    let mut next = vec![0.0; cov.dim];

    for _ in 0..MAX_ITERATIONS {
        cov.apply(&v, &mut next);
        orthogonalize(&mut next, found);
        if normalize(&mut next) <= f64::EPSILON {
            // Remaining spectrum is zero; any orthogonal unit vector works.
            break;
        }
        fix_sign(&mut next);
        let delta = v
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut v, &mut next);
        if delta < TOLERANCE {
            break;
        }
    }
    orthogonalize(&mut v, found);
    normalize(&mut v);
    fix_sign(&mut v);

    cov.apply(&v, &mut next);
    let variance = dot(&v, &next).max(0.0);
    (v, variance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;

    fn emb_from_rows(rows: &[Vec<f64>]) -> WordEmbeddings {
        let words: Vec<String> = (0..rows.len()).map(|i| format!("w{i}")).collect();
        let flat: Vec<f64> = rows.concat();
        WordEmbeddings::from_f64(Vocabulary::from_words(words).unwrap(), rows[0].len(), &flat).unwrap()
    }

    fn words(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("w{i}")).collect()
    }

    #[test]
    fn planar_points_preserve_distances() {
        // Points in the plane spanned by two orthonormal 4-d directions.
        let a = [0.5, 0.5, 0.5, 0.5];
        let b = [0.5, -0.5, 0.5, -0.5];
        let coords = [(1.0, 2.0), (-3.0, 0.5), (0.0, -1.0), (2.5, 2.5), (-1.0, -4.0)];
        let rows: Vec<Vec<f64>> = coords
            .iter()
            .map(|(x, y)| (0..4).map(|i| x * a[i] + y * b[i]).collect())
            .collect();
        let emb = emb_from_rows(&rows);
        let res = pca_project(&emb, &words(5)).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let orig: f64 = (0..4)
                    .map(|k| (emb.row(i)[k] as f64 - emb.row(j)[k] as f64).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let (_, xi, yi) = &res.points[i as usize];
                let (_, xj, yj) = &res.points[j as usize];
                let proj = ((xi - xj).powi(2) + (yi - yj).powi(2)).sqrt();
                assert!((orig - proj).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn collinear_points_have_rank_one() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, 2.0 * i as f64, -(i as f64)]).collect();
        let res = pca_project(&emb_from_rows(&rows), &words(6)).unwrap();
        assert!(res.explained_variance[0] > 1.0);
        assert!(res.explained_variance[1] < 1e-9);
        assert!(dot(&res.components[0], &res.components[1]).abs() < 1e-8);
    }

    #[test]
    fn sign_convention() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 0.0, 3.0], vec![-2.0, 1.0, 0.0], vec![0.5, -1.0, -2.0]];
        let res = pca_project(&emb_from_rows(&rows), &words(3)).unwrap();
        for c in &res.components {
            assert!(*c.iter().find(|x| x.abs() > 1e-12).unwrap() > 0.0);
        }
    }

    #[test]
    fn oov_words_are_reported() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let emb = emb_from_rows(&rows);
        let res = pca_project(&emb, &["w0", "yok", "w1", "w2", "w1"]).unwrap();
        assert_eq!(res.skipped, ["yok"]);
        assert_eq!(res.points.len(), 3);
        assert!(matches!(
            pca_project(&emb, &["w0", "w1", "yok"]),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn tsv_output() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let res = pca_project(&emb_from_rows(&rows), &words(3)).unwrap();
        let mut buf = Vec::new();
        res.write_tsv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("#explained_variance="));
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().nth(1).unwrap().starts_with("w0\t"));
    }
}
