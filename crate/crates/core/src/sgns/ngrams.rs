//! Character n-grams over boundary-marked words.

const FNV_OFFSET: u32 = 0x811c_9dc5;
const FNV_PRIME: u32 = 0x0100_0193;

/// 32-bit FNV-1a over the UTF-8 bytes of `s`.
pub fn fnv1a(s: &str) -> u32 {
    s.bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ b as u32).wrapping_mul(FNV_PRIME))
}

/// All character n-grams of `<word>` with `min_n <= n <= max_n`, in order
/// of increasing length then position. The whole marked token is always
/// present, even when it falls outside the length range.
pub fn ngrams(word: &str, min_n: usize, max_n: usize) -> Vec<String> {
    let marked: Vec<char> = std::iter::once('<')
        .chain(word.chars())
        .chain(std::iter::once('>'))
        .collect();
    let len = marked.len();
    let mut out = Vec::new();
    for n in min_n.max(1)..=max_n.min(len) {
        for start in 0..=len - n {
            out.push(marked[start..start + n].iter().collect());
        }
    }
    if len < min_n || len > max_n {
        out.push(marked.iter().collect());
    }
    out
}

/// The hashed n-gram rows of a word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NgramSet {
    pub word: String,
    pub ngram_ids: Vec<u32>,
}

impl NgramSet {
    pub fn new(word: &str, min_n: usize, max_n: usize, bucket_count: u32) -> Self {
        NgramSet {
            word: word.to_owned(),
            ngram_ids: ngrams(word, min_n, max_n)
                .iter()
                .map(|g| fnv1a(g) % bucket_count)
                .collect(),
        }
    }
}
