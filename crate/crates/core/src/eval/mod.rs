//! Intrinsic evaluation: analogy MRR, similarity correlations and the
//! accuracy interval used for extrinsic runs.

mod analogy;
mod metrics;
mod similarity;

pub use analogy::{analogy_query, mrr_evaluate, AnalogyDataset, AnalogyQuery, AnalogyReport, CategoryScore, DEFAULT_TOP_K};
pub use metrics::{confidence_interval, correlation_p_value, cosine, pearson, spearman};
pub use similarity::{similarity_evaluate, SimilarityDataset, SimilarityPair, SimilarityReport};
