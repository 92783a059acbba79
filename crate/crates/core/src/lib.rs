//! Item-based k-nearest-neighbor recommendation with interchangeable
//! similarity-matrix strategies, scoring modes and nDCG semantics.
//!
//! The pipeline is `ingest` → `split` → `knn` → `recommend` → `metrics`,
//! orchestrated end to end by `harness`. Two well-known ItemKNN behaviours
//! are available as [`recommend::Preset`]s:
//!
//! * `lenskit-original`: full cosine matrix, per-user top-k over the profile.
//! * `recbole`: matrix truncated to the k nearest neighbours per item, plain sum.
//! * `lenskit-adjusted`: truncated matrix with per-user top-k, which scores
//!   identically to `recbole`.

pub mod error;
pub mod harness;
pub mod ingest;
pub mod knn;
pub mod metrics;
pub mod recommend;
pub mod rng;
pub mod split;

pub use error::{Error, Result};
pub use ingest::{
    load_interactions, stats, to_implicit, ColumnMap, DatasetStats, FileFormat, ImplicitThreshold,
    Interaction, InteractionDataset, ThresholdMode,
};
pub use knn::{
    build_matrix, cosine_similarity, truncate_topk, SimilarityMatrix, Strategy, UserItemMatrix,
};
pub use metrics::{dcg, evaluate, ndcg_at_n, precision_at_n, recall_at_n, IdcgMode, MetricReport};
pub use recommend::{
    recommend_all, recommend_topn, score_user, Preset, RecommendationList, ScoringMode,
};
pub use split::{split_holdout, SplitConfig, SplitPair};
