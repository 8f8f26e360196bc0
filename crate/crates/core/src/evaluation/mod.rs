//! Cold-start split, ranking and exposure metrics, multi-trial comparison
//! and 2-D projection.

mod evaluate;
mod metrics;
mod projection;
mod split;
mod trials;

pub use evaluate::{
    evaluate, evaluate_ranker, project_cold_items, serving_items, test_relevance, Ranker, TrialMetrics,
};
pub use metrics::{exposure_gini, hit_rate_at_k, ndcg_at_k, recall_at_k};
pub use projection::{pca_2d, project_2d, Pca2};
pub use split::{make_cold_split, ColdStartSplit};
pub use trials::{
    comparison_table, fit_trial, mode_config, run_trials, Comparison, EvalReport, MetricSummary, ModeReport,
    TrialConfig,
};
