//! Instance edge evaluation: thinning, bipartite pixel matching, per-image
//! precision/recall accumulation, and ODS/OIS over a threshold sweep.

mod eval;
mod matching;
mod thin;

pub use eval::{
    binarize, evaluate, evaluate_with_workers, fscore, image_pr, pair_instances, EvalConfig,
    EvalSummary, ImageBest, ImagePredictions, PRPoint, PredictedInstance,
};
pub use matching::{assign, match_instance, match_within, max_distance, MatchResult};
pub use thin::{count_components, has_full_2x2, thin};
