//! Out-of-distribution dataset builder aligned to ImageNet label ids:
//! caption-to-synset matching over web metadata shards, similarity
//! thresholding, per-class ranking, download and review exclusions.

pub mod build;
pub mod candidates;
pub mod download;
pub mod embed;
pub mod shard;
pub mod synset;

pub use build::{build_candidates, write_build_outputs, BuildOptions, BuildReport, ShardSummary, Similarity};
pub use candidates::{
    filter_candidates, rank_and_cap, CandidateRecord, ClassManifest, ScoredRow, TopK, DEFAULT_CAP, DEFAULT_TAU,
};
pub use synset::{
    load_synsets, match_caption, normalize_lemma, synset_prompt, CaptionMatch, LemmaIndex, Synset, MULTI_SENTINEL,
};
