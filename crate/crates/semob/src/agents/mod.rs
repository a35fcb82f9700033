//! Multi-agent text distillation: extractor, tweet analyzer, mobility
//! analyzer, and the evaluator feedback loop over a pluggable
//! completion backend.

pub mod backend;
pub mod logic;
pub mod pipeline;
pub mod prompts;
pub mod query;
pub mod stats;

pub use backend::{
    CompletionBackend, CompletionRequest, HttpBackend, HttpBackendConfig, MockBackend,
    PromptKind, RecordingBackend, API_KEY_ENV,
};
pub use logic::{LogicStore, DEFAULT_GLOBAL_LOGIC};
pub use pipeline::{
    build_queries, recent_proximate_events, run_event_info_extractor, run_event_pipeline,
    run_evaluator, run_mobility_analyzer, run_tweet_analyzer, BasicEventInfo, MobilityContext,
    PipelineOutput, SocialAnalysis,
};
pub use query::{match_tweets, parse_query, render, QueryAst};
pub use stats::{compute_error_patterns, ErrorPatternConfig, ErrorStats, WindowMeta};
