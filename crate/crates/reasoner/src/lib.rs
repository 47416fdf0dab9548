//! A semantic reasoner whose inference rules are graph transformations over
//! embedded predicates.
//!
//! Facts, goals, and rules are written as predicate text (`joe(a), win(a,b),
//! election(b)`); nodes and relations carry embedding vectors. Rules fire when
//! their precondition graph matches a sub-isomorphic region of the fact graph
//! with per-element cosine thresholds. Rules can also be *learned*: starting
//! from wildcard templates, the chain of rule applications is compiled into a
//! differentiable product of similarity and propagation matrices, and the rule
//! embeddings, matching thresholds, and rule weights are trained by
//! backpropagation. Learned rules are rendered back to readable predicate text
//! via nearest-word lookup.

pub mod autodiff;
pub mod chain;
pub mod dsl;
pub mod embedding;
pub mod graph;
pub mod matrices;
pub mod train;

pub use chain::{enumerate_paths, structural_match, ChainConfig, PathPlan};
pub use dsl::{parse_facts, parse_rule, parse_rules, serialize_graph, serialize_rule};
pub use embedding::{
    cosine, load_word_vectors, nearest_word, random_embedding, Embedding, Lexicon, VocabStore,
};
pub use graph::{apply_rule, goal_satisfied, match_subgraph, Binding, Rule, SemanticGraph};
pub use train::{train_all, train_multi, train_path, TrainConfig, TrainedPath};
