//! Analogy extraction from structured sense definitions, synset-aware
//! embedding evaluation, retrofitting, and annotation sessions.

pub mod annotation;
pub mod defparser;
pub mod evaluation;
pub mod extraction;
pub mod lexicon;
pub mod retrofit;

pub use defparser::{parse_definition, serialize_definition, ConceptId, DefEdge, DefGraph, DefNode};
pub use extraction::{compare_graphs, extract_analogies, group_relations, Analogy, ConceptAnalogy};
pub use lexicon::{FrequencyTable, Lexicon, Taxonomy};
