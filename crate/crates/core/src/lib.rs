//! Literature knowledge engine: concept co-occurrence extraction from
//! titles and abstracts, a statistics-bearing relation store, node2vec
//! embeddings over the relation graph, and semantic-relatedness queries.

pub mod corpus;
pub mod extractor;
pub mod lexicon;
pub mod pipeline;
pub mod semantics;
pub mod embed;
pub mod eval;
pub mod store;
