pub mod classify;
pub mod dataset;
pub mod diff;
pub mod hashing;
pub mod ingest;
pub mod jsonl;
pub mod metrics;
pub mod model;
pub mod neighbors;
pub mod pipeline;
pub mod preprocess;
pub mod probe;
pub mod verbalize;
pub mod wikidata;

pub use model::*;
