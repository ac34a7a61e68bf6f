//! Schema-guided detection and extraction of financial holdings tables.
//!
//! The pipeline turns normalized page text into typed, schema-conformant
//! portfolios and iteratively grows the instrument schema from the rows it
//! could not classify:
//!
//! 1. [`ingest`] loads and normalizes page text and ground-truth labels.
//! 2. [`agents`] detects holdings pages, extracts candidate rows, and merges
//!    consecutive pages into per-fund portfolios.
//! 3. [`schema`] owns the versioned instrument schema and the validation
//!    engine that partitions extractions into typed holdings vs unmatched
//!    entries.
//! 4. [`refine`] batches unmatched holdings, collects schema suggestions,
//!    deduplicates and selects them, and drives the refinement loop until no
//!    new schema changes are proposed.
//! 5. [`metrics`] holds every evaluation kernel: string distances, detection
//!    metrics, total absolute difference, coverage, diversity, collision
//!    rate, utilization, and Lorenz points.
//!
//! All LLM traffic goes through the [`llm::Backend`] trait; the crate ships a
//! deterministic rule-based mock and a transcript-replay backend so the whole
//! pipeline is testable offline.

pub mod agents;
pub mod ingest;
pub mod llm;
pub mod metrics;
pub mod refine;
pub mod schema;

pub use agents::{DetectionResult, FundPortfolio};
pub use ingest::{CorpusLabel, PageRecord};
pub use llm::{Backend, BackendResponse, PromptStrategy, StructuredRequest};
pub use refine::{RefinementConfig, RefinementTrace, SchemaSuggestion};
pub use schema::{
    FieldKind, FieldSpec, FieldValue, Holding, InstrumentClass, PageRef, Portfolio,
    SchemaRegistry, UnmatchedHolding,
};
