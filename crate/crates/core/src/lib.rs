// SPDX-License-Identifier: Apache-2.0

//! Bus factor estimation for git repositories.
//!
//! The crate mines a local clone into [`ChangeRecord`]s and a [`BlameSnapshot`],
//! resolves author aliases into developer identities, and estimates the bus
//! factor two ways:
//!
//! * [`cst`] computes per-file developer knowledge from the change history
//!   and classifies developers against `1/N` and `1/(2N)` thresholds.
//! * [`rig`] removes random groups of developers from the blame snapshot
//!   until at least half of the files are abandoned.
//!
//! [`trend`] reruns the history-based estimate over calendar-year windows.

pub mod cst;
pub mod identity;
pub mod ingest;
pub mod metrics;
pub mod rig;
pub mod trend;

pub use cst::{
	aggregate_knowledge, classify, compare_error, compute_thresholds, cst_bus_factor, file_shares,
	knowledge_per_file, BusFactorResult, Classification, CstConfig, CstError, CstMetricKind,
	FileEvent, KnowledgeTable, RunValue, Scope, ThresholdPair, TimeBound, TimeRange, WeightScheme,
};
pub use identity::{
	author_counts, canonical, resolve_identities, DevId, DeveloperId, IdentityConfig,
	IdentityError, IdentityMap,
};
pub use ingest::{
	blame::extract_blame,
	cache::{load_cache, save_cache, CacheContents, CacheManifest, SCHEMA_VERSION},
	filter::{filter_external, ExcludeSet},
	history::extract_history,
	repo_fingerprint, BlameSnapshot, ChangeRecord, CommitMeta, IngestError, RawAuthor,
};
pub use metrics::{contribution, cosine_change, locc, tokenize, MetricKind, TokenBag};
pub use rig::{
	abandoned_file_fraction, rig_bus_factor, rig_repeat, BlameIndex, RigConfig, RigError,
	RigResult, RigSummary,
};
pub use trend::{yearly_trend, TrendError, TrendMode, TrendPoint, TrendSeries};
