// SPDX-License-Identifier: Apache-2.0

//! History-based bus factor.
//!
//! Each file's knowledge is split among the developers who changed it, using
//! one of four ownership rules. File knowledge is averaged into a directory
//! or project table, and developers are classified as primary (share at least
//! `1/N`) or secondary (share at least `1/(2N)`). The bus factor is the number
//! of developers in either class.

use crate::identity::{DevId, IdentityError, IdentityMap};
use crate::ingest::filter::ExcludeSet;
use crate::ingest::{normalize_path, ChangeRecord, IngestError};
use crate::metrics::{contribution, MetricKind};
use chrono::{DateTime, Datelike, NaiveDate, TimeZone, Utc};
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Slack allowed when comparing a share against a threshold, so that shares
/// equal to `1/N` up to rounding are classified as equal.
const CLASSIFY_EPSILON: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CstError {
	#[error("no contributions in scope")]
	EmptyScope,

	#[error("no developers in scope")]
	ZeroDevelopers,

	#[error("time range start {start} is after end {end}")]
	InvalidTimeRange { start: String, end: String },

	#[error("invalid time bound '{0}', expected YYYY or YYYY-MM")]
	InvalidTimeBound(String),

	#[error(transparent)]
	Ingest(#[from] IngestError),

	#[error(transparent)]
	Identity(#[from] IdentityError),
}

impl CstError {
	pub fn name(&self) -> &'static str {
		match self {
			CstError::EmptyScope => "EmptyScope",
			CstError::ZeroDevelopers => "ZeroDevelopers",
			CstError::InvalidTimeRange { .. } => "InvalidTimeRange",
			CstError::InvalidTimeBound(_) => "InvalidTimeBound",
			CstError::Ingest(e) => e.name(),
			CstError::Identity(e) => e.name(),
		}
	}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CstMetricKind {
	/// The last developer to change a file owns all of it.
	LastChange,
	/// Knowledge is proportional to summed contributions.
	MulChangesEqual,
	/// Consecutive changes by one developer are merged into one change.
	NonConsecutive,
	/// As `NonConsecutive`, with later changes weighted more heavily.
	WeightedNonConsecutive,
}

impl CstMetricKind {
	pub const ALL: [CstMetricKind; 4] = [
		CstMetricKind::LastChange,
		CstMetricKind::MulChangesEqual,
		CstMetricKind::NonConsecutive,
		CstMetricKind::WeightedNonConsecutive,
	];

	pub fn name(&self) -> &'static str {
		match self {
			CstMetricKind::LastChange => "last-change",
			CstMetricKind::MulChangesEqual => "mul-equal",
			CstMetricKind::NonConsecutive => "non-consecutive",
			CstMetricKind::WeightedNonConsecutive => "weighted-non-consecutive",
		}
	}
}

impl fmt::Display for CstMetricKind {
	fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
		f.write_str(self.name())
	}
}

impl FromStr for CstMetricKind {
	type Err = String;

	fn from_str(s: &str) -> Result<Self, Self::Err> {
		CstMetricKind::ALL
			.into_iter()
			.find(|k| k.name() == s)
			.ok_or_else(|| format!("unknown CST metric '{s}'"))
	}
}

/// Weight of the i-th (1-based, chronological) merged change for
/// [`CstMetricKind::WeightedNonConsecutive`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum WeightScheme {
	/// Weight `i`.
	#[default]
	Linear,
	/// Weight `base^i`, computed relative to the last change to avoid overflow.
	Exponential { base: f64 },
}

impl WeightScheme {
	fn weight(&self, index: usize, count: usize) -> f64 {
		match *self {
			WeightScheme::Linear => (index + 1) as f64,
			WeightScheme::Exponential { base } => base.powi(index as i32 - (count as i32 - 1)),
		}
	}
}

impl fmt::Display for WeightScheme {
	fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
		match self {
			WeightScheme::Linear => f.write_str("linear"),
			WeightScheme::Exponential { base } => write!(f, "exponential:{base}"),
		}
	}
}

/// Accepts `linear`, `exponential` (base 2) or `exponential:BASE` with `BASE > 0`.
impl FromStr for WeightScheme {
	type Err = String;

	fn from_str(s: &str) -> Result<Self, Self::Err> {
		match s.split_once(':') {
			None if s == "linear" => Ok(WeightScheme::Linear),
			None if s == "exponential" => Ok(WeightScheme::Exponential { base: 2.0 }),
			Some(("exponential", base)) => match base.parse::<f64>() {
				Ok(base) if base.is_finite() && base > 0.0 => {
					Ok(WeightScheme::Exponential { base })
				}
				_ => Err(format!("invalid exponential base '{base}'")),
			},
			_ => Err(format!(
				"unknown weighting '{s}', expected linear or exponential[:BASE]"
			)),
		}
	}
}

/// A calendar year or year-month, used as an inclusive range endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeBound {
	pub year: i32,
	pub month: Option<u32>,
}

impl TimeBound {
	pub fn year(year: i32) -> Self {
		Self { year, month: None }
	}

	pub fn month(year: i32, month: u32) -> Self {
		Self {
			year,
			month: Some(month),
		}
	}

	/// First instant covered by this bound.
	pub fn first_instant(&self) -> DateTime<Utc> {
		month_start(self.year, self.month.unwrap_or(1))
	}

	/// First instant after this bound.
	pub fn end_instant(&self) -> DateTime<Utc> {
		match self.month {
			Some(12) | None => month_start(self.year + 1, 1),
			Some(m) => month_start(self.year, m + 1),
		}
	}
}

fn month_start(year: i32, month: u32) -> DateTime<Utc> {
	let date = NaiveDate::from_ymd_opt(year, month, 1).expect("validated year and month");
	Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).expect("midnight"))
}

impl fmt::Display for TimeBound {
	fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
		match self.month {
			Some(m) => write!(f, "{:04}-{:02}", self.year, m),
			None => write!(f, "{:04}", self.year),
		}
	}
}

impl FromStr for TimeBound {
	type Err = CstError;

	fn from_str(s: &str) -> Result<Self, Self::Err> {
		let bad = || CstError::InvalidTimeBound(s.to_owned());
		let (year, month) = match s.split_once('-') {
			Some((y, m)) if m.len() == 2 => (y, Some(m.parse::<u32>().map_err(|_| bad())?)),
			Some(_) => return Err(bad()),
			None => (s, None),
		};
		if year.len() != 4 || !year.bytes().all(|b| b.is_ascii_digit()) {
			return Err(bad());
		}
		let year: i32 = year.parse().map_err(|_| bad())?;
		if matches!(month, Some(m) if !(1..=12).contains(&m)) {
			return Err(bad());
		}
		Ok(Self { year, month })
	}
}

/// Half-open interval of author timestamps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeRange {
	pub start: Option<DateTime<Utc>>,
	pub end: DateTime<Utc>,
	pub label: String,
}

impl TimeRange {
	/// Everything from the start of `start` through the end of `end`.
	pub fn between(start: TimeBound, end: TimeBound) -> Result<Self, CstError> {
		if start.first_instant() > end.first_instant() {
			return Err(CstError::InvalidTimeRange {
				start: start.to_string(),
				end: end.to_string(),
			});
		}
		Ok(Self {
			start: Some(start.first_instant()),
			end: end.end_instant(),
			label: format!("{start}..{end}"),
		})
	}

	pub fn calendar_year(year: i32) -> Self {
		Self::between(TimeBound::month(year, 1), TimeBound::month(year, 12)).expect("ordered")
	}

	/// Everything up to the end of `year`.
	pub fn through_year(year: i32) -> Self {
		Self {
			start: None,
			end: TimeBound::year(year).end_instant(),
			label: format!("..{year:04}"),
		}
	}

	pub fn contains(&self, ts: DateTime<Utc>) -> bool {
		self.start.is_none_or(|s| ts >= s) && ts < self.end
	}
}

/// Whole project, or every file under a directory prefix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub enum Scope {
	#[default]
	Project,
	Directory(String),
}

impl Scope {
	pub fn directory(prefix: &str) -> Self {
		let mut dir = normalize_path(prefix);
		while dir.ends_with('/') {
			dir.pop();
		}
		if dir.is_empty() || dir == "." {
			Scope::Project
		} else {
			Scope::Directory(dir)
		}
	}

	pub fn matches(&self, path: &str) -> bool {
		match self {
			Scope::Project => true,
			Scope::Directory(dir) => path
				.strip_prefix(dir.as_str())
				.is_some_and(|rest| rest.is_empty() || rest.starts_with('/')),
		}
	}
}

impl fmt::Display for Scope {
	fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
		match self {
			Scope::Project => f.write_str("."),
			Scope::Directory(d) => write!(f, "{d}/"),
		}
	}
}

#[derive(Debug, Clone, PartialEq)]
pub struct CstConfig {
	pub cst_metric: CstMetricKind,
	pub data_metric: MetricKind,
	pub weighting: WeightScheme,
	pub scope: Scope,
	pub time_range: Option<TimeRange>,
	pub exclude_globs: Vec<String>,
}

impl CstConfig {
	pub fn new(cst_metric: CstMetricKind, data_metric: MetricKind) -> Self {
		Self {
			cst_metric,
			data_metric,
			weighting: WeightScheme::default(),
			scope: Scope::Project,
			time_range: None,
			exclude_globs: Vec::new(),
		}
	}
}

/// Knowledge shares of every developer active in one artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeTable {
	pub scope: String,
	pub shares: BTreeMap<DevId, f64>,
	/// Files with non-zero total contribution.
	pub file_count: usize,
	/// Developers with non-zero contribution.
	pub developer_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPair {
	pub primary: f64,
	pub secondary: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusFactorResult {
	pub bus_factor: usize,
	/// Sorted by descending knowledge.
	pub primary_devs: Vec<(DevId, f64)>,
	pub secondary_devs: Vec<(DevId, f64)>,
	pub config: CstConfig,
	pub thresholds: ThresholdPair,
	pub developer_count: usize,
	pub knowledge: KnowledgeTable,
}

/// One change to a file in chronological order: who made it and its
/// contribution under the data metric.
pub type FileEvent = (DevId, f64);

/// How a run of consecutive changes by one developer is valued once merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunValue {
	/// The run counts as the sum of its changes.
	Sum,
	/// The run counts as a single change.
	Single,
}

impl RunValue {
	pub fn for_metric(metric: MetricKind) -> Self {
		match metric {
			MetricKind::Commits => RunValue::Single,
			_ => RunValue::Sum,
		}
	}
}

/// Developer shares of one file from its chronological change events.
///
/// Events with zero contribution are ignored. Returns `None` when nothing in
/// the file has positive contribution. Every developer with a positive
/// contribution gets an entry, even when its share is zero.
pub fn file_shares(
	events: &[FileEvent],
	cst_metric: CstMetricKind,
	run_value: RunValue,
	weighting: WeightScheme,
) -> Option<BTreeMap<DevId, f64>> {
	let events: Vec<FileEvent> = events.iter().copied().filter(|&(_, c)| c > 0.0).collect();
	let (&(last_dev, _), _) = events.split_last()?;
	let mut shares: BTreeMap<DevId, f64> = events.iter().map(|&(d, _)| (d, 0.0)).collect();

	let weighted: Vec<FileEvent> = match cst_metric {
		CstMetricKind::LastChange => {
			shares.insert(last_dev, 1.0);
			return Some(shares);
		}
		CstMetricKind::MulChangesEqual => events,
		CstMetricKind::NonConsecutive => merge_runs(&events, run_value),
		CstMetricKind::WeightedNonConsecutive => {
			let merged = merge_runs(&events, run_value);
			let n = merged.len();
			merged
				.into_iter()
				.enumerate()
				.map(|(i, (d, c))| (d, c * weighting.weight(i, n)))
				.collect()
		}
	};

	let total: f64 = weighted.iter().map(|&(_, c)| c).sum();
	for (dev, c) in weighted {
		*shares.get_mut(&dev).expect("seeded above") += c;
	}
	for share in shares.values_mut() {
		*share /= total;
	}
	Some(shares)
}

fn merge_runs(events: &[FileEvent], run_value: RunValue) -> Vec<FileEvent> {
	let mut runs: Vec<(DevId, f64, usize)> = Vec::new();
	for &(dev, c) in events {
		match runs.last_mut() {
			Some((d, sum, n)) if *d == dev => {
				*sum += c;
				*n += 1;
			}
			_ => runs.push((dev, c, 1)),
		}
	}
	runs.into_iter()
		.map(|(d, sum, n)| match run_value {
			RunValue::Sum => (d, sum),
			RunValue::Single => (d, sum / n as f64),
		})
		.collect()
}

/// Per-file developer shares. Files with no positive contribution are omitted.
pub fn knowledge_per_file(
	records: &[ChangeRecord],
	identity: &IdentityMap,
	cst_metric: CstMetricKind,
	data_metric: MetricKind,
	weighting: WeightScheme,
) -> Result<BTreeMap<String, BTreeMap<DevId, f64>>, CstError> {
	if records.is_empty() {
		return Err(CstError::EmptyScope);
	}
	let mut by_file: BTreeMap<&str, Vec<&ChangeRecord>> = BTreeMap::new();
	for r in records {
		by_file.entry(r.path.as_str()).or_default().push(r);
	}
	let run_value = RunValue::for_metric(data_metric);

	let files: Vec<(&str, Vec<&ChangeRecord>)> = by_file.into_iter().collect();
	let shares =
		files
			.into_par_iter()
			.map(|(path, mut recs)| {
				recs.sort_by(|a, b| a.chronological_key().cmp(&b.chronological_key()));
				let events = recs
					.iter()
					.map(|r| Ok((identity.id_of(r.author())?, contribution(r, data_metric))))
					.collect::<Result<Vec<FileEvent>, IdentityError>>()?;
				Ok(file_shares(&events, cst_metric, run_value, weighting)
					.map(|s| (path.to_owned(), s)))
			})
			.collect::<Result<Vec<_>, CstError>>()?;
	Ok(shares.into_iter().flatten().collect())
}

/// Averages file shares over the files in `per_file`.
pub fn aggregate_knowledge(
	per_file: &BTreeMap<String, BTreeMap<DevId, f64>>,
	scope: &Scope,
) -> Result<KnowledgeTable, CstError> {
	if per_file.is_empty() {
		return Err(CstError::EmptyScope);
	}
	let mut sums: BTreeMap<DevId, f64> = BTreeMap::new();
	for shares in per_file.values() {
		for (&dev, &share) in shares {
			*sums.entry(dev).or_insert(0.0) += share;
		}
	}
	let files = per_file.len() as f64;
	let developer_count = sums.len();
	Ok(KnowledgeTable {
		scope: scope.to_string(),
		shares: sums.into_iter().map(|(d, s)| (d, s / files)).collect(),
		file_count: per_file.len(),
		developer_count,
	})
}

pub fn compute_thresholds(developer_count: usize) -> Result<ThresholdPair, CstError> {
	if developer_count == 0 {
		return Err(CstError::ZeroDevelopers);
	}
	let primary = 1.0 / developer_count as f64;
	Ok(ThresholdPair {
		primary,
		secondary: primary / 2.0,
	})
}

/// Applies the time, scope and exclusion filters of `config`.
pub fn select_records(
	records: &[ChangeRecord],
	config: &CstConfig,
) -> Result<Vec<ChangeRecord>, CstError> {
	let excludes = ExcludeSet::new(&config.exclude_globs)?;
	Ok(records
		.iter()
		.filter(|r| {
			config
				.time_range
				.as_ref()
				.is_none_or(|t| t.contains(r.timestamp()))
		})
		.filter(|r| config.scope.matches(&r.path))
		.filter(|r| !excludes.is_excluded(&r.path))
		.cloned()
		.collect())
}

/// Thresholds with the primary and secondary developers, each as
/// `(developer, share)` pairs.
pub type Classification = (ThresholdPair, Vec<(DevId, f64)>, Vec<(DevId, f64)>);

/// Splits the developers of `knowledge` into primary (share at least `1/N`)
/// and secondary (share at least `1/(2N)`) developers, each ordered by
/// descending share.
pub fn classify(knowledge: &KnowledgeTable) -> Result<Classification, CstError> {
	let thresholds = compute_thresholds(knowledge.developer_count)?;
	let mut ranked: Vec<(DevId, f64)> = knowledge.shares.iter().map(|(&d, &s)| (d, s)).collect();
	ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

	let mut primary = Vec::new();
	let mut secondary = Vec::new();
	for (dev, share) in ranked {
		if share + CLASSIFY_EPSILON >= thresholds.primary {
			primary.push((dev, share));
		} else if share + CLASSIFY_EPSILON >= thresholds.secondary {
			secondary.push((dev, share));
		}
	}
	Ok((thresholds, primary, secondary))
}

pub fn cst_bus_factor(
	records: &[ChangeRecord],
	identity: &IdentityMap,
	config: &CstConfig,
) -> Result<BusFactorResult, CstError> {
	let selected = select_records(records, config)?;
	let per_file = knowledge_per_file(
		&selected,
		identity,
		config.cst_metric,
		config.data_metric,
		config.weighting,
	)?;
	let knowledge = aggregate_knowledge(&per_file, &config.scope)?;
	let (thresholds, mut primary_devs, mut secondary_devs) = classify(&knowledge)?;

	let by_email = |a: &(DevId, f64), b: &(DevId, f64)| {
		b.1.total_cmp(&a.1)
			.then_with(|| {
				identity
					.developer(a.0)
					.canonical_email
					.cmp(&identity.developer(b.0).canonical_email)
			})
			.then_with(|| a.0.cmp(&b.0))
	};
	primary_devs.sort_by(by_email);
	secondary_devs.sort_by(by_email);

	Ok(BusFactorResult {
		bus_factor: primary_devs.len() + secondary_devs.len(),
		primary_devs,
		secondary_devs,
		config: config.clone(),
		thresholds,
		developer_count: knowledge.developer_count,
		knowledge,
	})
}

/// Absolute difference between an estimated and a reference bus factor.
pub fn compare_error(bus_factor: u64, reference: u64) -> u64 {
	bus_factor.abs_diff(reference)
}

/// Distinct calendar years with at least one record.
pub fn active_years(records: &[ChangeRecord]) -> BTreeSet<i32> {
	records.iter().map(|r| r.timestamp().year()).collect()
}
