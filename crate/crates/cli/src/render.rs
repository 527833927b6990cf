// SPDX-License-Identifier: Apache-2.0

//! Serialization of command results as JSON, CSV or plain text.
//!
//! Output is a pure function of the report and its manifest. JSON objects have
//! sorted keys; fractional values are rounded to six decimal places in every
//! format so the three renderings carry the same numbers.

use busfactor_core::RigSummary;
use chrono::{DateTime, SecondsFormat, Utc};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RenderError {
	#[error("unsupported format '{0}', expected json, csv or text")]
	UnsupportedFormat(String),
}

impl RenderError {
	pub fn name(&self) -> &'static str {
		match self {
			RenderError::UnsupportedFormat(_) => "UnsupportedFormat",
		}
	}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
	Json,
	Csv,
	#[default]
	Text,
}

impl FromStr for Format {
	type Err = RenderError;

	fn from_str(s: &str) -> Result<Self, Self::Err> {
		match s {
			"json" => Ok(Format::Json),
			"csv" => Ok(Format::Csv),
			"text" => Ok(Format::Text),
			other => Err(RenderError::UnsupportedFormat(other.to_owned())),
		}
	}
}

/// Provenance attached to every rendered result.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
	pub tool_version: String,
	pub command_line: String,
	pub repo_fingerprint: String,
	pub started_at: DateTime<Utc>,
	pub finished_at: DateTime<Utc>,
	/// Base seed of a RIG run.
	pub seed: Option<u64>,
}

impl RunManifest {
	fn entries(&self) -> Vec<(&'static str, String)> {
		vec![
			("tool_version", self.tool_version.clone()),
			("command_line", self.command_line.clone()),
			("repo_fingerprint", self.repo_fingerprint.clone()),
			("started_at", timestamp(&self.started_at)),
			("finished_at", timestamp(&self.finished_at)),
			("seed", self.seed.map(|s| s.to_string()).unwrap_or_default()),
		]
	}

	fn to_json(&self) -> Value {
		json!({
			"tool_version": self.tool_version,
			"command_line": self.command_line,
			"repo_fingerprint": self.repo_fingerprint,
			"started_at": timestamp(&self.started_at),
			"finished_at": timestamp(&self.finished_at),
			"seed": self.seed,
		})
	}
}

fn timestamp(t: &DateTime<Utc>) -> String {
	t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Rounds to the six decimal places used in every output format.
pub fn round6(x: f64) -> f64 {
	let r = (x * 1e6).round() / 1e6;
	// avoid printing "-0"
	if r == 0.0 {
		0.0
	} else {
		r
	}
}

/// Stable pseudonym for a developer, derived from the canonical email.
pub fn redacted(email: &str) -> String {
	let digest = Sha256::digest(email.as_bytes());
	let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
	format!("dev-{hex}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
	Primary,
	Secondary,
	Other,
}

impl Role {
	pub fn as_str(self) -> &'static str {
		match self {
			Role::Primary => "primary",
			Role::Secondary => "secondary",
			Role::Other => "other",
		}
	}
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeveloperRow {
	pub name: String,
	pub email: String,
	pub share: f64,
	pub role: Role,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CstReport {
	pub bus_factor: usize,
	pub developer_count: usize,
	pub file_count: usize,
	pub primary_threshold: f64,
	pub secondary_threshold: f64,
	pub cst_metric: String,
	pub data_metric: String,
	pub weighting: String,
	pub scope: String,
	pub time_range: Option<String>,
	pub exclude: Vec<String>,
	pub similarity_threshold: u8,
	/// Ordered by descending share, then email.
	pub developers: Vec<DeveloperRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigRun {
	pub seed: u64,
	pub bus_factor: Option<usize>,
	/// (name, email), ordered by email.
	pub bf_set: Vec<(String, String)>,
	pub samples_evaluated: u64,
	pub abandoned_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigReport {
	pub revision: String,
	pub scope: String,
	pub file_count: usize,
	pub population: usize,
	pub exhaustive: bool,
	pub samples_per_size: usize,
	pub max_group_size: usize,
	pub line_abandon_fraction: f64,
	pub file_abandon_fraction: f64,
	pub runs: Vec<RigRun>,
	pub summary: RigSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendRow {
	pub year: i32,
	pub bus_factor: usize,
	pub total_developers: usize,
	pub bf_percentage: f64,
	pub active: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendReport {
	pub scope: String,
	pub cumulative: bool,
	pub cst_metric: String,
	pub data_metric: String,
	pub points: Vec<TrendRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
	pub bus_factor: u64,
	pub reference: u64,
	pub error: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport {
	pub cache_path: String,
	pub include_merges: bool,
	pub records: usize,
	pub commits: usize,
	pub blame_revision: Option<String>,
	pub blame_files: usize,
	pub blame_lines: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Report {
	Cst(CstReport),
	Rig(RigReport),
	Trend(TrendReport),
	Compare(CompareReport),
	Ingest(IngestReport),
}

impl Report {
	fn command(&self) -> &'static str {
		match self {
			Report::Cst(_) => "cst",
			Report::Rig(_) => "rig",
			Report::Trend(_) => "trend",
			Report::Compare(_) => "compare",
			Report::Ingest(_) => "ingest",
		}
	}
}

pub fn render(report: &Report, manifest: &RunManifest, format: Format) -> Vec<u8> {
	match format {
		Format::Json => render_json(report, manifest),
		Format::Csv => render_csv(report, manifest),
		Format::Text => render_text(report, manifest).into_bytes(),
	}
}

fn render_json(report: &Report, manifest: &RunManifest) -> Vec<u8> {
	let mut value = match report {
		Report::Cst(r) => json!({
			"bus_factor": r.bus_factor,
			"developer_count": r.developer_count,
			"file_count": r.file_count,
			"thresholds": {
				"primary": round6(r.primary_threshold),
				"secondary": round6(r.secondary_threshold),
			},
			"config": {
				"cst_metric": r.cst_metric,
				"data_metric": r.data_metric,
				"weighting": r.weighting,
				"scope": r.scope,
				"time_range": r.time_range,
				"exclude": r.exclude,
				"similarity_threshold": r.similarity_threshold,
			},
			"developers": r.developers.iter().map(|d| json!({
				"name": d.name,
				"email": d.email,
				"share": round6(d.share),
				"role": d.role.as_str(),
			})).collect::<Vec<_>>(),
		}),
		Report::Rig(r) => json!({
			"bus_factor": r.runs.first().and_then(|run| run.bus_factor),
			"revision": r.revision,
			"scope": r.scope,
			"file_count": r.file_count,
			"population": r.population,
			"config": {
				"exhaustive": r.exhaustive,
				"samples_per_size": r.samples_per_size,
				"max_group_size": r.max_group_size,
				"line_abandon_fraction": round6(r.line_abandon_fraction),
				"file_abandon_fraction": round6(r.file_abandon_fraction),
			},
			"runs": r.runs.iter().map(|run| json!({
				"seed": run.seed,
				"bus_factor": run.bus_factor,
				"bf_set": run.bf_set.iter().map(|(name, email)| json!({"name": name, "email": email})).collect::<Vec<_>>(),
				"samples_evaluated": run.samples_evaluated,
				"abandoned_fraction": round6(run.abandoned_fraction),
			})).collect::<Vec<_>>(),
			"summary": {
				"runs": r.summary.runs,
				"min": r.summary.min,
				"max": r.summary.max,
				"mode": r.summary.mode,
				"failed_runs": r.summary.failed_runs,
			},
		}),
		Report::Trend(r) => json!({
			"scope": r.scope,
			"mode": if r.cumulative { "cumulative" } else { "per-year" },
			"cst_metric": r.cst_metric,
			"data_metric": r.data_metric,
			"points": r.points.iter().map(|p| json!({
				"year": p.year,
				"bus_factor": p.bus_factor,
				"total_developers": p.total_developers,
				"bf_percentage": round6(p.bf_percentage),
				"active": p.active,
			})).collect::<Vec<_>>(),
		}),
		Report::Compare(r) => json!({
			"bus_factor": r.bus_factor,
			"reference": r.reference,
			"error": r.error,
		}),
		Report::Ingest(r) => json!({
			"cache_path": r.cache_path,
			"include_merges": r.include_merges,
			"records": r.records,
			"commits": r.commits,
			"blame_revision": r.blame_revision,
			"blame_files": r.blame_files,
			"blame_lines": r.blame_lines,
		}),
	};
	let obj = value.as_object_mut().expect("reports are objects");
	obj.insert("command".into(), Value::from(report.command()));
	obj.insert("manifest".into(), manifest.to_json());
	let mut out = serde_json::to_vec_pretty(&value).expect("serializing a JSON value cannot fail");
	out.push(b'\n');
	out
}

fn opt<T: ToString>(v: Option<T>) -> String {
	v.map(|v| v.to_string()).unwrap_or_default()
}

fn render_csv(report: &Report, manifest: &RunManifest) -> Vec<u8> {
	let mut w = csv::Writer::from_writer(Vec::new());
	let mut trailer: Vec<(&str, String)> = Vec::new();
	let result: csv::Result<()> = (|| {
		match report {
			Report::Cst(r) => {
				w.write_record(["rank", "name", "email", "share", "role"])?;
				for (i, d) in r.developers.iter().enumerate() {
					w.write_record([
						(i + 1).to_string(),
						d.name.clone(),
						d.email.clone(),
						format!("{:.6}", round6(d.share)),
						d.role.as_str().to_owned(),
					])?;
				}
				trailer.extend([
					("bus_factor", r.bus_factor.to_string()),
					("developer_count", r.developer_count.to_string()),
					("file_count", r.file_count.to_string()),
					(
						"primary_threshold",
						format!("{:.6}", round6(r.primary_threshold)),
					),
					(
						"secondary_threshold",
						format!("{:.6}", round6(r.secondary_threshold)),
					),
					("cst_metric", r.cst_metric.clone()),
					("data_metric", r.data_metric.clone()),
					("scope", r.scope.clone()),
				]);
			}
			Report::Rig(r) => {
				w.write_record([
					"seed",
					"bus_factor",
					"samples_evaluated",
					"abandoned_fraction",
					"bf_set",
				])?;
				for run in &r.runs {
					let set: Vec<&str> = run.bf_set.iter().map(|(_, e)| e.as_str()).collect();
					w.write_record([
						run.seed.to_string(),
						opt(run.bus_factor),
						run.samples_evaluated.to_string(),
						format!("{:.6}", round6(run.abandoned_fraction)),
						set.join(";"),
					])?;
				}
				trailer.extend([
					("revision", r.revision.clone()),
					("file_count", r.file_count.to_string()),
					("population", r.population.to_string()),
					("min", opt(r.summary.min)),
					("max", opt(r.summary.max)),
					("mode", opt(r.summary.mode)),
					("failed_runs", r.summary.failed_runs.to_string()),
				]);
			}
			Report::Trend(r) => {
				w.write_record(["year", "bus_factor", "total_developers", "bf_percentage"])?;
				for p in &r.points {
					w.write_record([
						p.year.to_string(),
						p.bus_factor.to_string(),
						p.total_developers.to_string(),
						format!("{:.6}", round6(p.bf_percentage)),
					])?;
				}
				trailer.push(("scope", r.scope.clone()));
			}
			Report::Compare(r) => {
				w.write_record(["bus_factor", "reference", "error"])?;
				w.write_record([
					r.bus_factor.to_string(),
					r.reference.to_string(),
					r.error.to_string(),
				])?;
			}
			Report::Ingest(r) => {
				w.write_record(["records", "commits", "blame_files", "blame_lines"])?;
				w.write_record([
					r.records.to_string(),
					r.commits.to_string(),
					r.blame_files.to_string(),
					r.blame_lines.to_string(),
				])?;
				trailer.push(("cache_path", r.cache_path.clone()));
			}
		}
		Ok(())
	})();
	result.expect("writing CSV to memory cannot fail");
	let mut out = w.into_inner().expect("flushing CSV to memory cannot fail");
	// Summary values and the manifest follow the table as `#` comment lines.
	let mut tail = String::new();
	for (k, v) in trailer.into_iter().chain(manifest.entries()) {
		let _ = writeln!(tail, "# {k}={}", v.replace('\n', " "));
	}
	out.extend_from_slice(tail.as_bytes());
	out
}

fn render_text(report: &Report, manifest: &RunManifest) -> String {
	let mut s = String::new();
	match report {
		Report::Cst(r) => {
			let _ = writeln!(s, "Bus factor: {}", r.bus_factor);
			let _ = writeln!(
				s,
				"CST metric: {}  data metric: {}  weighting: {}",
				r.cst_metric, r.data_metric, r.weighting
			);
			let _ = writeln!(
				s,
				"Scope: {}  time range: {}",
				r.scope,
				r.time_range.as_deref().unwrap_or("all")
			);
			let _ = writeln!(
				s,
				"Developers: {}  files: {}  primary >= {:.6}  secondary >= {:.6}",
				r.developer_count,
				r.file_count,
				round6(r.primary_threshold),
				round6(r.secondary_threshold)
			);
			let _ = writeln!(s);
			let _ = writeln!(s, "{:>4}  {:<9}  {:>8}  developer", "rank", "role", "share");
			for (i, d) in r.developers.iter().enumerate() {
				let _ = writeln!(
					s,
					"{:>4}  {:<9}  {:>8.6}  {} <{}>",
					i + 1,
					d.role.as_str(),
					round6(d.share),
					d.name,
					d.email
				);
			}
		}
		Report::Rig(r) => {
			match r.runs.as_slice() {
				[run] => {
					let _ = writeln!(s, "Bus factor: {}", found(run.bus_factor));
				}
				_ => {
					let _ = writeln!(
						s,
						"Bus factor over {} runs: min {}  max {}  mode {}  failed {}",
						r.summary.runs,
						found(r.summary.min),
						found(r.summary.max),
						found(r.summary.mode),
						r.summary.failed_runs
					);
				}
			}
			let _ = writeln!(
				s,
				"Revision: {}  scope: {}  files: {}  developers in blame: {}",
				r.revision, r.scope, r.file_count, r.population
			);
			let _ = writeln!(
				s,
				"Search: {}  line abandon >= {:.6}  file abandon >= {:.6}",
				if r.exhaustive {
					"exhaustive".to_owned()
				} else {
					format!(
						"{} samples per size, max size {}",
						r.samples_per_size, r.max_group_size
					)
				},
				round6(r.line_abandon_fraction),
				round6(r.file_abandon_fraction)
			);
			for run in &r.runs {
				let _ = writeln!(s);
				let _ = writeln!(
					s,
					"seed {}: bus factor {}  abandoned files {:.6}  samples {}",
					run.seed,
					found(run.bus_factor),
					round6(run.abandoned_fraction),
					run.samples_evaluated
				);
				for (name, email) in &run.bf_set {
					let _ = writeln!(s, "  {name} <{email}>");
				}
			}
		}
		Report::Trend(r) => {
			let _ = writeln!(
				s,
				"Bus factor per {} ({} / {}), scope {}",
				if r.cumulative {
					"year, cumulative"
				} else {
					"year"
				},
				r.cst_metric,
				r.data_metric,
				r.scope
			);
			let _ = writeln!(
				s,
				"{:>6}  {:>10}  {:>10}  {:>12}",
				"year", "bus_factor", "developers", "bf_percent"
			);
			for p in &r.points {
				let _ = writeln!(
					s,
					"{:>6}  {:>10}  {:>10}  {:>12.6}",
					p.year,
					p.bus_factor,
					p.total_developers,
					round6(p.bf_percentage)
				);
			}
		}
		Report::Compare(r) => {
			let _ = writeln!(s, "{}", r.error);
			return s;
		}
		Report::Ingest(r) => {
			let _ = writeln!(s, "Cached {} records from {} commits", r.records, r.commits);
			match &r.blame_revision {
				Some(rev) => {
					let _ = writeln!(
						s,
						"Blame at {rev}: {} files, {} lines",
						r.blame_files, r.blame_lines
					);
				}
				None => {
					let _ = writeln!(s, "No blame snapshot (no text files at HEAD)");
				}
			}
			let _ = writeln!(s, "Cache: {}", r.cache_path);
		}
	}
	let _ = writeln!(s);
	for (k, v) in manifest.entries() {
		if !v.is_empty() {
			let _ = writeln!(s, "{k}: {v}");
		}
	}
	s
}

fn found(v: Option<usize>) -> String {
	v.map_or_else(|| "not found".to_owned(), |v| v.to_string())
}
