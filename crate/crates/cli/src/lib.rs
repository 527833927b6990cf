// SPDX-License-Identifier: Apache-2.0

//! The `busfactor` command-line tool.
//!
//! [`run_cli`] parses arguments, runs one subcommand and writes its report.
//! Exit codes: 0 on success, 1 when the analysis fails (for example an empty
//! scope), 2 when the invocation itself is wrong. Every failure prints one
//! line `ERROR <Name>: <detail>` on stderr.

pub mod config;
pub mod render;

use busfactor_core::ingest::ensure_repository;
use busfactor_core::{
	author_counts, compare_error, cst_bus_factor, extract_blame, extract_history, load_cache,
	repo_fingerprint, resolve_identities, rig_repeat, save_cache, yearly_trend, BlameIndex,
	BlameSnapshot, CacheManifest, ChangeRecord, CstConfig, CstError, CstMetricKind, ExcludeSet,
	IdentityConfig, IdentityError, IdentityMap, IngestError, MetricKind, RigConfig, RigError,
	Scope, TimeBound, TimeRange, TrendError, TrendMode, WeightScheme,
};
use chrono::Utc;
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use render::{
	redacted, render, CompareReport, CstReport, DeveloperRow, Format, IngestReport, Report,
	RigReport, RigRun, Role, RunManifest, TrendReport, TrendRow,
};
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const CACHE_DIR_ENV: &str = "BUSFACTOR_CACHE_DIR";

#[derive(Debug, Parser)]
#[command(
	name = "busfactor",
	version,
	about = "Estimate the bus factor of a git repository",
	args_override_self = true
)]
struct Cli {
	/// TOML file with default flag values.
	#[arg(long, global = true, value_name = "PATH")]
	config: Option<PathBuf>,

	#[command(subcommand)]
	command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
	/// Extract history and blame into a reusable cache.
	Ingest(IngestArgs),
	/// Knowledge-based bus factor from the change history.
	Cst(CstArgs),
	/// Bus factor by removing random developer groups from the blame snapshot.
	Rig(RigArgs),
	/// History-based bus factor for each calendar year.
	Trend(TrendArgs),
	/// Absolute difference between an estimate and a reference value.
	Compare(CompareArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
	/// Local git clone to analyze.
	#[arg(long, value_name = "PATH")]
	repo: PathBuf,
	/// Cache directory [default: $BUSFACTOR_CACHE_DIR/<repo>-<hash>]
	#[arg(long, value_name = "PATH")]
	cache: Option<PathBuf>,
	/// Attribute merge commits' changes (against their first parent).
	#[arg(long)]
	include_merges: bool,
	#[command(flatten)]
	output: OutputArgs,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct SourceArgs {
	/// Local git clone to analyze.
	#[arg(long, value_name = "PATH")]
	repo: Option<PathBuf>,
	/// Cache directory written by `busfactor ingest`.
	#[arg(long, value_name = "PATH")]
	cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OutputArgs {
	#[arg(long, default_value = "text", value_name = "json|csv|text")]
	format: Format,
	/// Write the report here instead of stdout.
	#[arg(long, value_name = "PATH")]
	out: Option<PathBuf>,
	/// Replace developer names and emails with stable pseudonyms.
	#[arg(long)]
	redact: bool,
}

#[derive(Debug, Args)]
struct IdentityArgs {
	/// File of `raw_email -> canonical_email` lines.
	#[arg(long, value_name = "PATH")]
	alias_file: Option<PathBuf>,
	/// Name similarity (0-100) at which two authors are merged.
	#[arg(long, default_value_t = 90, value_parser = clap::value_parser!(u8).range(0..=100))]
	similarity: u8,
}

#[derive(Debug, Args)]
struct KnowledgeArgs {
	/// Contribution of one change to one file.
	#[arg(long, value_name = "commits|locc|cos")]
	metric: MetricKind,
	/// Multiply the cosine change size by the lines changed.
	#[arg(long)]
	cos_scale_locc: bool,
	/// How contributions turn into knowledge.
	#[arg(
		long,
		value_name = "last-change|mul-equal|non-consecutive|weighted-non-consecutive"
	)]
	cst_metric: CstMetricKind,
	/// Weights for weighted-non-consecutive: linear or exponential[:BASE].
	#[arg(long, default_value = "linear")]
	weighting: WeightScheme,
	/// Restrict the analysis to files under this directory.
	#[arg(long, value_name = "PREFIX")]
	dir: Option<String>,
	/// Glob of external files to ignore; repeatable.
	#[arg(long, value_name = "GLOB")]
	exclude: Vec<String>,
	#[command(flatten)]
	identity: IdentityArgs,
}

#[derive(Debug, Args)]
struct CstArgs {
	#[command(flatten)]
	source: SourceArgs,
	#[command(flatten)]
	knowledge: KnowledgeArgs,
	/// First month or year of the window (YYYY or YYYY-MM).
	#[arg(long, requires = "to")]
	from: Option<TimeBound>,
	/// Last month or year of the window, inclusive.
	#[arg(long, requires = "from")]
	to: Option<TimeBound>,
	#[command(flatten)]
	output: OutputArgs,
}

#[derive(Debug, Args)]
struct TrendArgs {
	#[command(flatten)]
	source: SourceArgs,
	#[command(flatten)]
	knowledge: KnowledgeArgs,
	#[arg(long, value_name = "YYYY")]
	from_year: i32,
	#[arg(long, value_name = "YYYY")]
	to_year: i32,
	/// Each point covers all history up to the end of its year.
	#[arg(long)]
	cumulative: bool,
	#[command(flatten)]
	output: OutputArgs,
}

#[derive(Debug, Args)]
struct RigArgs {
	#[command(flatten)]
	source: SourceArgs,
	/// Revision to blame (with --cache, must match the cached snapshot).
	#[arg(long, default_value = "HEAD")]
	rev: String,
	/// Random groups drawn per group size.
	#[arg(long, default_value_t = 1000)]
	samples: usize,
	/// Largest group size tried.
	#[arg(long, default_value_t = 200)]
	max_g: usize,
	/// Seed for the group sampler.
	#[arg(long, default_value_t = 0)]
	seed: u64,
	/// Independent runs with seeds seed, seed+1, ...
	#[arg(long, default_value_t = 1)]
	runs: usize,
	/// Try every group instead of sampling.
	#[arg(long)]
	exhaustive: bool,
	/// Share of a file's lines that must be lost for the file to be abandoned.
	#[arg(long, default_value_t = 0.9)]
	line_abandon: f64,
	/// Share of files that must be abandoned.
	#[arg(long, default_value_t = 0.5)]
	file_abandon: f64,
	/// Restrict the snapshot to files under this directory.
	#[arg(long, value_name = "PREFIX")]
	dir: Option<String>,
	/// Glob of external files to ignore; repeatable.
	#[arg(long, value_name = "GLOB")]
	exclude: Vec<String>,
	#[command(flatten)]
	identity: IdentityArgs,
	#[command(flatten)]
	output: OutputArgs,
}

#[derive(Debug, Args)]
struct CompareArgs {
	#[arg(long)]
	bf: u64,
	#[arg(long)]
	reference: u64,
	#[command(flatten)]
	output: OutputArgs,
}

/// A failed invocation.
#[derive(Debug)]
pub enum CliError {
	/// Bad arguments; exit code 2.
	Usage { detail: String, help: String },
	/// The analysis could not be carried out; exit code 1.
	Domain { name: &'static str, detail: String },
}

impl CliError {
	fn domain(name: &'static str, detail: impl Into<String>) -> Self {
		CliError::Domain {
			name,
			detail: detail.into(),
		}
	}

	pub fn exit_code(&self) -> i32 {
		match self {
			CliError::Usage { .. } => 2,
			CliError::Domain { .. } => 1,
		}
	}
}

macro_rules! domain_from {
	($($ty:ty),*) => {$(
		impl From<$ty> for CliError {
			fn from(e: $ty) -> Self {
				CliError::domain(e.name(), e.to_string())
			}
		}
	)*};
}

domain_from!(IngestError, CstError, IdentityError, RigError, TrendError);

impl From<std::io::Error> for CliError {
	fn from(e: std::io::Error) -> Self {
		CliError::domain("IoFailure", e.to_string())
	}
}

/// Runs the tool with `argv` (including the program name) on the process's
/// stdout and stderr and returns the exit code.
pub fn run_cli<I, S>(argv: I) -> i32
where
	I: IntoIterator<Item = S>,
	S: Into<String>,
{
	let argv: Vec<String> = argv.into_iter().map(Into::into).collect();
	let stdout = std::io::stdout();
	let stderr = std::io::stderr();
	run_with_io(&argv, &mut stdout.lock(), &mut stderr.lock())
}

/// Like [`run_cli`] with explicit output streams.
pub fn run_with_io(argv: &[String], stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
	match run(argv, stdout) {
		Ok(()) => 0,
		Err(e) => {
			let _ = match &e {
				CliError::Usage { detail, help } => {
					writeln!(stderr, "ERROR Usage: {detail}").and_then(|_| write!(stderr, "{help}"))
				}
				CliError::Domain { name, detail } => {
					writeln!(stderr, "ERROR {name}: {}", detail.replace('\n', " "))
				}
			};
			e.exit_code()
		}
	}
}

fn flag_table() -> config::FlagTable {
	Cli::command()
		.get_subcommands()
		.map(|sub| {
			let longs = sub
				.get_arguments()
				.filter_map(|a| a.get_long())
				.map(str::to_owned)
				.collect();
			(sub.get_name().to_owned(), longs)
		})
		.collect()
}

fn run(argv: &[String], stdout: &mut dyn Write) -> Result<(), CliError> {
	let started_at = Utc::now();
	let expanded = match config::config_path(argv) {
		Some(path) => {
			config::expand(argv, Path::new(&path), &flag_table()).map_err(|e| CliError::Usage {
				detail: e.to_string(),
				help: String::new(),
			})?
		}
		None => argv.to_vec(),
	};

	let cli = match Cli::try_parse_from(&expanded) {
		Ok(cli) => cli,
		Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
			write!(stdout, "{}", e.render())?;
			return Ok(());
		}
		Err(e) => return Err(usage_error(&e)),
	};

	let mut manifest = RunManifest {
		tool_version: env!("CARGO_PKG_VERSION").to_owned(),
		command_line: command_line(argv),
		repo_fingerprint: String::new(),
		started_at,
		finished_at: started_at,
		seed: None,
	};

	let (report, output) = match &cli.command {
		Command::Ingest(args) => (ingest(args, &mut manifest)?, &args.output),
		Command::Cst(args) => (cst(args, &mut manifest)?, &args.output),
		Command::Rig(args) => (rig(args, &mut manifest)?, &args.output),
		Command::Trend(args) => (trend(args, &mut manifest)?, &args.output),
		Command::Compare(args) => (
			Report::Compare(CompareReport {
				bus_factor: args.bf,
				reference: args.reference,
				error: compare_error(args.bf, args.reference),
			}),
			&args.output,
		),
	};
	manifest.finished_at = Utc::now();

	let bytes = render(&report, &manifest, output.format);
	match &output.out {
		Some(path) => std::fs::write(path, bytes)?,
		None => stdout.write_all(&bytes)?,
	}
	Ok(())
}

fn usage_error(e: &clap::Error) -> CliError {
	let rendered = e.render().to_string();
	if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
		return CliError::Usage {
			detail: "missing subcommand or required arguments".to_owned(),
			help: rendered,
		};
	}
	let mut lines = rendered.lines();
	let first = lines.next().unwrap_or_default();
	let detail = first.strip_prefix("error: ").unwrap_or(first).to_owned();
	let help: String = lines.map(|l| format!("{l}\n")).collect();
	CliError::Usage { detail, help }
}

fn command_line(argv: &[String]) -> String {
	argv.iter()
		.map(|a| {
			if a.is_empty() || a.chars().any(|c| c.is_whitespace() || c == '\'') {
				format!("'{}'", a.replace('\'', "'\\''"))
			} else {
				a.clone()
			}
		})
		.collect::<Vec<_>>()
		.join(" ")
}

/// Cache location used by `ingest` when `--cache` is not given.
pub fn default_cache_path(repo: &Path) -> Option<PathBuf> {
	let base = std::env::var_os(CACHE_DIR_ENV).filter(|v| !v.is_empty())?;
	let abs = repo.canonicalize().unwrap_or_else(|_| repo.to_path_buf());
	let digest = Sha256::digest(abs.to_string_lossy().as_bytes());
	let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
	let name = abs
		.file_name()
		.map(|n| n.to_string_lossy().into_owned())
		.unwrap_or_else(|| "repo".to_owned());
	Some(PathBuf::from(base).join(format!("{name}-{hex}")))
}

fn ingest(args: &IngestArgs, manifest: &mut RunManifest) -> Result<Report, CliError> {
	let cache_path = match &args.cache {
		Some(p) => p.clone(),
		None => default_cache_path(&args.repo).ok_or_else(|| CliError::Usage {
			detail: format!("no cache location: pass --cache or set {CACHE_DIR_ENV}"),
			help: String::new(),
		})?,
	};
	ensure_repository(&args.repo)?;
	let fingerprint = repo_fingerprint(&args.repo)?;
	let records = extract_history(&args.repo, args.include_merges)?;
	let blame = match extract_blame(&args.repo, "HEAD", None) {
		Ok(b) => Some(b),
		Err(IngestError::NoTextFiles(_)) => None,
		Err(e) => return Err(e.into()),
	};
	save_cache(
		&records,
		blame.as_ref(),
		&CacheManifest::new(fingerprint.clone(), records.len()),
		&cache_path,
	)?;
	manifest.repo_fingerprint = fingerprint;

	let commits: BTreeSet<&str> = records.iter().map(|r| r.commit.hash.as_str()).collect();
	Ok(Report::Ingest(IngestReport {
		cache_path: cache_path.display().to_string(),
		include_merges: args.include_merges,
		records: records.len(),
		commits: commits.len(),
		blame_revision: blame.as_ref().map(|b| b.revision.clone()),
		blame_files: blame.as_ref().map_or(0, |b| b.files.len()),
		blame_lines: blame.as_ref().map_or(0, BlameSnapshot::line_count),
	}))
}

fn load_records(
	source: &SourceArgs,
	manifest: &mut RunManifest,
) -> Result<Vec<ChangeRecord>, CliError> {
	match (&source.repo, &source.cache) {
		(Some(repo), _) => {
			ensure_repository(repo)?;
			manifest.repo_fingerprint = repo_fingerprint(repo)?;
			Ok(extract_history(repo, false)?)
		}
		(None, Some(cache)) => {
			let contents = load_cache(cache)?;
			manifest.repo_fingerprint = contents.manifest.repo_fingerprint;
			Ok(contents.records)
		}
		(None, None) => unreachable!("clap requires --repo or --cache"),
	}
}

fn identity_config(args: &IdentityArgs) -> Result<IdentityConfig, CliError> {
	let mut config = IdentityConfig::with_threshold(args.similarity);
	if let Some(path) = &args.alias_file {
		config.aliases = IdentityConfig::parse_aliases(&std::fs::read_to_string(path)?)?;
	}
	Ok(config)
}

fn knowledge_config(args: &KnowledgeArgs) -> CstConfig {
	let data_metric = match args.metric {
		MetricKind::ChangeSizeCos { .. } => MetricKind::ChangeSizeCos {
			scale_by_locc: args.cos_scale_locc,
		},
		other => other,
	};
	let mut config = CstConfig::new(args.cst_metric, data_metric);
	config.weighting = args.weighting;
	config.scope = args
		.dir
		.as_deref()
		.map(Scope::directory)
		.unwrap_or_default();
	config.exclude_globs = args.exclude.clone();
	config
}

fn resolve(
	records: &[ChangeRecord],
	blame: Option<&BlameSnapshot>,
	args: &IdentityArgs,
) -> Result<IdentityMap, CliError> {
	let config = identity_config(args)?;
	Ok(resolve_identities(&author_counts(records, blame), &config)?)
}

fn identity_of(map: &IdentityMap, id: busfactor_core::DevId, redact: bool) -> (String, String) {
	let dev = map.developer(id);
	if redact {
		let pseudonym = redacted(&dev.canonical_email);
		(pseudonym.clone(), pseudonym)
	} else {
		(dev.canonical_name.clone(), dev.canonical_email.clone())
	}
}

fn cst(args: &CstArgs, manifest: &mut RunManifest) -> Result<Report, CliError> {
	let mut config = knowledge_config(&args.knowledge);
	if let (Some(from), Some(to)) = (args.from, args.to) {
		config.time_range = Some(TimeRange::between(from, to)?);
	}
	// Validate the globs before the expensive extraction.
	ExcludeSet::new(&config.exclude_globs)?;
	let identity_args = &args.knowledge.identity;
	let config_identity = identity_config(identity_args)?;

	let records = load_records(&args.source, manifest)?;
	let identity = resolve_identities(&author_counts(&records, None), &config_identity)?;
	let result = cst_bus_factor(&records, &identity, &config)?;

	let primary: BTreeSet<_> = result.primary_devs.iter().map(|(d, _)| *d).collect();
	let secondary: BTreeSet<_> = result.secondary_devs.iter().map(|(d, _)| *d).collect();
	let mut developers: Vec<DeveloperRow> = result
		.knowledge
		.shares
		.iter()
		.map(|(&id, &share)| {
			let role = if primary.contains(&id) {
				Role::Primary
			} else if secondary.contains(&id) {
				Role::Secondary
			} else {
				Role::Other
			};
			let (name, email) = identity_of(&identity, id, args.output.redact);
			DeveloperRow {
				name,
				email,
				share,
				role,
			}
		})
		.collect();
	developers.sort_by(|a, b| {
		b.share
			.total_cmp(&a.share)
			.then_with(|| a.email.cmp(&b.email))
	});

	Ok(Report::Cst(CstReport {
		bus_factor: result.bus_factor,
		developer_count: result.developer_count,
		file_count: result.knowledge.file_count,
		primary_threshold: result.thresholds.primary,
		secondary_threshold: result.thresholds.secondary,
		cst_metric: config.cst_metric.to_string(),
		data_metric: config.data_metric.to_string(),
		weighting: config.weighting.to_string(),
		scope: config.scope.to_string(),
		time_range: config.time_range.as_ref().map(|t| t.label.clone()),
		exclude: config.exclude_globs.clone(),
		similarity_threshold: identity.similarity_threshold(),
		developers,
	}))
}

fn trend(args: &TrendArgs, manifest: &mut RunManifest) -> Result<Report, CliError> {
	let config = knowledge_config(&args.knowledge);
	ExcludeSet::new(&config.exclude_globs)?;
	if args.from_year > args.to_year {
		return Err(TrendError::EmptySpan {
			first: args.from_year,
			last: args.to_year,
		}
		.into());
	}
	let records = load_records(&args.source, manifest)?;
	let identity = resolve(&records, None, &args.knowledge.identity)?;
	let mode = if args.cumulative {
		TrendMode::Cumulative
	} else {
		TrendMode::PerYear
	};
	let series = yearly_trend(
		&records,
		&identity,
		&config,
		args.from_year,
		args.to_year,
		mode,
	)?;
	Ok(Report::Trend(TrendReport {
		scope: series.scope,
		cumulative: args.cumulative,
		cst_metric: config.cst_metric.to_string(),
		data_metric: config.data_metric.to_string(),
		points: series
			.points
			.into_iter()
			.map(|p| TrendRow {
				year: p.year,
				bus_factor: p.bus_factor,
				total_developers: p.total_developers,
				bf_percentage: p.bf_percentage,
				active: p.active,
			})
			.collect(),
	}))
}

fn rig(args: &RigArgs, manifest: &mut RunManifest) -> Result<Report, CliError> {
	let config = RigConfig {
		max_group_size: args.max_g,
		samples_per_size: args.samples,
		seed: args.seed,
		line_abandon_fraction: args.line_abandon,
		file_abandon_fraction: args.file_abandon,
		exhaustive: args.exhaustive,
	};
	config.validate()?;
	if args.runs == 0 {
		return Err(RigError::InvalidConfig("runs must be at least 1".into()).into());
	}
	let excludes = ExcludeSet::new(&args.exclude)?;
	let scope = args
		.dir
		.as_deref()
		.map(Scope::directory)
		.unwrap_or_default();

	let mut blame = match (&args.source.repo, &args.source.cache) {
		(Some(repo), _) => {
			ensure_repository(repo)?;
			manifest.repo_fingerprint = repo_fingerprint(repo)?;
			extract_blame(repo, &args.rev, args.dir.as_deref())?
		}
		(None, Some(cache)) => {
			let contents = load_cache(cache)?;
			manifest.repo_fingerprint = contents.manifest.repo_fingerprint;
			let blame = contents.blame.ok_or_else(|| {
				CliError::domain(
					"MissingBlame",
					format!("cache {} has no blame snapshot", cache.display()),
				)
			})?;
			if args.rev != "HEAD" && !blame.revision.starts_with(&args.rev) {
				return Err(CliError::domain(
					"RevisionMismatch",
					format!("cache holds blame at {}, not {}", blame.revision, args.rev),
				));
			}
			blame
		}
		(None, None) => unreachable!("clap requires --repo or --cache"),
	};
	blame.retain_files(|path| scope.matches(path) && !excludes.is_excluded(path));
	if blame.is_empty() {
		return Err(IngestError::NoTextFiles(scope.to_string()).into());
	}

	let identity = resolve(&[], Some(&blame), &args.identity)?;
	let index = BlameIndex::new(&blame, &identity)?;
	let (results, summary) = rig_repeat(&index, &config, args.runs)?;
	manifest.seed = Some(args.seed);

	let runs = results
		.iter()
		.enumerate()
		.map(|(i, r)| {
			let mut bf_set: Vec<(String, String)> = r
				.bf_set
				.iter()
				.flatten()
				.map(|&id| identity_of(&identity, id, args.output.redact))
				.collect();
			bf_set.sort_by(|a, b| a.1.cmp(&b.1));
			RigRun {
				seed: args.seed.wrapping_add(i as u64),
				bus_factor: r.bus_factor,
				bf_set,
				samples_evaluated: r.samples_evaluated,
				abandoned_fraction: r.abandoned_fraction_at_return,
			}
		})
		.collect();

	Ok(Report::Rig(RigReport {
		revision: blame.revision.clone(),
		scope: scope.to_string(),
		file_count: index.file_count(),
		population: index.population().len(),
		exhaustive: args.exhaustive,
		samples_per_size: args.samples,
		max_group_size: args.max_g,
		line_abandon_fraction: args.line_abandon,
		file_abandon_fraction: args.file_abandon,
		runs,
		summary,
	}))
}
