// SPDX-License-Identifier: Apache-2.0

//! Extraction of change history and blame attributions from a local git clone.
//!
//! All git access goes through the `git` executable so that results match
//! `git log --numstat --no-merges` and `git blame` exactly.

pub mod blame;
pub mod cache;
pub mod filter;
pub mod history;

use crate::metrics::TokenBag;
use chrono::{DateTime, Utc};
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use thiserror::Error;

/// Author identity exactly as git recorded it.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RawAuthor {
	pub name: String,
	pub email: String,
}

impl RawAuthor {
	pub fn new(name: impl Into<String>, email: impl Into<String>) -> Self {
		Self {
			name: name.into(),
			email: email.into(),
		}
	}
}

impl fmt::Display for RawAuthor {
	fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
		write!(f, "{} <{}>", self.name, self.email)
	}
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitMeta {
	pub hash: String,
	pub author: RawAuthor,
	/// Author date, normalized to UTC.
	pub author_timestamp: DateTime<Utc>,
	pub is_merge: bool,
	/// Position of the commit in ingestion order (parents before children).
	pub sequence: u64,
}

/// One (commit, file) modification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChangeRecord {
	pub commit: Arc<CommitMeta>,
	/// Repo-relative path with forward slashes.
	pub path: String,
	pub lines_added: u64,
	pub lines_deleted: u64,
	pub added_tokens: TokenBag,
	pub deleted_tokens: TokenBag,
}

impl ChangeRecord {
	pub fn author(&self) -> &RawAuthor {
		&self.commit.author
	}

	pub fn timestamp(&self) -> DateTime<Utc> {
		self.commit.author_timestamp
	}

	/// Chronological ordering key: author date, then ingestion order, then hash.
	pub fn chronological_key(&self) -> (DateTime<Utc>, u64, &str) {
		(
			self.commit.author_timestamp,
			self.commit.sequence,
			&self.commit.hash,
		)
	}
}

/// Per-line authorship of every text file at one revision.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BlameSnapshot {
	pub revision: String,
	pub files: BTreeMap<String, Vec<RawAuthor>>,
}

impl BlameSnapshot {
	pub fn is_empty(&self) -> bool {
		self.files.is_empty()
	}

	pub fn line_count(&self) -> usize {
		self.files.values().map(Vec::len).sum()
	}

	/// Keeps only the files whose path satisfies `keep`.
	pub fn retain_files(&mut self, mut keep: impl FnMut(&str) -> bool) {
		self.files.retain(|path, _| keep(path));
	}
}

#[derive(Debug, Error)]
pub enum IngestError {
	#[error("'{}' is not a git repository", .0.display())]
	NotARepository(PathBuf),

	#[error("git {command} failed ({status}): {stderr}")]
	GitInvocationFailure {
		command: String,
		status: String,
		stderr: String,
	},

	#[error("repository has no commits")]
	EmptyRepository,

	#[error("unknown revision '{0}'")]
	UnknownRevision(String),

	#[error("no blame-able text files under '{0}'")]
	NoTextFiles(String),

	#[error("invalid glob '{pattern}': {reason}")]
	InvalidGlob { pattern: String, reason: String },

	#[error("cache schema version {found} does not match expected {expected}")]
	SchemaMismatch { expected: u32, found: u32 },

	#[error("corrupt cache: {0}")]
	CorruptCache(String),

	#[error("i/o failure: {0}")]
	IoFailure(#[from] std::io::Error),
}

impl IngestError {
	pub fn name(&self) -> &'static str {
		match self {
			IngestError::NotARepository(_) => "NotARepository",
			IngestError::GitInvocationFailure { .. } => "GitInvocationFailure",
			IngestError::EmptyRepository => "EmptyRepository",
			IngestError::UnknownRevision(_) => "UnknownRevision",
			IngestError::NoTextFiles(_) => "NoTextFiles",
			IngestError::InvalidGlob { .. } => "InvalidGlob",
			IngestError::SchemaMismatch { .. } => "SchemaMismatch",
			IngestError::CorruptCache(_) => "CorruptCache",
			IngestError::IoFailure(_) => "IoFailure",
		}
	}

	fn malformed(command: &str, detail: impl Into<String>) -> Self {
		IngestError::GitInvocationFailure {
			command: command.to_owned(),
			status: "unparseable output".to_owned(),
			stderr: detail.into(),
		}
	}
}

/// Runs `git -C repo <args>` and returns stdout.
pub(crate) fn git(repo: &Path, args: &[&str]) -> Result<Vec<u8>, IngestError> {
	let output = Command::new("git")
		.arg("-C")
		.arg(repo)
		.args(["-c", "core.quotePath=false", "-c", "color.ui=never"])
		.args(args)
		.env("LC_ALL", "C")
		.output()
		.map_err(|e| IngestError::GitInvocationFailure {
			command: args.join(" "),
			status: "spawn failed".to_owned(),
			stderr: e.to_string(),
		})?;
	if !output.status.success() {
		return Err(IngestError::GitInvocationFailure {
			command: args.join(" "),
			status: output.status.to_string(),
			stderr: String::from_utf8_lossy(&output.stderr).trim().to_owned(),
		});
	}
	Ok(output.stdout)
}

/// Fails with `NotARepository` unless `repo` is inside a git working copy.
pub fn ensure_repository(repo: &Path) -> Result<(), IngestError> {
	if !repo.is_dir() {
		return Err(IngestError::NotARepository(repo.to_path_buf()));
	}
	git(repo, &["rev-parse", "--git-dir"])
		.map(|_| ())
		.map_err(|_| IngestError::NotARepository(repo.to_path_buf()))
}

/// Full hash of `revision`, or `UnknownRevision` / `EmptyRepository` for `HEAD`.
pub fn resolve_revision(repo: &Path, revision: &str) -> Result<String, IngestError> {
	ensure_repository(repo)?;
	let spec = format!("{revision}^{{commit}}");
	match git(repo, &["rev-parse", "--verify", "--quiet", &spec]) {
		Ok(out) => Ok(String::from_utf8_lossy(&out).trim().to_owned()),
		Err(_) if revision == "HEAD" => Err(IngestError::EmptyRepository),
		Err(_) => Err(IngestError::UnknownRevision(revision.to_owned())),
	}
}

/// `origin-url|absolute-path@head` (or `absolute-path@head` without an
/// origin remote), identifying a repository state.
pub fn repo_fingerprint(repo: &Path) -> Result<String, IngestError> {
	let head = resolve_revision(repo, "HEAD")?;
	let origin = git(repo, &["config", "--get", "remote.origin.url"])
		.map(|o| String::from_utf8_lossy(&o).trim().to_owned())
		.unwrap_or_default();
	let abs = repo
		.canonicalize()
		.unwrap_or_else(|_| repo.to_path_buf())
		.display()
		.to_string();
	if origin.is_empty() {
		Ok(format!("{abs}@{head}"))
	} else {
		Ok(format!("{origin}|{abs}@{head}"))
	}
}

/// Strips `./` and leading slashes and converts separators to `/`.
pub fn normalize_path(path: &str) -> String {
	let replaced = path.replace('\\', "/");
	let mut rest = replaced.as_str();
	loop {
		if let Some(r) = rest.strip_prefix("./") {
			rest = r;
		} else if let Some(r) = rest.strip_prefix('/') {
			rest = r;
		} else {
			break;
		}
	}
	rest.to_owned()
}

#[cfg(test)]
pub(crate) mod test_support {
	use super::*;
	use chrono::TimeZone;

	pub fn record(author: &str, path: &str, ts: i64, added: u64, deleted: u64) -> ChangeRecord {
		ChangeRecord {
			commit: Arc::new(CommitMeta {
				hash: format!("{:040x}", ts as u64 * 131 + added * 7 + deleted),
				author: RawAuthor::new(author, format!("{}@example.com", author.to_lowercase())),
				author_timestamp: Utc.timestamp_opt(ts, 0).unwrap(),
				is_merge: false,
				sequence: ts as u64,
			}),
			path: path.to_owned(),
			lines_added: added,
			lines_deleted: deleted,
			added_tokens: TokenBag::new(),
			deleted_tokens: TokenBag::new(),
		}
	}
}

#[cfg(test)]
mod tests {
	use super::*;

	#[test]
	fn normalize_path_strips_prefixes() {
		assert_eq!(normalize_path("./src/a.c"), "src/a.c");
		assert_eq!(normalize_path("/src/"), "src/");
		assert_eq!(normalize_path("a\\b.c"), "a/b.c");
	}

	#[test]
	fn missing_directory_is_not_a_repository() {
		let err = ensure_repository(Path::new("/definitely/not/here")).unwrap_err();
		assert_eq!(err.name(), "NotARepository");
	}
}
