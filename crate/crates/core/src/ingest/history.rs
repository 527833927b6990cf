// SPDX-License-Identifier: Apache-2.0

//! Commit history extraction from `git log -p -U0`.

use super::{normalize_path, resolve_revision, ChangeRecord, CommitMeta, IngestError, RawAuthor};
use crate::metrics::{add_line_tokens, TokenBag};
use chrono::{DateTime, Utc};
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::Arc;

const COMMIT_MARKER: u8 = 0x01;
const LOG_FORMAT: &str = "--format=%x01%H%x00%P%x00%an%x00%ae%x00%aI";

/// One `ChangeRecord` per (commit, modified text file) on the checked-out
/// branch, parents before children and otherwise in author-date order.
///
/// Merge commits are skipped unless `include_merges` is set, in which case
/// they are diffed against their first parent. Binary files and changes with
/// no added or deleted lines produce no record.
pub fn extract_history(
	repo_path: &Path,
	include_merges: bool,
) -> Result<Vec<ChangeRecord>, IngestError> {
	resolve_revision(repo_path, "HEAD")?;

	let mut args: Vec<&str> = vec![
		"log",
		"--reverse",
		"--author-date-order",
		"--root",
		"-p",
		"-U0",
		"-M",
		"--no-color",
		"--no-ext-diff",
		"--no-textconv",
		"--src-prefix=a/",
		"--dst-prefix=b/",
		LOG_FORMAT,
	];
	if include_merges {
		args.push("--diff-merges=first-parent");
	} else {
		args.push("--no-merges");
	}
	args.push("HEAD");
	args.push("--");

	let mut child = Command::new("git")
		.arg("-C")
		.arg(repo_path)
		.args([
			"-c",
			"core.quotePath=false",
			"-c",
			"log.showSignature=false",
		])
		.args(&args)
		.env("LC_ALL", "C")
		.stdout(Stdio::piped())
		.stderr(Stdio::piped())
		.spawn()
		.map_err(|e| IngestError::GitInvocationFailure {
			command: "log".to_owned(),
			status: "spawn failed".to_owned(),
			stderr: e.to_string(),
		})?;

	let mut stderr = child.stderr.take().expect("stderr piped");
	let stderr_reader = std::thread::spawn(move || {
		let mut buf = Vec::new();
		let _ = stderr.read_to_end(&mut buf);
		buf
	});

	let stdout = child.stdout.take().expect("stdout piped");
	let parsed = parse_log(BufReader::new(stdout));
	let status = child.wait()?;
	let stderr = stderr_reader.join().unwrap_or_default();
	if !status.success() {
		return Err(IngestError::GitInvocationFailure {
			command: "log".to_owned(),
			status: status.to_string(),
			stderr: String::from_utf8_lossy(&stderr).trim().to_owned(),
		});
	}
	parsed
}

#[derive(Default)]
struct FileDiff {
	old_path: Option<String>,
	new_path: Option<String>,
	binary: bool,
	lines_added: u64,
	lines_deleted: u64,
	added_tokens: TokenBag,
	deleted_tokens: TokenBag,
}

impl FileDiff {
	fn into_record(self, commit: &Arc<CommitMeta>) -> Option<ChangeRecord> {
		if self.binary || self.lines_added + self.lines_deleted == 0 {
			return None;
		}
		let path = self.new_path.or(self.old_path)?;
		Some(ChangeRecord {
			commit: Arc::clone(commit),
			path,
			lines_added: self.lines_added,
			lines_deleted: self.lines_deleted,
			added_tokens: self.added_tokens,
			deleted_tokens: self.deleted_tokens,
		})
	}
}

struct LogParser {
	records: Vec<ChangeRecord>,
	commit: Option<Arc<CommitMeta>>,
	file: Option<FileDiff>,
	pending_deleted: u64,
	pending_added: u64,
	sequence: u64,
}

impl LogParser {
	fn flush_file(&mut self) {
		if let (Some(file), Some(commit)) = (self.file.take(), self.commit.as_ref()) {
			if let Some(record) = file.into_record(commit) {
				self.records.push(record);
			}
		}
	}

	fn line(&mut self, line: &[u8]) -> Result<(), IngestError> {
		if self.pending_deleted + self.pending_added > 0 {
			return self.hunk_line(line);
		}
		if line.first() == Some(&COMMIT_MARKER) {
			self.flush_file();
			self.commit = Some(Arc::new(parse_header(&line[1..], self.sequence)?));
			self.sequence += 1;
			return Ok(());
		}
		if line.starts_with(b"diff --git ") {
			self.flush_file();
			self.file = Some(FileDiff::default());
			return Ok(());
		}
		let Some(file) = self.file.as_mut() else {
			return Ok(());
		};
		if let Some(rest) = line.strip_prefix(b"--- ") {
			file.old_path = parse_diff_path(rest, b"a/");
		} else if let Some(rest) = line.strip_prefix(b"+++ ") {
			file.new_path = parse_diff_path(rest, b"b/");
		} else if line.starts_with(b"Binary files ") || line.starts_with(b"GIT binary patch") {
			file.binary = true;
		} else if line.starts_with(b"@@ ") {
			let (deleted, added) = parse_hunk_header(line)
				.ok_or_else(|| IngestError::malformed("log", String::from_utf8_lossy(line)))?;
			self.pending_deleted = deleted;
			self.pending_added = added;
		}
		Ok(())
	}

	fn hunk_line(&mut self, line: &[u8]) -> Result<(), IngestError> {
		let file = self
			.file
			.as_mut()
			.ok_or_else(|| IngestError::malformed("log", "hunk outside of a file diff"))?;
		let text = String::from_utf8_lossy(line.get(1..).unwrap_or_default());
		match line.first() {
			Some(b'-') if self.pending_deleted > 0 => {
				self.pending_deleted -= 1;
				file.lines_deleted += 1;
				add_line_tokens(&mut file.deleted_tokens, &text);
			}
			Some(b'+') if self.pending_added > 0 => {
				self.pending_added -= 1;
				file.lines_added += 1;
				add_line_tokens(&mut file.added_tokens, &text);
			}
			Some(b'\\') => {}
			_ => {
				return Err(IngestError::malformed(
					"log",
					format!("unexpected hunk line '{}'", String::from_utf8_lossy(line)),
				))
			}
		}
		Ok(())
	}
}

fn parse_log<R: BufRead>(mut reader: R) -> Result<Vec<ChangeRecord>, IngestError> {
	let mut parser = LogParser {
		records: Vec::new(),
		commit: None,
		file: None,
		pending_deleted: 0,
		pending_added: 0,
		sequence: 0,
	};
	let mut buf = Vec::new();
	loop {
		buf.clear();
		if reader.read_until(b'\n', &mut buf)? == 0 {
			break;
		}
		if buf.last() == Some(&b'\n') {
			buf.pop();
		}
		parser.line(&buf)?;
	}
	parser.flush_file();
	Ok(parser.records)
}

fn parse_header(fields: &[u8], sequence: u64) -> Result<CommitMeta, IngestError> {
	let text = String::from_utf8_lossy(fields);
	let parts: Vec<&str> = text.split('\0').collect();
	let [hash, parents, name, email, date] = parts.as_slice() else {
		return Err(IngestError::malformed(
			"log",
			format!("bad commit header '{text}'"),
		));
	};
	let author_timestamp = DateTime::parse_from_rfc3339(date)
		.map_err(|e| IngestError::malformed("log", format!("bad author date '{date}': {e}")))?
		.with_timezone(&Utc);
	Ok(CommitMeta {
		hash: (*hash).to_owned(),
		author: RawAuthor::new(*name, *email),
		author_timestamp,
		is_merge: parents.split_whitespace().count() > 1,
		sequence,
	})
}

/// `-a[,b] +c[,d]`; returns (deleted, added) line counts.
fn parse_hunk_header(line: &[u8]) -> Option<(u64, u64)> {
	let text = std::str::from_utf8(line).ok()?;
	let mut parts = text.split(' ').skip(1);
	let old = parts.next()?.strip_prefix('-')?;
	let new = parts.next()?.strip_prefix('+')?;
	let count = |range: &str| -> Option<u64> {
		match range.split_once(',') {
			Some((_, n)) => n.parse().ok(),
			None => Some(1),
		}
	};
	Some((count(old)?, count(new)?))
}

fn parse_diff_path(raw: &[u8], prefix: &[u8]) -> Option<String> {
	let raw = raw.strip_suffix(b"\t").unwrap_or(raw);
	if raw == b"/dev/null" {
		return None;
	}
	let unquoted = if raw.first() == Some(&b'"') {
		unquote_c_style(raw)?
	} else {
		raw.to_vec()
	};
	let path = unquoted.strip_prefix(prefix).unwrap_or(&unquoted);
	Some(normalize_path(&String::from_utf8_lossy(path)))
}

/// Undoes git's C-style quoting of unusual path names.
pub(crate) fn unquote_c_style(raw: &[u8]) -> Option<Vec<u8>> {
	let inner = raw.strip_prefix(b"\"")?.strip_suffix(b"\"")?;
	let mut out = Vec::with_capacity(inner.len());
	let mut i = 0;
	while i < inner.len() {
		let b = inner[i];
		if b != b'\\' {
			out.push(b);
			i += 1;
			continue;
		}
		let esc = *inner.get(i + 1)?;
		i += 2;
		match esc {
			b'n' => out.push(b'\n'),
			b't' => out.push(b'\t'),
			b'r' => out.push(b'\r'),
			b'a' => out.push(0x07),
			b'b' => out.push(0x08),
			b'f' => out.push(0x0c),
			b'v' => out.push(0x0b),
			b'0'..=b'7' => {
				let digits = inner.get(i - 1..i + 2)?;
				let value = std::str::from_utf8(digits).ok()?;
				out.push(u8::from_str_radix(value, 8).ok()?);
				i += 2;
			}
			other => out.push(other),
		}
	}
	Some(out)
}
