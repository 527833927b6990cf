// SPDX-License-Identifier: Apache-2.0

//! Line attribution via `git blame --porcelain`.

use super::{git, normalize_path, resolve_revision, BlameSnapshot, IngestError, RawAuthor};
use rayon::prelude::*;
use std::collections::{BTreeMap, HashMap};
use std::path::Path;

/// Blames every text file under `path_filter` at `revision`.
///
/// Plain blame is used (no move or copy detection). Binary and empty files
/// are skipped.
pub fn extract_blame(
	repo_path: &Path,
	revision: &str,
	path_filter: Option<&str>,
) -> Result<BlameSnapshot, IngestError> {
	let revision = resolve_revision(repo_path, revision)?;
	let filter = path_filter
		.map(normalize_path)
		.filter(|f| !f.is_empty() && f != ".");

	let files = text_files(repo_path, &revision, filter.as_deref())?;
	if files.is_empty() {
		return Err(IngestError::NoTextFiles(
			filter.unwrap_or_else(|| ".".to_owned()),
		));
	}

	let blamed: Vec<(String, Vec<RawAuthor>)> = files
		.into_par_iter()
		.map(|(path, lines)| {
			let out = git(repo_path, &["blame", "--porcelain", &revision, "--", &path])?;
			let authors = parse_porcelain(&out)?;
			if authors.len() as u64 != lines {
				return Err(IngestError::malformed(
					"blame",
					format!(
						"'{path}' has {lines} lines but blame attributed {}",
						authors.len()
					),
				));
			}
			Ok((path, authors))
		})
		.collect::<Result<_, IngestError>>()?;

	Ok(BlameSnapshot {
		revision,
		files: blamed.into_iter().collect(),
	})
}

/// Text files at `revision` with their line counts, from a diff against the
/// empty tree.
fn text_files(
	repo: &Path,
	revision: &str,
	filter: Option<&str>,
) -> Result<BTreeMap<String, u64>, IngestError> {
	let empty_tree = git(repo, &["hash-object", "-t", "tree", "/dev/null"])?;
	let empty_tree = String::from_utf8_lossy(&empty_tree).trim().to_owned();
	let mut args = vec![
		"diff",
		"--numstat",
		"-z",
		"--no-renames",
		"--no-ext-diff",
		"--no-textconv",
		empty_tree.as_str(),
		revision,
		"--",
	];
	if let Some(f) = filter {
		args.push(f);
	}
	let out = git(repo, &args)?;

	let mut files = BTreeMap::new();
	for entry in out.split(|&b| b == 0).filter(|e| !e.is_empty()) {
		let text = String::from_utf8_lossy(entry);
		let mut fields = text.splitn(3, '\t');
		let (Some(added), Some(_), Some(path)) = (fields.next(), fields.next(), fields.next())
		else {
			return Err(IngestError::malformed(
				"diff",
				format!("bad numstat entry '{text}'"),
			));
		};
		// "-" marks a binary file
		let Ok(lines) = added.parse::<u64>() else {
			continue;
		};
		if lines > 0 {
			files.insert(path.to_owned(), lines);
		}
	}
	Ok(files)
}

/// One `RawAuthor` per line of the blamed file, in line order.
pub(crate) fn parse_porcelain(out: &[u8]) -> Result<Vec<RawAuthor>, IngestError> {
	let mut authors: HashMap<String, RawAuthor> = HashMap::new();
	let mut lines = Vec::new();
	let mut current: Option<String> = None;

	for line in out.split(|&b| b == b'\n') {
		if let Some(_content) = line.strip_prefix(b"\t") {
			let hash = current
				.take()
				.ok_or_else(|| IngestError::malformed("blame", "content line without header"))?;
			let author = authors.get(&hash).cloned().unwrap_or_default();
			lines.push(author);
			continue;
		}
		if line.is_empty() {
			continue;
		}
		let text = String::from_utf8_lossy(line);
		match &current {
			None => {
				let hash = text
					.split(' ')
					.next()
					.filter(|h| h.len() >= 40 && h.bytes().all(|b| b.is_ascii_hexdigit()))
					.ok_or_else(|| {
						IngestError::malformed("blame", format!("expected header, got '{text}'"))
					})?;
				authors.entry(hash.to_owned()).or_default();
				current = Some(hash.to_owned());
			}
			Some(hash) => {
				let entry = authors.entry(hash.clone()).or_default();
				if let Some(name) = text.strip_prefix("author ") {
					entry.name = name.to_owned();
				} else if let Some(mail) = text.strip_prefix("author-mail ") {
					entry.email = mail
						.strip_prefix('<')
						.and_then(|m| m.strip_suffix('>'))
						.unwrap_or(mail)
						.to_owned();
				}
			}
		}
	}
	Ok(lines)
}
