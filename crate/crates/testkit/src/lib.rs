// SPDX-License-Identifier: Apache-2.0

//! Scripted git repositories for tests.
//!
//! [`FixtureRepo`] drives the `git` executable and keeps its own record of
//! what every commit did: which lines each author added or deleted in each
//! file, and who last wrote every line that is still present. Tests use that
//! record as ground truth instead of reading it back through the code under
//! test.
//!
//! Every generated line is unique, so git's diff and blame have exactly one
//! correct answer for each edit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use tempfile::TempDir;

const VOCABULARY: &[&str] = &[
	"alpha", "beta", "gamma", "delta", "count", "index", "value", "buffer", "node", "tree",
	"parse", "emit", "load", "store", "x", "y", "i", "n", "size", "ptr",
];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Dev {
	pub name: String,
	pub email: String,
}

impl Dev {
	pub fn new(name: &str, email: &str) -> Self {
		Self {
			name: name.to_owned(),
			email: email.to_owned(),
		}
	}
}

/// Five developers whose names and emails never merge under alias resolution.
pub fn team() -> Vec<Dev> {
	vec![
		Dev::new("Alice Anders", "alice@example.com"),
		Dev::new("Bruno Becker", "bruno@example.org"),
		Dev::new("Chandra Chow", "chandra@example.net"),
		Dev::new("Dmitri Dahl", "dmitri@example.com"),
		Dev::new("Eun-ji Evans", "eunji@example.org"),
	]
}

#[derive(Debug, Clone)]
pub enum Edit {
	/// Append `n` new lines (creating the file if needed).
	Append { path: String, n: usize },
	/// Replace the line at `line` (0-based) with a new one.
	Replace { path: String, line: usize },
	/// Remove the line at `line` (0-based).
	Delete { path: String, line: usize },
	/// Write a binary file.
	Binary { path: String },
}

impl Edit {
	pub fn append(path: &str, n: usize) -> Self {
		Edit::Append {
			path: path.to_owned(),
			n,
		}
	}

	pub fn replace(path: &str, line: usize) -> Self {
		Edit::Replace {
			path: path.to_owned(),
			line,
		}
	}

	pub fn delete(path: &str, line: usize) -> Self {
		Edit::Delete {
			path: path.to_owned(),
			line,
		}
	}

	pub fn binary(path: &str) -> Self {
		Edit::Binary {
			path: path.to_owned(),
		}
	}
}

/// What one commit did to one text file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
	pub commit: String,
	pub author: Dev,
	pub timestamp: i64,
	pub path: String,
	pub added: Vec<String>,
	pub deleted: Vec<String>,
}

pub struct FixtureRepo {
	dir: TempDir,
	rng: ChaCha8Rng,
	counter: u64,
	/// Current content of every text file: (line, last author).
	files: BTreeMap<String, Vec<(String, Dev)>>,
	pub events: Vec<Event>,
	pub commits: Vec<String>,
}

impl FixtureRepo {
	pub fn new(seed: u64) -> Self {
		let dir = tempfile::Builder::new()
			.prefix("busfactor-fixture")
			.tempdir()
			.expect("tempdir");
		let repo = Self {
			dir,
			rng: ChaCha8Rng::seed_from_u64(seed),
			counter: 0,
			files: BTreeMap::new(),
			events: Vec::new(),
			commits: Vec::new(),
		};
		repo.git(&["init", "-q"]);
		repo.git(&["config", "user.name", "Fixture"]);
		repo.git(&["config", "user.email", "fixture@example.com"]);
		repo.git(&["config", "commit.gpgsign", "false"]);
		repo
	}

	pub fn path(&self) -> &Path {
		self.dir.path()
	}

	/// Runs git in the repository and returns stdout.
	pub fn git(&self, args: &[&str]) -> String {
		let out = Command::new("git")
			.arg("-C")
			.arg(self.dir.path())
			.args(args)
			.env("GIT_CONFIG_NOSYSTEM", "1")
			.output()
			.expect("spawn git");
		assert!(
			out.status.success(),
			"git {args:?} failed: {}",
			String::from_utf8_lossy(&out.stderr)
		);
		String::from_utf8_lossy(&out.stdout).into_owned()
	}

	fn fresh_line(&mut self) -> String {
		self.counter += 1;
		let mut word = || VOCABULARY[self.rng.gen_range(0..VOCABULARY.len())];
		let (a, b, c) = (word(), word(), word());
		format!("{a} {b} = {c}(u{});", self.counter)
	}

	/// Applies `edits` as one commit by `author` at unix time `timestamp`.
	pub fn commit(&mut self, author: &Dev, timestamp: i64, edits: &[Edit]) -> String {
		let mut touched: BTreeMap<String, (Vec<String>, Vec<String>)> = BTreeMap::new();
		for edit in edits {
			match edit {
				Edit::Append { path, n } => {
					for _ in 0..*n {
						let line = self.fresh_line();
						touched
							.entry(path.clone())
							.or_default()
							.0
							.push(line.clone());
						self.files
							.entry(path.clone())
							.or_default()
							.push((line, author.clone()));
					}
				}
				Edit::Replace { path, line } => {
					let new = self.fresh_line();
					let lines = self.files.get_mut(path).expect("file exists");
					let (old, _) =
						std::mem::replace(&mut lines[*line], (new.clone(), author.clone()));
					let entry = touched.entry(path.clone()).or_default();
					entry.0.push(new);
					entry.1.push(old);
				}
				Edit::Delete { path, line } => {
					let lines = self.files.get_mut(path).expect("file exists");
					let (old, _) = lines.remove(*line);
					touched.entry(path.clone()).or_default().1.push(old);
				}
				Edit::Binary { path } => {
					let bytes: Vec<u8> = (0..64u8)
						.map(|b| b.wrapping_mul(37))
						.chain([0, 0, 1, 2])
						.collect();
					let full = self.dir.path().join(path);
					std::fs::create_dir_all(full.parent().unwrap()).unwrap();
					std::fs::write(full, bytes).unwrap();
				}
			}
		}
		for path in touched.keys() {
			self.write_file(path);
		}

		self.git(&["add", "-A"]);
		let date = format!("@{timestamp} +0000");
		let out = Command::new("git")
			.arg("-C")
			.arg(self.dir.path())
			.args(["commit", "-q", "--allow-empty", "-m"])
			.arg(format!("change {}", self.commits.len() + 1))
			.env("GIT_CONFIG_NOSYSTEM", "1")
			.env("GIT_AUTHOR_NAME", &author.name)
			.env("GIT_AUTHOR_EMAIL", &author.email)
			.env("GIT_AUTHOR_DATE", &date)
			.env("GIT_COMMITTER_NAME", &author.name)
			.env("GIT_COMMITTER_EMAIL", &author.email)
			.env("GIT_COMMITTER_DATE", &date)
			.output()
			.expect("spawn git commit");
		assert!(
			out.status.success(),
			"commit failed: {}",
			String::from_utf8_lossy(&out.stderr)
		);
		let hash = self.git(&["rev-parse", "HEAD"]).trim().to_owned();

		for (path, (added, deleted)) in touched {
			if added.is_empty() && deleted.is_empty() {
				continue;
			}
			self.events.push(Event {
				commit: hash.clone(),
				author: author.clone(),
				timestamp,
				path,
				added,
				deleted,
			});
		}
		self.commits.push(hash.clone());
		hash
	}

	fn write_file(&self, path: &str) {
		let full = self.dir.path().join(path);
		std::fs::create_dir_all(full.parent().unwrap()).unwrap();
		let mut text = String::new();
		for (line, _) in &self.files[path] {
			text.push_str(line);
			text.push('\n');
		}
		std::fs::write(full, text).unwrap();
	}

	/// Who last wrote each line of each non-empty text file, from the script.
	pub fn blame_truth(&self) -> BTreeMap<String, Vec<Dev>> {
		self.files
			.iter()
			.filter(|(_, lines)| !lines.is_empty())
			.map(|(p, lines)| (p.clone(), lines.iter().map(|(_, d)| d.clone()).collect()))
			.collect()
	}
}

/// Writes a repository in which file `i` is wholly owned by `owners[i]`.
pub fn ownership_repo(owners: &[&Dev], lines_per_file: usize) -> FixtureRepo {
	let mut repo = FixtureRepo::new(owners.len() as u64);
	for (i, dev) in owners.iter().enumerate() {
		repo.commit(
			dev,
			1_600_000_000 + i as i64 * 60,
			&[Edit::append(&format!("src/f{i}.c"), lines_per_file)],
		);
	}
	repo
}
