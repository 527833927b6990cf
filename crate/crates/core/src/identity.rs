// SPDX-License-Identifier: Apache-2.0

//! Alias resolution: collapsing the many name/email pairs one person commits
//! under into a single developer identity.
//!
//! Two authors are merged when their normalized emails match, when their
//! email local parts match (and are at least three characters long), or when
//! the token-set similarity of their normalized names reaches the configured
//! threshold. The transitive closure of those merges is taken with a
//! union-find, so the result does not depend on comparison order.

use crate::ingest::{BlameSnapshot, ChangeRecord, RawAuthor};
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

pub const DEFAULT_SIMILARITY: u8 = 90;
const MIN_LOCAL_PART: usize = 3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdentityError {
	#[error("no authors to resolve")]
	EmptyAuthorSet,

	#[error("unknown author {0}")]
	UnknownAuthor(RawAuthor),

	#[error("similarity threshold {0} is outside 0-100")]
	InvalidThreshold(u8),

	#[error("alias file line {line}: expected 'raw_email -> canonical_email'")]
	InvalidAliasLine { line: usize },
}

impl IdentityError {
	pub fn name(&self) -> &'static str {
		match self {
			IdentityError::EmptyAuthorSet => "EmptyAuthorSet",
			IdentityError::UnknownAuthor(_) => "UnknownAuthor",
			IdentityError::InvalidThreshold(_) => "InvalidThreshold",
			IdentityError::InvalidAliasLine { .. } => "InvalidAliasLine",
		}
	}
}

/// Handle to a developer inside one [`IdentityMap`].
///
/// Handles are assigned in (canonical email, canonical name) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DevId(pub u32);

impl DevId {
	pub fn index(self) -> usize {
		self.0 as usize
	}
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeveloperId {
	pub canonical_name: String,
	pub canonical_email: String,
	pub members: BTreeSet<RawAuthor>,
}

impl fmt::Display for DeveloperId {
	fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
		write!(f, "{} <{}>", self.canonical_name, self.canonical_email)
	}
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentityConfig {
	pub similarity_threshold: u8,
	/// Normalized raw email -> normalized canonical email.
	pub aliases: BTreeMap<String, String>,
}

impl Default for IdentityConfig {
	fn default() -> Self {
		Self {
			similarity_threshold: DEFAULT_SIMILARITY,
			aliases: BTreeMap::new(),
		}
	}
}

impl IdentityConfig {
	pub fn with_threshold(similarity_threshold: u8) -> Self {
		Self {
			similarity_threshold,
			..Self::default()
		}
	}

	/// Parses `raw_email -> canonical_email` lines. Blank lines and `#`
	/// comments are ignored.
	pub fn parse_aliases(text: &str) -> Result<BTreeMap<String, String>, IdentityError> {
		let mut aliases = BTreeMap::new();
		for (i, line) in text.lines().enumerate() {
			let line = line.trim();
			if line.is_empty() || line.starts_with('#') {
				continue;
			}
			let (raw, canonical) = line
				.split_once("->")
				.map(|(a, b)| (normalize_email(a), normalize_email(b)))
				.filter(|(a, b)| !a.is_empty() && !b.is_empty())
				.ok_or(IdentityError::InvalidAliasLine { line: i + 1 })?;
			aliases.insert(raw, canonical);
		}
		Ok(aliases)
	}
}

#[derive(Debug, Clone)]
pub struct IdentityMap {
	developers: Vec<DeveloperId>,
	entries: HashMap<RawAuthor, DevId>,
	similarity_threshold: u8,
}

impl IdentityMap {
	pub fn similarity_threshold(&self) -> u8 {
		self.similarity_threshold
	}

	pub fn len(&self) -> usize {
		self.developers.len()
	}

	pub fn is_empty(&self) -> bool {
		self.developers.is_empty()
	}

	pub fn developer(&self, id: DevId) -> &DeveloperId {
		&self.developers[id.index()]
	}

	pub fn id_of(&self, author: &RawAuthor) -> Result<DevId, IdentityError> {
		self.entries
			.get(author)
			.copied()
			.ok_or_else(|| IdentityError::UnknownAuthor(author.clone()))
	}

	pub fn canonical(&self, author: &RawAuthor) -> Result<&DeveloperId, IdentityError> {
		self.id_of(author).map(|id| self.developer(id))
	}

	pub fn developers(&self) -> impl Iterator<Item = (DevId, &DeveloperId)> {
		self.developers
			.iter()
			.enumerate()
			.map(|(i, d)| (DevId(i as u32), d))
	}

	/// Every raw author known to the map.
	pub fn authors(&self) -> impl Iterator<Item = &RawAuthor> {
		self.entries.keys()
	}
}

/// Returns the developer identity that `author` was merged into.
pub fn canonical<'a>(
	map: &'a IdentityMap,
	author: &RawAuthor,
) -> Result<&'a DeveloperId, IdentityError> {
	map.canonical(author)
}

/// Counts change records per raw author; authors that appear only in `blame`
/// are included with a count of zero.
pub fn author_counts(
	records: &[ChangeRecord],
	blame: Option<&BlameSnapshot>,
) -> BTreeMap<RawAuthor, u64> {
	let mut counts = BTreeMap::new();
	for r in records {
		*counts.entry(r.author().clone()).or_insert(0) += 1;
	}
	if let Some(blame) = blame {
		for author in blame.files.values().flatten() {
			counts.entry(author.clone()).or_insert(0);
		}
	}
	counts
}

/// Partitions `authors` into developer identities.
///
/// `authors` maps each raw author to its number of change records; the member
/// with the most records becomes the canonical pair, ties going to the
/// lexicographically smallest email.
pub fn resolve_identities(
	authors: &BTreeMap<RawAuthor, u64>,
	config: &IdentityConfig,
) -> Result<IdentityMap, IdentityError> {
	if authors.is_empty() {
		return Err(IdentityError::EmptyAuthorSet);
	}
	if config.similarity_threshold > 100 {
		return Err(IdentityError::InvalidThreshold(config.similarity_threshold));
	}

	let keyed: Vec<AuthorKey> = authors
		.keys()
		.map(|a| AuthorKey::new(a, &config.aliases))
		.collect();
	let mut sets = UnionFind::new(keyed.len());

	let mut by_email: HashMap<&str, usize> = HashMap::new();
	let mut by_local: HashMap<&str, usize> = HashMap::new();
	let mut by_name: HashMap<&str, usize> = HashMap::new();
	let mut distinct_names: Vec<(usize, &AuthorKey)> = Vec::new();
	for (i, key) in keyed.iter().enumerate() {
		if !key.email.is_empty() {
			if let Some(&j) = by_email.get(key.email.as_str()) {
				sets.union(i, j);
			} else {
				by_email.insert(&key.email, i);
			}
		}
		if key.local_part.chars().count() >= MIN_LOCAL_PART {
			if let Some(&j) = by_local.get(key.local_part.as_str()) {
				sets.union(i, j);
			} else {
				by_local.insert(&key.local_part, i);
			}
		}
		if !key.tokens.is_empty() {
			if let Some(&j) = by_name.get(key.name.as_str()) {
				sets.union(i, j);
			} else {
				by_name.insert(&key.name, i);
				distinct_names.push((i, key));
			}
		}
	}

	let threshold = config.similarity_threshold;
	let edges: Vec<(usize, usize)> = (0..distinct_names.len())
		.into_par_iter()
		.flat_map_iter(|a| {
			let (i, ka) = distinct_names[a];
			distinct_names[a + 1..]
				.iter()
				.filter(move |(_, kb)| token_set_ratio_tokens(&ka.tokens, &kb.tokens) >= threshold)
				.map(move |&(j, _)| (i, j))
		})
		.collect();
	for (i, j) in edges {
		sets.union(i, j);
	}

	let raw: Vec<&RawAuthor> = authors.keys().collect();
	let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
	for i in 0..raw.len() {
		groups.entry(sets.find(i)).or_default().push(i);
	}

	let mut developers: Vec<DeveloperId> = groups
		.into_values()
		.map(|members| {
			let rep = *members
				.iter()
				.max_by(|&&a, &&b| {
					let (ra, rb) = (raw[a], raw[b]);
					authors[ra]
						.cmp(&authors[rb])
						.then_with(|| rb.email.cmp(&ra.email))
						.then_with(|| rb.name.cmp(&ra.name))
				})
				.expect("groups are non-empty");
			DeveloperId {
				canonical_name: raw[rep].name.clone(),
				canonical_email: raw[rep].email.clone(),
				members: members.iter().map(|&m| raw[m].clone()).collect(),
			}
		})
		.collect();
	developers.sort_by(|a, b| {
		(&a.canonical_email, &a.canonical_name).cmp(&(&b.canonical_email, &b.canonical_name))
	});

	let entries = developers
		.iter()
		.enumerate()
		.flat_map(|(i, d)| d.members.iter().map(move |m| (m.clone(), DevId(i as u32))))
		.collect();
	Ok(IdentityMap {
		developers,
		entries,
		similarity_threshold: config.similarity_threshold,
	})
}

struct AuthorKey {
	email: String,
	local_part: String,
	name: String,
	tokens: Vec<String>,
}

impl AuthorKey {
	fn new(author: &RawAuthor, aliases: &BTreeMap<String, String>) -> Self {
		let mut email = normalize_email(&author.email);
		if let Some(canonical) = aliases.get(&email) {
			email = canonical.clone();
		}
		let local_part = email.split('@').next().unwrap_or_default().to_owned();
		let name = normalize_name(&author.name);
		let mut tokens: Vec<String> = name
			.split(|c: char| !c.is_alphanumeric())
			.filter(|t| !t.is_empty())
			.map(str::to_owned)
			.collect();
		tokens.sort();
		tokens.dedup();
		Self {
			email,
			local_part,
			name,
			tokens,
		}
	}
}

fn normalize_email(email: &str) -> String {
	email.trim().to_lowercase()
}

/// Lowercase, trimmed, single-spaced, without diacritics.
pub fn normalize_name(name: &str) -> String {
	let stripped: String = name.nfd().filter(|c| !is_combining_mark(*c)).collect();
	stripped
		.to_lowercase()
		.split_whitespace()
		.collect::<Vec<_>>()
		.join(" ")
}

/// Order-insensitive token-set similarity of two names, 0-100.
///
/// The shared tokens are compared against each side's full token list; if one
/// name's tokens are a subset of the other's the score is 100.
pub fn token_set_ratio(a: &str, b: &str) -> u8 {
	let tokens = |s: &str| {
		let mut t: Vec<String> = normalize_name(s)
			.split(|c: char| !c.is_alphanumeric())
			.filter(|t| !t.is_empty())
			.map(str::to_owned)
			.collect();
		t.sort();
		t.dedup();
		t
	};
	token_set_ratio_tokens(&tokens(a), &tokens(b))
}

/// `a` and `b` must be sorted and deduplicated.
fn token_set_ratio_tokens(a: &[String], b: &[String]) -> u8 {
	if a.is_empty() || b.is_empty() {
		return 0;
	}
	let common: Vec<&str> = a
		.iter()
		.filter(|t| b.binary_search(t).is_ok())
		.map(String::as_str)
		.collect();
	let only_a: Vec<&str> = a
		.iter()
		.filter(|t| b.binary_search(t).is_err())
		.map(String::as_str)
		.collect();
	let only_b: Vec<&str> = b
		.iter()
		.filter(|t| a.binary_search(t).is_err())
		.map(String::as_str)
		.collect();

	let sect = common.join(" ");
	let join = |rest: &[&str]| {
		let tail = rest.join(" ");
		format!("{sect} {tail}").trim().to_owned()
	};
	let with_a = join(&only_a);
	let with_b = join(&only_b);

	[
		ratio(&sect, &with_a),
		ratio(&sect, &with_b),
		ratio(&with_a, &with_b),
	]
	.into_iter()
	.max()
	.unwrap_or(0)
}

/// `round(100 * 2 * lcs / (len_a + len_b))` over characters; 0 if either is empty.
fn ratio(a: &str, b: &str) -> u8 {
	let a: Vec<char> = a.chars().collect();
	let b: Vec<char> = b.chars().collect();
	if a.is_empty() || b.is_empty() {
		return 0;
	}
	let mut prev = vec![0usize; b.len() + 1];
	let mut cur = vec![0usize; b.len() + 1];
	for &ca in &a {
		for (j, &cb) in b.iter().enumerate() {
			cur[j + 1] = if ca == cb {
				prev[j] + 1
			} else {
				prev[j + 1].max(cur[j])
			};
		}
		std::mem::swap(&mut prev, &mut cur);
	}
	let lcs = prev[b.len()];
	let score = 200.0 * lcs as f64 / (a.len() + b.len()) as f64;
	score.round() as u8
}

struct UnionFind {
	parent: Vec<usize>,
	rank: Vec<u8>,
}

impl UnionFind {
	fn new(n: usize) -> Self {
		Self {
			parent: (0..n).collect(),
			rank: vec![0; n],
		}
	}

	fn find(&mut self, mut x: usize) -> usize {
		while self.parent[x] != x {
			self.parent[x] = self.parent[self.parent[x]];
			x = self.parent[x];
		}
		x
	}

	fn union(&mut self, a: usize, b: usize) {
		let (ra, rb) = (self.find(a), self.find(b));
		if ra == rb {
			return;
		}
		match self.rank[ra].cmp(&self.rank[rb]) {
			std::cmp::Ordering::Less => self.parent[ra] = rb,
			std::cmp::Ordering::Greater => self.parent[rb] = ra,
			std::cmp::Ordering::Equal => {
				self.parent[rb] = ra;
				self.rank[ra] += 1;
			}
		}
	}
}
