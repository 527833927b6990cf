// SPDX-License-Identifier: Apache-2.0

//! Per-record contribution metrics: commit count, lines of code changed, and
//! the cosine distance between the words of added and deleted lines.

use crate::ingest::ChangeRecord;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// Multiset of words taken from a set of changed lines.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TokenBag {
	counts: BTreeMap<String, u32>,
}

impl TokenBag {
	pub fn new() -> Self {
		Self::default()
	}

	/// Adds `count` occurrences of `token`. Empty tokens and zero counts are ignored.
	pub fn insert(&mut self, token: &str, count: u32) {
		if token.is_empty() || count == 0 {
			return;
		}
		*self.counts.entry(token.to_owned()).or_insert(0) += count;
	}

	pub fn get(&self, token: &str) -> u32 {
		self.counts.get(token).copied().unwrap_or(0)
	}

	pub fn is_empty(&self) -> bool {
		self.counts.is_empty()
	}

	/// Number of distinct tokens.
	pub fn len(&self) -> usize {
		self.counts.len()
	}

	/// Total number of token occurrences.
	pub fn total(&self) -> u64 {
		self.counts.values().map(|&c| u64::from(c)).sum()
	}

	pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
		self.counts.iter().map(|(k, &v)| (k.as_str(), v))
	}

	fn squared_norm(&self) -> f64 {
		self.counts
			.values()
			.map(|&c| {
				let c = f64::from(c);
				c * c
			})
			.sum()
	}
}

impl<'a> FromIterator<(&'a str, u32)> for TokenBag {
	fn from_iter<I: IntoIterator<Item = (&'a str, u32)>>(iter: I) -> Self {
		let mut bag = TokenBag::new();
		for (token, count) in iter {
			bag.insert(token, count);
		}
		bag
	}
}

/// Splits lines on non-alphanumeric characters and counts the resulting words.
/// Tokens are case-sensitive.
pub fn tokenize<S: AsRef<str>>(lines: &[S]) -> TokenBag {
	let mut bag = TokenBag::new();
	for line in lines {
		add_line_tokens(&mut bag, line.as_ref());
	}
	bag
}

pub(crate) fn add_line_tokens(bag: &mut TokenBag, line: &str) {
	for token in line.split(|c: char| !c.is_alphanumeric()) {
		bag.insert(token, 1);
	}
}

/// The data metric used to score a single (commit, file) change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKind {
	Commits,
	Locc,
	ChangeSizeCos { scale_by_locc: bool },
}

impl MetricKind {
	pub fn name(&self) -> &'static str {
		match self {
			MetricKind::Commits => "commits",
			MetricKind::Locc => "locc",
			MetricKind::ChangeSizeCos { .. } => "cos",
		}
	}
}

impl fmt::Display for MetricKind {
	fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
		match self {
			MetricKind::ChangeSizeCos {
				scale_by_locc: true,
			} => f.write_str("cos*locc"),
			other => f.write_str(other.name()),
		}
	}
}

impl FromStr for MetricKind {
	type Err = String;

	fn from_str(s: &str) -> Result<Self, Self::Err> {
		match s {
			"commits" => Ok(MetricKind::Commits),
			"locc" => Ok(MetricKind::Locc),
			"cos" | "change-size-cos" => Ok(MetricKind::ChangeSizeCos {
				scale_by_locc: false,
			}),
			other => Err(format!("unknown data metric '{other}'")),
		}
	}
}

/// Lines added plus lines deleted.
pub fn locc(record: &ChangeRecord) -> f64 {
	(record.lines_added + record.lines_deleted) as f64
}

/// `1 - cos(added, deleted)` over the union vocabulary of the two bags.
///
/// A pure addition or pure deletion is a maximal change (1.0); a record with no
/// tokens on either side is no change at all (0.0).
pub fn cosine_change(added: &TokenBag, deleted: &TokenBag) -> f64 {
	match (added.is_empty(), deleted.is_empty()) {
		(true, true) => return 0.0,
		(true, false) | (false, true) => return 1.0,
		_ => {}
	}
	// Iterating the intersection in key order keeps the sum identical when
	// the two bags are swapped.
	let (small, large) = if added.len() <= deleted.len() {
		(added, deleted)
	} else {
		(deleted, added)
	};
	let dot: f64 = small
		.counts
		.iter()
		.filter_map(|(token, &a)| {
			large
				.counts
				.get(token)
				.map(|&b| f64::from(a) * f64::from(b))
		})
		.sum();
	// integer counts keep dot and squared norms exact, so identical bags give exactly 1
	let similarity = dot / (added.squared_norm() * deleted.squared_norm()).sqrt();
	(1.0 - similarity).clamp(0.0, 1.0)
}

/// Scalar contribution of one record under `metric`.
pub fn contribution(record: &ChangeRecord, metric: MetricKind) -> f64 {
	match metric {
		MetricKind::Commits => 1.0,
		MetricKind::Locc => locc(record),
		MetricKind::ChangeSizeCos { scale_by_locc } => {
			let distance = cosine_change(&record.added_tokens, &record.deleted_tokens);
			if scale_by_locc {
				distance * locc(record)
			} else {
				distance
			}
		}
	}
}

#[cfg(test)]
mod tests {
	use super::*;
	use crate::ingest::test_support::record;
	use proptest::prelude::*;

	fn bag(items: &[(&str, u32)]) -> TokenBag {
		items.iter().copied().collect()
	}

	#[test]
	fn tokenize_splits_on_punctuation() {
		assert_eq!(
			tokenize(&["int x = 1;"]),
			bag(&[("int", 1), ("x", 1), ("1", 1)])
		);
		assert!(tokenize::<&str>(&[]).is_empty());
		assert_eq!(tokenize(&["foo foo"]), bag(&[("foo", 2)]));
	}

	#[test]
	fn tokenize_is_case_sensitive() {
		assert_eq!(tokenize(&["Foo foo"]), bag(&[("Foo", 1), ("foo", 1)]));
	}

	#[test]
	fn locc_sums_both_sides() {
		assert_eq!(locc(&record("a", "f", 0, 5, 3)), 8.0);
		assert_eq!(locc(&record("a", "f", 0, 10, 0)), 10.0);
		assert_eq!(locc(&record("a", "f", 0, 0, 0)), 0.0);
	}

	#[test]
	fn cosine_change_examples() {
		let added = bag(&[("x", 1), ("y", 1)]);
		let deleted = bag(&[("x", 1), ("z", 1)]);
		// dot = 1, norms = sqrt(2) each
		assert!((cosine_change(&added, &deleted) - 0.5).abs() < 1e-12);
		assert_eq!(cosine_change(&added, &added), 0.0);
		assert_eq!(
			cosine_change(&bag(&[("a", 1), ("b", 1)]), &TokenBag::new()),
			1.0
		);
		assert_eq!(cosine_change(&TokenBag::new(), &bag(&[("a", 1)])), 1.0);
		assert_eq!(cosine_change(&TokenBag::new(), &TokenBag::new()), 0.0);
	}

	#[test]
	fn contribution_per_metric() {
		let mut r = record("a", "f", 0, 5, 3);
		assert_eq!(contribution(&r, MetricKind::Commits), 1.0);
		assert_eq!(contribution(&r, MetricKind::Locc), 8.0);
		r.added_tokens = bag(&[("x", 1), ("y", 1)]);
		r.deleted_tokens = bag(&[("x", 1), ("z", 1)]);
		let cos = contribution(
			&r,
			MetricKind::ChangeSizeCos {
				scale_by_locc: false,
			},
		);
		assert!((cos - 0.5).abs() < 1e-12);
		let scaled = contribution(
			&r,
			MetricKind::ChangeSizeCos {
				scale_by_locc: true,
			},
		);
		assert!((scaled - 4.0).abs() < 1e-12);
	}

	#[test]
	fn rename_is_smaller_than_rewrite() {
		let old = ["let total = price * qty;", "return total + tax;"];
		let renamed = ["let sum = price * qty;", "return sum + tax;"];
		let rewrite = ["for item in cart {", "    emit(item.id);"];
		let rename = cosine_change(&tokenize(&renamed), &tokenize(&old));
		let rewritten = cosine_change(&tokenize(&rewrite), &tokenize(&old));
		assert!(rename < rewritten, "{rename} vs {rewritten}");
	}

	fn arb_bag() -> impl Strategy<Value = TokenBag> {
		proptest::collection::btree_map("[a-e]{1,2}", 1u32..5, 0..8).prop_map(|m| {
			let mut b = TokenBag::new();
			for (k, v) in m {
				b.insert(&k, v);
			}
			b
		})
	}

	proptest! {
		#[test]
		fn cosine_change_symmetric_and_bounded(a in arb_bag(), b in arb_bag()) {
			let ab = cosine_change(&a, &b);
			let ba = cosine_change(&b, &a);
			prop_assert_eq!(ab, ba);
			prop_assert!((0.0..=1.0).contains(&ab));
		}
	}
}
