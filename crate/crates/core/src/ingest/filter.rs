// SPDX-License-Identifier: Apache-2.0

//! Removal of vendored and third-party code by path pattern.

use super::{ChangeRecord, IngestError};
use globset::{GlobBuilder, GlobSet, GlobSetBuilder};

/// Compiled set of exclusion globs. `*` does not cross `/`; `**` does.
#[derive(Debug, Clone)]
pub struct ExcludeSet {
	set: GlobSet,
	empty: bool,
}

impl ExcludeSet {
	pub fn new<S: AsRef<str>>(globs: &[S]) -> Result<Self, IngestError> {
		let mut builder = GlobSetBuilder::new();
		for pattern in globs {
			let pattern = pattern.as_ref();
			let glob = GlobBuilder::new(pattern)
				.literal_separator(true)
				.build()
				.map_err(|e| IngestError::InvalidGlob {
					pattern: pattern.to_owned(),
					reason: e.kind().to_string(),
				})?;
			builder.add(glob);
		}
		let set = builder.build().map_err(|e| IngestError::InvalidGlob {
			pattern: globs
				.iter()
				.map(|g| g.as_ref())
				.collect::<Vec<_>>()
				.join(","),
			reason: e.to_string(),
		})?;
		Ok(Self {
			set,
			empty: globs.is_empty(),
		})
	}

	pub fn is_excluded(&self, path: &str) -> bool {
		!self.empty && self.set.is_match(path)
	}
}

/// Drops records whose path matches any of `exclude_globs`, preserving order.
pub fn filter_external<S: AsRef<str>>(
	records: &[ChangeRecord],
	exclude_globs: &[S],
) -> Result<Vec<ChangeRecord>, IngestError> {
	let excludes = ExcludeSet::new(exclude_globs)?;
	Ok(records
		.iter()
		.filter(|r| !excludes.is_excluded(&r.path))
		.cloned()
		.collect())
}

#[cfg(test)]
mod tests {
	use super::*;
	use crate::ingest::test_support::record;

	fn paths(records: &[ChangeRecord]) -> Vec<&str> {
		records.iter().map(|r| r.path.as_str()).collect()
	}

	#[test]
	fn removes_matching_directories() {
		let records = vec![
			record("a", "src/a.c", 1, 1, 0),
			record("a", "external/lib.c", 2, 1, 0),
		];
		let kept = filter_external(&records, &["external/**"]).unwrap();
		assert_eq!(paths(&kept), ["src/a.c"]);
	}

	#[test]
	fn empty_globs_are_identity() {
		let records = vec![record("a", "x.c", 1, 1, 0), record("b", "y.c", 2, 1, 0)];
		let kept = filter_external::<&str>(&records, &[]).unwrap();
		assert_eq!(kept, records);
	}

	#[test]
	fn nested_vendor_directory() {
		let records = vec![
			record("a", "x/vendor/y.c", 1, 1, 0),
			record("a", "x/y.c", 2, 1, 0),
		];
		let kept = filter_external(&records, &["**/vendor/**"]).unwrap();
		assert_eq!(paths(&kept), ["x/y.c"]);
	}

	#[test]
	fn star_does_not_cross_directories() {
		let records = vec![
			record("a", "ext/a/b.c", 1, 1, 0),
			record("a", "ext/c.c", 2, 1, 0),
		];
		let kept = filter_external(&records, &["ext/*"]).unwrap();
		assert_eq!(paths(&kept), ["ext/a/b.c"]);
	}

	#[test]
	fn invalid_glob_is_rejected() {
		let err = filter_external(&[], &["src/[a-"]).unwrap_err();
		assert_eq!(err.name(), "InvalidGlob");
	}

	#[test]
	fn idempotent() {
		let records: Vec<_> = ["a/x.c", "vendor/y.c", "b/vendor/z.c", "c.c"]
			.iter()
			.enumerate()
			.map(|(i, p)| record("a", p, i as i64, 1, 0))
			.collect();
		let globs = ["vendor/**", "**/vendor/**"];
		let once = filter_external(&records, &globs).unwrap();
		let twice = filter_external(&once, &globs).unwrap();
		assert_eq!(once, twice);
	}
}
