// SPDX-License-Identifier: Apache-2.0

//! Extraction from real repositories built by the test kit. Expected values
//! come from the kit's own record of each scripted edit.

use busfactor_core::{
	extract_blame, extract_history, load_cache, save_cache, tokenize, CacheManifest, ChangeRecord,
	IngestError, RawAuthor,
};
use busfactor_testkit::{team, Dev, Edit, FixtureRepo};
use std::collections::BTreeMap;

const T0: i64 = 1_600_000_000;

fn raw(dev: &Dev) -> RawAuthor {
	RawAuthor::new(dev.name.clone(), dev.email.clone())
}

fn summary(records: &[ChangeRecord]) -> Vec<(String, String, u64, u64)> {
	records
		.iter()
		.map(|r| {
			(
				r.author().name.clone(),
				r.path.clone(),
				r.lines_added,
				r.lines_deleted,
			)
		})
		.collect()
}

#[test]
fn two_commits_give_two_records() {
	let devs = team();
	let mut repo = FixtureRepo::new(1);
	repo.commit(&devs[0], T0, &[Edit::append("a.c", 3)]);
	repo.commit(&devs[1], T0 + 10, &[Edit::append("a.c", 1)]);
	let records = extract_history(repo.path(), false).unwrap();
	assert_eq!(
		summary(&records),
		[
			(devs[0].name.clone(), "a.c".into(), 3, 0),
			(devs[1].name.clone(), "a.c".into(), 1, 0),
		]
	);
	assert_eq!(records[0].author(), &raw(&devs[0]));
	assert_eq!(records[0].timestamp().timestamp(), T0);
}

#[test]
fn binary_only_commit_gives_no_records() {
	let devs = team();
	let mut repo = FixtureRepo::new(2);
	repo.commit(&devs[0], T0, &[Edit::binary("logo.png")]);
	assert!(extract_history(repo.path(), false).unwrap().is_empty());
}

#[test]
fn new_ten_line_file_counts_ten_additions() {
	let devs = team();
	let mut repo = FixtureRepo::new(3);
	repo.commit(&devs[0], T0, &[Edit::append("src/ten.rs", 10)]);
	let records = extract_history(repo.path(), false).unwrap();
	assert_eq!(records.len(), 1);
	assert_eq!((records[0].lines_added, records[0].lines_deleted), (10, 0));
	assert_eq!(records[0].added_tokens, tokenize(&repo.events[0].added));
	assert!(records[0].deleted_tokens.is_empty());
}

#[test]
fn records_match_scripted_edits() {
	let devs = team();
	let mut repo = FixtureRepo::new(4);
	repo.commit(
		&devs[0],
		T0,
		&[Edit::append("a.c", 6), Edit::append("lib/b.c", 4)],
	);
	repo.commit(
		&devs[1],
		T0 + 60,
		&[Edit::replace("a.c", 2), Edit::delete("lib/b.c", 0)],
	);
	repo.commit(
		&devs[2],
		T0 + 120,
		&[
			Edit::append("a.c", 2),
			Edit::replace("a.c", 0),
			Edit::binary("img.bin"),
		],
	);
	repo.commit(
		&devs[0],
		T0 + 180,
		&[Edit::delete("a.c", 5), Edit::delete("a.c", 1)],
	);

	let records = extract_history(repo.path(), false).unwrap();
	assert_eq!(records.len(), repo.events.len());
	let mut actual: BTreeMap<(String, String), &ChangeRecord> = BTreeMap::new();
	for r in &records {
		actual.insert((r.commit.hash.clone(), r.path.clone()), r);
	}
	for event in &repo.events {
		let r = actual[&(event.commit.clone(), event.path.clone())];
		assert_eq!(r.author(), &raw(&event.author));
		assert_eq!(r.lines_added, event.added.len() as u64, "{event:?}");
		assert_eq!(r.lines_deleted, event.deleted.len() as u64, "{event:?}");
		assert_eq!(r.added_tokens, tokenize(&event.added));
		assert_eq!(r.deleted_tokens, tokenize(&event.deleted));
		assert!(!r.commit.is_merge);
	}
}

#[test]
fn history_is_deterministic() {
	let devs = team();
	let mut repo = FixtureRepo::new(5);
	for i in 0..6 {
		repo.commit(
			&devs[i % 3],
			T0 + i as i64,
			&[Edit::append(&format!("f{}.c", i % 2), 2)],
		);
	}
	let a = extract_history(repo.path(), false).unwrap();
	let b = extract_history(repo.path(), false).unwrap();
	assert_eq!(a, b);
}

#[test]
fn rename_with_small_edit_is_a_small_change() {
	let devs = team();
	let mut repo = FixtureRepo::new(6);
	repo.commit(&devs[0], T0, &[Edit::append("old.c", 20)]);
	repo.git(&["mv", "old.c", "new.c"]);
	std::fs::remove_file(repo.path().join("new.c")).unwrap();
	let content = repo.git(&["show", "HEAD:old.c"]);
	let mut lines: Vec<&str> = content.lines().collect();
	lines[3] = "a completely different line";
	std::fs::write(repo.path().join("new.c"), lines.join("\n") + "\n").unwrap();
	repo.commit(&devs[1], T0 + 10, &[]);

	let records = extract_history(repo.path(), false).unwrap();
	assert_eq!(
		summary(&records),
		[
			(devs[0].name.clone(), "old.c".into(), 20, 0),
			(devs[1].name.clone(), "new.c".into(), 1, 1),
		]
	);
}

#[test]
fn paths_with_spaces_and_unicode_survive() {
	let devs = team();
	let mut repo = FixtureRepo::new(7);
	repo.commit(&devs[0], T0, &[Edit::append("docs/naïve file.txt", 2)]);
	let records = extract_history(repo.path(), false).unwrap();
	assert_eq!(records[0].path, "docs/naïve file.txt");
	let blame = extract_blame(repo.path(), "HEAD", None).unwrap();
	assert!(blame.files.contains_key("docs/naïve file.txt"));
}

#[test]
fn merges_are_optional() {
	let devs = team();
	let mut repo = FixtureRepo::new(8);
	repo.commit(&devs[0], T0, &[Edit::append("base.c", 2)]);
	let main = repo
		.git(&["rev-parse", "--abbrev-ref", "HEAD"])
		.trim()
		.to_owned();
	repo.git(&["checkout", "-q", "-b", "side"]);
	repo.commit(&devs[1], T0 + 10, &[Edit::append("side.c", 3)]);
	repo.git(&["checkout", "-q", &main]);
	repo.commit(&devs[0], T0 + 20, &[Edit::append("main.c", 1)]);
	repo.git(&["merge", "-q", "--no-ff", "-m", "merge side", "side"]);

	let without = extract_history(repo.path(), false).unwrap();
	assert_eq!(without.len(), 3);
	assert!(without.iter().all(|r| !r.commit.is_merge));

	let with = extract_history(repo.path(), true).unwrap();
	let merged: Vec<_> = with.iter().filter(|r| r.commit.is_merge).collect();
	assert_eq!(merged.len(), 1);
	assert_eq!(
		(merged[0].path.as_str(), merged[0].lines_added),
		("side.c", 3)
	);
}

#[test]
fn blame_follows_the_last_writer() {
	let devs = team();
	let mut repo = FixtureRepo::new(9);
	repo.commit(&devs[0], T0, &[Edit::append("f.c", 5)]);
	repo.commit(&devs[1], T0 + 10, &[Edit::replace("f.c", 2)]);
	let blame = extract_blame(repo.path(), "HEAD", None).unwrap();
	let (a, b) = (raw(&devs[0]), raw(&devs[1]));
	assert_eq!(blame.files["f.c"], [a.clone(), a.clone(), b, a.clone(), a]);
	assert_eq!(blame.revision, repo.commits[1]);
}

#[test]
fn blame_matches_scripted_ownership() {
	let devs = team();
	let mut repo = FixtureRepo::new(10);
	repo.commit(
		&devs[0],
		T0,
		&[Edit::append("a.c", 8), Edit::append("sub/b.c", 5)],
	);
	repo.commit(
		&devs[1],
		T0 + 1,
		&[
			Edit::replace("a.c", 1),
			Edit::replace("a.c", 7),
			Edit::append("sub/b.c", 2),
		],
	);
	repo.commit(
		&devs[2],
		T0 + 2,
		&[
			Edit::delete("a.c", 0),
			Edit::binary("sub/x.bin"),
			Edit::append("c.c", 1),
		],
	);
	repo.commit(&devs[3], T0 + 3, &[Edit::replace("sub/b.c", 6)]);

	let blame = extract_blame(repo.path(), "HEAD", None).unwrap();
	let expected: BTreeMap<String, Vec<RawAuthor>> = repo
		.blame_truth()
		.into_iter()
		.map(|(p, ds)| (p, ds.iter().map(raw).collect()))
		.collect();
	assert_eq!(blame.files, expected);

	let sub = extract_blame(repo.path(), "HEAD", Some("sub/")).unwrap();
	assert_eq!(sub.files.keys().collect::<Vec<_>>(), ["sub/b.c"]);

	let older = extract_blame(repo.path(), &repo.commits[0], None).unwrap();
	assert_eq!(older.line_count(), 13);
}

#[test]
fn blame_filter_without_text_files_fails() {
	let devs = team();
	let mut repo = FixtureRepo::new(11);
	repo.commit(
		&devs[0],
		T0,
		&[Edit::append("src/a.c", 2), Edit::binary("assets/a.png")],
	);
	let err = extract_blame(repo.path(), "HEAD", Some("assets")).unwrap_err();
	assert!(matches!(err, IngestError::NoTextFiles(_)), "{err:?}");
	let err = extract_blame(repo.path(), "HEAD", Some("missing/")).unwrap_err();
	assert_eq!(err.name(), "NoTextFiles");
}

#[test]
fn unknown_revision_is_reported() {
	let devs = team();
	let mut repo = FixtureRepo::new(12);
	repo.commit(&devs[0], T0, &[Edit::append("a.c", 1)]);
	let err = extract_blame(repo.path(), "no-such-branch", None).unwrap_err();
	assert_eq!(err.name(), "UnknownRevision");
}

#[test]
fn not_a_repository() {
	let dir = tempfile::tempdir().unwrap();
	let err = extract_history(dir.path(), false).unwrap_err();
	assert_eq!(err.name(), "NotARepository");
	let err = extract_blame(&dir.path().join("missing"), "HEAD", None).unwrap_err();
	assert_eq!(err.name(), "NotARepository");
}

#[test]
fn empty_repository() {
	let repo = FixtureRepo::new(13);
	assert_eq!(
		extract_history(repo.path(), false).unwrap_err().name(),
		"EmptyRepository"
	);
	assert_eq!(
		extract_blame(repo.path(), "HEAD", None).unwrap_err().name(),
		"EmptyRepository"
	);
}

#[test]
fn cache_round_trip_from_real_repository() {
	let devs = team();
	let mut repo = FixtureRepo::new(14);
	for i in 0..10 {
		repo.commit(
			&devs[i % 4],
			T0 + i as i64 * 100,
			&[Edit::append(&format!("d{}/f.c", i % 3), 3)],
		);
	}
	let records = extract_history(repo.path(), false).unwrap();
	let blame = extract_blame(repo.path(), "HEAD", None).unwrap();
	let dir = tempfile::tempdir().unwrap();
	let cache = dir.path().join("cache");
	save_cache(
		&records,
		Some(&blame),
		&CacheManifest::new("fixture", records.len()),
		&cache,
	)
	.unwrap();
	let loaded = load_cache(&cache).unwrap();
	assert_eq!(loaded.records, records);
	assert_eq!(loaded.blame.as_ref(), Some(&blame));
	assert_eq!(loaded.manifest.record_count, 10);
	assert_eq!(
		loaded.manifest.blame_revision.as_deref(),
		Some(blame.revision.as_str())
	);
}
