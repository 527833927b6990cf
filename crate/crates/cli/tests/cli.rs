// SPDX-License-Identifier: Apache-2.0

//! End-to-end runs of the `busfactor` binary on scripted repositories.

use busfactor_testkit::{ownership_repo, team, Edit, FixtureRepo};
use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

const T0: i64 = 1_600_000_000;

fn busfactor(args: &[&str]) -> Output {
	busfactor_env(args, &[])
}

fn busfactor_env(args: &[&str], env: &[(&str, &str)]) -> Output {
	let mut cmd = Command::new(env!("CARGO_BIN_EXE_busfactor"));
	cmd.args(args).env_remove("BUSFACTOR_CACHE_DIR");
	for (k, v) in env {
		cmd.env(k, v);
	}
	cmd.output().expect("run busfactor")
}

fn stdout(out: &Output) -> String {
	String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
	String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(out: &Output) -> Value {
	assert!(out.status.success(), "stderr: {}", stderr(out));
	serde_json::from_slice(&out.stdout).expect("valid JSON")
}

fn path(p: &Path) -> &str {
	p.to_str().unwrap()
}

/// A writes three lines, then B one more: LOCC shares 0.75 and 0.25.
fn three_to_one() -> FixtureRepo {
	let devs = team();
	let mut repo = FixtureRepo::new(1);
	repo.commit(&devs[0], T0, &[Edit::append("f.c", 3)]);
	repo.commit(&devs[1], T0 + 60, &[Edit::append("f.c", 1)]);
	repo
}

fn without_timestamps(mut v: Value) -> Value {
	let m = v["manifest"].as_object_mut().unwrap();
	m.remove("started_at");
	m.remove("finished_at");
	v
}

#[test]
fn cst_json_on_three_to_one_fixture() {
	let repo = three_to_one();
	let v = json(&busfactor(&[
		"cst",
		"--repo",
		path(repo.path()),
		"--metric",
		"locc",
		"--cst-metric",
		"mul-equal",
		"--format",
		"json",
	]));
	assert_eq!(v["bus_factor"], 2);
	assert_eq!(v["developer_count"], 2);
	let devs = v["developers"].as_array().unwrap();
	assert_eq!(devs[0]["email"], "alice@example.com");
	assert_eq!(devs[0]["share"], 0.75);
	assert_eq!(devs[0]["role"], "primary");
	assert_eq!(devs[1]["share"], 0.25);
	assert_eq!(devs[1]["role"], "secondary");
	assert_eq!(v["thresholds"]["primary"], 0.5);
	assert_eq!(v["manifest"]["tool_version"], env!("CARGO_PKG_VERSION"));
	assert!(v["manifest"]["repo_fingerprint"]
		.as_str()
		.unwrap()
		.ends_with(&repo.commits[1]));
	assert!(v["manifest"]["command_line"]
		.as_str()
		.unwrap()
		.contains("--cst-metric mul-equal"));
}

#[test]
fn json_round_trips_and_matches_csv() {
	let repo = three_to_one();
	let base = [
		"cst",
		"--repo",
		path(repo.path()),
		"--metric",
		"commits",
		"--cst-metric",
		"non-consecutive",
	];
	let out = busfactor(&[&base[..], &["--format", "json"]].concat());
	let v = json(&out);
	let reparsed: Value = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
	assert_eq!(v, reparsed);

	let csv_out = busfactor(&[&base[..], &["--format", "csv"]].concat());
	assert!(csv_out.status.success());
	let text = stdout(&csv_out);
	let mut reader = csv::ReaderBuilder::new()
		.comment(Some(b'#'))
		.from_reader(text.as_bytes());
	let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
	assert_eq!(rows.len(), v["developers"].as_array().unwrap().len());
	for (row, dev) in rows.iter().zip(v["developers"].as_array().unwrap()) {
		assert_eq!(&row[2], dev["email"].as_str().unwrap());
		assert_eq!(
			row[3].parse::<f64>().unwrap(),
			dev["share"].as_f64().unwrap()
		);
	}
	assert!(text.contains(&format!("# bus_factor={}\n", v["bus_factor"])));
}

#[test]
fn rendering_is_deterministic() {
	let repo = three_to_one();
	let args = [
		"cst",
		"--repo",
		path(repo.path()),
		"--metric",
		"cos",
		"--cst-metric",
		"weighted-non-consecutive",
		"--format",
		"json",
	];
	let a = without_timestamps(json(&busfactor(&args)));
	let b = without_timestamps(json(&busfactor(&args)));
	assert_eq!(
		serde_json::to_string(&a).unwrap(),
		serde_json::to_string(&b).unwrap()
	);
}

#[test]
fn unknown_flag_is_a_usage_error() {
	let out = busfactor(&["cst", "--bogus"]);
	assert_eq!(out.status.code(), Some(2));
	let err = stderr(&out);
	let first = err.lines().next().unwrap();
	assert!(first.starts_with("ERROR Usage: "), "{err}");
	assert!(first.contains("--bogus"), "{err}");
	assert!(err.contains("Usage: busfactor cst"), "{err}");
	assert!(out.stdout.is_empty());
}

#[test]
fn invalid_values_are_usage_errors() {
	for args in [
		&[
			"cst",
			"--repo",
			".",
			"--metric",
			"stars",
			"--cst-metric",
			"mul-equal",
		][..],
		&[
			"cst",
			"--repo",
			".",
			"--metric",
			"locc",
			"--cst-metric",
			"mul-equal",
			"--format",
			"yaml",
		],
		&[
			"cst",
			"--repo",
			".",
			"--metric",
			"locc",
			"--cst-metric",
			"mul-equal",
			"--similarity",
			"101",
		],
		&[
			"cst",
			"--repo",
			".",
			"--cache",
			".",
			"--metric",
			"locc",
			"--cst-metric",
			"mul-equal",
		],
		&[
			"cst",
			"--repo",
			".",
			"--metric",
			"locc",
			"--cst-metric",
			"mul-equal",
			"--from",
			"2020",
		],
		&["compare", "--bf", "-1", "--reference", "3"],
		&[],
	] {
		let out = busfactor(args);
		assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
		assert!(stderr(&out).starts_with("ERROR Usage: "), "{args:?}");
	}
}

#[test]
fn help_and_version_succeed() {
	let out = busfactor(&["--help"]);
	assert!(out.status.success());
	assert!(stdout(&out).contains("trend"));
	let out = busfactor(&["--version"]);
	assert!(out.status.success());
	assert!(stdout(&out).starts_with("busfactor "));
}

#[test]
fn domain_errors_exit_one_with_one_line() {
	let repo = three_to_one();
	let out = busfactor(&[
		"cst",
		"--repo",
		path(repo.path()),
		"--metric",
		"locc",
		"--cst-metric",
		"mul-equal",
		"--dir",
		"nothing/here",
	]);
	assert_eq!(out.status.code(), Some(1));
	assert_eq!(
		stderr(&out),
		"ERROR EmptyScope: no contributions in scope\n"
	);

	let dir = tempfile::tempdir().unwrap();
	let out = busfactor(&["rig", "--repo", path(dir.path())]);
	assert_eq!(out.status.code(), Some(1));
	assert!(stderr(&out).starts_with("ERROR NotARepository: "));
	assert_eq!(stderr(&out).lines().count(), 1);

	let out = busfactor(&[
		"cst",
		"--repo",
		path(repo.path()),
		"--metric",
		"locc",
		"--cst-metric",
		"mul-equal",
		"--from",
		"2021",
		"--to",
		"2019",
	]);
	assert_eq!(out.status.code(), Some(1));
	assert!(stderr(&out).starts_with("ERROR InvalidTimeRange: "));

	let out = busfactor(&["rig", "--repo", path(repo.path()), "--line-abandon", "1.5"]);
	assert_eq!(out.status.code(), Some(1));
	assert!(stderr(&out).starts_with("ERROR InvalidConfig: "));

	let out = busfactor(&[
		"cst",
		"--repo",
		path(repo.path()),
		"--metric",
		"locc",
		"--cst-metric",
		"mul-equal",
		"--exclude",
		"[oops",
	]);
	assert_eq!(out.status.code(), Some(1));
	assert!(stderr(&out).starts_with("ERROR InvalidGlob: "));
}

#[test]
fn rig_exhaustive_on_one_file_each() {
	let devs = team();
	let repo = ownership_repo(&[&devs[0], &devs[1], &devs[2]], 4);
	let v = json(&busfactor(&[
		"rig",
		"--repo",
		path(repo.path()),
		"--exhaustive",
		"--format",
		"json",
	]));
	assert_eq!(v["bus_factor"], 2);
	assert_eq!(v["runs"][0]["bf_set"].as_array().unwrap().len(), 2);
	assert_eq!(v["population"], 3);
	assert_eq!(v["manifest"]["seed"], 0);
}

#[test]
fn rig_repeat_reports_summary() {
	let devs = team();
	let repo = ownership_repo(&[&devs[0], &devs[1], &devs[2]], 4);
	let v = json(&busfactor(&[
		"rig",
		"--repo",
		path(repo.path()),
		"--samples",
		"1",
		"--runs",
		"6",
		"--seed",
		"9",
		"--format",
		"json",
	]));
	let runs = v["runs"].as_array().unwrap();
	assert_eq!(runs.len(), 6);
	let seeds: Vec<u64> = runs.iter().map(|r| r["seed"].as_u64().unwrap()).collect();
	assert_eq!(seeds, [9, 10, 11, 12, 13, 14]);
	for r in runs {
		assert!(matches!(r["bus_factor"].as_u64(), Some(2 | 3)));
	}
	assert_eq!(v["summary"]["runs"], 6);
	assert_eq!(v["summary"]["failed_runs"], 0);
	assert!(v["summary"]["min"].as_u64().unwrap() >= 2);
}

#[test]
fn rig_scope_and_exclusions() {
	let devs = team();
	let mut repo = FixtureRepo::new(3);
	repo.commit(
		&devs[0],
		T0,
		&[Edit::append("core/a.c", 4), Edit::append("vendor/x.c", 40)],
	);
	repo.commit(
		&devs[1],
		T0 + 1,
		&[Edit::append("core/b.c", 4), Edit::append("vendor/y.c", 40)],
	);
	let v = json(&busfactor(&[
		"rig",
		"--repo",
		path(repo.path()),
		"--dir",
		"core",
		"--exhaustive",
		"--format",
		"json",
	]));
	assert_eq!(
		(v["file_count"].as_u64(), v["bus_factor"].as_u64()),
		(Some(2), Some(1))
	);
	let v = json(&busfactor(&[
		"rig",
		"--repo",
		path(repo.path()),
		"--exclude",
		"vendor/**",
		"--exhaustive",
		"--format",
		"json",
	]));
	assert_eq!(v["file_count"], 2);
	let out = busfactor(&["rig", "--repo", path(repo.path()), "--dir", "docs"]);
	assert!(stderr(&out).starts_with("ERROR NoTextFiles: "));
}

#[test]
fn trend_csv_has_one_row_per_year() {
	let devs = team();
	let mut repo = FixtureRepo::new(4);
	// 2021, 2022 and 2024 have commits; 2023 is quiet.
	repo.commit(&devs[0], 1_609_459_300, &[Edit::append("a.c", 4)]);
	repo.commit(&devs[0], 1_640_995_300, &[Edit::append("a.c", 2)]);
	repo.commit(&devs[1], 1_640_995_400, &[Edit::append("a.c", 2)]);
	repo.commit(&devs[2], 1_704_067_300, &[Edit::append("b.c", 1)]);
	let out = busfactor(&[
		"trend",
		"--repo",
		path(repo.path()),
		"--metric",
		"locc",
		"--cst-metric",
		"mul-equal",
		"--from-year",
		"2021",
		"--to-year",
		"2024",
		"--format",
		"csv",
	]);
	assert!(out.status.success(), "{}", stderr(&out));
	let text = stdout(&out);
	let table: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
	assert_eq!(
		table,
		[
			"year,bus_factor,total_developers,bf_percentage",
			"2021,1,1,100.000000",
			"2022,2,2,100.000000",
			"2023,0,0,0.000000",
			"2024,1,1,100.000000",
		]
	);

	let v = json(&busfactor(&[
		"trend",
		"--repo",
		path(repo.path()),
		"--metric",
		"locc",
		"--cst-metric",
		"mul-equal",
		"--from-year",
		"2023",
		"--to-year",
		"2023",
		"--cumulative",
		"--format",
		"json",
	]));
	assert_eq!(v["mode"], "cumulative");
	assert_eq!(v["points"][0]["total_developers"], 2);
}

#[test]
fn time_window_and_directory_scope() {
	let devs = team();
	let mut repo = FixtureRepo::new(5);
	repo.commit(&devs[0], 1_577_836_900, &[Edit::append("src/a.c", 5)]); // 2020-01
	repo.commit(&devs[1], 1_583_020_900, &[Edit::append("src/a.c", 5)]); // 2020-03
	repo.commit(&devs[2], 1_583_021_000, &[Edit::append("docs/x.md", 5)]); // 2020-03
	let run = |extra: &[&str]| {
		let mut args = vec![
			"cst",
			"--repo",
			path(repo.path()),
			"--metric",
			"locc",
			"--cst-metric",
			"mul-equal",
			"--format",
			"json",
		];
		args.extend_from_slice(extra);
		json(&busfactor(&args))
	};
	assert_eq!(run(&[])["developer_count"], 3);
	let jan = run(&["--from", "2020-01", "--to", "2020-01"]);
	assert_eq!(
		(jan["developer_count"].as_u64(), jan["bus_factor"].as_u64()),
		(Some(1), Some(1))
	);
	assert_eq!(jan["config"]["time_range"], "2020-01..2020-01");
	let src = run(&["--dir", "src/"]);
	assert_eq!(src["developer_count"], 2);
	assert_eq!(src["config"]["scope"], "src/");
	assert_eq!(run(&["--exclude", "docs/**"])["developer_count"], 2);
}

#[test]
fn redaction_hides_identities() {
	let repo = three_to_one();
	let out = busfactor(&[
		"cst",
		"--repo",
		path(repo.path()),
		"--metric",
		"locc",
		"--cst-metric",
		"mul-equal",
		"--format",
		"json",
		"--redact",
	]);
	let text = stdout(&out);
	assert!(!text.contains("alice") && !text.contains("Alice"), "{text}");
	let v = json(&out);
	let pseudonym = v["developers"][0]["email"].as_str().unwrap().to_owned();
	assert!(pseudonym.starts_with("dev-"));
	let again = json(&busfactor(&[
		"cst",
		"--repo",
		path(repo.path()),
		"--metric",
		"commits",
		"--cst-metric",
		"mul-equal",
		"--format",
		"json",
		"--redact",
	]));
	let emails: Vec<&str> = again["developers"]
		.as_array()
		.unwrap()
		.iter()
		.map(|d| d["email"].as_str().unwrap())
		.collect();
	assert!(emails.contains(&pseudonym.as_str()), "{emails:?}");
}

#[test]
fn alias_file_merges_identities() {
	let devs = team();
	let mut repo = FixtureRepo::new(6);
	let alt = busfactor_testkit::Dev::new("A. Anders (laptop)", "aa-laptop@example.net");
	repo.commit(&devs[0], T0, &[Edit::append("a.c", 2)]);
	repo.commit(&alt, T0 + 1, &[Edit::append("a.c", 2)]);
	let base = [
		"cst",
		"--repo",
		path(repo.path()),
		"--metric",
		"locc",
		"--cst-metric",
		"mul-equal",
		"--format",
		"json",
	];
	assert_eq!(json(&busfactor(&base))["developer_count"], 2);

	let dir = tempfile::tempdir().unwrap();
	let aliases = dir.path().join("aliases.txt");
	std::fs::write(
		&aliases,
		"# laptop commits\naa-laptop@example.net -> alice@example.com\n",
	)
	.unwrap();
	let v = json(&busfactor(
		&[&base[..], &["--alias-file", path(&aliases)]].concat(),
	));
	assert_eq!(v["developer_count"], 1);
	assert_eq!(v["developers"][0]["share"], 1.0);
}

#[test]
fn ingest_then_analyze_from_cache() {
	let repo = three_to_one();
	let dir = tempfile::tempdir().unwrap();
	let cache = dir.path().join("cache");
	let out = busfactor(&[
		"ingest",
		"--repo",
		path(repo.path()),
		"--cache",
		path(&cache),
		"--format",
		"json",
	]);
	let v = json(&out);
	assert_eq!(
		(
			v["records"].as_u64(),
			v["commits"].as_u64(),
			v["blame_lines"].as_u64()
		),
		(Some(2), Some(2), Some(4))
	);

	let args = |src: &str, p: &str| {
		without_timestamps(json(&busfactor(&[
			"cst",
			src,
			p,
			"--metric",
			"locc",
			"--cst-metric",
			"mul-equal",
			"--format",
			"json",
		])))
	};
	let mut from_repo = args("--repo", path(repo.path()));
	let mut from_cache = args("--cache", path(&cache));
	from_repo.as_object_mut().unwrap().remove("manifest");
	from_cache.as_object_mut().unwrap().remove("manifest");
	assert_eq!(from_repo, from_cache);

	let rig = json(&busfactor(&[
		"rig",
		"--cache",
		path(&cache),
		"--exhaustive",
		"--format",
		"json",
	]));
	assert_eq!(rig["revision"], repo.commits[1].as_str());
	let out = busfactor(&["rig", "--cache", path(&cache), "--rev", "0123abc"]);
	assert!(stderr(&out).starts_with("ERROR RevisionMismatch: "));
}

#[test]
fn ingest_uses_cache_dir_from_environment() {
	let repo = three_to_one();
	let out = busfactor(&["ingest", "--repo", path(repo.path())]);
	assert_eq!(out.status.code(), Some(2));
	assert!(stderr(&out).contains("BUSFACTOR_CACHE_DIR"));

	let dir = tempfile::tempdir().unwrap();
	let out = busfactor_env(
		&["ingest", "--repo", path(repo.path()), "--format", "json"],
		&[("BUSFACTOR_CACHE_DIR", path(dir.path()))],
	);
	let v = json(&out);
	let cache = v["cache_path"].as_str().unwrap();
	assert!(cache.starts_with(path(dir.path())));
	assert!(Path::new(cache).join("manifest").is_file());
}

#[test]
fn corrupt_cache_is_reported() {
	let repo = three_to_one();
	let dir = tempfile::tempdir().unwrap();
	let cache = dir.path().join("c");
	assert!(busfactor(&[
		"ingest",
		"--repo",
		path(repo.path()),
		"--cache",
		path(&cache)
	])
	.status
	.success());
	let records = cache.join("records.bin");
	let mut bytes = std::fs::read(&records).unwrap();
	bytes.truncate(bytes.len() - 3);
	std::fs::write(&records, bytes).unwrap();
	let out = busfactor(&[
		"cst",
		"--cache",
		path(&cache),
		"--metric",
		"locc",
		"--cst-metric",
		"mul-equal",
	]);
	assert_eq!(out.status.code(), Some(1));
	assert!(stderr(&out).starts_with("ERROR CorruptCache: "));
}

#[test]
fn config_file_supplies_defaults() {
	let repo = three_to_one();
	let dir = tempfile::tempdir().unwrap();
	let config = dir.path().join("busfactor.toml");
	std::fs::write(
		&config,
		"format = \"json\"\n\n[cst]\nmetric = \"locc\"\ncst-metric = \"last-change\"\n",
	)
	.unwrap();

	let v = json(&busfactor(&[
		"cst",
		"--config",
		path(&config),
		"--repo",
		path(repo.path()),
	]));
	assert_eq!(v["config"]["cst_metric"], "last-change");
	assert_eq!(v["developers"][0]["email"], "bruno@example.org");

	let v = json(&busfactor(&[
		"cst",
		"--config",
		path(&config),
		"--repo",
		path(repo.path()),
		"--cst-metric",
		"mul-equal",
	]));
	assert_eq!(v["config"]["cst_metric"], "mul-equal");

	std::fs::write(&config, "[plot]\nwidth = 3\n").unwrap();
	let out = busfactor(&[
		"cst",
		"--config",
		path(&config),
		"--repo",
		path(repo.path()),
	]);
	assert_eq!(out.status.code(), Some(2));
}

#[test]
fn out_flag_writes_file() {
	let dir = tempfile::tempdir().unwrap();
	let target = dir.path().join("report.txt");
	let out = busfactor(&[
		"compare",
		"--bf",
		"10",
		"--reference",
		"17",
		"--out",
		path(&target),
	]);
	assert!(out.status.success());
	assert!(out.stdout.is_empty());
	assert_eq!(std::fs::read_to_string(&target).unwrap(), "7\n");
	let v = json(&busfactor(&[
		"compare",
		"--bf",
		"29",
		"--reference",
		"17",
		"--format",
		"json",
	]));
	assert_eq!(v["error"], 12);
}

#[test]
fn run_cli_in_process() {
	let code = busfactor_cli::run_cli(["busfactor", "compare", "--bf", "1", "--reference", "1"]);
	assert_eq!(code, 0);
	let mut out = Vec::new();
	let mut err = Vec::new();
	let argv: Vec<String> = ["busfactor", "nope"]
		.iter()
		.map(|s| s.to_string())
		.collect();
	assert_eq!(busfactor_cli::run_with_io(&argv, &mut out, &mut err), 2);
	assert!(String::from_utf8(err).unwrap().starts_with("ERROR Usage: "));
}
