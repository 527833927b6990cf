// SPDX-License-Identifier: Apache-2.0

//! `--config FILE` support.
//!
//! The file is TOML. Top-level keys apply to every subcommand that has the
//! flag and a table named after a subcommand (`[cst]`, `[rig]`, ...) applies
//! to that one only.
//! Each key is a long flag name:
//!
//! ```toml
//! format = "json"
//!
//! [cst]
//! metric = "locc"
//! cst-metric = "mul-equal"
//! exclude = ["vendor/**", "third_party/**"]
//! redact = true
//! ```
//!
//! Entries become ordinary arguments placed before the ones typed on the
//! command line. A flag given on the command line replaces the file's value
//! entirely, including list-valued flags such as `--exclude`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use thiserror::Error;
use toml::Value;

pub const SUBCOMMANDS: &[&str] = &["ingest", "cst", "rig", "trend", "compare"];

#[derive(Debug, Error)]
pub enum ConfigError {
	#[error("cannot read config file {path}: {source}")]
	Read {
		path: String,
		source: std::io::Error,
	},

	#[error("config file {path}: {detail}")]
	Invalid { path: String, detail: String },
}

/// Finds the value of `--config` in `argv`.
pub fn config_path(argv: &[String]) -> Option<String> {
	let mut iter = argv.iter();
	while let Some(arg) = iter.next() {
		if arg == "--" {
			break;
		}
		if arg == "--config" {
			return iter.next().cloned();
		}
		if let Some(v) = arg.strip_prefix("--config=") {
			return Some(v.to_owned());
		}
	}
	None
}

/// Long flag names accepted by each subcommand.
pub type FlagTable = BTreeMap<String, BTreeSet<String>>;

/// Returns `argv` with the entries of the config file inserted right after the
/// subcommand name. A top-level key is skipped for subcommands without that
/// flag, and is an error if no subcommand has it.
pub fn expand(argv: &[String], path: &Path, flags: &FlagTable) -> Result<Vec<String>, ConfigError> {
	let display = path.display().to_string();
	let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
		path: display.clone(),
		source,
	})?;
	let table: toml::Table = text
		.parse()
		.map_err(|e: toml::de::Error| ConfigError::Invalid {
			path: display.clone(),
			detail: e.message().to_owned(),
		})?;

	let Some(sub_pos) = argv.iter().position(|a| SUBCOMMANDS.contains(&a.as_str())) else {
		return Ok(argv.to_vec());
	};
	let subcommand = argv[sub_pos].as_str();
	let given = given_flags(&argv[sub_pos + 1..]);

	let mut inserted = Vec::new();
	let invalid = |detail: String| ConfigError::Invalid {
		path: display.clone(),
		detail,
	};
	for (key, value) in &table {
		match value {
			Value::Table(section) => {
				if !SUBCOMMANDS.contains(&key.as_str()) {
					return Err(invalid(format!("unknown section [{key}]")));
				}
				if key == subcommand {
					for (k, v) in section {
						push_flag(&mut inserted, k, v, &given).map_err(&invalid)?;
					}
				}
			}
			v => {
				if !flags.values().any(|f| f.contains(key)) {
					return Err(invalid(format!("unknown key '{key}'")));
				}
				if flags.get(subcommand).is_some_and(|f| f.contains(key)) {
					push_flag(&mut inserted, key, v, &given).map_err(&invalid)?;
				}
			}
		}
	}

	let mut out = argv[..=sub_pos].to_vec();
	out.extend(inserted);
	out.extend_from_slice(&argv[sub_pos + 1..]);
	Ok(out)
}

fn given_flags(args: &[String]) -> BTreeSet<String> {
	args.iter()
		.take_while(|a| a.as_str() != "--")
		.filter_map(|a| a.strip_prefix("--"))
		.map(|a| a.split('=').next().unwrap_or(a).to_owned())
		.collect()
}

fn push_flag(
	out: &mut Vec<String>,
	key: &str,
	value: &Value,
	given: &BTreeSet<String>,
) -> Result<(), String> {
	if key == "config" {
		return Err("a config file cannot name another config file".into());
	}
	if given.contains(key) {
		return Ok(());
	}
	let flag = format!("--{key}");
	match value {
		Value::Boolean(true) => out.push(flag),
		Value::Boolean(false) => {}
		Value::Array(items) => {
			for item in items {
				out.push(flag.clone());
				out.push(scalar(key, item)?);
			}
		}
		other => {
			out.push(flag);
			out.push(scalar(key, other)?);
		}
	}
	Ok(())
}

fn scalar(key: &str, value: &Value) -> Result<String, String> {
	match value {
		Value::String(s) => Ok(s.clone()),
		Value::Integer(i) => Ok(i.to_string()),
		Value::Float(f) => Ok(f.to_string()),
		_ => Err(format!("unsupported value for '{key}'")),
	}
}
