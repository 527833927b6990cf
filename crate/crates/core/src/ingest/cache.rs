// SPDX-License-Identifier: Apache-2.0

//! On-disk cache of ingested history and blame data.
//!
//! A cache is a directory holding:
//!
//! * `manifest`: UTF-8 `key=value` lines.
//! * `records.bin` / `blame.bin`: a 4-byte magic, the schema version (u32 LE),
//!   the entry count (u64 LE), length-prefixed entries (u32 LE length), and a
//!   trailing SHA-256 of everything before it.

use super::{BlameSnapshot, ChangeRecord, CommitMeta, IngestError, RawAuthor};
use crate::metrics::TokenBag;
use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::Arc;

/// Bumped on any change to the on-disk layout.
pub const SCHEMA_VERSION: u32 = 1;

const MANIFEST_FILE: &str = "manifest";
const RECORDS_FILE: &str = "records.bin";
const BLAME_FILE: &str = "blame.bin";
const RECORDS_MAGIC: &[u8; 4] = b"BFCR";
const BLAME_MAGIC: &[u8; 4] = b"BFCB";
const CHECKSUM_LEN: usize = 32;
const HEADER_LEN: usize = 4 + 4 + 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheManifest {
	pub repo_fingerprint: String,
	pub created_at: DateTime<Utc>,
	pub record_count: u64,
	pub schema_version: u32,
	/// Revision of the cached blame snapshot, if one was stored.
	pub blame_revision: Option<String>,
}

impl CacheManifest {
	pub fn new(repo_fingerprint: impl Into<String>, record_count: usize) -> Self {
		Self {
			repo_fingerprint: repo_fingerprint.into(),
			created_at: Utc::now(),
			record_count: record_count as u64,
			schema_version: SCHEMA_VERSION,
			blame_revision: None,
		}
	}

	fn render(&self) -> String {
		let mut out = format!(
			"schema_version={}\nrepo_fingerprint={}\ncreated_at={}\nrecord_count={}\n",
			self.schema_version,
			self.repo_fingerprint,
			self.created_at.to_rfc3339_opts(SecondsFormat::Nanos, true),
			self.record_count,
		);
		if let Some(rev) = &self.blame_revision {
			out.push_str(&format!("blame_revision={rev}\n"));
		}
		out
	}

	fn parse(text: &str) -> Result<Self, IngestError> {
		let fields: HashMap<&str, &str> = text
			.lines()
			.filter(|l| !l.trim().is_empty())
			.filter_map(|l| l.split_once('='))
			.collect();
		let get = |key: &str| {
			fields
				.get(key)
				.copied()
				.ok_or_else(|| IngestError::CorruptCache(format!("manifest lacks '{key}'")))
		};
		let corrupt =
			|key: &str| IngestError::CorruptCache(format!("bad manifest value for '{key}'"));
		Ok(Self {
			schema_version: get("schema_version")?
				.parse()
				.map_err(|_| corrupt("schema_version"))?,
			repo_fingerprint: get("repo_fingerprint")?.to_owned(),
			created_at: DateTime::parse_from_rfc3339(get("created_at")?)
				.map_err(|_| corrupt("created_at"))?
				.with_timezone(&Utc),
			record_count: get("record_count")?
				.parse()
				.map_err(|_| corrupt("record_count"))?,
			blame_revision: fields.get("blame_revision").map(|s| (*s).to_owned()),
		})
	}
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheContents {
	pub records: Vec<ChangeRecord>,
	pub blame: Option<BlameSnapshot>,
	pub manifest: CacheManifest,
}

pub fn save_cache(
	records: &[ChangeRecord],
	blame: Option<&BlameSnapshot>,
	manifest: &CacheManifest,
	cache_path: &Path,
) -> Result<(), IngestError> {
	fs::create_dir_all(cache_path)?;

	let mut manifest = manifest.clone();
	manifest.record_count = records.len() as u64;
	manifest.blame_revision = blame.map(|b| b.revision.clone());

	let record_bytes = encode_file(
		RECORDS_MAGIC,
		manifest.schema_version,
		records.iter().map(encode_record),
	);
	fs::write(cache_path.join(RECORDS_FILE), record_bytes)?;

	let blame_path = cache_path.join(BLAME_FILE);
	match blame {
		Some(blame) => {
			let bytes = encode_file(
				BLAME_MAGIC,
				manifest.schema_version,
				blame
					.files
					.iter()
					.map(|(path, lines)| encode_blame_file(path, lines)),
			);
			fs::write(blame_path, bytes)?;
		}
		None if blame_path.exists() => fs::remove_file(blame_path)?,
		None => {}
	}

	// The manifest goes last so a partially written cache is never loadable.
	fs::write(cache_path.join(MANIFEST_FILE), manifest.render())?;
	Ok(())
}

pub fn load_cache(cache_path: &Path) -> Result<CacheContents, IngestError> {
	load_cache_expecting(cache_path, SCHEMA_VERSION)
}

/// Loads a cache, rejecting any schema version other than `expected`.
pub fn load_cache_expecting(
	cache_path: &Path,
	expected: u32,
) -> Result<CacheContents, IngestError> {
	let manifest = CacheManifest::parse(&fs::read_to_string(cache_path.join(MANIFEST_FILE))?)?;
	if manifest.schema_version != expected {
		return Err(IngestError::SchemaMismatch {
			expected,
			found: manifest.schema_version,
		});
	}

	let bytes = fs::read(cache_path.join(RECORDS_FILE))?;
	let entries = decode_file(&bytes, RECORDS_MAGIC, expected)?;
	if entries.len() as u64 != manifest.record_count {
		return Err(IngestError::CorruptCache(format!(
			"manifest lists {} records, file holds {}",
			manifest.record_count,
			entries.len()
		)));
	}
	let mut commits: HashMap<String, Arc<CommitMeta>> = HashMap::new();
	let records = entries
		.into_iter()
		.map(|e| decode_record(e, &mut commits))
		.collect::<Result<Vec<_>, _>>()?;

	let blame = match &manifest.blame_revision {
		Some(revision) => {
			let bytes = fs::read(cache_path.join(BLAME_FILE))?;
			let files = decode_file(&bytes, BLAME_MAGIC, expected)?
				.into_iter()
				.map(decode_blame_file)
				.collect::<Result<BTreeMap<_, _>, _>>()?;
			Some(BlameSnapshot {
				revision: revision.clone(),
				files,
			})
		}
		None => None,
	};

	Ok(CacheContents {
		records,
		blame,
		manifest,
	})
}

fn encode_file(magic: &[u8; 4], schema: u32, entries: impl Iterator<Item = Vec<u8>>) -> Vec<u8> {
	let mut out = Vec::new();
	out.extend_from_slice(magic);
	out.extend_from_slice(&schema.to_le_bytes());
	out.extend_from_slice(&0u64.to_le_bytes());
	let mut count = 0u64;
	for entry in entries {
		out.extend_from_slice(&(entry.len() as u32).to_le_bytes());
		out.extend_from_slice(&entry);
		count += 1;
	}
	out[8..16].copy_from_slice(&count.to_le_bytes());
	let digest = Sha256::digest(&out);
	out.extend_from_slice(&digest);
	out
}

fn decode_file<'a>(
	bytes: &'a [u8],
	magic: &[u8; 4],
	schema: u32,
) -> Result<Vec<&'a [u8]>, IngestError> {
	if bytes.len() < HEADER_LEN + CHECKSUM_LEN {
		return Err(IngestError::CorruptCache("file truncated".to_owned()));
	}
	let (body, checksum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
	if Sha256::digest(body).as_slice() != checksum {
		return Err(IngestError::CorruptCache("checksum mismatch".to_owned()));
	}
	if &body[..4] != magic {
		return Err(IngestError::CorruptCache("bad magic".to_owned()));
	}
	let found = u32::from_le_bytes(body[4..8].try_into().expect("4 bytes"));
	if found != schema {
		return Err(IngestError::SchemaMismatch {
			expected: schema,
			found,
		});
	}
	let count = u64::from_le_bytes(body[8..16].try_into().expect("8 bytes"));
	let mut reader = Reader::new(&body[HEADER_LEN..]);
	let mut entries = Vec::new();
	for _ in 0..count {
		let len = reader.u32()? as usize;
		entries.push(reader.take(len)?);
	}
	if !reader.is_done() {
		return Err(IngestError::CorruptCache(
			"trailing bytes after entries".to_owned(),
		));
	}
	Ok(entries)
}

fn put_str(out: &mut Vec<u8>, s: &str) {
	out.extend_from_slice(&(s.len() as u32).to_le_bytes());
	out.extend_from_slice(s.as_bytes());
}

fn put_bag(out: &mut Vec<u8>, bag: &TokenBag) {
	out.extend_from_slice(&(bag.len() as u32).to_le_bytes());
	for (token, count) in bag.iter() {
		put_str(out, token);
		out.extend_from_slice(&count.to_le_bytes());
	}
}

fn encode_record(record: &ChangeRecord) -> Vec<u8> {
	let commit = &record.commit;
	let mut out = Vec::new();
	put_str(&mut out, &commit.hash);
	put_str(&mut out, &commit.author.name);
	put_str(&mut out, &commit.author.email);
	out.extend_from_slice(&commit.author_timestamp.timestamp().to_le_bytes());
	out.extend_from_slice(
		&commit
			.author_timestamp
			.timestamp_subsec_nanos()
			.to_le_bytes(),
	);
	out.push(u8::from(commit.is_merge));
	out.extend_from_slice(&commit.sequence.to_le_bytes());
	put_str(&mut out, &record.path);
	out.extend_from_slice(&record.lines_added.to_le_bytes());
	out.extend_from_slice(&record.lines_deleted.to_le_bytes());
	put_bag(&mut out, &record.added_tokens);
	put_bag(&mut out, &record.deleted_tokens);
	out
}

fn decode_record(
	entry: &[u8],
	commits: &mut HashMap<String, Arc<CommitMeta>>,
) -> Result<ChangeRecord, IngestError> {
	let mut r = Reader::new(entry);
	let hash = r.string()?;
	let name = r.string()?;
	let email = r.string()?;
	let secs = r.i64()?;
	let nanos = r.u32()?;
	let is_merge = r.u8()? != 0;
	let sequence = r.u64()?;
	let author_timestamp = Utc
		.timestamp_opt(secs, nanos)
		.single()
		.ok_or_else(|| IngestError::CorruptCache("invalid timestamp".to_owned()))?;
	let commit = commits
		.entry(hash.clone())
		.or_insert_with(|| {
			Arc::new(CommitMeta {
				hash,
				author: RawAuthor::new(name, email),
				author_timestamp,
				is_merge,
				sequence,
			})
		})
		.clone();
	let record = ChangeRecord {
		commit,
		path: r.string()?,
		lines_added: r.u64()?,
		lines_deleted: r.u64()?,
		added_tokens: r.bag()?,
		deleted_tokens: r.bag()?,
	};
	if !r.is_done() {
		return Err(IngestError::CorruptCache(
			"oversized record entry".to_owned(),
		));
	}
	Ok(record)
}

/// Lines are stored as runs of consecutive identical authors.
fn encode_blame_file(path: &str, lines: &[RawAuthor]) -> Vec<u8> {
	let mut runs: Vec<(&RawAuthor, u32)> = Vec::new();
	for author in lines {
		match runs.last_mut() {
			Some((last, n)) if *last == author => *n += 1,
			_ => runs.push((author, 1)),
		}
	}
	let mut out = Vec::new();
	put_str(&mut out, path);
	out.extend_from_slice(&(runs.len() as u32).to_le_bytes());
	for (author, n) in runs {
		put_str(&mut out, &author.name);
		put_str(&mut out, &author.email);
		out.extend_from_slice(&n.to_le_bytes());
	}
	out
}

fn decode_blame_file(entry: &[u8]) -> Result<(String, Vec<RawAuthor>), IngestError> {
	let mut r = Reader::new(entry);
	let path = r.string()?;
	let runs = r.u32()?;
	let mut lines = Vec::new();
	for _ in 0..runs {
		let author = RawAuthor::new(r.string()?, r.string()?);
		let n = r.u32()? as usize;
		lines.extend(std::iter::repeat_n(author, n));
	}
	if !r.is_done() {
		return Err(IngestError::CorruptCache(
			"oversized blame entry".to_owned(),
		));
	}
	Ok((path, lines))
}

struct Reader<'a> {
	buf: &'a [u8],
	pos: usize,
}

impl<'a> Reader<'a> {
	fn new(buf: &'a [u8]) -> Self {
		Self { buf, pos: 0 }
	}

	fn is_done(&self) -> bool {
		self.pos == self.buf.len()
	}

	fn take(&mut self, n: usize) -> Result<&'a [u8], IngestError> {
		let end = self
			.pos
			.checked_add(n)
			.filter(|&e| e <= self.buf.len())
			.ok_or_else(|| IngestError::CorruptCache("entry truncated".to_owned()))?;
		let slice = &self.buf[self.pos..end];
		self.pos = end;
		Ok(slice)
	}

	fn array<const N: usize>(&mut self) -> Result<[u8; N], IngestError> {
		Ok(self.take(N)?.try_into().expect("exact length"))
	}

	fn u8(&mut self) -> Result<u8, IngestError> {
		Ok(self.array::<1>()?[0])
	}

	fn u32(&mut self) -> Result<u32, IngestError> {
		self.array().map(u32::from_le_bytes)
	}

	fn u64(&mut self) -> Result<u64, IngestError> {
		self.array().map(u64::from_le_bytes)
	}

	fn i64(&mut self) -> Result<i64, IngestError> {
		self.array().map(i64::from_le_bytes)
	}

	fn string(&mut self) -> Result<String, IngestError> {
		let len = self.u32()? as usize;
		let bytes = self.take(len)?;
		String::from_utf8(bytes.to_vec())
			.map_err(|_| IngestError::CorruptCache("invalid utf-8 string".to_owned()))
	}

	fn bag(&mut self) -> Result<TokenBag, IngestError> {
		let n = self.u32()?;
		let mut bag = TokenBag::new();
		for _ in 0..n {
			let token = self.string()?;
			let count = self.u32()?;
			bag.insert(&token, count);
		}
		Ok(bag)
	}
}
