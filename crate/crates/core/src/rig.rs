// SPDX-License-Identifier: Apache-2.0

//! Blame-based bus factor.
//!
//! A line is abandoned when the developer blamed for it departs; a file is
//! abandoned when at least `line_abandon_fraction` of its lines are. For
//! growing group sizes `g`, random `g`-subsets of the developers present in
//! the blame snapshot are removed, and the first subset that abandons at
//! least `file_abandon_fraction` of the files gives the bus factor.
//!
//! Subsets are drawn from a ChaCha8 generator seeded with `seed`. For each
//! sample the population (sorted by developer handle, and left in its
//! permuted state between samples) is partially shuffled: for `j` in `0..g`,
//! position `j` is swapped with `j + uniform(0..n-j)` where the draw is a
//! `u64` range sample. The first `g` entries form the subset.

use crate::identity::{DevId, IdentityError, IdentityMap};
use crate::ingest::BlameSnapshot;
use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

const EXHAUSTIVE_CHUNK: usize = 4096;

#[derive(Debug, Error)]
pub enum RigError {
	#[error("blame snapshot has no files")]
	EmptySnapshot,

	#[error("invalid RIG configuration: {0}")]
	InvalidConfig(String),

	#[error(transparent)]
	Identity(#[from] IdentityError),
}

impl RigError {
	pub fn name(&self) -> &'static str {
		match self {
			RigError::EmptySnapshot => "EmptySnapshot",
			RigError::InvalidConfig(_) => "InvalidConfig",
			RigError::Identity(e) => e.name(),
		}
	}
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigConfig {
	pub max_group_size: usize,
	pub samples_per_size: usize,
	pub seed: u64,
	pub line_abandon_fraction: f64,
	pub file_abandon_fraction: f64,
	pub exhaustive: bool,
}

impl Default for RigConfig {
	fn default() -> Self {
		Self {
			max_group_size: 200,
			samples_per_size: 1000,
			seed: 0,
			line_abandon_fraction: 0.90,
			file_abandon_fraction: 0.50,
			exhaustive: false,
		}
	}
}

impl RigConfig {
	pub fn validate(&self) -> Result<(), RigError> {
		let in_unit = |f: f64| f > 0.0 && f <= 1.0;
		if !in_unit(self.line_abandon_fraction) {
			return Err(RigError::InvalidConfig(format!(
				"line abandon fraction {} not in (0, 1]",
				self.line_abandon_fraction
			)));
		}
		if !in_unit(self.file_abandon_fraction) {
			return Err(RigError::InvalidConfig(format!(
				"file abandon fraction {} not in (0, 1]",
				self.file_abandon_fraction
			)));
		}
		if self.samples_per_size == 0 {
			return Err(RigError::InvalidConfig(
				"samples per size must be at least 1".into(),
			));
		}
		if self.max_group_size == 0 {
			return Err(RigError::InvalidConfig(
				"max group size must be at least 1".into(),
			));
		}
		Ok(())
	}
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigResult {
	/// `None` when no examined group abandoned enough files.
	pub bus_factor: Option<usize>,
	/// Sorted developer handles of the departing group.
	pub bf_set: Option<Vec<DevId>>,
	pub samples_evaluated: u64,
	/// Abandoned file fraction of `bf_set`, or the largest fraction seen when
	/// no group qualified.
	pub abandoned_fraction_at_return: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RigSummary {
	pub runs: usize,
	pub min: Option<usize>,
	pub max: Option<usize>,
	/// Most frequent bus factor, smallest on ties.
	pub mode: Option<usize>,
	pub failed_runs: usize,
}

#[derive(Debug, Clone)]
struct FileOwnership {
	owners: Vec<(DevId, u32)>,
	lines: u32,
}

/// Blame snapshot reduced to per-file line counts per developer.
#[derive(Debug, Clone)]
pub struct BlameIndex {
	files: Vec<FileOwnership>,
	population: Vec<DevId>,
	id_space: usize,
}

impl BlameIndex {
	pub fn new(blame: &BlameSnapshot, identity: &IdentityMap) -> Result<Self, RigError> {
		if blame.is_empty() {
			return Err(RigError::EmptySnapshot);
		}
		let mut population = BTreeSet::new();
		let mut files = Vec::with_capacity(blame.files.len());
		for lines in blame.files.values() {
			let mut owners: BTreeMap<DevId, u32> = BTreeMap::new();
			for author in lines {
				*owners.entry(identity.id_of(author)?).or_insert(0) += 1;
			}
			if lines.is_empty() {
				continue;
			}
			population.extend(owners.keys().copied());
			files.push(FileOwnership {
				owners: owners.into_iter().collect(),
				lines: lines.len() as u32,
			});
		}
		if files.is_empty() {
			return Err(RigError::EmptySnapshot);
		}
		Ok(Self {
			files,
			population: population.into_iter().collect(),
			id_space: identity.len(),
		})
	}

	pub fn file_count(&self) -> usize {
		self.files.len()
	}

	/// Developers owning at least one line, in handle order.
	pub fn population(&self) -> &[DevId] {
		&self.population
	}

	fn mask(&self, departed: &[DevId]) -> Vec<bool> {
		let mut mask = vec![false; self.id_space];
		for d in departed {
			if let Some(slot) = mask.get_mut(d.index()) {
				*slot = true;
			}
		}
		mask
	}

	fn fraction_with_mask(&self, mask: &[bool], line_abandon_fraction: f64) -> f64 {
		let abandoned = self
			.files
			.iter()
			.filter(|f| {
				let gone: u32 = f
					.owners
					.iter()
					.filter(|(d, _)| mask.get(d.index()).copied().unwrap_or(false))
					.map(|&(_, n)| n)
					.sum();
				f64::from(gone) / f64::from(f.lines) >= line_abandon_fraction
			})
			.count();
		abandoned as f64 / self.files.len() as f64
	}

	/// Fraction of files abandoned when `departed` leave.
	pub fn abandoned_fraction(&self, departed: &[DevId], line_abandon_fraction: f64) -> f64 {
		self.fraction_with_mask(&self.mask(departed), line_abandon_fraction)
	}
}

pub fn abandoned_file_fraction(
	blame: &BlameSnapshot,
	identity: &IdentityMap,
	departed: &BTreeSet<DevId>,
	line_abandon_fraction: f64,
) -> Result<f64, RigError> {
	let index = BlameIndex::new(blame, identity)?;
	let departed: Vec<DevId> = departed.iter().copied().collect();
	Ok(index.abandoned_fraction(&departed, line_abandon_fraction))
}

pub fn rig_bus_factor(index: &BlameIndex, config: &RigConfig) -> Result<RigResult, RigError> {
	config.validate()?;
	let max_g = config.max_group_size.min(index.population.len());
	if config.exhaustive {
		Ok(exhaustive_search(index, config, max_g))
	} else {
		Ok(sampled_search(index, config, max_g))
	}
}

fn sampled_search(index: &BlameIndex, config: &RigConfig, max_g: usize) -> RigResult {
	let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
	let mut pool = index.population.clone();
	let n = pool.len();
	let mut evaluated = 0u64;
	let mut best = 0.0f64;

	for g in 1..=max_g {
		let subsets: Vec<Vec<DevId>> = (0..config.samples_per_size)
			.map(|_| {
				for j in 0..g {
					let k = j + rng.gen_range(0..(n - j) as u64) as usize;
					pool.swap(j, k);
				}
				let mut subset = pool[..g].to_vec();
				subset.sort_unstable();
				subset
			})
			.collect();

		let fractions: Vec<f64> = subsets
			.par_iter()
			.map_init(
				|| vec![false; index.id_space],
				|mask, subset| {
					for d in subset {
						mask[d.index()] = true;
					}
					let f = index.fraction_with_mask(mask, config.line_abandon_fraction);
					for d in subset {
						mask[d.index()] = false;
					}
					f
				},
			)
			.collect();

		if let Some(pos) = fractions
			.iter()
			.position(|&f| f >= config.file_abandon_fraction)
		{
			evaluated += pos as u64 + 1;
			return RigResult {
				bus_factor: Some(g),
				bf_set: Some(subsets[pos].clone()),
				samples_evaluated: evaluated,
				abandoned_fraction_at_return: fractions[pos],
			};
		}
		evaluated += subsets.len() as u64;
		best = fractions.into_iter().fold(best, f64::max);
	}

	RigResult {
		bus_factor: None,
		bf_set: None,
		samples_evaluated: evaluated,
		abandoned_fraction_at_return: best,
	}
}

fn exhaustive_search(index: &BlameIndex, config: &RigConfig, max_g: usize) -> RigResult {
	let mut evaluated = 0u64;
	let mut best = 0.0f64;
	for g in 1..=max_g {
		for chunk in &index
			.population
			.iter()
			.copied()
			.combinations(g)
			.chunks(EXHAUSTIVE_CHUNK)
		{
			let subsets: Vec<Vec<DevId>> = chunk.collect();
			let fractions: Vec<f64> = subsets
				.par_iter()
				.map(|s| index.abandoned_fraction(s, config.line_abandon_fraction))
				.collect();
			if let Some(pos) = fractions
				.iter()
				.position(|&f| f >= config.file_abandon_fraction)
			{
				evaluated += pos as u64 + 1;
				return RigResult {
					bus_factor: Some(g),
					bf_set: Some(subsets[pos].clone()),
					samples_evaluated: evaluated,
					abandoned_fraction_at_return: fractions[pos],
				};
			}
			evaluated += subsets.len() as u64;
			best = fractions.into_iter().fold(best, f64::max);
		}
	}
	RigResult {
		bus_factor: None,
		bf_set: None,
		samples_evaluated: evaluated,
		abandoned_fraction_at_return: best,
	}
}

/// Runs the search `runs` times with seeds `seed`, `seed + 1`, ...
pub fn rig_repeat(
	index: &BlameIndex,
	config: &RigConfig,
	runs: usize,
) -> Result<(Vec<RigResult>, RigSummary), RigError> {
	if runs == 0 {
		return Err(RigError::InvalidConfig("runs must be at least 1".into()));
	}
	let results = (0..runs)
		.map(|i| {
			let cfg = RigConfig {
				seed: config.seed.wrapping_add(i as u64),
				..config.clone()
			};
			rig_bus_factor(index, &cfg)
		})
		.collect::<Result<Vec<_>, _>>()?;
	let summary = summarize(&results);
	Ok((results, summary))
}

pub fn summarize(results: &[RigResult]) -> RigSummary {
	let values: Vec<usize> = results.iter().filter_map(|r| r.bus_factor).collect();
	let mut freq: BTreeMap<usize, usize> = BTreeMap::new();
	for &v in &values {
		*freq.entry(v).or_insert(0) += 1;
	}
	let mode = freq
		.iter()
		.max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
		.map(|(&v, _)| v);
	RigSummary {
		runs: results.len(),
		min: values.iter().copied().min(),
		max: values.iter().copied().max(),
		mode,
		failed_runs: results.len() - values.len(),
	}
}
