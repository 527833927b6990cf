// SPDX-License-Identifier: Apache-2.0

//! Bus factor per calendar year.

use crate::cst::{cst_bus_factor, CstConfig, CstError, TimeRange};
use crate::identity::IdentityMap;
use crate::ingest::ChangeRecord;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrendError {
	#[error("empty year span {first}..{last}")]
	EmptySpan { first: i32, last: i32 },

	#[error(transparent)]
	Cst(#[from] CstError),
}

impl TrendError {
	pub fn name(&self) -> &'static str {
		match self {
			TrendError::EmptySpan { .. } => "EmptySpan",
			TrendError::Cst(e) => e.name(),
		}
	}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrendMode {
	/// Each point covers one calendar year.
	PerYear,
	/// Each point covers all history up to the end of its year.
	Cumulative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendPoint {
	pub year: i32,
	pub bus_factor: usize,
	pub total_developers: usize,
	pub bf_percentage: f64,
	/// False for windows without any contribution; such points are all zero.
	pub active: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendSeries {
	pub scope: String,
	/// The base configuration, without a time range.
	pub config: CstConfig,
	pub mode: TrendMode,
	pub points: Vec<TrendPoint>,
}

pub fn yearly_trend(
	records: &[ChangeRecord],
	identity: &IdentityMap,
	base_config: &CstConfig,
	first_year: i32,
	last_year: i32,
	mode: TrendMode,
) -> Result<TrendSeries, TrendError> {
	if first_year > last_year {
		return Err(TrendError::EmptySpan {
			first: first_year,
			last: last_year,
		});
	}
	let mut config = base_config.clone();
	config.time_range = None;

	let points = (first_year..=last_year)
		.into_par_iter()
		.map(|year| {
			let window = match mode {
				TrendMode::PerYear => TimeRange::calendar_year(year),
				TrendMode::Cumulative => TimeRange::through_year(year),
			};
			let cfg = CstConfig {
				time_range: Some(window),
				..config.clone()
			};
			match cst_bus_factor(records, identity, &cfg) {
				Ok(r) => Ok(TrendPoint {
					year,
					bus_factor: r.bus_factor,
					total_developers: r.developer_count,
					bf_percentage: 100.0 * r.bus_factor as f64 / r.developer_count as f64,
					active: true,
				}),
				Err(CstError::EmptyScope | CstError::ZeroDevelopers) => Ok(TrendPoint {
					year,
					bus_factor: 0,
					total_developers: 0,
					bf_percentage: 0.0,
					active: false,
				}),
				Err(e) => Err(TrendError::from(e)),
			}
		})
		.collect::<Result<Vec<_>, _>>()?;

	Ok(TrendSeries {
		scope: config.scope.to_string(),
		config,
		mode,
		points,
	})
}
