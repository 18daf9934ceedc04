//! Carbon-intensity signals under location-based and market-based
//! attribution, plus divergence statistics between the two.
//!
//! Location-based intensity is the generation-weighted average emission
//! factor of the grid mix. The residual intensity removes PPA-contracted
//! energy from the mix before averaging, and the market-based intensity of a
//! consumer scales the residual by the consumer's own contracted fraction:
//! `CI_mb(t) = (1 - f) * CI_res(t)`.
//!
//! All CI values are g CO2-eq per kWh; generation is MWh (the unit factor
//! cancels in the weighted average).

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Datelike, Timelike, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{ConsumerProfile, GenerationSeries, GridError, PpaPortfolio, SourceCatalog};

/// Residual generation below this many MWh in an hour counts as degenerate
/// (the whole mix is under contract; the residual intensity is undefined).
pub const DEGENERATE_EPSILON_MWH: f64 = 1e-9;

/// Errors raised while computing attribution signals.
#[derive(Debug, Error, PartialEq)]
pub enum AttributionError {
    #[error("hour {0} has zero total generation")]
    ZeroTotalGeneration(usize),
    #[error("hour {0} has no residual generation (entire mix under contract)")]
    DegenerateResidualHour(usize),
    #[error("expected a residual signal, found {0}")]
    WrongInputMethod(AttributionMethod),
    #[error("no hours remain after excluding degenerate and zero-intensity hours")]
    EmptyAfterExclusion,
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// How a carbon-intensity series was attributed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum AttributionMethod {
    LocationBased,
    Residual,
    /// Market-based for a consumer whose fraction `f` of consumption is met
    /// by PPA.
    MarketBased { f: f64 },
}

impl fmt::Display for AttributionMethod {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::LocationBased => write!(out, "location_based"),
            Self::Residual => write!(out, "residual"),
            Self::MarketBased { f } => write!(out, "market_based(f={f})"),
        }
    }
}

/// What to do with hours whose residual generation is (near) zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegeneratePolicy {
    /// Fail with [`AttributionError::DegenerateResidualHour`].
    #[default]
    Error,
    /// Set `CI_res(t) = 0` and flag the hour in the signal's metadata.
    ClampZero,
}

/// An hourly carbon-intensity series for one region, tagged with the
/// attribution method that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarbonSignal {
    pub region_id: String,
    pub method: AttributionMethod,
    /// Timestamp of hour 0 (UTC), copied from the source series.
    pub start: DateTime<Utc>,
    /// CI(t) in g/kWh, one value per hour.
    pub values: Vec<f64>,
    /// The portfolio the signal was computed under (empty for
    /// location-based).
    pub ppa: PpaPortfolio,
    /// Hours clamped to zero by [`DegeneratePolicy::ClampZero`].
    pub degenerate_hours: Vec<usize>,
}

impl CarbonSignal {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// UTC timestamp of hour `t`.
    pub fn timestamp(&self, hour: usize) -> DateTime<Utc> {
        self.start + chrono::Duration::hours(hour as i64)
    }
}

/// Per-hour weighted-average CI terms of a series: numerator Σ E_i(t)·CEF_i,
/// denominator Σ E_i(t). Shared by the location-based and residual paths so
/// that an empty portfolio yields bit-identical values.
fn weighted_ci_terms(
    series: &GenerationSeries,
    catalog: &SourceCatalog,
) -> Result<Vec<(f64, f64)>, AttributionError> {
    let mut terms = vec![(0.0, 0.0); series.len()];
    for (name, values) in series.sources() {
        let source = catalog
            .get(name)
            .ok_or_else(|| GridError::UnknownSource(name.to_string()))?;
        for (t, &energy) in values.iter().enumerate() {
            terms[t].0 += energy * source.cef;
            terms[t].1 += energy;
        }
    }
    Ok(terms)
}

/// Location-based carbon intensity: the generation-weighted average CEF of
/// the full grid mix, hour by hour.
pub fn ci_lb(
    series: &GenerationSeries,
    catalog: &SourceCatalog,
) -> Result<CarbonSignal, AttributionError> {
    let values = weighted_ci_terms(series, catalog)?
        .into_iter()
        .enumerate()
        .map(|(t, (grams, energy))| {
            if energy == 0.0 {
                Err(AttributionError::ZeroTotalGeneration(t))
            } else {
                Ok(grams / energy)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CarbonSignal {
        region_id: series.region_id.clone(),
        method: AttributionMethod::LocationBased,
        start: series.start,
        values,
        ppa: PpaPortfolio::empty(),
        degenerate_hours: Vec::new(),
    })
}

/// The grid mix left after removing PPA-contracted generation:
/// `E_i(t) - p_i * E_i(t)` per source.
pub fn residual_mix(series: &GenerationSeries, ppa: &PpaPortfolio) -> GenerationSeries {
    let per_source: BTreeMap<String, Vec<f64>> = series
        .sources()
        .map(|(name, values)| {
            let p = ppa.fraction(name);
            let residual = values.iter().map(|&e| e - p * e).collect();
            (name.to_string(), residual)
        })
        .collect();
    GenerationSeries::new(series.region_id.clone(), series.start, per_source)
        .expect("residual of a valid series is valid: fractions in [0, 1] keep values in [0, E]")
}

/// Residual carbon intensity: the weighted-average CEF of the mix that
/// remains once contracted energy is removed.
pub fn ci_res(
    series: &GenerationSeries,
    catalog: &SourceCatalog,
    ppa: &PpaPortfolio,
    policy: DegeneratePolicy,
) -> Result<CarbonSignal, AttributionError> {
    let residual = residual_mix(series, ppa);
    let mut degenerate_hours = Vec::new();
    let values = weighted_ci_terms(&residual, catalog)?
        .into_iter()
        .enumerate()
        .map(|(t, (grams, energy))| {
            if energy <= DEGENERATE_EPSILON_MWH {
                match policy {
                    DegeneratePolicy::Error => Err(AttributionError::DegenerateResidualHour(t)),
                    DegeneratePolicy::ClampZero => {
                        degenerate_hours.push(t);
                        Ok(0.0)
                    }
                }
            } else {
                Ok(grams / energy)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CarbonSignal {
        region_id: series.region_id.clone(),
        method: AttributionMethod::Residual,
        start: series.start,
        values,
        ppa: ppa.clone(),
        degenerate_hours,
    })
}

/// Market-based carbon intensity for one consumer: `(1 - f) * CI_res(t)`.
pub fn ci_mb(
    res_signal: &CarbonSignal,
    consumer: &ConsumerProfile,
) -> Result<CarbonSignal, AttributionError> {
    if res_signal.method != AttributionMethod::Residual {
        return Err(AttributionError::WrongInputMethod(res_signal.method));
    }
    let f = consumer.fraction();
    let values = res_signal.values.iter().map(|&ci| (1.0 - f) * ci).collect();
    Ok(CarbonSignal {
        region_id: res_signal.region_id.clone(),
        method: AttributionMethod::MarketBased { f },
        start: res_signal.start,
        values,
        ppa: res_signal.ppa.clone(),
        degenerate_hours: res_signal.degenerate_hours.clone(),
    })
}

/// How divergence statistics are grouped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// One group over every (region, hour).
    Overall,
    /// 24 groups keyed `00`..`23` by UTC hour of day.
    HourOfDay,
    /// Groups keyed `01`..`12` by calendar month.
    Month,
    /// One group per region.
    Region,
}

impl Grouping {
    fn key(self, signal: &CarbonSignal, hour: usize) -> String {
        match self {
            Self::Overall => "overall".to_string(),
            Self::HourOfDay => format!("{:02}", signal.timestamp(hour).hour()),
            Self::Month => format!("{:02}", signal.timestamp(hour).month()),
            Self::Region => signal.region_id.clone(),
        }
    }
}

/// Statistics of the relative CI increase for one group of hours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceGroup {
    pub key: String,
    /// Number of hours aggregated into this group.
    pub hours: usize,
    /// Mean of `100 * (CI_res - CI_lb) / CI_lb` over the group.
    pub mean_increase_pct: f64,
    pub median_increase_pct: f64,
    pub max_increase_pct: f64,
}

/// Grouped statistics of the increase from location-based to residual CI.
///
/// Hours where the ratio is undefined are excluded from the statistics and
/// counted: `excluded_zero_ci` for hours with `CI_lb = 0`,
/// `excluded_degenerate` for hours whose entire mix is under contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceSummary {
    pub grouping: Grouping,
    /// One entry per group key, sorted by key.
    pub groups: Vec<DivergenceGroup>,
    pub excluded_zero_ci: usize,
    pub excluded_degenerate: usize,
}

impl DivergenceSummary {
    pub fn group(&self, key: &str) -> Option<&DivergenceGroup> {
        self.groups.iter().find(|g| g.key == key)
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Per-group statistics of `100 * (CI_res - CI_lb) / CI_lb` across a set of
/// regions under one portfolio.
pub fn divergence(
    series_set: &[GenerationSeries],
    catalog: &SourceCatalog,
    ppa: &PpaPortfolio,
    grouping: Grouping,
) -> Result<DivergenceSummary, AttributionError> {
    let mut by_key: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut excluded_zero_ci = 0;
    let mut excluded_degenerate = 0;
    for series in series_set {
        let lb = ci_lb(series, catalog)?;
        let res = ci_res(series, catalog, ppa, DegeneratePolicy::ClampZero)?;
        for t in 0..lb.len() {
            if res.degenerate_hours.binary_search(&t).is_ok() {
                excluded_degenerate += 1;
            } else if lb.values[t] == 0.0 {
                excluded_zero_ci += 1;
            } else {
                let increase = 100.0 * (res.values[t] - lb.values[t]) / lb.values[t];
                by_key.entry(grouping.key(&lb, t)).or_default().push(increase);
            }
        }
    }
    if by_key.is_empty() {
        return Err(AttributionError::EmptyAfterExclusion);
    }
    let groups = by_key
        .into_iter()
        .map(|(key, mut increases)| {
            increases.sort_by(|a, b| a.partial_cmp(b).expect("ratios are finite"));
            DivergenceGroup {
                key,
                hours: increases.len(),
                mean_increase_pct: increases.iter().sum::<f64>() / increases.len() as f64,
                median_increase_pct: median(&increases),
                max_increase_pct: *increases.last().expect("group is non-empty"),
            }
        })
        .collect();
    Ok(DivergenceSummary {
        grouping,
        groups,
        excluded_zero_ci,
        excluded_degenerate,
    })
}
