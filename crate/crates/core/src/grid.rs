//! Domain types for generation sources, hourly generation series, and PPA
//! portfolios.
//!
//! All types validate on construction and are immutable afterwards, so they
//! are safe to share and send across concurrent tasks.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while constructing or validating grid-domain values.
#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("source `{0}` is not declared in the source catalog")]
    UnknownSource(String),
    #[error("source `{name}` has {len} hours, expected {expected}")]
    LengthMismatch {
        name: String,
        len: usize,
        expected: usize,
    },
    #[error("source `{name}` has negative generation {value} MWh at hour {hour}")]
    NegativeGeneration {
        name: String,
        hour: usize,
        value: f64,
    },
    #[error("source `{name}` has a non-finite value at hour {hour}")]
    NonFiniteValue { name: String, hour: usize },
    #[error("series has no hours")]
    EmptySeries,
    #[error("negative carbon emission factor {cef} g/kWh for source `{name}`")]
    NegativeCef { name: String, cef: f64 },
    #[error("source `{0}` is PPA-eligible but not renewable")]
    IneligibleNonRenewable(String),
    #[error("source `{0}` is declared twice")]
    DuplicateSource(String),
    #[error("PPA fraction {fraction} for source `{name}` is outside [0, 1]")]
    FractionOutOfRange { name: String, fraction: f64 },
    #[error("PPA fraction on source `{0}`, which is not PPA-eligible")]
    PpaOnIneligibleSource(String),
    #[error("consumer PPA fraction {0} is outside [0, 1]")]
    ConsumerFractionOutOfRange(f64),
}

/// One electricity generation source with its carbon emission factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySource {
    /// Source name, e.g. `coal` or `solar`.
    pub name: String,
    /// Carbon emission factor in grams CO2-eq per kWh generated.
    pub cef: f64,
    pub renewable: bool,
    /// Whether this source can be contracted through a PPA. Only solar and
    /// wind qualify by default.
    pub ppa_eligible: bool,
}

impl EnergySource {
    pub fn new(
        name: impl Into<String>,
        cef: f64,
        renewable: bool,
        ppa_eligible: bool,
    ) -> Result<Self, GridError> {
        let name = name.into();
        if !cef.is_finite() || cef < 0.0 {
            return Err(GridError::NegativeCef { name, cef });
        }
        if ppa_eligible && !renewable {
            return Err(GridError::IneligibleNonRenewable(name));
        }
        Ok(Self {
            name,
            cef,
            renewable,
            ppa_eligible,
        })
    }
}

/// Catalog of declared energy sources, keyed by name.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SourceCatalog {
    sources: BTreeMap<String, EnergySource>,
}

impl SourceCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// The bundled default table: coal at 760 g/kWh, natural gas at 370 g/kWh,
    /// renewables at zero. Solar and wind are PPA-eligible; hydro and
    /// geothermal are renewable but not eligible. Any other fossil source
    /// needs an explicit entry.
    pub fn bundled_defaults() -> Self {
        let mut catalog = Self::new();
        for (name, cef, renewable, eligible) in [
            ("coal", 760.0, false, false),
            ("gas", 370.0, false, false),
            ("solar", 0.0, true, true),
            ("wind", 0.0, true, true),
            ("hydro", 0.0, true, false),
            ("geothermal", 0.0, true, false),
        ] {
            catalog
                .insert(EnergySource::new(name, cef, renewable, eligible).expect("valid default"))
                .expect("no duplicates in defaults");
        }
        catalog
    }

    /// Adds a source; each name may be declared only once.
    pub fn insert(&mut self, source: EnergySource) -> Result<(), GridError> {
        match self.sources.entry(source.name.clone()) {
            Entry::Occupied(_) => Err(GridError::DuplicateSource(source.name)),
            Entry::Vacant(slot) => {
                slot.insert(source);
                Ok(())
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&EnergySource> {
        self.sources.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.sources.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &EnergySource> {
        self.sources.values()
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    /// Names of all PPA-eligible sources in the catalog.
    pub fn ppa_eligible_names(&self) -> Vec<String> {
        self.sources
            .values()
            .filter(|s| s.ppa_eligible)
            .map(|s| s.name.clone())
            .collect()
    }
}

/// Hourly per-source electricity generation for one region.
///
/// All per-source sequences share the same length `T >= 1`; values are MWh
/// generated during the hour starting at `start + t` hours (UTC).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSeries {
    pub region_id: String,
    /// Timestamp of hour 0 (UTC). The step is fixed at one hour.
    pub start: DateTime<Utc>,
    per_source: BTreeMap<String, Vec<f64>>,
}

/// Default epoch for series constructed without an explicit start.
pub fn default_series_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2022, 1, 1, 0, 0, 0).unwrap()
}

impl GenerationSeries {
    /// Builds a series from raw per-source values, checking shape only
    /// (equal lengths, at least one hour, finite non-negative values).
    /// Source names are checked against a catalog by [`validate_series`].
    pub fn new(
        region_id: impl Into<String>,
        start: DateTime<Utc>,
        per_source: BTreeMap<String, Vec<f64>>,
    ) -> Result<Self, GridError> {
        let series = Self {
            region_id: region_id.into(),
            start,
            per_source,
        };
        series.check_shape()?;
        Ok(series)
    }

    fn check_shape(&self) -> Result<(), GridError> {
        let mut expected = None;
        for (name, values) in &self.per_source {
            let len = values.len();
            match expected {
                None => {
                    if len == 0 {
                        return Err(GridError::EmptySeries);
                    }
                    expected = Some(len);
                }
                Some(exp) if exp != len => {
                    return Err(GridError::LengthMismatch {
                        name: name.clone(),
                        len,
                        expected: exp,
                    });
                }
                _ => {}
            }
            for (hour, &value) in values.iter().enumerate() {
                if !value.is_finite() {
                    return Err(GridError::NonFiniteValue {
                        name: name.clone(),
                        hour,
                    });
                }
                if value < 0.0 {
                    return Err(GridError::NegativeGeneration {
                        name: name.clone(),
                        hour,
                        value,
                    });
                }
            }
        }
        if expected.is_none() {
            return Err(GridError::EmptySeries);
        }
        Ok(())
    }

    /// Number of hourly steps `T`.
    pub fn len(&self) -> usize {
        self.per_source
            .values()
            .next()
            .map(|v| v.len())
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sources(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.per_source
            .iter()
            .map(|(name, values)| (name.as_str(), values.as_slice()))
    }

    pub fn source_values(&self, name: &str) -> Option<&[f64]> {
        self.per_source.get(name).map(|v| v.as_slice())
    }

    /// Total generation `E(t)` in MWh for hour `t`.
    pub fn total_at(&self, hour: usize) -> f64 {
        self.per_source.values().map(|v| v[hour]).sum()
    }

    /// UTC timestamp of hour `t`.
    pub fn timestamp(&self, hour: usize) -> DateTime<Utc> {
        self.start + chrono::Duration::hours(hour as i64)
    }
}

/// Validates a series against a source catalog: every source declared, equal
/// lengths, finite non-negative values. Validation is idempotent; a valid
/// series passes through unchanged.
pub fn validate_series(
    series: GenerationSeries,
    catalog: &SourceCatalog,
) -> Result<GenerationSeries, GridError> {
    series.check_shape()?;
    for (name, _) in series.sources() {
        if !catalog.contains(name) {
            return Err(GridError::UnknownSource(name.to_string()));
        }
    }
    Ok(series)
}

/// Per-source contracted fraction of generation, constant over time.
///
/// A fraction `p` on source `i` marks `p * E_i(t)` MWh of every hour as
/// PPA-contracted. Nonzero fractions are only valid on PPA-eligible sources.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PpaPortfolio {
    fractions: BTreeMap<String, f64>,
}

impl PpaPortfolio {
    /// Portfolio with nothing under contract.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(
        fractions: BTreeMap<String, f64>,
        catalog: &SourceCatalog,
    ) -> Result<Self, GridError> {
        for (name, &fraction) in &fractions {
            if !fraction.is_finite() || !(0.0..=1.0).contains(&fraction) {
                return Err(GridError::FractionOutOfRange {
                    name: name.clone(),
                    fraction,
                });
            }
            match catalog.get(name) {
                None => return Err(GridError::UnknownSource(name.clone())),
                Some(source) if fraction > 0.0 && !source.ppa_eligible => {
                    return Err(GridError::PpaOnIneligibleSource(name.clone()));
                }
                Some(_) => {}
            }
        }
        Ok(Self { fractions })
    }

    /// The same fraction `p` on every PPA-eligible source in the catalog;
    /// this is how a scalar "PPA %" sweep is realized.
    pub fn uniform(p: f64, catalog: &SourceCatalog) -> Result<Self, GridError> {
        let fractions = catalog
            .ppa_eligible_names()
            .into_iter()
            .map(|name| (name, p))
            .collect();
        Self::new(fractions, catalog)
    }

    /// Contracted fraction for a source (zero when absent).
    pub fn fraction(&self, source: &str) -> f64 {
        self.fractions.get(source).copied().unwrap_or(0.0)
    }

    pub fn is_trivial(&self) -> bool {
        self.fractions.values().all(|&p| p == 0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.fractions.iter().map(|(name, &p)| (name.as_str(), p))
    }
}

/// A consumer's own PPA coverage: the fraction `f` of their consumption met
/// by contracted energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsumerProfile {
    f: f64,
}

impl ConsumerProfile {
    pub fn new(f: f64) -> Result<Self, GridError> {
        if !f.is_finite() || !(0.0..=1.0).contains(&f) {
            return Err(GridError::ConsumerFractionOutOfRange(f));
        }
        Ok(Self { f })
    }

    /// A consumer without any PPAs (`f = 0`).
    pub fn no_ppa() -> Self {
        Self { f: 0.0 }
    }

    pub fn fraction(&self) -> f64 {
        self.f
    }
}

impl Default for ConsumerProfile {
    fn default() -> Self {
        Self::no_ppa()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(entries: &[(&str, &[f64])]) -> Result<GenerationSeries, GridError> {
        let per_source = entries
            .iter()
            .map(|(name, values)| (name.to_string(), values.to_vec()))
            .collect();
        GenerationSeries::new("test", default_series_start(), per_source)
    }

    #[test]
    fn well_formed_series_is_accepted() {
        let catalog = SourceCatalog::bundled_defaults();
        let s = series(&[("coal", &[10.0, 10.0]), ("solar", &[5.0, 0.0])]).unwrap();
        let validated = validate_series(s.clone(), &catalog).unwrap();
        assert_eq!(validated, s);
    }

    #[test]
    fn validation_is_idempotent() {
        let catalog = SourceCatalog::bundled_defaults();
        let s = series(&[("coal", &[10.0, 10.0]), ("solar", &[5.0, 0.0])]).unwrap();
        let once = validate_series(s, &catalog).unwrap();
        let twice = validate_series(once.clone(), &catalog).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn negative_generation_is_rejected() {
        let err = series(&[("solar", &[-1.0])]).unwrap_err();
        assert!(matches!(err, GridError::NegativeGeneration { hour: 0, .. }));
    }

    #[test]
    fn ragged_series_is_rejected() {
        let err = series(&[("coal", &[10.0, 10.0]), ("solar", &[5.0])]).unwrap_err();
        assert!(matches!(err, GridError::LengthMismatch { .. }));
    }

    #[test]
    fn unknown_source_is_rejected() {
        let catalog = SourceCatalog::bundled_defaults();
        let s = series(&[("plutonium", &[1.0])]).unwrap();
        assert_eq!(
            validate_series(s, &catalog).unwrap_err(),
            GridError::UnknownSource("plutonium".into())
        );
    }

    #[test]
    fn non_finite_value_is_rejected() {
        let err = series(&[("coal", &[f64::NAN])]).unwrap_err();
        assert!(matches!(err, GridError::NonFiniteValue { .. }));
    }

    #[test]
    fn empty_series_is_rejected() {
        assert_eq!(series(&[]).unwrap_err(), GridError::EmptySeries);
        assert_eq!(series(&[("coal", &[])]).unwrap_err(), GridError::EmptySeries);
    }

    #[test]
    fn ppa_on_coal_is_rejected() {
        let catalog = SourceCatalog::bundled_defaults();
        let fractions = BTreeMap::from([("coal".to_string(), 0.5)]);
        assert_eq!(
            PpaPortfolio::new(fractions, &catalog).unwrap_err(),
            GridError::PpaOnIneligibleSource("coal".into())
        );
    }

    #[test]
    fn zero_fraction_on_ineligible_source_is_allowed() {
        let catalog = SourceCatalog::bundled_defaults();
        let fractions = BTreeMap::from([("coal".to_string(), 0.0)]);
        assert!(PpaPortfolio::new(fractions, &catalog).is_ok());
    }

    #[test]
    fn fraction_out_of_range_is_rejected() {
        let catalog = SourceCatalog::bundled_defaults();
        for bad in [-0.1, 1.1, f64::NAN] {
            let fractions = BTreeMap::from([("solar".to_string(), bad)]);
            assert!(matches!(
                PpaPortfolio::new(fractions, &catalog).unwrap_err(),
                GridError::FractionOutOfRange { .. }
            ));
        }
    }

    #[test]
    fn uniform_portfolio_covers_solar_and_wind_only() {
        let catalog = SourceCatalog::bundled_defaults();
        let ppa = PpaPortfolio::uniform(0.5, &catalog).unwrap();
        assert_eq!(ppa.fraction("solar"), 0.5);
        assert_eq!(ppa.fraction("wind"), 0.5);
        assert_eq!(ppa.fraction("hydro"), 0.0);
        assert_eq!(ppa.fraction("coal"), 0.0);
    }

    #[test]
    fn ppa_eligible_requires_renewable() {
        let err = EnergySource::new("diesel", 900.0, false, true).unwrap_err();
        assert_eq!(err, GridError::IneligibleNonRenewable("diesel".into()));
    }

    #[test]
    fn consumer_profile_bounds() {
        assert!(ConsumerProfile::new(0.0).is_ok());
        assert!(ConsumerProfile::new(1.0).is_ok());
        assert!(ConsumerProfile::new(1.5).is_err());
        assert!(ConsumerProfile::new(-0.2).is_err());
    }

    #[test]
    fn bundled_defaults_match_reference_factors() {
        let catalog = SourceCatalog::bundled_defaults();
        assert_eq!(catalog.get("coal").unwrap().cef, 760.0);
        assert_eq!(catalog.get("gas").unwrap().cef, 370.0);
        for renewable in ["solar", "wind", "hydro", "geothermal"] {
            assert_eq!(catalog.get(renewable).unwrap().cef, 0.0);
        }
        assert!(catalog.get("solar").unwrap().ppa_eligible);
        assert!(catalog.get("wind").unwrap().ppa_eligible);
        assert!(!catalog.get("hydro").unwrap().ppa_eligible);
    }
}
