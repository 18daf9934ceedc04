//! File ingestion, seeded synthetic datasets, and report writing.
//!
//! Input side: hourly generation CSVs (`timestamp,region,source,generation_mwh`),
//! emission-factor CSVs (`source,cef_g_per_kwh,renewable,ppa_eligible`), and
//! routing topology JSON. Rows may arrive in any order; series are
//! reassembled per region and must be hour-contiguous.
//!
//! Output side: machine-readable JSON reports and plot-ready CSV series with
//! stable column order and fixed 6-decimal formatting. Every write goes to a
//! temporary file first and is renamed into place, so a failed run leaves no
//! partial outputs, and re-running on identical inputs is byte-identical.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;
use thiserror::Error;

use crate::attribution::{CarbonSignal, DivergenceSummary};
use crate::evaluation::{CdfSummary, ScenarioMatrix, ScenarioResult, SweepRow, SweepTable};
use crate::grid::{default_series_start, EnergySource, GenerationSeries, GridError, SourceCatalog};
use crate::optimizers::{ClientSite, DataCenter, OptimizerError};

/// Hard ceiling on the hour span of one region's series (about a century);
/// anything larger is a corrupt timestamp, not a dataset.
const MAX_SPAN_HOURS: i64 = 876_000;

/// Errors raised while reading or writing data files.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("region `{region}` is missing hour {hour}")]
    GapInSeries { region: String, hour: usize },
    #[error("duplicate row for source `{name}` at hour {hour} in region `{region}`")]
    DuplicateRow {
        region: String,
        hour: usize,
        name: String,
    },
    #[error("synthetic spec field `{field}` has invalid value {value}")]
    InvalidSpec { field: &'static str, value: f64 },
    #[error("I/O failure: {0}")]
    IoError(#[from] std::io::Error),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
}

fn parse_error(line: usize, message: impl Into<String>) -> DataError {
    DataError::ParseError {
        line,
        message: message.into(),
    }
}

fn csv_error(err: csv::Error) -> DataError {
    let line = err
        .position()
        .map(|position| position.line() as usize)
        .unwrap_or(1);
    parse_error(line, err.to_string())
}

/// Accepts RFC 3339 (`2022-01-01T00:00:00Z`, offsets allowed) and the
/// minute-precision shorthand `2022-01-01T00:00Z`.
fn parse_timestamp(text: &str) -> Option<DateTime<Utc>> {
    if let Ok(ts) = DateTime::parse_from_rfc3339(text) {
        return Some(ts.with_timezone(&Utc));
    }
    NaiveDateTime::parse_from_str(text, "%Y-%m-%dT%H:%MZ")
        .ok()
        .map(|naive| naive.and_utc())
}

fn check_header(
    reader: &mut csv::Reader<File>,
    expected: &[&str],
) -> Result<(), DataError> {
    let headers = reader.headers().map_err(csv_error)?;
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(parse_error(
            1,
            format!("expected header `{}`, found `{}`", expected.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    Ok(())
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>, DataError> {
    let file = File::open(path)?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file))
}

struct RegionRows {
    min_ts: DateTime<Utc>,
    /// (timestamp, source, value, 1-based file line).
    rows: Vec<(DateTime<Utc>, String, f64, usize)>,
}

/// Loads an hourly generation CSV and reassembles one validated series per
/// region (sorted by region id). Rows may appear in any order; each region's
/// hours must be contiguous per source and each (region, hour, source) cell
/// may appear once.
pub fn load_generation_csv(path: impl AsRef<Path>) -> Result<Vec<GenerationSeries>, DataError> {
    let mut reader = open_csv(path.as_ref())?;
    check_header(&mut reader, &["timestamp", "region", "source", "generation_mwh"])?;

    let mut regions: BTreeMap<String, RegionRows> = BTreeMap::new();
    for result in reader.records() {
        let record = result.map_err(csv_error)?;
        let line = record
            .position()
            .map(|position| position.line() as usize)
            .unwrap_or(0);
        let ts = parse_timestamp(&record[0])
            .ok_or_else(|| parse_error(line, format!("invalid timestamp `{}`", &record[0])))?;
        let region = record[1].to_string();
        let source = record[2].to_string();
        let value: f64 = record[3]
            .parse()
            .map_err(|_| parse_error(line, format!("invalid generation value `{}`", &record[3])))?;
        let entry = regions.entry(region).or_insert_with(|| RegionRows {
            min_ts: ts,
            rows: Vec::new(),
        });
        entry.min_ts = entry.min_ts.min(ts);
        entry.rows.push((ts, source, value, line));
    }

    let mut out = Vec::with_capacity(regions.len());
    for (region, bucket) in regions {
        let mut per_source: BTreeMap<String, BTreeMap<usize, f64>> = BTreeMap::new();
        let mut horizon = 0usize;
        for (ts, source, value, line) in bucket.rows {
            let offset = (ts - bucket.min_ts).num_seconds();
            if offset % 3600 != 0 {
                return Err(parse_error(
                    line,
                    format!("timestamp `{ts}` is not aligned to the hourly grid of region `{region}`"),
                ));
            }
            let hours = offset / 3600;
            if hours >= MAX_SPAN_HOURS {
                return Err(parse_error(
                    line,
                    format!("timestamp `{ts}` puts region `{region}` beyond the supported span"),
                ));
            }
            let hour = hours as usize;
            horizon = horizon.max(hour + 1);
            if per_source
                .entry(source.clone())
                .or_default()
                .insert(hour, value)
                .is_some()
            {
                return Err(DataError::DuplicateRow {
                    region,
                    hour,
                    name: source,
                });
            }
        }
        let mut series: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (source, cells) in per_source {
            let mut values = Vec::with_capacity(horizon);
            for hour in 0..horizon {
                match cells.get(&hour) {
                    Some(&value) => values.push(value),
                    None => {
                        return Err(DataError::GapInSeries { region, hour });
                    }
                }
            }
            series.insert(source, values);
        }
        out.push(GenerationSeries::new(region, bucket.min_ts, series)?);
    }
    Ok(out)
}

/// Loads an emission-factor CSV into a source catalog.
pub fn load_cef_csv(path: impl AsRef<Path>) -> Result<SourceCatalog, DataError> {
    let mut reader = open_csv(path.as_ref())?;
    check_header(&mut reader, &["source", "cef_g_per_kwh", "renewable", "ppa_eligible"])?;
    let mut catalog = SourceCatalog::new();
    for result in reader.records() {
        let record = result.map_err(csv_error)?;
        let line = record
            .position()
            .map(|position| position.line() as usize)
            .unwrap_or(0);
        let cef: f64 = record[1]
            .parse()
            .map_err(|_| parse_error(line, format!("invalid emission factor `{}`", &record[1])))?;
        let renewable = parse_bool(&record[2], line)?;
        let ppa_eligible = parse_bool(&record[3], line)?;
        catalog.insert(EnergySource::new(&record[0], cef, renewable, ppa_eligible)?)?;
    }
    Ok(catalog)
}

fn parse_bool(text: &str, line: usize) -> Result<bool, DataError> {
    match text.to_ascii_lowercase().as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(parse_error(line, format!("expected `true` or `false`, found `{other}`"))),
    }
}

/// Data-center/client-site layout for routing scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub dcs: Vec<DataCenter>,
    pub sites: Vec<ClientSite>,
}

impl Topology {
    /// Re-checks every constructor invariant; deserialized values bypass the
    /// constructors, so loads must call this.
    pub fn validate(&self) -> Result<(), OptimizerError> {
        for dc in &self.dcs {
            dc.validate()?;
        }
        for site in &self.sites {
            site.validate()?;
        }
        Ok(())
    }
}

/// Loads and validates a routing topology JSON file.
pub fn load_topology_json(path: impl AsRef<Path>) -> Result<Topology, DataError> {
    let file = File::open(path.as_ref())?;
    let topology: Topology = serde_json::from_reader(BufReader::new(file))
        .map_err(|err| parse_error(err.line().max(1), err.to_string()))?;
    topology.validate()?;
    Ok(topology)
}

/// Parameters of one synthetic region: constant coal baseload, gas with an
/// evening peaker bump, sinusoidal daytime solar, and seeded-noise wind.
/// The same spec always produces the same series, bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGridSpec {
    pub region_id: String,
    pub days: u32,
    /// Constant coal output, MWh per hour.
    pub baseload_coal: f64,
    /// Gas floor, MWh per hour.
    pub gas_base: f64,
    /// Extra gas at the evening peak (ramps over local 16:00-24:00).
    pub gas_peaker_amplitude: f64,
    /// Solar output at local noon; zero at night.
    pub solar_peak: f64,
    pub wind_mean: f64,
    /// Wind varies uniformly within ±jitter of the mean (clamped at zero).
    pub wind_jitter: f64,
    /// Shifts the diurnal profiles relative to the UTC timestamps.
    pub utc_offset_hours: i32,
    /// Seed for the wind noise; everything else is deterministic in the
    /// other fields.
    pub rng_seed: u64,
}

impl SyntheticGridSpec {
    fn validate(&self) -> Result<(), DataError> {
        if self.days == 0 {
            return Err(DataError::InvalidSpec {
                field: "days",
                value: 0.0,
            });
        }
        for (field, value) in [
            ("baseload_coal", self.baseload_coal),
            ("gas_base", self.gas_base),
            ("gas_peaker_amplitude", self.gas_peaker_amplitude),
            ("solar_peak", self.solar_peak),
            ("wind_mean", self.wind_mean),
            ("wind_jitter", self.wind_jitter),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(DataError::InvalidSpec { field, value });
            }
        }
        Ok(())
    }

    /// A solar-heavy region with strong gas peakers: big diurnal swings in
    /// the location-based signal, fossil-backed residual at every hour.
    pub fn caiso_like() -> Self {
        Self {
            region_id: "caiso-like".into(),
            days: 7,
            baseload_coal: 800.0,
            gas_base: 5000.0,
            gas_peaker_amplitude: 4000.0,
            solar_peak: 12000.0,
            wind_mean: 4000.0,
            wind_jitter: 1000.0,
            utc_offset_hours: 0,
            rng_seed: 20220101,
        }
    }

    /// A wind-and-coal region: flatter, dirtier, and noisier than
    /// [`Self::caiso_like`].
    pub fn ercot_like() -> Self {
        Self {
            region_id: "ercot-like".into(),
            days: 7,
            baseload_coal: 9000.0,
            gas_base: 6000.0,
            gas_peaker_amplitude: 2500.0,
            solar_peak: 3000.0,
            wind_mean: 9000.0,
            wind_jitter: 3500.0,
            utc_offset_hours: 0,
            rng_seed: 20220102,
        }
    }
}

/// Generates the deterministic synthetic series described by a spec. The
/// series starts at the default series epoch (midnight UTC) and covers
/// `days * 24` hours with sources `coal`, `gas`, `solar`, `wind`.
pub fn synth_generate(spec: &SyntheticGridSpec) -> Result<GenerationSeries, DataError> {
    spec.validate()?;
    let hours = spec.days as usize * 24;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);

    let mut coal = Vec::with_capacity(hours);
    let mut gas = Vec::with_capacity(hours);
    let mut solar = Vec::with_capacity(hours);
    let mut wind = Vec::with_capacity(hours);
    for t in 0..hours {
        let local = (t as i64 + spec.utc_offset_hours as i64).rem_euclid(24) as f64;
        coal.push(spec.baseload_coal);
        // Evening ramp: zero before 16:00 local, sinusoidal hump peaking at
        // 20:00. Gating on the hour (not just max(0, sin)) keeps the early
        // morning flat — the sine itself goes positive again there.
        let peaker = if local >= 16.0 {
            (std::f64::consts::PI * (local - 16.0) / 8.0).sin()
        } else {
            0.0
        };
        gas.push(spec.gas_base + spec.gas_peaker_amplitude * peaker);
        // Daylight runs strictly between 06:00 and 18:00 local. Gating on the
        // hour keeps sunset exactly zero — sin(pi) alone leaves a ~1e-16
        // residue that would smuggle phantom solar into the 18:00 rows.
        let daylight = if local > 6.0 && local < 18.0 {
            (std::f64::consts::PI * (local - 6.0) / 12.0).sin()
        } else {
            0.0
        };
        solar.push(spec.solar_peak * daylight);
        let noise: f64 = rng.gen_range(-1.0..=1.0);
        wind.push((spec.wind_mean + spec.wind_jitter * noise).max(0.0));
    }

    let per_source = BTreeMap::from([
        ("coal".to_string(), coal),
        ("gas".to_string(), gas),
        ("solar".to_string(), solar),
        ("wind".to_string(), wind),
    ]);
    Ok(GenerationSeries::new(
        spec.region_id.clone(),
        default_series_start(),
        per_source,
    )?)
}

/// Output encodings for reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Json => "json",
            Self::Csv => "csv",
        }
    }
}

/// Writes bytes to `path` atomically: the content lands in a temporary file
/// in the same directory and is renamed over the target, so interrupted runs
/// never leave partial files.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), DataError> {
    let dir = match path.parent() {
        Some(parent) if !parent.as_os_str().is_empty() => parent,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    // Temp files are created owner-only; reports should get ordinary
    // permissions once they land at their final path.
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    tmp.persist(path).map_err(|err| DataError::IoError(err.error))?;
    Ok(())
}

fn timestamp_text(ts: DateTime<Utc>) -> String {
    ts.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Writes generation series back to the loader's CSV schema. Values use
/// shortest-round-trip formatting, so a write/load cycle reproduces the
/// series exactly.
pub fn write_generation_csv(
    path: impl AsRef<Path>,
    series_set: &[GenerationSeries],
) -> Result<(), DataError> {
    let mut out = String::from("timestamp,region,source,generation_mwh\n");
    for series in series_set {
        for hour in 0..series.len() {
            let ts = timestamp_text(series.timestamp(hour));
            for (source, values) in series.sources() {
                out.push_str(&format!(
                    "{ts},{},{source},{}\n",
                    series.region_id, values[hour]
                ));
            }
        }
    }
    write_atomic(path.as_ref(), out.as_bytes())
}

/// Writes one carbon signal as a plot-ready hourly CSV.
pub fn write_signal_csv(path: impl AsRef<Path>, signal: &CarbonSignal) -> Result<(), DataError> {
    let mut out = String::from("hour,timestamp,ci_g_per_kwh\n");
    for (hour, value) in signal.values.iter().enumerate() {
        out.push_str(&format!(
            "{hour},{},{value:.6}\n",
            timestamp_text(signal.timestamp(hour))
        ));
    }
    write_atomic(path.as_ref(), out.as_bytes())
}

/// Writes a PPA sweep as one row per fraction with the three scenario
/// savings and their discrepancy.
pub fn write_sweep_csv(path: impl AsRef<Path>, table: &SweepTable) -> Result<(), DataError> {
    let mut out = String::from(
        "fraction,lb_lb_savings_pct,lb_mb_savings_pct,mb_mb_savings_pct,discrepancy_pp\n",
    );
    for row in &table.rows {
        out.push_str(&format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            row.fraction,
            row.matrix.lb_lb.savings_pct,
            row.matrix.lb_mb.savings_pct,
            row.matrix.mb_mb.savings_pct,
            row.matrix.discrepancy.discrepancy_pp,
        ));
    }
    write_atomic(path.as_ref(), out.as_bytes())
}

/// Writes an empirical CDF as a two-column CSV sorted ascending.
pub fn write_cdf_csv(path: impl AsRef<Path>, summary: &CdfSummary) -> Result<(), DataError> {
    let mut out = String::from("discrepancy_pp,cumulative\n");
    for point in &summary.points {
        out.push_str(&format!(
            "{:.6},{:.6}\n",
            point.discrepancy_pp, point.cumulative
        ));
    }
    write_atomic(path.as_ref(), out.as_bytes())
}

/// Writes per-group divergence statistics.
pub fn write_divergence_csv(
    path: impl AsRef<Path>,
    summary: &DivergenceSummary,
) -> Result<(), DataError> {
    let mut out =
        String::from("group,hours,mean_increase_pct,median_increase_pct,max_increase_pct\n");
    for group in &summary.groups {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6}\n",
            group.key,
            group.hours,
            group.mean_increase_pct,
            group.median_increase_pct,
            group.max_increase_pct,
        ));
    }
    write_atomic(path.as_ref(), out.as_bytes())
}

/// Writes any serializable result as pretty-printed JSON (atomically, like
/// the CSV writers).
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<(), DataError> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .expect("report structures serialize without fallible map keys");
    bytes.push(b'\n');
    write_atomic(path.as_ref(), &bytes)
}

/// One result payload [`write_report`] can serialize.
#[derive(Debug, Clone, Copy)]
pub enum Report<'a> {
    /// Per-hour carbon-intensity series.
    Signal(&'a CarbonSignal),
    /// One OPT/EVAL scenario matrix at a fixed contracted fraction.
    Matrix(&'a ScenarioMatrix),
    /// A PPA-fraction sweep, one row per fraction.
    Sweep(&'a SweepTable),
    /// Empirical CDF of savings discrepancies.
    Cdf(&'a CdfSummary),
    /// A flat list of scenario results; an empty list is a valid report.
    Scenarios(&'a [ScenarioResult]),
}

/// Writes one report to `<stem>.json` or `<stem>.csv` and returns the path
/// written. Columns keep a stable order with 6-decimal fixed formatting, so
/// re-running on identical inputs reproduces the file byte for byte.
pub fn write_report(
    stem: impl AsRef<Path>,
    report: &Report<'_>,
    format: ReportFormat,
) -> Result<PathBuf, DataError> {
    // Append rather than `with_extension`: a stem like `pjm.east` must not
    // lose its tail.
    let mut name = stem.as_ref().as_os_str().to_os_string();
    name.push(".");
    name.push(format.extension());
    let path = PathBuf::from(name);
    match format {
        ReportFormat::Json => match report {
            Report::Signal(signal) => write_json(&path, signal)?,
            Report::Matrix(matrix) => write_json(&path, matrix)?,
            Report::Sweep(table) => write_json(&path, table)?,
            Report::Cdf(summary) => write_json(&path, summary)?,
            Report::Scenarios(results) => write_json(&path, &results)?,
        },
        ReportFormat::Csv => match report {
            Report::Signal(signal) => write_signal_csv(&path, signal)?,
            Report::Matrix(matrix) => {
                // A single matrix prints as a one-row sweep table: same
                // columns, with the fraction the matrix was computed at.
                let table = SweepTable {
                    technique: matrix.lb_lb.technique,
                    region_id: matrix.lb_lb.region_id.clone(),
                    rows: vec![SweepRow {
                        fraction: matrix.lb_lb.ppa_fraction,
                        matrix: (*matrix).clone(),
                    }],
                };
                write_sweep_csv(&path, &table)?;
            }
            Report::Sweep(table) => write_sweep_csv(&path, table)?,
            Report::Cdf(summary) => write_cdf_csv(&path, summary)?,
            Report::Scenarios(results) => write_scenarios_csv(&path, results)?,
        },
    }
    Ok(path)
}

/// Writes scenario results as one CSV row each; an empty slice produces a
/// header-only file.
fn write_scenarios_csv(path: &Path, results: &[ScenarioResult]) -> Result<(), DataError> {
    let mut out = String::from(
        "technique,region,opt_method,eval_method,ppa_fraction,\
         baseline_g,optimized_g,savings_pct,per_kwh_savings_pct\n",
    );
    for result in results {
        out.push_str(&format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            result.technique,
            result.region_id,
            result.opt_method,
            result.eval_method,
            result.ppa_fraction,
            result.baseline.total_g,
            result.optimized.total_g,
            result.savings_pct,
            result.per_kwh_savings_pct,
        ));
    }
    write_atomic(path, out.as_bytes())
}
