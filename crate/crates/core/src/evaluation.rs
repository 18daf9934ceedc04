//! Evaluation of optimizer decisions under arbitrary carbon signals, the
//! optimize-under-x / evaluate-under-y scenario matrix, savings and
//! discrepancy metrics, PPA-fraction sweeps, and multi-region CDF summaries.
//!
//! The central trick of the whole simulator lives here: a [`DecisionTrace`]
//! is fixed once by an optimizer, then its emissions can be measured under
//! any signal. Savings that look large under one attribution method can
//! evaporate — or reverse sign — under the other.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribution::{
    ci_lb, ci_mb, ci_res, AttributionError, CarbonSignal, DegeneratePolicy,
};
use crate::grid::{ConsumerProfile, GenerationSeries, PpaPortfolio, SourceCatalog};
use crate::optimizers::{
    autoscale, autoscale_baseline, route_baseline, route_requests, schedule_baseline,
    schedule_job, AllocationPlan, AutoscaleJob, ClientSite, DataCenter, OptimizerError,
    RoutingAssignment, TemporalJob,
};

/// Errors raised while evaluating scenarios.
#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("signal covers {available} hours but the decision spans {needed}")]
    SignalSpanMismatch { needed: usize, available: usize },
    #[error("this decision must be evaluated against {expected}")]
    SignalKindMismatch { expected: &'static str },
    #[error("no carbon signal provided for region `{region_id}`")]
    MissingSignal { region_id: String },
    #[error("scenario results are not comparable: {reason}")]
    MismatchedScenarios { reason: String },
    #[error("this workload needs exactly one region, got {found}")]
    SingleRegionRequired { found: usize },
    #[error("region `{region_id}` appears more than once in the series set")]
    DuplicateRegion { region_id: String },
    #[error("input collection is empty")]
    EmptyInput,
    #[error(transparent)]
    Attribution(#[from] AttributionError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
}

/// Attribution method a scenario cell optimizes or evaluates under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Lb,
    Mb,
}

impl fmt::Display for MethodKind {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Lb => write!(out, "lb"),
            Self::Mb => write!(out, "mb"),
        }
    }
}

/// The three optimization techniques.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Technique {
    Spatial,
    Temporal,
    Autoscale,
}

impl fmt::Display for Technique {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Spatial => write!(out, "spatial"),
            Self::Temporal => write!(out, "temporal"),
            Self::Autoscale => write!(out, "autoscale"),
        }
    }
}

/// A fixed optimizer output, evaluable under any signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionTrace {
    Routing(RoutingAssignment),
    Temporal { job: TemporalJob, start: usize },
    Autoscale { job: AutoscaleJob, plan: AllocationPlan },
}

/// Signals to evaluate a trace under: routing consumes in many regions at
/// once, the single-region techniques in one.
#[derive(Debug, Clone, Copy)]
pub enum EvalSignals<'a> {
    Single(&'a CarbonSignal),
    PerRegion(&'a BTreeMap<String, CarbonSignal>),
}

/// Energy and emissions of one hour of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourEmissions {
    pub hour: usize,
    pub energy_kwh: f64,
    pub grams: f64,
}

/// Emissions of one decision trace under one signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionsReport {
    /// Grams CO2-eq emitted over the whole trace.
    pub total_g: f64,
    /// Energy consumed, kWh.
    pub total_kwh: f64,
    /// `total_g / total_kwh` (0 when no energy is consumed).
    pub per_kwh: f64,
    pub per_hour: Vec<HourEmissions>,
}

fn report_from(by_hour: BTreeMap<usize, (f64, f64)>) -> EmissionsReport {
    let mut total_kwh = 0.0;
    let mut total_g = 0.0;
    let per_hour = by_hour
        .into_iter()
        .map(|(hour, (energy_kwh, grams))| {
            total_kwh += energy_kwh;
            total_g += grams;
            HourEmissions {
                hour,
                energy_kwh,
                grams,
            }
        })
        .collect();
    let per_kwh = if total_kwh > 0.0 {
        total_g / total_kwh
    } else {
        0.0
    };
    EmissionsReport {
        total_g,
        total_kwh,
        per_kwh,
        per_hour,
    }
}

/// Emissions of a trace under a signal: the sum over consuming (hour,
/// entity) pairs of energy times that hour's CI. Routing uses the signal of
/// each assigned DC's region.
pub fn evaluate(trace: &DecisionTrace, signals: &EvalSignals) -> Result<EmissionsReport, EvalError> {
    let mut by_hour: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    match trace {
        DecisionTrace::Routing(assignment) => {
            let EvalSignals::PerRegion(map) = signals else {
                return Err(EvalError::SignalKindMismatch {
                    expected: "a per-region signal map",
                });
            };
            for decision in &assignment.decisions {
                let signal =
                    map.get(&decision.region_id)
                        .ok_or_else(|| EvalError::MissingSignal {
                            region_id: decision.region_id.clone(),
                        })?;
                if decision.hour >= signal.len() {
                    return Err(EvalError::SignalSpanMismatch {
                        needed: decision.hour + 1,
                        available: signal.len(),
                    });
                }
                let entry = by_hour.entry(decision.hour).or_insert((0.0, 0.0));
                entry.0 += decision.energy_kwh;
                entry.1 += decision.energy_kwh * signal.values[decision.hour];
            }
        }
        DecisionTrace::Temporal { job, start } => {
            let signal = single_signal(signals)?;
            let needed = start + job.duration;
            if needed > signal.len() {
                return Err(EvalError::SignalSpanMismatch {
                    needed,
                    available: signal.len(),
                });
            }
            for t in *start..needed {
                // 1 kW over one hour is 1 kWh.
                by_hour.insert(t, (job.power_kw, job.power_kw * signal.values[t]));
            }
        }
        DecisionTrace::Autoscale { job, plan } => {
            let signal = single_signal(signals)?;
            let needed = plan.release + plan.counts.len();
            if needed > signal.len() {
                return Err(EvalError::SignalSpanMismatch {
                    needed,
                    available: signal.len(),
                });
            }
            for (offset, &count) in plan.counts.iter().enumerate() {
                let t = plan.release + offset;
                let energy = count as f64 * job.per_instance_power_kw;
                by_hour.insert(t, (energy, energy * signal.values[t]));
            }
        }
    }
    Ok(report_from(by_hour))
}

fn single_signal<'a>(signals: &EvalSignals<'a>) -> Result<&'a CarbonSignal, EvalError> {
    match signals {
        EvalSignals::Single(signal) => Ok(signal),
        EvalSignals::PerRegion(_) => Err(EvalError::SignalKindMismatch {
            expected: "a single-region signal",
        }),
    }
}

/// The workload one scenario optimizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadSpec {
    Spatial {
        sites: Vec<ClientSite>,
        dcs: Vec<DataCenter>,
        alpha: f64,
        latency_cap: Option<f64>,
    },
    Temporal {
        job: TemporalJob,
    },
    Autoscale {
        job: AutoscaleJob,
    },
}

impl WorkloadSpec {
    pub fn technique(&self) -> Technique {
        match self {
            Self::Spatial { .. } => Technique::Spatial,
            Self::Temporal { .. } => Technique::Temporal,
            Self::Autoscale { .. } => Technique::Autoscale,
        }
    }
}

/// Generation data plus the workload to run against it.
#[derive(Debug, Clone)]
pub struct ScenarioInputs {
    /// One series per region. Spatial workloads may span several regions;
    /// temporal and autoscale need exactly one.
    pub series: Vec<GenerationSeries>,
    pub catalog: SourceCatalog,
    pub workload: WorkloadSpec,
}

/// Everything that parameterizes one scenario cell.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    /// Grid-level PPA portfolio (applied to every region).
    pub ppa: PpaPortfolio,
    /// Scalar label for the portfolio, carried into records (the uniform
    /// fraction for sweep rows).
    pub ppa_fraction: f64,
    pub opt_method: MethodKind,
    pub eval_method: MethodKind,
    /// The evaluated consumer's own PPA coverage (no PPAs by default).
    pub consumer: ConsumerProfile,
    pub degenerate_policy: DegeneratePolicy,
}

impl ScenarioConfig {
    pub fn cell(
        ppa: PpaPortfolio,
        ppa_fraction: f64,
        opt_method: MethodKind,
        eval_method: MethodKind,
    ) -> Self {
        Self {
            ppa,
            ppa_fraction,
            opt_method,
            eval_method,
            consumer: ConsumerProfile::no_ppa(),
            degenerate_policy: DegeneratePolicy::Error,
        }
    }
}

/// Baseline and optimized emissions for one (opt_method, eval_method) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub technique: Technique,
    pub region_id: String,
    pub opt_method: MethodKind,
    pub eval_method: MethodKind,
    pub ppa_fraction: f64,
    pub baseline: EmissionsReport,
    pub optimized: EmissionsReport,
    /// `100 * (baseline - optimized) / baseline` on total grams; negative
    /// when the "optimization" increased emissions; 0 when the baseline
    /// emits nothing.
    pub savings_pct: f64,
    /// Same ratio on g/kWh; differs from `savings_pct` only when baseline
    /// and optimized traces consume different energy.
    pub per_kwh_savings_pct: f64,
    pub decision: DecisionTrace,
    pub baseline_decision: DecisionTrace,
}

/// Savings of one eval-signal discrepancy pair, in percentage points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyRecord {
    pub region_id: String,
    pub ppa_fraction: f64,
    /// `savings_pct(eval = lb) - savings_pct(eval = mb)` for identical
    /// decisions.
    pub discrepancy_pp: f64,
}

/// The three standard cells for one (inputs, portfolio) pair, with the
/// lb-optimized decision shared bit-identically between its two evaluations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMatrix {
    pub lb_lb: ScenarioResult,
    pub lb_mb: ScenarioResult,
    pub mb_mb: ScenarioResult,
    pub discrepancy: DiscrepancyRecord,
}

/// One fraction's results in a PPA sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub fraction: f64,
    pub matrix: ScenarioMatrix,
}

/// PPA sweep output: one row per contracted fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub technique: Technique,
    pub region_id: String,
    pub rows: Vec<SweepRow>,
}

fn percentage_savings(baseline: f64, optimized: f64) -> f64 {
    if baseline == 0.0 {
        0.0
    } else {
        100.0 * (baseline - optimized) / baseline
    }
}

/// Per-region signal lookups: the location-based map and the market-based map.
type SignalMapPair = (BTreeMap<String, CarbonSignal>, BTreeMap<String, CarbonSignal>);

fn signal_maps(
    inputs: &ScenarioInputs,
    ppa: &PpaPortfolio,
    consumer: &ConsumerProfile,
    policy: DegeneratePolicy,
) -> Result<SignalMapPair, EvalError> {
    let mut lb_map = BTreeMap::new();
    let mut mb_map = BTreeMap::new();
    for series in &inputs.series {
        if lb_map.contains_key(&series.region_id) {
            return Err(EvalError::DuplicateRegion {
                region_id: series.region_id.clone(),
            });
        }
        let lb = ci_lb(series, &inputs.catalog)?;
        let res = ci_res(series, &inputs.catalog, ppa, policy)?;
        let mb = ci_mb(&res, consumer)?;
        lb_map.insert(series.region_id.clone(), lb);
        mb_map.insert(series.region_id.clone(), mb);
    }
    Ok((lb_map, mb_map))
}

fn optimize_workload(
    workload: &WorkloadSpec,
    signals: &BTreeMap<String, CarbonSignal>,
) -> Result<DecisionTrace, EvalError> {
    match workload {
        WorkloadSpec::Spatial {
            sites,
            dcs,
            alpha,
            latency_cap,
        } => {
            let assignment = route_requests(sites, dcs, signals, *alpha, *latency_cap)?;
            Ok(DecisionTrace::Routing(assignment))
        }
        WorkloadSpec::Temporal { job } => {
            let signal = only_region(signals)?;
            let start = schedule_job(job, signal)?;
            Ok(DecisionTrace::Temporal {
                job: job.clone(),
                start,
            })
        }
        WorkloadSpec::Autoscale { job } => {
            let signal = only_region(signals)?;
            let plan = autoscale(job, signal)?;
            Ok(DecisionTrace::Autoscale {
                job: job.clone(),
                plan,
            })
        }
    }
}

fn baseline_workload(workload: &WorkloadSpec) -> Result<DecisionTrace, EvalError> {
    match workload {
        WorkloadSpec::Spatial { sites, dcs, .. } => {
            Ok(DecisionTrace::Routing(route_baseline(sites, dcs)?))
        }
        WorkloadSpec::Temporal { job } => Ok(DecisionTrace::Temporal {
            job: job.clone(),
            start: schedule_baseline(job),
        }),
        WorkloadSpec::Autoscale { job } => Ok(DecisionTrace::Autoscale {
            job: job.clone(),
            plan: autoscale_baseline(job)?,
        }),
    }
}

fn only_region(signals: &BTreeMap<String, CarbonSignal>) -> Result<&CarbonSignal, EvalError> {
    if signals.len() != 1 {
        return Err(EvalError::SingleRegionRequired {
            found: signals.len(),
        });
    }
    Ok(signals.values().next().expect("map has one entry"))
}

fn eval_signals<'a>(
    workload: &WorkloadSpec,
    map: &'a BTreeMap<String, CarbonSignal>,
) -> Result<EvalSignals<'a>, EvalError> {
    match workload {
        WorkloadSpec::Spatial { .. } => Ok(EvalSignals::PerRegion(map)),
        _ => Ok(EvalSignals::Single(only_region(map)?)),
    }
}

fn scenario_region(inputs: &ScenarioInputs) -> String {
    let mut regions: Vec<&str> = inputs
        .series
        .iter()
        .map(|s| s.region_id.as_str())
        .collect();
    regions.sort_unstable();
    regions.join("+")
}

#[allow(clippy::too_many_arguments)]
fn assemble_cell(
    inputs: &ScenarioInputs,
    ppa_fraction: f64,
    opt_method: MethodKind,
    eval_method: MethodKind,
    decision: DecisionTrace,
    baseline_decision: DecisionTrace,
    eval_map: &BTreeMap<String, CarbonSignal>,
) -> Result<ScenarioResult, EvalError> {
    let signals = eval_signals(&inputs.workload, eval_map)?;
    let optimized = evaluate(&decision, &signals)?;
    let baseline = evaluate(&baseline_decision, &signals)?;
    let savings_pct = percentage_savings(baseline.total_g, optimized.total_g);
    let per_kwh_savings_pct = percentage_savings(baseline.per_kwh, optimized.per_kwh);
    Ok(ScenarioResult {
        technique: inputs.workload.technique(),
        region_id: scenario_region(inputs),
        opt_method,
        eval_method,
        ppa_fraction,
        baseline,
        optimized,
        savings_pct,
        per_kwh_savings_pct,
        decision,
        baseline_decision,
    })
}

/// Runs one scenario cell: build the lb and mb signals, optimize the
/// technique and its baseline under the opt-method signal, measure both
/// under the eval-method signal.
pub fn run_scenario(
    inputs: &ScenarioInputs,
    config: &ScenarioConfig,
) -> Result<ScenarioResult, EvalError> {
    let (lb_map, mb_map) = signal_maps(inputs, &config.ppa, &config.consumer, config.degenerate_policy)?;
    let opt_map = match config.opt_method {
        MethodKind::Lb => &lb_map,
        MethodKind::Mb => &mb_map,
    };
    let eval_map = match config.eval_method {
        MethodKind::Lb => &lb_map,
        MethodKind::Mb => &mb_map,
    };
    let decision = optimize_workload(&inputs.workload, opt_map)?;
    let baseline_decision = baseline_workload(&inputs.workload)?;
    assemble_cell(
        inputs,
        config.ppa_fraction,
        config.opt_method,
        config.eval_method,
        decision,
        baseline_decision,
        eval_map,
    )
}

/// Difference of two savings percentages for the *same* decisions evaluated
/// under lb and mb, in percentage points.
pub fn discrepancy(
    lb_lb: &ScenarioResult,
    lb_mb: &ScenarioResult,
) -> Result<DiscrepancyRecord, EvalError> {
    let mismatch = |reason: &str| EvalError::MismatchedScenarios {
        reason: reason.to_string(),
    };
    if lb_lb.decision != lb_mb.decision || lb_lb.baseline_decision != lb_mb.baseline_decision {
        return Err(mismatch("decision traces differ"));
    }
    if lb_lb.ppa_fraction != lb_mb.ppa_fraction {
        return Err(mismatch("PPA fractions differ"));
    }
    if lb_lb.region_id != lb_mb.region_id {
        return Err(mismatch("regions differ"));
    }
    if lb_lb.eval_method != MethodKind::Lb || lb_mb.eval_method != MethodKind::Mb {
        return Err(mismatch("expected one lb-evaluated and one mb-evaluated result"));
    }
    Ok(DiscrepancyRecord {
        region_id: lb_lb.region_id.clone(),
        ppa_fraction: lb_lb.ppa_fraction,
        discrepancy_pp: lb_lb.savings_pct - lb_mb.savings_pct,
    })
}

/// Runs the three standard cells. The lb-optimized decision is optimized
/// once and evaluated under both signals, so `lb_lb` and `lb_mb` carry
/// bit-identical traces by construction.
pub fn run_matrix(
    inputs: &ScenarioInputs,
    ppa: &PpaPortfolio,
    ppa_fraction: f64,
    consumer: &ConsumerProfile,
    policy: DegeneratePolicy,
) -> Result<ScenarioMatrix, EvalError> {
    let (lb_map, mb_map) = signal_maps(inputs, ppa, consumer, policy)?;
    let baseline_decision = baseline_workload(&inputs.workload)?;
    let lb_decision = optimize_workload(&inputs.workload, &lb_map)?;
    let mb_decision = optimize_workload(&inputs.workload, &mb_map)?;

    let lb_lb = assemble_cell(
        inputs,
        ppa_fraction,
        MethodKind::Lb,
        MethodKind::Lb,
        lb_decision.clone(),
        baseline_decision.clone(),
        &lb_map,
    )?;
    let lb_mb = assemble_cell(
        inputs,
        ppa_fraction,
        MethodKind::Lb,
        MethodKind::Mb,
        lb_decision,
        baseline_decision.clone(),
        &mb_map,
    )?;
    let mb_mb = assemble_cell(
        inputs,
        ppa_fraction,
        MethodKind::Mb,
        MethodKind::Mb,
        mb_decision,
        baseline_decision,
        &mb_map,
    )?;
    let discrepancy = discrepancy(&lb_lb, &lb_mb)?;
    Ok(ScenarioMatrix {
        lb_lb,
        lb_mb,
        mb_mb,
        discrepancy,
    })
}

/// Runs the scenario matrix at each fraction, contracting that fraction of
/// every PPA-eligible source.
pub fn ppa_sweep(
    inputs: &ScenarioInputs,
    fractions: &[f64],
    consumer: &ConsumerProfile,
    policy: DegeneratePolicy,
) -> Result<SweepTable, EvalError> {
    if fractions.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let rows = fractions
        .iter()
        .map(|&fraction| {
            let ppa = PpaPortfolio::uniform(fraction, &inputs.catalog)
                .map_err(AttributionError::from)?;
            let matrix = run_matrix(inputs, &ppa, fraction, consumer, policy)?;
            Ok(SweepRow { fraction, matrix })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(SweepTable {
        technique: inputs.workload.technique(),
        region_id: scenario_region(inputs),
        rows,
    })
}

/// One step of an empirical CDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub discrepancy_pp: f64,
    /// Fraction of records at or below this value.
    pub cumulative: f64,
}

/// Empirical CDF of discrepancies across records, with mean and max.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfSummary {
    /// Sorted ascending; ties merged; the last point has cumulative 1.
    pub points: Vec<CdfPoint>,
    pub mean: f64,
    pub max: f64,
}

/// Standard empirical CDF of the records' discrepancies.
pub fn region_cdf(records: &[DiscrepancyRecord]) -> Result<CdfSummary, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut values: Vec<f64> = records.iter().map(|r| r.discrepancy_pp).collect();
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len() as f64;
    let mut points: Vec<CdfPoint> = Vec::new();
    for (i, &value) in values.iter().enumerate() {
        let cumulative = (i + 1) as f64 / n;
        match points.last_mut() {
            Some(last) if last.discrepancy_pp == value => last.cumulative = cumulative,
            _ => points.push(CdfPoint {
                discrepancy_pp: value,
                cumulative,
            }),
        }
    }
    Ok(CdfSummary {
        points,
        mean: values.iter().sum::<f64>() / n,
        max: *values.last().expect("records are non-empty"),
    })
}
