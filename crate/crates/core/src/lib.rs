//! Simulation library for electricity-grid carbon accounting and carbon-aware
//! workload optimization.
//!
//! The library models hourly per-source electricity generation ([`grid`]),
//! derives carbon-intensity signals under location-based and market-based
//! attribution with configurable PPA portfolios ([`attribution`]), runs three
//! carbon-aware optimization techniques against any such signal
//! ([`optimizers`]), and quantifies the savings and discrepancies that appear
//! when decisions and evaluations use different attribution methods
//! ([`evaluation`]). [`dataio`] covers CSV/JSON ingestion, seeded synthetic
//! fixtures, and machine-readable reports.

pub mod attribution;
pub mod dataio;
pub mod evaluation;
pub mod grid;
pub mod optimizers;

pub use attribution::{
    ci_lb, ci_mb, ci_res, divergence, residual_mix, AttributionError, AttributionMethod,
    CarbonSignal, DegeneratePolicy, DivergenceGroup, DivergenceSummary, Grouping,
};
pub use dataio::{
    load_cef_csv, load_generation_csv, load_topology_json, synth_generate, write_cdf_csv,
    write_divergence_csv, write_generation_csv, write_json, write_report, write_signal_csv,
    write_sweep_csv, DataError, Report, ReportFormat, SyntheticGridSpec, Topology,
};
pub use evaluation::{
    discrepancy, evaluate, ppa_sweep, region_cdf, run_matrix, run_scenario, CdfPoint, CdfSummary,
    DecisionTrace, DiscrepancyRecord, EmissionsReport, EvalError, EvalSignals, HourEmissions,
    MethodKind, ScenarioConfig, ScenarioInputs, ScenarioMatrix, ScenarioResult, SweepRow,
    SweepTable, Technique, WorkloadSpec,
};
pub use grid::{
    validate_series, ConsumerProfile, EnergySource, GenerationSeries, GridError, PpaPortfolio,
    SourceCatalog,
};
pub use optimizers::{
    autoscale, autoscale_baseline, route_baseline, route_requests, schedule_baseline,
    schedule_job, AllocationPlan, AutoscaleJob, ClientSite, DataCenter, OptimizerError,
    RoutingAssignment, RoutingDecision, TemporalJob, ThroughputProfile, DEFAULT_ALPHA,
    DEFAULT_FLEX_HOURS, DEFAULT_MAX_INSTANCES, DEFAULT_NOMINAL_START, DEFAULT_WORK_INSTANCE_HOURS,
};

/// Relative tolerance used for floating-point equality checks throughout the
/// library (carbon-intensity arithmetic operates on measured MWh values, far
/// above this noise floor).
pub const REL_TOL: f64 = 1e-9;

/// `true` if `a` and `b` agree to [`REL_TOL`] relative error (absolute for
/// values near zero).
pub fn approx_eq(a: f64, b: f64) -> bool {
    let scale = a.abs().max(b.abs());
    (a - b).abs() <= REL_TOL * scale.max(1.0)
}
