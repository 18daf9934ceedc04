//! Command-line front end: every pipeline stage as a subcommand, emitting
//! plot-ready CSV / JSON into an output directory.
//!
//! Exit codes: 0 on success, 1 on data/domain errors (stderr carries the
//! originating error name), 2 on usage errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use carbonsim::attribution::{
    ci_lb, ci_mb, ci_res, divergence, AttributionError, DegeneratePolicy, Grouping,
};
use carbonsim::dataio::{
    load_cef_csv, load_generation_csv, load_topology_json, synth_generate, write_divergence_csv,
    write_generation_csv, write_report, DataError, Report, ReportFormat, SyntheticGridSpec,
};
use carbonsim::evaluation::{
    ppa_sweep, region_cdf, run_matrix, EvalError, ScenarioInputs, ScenarioMatrix, WorkloadSpec,
};
use carbonsim::grid::{
    ConsumerProfile, GenerationSeries, GridError, PpaPortfolio, SourceCatalog,
};
use carbonsim::optimizers::{
    AutoscaleJob, OptimizerError, TemporalJob, ThroughputProfile, DEFAULT_ALPHA,
    DEFAULT_FLEX_HOURS, DEFAULT_MAX_INSTANCES, DEFAULT_NOMINAL_START,
    DEFAULT_WORK_INSTANCE_HOURS,
};

#[derive(Parser)]
#[command(
    name = "carbonsim",
    version,
    about = "Grid carbon accounting and carbon-aware workload optimization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit location-based, residual, and market-based CI series per region
    Ci(CiArgs),
    /// Summarize how much the residual mix exceeds the grid mix
    Divergence(DivergenceArgs),
    /// Run the request-routing scenario matrix
    Route(RouteArgs),
    /// Run the job-shifting scenario matrix
    Schedule(ScheduleArgs),
    /// Run the autoscaling scenario matrix
    Autoscale(AutoscaleArgs),
    /// Sweep the scenario matrix over PPA fractions
    Sweep(SweepArgs),
    /// Empirical CDF of per-region savings discrepancies
    Cdf(CdfArgs),
    /// Generate synthetic generation fixtures
    Synth(SynthArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Hourly generation CSV: timestamp,region,source,generation_mwh (MWh)
    #[arg(long, value_name = "FILE")]
    generation: PathBuf,
    /// Emission-factor CSV: source,cef_g_per_kwh,renewable,ppa_eligible
    /// (g/kWh); bundled factors are used when omitted
    #[arg(long, value_name = "FILE")]
    cef: Option<PathBuf>,
}

#[derive(Args)]
struct OutArgs {
    /// Output directory, created if missing
    #[arg(
        long,
        env = "CARBONSIM_OUT_DIR",
        default_value = ".",
        value_name = "DIR"
    )]
    out: PathBuf,
}

#[derive(Args)]
struct PpaArgs {
    /// Grid PPA fraction contracted uniformly on every eligible source, in [0, 1]
    #[arg(long, default_value_t = 0.0, value_name = "FRACTION")]
    ppa: f64,
    /// Evaluated consumer's own PPA coverage f, in [0, 1]
    #[arg(long, default_value_t = 0.0, value_name = "FRACTION")]
    consumer_f: f64,
    /// Treatment of hours whose residual generation is zero
    #[arg(long, value_enum, default_value_t = PolicyArg::Error)]
    degenerate_policy: PolicyArg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyArg {
    /// Fail the run
    Error,
    /// Clamp the hour's residual CI to zero and flag it
    ClampZero,
}

impl From<PolicyArg> for DegeneratePolicy {
    fn from(arg: PolicyArg) -> Self {
        match arg {
            PolicyArg::Error => Self::Error,
            PolicyArg::ClampZero => Self::ClampZero,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for ReportFormat {
    fn from(format: FormatArg) -> Self {
        match format {
            FormatArg::Json => Self::Json,
            FormatArg::Csv => Self::Csv,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TechniqueArg {
    Spatial,
    Temporal,
    Autoscale,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GroupArg {
    Overall,
    HourOfDay,
    Month,
    Region,
}

impl From<GroupArg> for Grouping {
    fn from(arg: GroupArg) -> Self {
        match arg {
            GroupArg::Overall => Self::Overall,
            GroupArg::HourOfDay => Self::HourOfDay,
            GroupArg::Month => Self::Month,
            GroupArg::Region => Self::Region,
        }
    }
}

#[derive(Args)]
struct CiArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    ppa: PpaArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct DivergenceArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Grid PPA fraction contracted uniformly on every eligible source, in [0, 1]
    #[arg(long, default_value_t = 1.0, value_name = "FRACTION")]
    ppa: f64,
    /// Aggregation of per-hour increases
    #[arg(long, value_enum, default_value_t = GroupArg::Overall)]
    group: GroupArg,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct RouteArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Topology JSON with data centers and client sites
    #[arg(long, value_name = "FILE")]
    topology: PathBuf,
    /// Carbon weight in [0, 1]; the distance weight is 1 - alpha
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Ignore DCs farther than this distance (same units as the topology)
    #[arg(long, value_name = "DISTANCE")]
    latency_cap: Option<f64>,
    #[command(flatten)]
    ppa: PpaArgs,
    /// Report encoding
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct ScheduleArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Preferred start hour (index into the series)
    #[arg(long, default_value_t = DEFAULT_NOMINAL_START, value_name = "HOUR")]
    nominal: usize,
    /// Flexibility window half-width, hours each way
    #[arg(long, default_value_t = DEFAULT_FLEX_HOURS, value_name = "HOURS")]
    flex: usize,
    /// Job run length, hours
    #[arg(long, value_name = "HOURS")]
    duration: usize,
    /// Draw while running, kW
    #[arg(long, default_value_t = 1.0, value_name = "KW")]
    power_kw: f64,
    #[command(flatten)]
    ppa: PpaArgs,
    /// Report encoding
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct AutoscaleArgs {
    #[command(flatten)]
    data: DataArgs,
    /// First hour the job may run
    #[arg(long, default_value_t = 0, value_name = "HOUR")]
    release: usize,
    /// First hour the job may no longer run; defaults to release + 24
    #[arg(long, value_name = "HOUR")]
    deadline: Option<usize>,
    /// Work to finish, instance-hours (profile units)
    #[arg(long, default_value_t = DEFAULT_WORK_INSTANCE_HOURS, value_name = "INSTANCE_HOURS")]
    work: f64,
    /// Instance cap per hour
    #[arg(long, default_value_t = DEFAULT_MAX_INSTANCES, value_name = "COUNT")]
    max_instances: u32,
    /// Draw per running instance, kW
    #[arg(long, default_value_t = 1.0, value_name = "KW")]
    power_kw: f64,
    /// `linear`, or comma-separated throughput per instance count starting
    /// at zero, e.g. `0,1,1.8,2.4`
    #[arg(long, default_value = "linear", value_name = "PROFILE")]
    profile: String,
    #[command(flatten)]
    ppa: PpaArgs,
    /// Report encoding
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Technique to sweep
    #[arg(long, value_enum)]
    technique: TechniqueArg,
    /// PPA fractions to evaluate, comma-separated, each in [0, 1]
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0,0.25,0.5,0.75,1",
        value_name = "FRACTIONS"
    )]
    fractions: Vec<f64>,
    /// Topology JSON (spatial only)
    #[arg(long, value_name = "FILE")]
    topology: Option<PathBuf>,
    /// Carbon weight in [0, 1] (spatial); the distance weight is 1 - alpha
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Ignore DCs farther than this distance (spatial)
    #[arg(long, value_name = "DISTANCE")]
    latency_cap: Option<f64>,
    /// Preferred start hour (temporal)
    #[arg(long, default_value_t = DEFAULT_NOMINAL_START, value_name = "HOUR")]
    nominal: usize,
    /// Flexibility window half-width, hours each way (temporal)
    #[arg(long, default_value_t = DEFAULT_FLEX_HOURS, value_name = "HOURS")]
    flex: usize,
    /// Job run length, hours (temporal; required for that technique)
    #[arg(long, value_name = "HOURS")]
    duration: Option<usize>,
    /// Draw of the job or of one instance, kW
    #[arg(long, default_value_t = 1.0, value_name = "KW")]
    power_kw: f64,
    /// First hour the job may run (autoscale)
    #[arg(long, default_value_t = 0, value_name = "HOUR")]
    release: usize,
    /// First hour the job may no longer run (autoscale); defaults to release + 24
    #[arg(long, value_name = "HOUR")]
    deadline: Option<usize>,
    /// Work to finish, instance-hours (autoscale)
    #[arg(long, default_value_t = DEFAULT_WORK_INSTANCE_HOURS, value_name = "INSTANCE_HOURS")]
    work: f64,
    /// Instance cap per hour (autoscale)
    #[arg(long, default_value_t = DEFAULT_MAX_INSTANCES, value_name = "COUNT")]
    max_instances: u32,
    /// `linear` or comma-separated throughput per instance count (autoscale)
    #[arg(long, default_value = "linear", value_name = "PROFILE")]
    profile: String,
    /// Evaluated consumer's own PPA coverage f, in [0, 1]
    #[arg(long, default_value_t = 0.0, value_name = "FRACTION")]
    consumer_f: f64,
    /// Treatment of hours whose residual generation is zero
    #[arg(long, value_enum, default_value_t = PolicyArg::Error)]
    degenerate_policy: PolicyArg,
    /// Report encoding
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct CdfArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Per-region technique (spatial spans regions and has no per-region CDF)
    #[arg(long, value_enum, default_value_t = TechniqueArg::Temporal)]
    technique: TechniqueArg,
    /// Preferred start hour (temporal)
    #[arg(long, default_value_t = DEFAULT_NOMINAL_START, value_name = "HOUR")]
    nominal: usize,
    /// Flexibility window half-width, hours each way (temporal)
    #[arg(long, default_value_t = DEFAULT_FLEX_HOURS, value_name = "HOURS")]
    flex: usize,
    /// Job run length, hours (temporal; required for that technique)
    #[arg(long, value_name = "HOURS")]
    duration: Option<usize>,
    /// Draw of the job or of one instance, kW
    #[arg(long, default_value_t = 1.0, value_name = "KW")]
    power_kw: f64,
    /// First hour the job may run (autoscale)
    #[arg(long, default_value_t = 0, value_name = "HOUR")]
    release: usize,
    /// First hour the job may no longer run (autoscale); defaults to release + 24
    #[arg(long, value_name = "HOUR")]
    deadline: Option<usize>,
    /// Work to finish, instance-hours (autoscale)
    #[arg(long, default_value_t = DEFAULT_WORK_INSTANCE_HOURS, value_name = "INSTANCE_HOURS")]
    work: f64,
    /// Instance cap per hour (autoscale)
    #[arg(long, default_value_t = DEFAULT_MAX_INSTANCES, value_name = "COUNT")]
    max_instances: u32,
    /// `linear` or comma-separated throughput per instance count (autoscale)
    #[arg(long, default_value = "linear", value_name = "PROFILE")]
    profile: String,
    #[command(flatten)]
    ppa: PpaArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PresetArg {
    CaisoLike,
    ErcotLike,
    Both,
}

#[derive(Args)]
struct SynthArgs {
    /// Bundled preset(s) to generate
    #[arg(long, value_enum, default_value_t = PresetArg::Both)]
    preset: PresetArg,
    /// Generate one custom region instead of presets
    #[arg(long, value_name = "NAME")]
    region: Option<String>,
    /// Series length in days (overrides the preset)
    #[arg(long, value_name = "DAYS")]
    days: Option<u32>,
    /// Wind-noise seed (overrides the preset)
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
    /// Constant coal baseload, MWh (custom region)
    #[arg(long, default_value_t = 0.0, value_name = "MWH")]
    coal: f64,
    /// Gas floor, MWh (custom region)
    #[arg(long, default_value_t = 1000.0, value_name = "MWH")]
    gas_base: f64,
    /// Extra evening gas at the peak, MWh (custom region)
    #[arg(long, default_value_t = 0.0, value_name = "MWH")]
    gas_peaker: f64,
    /// Solar output at local noon, MWh (custom region)
    #[arg(long, default_value_t = 0.0, value_name = "MWH")]
    solar_peak: f64,
    /// Mean wind output, MWh (custom region)
    #[arg(long, default_value_t = 0.0, value_name = "MWH")]
    wind_mean: f64,
    /// Wind varies within ±jitter of the mean, MWh (custom region)
    #[arg(long, default_value_t = 0.0, value_name = "MWH")]
    wind_jitter: f64,
    /// Local-time offset of the diurnal profiles, hours east of UTC
    #[arg(long, default_value_t = 0, value_name = "HOURS")]
    utc_offset: i32,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Attribution(#[from] AttributionError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Data(#[from] DataError),
}

fn grid_error_name(err: &GridError) -> &'static str {
    match err {
        GridError::UnknownSource(_) => "UnknownSource",
        GridError::LengthMismatch { .. } => "LengthMismatch",
        GridError::NegativeGeneration { .. } => "NegativeGeneration",
        GridError::NonFiniteValue { .. } => "NonFiniteValue",
        GridError::EmptySeries => "EmptySeries",
        GridError::NegativeCef { .. } => "NegativeCef",
        GridError::IneligibleNonRenewable(_) => "IneligibleNonRenewable",
        GridError::DuplicateSource(_) => "DuplicateSource",
        GridError::FractionOutOfRange { .. } => "FractionOutOfRange",
        GridError::PpaOnIneligibleSource(_) => "PpaOnIneligibleSource",
        GridError::ConsumerFractionOutOfRange(_) => "ConsumerFractionOutOfRange",
    }
}

fn attribution_error_name(err: &AttributionError) -> &'static str {
    match err {
        AttributionError::ZeroTotalGeneration(_) => "ZeroTotalGeneration",
        AttributionError::DegenerateResidualHour(_) => "DegenerateResidualHour",
        AttributionError::WrongInputMethod(_) => "WrongInputMethod",
        AttributionError::EmptyAfterExclusion => "EmptyAfterExclusion",
        AttributionError::Grid(inner) => grid_error_name(inner),
    }
}

fn optimizer_error_name(err: &OptimizerError) -> &'static str {
    match err {
        OptimizerError::InvalidAlpha(_) => "InvalidAlpha",
        OptimizerError::NoEligibleDc { .. } => "NoEligibleDc",
        OptimizerError::MissingSignal { .. } => "MissingSignal",
        OptimizerError::MissingDistance { .. } => "MissingDistance",
        OptimizerError::SignalTooShort { .. } => "SignalTooShort",
        OptimizerError::TraceLengthMismatch { .. } => "TraceLengthMismatch",
        OptimizerError::EmptyWindow { .. } => "EmptyWindow",
        OptimizerError::InfeasibleDeadline { .. } => "InfeasibleDeadline",
        OptimizerError::InvalidParameter { .. } => "InvalidParameter",
        OptimizerError::InvalidProfile { .. } => "InvalidProfile",
    }
}

fn eval_error_name(err: &EvalError) -> &'static str {
    match err {
        EvalError::SignalSpanMismatch { .. } => "SignalSpanMismatch",
        EvalError::SignalKindMismatch { .. } => "SignalKindMismatch",
        EvalError::MissingSignal { .. } => "MissingSignal",
        EvalError::MismatchedScenarios { .. } => "MismatchedScenarios",
        EvalError::SingleRegionRequired { .. } => "SingleRegionRequired",
        EvalError::DuplicateRegion { .. } => "DuplicateRegion",
        EvalError::EmptyInput => "EmptyInput",
        EvalError::Attribution(inner) => attribution_error_name(inner),
        EvalError::Optimizer(inner) => optimizer_error_name(inner),
    }
}

fn data_error_name(err: &DataError) -> &'static str {
    match err {
        DataError::ParseError { .. } => "ParseError",
        DataError::GapInSeries { .. } => "GapInSeries",
        DataError::DuplicateRow { .. } => "DuplicateRow",
        DataError::InvalidSpec { .. } => "InvalidSpec",
        DataError::IoError(_) => "IoError",
        DataError::Grid(inner) => grid_error_name(inner),
        DataError::Optimizer(inner) => optimizer_error_name(inner),
    }
}

impl CliError {
    fn name(&self) -> &'static str {
        match self {
            Self::Usage(_) => "Usage",
            Self::Grid(inner) => grid_error_name(inner),
            Self::Attribution(inner) => attribution_error_name(inner),
            Self::Optimizer(inner) => optimizer_error_name(inner),
            Self::Eval(inner) => eval_error_name(inner),
            Self::Data(inner) => data_error_name(inner),
        }
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err @ CliError::Usage(_)) => {
            eprintln!("error[Usage]: {err}");
            ExitCode::from(2)
        }
        Err(err) => {
            eprintln!("error[{}]: {err}", err.name());
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Ci(args) => run_ci(args),
        Command::Divergence(args) => run_divergence(args),
        Command::Route(args) => run_route(args),
        Command::Schedule(args) => run_schedule(args),
        Command::Autoscale(args) => run_autoscale(args),
        Command::Sweep(args) => run_sweep(args),
        Command::Cdf(args) => run_cdf(args),
        Command::Synth(args) => run_synth(args),
    }
}

fn load_inputs(data: &DataArgs) -> Result<(Vec<GenerationSeries>, SourceCatalog), CliError> {
    let series = load_generation_csv(&data.generation)?;
    let catalog = match &data.cef {
        Some(path) => load_cef_csv(path)?,
        None => SourceCatalog::bundled_defaults(),
    };
    Ok((series, catalog))
}

/// Region id as a filename fragment.
fn file_stem(region: &str) -> String {
    region
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn parse_profile(text: &str) -> Result<ThroughputProfile, CliError> {
    if text.eq_ignore_ascii_case("linear") {
        return Ok(ThroughputProfile::Linear);
    }
    let rates = text
        .split(',')
        .map(|piece| piece.trim().parse::<f64>())
        .collect::<Result<Vec<f64>, _>>()
        .map_err(|_| {
            usage(format!(
                "--profile must be `linear` or comma-separated rates, got `{text}`"
            ))
        })?;
    Ok(ThroughputProfile::Custom(rates))
}

fn run_ci(args: CiArgs) -> Result<(), CliError> {
    let (series_set, catalog) = load_inputs(&args.data)?;
    let ppa = PpaPortfolio::uniform(args.ppa.ppa, &catalog)?;
    let consumer = ConsumerProfile::new(args.ppa.consumer_f)?;
    let policy = args.ppa.degenerate_policy.into();
    for series in &series_set {
        let lb = ci_lb(series, &catalog)?;
        let res = ci_res(series, &catalog, &ppa, policy)?;
        let mb = ci_mb(&res, &consumer)?;
        let stem = file_stem(&series.region_id);
        for (label, signal) in [("lb", &lb), ("res", &res), ("mb", &mb)] {
            let path = write_report(
                args.out.out.join(format!("ci_{label}_{stem}")),
                &Report::Signal(signal),
                ReportFormat::Csv,
            )?;
            println!("wrote {}", path.display());
        }
        if !res.degenerate_hours.is_empty() {
            println!(
                "note: region `{}` has {} degenerate residual hours clamped to zero",
                series.region_id,
                res.degenerate_hours.len()
            );
        }
    }
    Ok(())
}

fn run_divergence(args: DivergenceArgs) -> Result<(), CliError> {
    let (series_set, catalog) = load_inputs(&args.data)?;
    let ppa = PpaPortfolio::uniform(args.ppa, &catalog)?;
    let summary = divergence(&series_set, &catalog, &ppa, args.group.into())?;
    let path = args.out.out.join("divergence.csv");
    write_divergence_csv(&path, &summary)?;
    println!(
        "groups: {}; excluded {} zero-CI hours and {} degenerate hours",
        summary.groups.len(),
        summary.excluded_zero_ci,
        summary.excluded_degenerate
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn emit_matrix(
    out: &Path,
    stem: &str,
    matrix: &ScenarioMatrix,
    format: FormatArg,
) -> Result<(), CliError> {
    println!(
        "scenario matrix at ppa fraction {}:",
        matrix.lb_lb.ppa_fraction
    );
    println!("  OPT_lb_EVAL_lb savings: {:9.3} %", matrix.lb_lb.savings_pct);
    println!("  OPT_lb_EVAL_mb savings: {:9.3} %", matrix.lb_mb.savings_pct);
    println!("  OPT_mb_EVAL_mb savings: {:9.3} %", matrix.mb_mb.savings_pct);
    println!(
        "  discrepancy:            {:9.3} pp",
        matrix.discrepancy.discrepancy_pp
    );
    let path = write_report(
        out.join(format!("{stem}_matrix")),
        &Report::Matrix(matrix),
        format.into(),
    )?;
    println!("wrote {}", path.display());
    Ok(())
}

fn matrix_for(
    inputs: &ScenarioInputs,
    ppa_args: &PpaArgs,
) -> Result<ScenarioMatrix, CliError> {
    let ppa = PpaPortfolio::uniform(ppa_args.ppa, &inputs.catalog)?;
    let consumer = ConsumerProfile::new(ppa_args.consumer_f)?;
    Ok(run_matrix(
        inputs,
        &ppa,
        ppa_args.ppa,
        &consumer,
        ppa_args.degenerate_policy.into(),
    )?)
}

fn run_route(args: RouteArgs) -> Result<(), CliError> {
    let (series, catalog) = load_inputs(&args.data)?;
    let topology = load_topology_json(&args.topology)?;
    let inputs = ScenarioInputs {
        series,
        catalog,
        workload: WorkloadSpec::Spatial {
            sites: topology.sites,
            dcs: topology.dcs,
            alpha: args.alpha,
            latency_cap: args.latency_cap,
        },
    };
    let matrix = matrix_for(&inputs, &args.ppa)?;
    emit_matrix(&args.out.out, "route", &matrix, args.format)
}

fn run_schedule(args: ScheduleArgs) -> Result<(), CliError> {
    // Job parameters are checked before any file is read.
    let job = TemporalJob::new(args.nominal, args.duration, args.flex, args.power_kw)?;
    let (series, catalog) = load_inputs(&args.data)?;
    let inputs = ScenarioInputs {
        series,
        catalog,
        workload: WorkloadSpec::Temporal { job },
    };
    let matrix = matrix_for(&inputs, &args.ppa)?;
    emit_matrix(&args.out.out, "schedule", &matrix, args.format)
}

fn run_autoscale(args: AutoscaleArgs) -> Result<(), CliError> {
    // Job parameters are checked before any file is read.
    let deadline = args.deadline.unwrap_or(args.release + 24);
    let job = AutoscaleJob::new(
        args.release,
        deadline,
        args.work,
        args.max_instances,
        args.power_kw,
        parse_profile(&args.profile)?,
    )?;
    let (series, catalog) = load_inputs(&args.data)?;
    let inputs = ScenarioInputs {
        series,
        catalog,
        workload: WorkloadSpec::Autoscale { job },
    };
    let matrix = matrix_for(&inputs, &args.ppa)?;
    emit_matrix(&args.out.out, "autoscale", &matrix, args.format)
}

fn run_sweep(args: SweepArgs) -> Result<(), CliError> {
    // Workload parameters are checked before the generation data is read.
    let workload = match args.technique {
        TechniqueArg::Spatial => {
            let path = args
                .topology
                .as_ref()
                .ok_or_else(|| usage("--topology is required for spatial sweeps"))?;
            let topology = load_topology_json(path)?;
            WorkloadSpec::Spatial {
                sites: topology.sites,
                dcs: topology.dcs,
                alpha: args.alpha,
                latency_cap: args.latency_cap,
            }
        }
        TechniqueArg::Temporal => {
            let duration = args
                .duration
                .ok_or_else(|| usage("--duration is required for temporal sweeps"))?;
            WorkloadSpec::Temporal {
                job: TemporalJob::new(args.nominal, duration, args.flex, args.power_kw)?,
            }
        }
        TechniqueArg::Autoscale => {
            let deadline = args.deadline.unwrap_or(args.release + 24);
            WorkloadSpec::Autoscale {
                job: AutoscaleJob::new(
                    args.release,
                    deadline,
                    args.work,
                    args.max_instances,
                    args.power_kw,
                    parse_profile(&args.profile)?,
                )?,
            }
        }
    };
    let consumer = ConsumerProfile::new(args.consumer_f)?;
    let (series, catalog) = load_inputs(&args.data)?;
    let inputs = ScenarioInputs {
        series,
        catalog,
        workload,
    };
    let table = ppa_sweep(
        &inputs,
        &args.fractions,
        &consumer,
        args.degenerate_policy.into(),
    )?;
    println!("{} sweep over {} fractions:", table.technique, table.rows.len());
    for row in &table.rows {
        println!(
            "  p={:<5} lb_lb={:9.3} %  lb_mb={:9.3} %  mb_mb={:9.3} %  discrepancy={:9.3} pp",
            row.fraction,
            row.matrix.lb_lb.savings_pct,
            row.matrix.lb_mb.savings_pct,
            row.matrix.mb_mb.savings_pct,
            row.matrix.discrepancy.discrepancy_pp
        );
    }
    let path = write_report(
        args.out.out.join(format!("sweep_{}", table.technique)),
        &Report::Sweep(&table),
        args.format.into(),
    )?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run_cdf(args: CdfArgs) -> Result<(), CliError> {
    // The workload is region-independent; its parameters are checked before
    // the generation data is read.
    let workload = match args.technique {
        TechniqueArg::Spatial => {
            return Err(usage(
                "--technique spatial has no per-region CDF; use temporal or autoscale",
            ))
        }
        TechniqueArg::Temporal => {
            let duration = args
                .duration
                .ok_or_else(|| usage("--duration is required for temporal CDFs"))?;
            WorkloadSpec::Temporal {
                job: TemporalJob::new(args.nominal, duration, args.flex, args.power_kw)?,
            }
        }
        TechniqueArg::Autoscale => {
            let deadline = args.deadline.unwrap_or(args.release + 24);
            WorkloadSpec::Autoscale {
                job: AutoscaleJob::new(
                    args.release,
                    deadline,
                    args.work,
                    args.max_instances,
                    args.power_kw,
                    parse_profile(&args.profile)?,
                )?,
            }
        }
    };
    let (series_set, catalog) = load_inputs(&args.data)?;
    let mut records = Vec::with_capacity(series_set.len());
    for series in &series_set {
        let inputs = ScenarioInputs {
            series: vec![series.clone()],
            catalog: catalog.clone(),
            workload: workload.clone(),
        };
        let matrix = matrix_for(&inputs, &args.ppa)?;
        records.push(matrix.discrepancy);
    }
    let summary = region_cdf(&records)?;
    let path = write_report(
        args.out.out.join("cdf"),
        &Report::Cdf(&summary),
        ReportFormat::Csv,
    )?;
    println!("regions: {}", records.len());
    println!("mean discrepancy: {:.3} pp", summary.mean);
    println!("max discrepancy: {:.3} pp", summary.max);
    println!("wrote {}", path.display());
    Ok(())
}

fn run_synth(args: SynthArgs) -> Result<(), CliError> {
    let mut specs = if let Some(region) = &args.region {
        vec![SyntheticGridSpec {
            region_id: region.clone(),
            days: 7,
            baseload_coal: args.coal,
            gas_base: args.gas_base,
            gas_peaker_amplitude: args.gas_peaker,
            solar_peak: args.solar_peak,
            wind_mean: args.wind_mean,
            wind_jitter: args.wind_jitter,
            utc_offset_hours: args.utc_offset,
            rng_seed: 0,
        }]
    } else {
        match args.preset {
            PresetArg::CaisoLike => vec![SyntheticGridSpec::caiso_like()],
            PresetArg::ErcotLike => vec![SyntheticGridSpec::ercot_like()],
            PresetArg::Both => vec![
                SyntheticGridSpec::caiso_like(),
                SyntheticGridSpec::ercot_like(),
            ],
        }
    };
    for spec in &mut specs {
        if let Some(days) = args.days {
            spec.days = days;
        }
        if let Some(seed) = args.seed {
            spec.rng_seed = seed;
        }
    }
    for spec in &specs {
        let series = synth_generate(spec)?;
        let path = args
            .out
            .out
            .join(format!("{}.csv", file_stem(&spec.region_id)));
        write_generation_csv(&path, &[series])?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
