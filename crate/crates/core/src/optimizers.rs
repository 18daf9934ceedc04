//! The three carbon-aware optimization techniques — spatial request routing,
//! temporal job shifting, and resource autoscaling — plus their
//! carbon-unaware baselines.
//!
//! Every optimizer takes an arbitrary [`CarbonSignal`], so the same code
//! optimizes under location-based or market-based intensity. Baselines never
//! read a signal. All functions are pure and deterministic; ties are broken
//! by fixed rules documented on each operation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribution::CarbonSignal;

/// CI weight in the routing score (the distance weight is `1 - alpha`).
pub const DEFAULT_ALPHA: f64 = 0.67;
/// Default nominal start hour for shiftable nightly jobs (01:00).
pub const DEFAULT_NOMINAL_START: usize = 1;
/// Default shifting flexibility: the start may move up to this many hours in
/// either direction.
pub const DEFAULT_FLEX_HOURS: usize = 8;
/// Default autoscaling work volume, in instance-hours.
pub const DEFAULT_WORK_INSTANCE_HOURS: f64 = 24.0;
/// Default cap on simultaneously running instances.
pub const DEFAULT_MAX_INSTANCES: u32 = 8;

/// Errors raised by the optimizers.
#[derive(Debug, Error, PartialEq)]
pub enum OptimizerError {
    #[error("alpha {0} is outside [0, 1]")]
    InvalidAlpha(f64),
    #[error("no data center is within the latency cap for site `{site_id}`")]
    NoEligibleDc { site_id: String },
    #[error("no carbon signal provided for region `{region_id}`")]
    MissingSignal { region_id: String },
    #[error("site `{site_id}` has no distance to data center `{dc_id}`")]
    MissingDistance { site_id: String, dc_id: String },
    #[error("signal covers {available} hours but the decision needs {needed}")]
    SignalTooShort { needed: usize, available: usize },
    #[error("request trace for site `{site_id}` has {found} hours, expected {expected}")]
    TraceLengthMismatch {
        site_id: String,
        expected: usize,
        found: usize,
    },
    #[error("start window is empty: nominal {nominal_start} ± {flexibility} h clipped to a {horizon}-hour signal with duration {duration}")]
    EmptyWindow {
        nominal_start: usize,
        flexibility: usize,
        horizon: usize,
        duration: usize,
    },
    #[error("cannot complete {work} instance-hours of work: capacity before the deadline is {capacity}")]
    InfeasibleDeadline { work: f64, capacity: f64 },
    #[error("parameter `{name}` has invalid value {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("invalid throughput profile: {reason}")]
    InvalidProfile { reason: String },
}

/// A data center that can serve client requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataCenter {
    pub dc_id: String,
    /// Region whose carbon signal applies to this DC's consumption.
    pub region_id: String,
    /// Energy per served request, kWh. Must be positive.
    pub per_request_energy_kwh: f64,
}

impl DataCenter {
    pub fn new(
        dc_id: impl Into<String>,
        region_id: impl Into<String>,
        per_request_energy_kwh: f64,
    ) -> Result<Self, OptimizerError> {
        let dc = Self {
            dc_id: dc_id.into(),
            region_id: region_id.into(),
            per_request_energy_kwh,
        };
        dc.validate()?;
        Ok(dc)
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        if !self.per_request_energy_kwh.is_finite() || self.per_request_energy_kwh <= 0.0 {
            return Err(OptimizerError::InvalidParameter {
                name: "per_request_energy_kwh",
                value: self.per_request_energy_kwh,
            });
        }
        Ok(())
    }
}

/// A client population with per-DC distances and an hourly request trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientSite {
    pub site_id: String,
    /// Distance to each data center, abstract units (e.g. km). Must cover
    /// every DC in the scenario.
    pub distance: BTreeMap<String, f64>,
    /// Requests issued per hour; length T.
    pub hourly_requests: Vec<f64>,
}

impl ClientSite {
    pub fn new(
        site_id: impl Into<String>,
        distance: BTreeMap<String, f64>,
        hourly_requests: Vec<f64>,
    ) -> Result<Self, OptimizerError> {
        let site = Self {
            site_id: site_id.into(),
            distance,
            hourly_requests,
        };
        site.validate()?;
        Ok(site)
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        for &d in self.distance.values() {
            if !d.is_finite() || d < 0.0 {
                return Err(OptimizerError::InvalidParameter {
                    name: "distance",
                    value: d,
                });
            }
        }
        for &r in &self.hourly_requests {
            if !r.is_finite() || r < 0.0 {
                return Err(OptimizerError::InvalidParameter {
                    name: "hourly_requests",
                    value: r,
                });
            }
        }
        Ok(())
    }
}

/// One routed hour for one site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub hour: usize,
    pub site_id: String,
    pub dc_id: String,
    /// Region of the chosen DC — the signal this hour's emissions follow.
    pub region_id: String,
    pub requests: f64,
    /// `requests * per_request_energy_kwh` of the chosen DC.
    pub energy_kwh: f64,
}

/// Per-(hour, site) request assignment. Every request of every trace is
/// assigned to exactly one data center.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoutingAssignment {
    /// Sorted by (hour, site_id).
    pub decisions: Vec<RoutingDecision>,
}

impl RoutingAssignment {
    /// Total requests assigned in one hour, for conservation checks.
    pub fn requests_at_hour(&self, hour: usize) -> f64 {
        self.decisions
            .iter()
            .filter(|d| d.hour == hour)
            .map(|d| d.requests)
            .sum()
    }
}

/// A contiguous job that may start anywhere in a window around its nominal
/// start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalJob {
    /// Preferred start hour (index into the signal).
    pub nominal_start: usize,
    /// Run length in hours, ≥ 1. The job is not preemptible.
    pub duration: usize,
    /// The start may move to any hour in `[nominal_start - flexibility,
    /// nominal_start + flexibility]`, clipped to the signal horizon.
    pub flexibility: usize,
    /// Constant draw while running, kW.
    pub power_kw: f64,
}

impl TemporalJob {
    pub fn new(
        nominal_start: usize,
        duration: usize,
        flexibility: usize,
        power_kw: f64,
    ) -> Result<Self, OptimizerError> {
        if duration == 0 {
            return Err(OptimizerError::InvalidParameter {
                name: "duration",
                value: 0.0,
            });
        }
        if !power_kw.is_finite() || power_kw <= 0.0 {
            return Err(OptimizerError::InvalidParameter {
                name: "power_kw",
                value: power_kw,
            });
        }
        Ok(Self {
            nominal_start,
            duration,
            flexibility,
            power_kw,
        })
    }

    /// Feasible start hours: the flexibility window clipped to
    /// `[0, horizon - duration]`.
    fn window(&self, horizon: usize) -> Result<(usize, usize), OptimizerError> {
        let err = OptimizerError::EmptyWindow {
            nominal_start: self.nominal_start,
            flexibility: self.flexibility,
            horizon,
            duration: self.duration,
        };
        if self.duration > horizon {
            return Err(err);
        }
        let latest = horizon - self.duration;
        let lo = self.nominal_start.saturating_sub(self.flexibility);
        let hi = self.nominal_start.saturating_add(self.flexibility).min(latest);
        if lo > hi {
            return Err(err);
        }
        Ok((lo, hi))
    }
}

/// Effective work rate as a function of running instance count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThroughputProfile {
    /// `s(a) = a`: each instance contributes one instance-hour per hour.
    Linear,
    /// Explicit rates `s(0), s(1), …, s(max_instances)`; `s(0) = 0` and the
    /// sequence must be non-decreasing.
    Custom(Vec<f64>),
}

impl ThroughputProfile {
    /// Work completed per hour by `a` running instances.
    pub fn rate(&self, a: u32) -> f64 {
        match self {
            Self::Linear => a as f64,
            Self::Custom(rates) => rates[a as usize],
        }
    }

    fn validate(&self, max_instances: u32) -> Result<(), OptimizerError> {
        let Self::Custom(rates) = self else {
            return Ok(());
        };
        if rates.len() != max_instances as usize + 1 {
            return Err(OptimizerError::InvalidProfile {
                reason: format!(
                    "expected {} rates for max_instances = {max_instances}, got {}",
                    max_instances + 1,
                    rates.len()
                ),
            });
        }
        if rates[0] != 0.0 {
            return Err(OptimizerError::InvalidProfile {
                reason: format!("s(0) must be 0, got {}", rates[0]),
            });
        }
        for pair in rates.windows(2) {
            if !pair[1].is_finite() || pair[1] < pair[0] {
                return Err(OptimizerError::InvalidProfile {
                    reason: format!("rates must be finite and non-decreasing, got {rates:?}"),
                });
            }
        }
        Ok(())
    }
}

/// A deadline-constrained, preemptible batch of work that scales across
/// instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoscaleJob {
    /// First hour the job may run.
    pub release: usize,
    /// First hour the job may no longer run; the window is
    /// `[release, deadline)`.
    pub deadline: usize,
    /// Work to complete, in units of the throughput profile (instance-hours
    /// under the linear profile).
    pub work: f64,
    pub max_instances: u32,
    /// Draw per running instance, kW.
    pub per_instance_power_kw: f64,
    pub throughput_profile: ThroughputProfile,
}

impl AutoscaleJob {
    pub fn new(
        release: usize,
        deadline: usize,
        work: f64,
        max_instances: u32,
        per_instance_power_kw: f64,
        throughput_profile: ThroughputProfile,
    ) -> Result<Self, OptimizerError> {
        if deadline <= release {
            return Err(OptimizerError::InvalidParameter {
                name: "deadline",
                value: deadline as f64,
            });
        }
        if !work.is_finite() || work < 0.0 {
            return Err(OptimizerError::InvalidParameter {
                name: "work",
                value: work,
            });
        }
        if max_instances == 0 {
            return Err(OptimizerError::InvalidParameter {
                name: "max_instances",
                value: 0.0,
            });
        }
        if !per_instance_power_kw.is_finite() || per_instance_power_kw <= 0.0 {
            return Err(OptimizerError::InvalidParameter {
                name: "per_instance_power_kw",
                value: per_instance_power_kw,
            });
        }
        throughput_profile.validate(max_instances)?;
        Ok(Self {
            release,
            deadline,
            work,
            max_instances,
            per_instance_power_kw,
            throughput_profile,
        })
    }

    /// The default one-day job: release at `release`, 24-hour deadline,
    /// 24 instance-hours of work, at most 8 instances, linear throughput.
    pub fn day_job(release: usize, per_instance_power_kw: f64) -> Result<Self, OptimizerError> {
        Self::new(
            release,
            release + 24,
            DEFAULT_WORK_INSTANCE_HOURS,
            DEFAULT_MAX_INSTANCES,
            per_instance_power_kw,
            ThroughputProfile::Linear,
        )
    }

    fn window_len(&self) -> usize {
        self.deadline - self.release
    }
}

/// Hourly instance counts over `[release, release + counts.len())`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub release: usize,
    pub counts: Vec<u32>,
}

impl AllocationPlan {
    /// Work the plan completes under a profile.
    pub fn work_done(&self, profile: &ThroughputProfile) -> f64 {
        self.counts.iter().map(|&a| profile.rate(a)).sum()
    }

    /// Total instance-hours scheduled (energy is this times per-instance
    /// power).
    pub fn instance_hours(&self) -> u64 {
        self.counts.iter().map(|&a| a as u64).sum()
    }
}

/// Routes every (hour, site) request bundle to the data center minimizing
/// `alpha * CI + (1 - alpha) * distance`, with CI and distance min–max
/// normalized across the eligible DC set for that decision. Eligible DCs are
/// those within `latency_cap` of the site (all, when no cap). Ties go to the
/// smaller distance, then the lexicographically smaller `dc_id`.
pub fn route_requests(
    sites: &[ClientSite],
    dcs: &[DataCenter],
    signals: &BTreeMap<String, CarbonSignal>,
    alpha: f64,
    latency_cap: Option<f64>,
) -> Result<RoutingAssignment, OptimizerError> {
    if !alpha.is_finite() || !(0.0..=1.0).contains(&alpha) {
        return Err(OptimizerError::InvalidAlpha(alpha));
    }
    let horizon = common_horizon(sites)?;
    for dc in dcs {
        let signal = signals
            .get(&dc.region_id)
            .ok_or_else(|| OptimizerError::MissingSignal {
                region_id: dc.region_id.clone(),
            })?;
        if signal.len() < horizon {
            return Err(OptimizerError::SignalTooShort {
                needed: horizon,
                available: signal.len(),
            });
        }
    }

    // Eligibility and the distance normalization are time-invariant, so
    // build them once per site; only the CI normalization varies by hour.
    struct SiteChoices<'a> {
        site: &'a ClientSite,
        eligible: Vec<&'a DataCenter>,
        dists: Vec<f64>,
        d_hat: Vec<f64>,
        sigs: Vec<&'a CarbonSignal>,
    }
    let contexts: Vec<SiteChoices> = sites
        .iter()
        .map(|site| {
            let eligible = eligible_dcs(site, dcs, latency_cap)?;
            let dists: Vec<f64> = eligible.iter().map(|dc| site.distance[&dc.dc_id]).collect();
            let d_hat = min_max_normalize(&dists);
            let sigs = eligible.iter().map(|dc| &signals[&dc.region_id]).collect();
            Ok(SiteChoices {
                site,
                eligible,
                dists,
                d_hat,
                sigs,
            })
        })
        .collect::<Result<_, OptimizerError>>()?;

    let mut decisions = Vec::with_capacity(horizon * sites.len());
    for hour in 0..horizon {
        for ctx in &contexts {
            let cis: Vec<f64> = ctx.sigs.iter().map(|s| s.values[hour]).collect();
            let ci_hat = min_max_normalize(&cis);
            let chosen = (0..ctx.eligible.len())
                .min_by(|&a, &b| {
                    let score_a = alpha * ci_hat[a] + (1.0 - alpha) * ctx.d_hat[a];
                    let score_b = alpha * ci_hat[b] + (1.0 - alpha) * ctx.d_hat[b];
                    score_a
                        .total_cmp(&score_b)
                        .then(ctx.dists[a].total_cmp(&ctx.dists[b]))
                        .then(ctx.eligible[a].dc_id.cmp(&ctx.eligible[b].dc_id))
                })
                .expect("eligible set is non-empty");
            decisions.push(decision_for(ctx.site, ctx.eligible[chosen], hour));
        }
    }
    Ok(RoutingAssignment { decisions })
}

/// Carbon-unaware routing baseline: every request goes to the closest data
/// center (ties to the lexicographically smaller `dc_id`). Reads no signal.
pub fn route_baseline(
    sites: &[ClientSite],
    dcs: &[DataCenter],
) -> Result<RoutingAssignment, OptimizerError> {
    let horizon = common_horizon(sites)?;
    let closest: Vec<&DataCenter> = sites
        .iter()
        .map(|site| {
            let eligible = eligible_dcs(site, dcs, None)?;
            Ok(*eligible
                .iter()
                .min_by(|a, b| {
                    site.distance[&a.dc_id]
                        .total_cmp(&site.distance[&b.dc_id])
                        .then(a.dc_id.cmp(&b.dc_id))
                })
                .expect("eligible set is non-empty"))
        })
        .collect::<Result<_, OptimizerError>>()?;

    let mut decisions = Vec::with_capacity(horizon * sites.len());
    for hour in 0..horizon {
        for (site, dc) in sites.iter().zip(&closest) {
            decisions.push(decision_for(site, dc, hour));
        }
    }
    Ok(RoutingAssignment { decisions })
}

fn common_horizon(sites: &[ClientSite]) -> Result<usize, OptimizerError> {
    let mut horizon = None;
    for site in sites {
        let len = site.hourly_requests.len();
        match horizon {
            None => horizon = Some(len),
            Some(expected) if expected != len => {
                return Err(OptimizerError::TraceLengthMismatch {
                    site_id: site.site_id.clone(),
                    expected,
                    found: len,
                });
            }
            Some(_) => {}
        }
    }
    Ok(horizon.unwrap_or(0))
}

fn eligible_dcs<'a>(
    site: &ClientSite,
    dcs: &'a [DataCenter],
    latency_cap: Option<f64>,
) -> Result<Vec<&'a DataCenter>, OptimizerError> {
    let mut eligible = Vec::with_capacity(dcs.len());
    for dc in dcs {
        let distance =
            site.distance
                .get(&dc.dc_id)
                .copied()
                .ok_or_else(|| OptimizerError::MissingDistance {
                    site_id: site.site_id.clone(),
                    dc_id: dc.dc_id.clone(),
                })?;
        if latency_cap.is_none_or(|cap| distance <= cap) {
            eligible.push(dc);
        }
    }
    if eligible.is_empty() {
        return Err(OptimizerError::NoEligibleDc {
            site_id: site.site_id.clone(),
        });
    }
    Ok(eligible)
}

/// Min–max normalization to [0, 1]; identical values all map to 0.
fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - min) / (max - min)).collect()
}

fn decision_for(site: &ClientSite, dc: &DataCenter, hour: usize) -> RoutingDecision {
    let requests = site.hourly_requests[hour];
    RoutingDecision {
        hour,
        site_id: site.site_id.clone(),
        dc_id: dc.dc_id.clone(),
        region_id: dc.region_id.clone(),
        requests,
        energy_kwh: requests * dc.per_request_energy_kwh,
    }
}

/// Chooses the start hour minimizing mean CI over the job's run, within the
/// flexibility window. Ties go to the start closest to the nominal start,
/// then to the earlier hour.
pub fn schedule_job(job: &TemporalJob, signal: &CarbonSignal) -> Result<usize, OptimizerError> {
    let (lo, hi) = job.window(signal.len())?;
    let run_sum = |start: usize| -> f64 {
        signal.values[start..start + job.duration].iter().sum()
    };
    let distance_to_nominal =
        |start: usize| -> usize { start.abs_diff(job.nominal_start) };
    let best = (lo..=hi)
        .min_by(|&a, &b| {
            run_sum(a)
                .total_cmp(&run_sum(b))
                .then(distance_to_nominal(a).cmp(&distance_to_nominal(b)))
                .then(a.cmp(&b))
        })
        .expect("window is non-empty");
    Ok(best)
}

/// Carbon-unaware scheduling baseline: run at the nominal start.
pub fn schedule_baseline(job: &TemporalJob) -> usize {
    job.nominal_start
}

/// Computes the emissions-minimizing allocation plan over
/// `[release, deadline)` for the given signal.
///
/// Under the linear profile the greedy plan — fill the lowest-CI hours at
/// `max_instances`, close with one minimally sized hour — is provably
/// optimal. Custom profiles are solved exactly by a branch-and-bound search
/// over per-hour levels (optimal plans are non-increasing in instance count
/// when hours are sorted by CI, which keeps the search space small for
/// deadline-scale windows).
pub fn autoscale(job: &AutoscaleJob, signal: &CarbonSignal) -> Result<AllocationPlan, OptimizerError> {
    if signal.len() < job.deadline {
        return Err(OptimizerError::SignalTooShort {
            needed: job.deadline,
            available: signal.len(),
        });
    }
    let window = job.window_len();
    if job.work <= 0.0 {
        return Ok(AllocationPlan {
            release: job.release,
            counts: vec![0; window],
        });
    }
    let capacity = window as f64 * job.throughput_profile.rate(job.max_instances);
    if capacity < job.work {
        return Err(OptimizerError::InfeasibleDeadline {
            work: job.work,
            capacity,
        });
    }
    let cis = &signal.values[job.release..job.deadline];
    let counts = match &job.throughput_profile {
        ThroughputProfile::Linear => autoscale_linear(job, cis),
        ThroughputProfile::Custom(rates) => autoscale_custom(job, rates, cis),
    };
    Ok(AllocationPlan {
        release: job.release,
        counts,
    })
}

/// Exact greedy for the linear profile: any feasible plan totals at least
/// `ceil(work)` instance-hours, and packing them into the cheapest hours
/// (cap first, one partial hour last) attains that minimum cost.
fn autoscale_linear(job: &AutoscaleJob, cis: &[f64]) -> Vec<u32> {
    let mut order: Vec<usize> = (0..cis.len()).collect();
    order.sort_by(|&a, &b| cis[a].total_cmp(&cis[b]).then(a.cmp(&b)));
    let mut counts = vec![0u32; cis.len()];
    let mut remaining = job.work;
    for t in order {
        if remaining <= 0.0 {
            break;
        }
        if remaining >= job.max_instances as f64 {
            counts[t] = job.max_instances;
            remaining -= job.max_instances as f64;
        } else {
            counts[t] = remaining.ceil() as u32;
            remaining = 0.0;
        }
    }
    counts
}

/// Exact search for custom profiles. Hours are sorted by CI ascending; some
/// optimal plan assigns non-increasing instance counts along that order
/// (swapping the counts of a cheap and an expensive hour never raises cost
/// or lowers work), so the search enumerates only non-increasing level
/// vectors, seeded with a greedy fill and pruned by a fractional-density
/// lower bound.
fn autoscale_custom(job: &AutoscaleJob, rates: &[f64], cis: &[f64]) -> Vec<u32> {
    let max = job.max_instances as usize;
    let s_max = rates[max];
    // Only the cheapest hours can appear in a minimal plan: every used hour
    // delivers at least the smallest positive rate, and total delivery in a
    // minimal plan stays below work + s(max).
    let min_pos = rates
        .iter()
        .copied()
        .filter(|&r| r > 0.0)
        .fold(f64::INFINITY, f64::min);
    let hour_budget = ((job.work + s_max) / min_pos).ceil() as usize;

    let mut order: Vec<usize> = (0..cis.len()).collect();
    order.sort_by(|&a, &b| cis[a].total_cmp(&cis[b]).then(a.cmp(&b)));
    order.truncate(hour_budget.max(1).min(cis.len()));
    let sorted_cis: Vec<f64> = order.iter().map(|&t| cis[t]).collect();

    // Cheapest-first greedy seed: cap the cheapest hours, close with the
    // minimal sufficient level. Feasible because the hour budget keeps
    // enough capacity.
    let mut seed = vec![0u32; sorted_cis.len()];
    let mut done = 0.0;
    let mut seed_cost = 0.0;
    for (i, &ci) in sorted_cis.iter().enumerate() {
        if done >= job.work {
            break;
        }
        let needed = job.work - done;
        let level = if needed >= s_max {
            max
        } else {
            (1..=max)
                .find(|&a| rates[a] >= needed)
                .expect("s(max) >= needed in this branch")
        };
        seed[i] = level as u32;
        done += rates[level];
        seed_cost += level as f64 * ci;
    }

    // Per starting level, the cheapest possible cost per unit of work of any
    // single allocation at or below that level (CI factored out).
    let mut min_ratio = vec![f64::INFINITY; max + 1];
    for a in 1..=max {
        let ratio = if rates[a] > 0.0 {
            a as f64 / rates[a]
        } else {
            f64::INFINITY
        };
        min_ratio[a] = min_ratio[a - 1].min(ratio);
    }

    let mut search = LevelSearch {
        rates,
        cis: &sorted_cis,
        work: job.work,
        min_ratio: &min_ratio,
        best_cost: seed_cost,
        best: seed,
        current: vec![0u32; sorted_cis.len()],
    };
    search.descend(0, max, 0.0, 0.0);

    let mut counts = vec![0u32; cis.len()];
    for (i, &t) in order.iter().enumerate() {
        counts[t] = search.best[i];
    }
    counts
}

struct LevelSearch<'a> {
    rates: &'a [f64],
    /// CI of the candidate hours, ascending.
    cis: &'a [f64],
    work: f64,
    /// `min_ratio[L]` = min over 1 ≤ a ≤ L of `a / s(a)`.
    min_ratio: &'a [f64],
    best_cost: f64,
    best: Vec<u32>,
    current: Vec<u32>,
}

impl LevelSearch<'_> {
    fn descend(&mut self, i: usize, prev_level: usize, done: f64, cost: f64) {
        if done >= self.work {
            if cost < self.best_cost {
                self.best_cost = cost;
                self.best.copy_from_slice(&self.current);
                self.best[i..].fill(0);
            }
            return;
        }
        if i == self.cis.len() {
            return;
        }
        let hours_left = (self.cis.len() - i) as f64;
        if done + self.rates[prev_level] * hours_left < self.work {
            return;
        }
        // Any completion costs at least the remaining work at the cheapest
        // remaining hour's best density; the (1 - 1e-12) slack absorbs
        // floating-point rounding in the product.
        let bound = (self.work - done) * self.cis[i] * self.min_ratio[prev_level];
        if bound.is_finite() && cost + bound * (1.0 - 1e-12) >= self.best_cost {
            return;
        }
        for level in (0..=prev_level).rev() {
            self.current[i] = level as u32;
            self.descend(
                i + 1,
                level,
                done + self.rates[level],
                cost + level as f64 * self.cis[i],
            );
        }
        self.current[i] = 0;
    }
}

/// Carbon-unaware autoscaling baseline: one instance from release until the
/// work completes at rate `s(1)`, then zero. Reads no signal.
pub fn autoscale_baseline(job: &AutoscaleJob) -> Result<AllocationPlan, OptimizerError> {
    let window = job.window_len();
    if job.work <= 0.0 {
        return Ok(AllocationPlan {
            release: job.release,
            counts: vec![0; window],
        });
    }
    let rate = job.throughput_profile.rate(1);
    let hours_needed = if rate > 0.0 {
        (job.work / rate).ceil() as usize
    } else {
        usize::MAX
    };
    if hours_needed > window {
        return Err(OptimizerError::InfeasibleDeadline {
            work: job.work,
            capacity: window as f64 * rate,
        });
    }
    let mut counts = vec![1u32; hours_needed];
    counts.resize(window, 0);
    Ok(AllocationPlan {
        release: job.release,
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::AttributionMethod;
    use crate::grid::{default_series_start, PpaPortfolio};

    fn signal(values: &[f64]) -> CarbonSignal {
        CarbonSignal {
            region_id: "r".into(),
            method: AttributionMethod::LocationBased,
            start: default_series_start(),
            values: values.to_vec(),
            ppa: PpaPortfolio::empty(),
            degenerate_hours: Vec::new(),
        }
    }

    fn dc(id: &str, region: &str) -> DataCenter {
        DataCenter::new(id, region, 1.0).unwrap()
    }

    fn site(id: &str, distances: &[(&str, f64)], requests: &[f64]) -> ClientSite {
        let distance = distances
            .iter()
            .map(|(dc_id, d)| (dc_id.to_string(), *d))
            .collect();
        ClientSite::new(id, distance, requests.to_vec()).unwrap()
    }

    fn two_dc_scenario(ci_a: f64, ci_b: f64) -> (Vec<ClientSite>, Vec<DataCenter>, BTreeMap<String, CarbonSignal>) {
        let dcs = vec![dc("dc1", "ra"), dc("dc2", "rb")];
        let sites = vec![site("s1", &[("dc1", 1000.0), ("dc2", 100.0)], &[10.0])];
        let signals = BTreeMap::from([
            ("ra".to_string(), signal(&[ci_a])),
            ("rb".to_string(), signal(&[ci_b])),
        ]);
        (sites, dcs, signals)
    }

    #[test]
    fn routing_trades_carbon_against_distance() {
        // Normalized scores: dc1 = 0.67·0 + 0.33·1 = 0.33, dc2 = 0.67.
        let (sites, dcs, signals) = two_dc_scenario(100.0, 300.0);
        let routed = route_requests(&sites, &dcs, &signals, 0.67, None).unwrap();
        assert_eq!(routed.decisions[0].dc_id, "dc1");
    }

    #[test]
    fn routing_with_zero_alpha_matches_baseline() {
        let (sites, dcs, signals) = two_dc_scenario(100.0, 300.0);
        let routed = route_requests(&sites, &dcs, &signals, 0.0, None).unwrap();
        let baseline = route_baseline(&sites, &dcs).unwrap();
        assert_eq!(routed, baseline);
        assert_eq!(routed.decisions[0].dc_id, "dc2");
    }

    #[test]
    fn routing_breaks_full_ties_lexicographically() {
        let dcs = vec![dc("dcb", "ra"), dc("dca", "ra")];
        let sites = vec![site("s1", &[("dca", 50.0), ("dcb", 50.0)], &[1.0])];
        let signals = BTreeMap::from([("ra".to_string(), signal(&[200.0]))]);
        let routed = route_requests(&sites, &dcs, &signals, 0.67, None).unwrap();
        assert_eq!(routed.decisions[0].dc_id, "dca");
    }

    #[test]
    fn latency_cap_restricts_eligibility() {
        let (sites, dcs, signals) = two_dc_scenario(100.0, 300.0);
        // Cap excludes dc1 (distance 1000): the greener DC is unreachable.
        let routed = route_requests(&sites, &dcs, &signals, 0.67, Some(500.0)).unwrap();
        assert_eq!(routed.decisions[0].dc_id, "dc2");
        let err = route_requests(&sites, &dcs, &signals, 0.67, Some(10.0)).unwrap_err();
        assert_eq!(
            err,
            OptimizerError::NoEligibleDc {
                site_id: "s1".into()
            }
        );
    }

    #[test]
    fn routing_requires_signals_for_every_region() {
        let (sites, dcs, mut signals) = two_dc_scenario(100.0, 300.0);
        signals.remove("rb");
        let err = route_requests(&sites, &dcs, &signals, 0.67, None).unwrap_err();
        assert_eq!(
            err,
            OptimizerError::MissingSignal {
                region_id: "rb".into()
            }
        );
    }

    #[test]
    fn baseline_picks_closest_dc() {
        let (sites, dcs, _) = two_dc_scenario(100.0, 300.0);
        let baseline = route_baseline(&sites, &dcs).unwrap();
        assert_eq!(baseline.decisions[0].dc_id, "dc2");
    }

    #[test]
    fn baseline_single_dc_and_distance_tie() {
        let dcs = vec![dc("only", "ra")];
        let sites = vec![site("s1", &[("only", 42.0)], &[1.0])];
        assert_eq!(route_baseline(&sites, &dcs).unwrap().decisions[0].dc_id, "only");

        let dcs = vec![dc("dcb", "ra"), dc("dca", "ra")];
        let sites = vec![site("s1", &[("dca", 100.0), ("dcb", 100.0)], &[1.0])];
        assert_eq!(route_baseline(&sites, &dcs).unwrap().decisions[0].dc_id, "dca");
    }

    #[test]
    fn baseline_ignores_signals_entirely() {
        let (sites, dcs, _) = two_dc_scenario(100.0, 300.0);
        // Baseline has no signal parameter at all; permuting signals cannot
        // change it. Assert it is deterministic across calls.
        assert_eq!(
            route_baseline(&sites, &dcs).unwrap(),
            route_baseline(&sites, &dcs).unwrap()
        );
    }

    #[test]
    fn routing_conserves_requests_per_hour() {
        let dcs = vec![dc("dc1", "ra"), dc("dc2", "rb")];
        let sites = vec![
            site("s1", &[("dc1", 10.0), ("dc2", 20.0)], &[3.0, 7.0]),
            site("s2", &[("dc1", 25.0), ("dc2", 5.0)], &[2.0, 0.0]),
        ];
        let signals = BTreeMap::from([
            ("ra".to_string(), signal(&[100.0, 50.0])),
            ("rb".to_string(), signal(&[200.0, 25.0])),
        ]);
        let routed = route_requests(&sites, &dcs, &signals, 0.67, None).unwrap();
        assert_eq!(routed.requests_at_hour(0), 5.0);
        assert_eq!(routed.requests_at_hour(1), 7.0);
    }

    #[test]
    fn schedule_prefers_low_ci_then_proximity_to_nominal() {
        let job = TemporalJob::new(0, 1, 3, 1.0).unwrap();
        let start = schedule_job(&job, &signal(&[100.0, 50.0, 200.0, 50.0])).unwrap();
        assert_eq!(start, 1);
    }

    #[test]
    fn schedule_constant_signal_stays_at_nominal() {
        let job = TemporalJob::new(2, 2, 8, 1.0).unwrap();
        let start = schedule_job(&job, &signal(&[70.0; 12])).unwrap();
        assert_eq!(start, 2);
    }

    #[test]
    fn schedule_zero_flexibility_stays_at_nominal() {
        let job = TemporalJob::new(3, 2, 0, 1.0).unwrap();
        let start = schedule_job(&job, &signal(&[9.0, 8.0, 7.0, 100.0, 100.0])).unwrap();
        assert_eq!(start, 3);
    }

    #[test]
    fn schedule_window_is_clipped_to_horizon() {
        // Nominal 10 with k = 8 on a 6-hour signal: window clips to [2, 4].
        let job = TemporalJob::new(10, 2, 8, 1.0).unwrap();
        let start = schedule_job(&job, &signal(&[1.0, 1.0, 5.0, 9.0, 2.0, 9.0])).unwrap();
        assert_eq!(start, 4);
    }

    #[test]
    fn schedule_rejects_empty_window() {
        let job = TemporalJob::new(0, 9, 2, 1.0).unwrap();
        let err = schedule_job(&job, &signal(&[1.0; 4])).unwrap_err();
        assert!(matches!(err, OptimizerError::EmptyWindow { .. }));

        let far_job = TemporalJob::new(10, 1, 2, 1.0).unwrap();
        let err = schedule_job(&far_job, &signal(&[1.0; 4])).unwrap_err();
        assert!(matches!(err, OptimizerError::EmptyWindow { .. }));
    }

    #[test]
    fn schedule_baseline_returns_nominal() {
        for nominal in [0, 1, 23] {
            let job = TemporalJob::new(nominal, 1, 8, 1.0).unwrap();
            assert_eq!(schedule_baseline(&job), nominal);
        }
    }

    fn linear_job(work: f64, max: u32, horizon: usize) -> AutoscaleJob {
        AutoscaleJob::new(0, horizon, work, max, 1.0, ThroughputProfile::Linear).unwrap()
    }

    fn plan_cost(plan: &AllocationPlan, cis: &[f64]) -> f64 {
        plan.counts
            .iter()
            .enumerate()
            .map(|(i, &a)| a as f64 * cis[plan.release + i])
            .sum()
    }

    /// Exhaustive minimum emission over all completing plans.
    fn brute_force_cost(job: &AutoscaleJob, cis: &[f64]) -> f64 {
        let window = job.deadline - job.release;
        let levels = job.max_instances as usize + 1;
        let mut best = f64::INFINITY;
        let mut counts = vec![0u32; window];
        fn recurse(
            t: usize,
            counts: &mut Vec<u32>,
            job: &AutoscaleJob,
            cis: &[f64],
            best: &mut f64,
            levels: usize,
        ) {
            if t == counts.len() {
                let done: f64 = counts
                    .iter()
                    .map(|&a| job.throughput_profile.rate(a))
                    .sum();
                if done >= job.work {
                    let cost: f64 = counts
                        .iter()
                        .enumerate()
                        .map(|(i, &a)| a as f64 * cis[job.release + i])
                        .sum();
                    if cost < *best {
                        *best = cost;
                    }
                }
                return;
            }
            for a in 0..levels {
                counts[t] = a as u32;
                recurse(t + 1, counts, job, cis, best, levels);
            }
            counts[t] = 0;
        }
        recurse(0, &mut counts, job, cis, &mut best, levels);
        best
    }

    #[test]
    fn autoscale_packs_work_into_low_ci_hours() {
        let cis = [100.0, 50.0, 200.0, 50.0];
        let job = linear_job(4.0, 2, 4);
        let plan = autoscale(&job, &signal(&cis)).unwrap();
        assert_eq!(plan.counts, vec![0, 2, 0, 2]);
        assert_eq!(plan_cost(&plan, &cis), 200.0);
        let baseline = autoscale_baseline(&job).unwrap();
        assert_eq!(plan_cost(&baseline, &cis), 400.0);
    }

    #[test]
    fn autoscale_constant_signal_matches_baseline_emissions() {
        let cis = [80.0; 6];
        let job = linear_job(6.0, 1, 6);
        let plan = autoscale(&job, &signal(&cis)).unwrap();
        assert_eq!(plan.counts, vec![1; 6]);
        let baseline = autoscale_baseline(&job).unwrap();
        assert_eq!(plan_cost(&plan, &cis), plan_cost(&baseline, &cis));
    }

    #[test]
    fn autoscale_zero_work_yields_zero_plan() {
        let job = linear_job(0.0, 3, 4);
        let plan = autoscale(&job, &signal(&[1.0; 4])).unwrap();
        assert_eq!(plan.counts, vec![0; 4]);
        assert_eq!(autoscale_baseline(&job).unwrap().counts, vec![0; 4]);
    }

    #[test]
    fn autoscale_rejects_infeasible_work() {
        let job = linear_job(9.0, 2, 4);
        let err = autoscale(&job, &signal(&[1.0; 4])).unwrap_err();
        assert_eq!(
            err,
            OptimizerError::InfeasibleDeadline {
                work: 9.0,
                capacity: 8.0
            }
        );
    }

    #[test]
    fn autoscale_fractional_work_rounds_the_closing_hour_up() {
        let cis = [10.0, 1.0, 5.0];
        let job = linear_job(3.5, 2, 3);
        let plan = autoscale(&job, &signal(&cis)).unwrap();
        // Cheapest hour (1) capped at 2, then hour 2 closes with ceil(1.5) = 2.
        assert_eq!(plan.counts, vec![0, 2, 2]);
        assert!(plan.work_done(&job.throughput_profile) >= job.work);
    }

    #[test]
    fn autoscale_matches_brute_force_on_linear_instances() {
        let cases: &[(&[f64], f64, u32)] = &[
            (&[100.0, 50.0, 200.0, 50.0], 4.0, 2),
            (&[3.0, 1.0, 4.0, 1.0, 5.0], 7.0, 3),
            (&[9.0, 9.0, 9.0], 5.0, 2),
            (&[2.0, 7.0, 1.0, 8.0, 2.0, 8.0], 11.0, 2),
        ];
        for &(cis, work, max) in cases {
            let job = linear_job(work, max, cis.len());
            let plan = autoscale(&job, &signal(cis)).unwrap();
            assert!(plan.work_done(&job.throughput_profile) >= work);
            assert_eq!(
                plan_cost(&plan, cis),
                brute_force_cost(&job, cis),
                "cis {cis:?} work {work} max {max}"
            );
        }
    }

    #[test]
    fn autoscale_custom_profile_matches_brute_force() {
        // Diminishing returns: deep fills are work-inefficient, and the
        // cover boundary rewards plans a pure marginal-cost greedy misses.
        let cases: &[(&[f64], &[f64], f64)] = &[
            (&[0.0, 1.0, 1.5, 1.7], &[10.0, 5.0], 2.6),
            (&[0.0, 1.0, 1.5, 1.7], &[5.0, 5.0, 10.0], 3.2),
            (&[0.0, 10.0, 11.0, 12.0], &[1.0, 0.15, 0.14], 23.0),
            (&[0.0, 1.0, 1.1, 1.2], &[100.0, 1.0], 1.2),
            (&[0.0, 2.0, 2.0, 2.0], &[4.0, 3.0, 2.0], 5.0),
        ];
        for &(rates, cis, work) in cases {
            let job = AutoscaleJob::new(
                0,
                cis.len(),
                work,
                (rates.len() - 1) as u32,
                1.0,
                ThroughputProfile::Custom(rates.to_vec()),
            )
            .unwrap();
            let plan = autoscale(&job, &signal(cis)).unwrap();
            assert!(plan.work_done(&job.throughput_profile) >= work);
            assert_eq!(
                plan_cost(&plan, cis),
                brute_force_cost(&job, cis),
                "rates {rates:?} cis {cis:?} work {work}"
            );
        }
    }

    #[test]
    fn autoscale_custom_linear_rates_match_linear_profile() {
        let cis = [7.0, 3.0, 9.0, 1.0, 4.0];
        let linear = linear_job(9.0, 3, 5);
        let custom = AutoscaleJob::new(
            0,
            5,
            9.0,
            3,
            1.0,
            ThroughputProfile::Custom(vec![0.0, 1.0, 2.0, 3.0]),
        )
        .unwrap();
        let a = autoscale(&linear, &signal(&cis)).unwrap();
        let b = autoscale(&custom, &signal(&cis)).unwrap();
        assert_eq!(plan_cost(&a, &cis), plan_cost(&b, &cis));
    }

    #[test]
    fn autoscale_respects_release_and_deadline() {
        let cis = [0.0, 0.0, 50.0, 10.0, 0.0, 0.0];
        let job = AutoscaleJob::new(2, 4, 2.0, 2, 1.0, ThroughputProfile::Linear).unwrap();
        let plan = autoscale(&job, &signal(&cis)).unwrap();
        assert_eq!(plan.release, 2);
        assert_eq!(plan.counts, vec![0, 2]);
    }

    #[test]
    fn autoscale_baseline_runs_one_instance_until_done() {
        let day = AutoscaleJob::day_job(0, 1.0).unwrap();
        assert_eq!(autoscale_baseline(&day).unwrap().counts, vec![1; 24]);

        let short = linear_job(4.0, 2, 8);
        let mut expected = vec![1u32; 4];
        expected.resize(8, 0);
        assert_eq!(autoscale_baseline(&short).unwrap().counts, expected);
    }

    #[test]
    fn autoscale_baseline_rejects_work_beyond_the_window() {
        let job = linear_job(30.0, 8, 24);
        // The optimizer can finish 30 instance-hours, the one-instance
        // baseline cannot.
        assert!(autoscale(&job, &signal(&[1.0; 24])).is_ok());
        assert!(matches!(
            autoscale_baseline(&job).unwrap_err(),
            OptimizerError::InfeasibleDeadline { .. }
        ));
    }

    #[test]
    fn default_constants_match_reference_configuration() {
        assert_eq!(DEFAULT_ALPHA, 0.67);
        assert!(crate::approx_eq(1.0 - DEFAULT_ALPHA, 0.33));
        assert_eq!(DEFAULT_NOMINAL_START, 1);
        assert_eq!(DEFAULT_FLEX_HOURS, 8);
        assert_eq!(DEFAULT_WORK_INSTANCE_HOURS, 24.0);
        assert_eq!(DEFAULT_MAX_INSTANCES, 8);

        let day = AutoscaleJob::day_job(0, 1.0).unwrap();
        assert_eq!(day.deadline - day.release, 24);
        assert_eq!(day.work, DEFAULT_WORK_INSTANCE_HOURS);
        assert_eq!(day.max_instances, DEFAULT_MAX_INSTANCES);
        assert_eq!(day.throughput_profile, ThroughputProfile::Linear);
    }

    #[test]
    fn job_constructors_reject_bad_parameters() {
        assert!(TemporalJob::new(0, 0, 1, 1.0).is_err());
        assert!(TemporalJob::new(0, 1, 1, 0.0).is_err());
        assert!(AutoscaleJob::new(3, 3, 1.0, 2, 1.0, ThroughputProfile::Linear).is_err());
        assert!(AutoscaleJob::new(0, 4, -1.0, 2, 1.0, ThroughputProfile::Linear).is_err());
        assert!(AutoscaleJob::new(0, 4, 1.0, 0, 1.0, ThroughputProfile::Linear).is_err());
        assert!(matches!(
            AutoscaleJob::new(0, 4, 1.0, 2, 1.0, ThroughputProfile::Custom(vec![0.0, 1.0]))
                .unwrap_err(),
            OptimizerError::InvalidProfile { .. }
        ));
        assert!(matches!(
            AutoscaleJob::new(
                0,
                4,
                1.0,
                2,
                1.0,
                ThroughputProfile::Custom(vec![0.5, 1.0, 2.0])
            )
            .unwrap_err(),
            OptimizerError::InvalidProfile { .. }
        ));
        assert!(matches!(
            AutoscaleJob::new(
                0,
                4,
                1.0,
                2,
                1.0,
                ThroughputProfile::Custom(vec![0.0, 2.0, 1.0])
            )
            .unwrap_err(),
            OptimizerError::InvalidProfile { .. }
        ));
    }

    #[test]
    fn autoscale_requires_signal_through_deadline() {
        let job = AutoscaleJob::new(0, 8, 4.0, 2, 1.0, ThroughputProfile::Linear).unwrap();
        let err = autoscale(&job, &signal(&[1.0; 4])).unwrap_err();
        assert_eq!(
            err,
            OptimizerError::SignalTooShort {
                needed: 8,
                available: 4
            }
        );
    }
}
