//! Endogenous versus exogenous comparisons, metrics and parameter sweeps.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::assignment::{station_demand, FlowState, Mode};
use crate::model::{validate_scenario, PriceProfile, ProviderId, Scenario, StationId, TravelClass, ValidationError};
use crate::placement::{solve_placement, Method, PlacementError, PlacementResult};
use crate::pricing::{provider_profit, PricingOptions};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("sweep value {value} gives an invalid scenario: {}", .errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidPoint {
        value: f64,
        errors: Vec<ValidationError>,
    },
}

/// Volume over capacity on BPR links; affine links have no capacity.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Congestion {
    pub mean: f64,
    pub max: f64,
}

pub fn congestion(scenario: &Scenario, flow: &FlowState) -> Congestion {
    let ratios: Vec<f64> = scenario
        .links
        .iter()
        .filter_map(|link| {
            let cap = link.latency.capacity()?;
            let i = flow.link_index(link.id)?;
            Some(flow.total_flow(i) / cap)
        })
        .collect();
    if ratios.is_empty() {
        return Congestion::default();
    }
    Congestion {
        mean: ratios.iter().sum::<f64>() / ratios.len() as f64,
        max: ratios.iter().copied().fold(0.0, f64::max),
    }
}

/// Time cost in currency per class: link time plus, for EVs, station delay.
fn travel_cost(scenario: &Scenario, flow: &FlowState) -> (f64, f64) {
    let vot = scenario.params.vot;
    let mut ev = 0.0;
    let mut nonev = 0.0;
    for (i, link) in scenario.links.iter().enumerate() {
        let t = link.latency.eval(flow.total_flow(i));
        ev += flow.ev_flow[i] * t * vot;
        nonev += flow.nonev_flow[i] * t * vot;
    }
    for (&s, &x) in &flow.station_throughput {
        if let Some(station) = scenario.station(s) {
            ev += x * station.delay.eval(x) * vot;
        }
    }
    (ev, nonev)
}

/// Demand-weighted mean generalized cost of EV trips in currency, counting
/// charging price and opted-out trips at the outside cost.
pub fn mean_ev_cost(scenario: &Scenario, prices: &PriceProfile, flow: &FlowState) -> f64 {
    let demand = scenario.total_demand(TravelClass::Ev);
    if demand <= 0.0 {
        return 0.0;
    }
    let (time, _) = travel_cost(scenario, flow);
    let energy: f64 = flow
        .station_throughput
        .iter()
        .map(|(&s, &x)| x * prices.get(s).unwrap_or(0.0) * scenario.params.energy)
        .sum();
    let outside = flow.total_opt_out() * scenario.params.outside_cost;
    (time + energy + outside) / demand
}

#[derive(Clone, Debug, PartialEq)]
pub struct StationMetrics {
    pub station: StationId,
    pub provider: ProviderId,
    pub price: f64,
    pub demand: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub entrant: ProviderId,
    pub profits: BTreeMap<ProviderId, f64>,
    pub stations: Vec<StationMetrics>,
    /// Opted-out volume per EV demand entry, keyed by demand index.
    pub opt_out: Vec<(usize, f64)>,
    pub congestion: Congestion,
    pub ev_travel_cost: f64,
    pub nonev_travel_cost: f64,
}

impl Metrics {
    pub fn entrant_profit(&self) -> f64 {
        self.profits.get(&self.entrant).copied().unwrap_or(0.0)
    }
}

/// Metric table for a Level 1 state under `prices`.
pub fn metrics_report(scenario: &Scenario, flow: &FlowState, prices: &PriceProfile) -> Metrics {
    let profits = scenario
        .providers
        .iter()
        .map(|p| (p.id, provider_profit(scenario, prices, p.id, flow)))
        .collect();
    let stations = prices
        .iter()
        .filter_map(|(s, price)| {
            Some(StationMetrics {
                station: s,
                provider: scenario.station(s)?.provider,
                price,
                demand: station_demand(flow, s),
            })
        })
        .collect();
    let (ev, nonev) = travel_cost(scenario, flow);
    Metrics {
        entrant: scenario.entrant().id,
        profits,
        stations,
        opt_out: flow.opt_out.iter().map(|o| (o.demand_index, o.volume)).collect(),
        congestion: congestion(scenario, flow),
        ev_travel_cost: ev,
        nonev_travel_cost: nonev,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonDeltas {
    /// Exogenous minus endogenous entrant profit.
    pub profit_abs: f64,
    /// `profit_abs` over the endogenous profit's magnitude.
    pub profit_rel: f64,
    pub same_placement: bool,
    /// Largest price gap over stations open in both solutions.
    pub max_price_diff: f64,
    pub ev_cost: [f64; 2],
    /// Exogenous minus endogenous mean EV generalized cost.
    pub mean_ev_cost_diff: f64,
    pub congestion: [Congestion; 2],
}

impl ComparisonDeltas {
    pub fn compute(scenario: &Scenario, endogenous: &PlacementResult, exogenous: &PlacementResult) -> Self {
        let profit_abs = exogenous.profit - endogenous.profit;
        let profit_rel = if profit_abs == 0.0 {
            0.0
        } else {
            profit_abs / endogenous.profit.abs()
        };
        let (pe, px) = (&endogenous.pricing.prices, &exogenous.pricing.prices);
        let max_price_diff = pe
            .iter()
            .filter_map(|(s, p)| px.get(s).map(|q| (q - p).abs()))
            .fold(0.0, f64::max);
        let ev_cost = [
            mean_ev_cost(scenario, pe, &endogenous.pricing.flow),
            mean_ev_cost(scenario, px, &exogenous.pricing.flow),
        ];
        ComparisonDeltas {
            profit_abs,
            profit_rel,
            same_placement: endogenous.placement == exogenous.placement,
            max_price_diff,
            mean_ev_cost_diff: ev_cost[1] - ev_cost[0],
            ev_cost,
            congestion: [
                congestion(scenario, &endogenous.pricing.flow),
                congestion(scenario, &exogenous.pricing.flow),
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    pub k: usize,
    pub endogenous: PlacementResult,
    pub exogenous: PlacementResult,
    pub deltas: ComparisonDeltas,
}

impl ComparisonReport {
    pub fn converged(&self) -> bool {
        self.endogenous.converged && self.exogenous.converged
    }
}

/// Solves the placement problem once with non-EV traffic re-routing and
/// once with it frozen; everything else is shared.
pub fn run_endogeneity_comparison(
    scenario: &Scenario,
    k: usize,
    method: Method,
    options: &PricingOptions,
) -> Result<ComparisonReport, HarnessError> {
    let with_mode = |mode| {
        let mut o = options.clone();
        o.assignment.mode = mode;
        o
    };
    let endogenous = solve_placement(scenario, k, method, &with_mode(Mode::Endogenous))?;
    let exogenous = solve_placement(scenario, k, method, &with_mode(Mode::Exogenous))?;
    Ok(ComparisonReport {
        k,
        deltas: ComparisonDeltas::compute(scenario, &endogenous, &exogenous),
        endogenous,
        exogenous,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SweepParameter {
    /// Multiplier on every non-EV demand entry.
    NonEvScale,
    OutsideCost,
    /// Placement budget.
    K,
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParameter::NonEvScale => "nonev_scale",
            SweepParameter::OutsideCost => "outside_cost",
            SweepParameter::K => "k",
        })
    }
}

impl FromStr for SweepParameter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nonev_scale" => Ok(SweepParameter::NonEvScale),
            "outside_cost" => Ok(SweepParameter::OutsideCost),
            "k" => Ok(SweepParameter::K),
            _ => Err(format!(
                "unknown sweep parameter '{s}' (expected nonev_scale, outside_cost or k)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub report: ComparisonReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSeries {
    pub parameter: SweepParameter,
    pub points: Vec<SweepPoint>,
}

impl SweepSeries {
    pub fn converged(&self) -> bool {
        self.points.iter().all(|p| p.report.converged())
    }
}

fn sweep_point(
    scenario: &Scenario,
    parameter: SweepParameter,
    value: f64,
    k: usize,
) -> Result<(Scenario, usize), HarnessError> {
    let mut data = scenario.clone().into_data();
    let mut k = k;
    match parameter {
        SweepParameter::NonEvScale => {
            for d in data.demand.iter_mut().filter(|d| d.class == TravelClass::NonEv) {
                d.volume *= value;
            }
        }
        SweepParameter::OutsideCost => data.params.outside_cost = value,
        SweepParameter::K => {
            if !(value >= 1.0 && value.fract() == 0.0) {
                return Err(HarnessError::InvalidSweep(format!("k must be a positive integer, got {value}")));
            }
            k = value as usize;
        }
    }
    let s = validate_scenario(data).map_err(|errors| HarnessError::InvalidPoint { value, errors })?;
    Ok((s, k))
}

/// One comparison per value of `parameter`; `k` is the budget for the
/// parameters other than `K`.
pub fn sweep(
    scenario: &Scenario,
    parameter: SweepParameter,
    values: &[f64],
    k: usize,
    method: Method,
    options: &PricingOptions,
) -> Result<SweepSeries, HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::InvalidSweep("no values".into()));
    }
    if values.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(HarnessError::InvalidSweep("values must be strictly increasing".into()));
    }
    let points = values
        .par_iter()
        .map(|&value| {
            let (s, k) = sweep_point(scenario, parameter, value, k)?;
            Ok(SweepPoint {
                value,
                report: run_endogeneity_comparison(&s, k, method, options)?,
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Ok(SweepSeries { parameter, points })
}
