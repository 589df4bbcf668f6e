//! Level 1: the joint user equilibrium of EV drivers (route, station or
//! opt-out) and non-EV drivers (route) under shared congestion.
//!
//! In [`Mode::Endogenous`] both classes are assigned simultaneously. In
//! [`Mode::Exogenous`] non-EV traffic is first assigned alone and then
//! frozen as a link preload that never re-routes while EVs equilibrate.

mod frank_wolfe;
mod network;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{LinkId, NodeId, PriceProfile, Scenario, StationId, TravelClass};

pub use network::{AugmentedNetwork, PathStep};
use network::{ClassFilter, Costs, Loads};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssignmentError {
    #[error("no price for open station {0}")]
    MissingPrice(StationId),
    #[error("unknown station {0}")]
    UnknownStation(StationId),
    #[error("station {station} has invalid price {price}")]
    InvalidPrice { station: StationId, price: f64 },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("{class} destination {destination} unreachable from {origin}")]
    Unreachable {
        class: TravelClass,
        origin: NodeId,
        destination: NodeId,
    },
    #[error("invalid solve options: {0}")]
    InvalidOptions(&'static str),
    #[error("flow state does not match the network")]
    ShapeMismatch,
}

/// How non-EV traffic enters Level 1.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Non-EV drivers re-route in the same equilibrium as EV drivers.
    #[default]
    Endogenous,
    /// Non-EV flows are solved without EVs, then frozen as preloads.
    Exogenous,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Endogenous => "endogenous",
            Mode::Exogenous => "exogenous",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOptions {
    pub gap_tolerance: f64,
    pub max_iterations: usize,
    pub line_search_tolerance: f64,
    pub mode: Mode,
    /// Keep per-iteration gap and potential values in the result.
    pub record_trace: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            gap_tolerance: 1e-6,
            max_iterations: 10_000,
            line_search_tolerance: 1e-10,
            mode: Mode::Endogenous,
            record_trace: false,
        }
    }
}

impl SolveOptions {
    fn check(&self) -> Result<(), AssignmentError> {
        if !(self.gap_tolerance > 0.0) {
            return Err(AssignmentError::InvalidOptions("gap tolerance must be > 0"));
        }
        if !(self.line_search_tolerance > 0.0) {
            return Err(AssignmentError::InvalidOptions(
                "line-search tolerance must be > 0",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub relative_gap: f64,
    /// Beckmann potential, veh·minutes.
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptOut {
    /// Position of the EV entry in the scenario's demand table.
    pub demand_index: usize,
    pub origin: NodeId,
    pub destination: NodeId,
    pub demand: f64,
    pub volume: f64,
}

/// A Level 1 equilibrium (or the best iterate found).
#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub links: Vec<LinkId>,
    /// Non-EV flow per link; the frozen preload in exogenous mode.
    pub nonev_flow: Vec<f64>,
    pub ev_flow: Vec<f64>,
    pub station_throughput: BTreeMap<StationId, f64>,
    pub opt_out: Vec<OptOut>,
    pub iterations: usize,
    pub relative_gap: f64,
    pub converged: bool,
    pub trace: Vec<IterationRecord>,
}

impl FlowState {
    pub fn total_flow(&self, link: usize) -> f64 {
        self.nonev_flow[link] + self.ev_flow[link]
    }

    pub fn link_index(&self, link: LinkId) -> Option<usize> {
        self.links.iter().position(|&l| l == link)
    }

    pub fn total_opt_out(&self) -> f64 {
        self.opt_out.iter().map(|o| o.volume).sum()
    }
}

/// Frozen non-EV link volumes for exogenous mode.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkPreload {
    pub links: Vec<LinkId>,
    pub volume: Vec<f64>,
    pub iterations: usize,
    pub relative_gap: f64,
    pub converged: bool,
}

impl LinkPreload {
    pub fn get(&self, link: LinkId) -> Option<f64> {
        self.links
            .iter()
            .position(|&l| l == link)
            .map(|i| self.volume[i])
    }
}

/// Augmented network for both classes with the given stations open.
pub fn build_augmented_network(
    scenario: &Scenario,
    open: &[StationId],
    prices: &PriceProfile,
) -> Result<AugmentedNetwork, AssignmentError> {
    AugmentedNetwork::new(scenario, open, prices, ClassFilter::Both, None)
}

/// Augmented network whose physical links carry a frozen preload; only EV
/// demand is variable.
pub fn build_preloaded_network(
    scenario: &Scenario,
    open: &[StationId],
    prices: &PriceProfile,
    preload: &LinkPreload,
) -> Result<AugmentedNetwork, AssignmentError> {
    if preload.links.len() != scenario.links.len() {
        return Err(AssignmentError::ShapeMismatch);
    }
    AugmentedNetwork::new(
        scenario,
        open,
        prices,
        ClassFilter::EvOnly,
        Some(preload.volume.clone()),
    )
}

fn loads_of(aug: &AugmentedNetwork, flow: &FlowState) -> Result<Loads, AssignmentError> {
    if flow.links.len() != aug.links.len() || flow.opt_out.len() != aug.ev_trips.len() {
        return Err(AssignmentError::ShapeMismatch);
    }
    let link = (0..aug.links.len())
        .map(|l| {
            if aug.frozen_background {
                flow.ev_flow[l]
            } else {
                flow.ev_flow[l] + flow.nonev_flow[l]
            }
        })
        .collect();
    let charger = aug
        .chargers
        .iter()
        .map(|c| flow.station_throughput.get(&c.station).copied().unwrap_or(0.0))
        .collect();
    let bypass = flow.opt_out.iter().map(|o| o.volume).collect();
    Ok(Loads {
        link,
        charger,
        bypass,
    })
}

fn costs_at(aug: &AugmentedNetwork, flow: &FlowState) -> Result<Costs, AssignmentError> {
    Ok(aug.costs(&loads_of(aug, flow)?))
}

/// A cheapest path for `class` at the link costs implied by `flows`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneralizedPath {
    pub steps: Vec<PathStep>,
    pub nodes: Vec<NodeId>,
    /// Generalized cost in currency.
    pub cost: f64,
}

/// Minimum generalized-cost path for one class. Ties go to the
/// lexicographically smallest node sequence, then the smallest link ids.
/// An EV opts out only when the outside option is strictly cheaper.
pub fn shortest_generalized_path(
    aug: &AugmentedNetwork,
    class: TravelClass,
    origin: NodeId,
    destination: NodeId,
    flows: &FlowState,
) -> Result<GeneralizedPath, AssignmentError> {
    let o = aug.node(origin).ok_or(AssignmentError::UnknownNode(origin))?;
    let d = aug
        .node(destination)
        .ok_or(AssignmentError::UnknownNode(destination))?;
    let costs = costs_at(aug, flows)?;
    let (steps, nodes, minutes) =
        aug.cheapest_path(class, o, d, &costs)
            .ok_or(AssignmentError::Unreachable {
                class,
                origin,
                destination,
            })?;
    Ok(GeneralizedPath {
        steps,
        nodes,
        cost: minutes * aug.vot,
    })
}

/// `1 - (all-or-nothing cost) / (current cost)` at the costs frozen at
/// `flow`. Zero when no variable flow exists.
pub fn relative_gap(flow: &FlowState, aug: &AugmentedNetwork) -> Result<f64, AssignmentError> {
    let loads = loads_of(aug, flow)?;
    let costs = aug.costs(&loads);
    let aon = aug.all_or_nothing(&costs)?;
    Ok(frank_wolfe::gap_from_totals(
        aug.total_cost(&loads, &costs),
        aon.shortest_total,
    ))
}

/// Beckmann potential of `flow` on `aug`, veh·minutes.
pub fn beckmann_objective(flow: &FlowState, aug: &AugmentedNetwork) -> Result<f64, AssignmentError> {
    Ok(aug.objective(&loads_of(aug, flow)?))
}

/// Flow through a station's charging link; zero for stations not open.
pub fn station_demand(flow: &FlowState, station: StationId) -> f64 {
    flow.station_throughput.get(&station).copied().unwrap_or(0.0)
}

fn flow_state(aug: &AugmentedNetwork, solution: frank_wolfe::Solution, scenario: &Scenario) -> FlowState {
    let f = solution.flows;
    let nonev_flow = aug
        .background
        .iter()
        .zip(&f.nonev)
        .map(|(bg, x)| bg + x)
        .collect();
    let ev_flow = f.ev[0].iter().zip(&f.ev[1]).map(|(a, b)| a + b).collect();
    let station_throughput = aug
        .chargers
        .iter()
        .zip(&f.charger)
        .map(|(c, &x)| (c.station, x))
        .collect();
    let opt_out = aug
        .ev_trips
        .iter()
        .zip(&f.bypass)
        .map(|(t, &x)| {
            let entry = &scenario.demand[t.demand_index];
            OptOut {
                demand_index: t.demand_index,
                origin: entry.origin,
                destination: entry.destination,
                demand: t.volume,
                volume: x,
            }
        })
        .collect();
    FlowState {
        links: aug.links.iter().map(|l| l.id).collect(),
        nonev_flow,
        ev_flow,
        station_throughput,
        opt_out,
        iterations: solution.iterations,
        relative_gap: solution.relative_gap,
        converged: solution.converged,
        trace: solution.trace,
    }
}

/// Solves the non-EV-only equilibrium with no EV flow and returns its link
/// volumes as fixed preloads.
pub fn freeze_background(
    scenario: &Scenario,
    options: &SolveOptions,
) -> Result<LinkPreload, AssignmentError> {
    options.check()?;
    let net = AugmentedNetwork::new(
        scenario,
        &[],
        &PriceProfile::new(),
        ClassFilter::NonEvOnly,
        None,
    )?;
    let solution = frank_wolfe::solve(&net, options)?;
    Ok(LinkPreload {
        links: net.links.iter().map(|l| l.id).collect(),
        volume: solution.flows.nonev,
        iterations: solution.iterations,
        relative_gap: solution.relative_gap,
        converged: solution.converged,
    })
}

/// Level 1 solver bound to one scenario and one set of options. In
/// exogenous mode the non-EV preload is computed once here and shared by
/// every subsequent solve.
#[derive(Clone, Debug)]
pub struct EquilibriumSolver<'a> {
    scenario: &'a Scenario,
    options: SolveOptions,
    preload: Option<LinkPreload>,
}

impl<'a> EquilibriumSolver<'a> {
    pub fn new(scenario: &'a Scenario, options: &SolveOptions) -> Result<Self, AssignmentError> {
        options.check()?;
        let preload = match options.mode {
            Mode::Endogenous => None,
            Mode::Exogenous => Some(freeze_background(scenario, options)?),
        };
        Ok(EquilibriumSolver {
            scenario,
            options: options.clone(),
            preload,
        })
    }

    pub fn scenario(&self) -> &'a Scenario {
        self.scenario
    }

    pub fn options(&self) -> &SolveOptions {
        &self.options
    }

    pub fn preload(&self) -> Option<&LinkPreload> {
        self.preload.as_ref()
    }

    /// The augmented network a solve runs on.
    pub fn network(
        &self,
        open: &[StationId],
        prices: &PriceProfile,
    ) -> Result<AugmentedNetwork, AssignmentError> {
        match &self.preload {
            None => build_augmented_network(self.scenario, open, prices),
            Some(preload) => build_preloaded_network(self.scenario, open, prices, preload),
        }
    }

    pub fn solve(&self, open: &[StationId], prices: &PriceProfile) -> Result<FlowState, AssignmentError> {
        let net = self.network(open, prices)?;
        let solution = frank_wolfe::solve(&net, &self.options)?;
        let mut state = flow_state(&net, solution, self.scenario);
        if let Some(preload) = &self.preload {
            state.iterations += preload.iterations;
            state.converged &= preload.converged;
        }
        Ok(state)
    }
}

/// Level 1 equilibrium for the given open stations and prices.
///
/// Non-convergence is not an error: the returned state carries
/// `converged = false` together with the gap reached.
pub fn solve_user_equilibrium(
    scenario: &Scenario,
    open: &[StationId],
    prices: &PriceProfile,
    options: &SolveOptions,
) -> Result<FlowState, AssignmentError> {
    EquilibriumSolver::new(scenario, options)?.solve(open, prices)
}

/// The augmented network a solve in `options.mode` runs on.
pub fn network_for_mode(
    scenario: &Scenario,
    open: &[StationId],
    prices: &PriceProfile,
    options: &SolveOptions,
) -> Result<AugmentedNetwork, AssignmentError> {
    EquilibriumSolver::new(scenario, options)?.network(open, prices)
}
