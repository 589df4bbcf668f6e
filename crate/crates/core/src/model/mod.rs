//! Domain types shared by every level of the game: the physical network,
//! charging stations, providers, travel demand and the economic weights
//! that turn minutes and prices into one generalized cost.
//!
//! Units: time in minutes, flows in vehicles per hour, energy in kWh and
//! money in a single unnamed currency.

mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Deref;

use thiserror::Error;

pub use validate::{validate_scenario, ValidationError};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(
    /// Identifier of a physical network node.
    NodeId
);
id_type!(LinkId);
id_type!(StationId);
id_type!(ProviderId);

/// Rejected input to one of the cost primitives.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("{quantity} must be nonnegative, got {value}")]
    Negative { quantity: &'static str, value: f64 },
    #[error("{quantity} must be finite, got {value}")]
    NotFinite { quantity: &'static str, value: f64 },
}

fn check_nonnegative(quantity: &'static str, value: f64) -> Result<(), DomainError> {
    if value.is_nan() || value.is_infinite() {
        return Err(DomainError::NotFinite { quantity, value });
    }
    if value < 0.0 {
        return Err(DomainError::Negative { quantity, value });
    }
    Ok(())
}

/// Volume-delay function of a physical link, in minutes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LatencyFn {
    /// `free_flow * (1 + alpha * (flow / capacity)^beta)`
    Bpr {
        free_flow: f64,
        capacity: f64,
        alpha: f64,
        beta: f64,
    },
    /// `constant + slope * flow`
    Affine { constant: f64, slope: f64 },
}

impl LatencyFn {
    pub fn bpr(free_flow: f64, capacity: f64, alpha: f64, beta: f64) -> Self {
        LatencyFn::Bpr {
            free_flow,
            capacity,
            alpha,
            beta,
        }
    }

    pub fn affine(constant: f64, slope: f64) -> Self {
        LatencyFn::Affine { constant, slope }
    }

    /// Travel time at zero flow.
    pub fn free_flow_time(&self) -> f64 {
        match *self {
            LatencyFn::Bpr { free_flow, .. } => free_flow,
            LatencyFn::Affine { constant, .. } => constant,
        }
    }

    /// Nominal capacity, when the function has one. Affine links do not.
    pub fn capacity(&self) -> Option<f64> {
        match *self {
            LatencyFn::Bpr { capacity, .. } => Some(capacity),
            LatencyFn::Affine { .. } => None,
        }
    }

    /// Unchecked evaluation; callers guarantee `flow >= 0`.
    pub(crate) fn eval(&self, flow: f64) -> f64 {
        match *self {
            LatencyFn::Bpr {
                free_flow,
                capacity,
                alpha,
                beta,
            } => free_flow * (1.0 + alpha * (flow / capacity).powf(beta)),
            LatencyFn::Affine { constant, slope } => constant + slope * flow,
        }
    }

    /// Derivative with respect to flow.
    pub(crate) fn slope(&self, flow: f64) -> f64 {
        match *self {
            LatencyFn::Bpr {
                free_flow,
                capacity,
                alpha,
                beta,
            } => free_flow * alpha * beta * (flow / capacity).powf(beta - 1.0) / capacity,
            LatencyFn::Affine { slope, .. } => slope,
        }
    }

    /// Antiderivative vanishing at zero flow.
    pub(crate) fn primitive(&self, flow: f64) -> f64 {
        match *self {
            LatencyFn::Bpr {
                free_flow,
                capacity,
                alpha,
                beta,
            } => {
                free_flow
                    * (flow + alpha * capacity / (beta + 1.0) * (flow / capacity).powf(beta + 1.0))
            }
            LatencyFn::Affine { constant, slope } => constant * flow + 0.5 * slope * flow * flow,
        }
    }
}

/// Travel time on a link carrying `flow` veh/h.
pub fn link_travel_time(latency: &LatencyFn, flow: f64) -> Result<f64, DomainError> {
    check_nonnegative("flow", flow)?;
    Ok(latency.eval(flow))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StationStatus {
    Open,
    Candidate,
}

/// Power-law queueing delay `base * (1 + (throughput / capacity)^exponent)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ServiceDelay {
    pub base: f64,
    pub capacity: f64,
    pub exponent: f64,
}

impl ServiceDelay {
    pub(crate) fn eval(&self, throughput: f64) -> f64 {
        self.base * (1.0 + (throughput / self.capacity).powf(self.exponent))
    }

    pub(crate) fn slope(&self, throughput: f64) -> f64 {
        self.base * self.exponent * (throughput / self.capacity).powf(self.exponent - 1.0)
            / self.capacity
    }

    pub(crate) fn primitive(&self, throughput: f64) -> f64 {
        self.base
            * (throughput
                + self.capacity / (self.exponent + 1.0)
                    * (throughput / self.capacity).powf(self.exponent + 1.0))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Station {
    pub id: StationId,
    pub provider: ProviderId,
    pub node: NodeId,
    pub delay: ServiceDelay,
    pub status: StationStatus,
}

/// Service delay in minutes at a station serving `throughput` veh/h.
pub fn station_service_delay(station: &Station, throughput: f64) -> Result<f64, DomainError> {
    check_nonnegative("throughput", throughput)?;
    Ok(station.delay.eval(throughput))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProviderKind {
    Incumbent,
    Entrant,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Provider {
    pub id: ProviderId,
    pub kind: ProviderKind,
    /// Currency per kWh sold.
    pub marginal_cost: f64,
    /// Currency per hour per open site; only charged to the entrant.
    pub site_cost: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TravelClass {
    Ev,
    NonEv,
}

impl fmt::Display for TravelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TravelClass::Ev => "ev",
            TravelClass::NonEv => "nonev",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemandEntry {
    pub class: TravelClass,
    pub origin: NodeId,
    pub destination: NodeId,
    pub volume: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EconomicParams {
    /// Value of time, currency per minute.
    pub vot: f64,
    /// kWh bought per charging stop.
    pub energy: f64,
    /// Generalized cost of the outside option, currency.
    pub outside_cost: f64,
    pub price_min: f64,
    pub price_max: f64,
    /// Number of uniformly spaced prices a best response evaluates.
    pub grid: usize,
}

impl EconomicParams {
    /// Price of grid point `index` out of `grid`.
    pub fn grid_price(&self, index: usize) -> f64 {
        if index + 1 >= self.grid {
            return self.price_max;
        }
        self.price_min + (self.price_max - self.price_min) * index as f64 / (self.grid - 1) as f64
    }

    pub fn grid_step(&self) -> f64 {
        (self.price_max - self.price_min) / (self.grid.max(2) - 1) as f64
    }

    pub fn grid_prices(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.grid).map(|i| self.grid_price(i))
    }
}

/// Generalized cost of an EV trip through a station, in currency.
pub fn ev_generalized_cost(
    route_minutes: f64,
    station_delay_minutes: f64,
    price: f64,
    params: &EconomicParams,
) -> Result<f64, DomainError> {
    check_nonnegative("route time", route_minutes)?;
    check_nonnegative("station delay", station_delay_minutes)?;
    check_nonnegative("price", price)?;
    Ok(params.vot * (route_minutes + station_delay_minutes) + price * params.energy)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Link {
    pub id: LinkId,
    pub tail: NodeId,
    pub head: NodeId,
    pub latency: LatencyFn,
}

/// Unvalidated problem instance. Turn it into a [`Scenario`] with
/// [`validate_scenario`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioData {
    pub version: u32,
    pub nodes: Vec<NodeId>,
    pub links: Vec<Link>,
    pub providers: Vec<Provider>,
    pub stations: Vec<Station>,
    pub demand: Vec<DemandEntry>,
    pub params: EconomicParams,
}

/// A problem instance that passed validation. Immutable; share freely.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    data: ScenarioData,
}

impl Deref for Scenario {
    type Target = ScenarioData;

    fn deref(&self) -> &ScenarioData {
        &self.data
    }
}

impl Scenario {
    pub fn into_data(self) -> ScenarioData {
        self.data
    }

    pub fn provider(&self, id: ProviderId) -> Option<&Provider> {
        self.providers.iter().find(|p| p.id == id)
    }

    pub fn station(&self, id: StationId) -> Option<&Station> {
        self.stations.iter().find(|s| s.id == id)
    }

    pub fn entrant(&self) -> &Provider {
        self.providers
            .iter()
            .find(|p| p.kind == ProviderKind::Entrant)
            .expect("validated scenario has an entrant")
    }

    /// Stations that are open before the entrant places anything, ascending id.
    pub fn open_stations(&self) -> Vec<StationId> {
        let mut ids: Vec<_> = self
            .stations
            .iter()
            .filter(|s| s.status == StationStatus::Open)
            .map(|s| s.id)
            .collect();
        ids.sort();
        ids
    }

    /// Entrant candidate sites, ascending id.
    pub fn candidates(&self) -> Vec<StationId> {
        let mut ids: Vec<_> = self
            .stations
            .iter()
            .filter(|s| s.status == StationStatus::Candidate)
            .map(|s| s.id)
            .collect();
        ids.sort();
        ids
    }

    pub fn total_demand(&self, class: TravelClass) -> f64 {
        self.demand
            .iter()
            .filter(|d| d.class == class)
            .map(|d| d.volume)
            .sum()
    }
}

/// Per-station charging prices, currency per kWh.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PriceProfile(BTreeMap<StationId, f64>);

impl PriceProfile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn uniform(stations: &[StationId], price: f64) -> Self {
        PriceProfile(stations.iter().map(|&s| (s, price)).collect())
    }

    pub fn get(&self, station: StationId) -> Option<f64> {
        self.0.get(&station).copied()
    }

    pub fn set(&mut self, station: StationId, price: f64) {
        self.0.insert(station, price);
    }

    pub fn with(&self, station: StationId, price: f64) -> Self {
        let mut next = self.clone();
        next.set(station, price);
        next
    }

    pub fn iter(&self) -> impl Iterator<Item = (StationId, f64)> + '_ {
        self.0.iter().map(|(&s, &p)| (s, p))
    }

    pub fn stations(&self) -> impl Iterator<Item = StationId> + '_ {
        self.0.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<(StationId, f64)> for PriceProfile {
    fn from_iter<T: IntoIterator<Item = (StationId, f64)>>(iter: T) -> Self {
        PriceProfile(iter.into_iter().collect())
    }
}
