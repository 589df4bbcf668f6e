//! The augmented network every Level 1 computation runs on.
//!
//! Physical nodes are duplicated into two layers: layer 0 is "not yet
//! charged" and layer 1 is "charged". Physical links exist in both layers,
//! and every open station contributes one charging arc from its node in
//! layer 0 to the same node in layer 1. EV trips run from `(origin, 0)` to
//! `(destination, 1)` and therefore cross exactly one charging arc; non-EV
//! trips run from `(origin, 0)` to `(destination, 0)` and can never reach
//! layer 1. Each EV trip also owns a constant-cost bypass (the outside
//! option) that is compared against the best charging route directly.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use crate::model::{
    LatencyFn, LinkId, NodeId, PriceProfile, Scenario, ServiceDelay, StationId,
    TravelClass,
};

use super::AssignmentError;

#[derive(Clone, Debug)]
pub(crate) struct PhysicalLink {
    pub id: LinkId,
    pub tail: usize,
    pub head: usize,
    pub latency: LatencyFn,
}

#[derive(Clone, Debug)]
pub(crate) struct ChargingLink {
    pub station: StationId,
    pub node: usize,
    pub delay: ServiceDelay,
    /// `price * energy / vot`, the payment expressed in minutes.
    pub price_minutes: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct Trip {
    pub demand_index: usize,
    pub origin: usize,
    pub destination: usize,
    pub volume: f64,
    /// Outside option in minutes; only meaningful for EV trips.
    pub bypass_minutes: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Resource {
    Link { index: usize, layer: usize },
    Charger(usize),
}

#[derive(Clone, Copy, Debug)]
struct Arc {
    to: usize,
    resource: Resource,
    /// Tie-break key: head node id, head layer, arc kind, arc id.
    key: (u32, u8, u8, u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum ClassFilter {
    Both,
    NonEvOnly,
    EvOnly,
}

/// Physical network plus one charging arc per open station and one
/// bypass per EV demand entry.
#[derive(Clone, Debug)]
pub struct AugmentedNetwork {
    pub(crate) node_ids: Vec<NodeId>,
    node_index: HashMap<NodeId, usize>,
    pub(crate) links: Vec<PhysicalLink>,
    pub(crate) chargers: Vec<ChargingLink>,
    pub(crate) ev_trips: Vec<Trip>,
    pub(crate) nonev_trips: Vec<Trip>,
    /// Fixed flow added to every physical link before evaluating latency.
    pub(crate) background: Vec<f64>,
    /// True when non-EV traffic is frozen into `background`.
    pub(crate) frozen_background: bool,
    pub(crate) vot: f64,
    outside_minutes: f64,
    arcs: Vec<Arc>,
    out_arcs: Vec<Vec<usize>>,
    in_arcs: Vec<Vec<(usize, usize)>>,
}

/// Link and charger costs in minutes at some load.
#[derive(Clone, Debug)]
pub(crate) struct Costs {
    pub link: Vec<f64>,
    pub charger: Vec<f64>,
}

/// Per-class flows on every arc of the augmented network.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Flows {
    pub nonev: Vec<f64>,
    pub ev: [Vec<f64>; 2],
    pub charger: Vec<f64>,
    pub bypass: Vec<f64>,
}

/// Aggregate load per priced resource, which is all the cost functions see.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Loads {
    /// Variable (non-background) flow per physical link.
    pub link: Vec<f64>,
    pub charger: Vec<f64>,
    pub bypass: Vec<f64>,
}

impl Flows {
    /// `weight * a + (1 - weight) * b`.
    pub fn blend(a: &Flows, weight: f64, b: &Flows) -> Flows {
        let mix = |x: &[f64], y: &[f64]| -> Vec<f64> {
            x.iter()
                .zip(y)
                .map(|(p, q)| weight * p + (1.0 - weight) * q)
                .collect()
        };
        Flows {
            nonev: mix(&a.nonev, &b.nonev),
            ev: [mix(&a.ev[0], &b.ev[0]), mix(&a.ev[1], &b.ev[1])],
            charger: mix(&a.charger, &b.charger),
            bypass: mix(&a.bypass, &b.bypass),
        }
    }

    pub fn zero(net: &AugmentedNetwork) -> Self {
        let n = net.links.len();
        Flows {
            nonev: vec![0.0; n],
            ev: [vec![0.0; n], vec![0.0; n]],
            charger: vec![0.0; net.chargers.len()],
            bypass: vec![0.0; net.ev_trips.len()],
        }
    }

    pub fn loads(&self) -> Loads {
        Loads {
            link: (0..self.nonev.len())
                .map(|l| self.nonev[l] + self.ev[0][l] + self.ev[1][l])
                .collect(),
            charger: self.charger.clone(),
            bypass: self.bypass.clone(),
        }
    }

    /// `self += step * (target - self)`, component-wise.
    pub fn move_toward(&mut self, target: &Flows, step: f64) {
        fn lerp(x: &mut [f64], y: &[f64], step: f64) {
            for (a, b) in x.iter_mut().zip(y) {
                *a += step * (b - *a);
                if *a < 0.0 {
                    *a = 0.0;
                }
            }
        }
        lerp(&mut self.nonev, &target.nonev, step);
        lerp(&mut self.ev[0], &target.ev[0], step);
        lerp(&mut self.ev[1], &target.ev[1], step);
        lerp(&mut self.charger, &target.charger, step);
        lerp(&mut self.bypass, &target.bypass, step);
    }

    fn add(&mut self, resource: Resource, class: TravelClass, volume: f64) {
        match (resource, class) {
            (Resource::Link { index, .. }, TravelClass::NonEv) => self.nonev[index] += volume,
            (Resource::Link { index, layer }, TravelClass::Ev) => self.ev[layer][index] += volume,
            (Resource::Charger(s), _) => self.charger[s] += volume,
        }
    }
}

impl Loads {
    pub fn minus(&self, other: &Loads) -> Loads {
        let sub = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a - b).collect();
        Loads {
            link: sub(&self.link, &other.link),
            charger: sub(&self.charger, &other.charger),
            bypass: sub(&self.bypass, &other.bypass),
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry(f64, usize);

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn tie_tolerance(value: f64) -> f64 {
    1e-10 * (1.0 + value.abs())
}

/// Result of an all-or-nothing assignment at frozen costs.
pub(crate) struct AllOrNothing {
    pub flows: Flows,
    /// Sum over trips of volume times cheapest cost, in veh·minutes.
    pub shortest_total: f64,
}

/// One step of a generalized path through the augmented network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathStep {
    Link(LinkId),
    Charge(StationId),
    OptOut,
}

impl AugmentedNetwork {
    pub(crate) fn new(
        scenario: &Scenario,
        open: &[StationId],
        prices: &PriceProfile,
        classes: ClassFilter,
        background: Option<Vec<f64>>,
    ) -> Result<Self, AssignmentError> {
        let node_ids = scenario.nodes.clone();
        let node_index: HashMap<NodeId, usize> =
            node_ids.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let n = node_ids.len();
        let idx = |id: NodeId| node_index[&id];

        let links: Vec<PhysicalLink> = scenario
            .links
            .iter()
            .map(|l| PhysicalLink {
                id: l.id,
                tail: idx(l.tail),
                head: idx(l.head),
                latency: l.latency,
            })
            .collect();

        let params = &scenario.params;
        let mut open: Vec<StationId> = open.to_vec();
        open.sort();
        open.dedup();
        let mut chargers = Vec::with_capacity(open.len());
        if classes != ClassFilter::NonEvOnly {
            for id in open {
                let station = scenario
                    .station(id)
                    .ok_or(AssignmentError::UnknownStation(id))?;
                let price = prices.get(id).ok_or(AssignmentError::MissingPrice(id))?;
                if !(price.is_finite() && price >= 0.0) {
                    return Err(AssignmentError::InvalidPrice { station: id, price });
                }
                chargers.push(ChargingLink {
                    station: id,
                    node: idx(station.node),
                    delay: station.delay,
                    price_minutes: price * params.energy / params.vot,
                });
            }
        }

        let mut ev_trips = Vec::new();
        let mut nonev_trips = Vec::new();
        for (i, d) in scenario.demand.iter().enumerate() {
            let trip = Trip {
                demand_index: i,
                origin: idx(d.origin),
                destination: idx(d.destination),
                volume: d.volume,
                bypass_minutes: params.outside_cost / params.vot,
            };
            match (d.class, classes) {
                (TravelClass::Ev, ClassFilter::Both | ClassFilter::EvOnly) => ev_trips.push(trip),
                (TravelClass::NonEv, ClassFilter::Both | ClassFilter::NonEvOnly) => {
                    nonev_trips.push(trip)
                }
                _ => {}
            }
        }

        let frozen_background = background.is_some();
        let background = background.unwrap_or_else(|| vec![0.0; links.len()]);
        assert_eq!(background.len(), links.len(), "one preload per link");

        let mut arcs = Vec::with_capacity(2 * links.len() + chargers.len());
        let mut out_arcs = vec![Vec::new(); 2 * n];
        let mut in_arcs = vec![Vec::new(); 2 * n];
        for layer in 0..2 {
            for (index, l) in links.iter().enumerate() {
                let from = l.tail + layer * n;
                let to = l.head + layer * n;
                let a = arcs.len();
                arcs.push(Arc {
                    to,
                    resource: Resource::Link { index, layer },
                    key: (node_ids[l.head].0, layer as u8, 0, l.id.0),
                });
                out_arcs[from].push(a);
                in_arcs[to].push((from, a));
            }
        }
        for (s, c) in chargers.iter().enumerate() {
            let from = c.node;
            let to = c.node + n;
            let a = arcs.len();
            arcs.push(Arc {
                to,
                resource: Resource::Charger(s),
                key: (node_ids[c.node].0, 1, 1, c.station.0),
            });
            out_arcs[from].push(a);
            in_arcs[to].push((from, a));
        }

        Ok(AugmentedNetwork {
            node_ids,
            node_index,
            links,
            chargers,
            ev_trips,
            nonev_trips,
            background,
            frozen_background,
            vot: params.vot,
            outside_minutes: params.outside_cost / params.vot,
            arcs,
            out_arcs,
            in_arcs,
        })
    }

    pub fn charging_link_count(&self) -> usize {
        self.chargers.len()
    }

    pub fn bypass_link_count(&self) -> usize {
        self.ev_trips.len()
    }

    pub fn physical_link_ids(&self) -> impl Iterator<Item = LinkId> + '_ {
        self.links.iter().map(|l| l.id)
    }

    /// Constant part of a charging arc's cost (the payment), in minutes.
    pub fn charging_price_minutes(&self, station: StationId) -> Option<f64> {
        self.chargers
            .iter()
            .find(|c| c.station == station)
            .map(|c| c.price_minutes)
    }

    /// Latency of a physical link carrying `flow` on top of its background.
    pub fn link_time(&self, link: LinkId, flow: f64) -> Option<f64> {
        let l = self.links.iter().position(|x| x.id == link)?;
        Some(self.links[l].latency.eval(self.background[l] + flow))
    }

    pub(crate) fn node(&self, id: NodeId) -> Option<usize> {
        self.node_index.get(&id).copied()
    }

    pub(crate) fn costs(&self, loads: &Loads) -> Costs {
        Costs {
            link: self
                .links
                .iter()
                .zip(&self.background)
                .zip(&loads.link)
                .map(|((l, bg), x)| l.latency.eval(bg + x))
                .collect(),
            charger: self
                .chargers
                .iter()
                .zip(&loads.charger)
                .map(|(c, x)| c.delay.eval(*x) + c.price_minutes)
                .collect(),
        }
    }

    /// Diagonal of the cost Jacobian (links, then chargers) at `loads`.
    pub(crate) fn cost_slopes(&self, loads: &Loads) -> (Vec<f64>, Vec<f64>) {
        let link = self
            .links
            .iter()
            .zip(&self.background)
            .zip(&loads.link)
            .map(|((l, bg), x)| l.latency.slope(bg + x))
            .collect();
        let charger = self
            .chargers
            .iter()
            .zip(&loads.charger)
            .map(|(c, x)| c.delay.slope(*x))
            .collect();
        (link, charger)
    }

    /// Total cost experienced by the variable flow, in veh·minutes.
    pub(crate) fn total_cost(&self, loads: &Loads, costs: &Costs) -> f64 {
        let links: f64 = loads.link.iter().zip(&costs.link).map(|(x, c)| x * c).sum();
        let chargers: f64 = loads
            .charger
            .iter()
            .zip(&costs.charger)
            .map(|(x, c)| x * c)
            .sum();
        let bypass: f64 = loads
            .bypass
            .iter()
            .zip(&self.ev_trips)
            .map(|(x, t)| x * t.bypass_minutes)
            .sum();
        links + chargers + bypass
    }

    /// Beckmann potential of the variable flow, in veh·minutes.
    pub(crate) fn objective(&self, loads: &Loads) -> f64 {
        let links: f64 = self
            .links
            .iter()
            .zip(&self.background)
            .zip(&loads.link)
            .map(|((l, bg), x)| l.latency.primitive(bg + x) - l.latency.primitive(*bg))
            .sum();
        let chargers: f64 = self
            .chargers
            .iter()
            .zip(&loads.charger)
            .map(|(c, x)| c.delay.primitive(*x) + c.price_minutes * x)
            .sum();
        let bypass: f64 = loads
            .bypass
            .iter()
            .zip(&self.ev_trips)
            .map(|(x, t)| x * t.bypass_minutes)
            .sum();
        links + chargers + bypass
    }

    /// Directional derivative of the potential at `x + step * (y - x)`.
    pub(crate) fn directional_derivative(&self, x: &Loads, y: &Loads, step: f64) -> f64 {
        let mut total = 0.0;
        for (l, link) in self.links.iter().enumerate() {
            let d = y.link[l] - x.link[l];
            if d != 0.0 {
                let load = (x.link[l] + step * d).max(0.0);
                total += d * link.latency.eval(self.background[l] + load);
            }
        }
        for (s, c) in self.chargers.iter().enumerate() {
            let d = y.charger[s] - x.charger[s];
            if d != 0.0 {
                let load = (x.charger[s] + step * d).max(0.0);
                total += d * (c.delay.eval(load) + c.price_minutes);
            }
        }
        for (b, t) in self.ev_trips.iter().enumerate() {
            total += (y.bypass[b] - x.bypass[b]) * t.bypass_minutes;
        }
        total
    }

    fn arc_cost(&self, arc: &Arc, costs: &Costs) -> f64 {
        match arc.resource {
            Resource::Link { index, .. } => costs.link[index],
            Resource::Charger(s) => costs.charger[s],
        }
    }

    fn layered(&self, node: usize, layer: usize) -> usize {
        node + layer * self.node_ids.len()
    }

    /// Cheapest cost from every augmented node to `target`.
    fn distances_to(&self, target: usize, costs: &Costs) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.out_arcs.len()];
        let mut heap = BinaryHeap::new();
        dist[target] = 0.0;
        heap.push(HeapEntry(0.0, target));
        while let Some(HeapEntry(d, v)) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            for &(from, a) in &self.in_arcs[v] {
                let nd = d + self.arc_cost(&self.arcs[a], costs);
                if nd < dist[from] {
                    dist[from] = nd;
                    heap.push(HeapEntry(nd, from));
                }
            }
        }
        dist
    }

    /// Walks from `source` along cost-tight arcs, always taking the arc with
    /// the smallest (head node id, layer, kind, id). This yields the
    /// lexicographically smallest node sequence among cheapest paths.
    fn tight_path(&self, source: usize, target: usize, dist: &[f64], costs: &Costs) -> Option<Vec<usize>> {
        if !dist[source].is_finite() {
            return None;
        }
        let mut visited = vec![false; dist.len()];
        let mut path = Vec::new();
        let mut v = source;
        let limit = 2 * dist.len() + 1;
        while v != target {
            if path.len() > limit {
                return None;
            }
            visited[v] = true;
            let tol = tie_tolerance(dist[v]);
            let mut best: Option<((u32, u8, u8, u32), usize)> = None;
            let mut fallback: Option<(f64, (u32, u8, u8, u32), usize)> = None;
            for &a in &self.out_arcs[v] {
                let arc = &self.arcs[a];
                if !dist[arc.to].is_finite() {
                    continue;
                }
                let through = self.arc_cost(arc, costs) + dist[arc.to];
                if !visited[arc.to] && through <= dist[v] + tol && best.is_none_or(|(k, _)| arc.key < k) {
                    best = Some((arc.key, a));
                }
                let better = match fallback {
                    None => true,
                    Some((c, k, _)) => through < c || (through == c && arc.key < k),
                };
                if better {
                    fallback = Some((through, arc.key, a));
                }
            }
            let a = match (best, fallback) {
                (Some((_, a)), _) => a,
                // Only reachable on zero-cost cycles; accept a revisit.
                (None, Some((_, _, a))) => a,
                (None, None) => return None,
            };
            path.push(a);
            v = self.arcs[a].to;
        }
        Some(path)
    }

    /// All-or-nothing assignment of every trip at frozen `costs`.
    pub(crate) fn all_or_nothing(&self, costs: &Costs) -> Result<AllOrNothing, AssignmentError> {
        let mut flows = Flows::zero(self);
        let mut shortest_total = 0.0;
        let mut cache: BTreeMap<usize, Vec<f64>> = BTreeMap::new();

        for trip in &self.nonev_trips {
            if trip.volume == 0.0 {
                continue;
            }
            let target = self.layered(trip.destination, 0);
            let dist = cache
                .entry(target)
                .or_insert_with(|| self.distances_to(target, costs));
            let source = self.layered(trip.origin, 0);
            let path = self
                .tight_path(source, target, dist, costs)
                .ok_or_else(|| self.unreachable(TravelClass::NonEv, trip))?;
            for a in path {
                flows.add(self.arcs[a].resource, TravelClass::NonEv, trip.volume);
            }
            shortest_total += trip.volume * dist[source];
        }

        for (b, trip) in self.ev_trips.iter().enumerate() {
            if trip.volume == 0.0 {
                continue;
            }
            let target = self.layered(trip.destination, 1);
            let dist = cache
                .entry(target)
                .or_insert_with(|| self.distances_to(target, costs));
            let source = self.layered(trip.origin, 0);
            let charging = dist[source];
            if opts_out(charging, trip.bypass_minutes) {
                flows.bypass[b] += trip.volume;
                shortest_total += trip.volume * trip.bypass_minutes;
                continue;
            }
            let path = self
                .tight_path(source, target, dist, costs)
                .ok_or_else(|| self.unreachable(TravelClass::Ev, trip))?;
            for a in path {
                flows.add(self.arcs[a].resource, TravelClass::Ev, trip.volume);
            }
            shortest_total += trip.volume * charging;
        }

        Ok(AllOrNothing {
            flows,
            shortest_total,
        })
    }

    fn unreachable(&self, class: TravelClass, trip: &Trip) -> AssignmentError {
        AssignmentError::Unreachable {
            class,
            origin: self.node_ids[trip.origin],
            destination: self.node_ids[trip.destination],
        }
    }

    /// Cheapest path for one class between two physical nodes, in minutes.
    pub(crate) fn cheapest_path(
        &self,
        class: TravelClass,
        origin: usize,
        destination: usize,
        costs: &Costs,
    ) -> Option<(Vec<PathStep>, Vec<NodeId>, f64)> {
        let layer = match class {
            TravelClass::Ev => 1,
            TravelClass::NonEv => 0,
        };
        let target = self.layered(destination, layer);
        let source = self.layered(origin, 0);
        let dist = self.distances_to(target, costs);
        if class == TravelClass::Ev {
            let minutes = self.outside_minutes;
            if opts_out(dist[source], minutes) {
                let nodes = vec![self.node_ids[origin], self.node_ids[destination]];
                return Some((vec![PathStep::OptOut], nodes, minutes));
            }
        }
        let arcs = self.tight_path(source, target, &dist, costs)?;
        let n = self.node_ids.len();
        let mut nodes = vec![self.node_ids[origin]];
        let mut steps = Vec::with_capacity(arcs.len());
        for a in arcs {
            let arc = &self.arcs[a];
            match arc.resource {
                Resource::Link { index, .. } => {
                    steps.push(PathStep::Link(self.links[index].id));
                    nodes.push(self.node_ids[arc.to % n]);
                }
                Resource::Charger(s) => steps.push(PathStep::Charge(self.chargers[s].station)),
            }
        }
        Some((steps, nodes, dist[source]))
    }

}

/// Drivers opt out only when the outside option is strictly cheaper.
fn opts_out(charging: f64, bypass: f64) -> bool {
    !charging.is_finite() || bypass < charging - tie_tolerance(charging)
}
