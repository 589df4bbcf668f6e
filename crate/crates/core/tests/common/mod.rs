#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeMap;
use std::path::PathBuf;

use trilevel::io::parse_scenario;
use trilevel::assignment::FlowState;
use trilevel::model::{NodeId, Scenario, TravelClass};

pub fn path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture(name: &str) -> Scenario {
    parse_scenario(path(name)).unwrap_or_else(|e| panic!("{name}: {:?}", e.messages()))
}

/// Fixtures with at least one station, opened as far as possible.
pub const PRICED: &[&str] = &[
    "monopoly.scn",
    "duopoly_symmetric.scn",
    "placement4.scn",
    "divergence.scn",
    "micro/ev_corridor.scn",
    "micro/ev_diamond.scn",
    "grid5.scn",
];

/// Net outflow per node for one class's link flows.
fn imbalance(s: &Scenario, flows: &[f64]) -> BTreeMap<NodeId, f64> {
    let mut net: BTreeMap<NodeId, f64> = s.nodes.iter().map(|&n| (n, 0.0)).collect();
    for (link, &x) in s.links.iter().zip(flows) {
        *net.get_mut(&link.tail).unwrap() += x;
        *net.get_mut(&link.head).unwrap() -= x;
    }
    net
}

/// Worst node or demand imbalance of `flow`, relative to total demand.
/// Negative flows and opt-out beyond demand count as infinite.
pub fn conservation_error(s: &Scenario, flow: &FlowState) -> f64 {
    let scale = (s.total_demand(TravelClass::Ev) + s.total_demand(TravelClass::NonEv)).max(1.0);
    let mut nonev = imbalance(s, &flow.nonev_flow);
    let mut ev = imbalance(s, &flow.ev_flow);
    let mut opted = flow.opt_out.iter();
    for d in &s.demand {
        let (table, volume) = match d.class {
            TravelClass::NonEv => (&mut nonev, d.volume),
            TravelClass::Ev => {
                let o = opted.next().unwrap();
                assert_eq!((o.origin, o.destination), (d.origin, d.destination));
                if o.volume < 0.0 || o.volume > o.demand * (1.0 + 1e-12) {
                    return f64::INFINITY;
                }
                (&mut ev, d.volume - o.volume)
            }
        };
        *table.get_mut(&d.origin).unwrap() -= volume;
        *table.get_mut(&d.destination).unwrap() += volume;
    }
    if flow.nonev_flow.iter().chain(&flow.ev_flow).any(|&x| x < 0.0) {
        return f64::INFINITY;
    }
    let served: f64 = flow.station_throughput.values().sum();
    let ev_total = s.total_demand(TravelClass::Ev);
    let nodes = nonev.values().chain(ev.values()).fold(0.0f64, |m, v| m.max(v.abs()));
    nodes.max((served + flow.total_opt_out() - ev_total).abs()) / scale
}

pub fn assert_conserved(s: &Scenario, flow: &FlowState) {
    let e = conservation_error(s, flow);
    assert!(e <= 1e-9, "relative imbalance {e}");
}
