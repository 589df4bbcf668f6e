//! Brute-force equilibrium over path flows.
//!
//! Enumerates simple paths, integrates latencies numerically and minimises
//! the Beckmann potential by grid search on each origin-destination simplex,
//! refining the grid around the incumbent best.

use std::collections::BTreeMap;

use trilevel::assignment::{solve_user_equilibrium, station_demand, SolveOptions};
use trilevel::model::{LatencyFn, NodeId, PriceProfile, Scenario, StationId, TravelClass};

pub const MICRO: &[(&str, f64)] = &[
    ("two_route.scn", 0.0),
    ("braess_bpr.scn", 0.0),
    ("shared_link.scn", 0.0),
    ("ev_corridor.scn", 1.0),
    ("ev_diamond.scn", 1.5),
];

fn latency(f: &LatencyFn, x: f64) -> f64 {
    match *f {
        LatencyFn::Bpr { free_flow, capacity, alpha, beta } => free_flow * (1.0 + alpha * (x / capacity).powf(beta)),
        LatencyFn::Affine { constant, slope } => constant + slope * x,
    }
}

/// Composite Simpson rule on [0, x].
fn integral(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let n = 64;
    let h = x / n as f64;
    let mut s = f(0.0) + f(x);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Link indices of every simple path from `from` to `to`.
fn simple_paths(s: &Scenario, from: NodeId, to: NodeId) -> Vec<Vec<usize>> {
    fn walk(s: &Scenario, at: NodeId, to: NodeId, seen: &mut Vec<NodeId>, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if at == to {
            out.push(path.clone());
            return;
        }
        for (i, l) in s.links.iter().enumerate() {
            if l.tail == at && !seen.contains(&l.head) {
                seen.push(l.head);
                path.push(i);
                walk(s, l.head, to, seen, path, out);
                path.pop();
                seen.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(s, from, to, &mut vec![from], &mut Vec::new(), &mut out);
    out
}

#[derive(Clone, Debug)]
struct Route {
    links: Vec<usize>,
    /// Station charged at, if any.
    station: Option<StationId>,
    /// The outside option.
    opt_out: bool,
}

struct Od {
    volume: f64,
    routes: Vec<Route>,
}

fn routes(s: &Scenario, open: &[StationId]) -> Vec<Od> {
    let mut ods = Vec::new();
    for d in &s.demand {
        let mut routes = Vec::new();
        match d.class {
            TravelClass::NonEv => {
                for links in simple_paths(s, d.origin, d.destination) {
                    routes.push(Route { links, station: None, opt_out: false });
                }
            }
            TravelClass::Ev => {
                for &id in open {
                    let node = s.station(id).unwrap().node;
                    for a in simple_paths(s, d.origin, node) {
                        for b in simple_paths(s, node, d.destination) {
                            let mut links = a.clone();
                            links.extend(b);
                            routes.push(Route { links, station: Some(id), opt_out: false });
                        }
                    }
                }
                routes.push(Route { links: vec![], station: None, opt_out: true });
            }
        }
        assert!(routes.len() <= 7, "micro networks have at most 6 paths per OD");
        ods.push(Od { volume: d.volume, routes });
    }
    ods
}

struct Loads {
    links: Vec<f64>,
    stations: BTreeMap<StationId, f64>,
    opt_out: f64,
}

fn loads(s: &Scenario, ods: &[Od], flows: &[Vec<f64>]) -> Loads {
    let mut l = Loads { links: vec![0.0; s.links.len()], stations: BTreeMap::new(), opt_out: 0.0 };
    for (od, f) in ods.iter().zip(flows) {
        for (r, &x) in od.routes.iter().zip(f) {
            for &i in &r.links {
                l.links[i] += x;
            }
            if let Some(st) = r.station {
                *l.stations.entry(st).or_default() += x;
            }
            if r.opt_out {
                l.opt_out += x;
            }
        }
    }
    l
}

fn potential(s: &Scenario, prices: &PriceProfile, l: &Loads) -> f64 {
    let p = &s.params;
    let mut v = 0.0;
    for (link, &x) in s.links.iter().zip(&l.links) {
        v += integral(|y| latency(&link.latency, y), x);
    }
    for (&id, &y) in &l.stations {
        let d = s.station(id).unwrap().delay;
        v += integral(|z| d.base * (1.0 + (z / d.capacity).powf(d.exponent)), y);
        v += y * prices.get(id).unwrap() * p.energy / p.vot;
    }
    v + l.opt_out * p.outside_cost / p.vot
}

/// Every way to split `total` over `n` routes in multiples of `step`,
/// around `centre` within `radius` steps.
fn splits(centre: &[f64], total: f64, step: f64, radius: i64) -> Vec<Vec<f64>> {
    let n = centre.len();
    let mut out = Vec::new();
    let mut offs = vec![-radius; n - 1];
    loop {
        let mut f: Vec<f64> = (0..n - 1).map(|i| centre[i] + offs[i] as f64 * step).collect();
        let rest = total - f.iter().sum::<f64>();
        if f.iter().all(|&x| x >= -1e-12) && rest >= -1e-12 {
            for x in &mut f {
                *x = x.max(0.0);
            }
            f.push(rest.max(0.0));
            out.push(f);
        }
        let mut i = 0;
        loop {
            if i == n - 1 {
                return out;
            }
            offs[i] += 1;
            if offs[i] <= radius {
                break;
            }
            offs[i] = -radius;
            i += 1;
        }
    }
}

fn cartesian(sets: &[Vec<Vec<f64>>]) -> Vec<Vec<Vec<f64>>> {
    let mut acc: Vec<Vec<Vec<f64>>> = vec![vec![]];
    for set in sets {
        let mut next = Vec::new();
        for a in &acc {
            for choice in set {
                let mut b = a.clone();
                b.push(choice.clone());
                next.push(b);
            }
        }
        acc = next;
    }
    acc
}

fn oracle(s: &Scenario, open: &[StationId], prices: &PriceProfile) -> Loads {
    let ods = routes(s, open);
    let divisions = 20.0;
    let mut best: Vec<Vec<f64>> = ods
        .iter()
        .map(|od| {
            let n = od.routes.len();
            vec![od.volume / n as f64; n]
        })
        .collect();
    // The first pass covers each simplex with the coarse grid.
    let mut steps: Vec<f64> = ods.iter().map(|od| od.volume / divisions).collect();
    let mut radius = divisions as i64;
    for _ in 0..9 {
        let sets: Vec<_> = ods
            .iter()
            .zip(&best)
            .zip(&steps)
            .map(|((od, c), &h)| {
                if od.routes.len() == 1 {
                    vec![vec![od.volume]]
                } else {
                    splits(c, od.volume, h, radius)
                }
            })
            .collect();
        let mut best_value = f64::INFINITY;
        for candidate in cartesian(&sets) {
            let v = potential(s, prices, &loads(s, &ods, &candidate));
            if v < best_value {
                best_value = v;
                best = candidate;
            }
        }
        for h in &mut steps {
            *h /= 5.0;
        }
        radius = 6;
    }
    loads(s, &ods, &best)
}

/// Largest gap between the solver and the oracle over link flows, station
/// demands and opt-out, for every open station at `price`.
pub fn max_error(name: &str, price: f64) -> Result<f64, String> {
    let s = super::fixture(&format!("micro/{name}"));
    let open = s.open_stations();
    let prices = PriceProfile::uniform(&open, price);
    let flow = solve_user_equilibrium(&s, &open, &prices, &SolveOptions::default()).map_err(|e| e.to_string())?;
    if !flow.converged {
        return Err(format!("{name} did not converge"));
    }
    let want = oracle(&s, &open, &prices);
    let mut worst: f64 = 0.0;
    for (i, &x) in want.links.iter().enumerate() {
        worst = worst.max((flow.total_flow(i) - x).abs());
    }
    for &id in &open {
        worst = worst.max((station_demand(&flow, id) - want.stations.get(&id).copied().unwrap_or(0.0)).abs());
    }
    Ok(worst.max((flow.total_opt_out() - want.opt_out).abs()))
}
