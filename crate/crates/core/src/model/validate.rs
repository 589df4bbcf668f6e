use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;

use super::{
    LatencyFn, NodeId, ProviderKind, Scenario, ScenarioData, StationStatus,
};

/// One violated rule, naming the offending entity.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationError {
    pub entity: String,
    pub rule: String,
}

impl ValidationError {
    fn new(entity: impl Into<String>, rule: impl Into<String>) -> Self {
        ValidationError {
            entity: entity.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.entity.is_empty() {
            write!(f, "{}", self.rule)
        } else {
            write!(f, "{}: {}", self.entity, self.rule)
        }
    }
}

impl std::error::Error for ValidationError {}

fn finite(v: f64) -> bool {
    v.is_finite()
}

/// Checks every structural and numeric rule and returns either the
/// validated scenario or the complete list of violations.
pub fn validate_scenario(data: ScenarioData) -> Result<Scenario, Vec<ValidationError>> {
    let mut errors = Vec::new();
    let mut err = |entity: String, rule: String| errors.push(ValidationError::new(entity, rule));

    if data.version != 1 {
        err("version".into(), format!("unsupported version {}", data.version));
    }

    let mut nodes = HashSet::new();
    for n in &data.nodes {
        if !nodes.insert(*n) {
            err(format!("node {n}"), "duplicate node id".into());
        }
    }
    let known = |n: NodeId| nodes.contains(&n);

    let mut link_ids = HashSet::new();
    for l in &data.links {
        let entity = format!("link {}", l.id);
        if !link_ids.insert(l.id) {
            err(entity.clone(), "duplicate link id".into());
        }
        for end in [l.tail, l.head] {
            if !known(end) {
                err(entity.clone(), format!("unknown node {end}"));
            }
        }
        if l.tail == l.head {
            err(entity.clone(), "physical link cannot be a self-loop".into());
        }
        match l.latency {
            LatencyFn::Bpr {
                free_flow,
                capacity,
                alpha,
                beta,
            } => {
                if !(finite(free_flow) && free_flow >= 0.0) {
                    err(entity.clone(), "bpr free-flow time must be >= 0".into());
                }
                if !(finite(capacity) && capacity > 0.0) {
                    err(entity.clone(), "bpr capacity must be > 0".into());
                }
                if !(finite(alpha) && alpha >= 0.0) {
                    err(entity.clone(), "bpr alpha must be >= 0".into());
                }
                if !(finite(beta) && beta >= 1.0) {
                    err(entity.clone(), "bpr beta must be >= 1".into());
                }
            }
            LatencyFn::Affine { constant, slope } => {
                if !(finite(constant) && constant >= 0.0) {
                    err(entity.clone(), "affine constant must be >= 0".into());
                }
                if !(finite(slope) && slope >= 0.0) {
                    err(entity.clone(), "affine slope must be >= 0".into());
                }
            }
        }
    }

    let mut providers = BTreeMap::new();
    let mut entrants = 0;
    for p in &data.providers {
        let entity = format!("provider {}", p.id);
        if providers.insert(p.id, p.kind).is_some() {
            err(entity.clone(), "duplicate provider id".into());
        }
        if p.kind == ProviderKind::Entrant {
            entrants += 1;
        }
        if !(finite(p.marginal_cost) && p.marginal_cost >= 0.0) {
            err(entity.clone(), "marginal cost must be >= 0".into());
        }
        if !(finite(p.site_cost) && p.site_cost >= 0.0) {
            err(entity, "site cost must be >= 0".into());
        }
    }
    match entrants {
        0 => err("providers".into(), "missing entrant".into()),
        1 => {}
        _ => err("providers".into(), "multiple entrants".into()),
    }

    let mut station_ids = HashSet::new();
    for s in &data.stations {
        let entity = format!("station {}", s.id);
        if !station_ids.insert(s.id) {
            err(entity.clone(), "duplicate station id".into());
        }
        if !known(s.node) {
            err(entity.clone(), format!("unknown node {}", s.node));
        }
        match providers.get(&s.provider) {
            None => err(entity.clone(), format!("unknown provider {}", s.provider)),
            Some(ProviderKind::Incumbent) if s.status == StationStatus::Candidate => err(
                entity.clone(),
                "candidate sites must belong to the entrant".into(),
            ),
            Some(_) => {}
        }
        let d = s.delay;
        if !(finite(d.base) && d.base >= 0.0) {
            err(entity.clone(), "base delay must be >= 0".into());
        }
        if !(finite(d.capacity) && d.capacity > 0.0) {
            err(entity.clone(), "service capacity must be > 0".into());
        }
        if !(finite(d.exponent) && d.exponent >= 1.0) {
            err(entity, "delay exponent must be >= 1".into());
        }
    }

    let mut adjacency: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for l in &data.links {
        adjacency.entry(l.tail).or_default().push(l.head);
    }
    let reachable_from = |origin: NodeId| -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::from([origin]);
        let mut queue = VecDeque::from([origin]);
        while let Some(v) = queue.pop_front() {
            for &w in adjacency.get(&v).map(Vec::as_slice).unwrap_or(&[]) {
                if seen.insert(w) {
                    queue.push_back(w);
                }
            }
        }
        seen
    };
    let mut reach_cache: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
    for (i, d) in data.demand.iter().enumerate() {
        let entity = format!("demand {} ({} {}->{})", i + 1, d.class, d.origin, d.destination);
        let mut ends_known = true;
        for end in [d.origin, d.destination] {
            if !known(end) {
                err(entity.clone(), format!("unknown node {end}"));
                ends_known = false;
            }
        }
        if d.origin == d.destination {
            err(entity.clone(), "origin equals destination".into());
        }
        if !(finite(d.volume) && d.volume >= 0.0) {
            err(entity.clone(), "volume must be >= 0".into());
        }
        if ends_known && d.origin != d.destination {
            let reach = reach_cache
                .entry(d.origin)
                .or_insert_with(|| reachable_from(d.origin));
            if !reach.contains(&d.destination) {
                err(
                    entity,
                    format!("no physical path from {} to {}", d.origin, d.destination),
                );
            }
        }
    }

    let p = &data.params;
    if !(finite(p.vot) && p.vot > 0.0) {
        err("params".into(), "vot must be > 0".into());
    }
    if !(finite(p.energy) && p.energy > 0.0) {
        err("params".into(), "energy must be > 0".into());
    }
    if !(finite(p.outside_cost) && p.outside_cost > 0.0) {
        err("params".into(), "outside_cost must be > 0".into());
    }
    if !(finite(p.price_min) && p.price_min >= 0.0) {
        err("pricing".into(), "p_min must be >= 0".into());
    }
    if !finite(p.price_max) || p.price_min > p.price_max {
        err("pricing".into(), "price bounds must satisfy p_min <= p_max".into());
    }
    if p.grid < 2 {
        err("pricing".into(), "grid must have at least 2 points".into());
    }

    if errors.is_empty() {
        Ok(Scenario { data })
    } else {
        Err(errors)
    }
}
