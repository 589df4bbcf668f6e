//! Line-oriented scenario files.
//!
//! ```text
//! version 1
//! [params]     vot <x> | energy <x> | outside_cost <x>
//! [nodes]      id
//! [links]      id tail head bpr t0 capacity alpha beta
//!              id tail head affine a b 0 0
//! [providers]  id incumbent|entrant marginal_cost site_cost
//! [stations]   id provider node d0 kappa gamma open|candidate
//! [demand]     ev|nonev origin destination volume
//! [pricing]    p_min <x> | p_max <x> | grid <n>
//! ```
//!
//! Sections appear exactly once, in this order. `#` starts a comment.

use std::fmt::{self, Write as _};
use std::path::Path;

use thiserror::Error;

use crate::model::{
    validate_scenario, DemandEntry, EconomicParams, LatencyFn, Link, LinkId, NodeId, Provider,
    ProviderId, ProviderKind, Scenario, ScenarioData, ServiceDelay, Station, StationId,
    StationStatus, TravelClass, ValidationError,
};

const SECTIONS: [&str; 7] = [
    "params",
    "nodes",
    "links",
    "providers",
    "stations",
    "demand",
    "pricing",
];

#[derive(Clone, Debug, PartialEq)]
pub struct ParseError {
    pub file: Option<String>,
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.file {
            Some(file) => write!(f, "{file}:{}: {}", self.line, self.message),
            None => write!(f, "line {}: {}", self.line, self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{}", join(.0))]
    Parse(Vec<ParseError>),
    #[error("{}", join(.0))]
    Invalid(Vec<ValidationError>),
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("\n")
}

impl ScenarioError {
    /// One message per problem found.
    pub fn messages(&self) -> Vec<String> {
        match self {
            ScenarioError::Io { .. } => vec![self.to_string()],
            ScenarioError::Parse(errors) => errors.iter().map(ToString::to_string).collect(),
            ScenarioError::Invalid(errors) => errors.iter().map(ToString::to_string).collect(),
        }
    }
}

/// Reads, parses and validates a scenario file.
pub fn parse_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let data = parse_scenario_text(&text).map_err(|mut errors| {
        for e in &mut errors {
            e.file = Some(path.display().to_string());
        }
        ScenarioError::Parse(errors)
    })?;
    validate_scenario(data).map_err(ScenarioError::Invalid)
}

/// Parses scenario text and validates the result.
pub fn parse_scenario_str(text: &str) -> Result<Scenario, ScenarioError> {
    let data = parse_scenario_text(text).map_err(ScenarioError::Parse)?;
    validate_scenario(data).map_err(ScenarioError::Invalid)
}

#[derive(Default)]
struct KeyValues {
    entries: Vec<(String, String, usize)>,
}

impl KeyValues {
    fn take(&self, key: &str) -> Option<(&str, usize)> {
        self.entries
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, line)| (v.as_str(), *line))
    }
}

struct Parser {
    errors: Vec<ParseError>,
}

impl Parser {
    fn fail(&mut self, line: usize, message: impl Into<String>) {
        self.errors.push(ParseError {
            file: None,
            line,
            message: message.into(),
        });
    }

    fn id(&mut self, line: usize, field: &str, token: &str) -> Option<u32> {
        match token.parse::<u32>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.fail(line, format!("invalid integer '{token}' for field {field}"));
                None
            }
        }
    }

    fn number(&mut self, line: usize, field: &str, token: &str) -> Option<f64> {
        match token.parse::<f64>() {
            Ok(v) if v.is_finite() => Some(v),
            _ => {
                self.fail(line, format!("invalid number '{token}' for field {field}"));
                None
            }
        }
    }

    fn arity(&mut self, line: usize, section: &str, fields: &[&str], expected: usize, layout: &str) -> bool {
        if fields.len() != expected {
            self.fail(
                line,
                format!(
                    "[{section}] line has {} fields, expected {expected} ({layout})",
                    fields.len()
                ),
            );
            return false;
        }
        true
    }
}

/// Parses without validating. All line-level errors are collected.
pub fn parse_scenario_text(text: &str) -> Result<ScenarioData, Vec<ParseError>> {
    let mut p = Parser { errors: Vec::new() };
    let mut version = None;
    let mut section: Option<usize> = None;
    let mut last_line = 0;

    let mut nodes = Vec::new();
    let mut links = Vec::new();
    let mut providers = Vec::new();
    let mut stations = Vec::new();
    let mut demand = Vec::new();
    let mut params = KeyValues::default();
    let mut pricing = KeyValues::default();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();

        if version.is_none() {
            if fields[0] != "version" || fields.len() != 2 {
                p.fail(line, "expected 'version <n>' header");
                return Err(p.errors);
            }
            match fields[1].parse::<u32>() {
                Ok(1) => version = Some(1),
                Ok(_) | Err(_) => {
                    p.fail(line, format!("unsupported version {}", fields[1]));
                    return Err(p.errors);
                }
            }
            continue;
        }

        if content.starts_with('[') {
            let Some(name) = content.strip_prefix('[').and_then(|c| c.strip_suffix(']')) else {
                p.fail(line, format!("malformed section header '{content}'"));
                continue;
            };
            let Some(pos) = SECTIONS.iter().position(|s| *s == name) else {
                p.fail(line, format!("unknown section [{name}]"));
                continue;
            };
            let expected = section.map_or(0, |s| s + 1);
            if pos != expected {
                let wanted = SECTIONS.get(expected).copied().unwrap_or("end of file");
                p.fail(line, format!("section [{name}] out of order, expected [{wanted}]"));
                if pos < expected {
                    continue;
                }
            }
            section = Some(pos);
            continue;
        }

        let Some(current) = section else {
            p.fail(line, "data before the first section header");
            continue;
        };
        match SECTIONS[current] {
            "params" | "pricing" => {
                let table = if SECTIONS[current] == "params" {
                    &mut params
                } else {
                    &mut pricing
                };
                if fields.len() != 2 {
                    p.fail(line, format!("[{}] expects 'key value'", SECTIONS[current]));
                    continue;
                }
                let allowed: &[&str] = if SECTIONS[current] == "params" {
                    &["vot", "energy", "outside_cost"]
                } else {
                    &["p_min", "p_max", "grid"]
                };
                if !allowed.contains(&fields[0]) {
                    p.fail(line, format!("unknown key '{}' in [{}]", fields[0], SECTIONS[current]));
                } else if table.take(fields[0]).is_some() {
                    p.fail(line, format!("duplicate key '{}'", fields[0]));
                } else {
                    table
                        .entries
                        .push((fields[0].to_string(), fields[1].to_string(), line));
                }
            }
            "nodes" => {
                if p.arity(line, "nodes", &fields, 1, "id") {
                    if let Some(id) = p.id(line, "id", fields[0]) {
                        nodes.push(NodeId(id));
                    }
                }
            }
            "links" => {
                if !p.arity(line, "links", &fields, 8, "id tail head kind p1 p2 p3 p4") {
                    continue;
                }
                let id = p.id(line, "id", fields[0]);
                let tail = p.id(line, "tail", fields[1]);
                let head = p.id(line, "head", fields[2]);
                let mut nums = [0.0; 4];
                let mut ok = true;
                for (k, name) in ["p1", "p2", "p3", "p4"].iter().enumerate() {
                    match p.number(line, name, fields[4 + k]) {
                        Some(v) => nums[k] = v,
                        None => ok = false,
                    }
                }
                let latency = match fields[3] {
                    "bpr" => Some(LatencyFn::bpr(nums[0], nums[1], nums[2], nums[3])),
                    "affine" => {
                        if ok && (nums[2] != 0.0 || nums[3] != 0.0) {
                            p.fail(line, "affine link expects 0 in fields p3 and p4");
                            ok = false;
                        }
                        Some(LatencyFn::affine(nums[0], nums[1]))
                    }
                    other => {
                        p.fail(line, format!("unknown link kind '{other}', expected bpr or affine"));
                        None
                    }
                };
                if let (Some(id), Some(tail), Some(head), Some(latency), true) =
                    (id, tail, head, latency, ok)
                {
                    links.push(Link {
                        id: LinkId(id),
                        tail: NodeId(tail),
                        head: NodeId(head),
                        latency,
                    });
                }
            }
            "providers" => {
                if !p.arity(line, "providers", &fields, 4, "id kind marginal_cost site_cost") {
                    continue;
                }
                let id = p.id(line, "id", fields[0]);
                let kind = match fields[1] {
                    "incumbent" => Some(ProviderKind::Incumbent),
                    "entrant" => Some(ProviderKind::Entrant),
                    other => {
                        p.fail(line, format!("unknown provider kind '{other}'"));
                        None
                    }
                };
                let marginal = p.number(line, "marginal_cost", fields[2]);
                let site = p.number(line, "site_cost", fields[3]);
                if let (Some(id), Some(kind), Some(marginal_cost), Some(site_cost)) =
                    (id, kind, marginal, site)
                {
                    providers.push(Provider {
                        id: ProviderId(id),
                        kind,
                        marginal_cost,
                        site_cost,
                    });
                }
            }
            "stations" => {
                if !p.arity(
                    line,
                    "stations",
                    &fields,
                    7,
                    "id provider node d0 kappa gamma status",
                ) {
                    continue;
                }
                let id = p.id(line, "id", fields[0]);
                let provider = p.id(line, "provider", fields[1]);
                let node = p.id(line, "node", fields[2]);
                let base = p.number(line, "d0", fields[3]);
                let capacity = p.number(line, "kappa", fields[4]);
                let exponent = p.number(line, "gamma", fields[5]);
                let status = match fields[6] {
                    "open" => Some(StationStatus::Open),
                    "candidate" => Some(StationStatus::Candidate),
                    other => {
                        p.fail(line, format!("unknown station status '{other}'"));
                        None
                    }
                };
                if let (
                    Some(id),
                    Some(provider),
                    Some(node),
                    Some(base),
                    Some(capacity),
                    Some(exponent),
                    Some(status),
                ) = (id, provider, node, base, capacity, exponent, status)
                {
                    stations.push(Station {
                        id: StationId(id),
                        provider: ProviderId(provider),
                        node: NodeId(node),
                        delay: ServiceDelay {
                            base,
                            capacity,
                            exponent,
                        },
                        status,
                    });
                }
            }
            "demand" => {
                if !p.arity(line, "demand", &fields, 4, "class origin destination volume") {
                    continue;
                }
                let class = match fields[0] {
                    "ev" => Some(TravelClass::Ev),
                    "nonev" => Some(TravelClass::NonEv),
                    other => {
                        p.fail(line, format!("unknown demand class '{other}'"));
                        None
                    }
                };
                let origin = p.id(line, "origin", fields[1]);
                let destination = p.id(line, "destination", fields[2]);
                let volume = p.number(line, "volume", fields[3]);
                if let (Some(class), Some(origin), Some(destination), Some(volume)) =
                    (class, origin, destination, volume)
                {
                    demand.push(DemandEntry {
                        class,
                        origin: NodeId(origin),
                        destination: NodeId(destination),
                        volume,
                    });
                }
            }
            _ => unreachable!(),
        }
    }

    if version.is_none() {
        p.fail(last_line.max(1), "missing 'version <n>' header");
        return Err(p.errors);
    }
    let reached = section.map_or(0, |s| s + 1);
    for name in &SECTIONS[reached..] {
        p.fail(last_line, format!("missing section [{name}]"));
    }

    let mut number_key = |table: &KeyValues, section: &str, key: &str| -> Option<f64> {
        match table.take(key) {
            Some((v, line)) => p.number(line, key, v),
            None => {
                p.fail(last_line, format!("missing key '{key}' in [{section}]"));
                None
            }
        }
    };
    let vot = number_key(&params, "params", "vot");
    let energy = number_key(&params, "params", "energy");
    let outside_cost = number_key(&params, "params", "outside_cost");
    let price_min = number_key(&pricing, "pricing", "p_min");
    let price_max = number_key(&pricing, "pricing", "p_max");
    let grid = match pricing.take("grid") {
        Some((v, line)) => match v.parse::<usize>() {
            Ok(g) => Some(g),
            Err(_) => {
                p.fail(line, format!("invalid integer '{v}' for field grid"));
                None
            }
        },
        None => {
            p.fail(last_line, "missing key 'grid' in [pricing]");
            None
        }
    };

    if !p.errors.is_empty() {
        return Err(p.errors);
    }
    Ok(ScenarioData {
        version: version.unwrap_or(1),
        nodes,
        links,
        providers,
        stations,
        demand,
        params: EconomicParams {
            vot: vot.unwrap_or_default(),
            energy: energy.unwrap_or_default(),
            outside_cost: outside_cost.unwrap_or_default(),
            price_min: price_min.unwrap_or_default(),
            price_max: price_max.unwrap_or_default(),
            grid: grid.unwrap_or_default(),
        },
    })
}

/// Renders scenario data in the file format; parsing the output yields
/// the same data.
pub fn write_scenario(data: &ScenarioData) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "version {}", data.version);
    let p = &data.params;
    let _ = writeln!(out, "\n[params]");
    let _ = writeln!(out, "vot {}", p.vot);
    let _ = writeln!(out, "energy {}", p.energy);
    let _ = writeln!(out, "outside_cost {}", p.outside_cost);
    let _ = writeln!(out, "\n[nodes]");
    for n in &data.nodes {
        let _ = writeln!(out, "{n}");
    }
    let _ = writeln!(out, "\n[links]");
    for l in &data.links {
        let (kind, a, b, c, d) = match l.latency {
            LatencyFn::Bpr {
                free_flow,
                capacity,
                alpha,
                beta,
            } => ("bpr", free_flow, capacity, alpha, beta),
            LatencyFn::Affine { constant, slope } => ("affine", constant, slope, 0.0, 0.0),
        };
        let _ = writeln!(out, "{} {} {} {kind} {a} {b} {c} {d}", l.id, l.tail, l.head);
    }
    let _ = writeln!(out, "\n[providers]");
    for pr in &data.providers {
        let kind = match pr.kind {
            ProviderKind::Incumbent => "incumbent",
            ProviderKind::Entrant => "entrant",
        };
        let _ = writeln!(out, "{} {kind} {} {}", pr.id, pr.marginal_cost, pr.site_cost);
    }
    let _ = writeln!(out, "\n[stations]");
    for s in &data.stations {
        let status = match s.status {
            StationStatus::Open => "open",
            StationStatus::Candidate => "candidate",
        };
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {status}",
            s.id, s.provider, s.node, s.delay.base, s.delay.capacity, s.delay.exponent
        );
    }
    let _ = writeln!(out, "\n[demand]");
    for d in &data.demand {
        let _ = writeln!(out, "{} {} {} {}", d.class, d.origin, d.destination, d.volume);
    }
    let _ = writeln!(out, "\n[pricing]");
    let _ = writeln!(out, "p_min {}", p.price_min);
    let _ = writeln!(out, "p_max {}", p.price_max);
    let _ = writeln!(out, "grid {}", p.grid);
    out
}
