//! Level 3: the entrant chooses which candidate sites to open, anticipating
//! the price equilibrium and the driver response each choice induces.

use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{Scenario, StationId, StationStatus};
use crate::pricing::{solve_price_equilibrium, PricingError, PricingOptions, PricingResult};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlacementError {
    #[error(transparent)]
    Pricing(#[from] PricingError),
    #[error("budget {k} must lie between 1 and the {candidates} candidates")]
    InvalidBudget { k: usize, candidates: usize },
    #[error("station {0} is not an entrant candidate")]
    NotCandidate(StationId),
    #[error("station {0} appears twice in a placement")]
    Duplicate(StationId),
}

/// Candidate sites the entrant opens, ascending id.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Placement(Vec<StationId>);

impl Placement {
    pub fn new(mut stations: Vec<StationId>) -> Result<Self, PlacementError> {
        stations.sort();
        if let Some(w) = stations.windows(2).find(|w| w[0] == w[1]) {
            return Err(PlacementError::Duplicate(w[0]));
        }
        Ok(Placement(stations))
    }

    pub fn stations(&self) -> &[StationId] {
        &self.0
    }

    pub fn budget(&self) -> usize {
        self.0.len()
    }

    fn with(&self, station: StationId) -> Placement {
        let mut s = self.0.clone();
        s.push(station);
        s.sort();
        Placement(s)
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.iter().join(","))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Method {
    #[default]
    Exhaustive,
    /// Heuristic: adds one site at a time.
    Greedy,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Exhaustive => "exhaustive",
            Method::Greedy => "greedy",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exhaustive" => Ok(Method::Exhaustive),
            "greedy" => Ok(Method::Greedy),
            _ => Err(format!("unknown method '{s}' (expected exhaustive or greedy)")),
        }
    }
}

/// One placement with the entrant's equilibrium profit under it.
#[derive(Clone, Debug, PartialEq)]
pub struct PlacementEvaluation {
    pub placement: Placement,
    /// Entrant profit net of site costs, currency/h.
    pub profit: f64,
    pub converged: bool,
    pub pricing: PricingResult,
}

/// Row of the evaluation table in a [`PlacementResult`].
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationRow {
    pub placement: Placement,
    pub profit: f64,
    pub converged: bool,
    pub cycle_detected: bool,
}

impl From<&PlacementEvaluation> for EvaluationRow {
    fn from(e: &PlacementEvaluation) -> Self {
        EvaluationRow {
            placement: e.placement.clone(),
            profit: e.profit,
            converged: e.converged,
            cycle_detected: e.pricing.cycle_detected,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlacementResult {
    pub method: Method,
    pub placement: Placement,
    pub profit: f64,
    pub converged: bool,
    pub pricing: PricingResult,
    /// Every placement evaluated, in evaluation order.
    pub table: Vec<EvaluationRow>,
    /// No evaluation converged.
    pub all_failed: bool,
}

/// All `k`-subsets of `candidates` in lexicographic order of sorted ids.
pub fn enumerate_placements(candidates: &[StationId], k: usize) -> Result<Vec<Placement>, PlacementError> {
    let mut sorted = candidates.to_vec();
    sorted.sort();
    sorted.dedup();
    if k == 0 || k > sorted.len() {
        return Err(PlacementError::InvalidBudget {
            k,
            candidates: sorted.len(),
        });
    }
    Ok(sorted.into_iter().combinations(k).map(Placement).collect())
}

/// Opens the placement next to the already open stations and solves the
/// price equilibrium.
pub fn evaluate_placement(
    scenario: &Scenario,
    placement: &Placement,
    options: &PricingOptions,
) -> Result<PlacementEvaluation, PlacementError> {
    for &s in placement.stations() {
        if scenario.station(s).map(|st| st.status) != Some(StationStatus::Candidate) {
            return Err(PlacementError::NotCandidate(s));
        }
    }
    let mut open = scenario.open_stations();
    open.extend_from_slice(placement.stations());
    let pricing = solve_price_equilibrium(scenario, &open, options)?;
    Ok(PlacementEvaluation {
        placement: placement.clone(),
        profit: pricing.profit(scenario.entrant().id),
        converged: pricing.converged,
        pricing,
    })
}

/// Index of the highest profit; ties go to the earliest row.
pub fn best_index(rows: &[EvaluationRow]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, row) in rows.iter().enumerate() {
        if best.is_none_or(|b| row.profit > rows[b].profit) {
            best = Some(i);
        }
    }
    best
}

fn evaluate_all(
    scenario: &Scenario,
    placements: &[Placement],
    options: &PricingOptions,
) -> Result<Vec<PlacementEvaluation>, PlacementError> {
    placements
        .par_iter()
        .map(|p| evaluate_placement(scenario, p, options))
        .collect()
}

/// Entrant's best placement of exactly `k` sites.
pub fn solve_placement(
    scenario: &Scenario,
    k: usize,
    method: Method,
    options: &PricingOptions,
) -> Result<PlacementResult, PlacementError> {
    let candidates = scenario.candidates();
    let (best, table) = match method {
        Method::Exhaustive => {
            let evaluations = evaluate_all(scenario, &enumerate_placements(&candidates, k)?, options)?;
            let rows: Vec<EvaluationRow> = evaluations.iter().map(EvaluationRow::from).collect();
            let i = best_index(&rows).expect("at least one placement");
            (evaluations.into_iter().nth(i).expect("index in range"), rows)
        }
        Method::Greedy => {
            if k == 0 || k > candidates.len() {
                return Err(PlacementError::InvalidBudget {
                    k,
                    candidates: candidates.len(),
                });
            }
            let mut rows = Vec::new();
            let mut current = Placement(Vec::new());
            let mut chosen = None;
            for _ in 0..k {
                let options_now: Vec<Placement> = candidates
                    .iter()
                    .filter(|c| !current.stations().contains(c))
                    .map(|&c| current.with(c))
                    .collect();
                let evaluations = evaluate_all(scenario, &options_now, options)?;
                let round: Vec<EvaluationRow> = evaluations.iter().map(EvaluationRow::from).collect();
                let i = best_index(&round).expect("a remaining candidate");
                rows.extend(round);
                let pick = evaluations.into_iter().nth(i).expect("index in range");
                current = pick.placement.clone();
                chosen = Some(pick);
            }
            (chosen.expect("k >= 1"), rows)
        }
    };
    Ok(PlacementResult {
        method,
        placement: best.placement,
        profit: best.profit,
        converged: best.converged,
        all_failed: table.iter().all(|r| !r.converged),
        pricing: best.pricing,
        table,
    })
}
