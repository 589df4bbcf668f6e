//! Level 2: price competition among providers, each anticipating the
//! Level 1 response of drivers.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::assignment::{station_demand, AssignmentError, EquilibriumSolver, FlowState, SolveOptions};
pub use crate::model::PriceProfile;
use crate::model::{ProviderId, ProviderKind, Scenario, StationId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PricingError {
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
    #[error("no open station to price")]
    NoOpenStation,
    #[error("unknown provider {0}")]
    UnknownProvider(ProviderId),
    #[error("invalid pricing options: {0}")]
    InvalidOptions(&'static str),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PricingOptions {
    /// Weight of the new best response in each round, in (0, 1].
    pub damping: f64,
    /// Largest price change that still counts as converged; `None` means
    /// `1e-3 * (p_max - p_min)`.
    pub tolerance: Option<f64>,
    pub max_rounds: usize,
    /// Golden-section iterations around the best grid price.
    pub refinement: usize,
    /// Options for every nested Level 1 solve.
    pub assignment: SolveOptions,
}

impl Default for PricingOptions {
    fn default() -> Self {
        PricingOptions {
            damping: 0.5,
            tolerance: None,
            max_rounds: 200,
            refinement: 30,
            assignment: SolveOptions::default(),
        }
    }
}

impl PricingOptions {
    fn check(&self) -> Result<(), PricingError> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(PricingError::InvalidOptions("damping must lie in (0, 1]"));
        }
        if self.max_rounds == 0 {
            return Err(PricingError::InvalidOptions("max rounds must be positive"));
        }
        if let Some(t) = self.tolerance {
            if !(t > 0.0) {
                return Err(PricingError::InvalidOptions("tolerance must be > 0"));
            }
        }
        Ok(())
    }

    fn threshold(&self, scenario: &Scenario) -> f64 {
        let p = &scenario.params;
        self.tolerance
            .unwrap_or(1e-3 * (p.price_max - p.price_min))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PricingResult {
    pub prices: PriceProfile,
    /// Prices settled and the final Level 1 solve converged.
    pub converged: bool,
    pub rounds: usize,
    pub cycle_detected: bool,
    /// Profit per provider with at least one open station, currency/h.
    pub profits: BTreeMap<ProviderId, f64>,
    /// Candidate prices dropped because their Level 1 solve did not converge.
    pub infeasible: usize,
    /// Level 1 state at `prices`.
    pub flow: FlowState,
}

impl PricingResult {
    pub fn profit(&self, provider: ProviderId) -> f64 {
        self.profits.get(&provider).copied().unwrap_or(0.0)
    }
}

/// Margin on energy sold at the provider's open stations, less the
/// entrant's hourly site cost for each open site. Currency per hour.
pub fn provider_profit(
    scenario: &Scenario,
    prices: &PriceProfile,
    provider: ProviderId,
    flow: &FlowState,
) -> f64 {
    let Some(owner) = scenario.provider(provider) else {
        return 0.0;
    };
    let energy = scenario.params.energy;
    let mut profit = 0.0;
    for (station, price) in prices.iter() {
        if scenario.station(station).map(|s| s.provider) != Some(provider) {
            continue;
        }
        profit += (price - owner.marginal_cost) * energy * station_demand(flow, station);
        if owner.kind == ProviderKind::Entrant {
            profit -= owner.site_cost;
        }
    }
    profit
}

/// Stations in `prices` that belong to `provider`, ascending.
fn stations_of(scenario: &Scenario, prices: &PriceProfile, provider: ProviderId) -> Vec<StationId> {
    prices
        .stations()
        .filter(|&s| scenario.station(s).map(|st| st.provider) == Some(provider))
        .collect()
}

/// Providers owning at least one priced station, ascending.
fn active_providers(scenario: &Scenario, prices: &PriceProfile) -> Vec<ProviderId> {
    let mut ids: Vec<_> = prices
        .stations()
        .filter_map(|s| scenario.station(s).map(|st| st.provider))
        .collect();
    ids.sort();
    ids.dedup();
    ids
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

/// Level 1 evaluations over a fixed set of open stations.
struct Market<'s> {
    solver: EquilibriumSolver<'s>,
    open: Vec<StationId>,
}

impl<'s> Market<'s> {
    fn new(scenario: &'s Scenario, open: Vec<StationId>, options: &SolveOptions) -> Result<Self, PricingError> {
        Ok(Market {
            solver: EquilibriumSolver::new(scenario, options)?,
            open,
        })
    }

    fn scenario(&self) -> &'s Scenario {
        self.solver.scenario()
    }

    fn flow(&self, prices: &PriceProfile) -> Result<FlowState, PricingError> {
        Ok(self.solver.solve(&self.open, prices)?)
    }

    /// Provider profit at `prices`, or `None` when Level 1 did not converge.
    fn profit(&self, prices: &PriceProfile, provider: ProviderId) -> Result<Option<f64>, PricingError> {
        let flow = self.flow(prices)?;
        Ok(flow
            .converged
            .then(|| provider_profit(self.scenario(), prices, provider, &flow)))
    }

    fn profits(&self, prices: &PriceProfile, flow: &FlowState) -> BTreeMap<ProviderId, f64> {
        active_providers(self.scenario(), prices)
            .into_iter()
            .map(|p| (p, provider_profit(self.scenario(), prices, p, flow)))
            .collect()
    }

    /// Profit of `provider` at every grid price for `station`, in grid order.
    fn grid_profits(
        &self,
        prices: &PriceProfile,
        provider: ProviderId,
        station: StationId,
    ) -> Result<Vec<(f64, Option<f64>)>, PricingError> {
        let params = &self.scenario().params;
        (0..params.grid)
            .into_par_iter()
            .map(|i| {
                let price = params.grid_price(i);
                Ok((price, self.profit(&prices.with(station, price), provider)?))
            })
            .collect()
    }

    fn best_response(&self, prices: &PriceProfile, provider: ProviderId, refinement: usize) -> Result<BestResponse, PricingError> {
        let scenario = self.scenario();
        let params = &scenario.params;
        let mut current = prices.clone();
        let mut infeasible = 0;
        let mut profit = None;
        for station in stations_of(scenario, prices, provider) {
            let grid = self.grid_profits(&current, provider, station)?;
            infeasible += grid.iter().filter(|(_, v)| v.is_none()).count();
            let Some(top) = grid.iter().filter_map(|&(_, v)| v).reduce(f64::max) else {
                continue;
            };
            // Highest price among the grid maximisers.
            let (mut price, mut value) = grid
                .iter()
                .rev()
                .find_map(|&(p, v)| v.filter(|&v| near(v, top)).map(|v| (p, v)))
                .expect("a feasible grid price exists");

            let step = params.grid_step();
            if refinement > 0 && step > 0.0 {
                let lo = (price - step).max(params.price_min);
                let hi = (price + step).min(params.price_max);
                let mut eval = |p: f64| -> Result<f64, PricingError> {
                    match self.profit(&current.with(station, p), provider)? {
                        Some(v) => Ok(v),
                        None => {
                            infeasible += 1;
                            Ok(f64::NEG_INFINITY)
                        }
                    }
                };
                let (p, v) = golden_section(lo, hi, refinement, &mut eval)?;
                if v > value && !near(v, value) {
                    price = p;
                    value = v;
                }
            }
            current.set(station, price);
            profit = Some(value);
        }
        let profit = match profit {
            Some(v) => Some(v),
            None => self.profit(&current, provider)?,
        };
        Ok(BestResponse {
            prices: current,
            profit,
            infeasible,
        })
    }
}

/// Maximises `f` on `[lo, hi]`; returns the best point evaluated.
fn golden_section<E>(
    mut lo: f64,
    mut hi: f64,
    iterations: usize,
    f: &mut impl FnMut(f64) -> Result<f64, E>,
) -> Result<(f64, f64), E> {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    let mut best = if fb >= fa { (b, fb) } else { (a, fa) };
    for _ in 0..iterations {
        if fa >= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a)?;
            if fa > best.1 {
                best = (a, fa);
            }
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b)?;
            if fb > best.1 {
                best = (b, fb);
            }
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BestResponse {
    pub prices: PriceProfile,
    /// Profit at the returned prices; `None` if even that solve failed.
    pub profit: Option<f64>,
    pub infeasible: usize,
}

/// Best response of `provider` to the other prices in `prices`: one grid
/// scan plus golden-section refinement per station, stations in ascending
/// id order. Grid ties go to the higher price.
pub fn best_response_price(
    scenario: &Scenario,
    prices: &PriceProfile,
    provider: ProviderId,
    options: &PricingOptions,
) -> Result<BestResponse, PricingError> {
    options.check()?;
    scenario
        .provider(provider)
        .ok_or(PricingError::UnknownProvider(provider))?;
    let market = Market::new(scenario, prices.stations().collect(), &options.assignment)?;
    market.best_response(prices, provider, options.refinement)
}

fn quantize(prices: &PriceProfile, scenario: &Scenario) -> Vec<i64> {
    let p = &scenario.params;
    let step = p.grid_step();
    prices
        .iter()
        .map(|(_, x)| if step > 0.0 { ((x - p.price_min) / step).round() as i64 } else { 0 })
        .collect()
}

/// True when the last `p` quantized profiles repeat the `p` before them
/// for some period `p >= 2`, the period visits at least two cells, and its
/// moves are at least one grid step.
fn repeating_period(seen: &[Vec<i64>], changes: &[f64], step: f64) -> bool {
    let n = seen.len();
    (2..=n / 2).any(|p| {
        let (last, before) = (&seen[n - p..], &seen[n - 2 * p..n - p]);
        last == before
            && last.iter().any(|q| q != &last[0])
            && changes[n - p..].iter().copied().fold(0.0, f64::max) >= step
    })
}

/// Iterated best response. Every active provider responds to the previous
/// round's profile; the new profile moves a fraction `damping` of the way
/// towards the responses (the full way when only one provider is active).
/// When the grid-quantized profiles start repeating with a fixed period the
/// run stops as a cycle and returns the profile with the largest total
/// profit seen.
pub fn solve_price_equilibrium(
    scenario: &Scenario,
    open: &[StationId],
    options: &PricingOptions,
) -> Result<PricingResult, PricingError> {
    options.check()?;
    if open.is_empty() {
        return Err(PricingError::NoOpenStation);
    }
    let mut open = open.to_vec();
    open.sort();
    open.dedup();
    let params = &scenario.params;
    let market = Market::new(scenario, open.clone(), &options.assignment)?;
    let threshold = options.threshold(scenario);
    let step = params.grid_step();

    let mut profile = PriceProfile::uniform(&open, 0.5 * (params.price_min + params.price_max));
    let providers = active_providers(scenario, &profile);
    let damping = if providers.len() == 1 { 1.0 } else { options.damping };

    let mut infeasible = 0;
    let mut seen: Vec<Vec<i64>> = Vec::new();
    let mut changes: Vec<f64> = Vec::new();
    let mut best: Option<(f64, PriceProfile)> = None;
    let mut converged = false;
    let mut cycle = false;
    let mut rounds = 0;

    while rounds < options.max_rounds {
        rounds += 1;
        let mut target = profile.clone();
        for &p in &providers {
            let br = market.best_response(&profile, p, options.refinement)?;
            infeasible += br.infeasible;
            for s in stations_of(scenario, &profile, p) {
                target.set(s, br.prices.get(s).expect("response prices every station"));
            }
        }
        let mut change: f64 = 0.0;
        let mut next = PriceProfile::new();
        for (s, old) in profile.iter() {
            let new = (old + damping * (target.get(s).unwrap_or(old) - old))
                .clamp(params.price_min, params.price_max);
            change = change.max((new - old).abs());
            next.set(s, new);
        }
        profile = next;
        if change <= threshold {
            converged = true;
            break;
        }

        let flow = market.flow(&profile)?;
        if flow.converged {
            let total: f64 = market.profits(&profile, &flow).values().sum();
            if best.as_ref().is_none_or(|(t, _)| total > *t) {
                best = Some((total, profile.clone()));
            }
        }
        seen.push(quantize(&profile, scenario));
        changes.push(change);
        if repeating_period(&seen, &changes, step) {
            cycle = true;
            break;
        }
    }

    if cycle {
        if let Some((_, p)) = best {
            profile = p;
        }
    }
    let flow = market.flow(&profile)?;
    let profits = market.profits(&profile, &flow);
    Ok(PricingResult {
        converged: converged && flow.converged,
        prices: profile,
        rounds,
        cycle_detected: cycle,
        profits,
        infeasible,
        flow,
    })
}

/// Acceptable deviation gain for a provider: `absolute + relative * |profit|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NashTolerance {
    pub absolute: f64,
    pub relative: f64,
}

impl Default for NashTolerance {
    fn default() -> Self {
        NashTolerance {
            absolute: 1e-6,
            relative: 1e-2,
        }
    }
}

impl NashTolerance {
    pub fn allowed(&self, profit: f64) -> f64 {
        self.absolute + self.relative * profit.abs()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Deviation {
    pub provider: ProviderId,
    pub profit: f64,
    /// Best profit reachable by moving one station to one grid price.
    pub best_profit: f64,
    pub gain: f64,
    pub station: Option<StationId>,
    pub price: Option<f64>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NashReport {
    pub deviations: Vec<Deviation>,
    pub max_gain: f64,
    pub passed: bool,
    /// Deviations skipped because their Level 1 solve did not converge.
    pub infeasible: usize,
    /// Whether the solve at the tested profile itself converged.
    pub base_converged: bool,
}

/// Checks every single-station grid deviation of every provider against
/// `prices`, where the open stations are exactly the priced ones.
pub fn verify_nash(
    scenario: &Scenario,
    prices: &PriceProfile,
    tolerance: NashTolerance,
    options: &SolveOptions,
) -> Result<NashReport, PricingError> {
    if prices.is_empty() {
        return Err(PricingError::NoOpenStation);
    }
    let market = Market::new(scenario, prices.stations().collect(), options)?;
    let flow = market.flow(prices)?;
    let mut deviations = Vec::new();
    let mut infeasible = 0;
    for provider in active_providers(scenario, prices) {
        let profit = provider_profit(scenario, prices, provider, &flow);
        let mut best = (profit, None, None);
        for station in stations_of(scenario, prices, provider) {
            for (price, value) in market.grid_profits(prices, provider, station)? {
                match value {
                    None => infeasible += 1,
                    Some(v) if v > best.0 => best = (v, Some(station), Some(price)),
                    Some(_) => {}
                }
            }
        }
        let gain = (best.0 - profit).max(0.0);
        deviations.push(Deviation {
            provider,
            profit,
            best_profit: best.0,
            gain,
            station: best.1,
            price: best.2,
            passed: gain <= tolerance.allowed(profit),
        });
    }
    Ok(NashReport {
        max_gain: deviations.iter().map(|d| d.gain).fold(0.0, f64::max),
        passed: deviations.iter().all(|d| d.passed),
        deviations,
        infeasible,
        base_converged: flow.converged,
    })
}

#[cfg(test)]
mod tests;
