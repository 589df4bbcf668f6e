use super::*;
use crate::assignment::{solve_user_equilibrium, Mode};
use crate::io::{parse_scenario, parse_scenario_str};
use proptest::prelude::*;

fn fixture(name: &str) -> Scenario {
    parse_scenario(format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn flow_at(s: &Scenario, prices: &PriceProfile) -> FlowState {
    let open: Vec<_> = prices.stations().collect();
    solve_user_equilibrium(s, &open, prices, &SolveOptions::default()).unwrap()
}

/// One station, demand 20, energy 10, marginal 0.1, no route costs.
fn profit_case(site_cost: f64, kind: &str, ev: f64) -> Scenario {
    parse_scenario_str(&format!(
        "version 1
[params]
vot 1
energy 10
outside_cost 1000
[nodes]
1
2
[links]
1 1 2 affine 0 0 0 0
[providers]
1 {kind} 0.1 {site_cost}
2 entrant 0 0
[stations]
1 1 2 0 10 1 open
[demand]
ev 1 2 {ev}
[pricing]
p_min 0
p_max 1
grid 11
"
    ))
    .unwrap_or_else(|e| panic!("{:?}", e.messages()))
}

#[test]
fn profit_examples() {
    let s = profit_case(0.0, "incumbent", 20.0);
    let prices = PriceProfile::uniform(&[StationId(1)], 0.5);
    let f = flow_at(&s, &prices);
    // (0.5 - 0.1) * 10 * 20
    let expected = (0.5 - 0.1) * 10.0 * 20.0;
    assert!((provider_profit(&s, &prices, ProviderId(1), &f) - expected).abs() < 1e-9);

    let at_cost = PriceProfile::uniform(&[StationId(1)], 0.1);
    let f = flow_at(&s, &at_cost);
    assert_eq!(provider_profit(&s, &at_cost, ProviderId(1), &f), 0.0);
}

#[test]
fn entrant_pays_site_cost_without_demand() {
    let s = parse_scenario_str(
        "version 1
[params]
vot 1
energy 10
outside_cost 1000
[nodes]
1
2
[links]
1 1 2 affine 0 0 0 0
[providers]
1 entrant 0.1 2
[stations]
1 1 2 0 10 1 open
[demand]
ev 1 2 0
[pricing]
p_min 0
p_max 1
grid 11
",
    )
    .unwrap();
    let prices = PriceProfile::uniform(&[StationId(1)], 0.5);
    let f = flow_at(&s, &prices);
    assert_eq!(provider_profit(&s, &prices, ProviderId(1), &f), -2.0);
}

#[test]
fn monopoly_best_response_is_indifference_price() {
    let s = fixture("monopoly.scn");
    let start = PriceProfile::uniform(&[StationId(1)], 5.0);
    let br = best_response_price(&s, &start, ProviderId(1), &PricingOptions::default()).unwrap();
    // Outside option minus the non-price cost of charging.
    let indifference = s.params.outside_cost / s.params.energy - 2.0 / s.params.energy;
    assert!((br.prices.get(StationId(1)).unwrap() - indifference).abs() < 1e-9);
    assert!((br.profit.unwrap() - (indifference - 1.0) * 20.0).abs() < 1e-6);
    assert_eq!(br.infeasible, 0);
}

#[test]
fn zero_demand_best_response_is_price_ceiling() {
    let s = profit_case(0.0, "incumbent", 0.0);
    let start = PriceProfile::uniform(&[StationId(1)], 0.3);
    let br = best_response_price(&s, &start, ProviderId(1), &PricingOptions::default()).unwrap();
    assert_eq!(br.prices.get(StationId(1)), Some(s.params.price_max));
}

/// Grid-only profit maximum for `provider`, by direct Level 1 solves.
fn grid_oracle(s: &Scenario, prices: &PriceProfile, station: StationId, provider: ProviderId) -> f64 {
    s.params
        .grid_prices()
        .map(|p| {
            let trial = prices.with(station, p);
            provider_profit(s, &trial, provider, &flow_at(s, &trial))
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn dearer_rival_weakly_helps_responder() {
    let s = fixture("duopoly_symmetric.scn");
    let options = PricingOptions {
        refinement: 0,
        ..PricingOptions::default()
    };
    let mut last = f64::NEG_INFINITY;
    for rival in [0.3, 0.6, 0.9, 1.2] {
        let prices = PriceProfile::from_iter([(StationId(1), 0.7), (StationId(2), rival)]);
        let br = best_response_price(&s, &prices, ProviderId(1), &options).unwrap();
        let profit = br.profit.unwrap();
        let oracle = grid_oracle(&s, &prices, StationId(1), ProviderId(1));
        assert!((profit - oracle).abs() <= 1e-9 * (1.0 + oracle.abs()));
        assert!(profit >= last - 1e-6, "{profit} < {last}");
        last = profit;
    }
}

#[test]
fn monopoly_equilibrium() {
    let s = fixture("monopoly.scn");
    let r = solve_price_equilibrium(&s, &s.open_stations(), &PricingOptions::default()).unwrap();
    assert!(r.converged);
    assert!(r.rounds <= 2);
    assert!(!r.cycle_detected);
    assert!((r.prices.get(StationId(1)).unwrap() - 8.0).abs() < 1e-9);
    assert!((r.profit(ProviderId(1)) - (8.0 - 1.0) * 1.0 * 20.0).abs() < 1e-6);
    // The fixed point is its own best response.
    let br = best_response_price(&s, &r.prices, ProviderId(1), &PricingOptions::default()).unwrap();
    assert_eq!(br.prices, r.prices);
}

#[test]
fn symmetric_duopoly_prices_match() {
    let s = fixture("duopoly_symmetric.scn");
    let r = solve_price_equilibrium(&s, &s.open_stations(), &PricingOptions::default()).unwrap();
    assert!(r.converged, "{r:?}");
    let (p1, p2) = (r.prices.get(StationId(1)).unwrap(), r.prices.get(StationId(2)).unwrap());
    assert!((p1 - p2).abs() <= 1e-6, "{p1} {p2}");
    let (d1, d2) = (
        station_demand(&r.flow, StationId(1)),
        station_demand(&r.flow, StationId(2)),
    );
    assert!((d1 - d2).abs() <= 1e-6, "{d1} {d2}");
}

#[test]
fn profits_match_recomputation() {
    let s = fixture("duopoly_symmetric.scn");
    let r = solve_price_equilibrium(&s, &s.open_stations(), &PricingOptions::default()).unwrap();
    for (&p, &v) in &r.profits {
        assert_eq!(provider_profit(&s, &r.prices, p, &r.flow), v);
    }
    assert_eq!(r.flow, flow_at(&s, &r.prices));
}

#[test]
fn converged_equilibria_pass_nash_check() {
    for name in ["monopoly.scn", "duopoly_symmetric.scn"] {
        let s = fixture(name);
        let options = PricingOptions::default();
        let r = solve_price_equilibrium(&s, &s.open_stations(), &options).unwrap();
        assert!(r.converged);
        let report = verify_nash(&s, &r.prices, NashTolerance::default(), &options.assignment).unwrap();
        assert!(report.passed, "{name}: {report:?}");
    }
}

#[test]
fn underpriced_monopoly_fails_nash_check() {
    let s = fixture("monopoly.scn");
    let prices = PriceProfile::uniform(&[StationId(1)], 4.0);
    let report = verify_nash(&s, &prices, NashTolerance::default(), &SolveOptions::default()).unwrap();
    assert!(!report.passed);
    assert!(report.max_gain > 0.0);
    assert_eq!(report.deviations[0].price, Some(s.params.grid_price(80)));
}

#[test]
fn single_price_grid_passes_trivially() {
    let text = std::fs::read_to_string(format!("{}/fixtures/monopoly.scn", env!("CARGO_MANIFEST_DIR")))
        .unwrap()
        .replace("p_min 0", "p_min 4")
        .replace("p_max 10", "p_max 4");
    let s = parse_scenario_str(&text).unwrap();
    let prices = PriceProfile::uniform(&[StationId(1)], 4.0);
    let report = verify_nash(&s, &prices, NashTolerance::default(), &SolveOptions::default()).unwrap();
    assert!(report.passed);
    assert_eq!(report.max_gain, 0.0);
}

#[test]
fn pricing_is_deterministic() {
    let s = fixture("duopoly_symmetric.scn");
    let options = PricingOptions {
        assignment: SolveOptions {
            mode: Mode::Exogenous,
            ..SolveOptions::default()
        },
        ..PricingOptions::default()
    };
    let a = solve_price_equilibrium(&s, &s.open_stations(), &options).unwrap();
    let b = solve_price_equilibrium(&s, &s.open_stations(), &options).unwrap();
    assert_eq!(a, b);
}

#[test]
fn empty_market_is_rejected() {
    let s = fixture("monopoly.scn");
    assert_eq!(
        solve_price_equilibrium(&s, &[], &PricingOptions::default()).unwrap_err(),
        PricingError::NoOpenStation
    );
}

#[test]
fn golden_section_finds_interior_maximum() {
    let mut f = |x: f64| -> Result<f64, ()> { Ok(-(x - 0.3) * (x - 0.3)) };
    let (x, _) = golden_section(0.0, 1.0, 40, &mut f).unwrap();
    assert!((x - 0.3).abs() < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn best_response_stays_in_bounds_and_beats_grid(p2 in 0.2f64..1.2) {
        let s = fixture("duopoly_symmetric.scn");
        let prices = PriceProfile::from_iter([(StationId(1), 0.5), (StationId(2), p2)]);
        let br = best_response_price(&s, &prices, ProviderId(2), &PricingOptions::default()).unwrap();
        let p = br.prices.get(StationId(2)).unwrap();
        prop_assert!((s.params.price_min..=s.params.price_max).contains(&p));
        prop_assert_eq!(br.prices.get(StationId(1)), Some(0.5));
        let oracle = grid_oracle(&s, &prices, StationId(2), ProviderId(2));
        prop_assert!(br.profit.unwrap() >= oracle - 1e-9 * (1.0 + oracle.abs()));
    }

    #[test]
    fn raising_a_price_never_raises_its_demand(a in 0.2f64..1.2, b in 0.2f64..1.2, rival in 0.2f64..1.2) {
        let s = fixture("duopoly_symmetric.scn");
        let (lo, hi) = (a.min(b), a.max(b));
        let low = PriceProfile::from_iter([(StationId(1), lo), (StationId(2), rival)]);
        let high = low.with(StationId(1), hi);
        let d_low = station_demand(&flow_at(&s, &low), StationId(1));
        let d_high = station_demand(&flow_at(&s, &high), StationId(1));
        prop_assert!(d_high <= d_low + 1e-4 * (1.0 + d_low), "{} > {}", d_high, d_low);
    }
}
