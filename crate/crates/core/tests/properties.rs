mod common;

use proptest::prelude::*;
use trilevel::assignment::{solve_user_equilibrium, station_demand, FlowState, Mode, SolveOptions};
use trilevel::harness::{run_endogeneity_comparison, sweep, ComparisonDeltas, SweepParameter};
use trilevel::model::{
    link_travel_time, validate_scenario, NodeId, PriceProfile, Scenario, StationId, StationStatus, TravelClass,
};
use trilevel::placement::{best_index, solve_placement, Method};
use trilevel::pricing::PricingOptions;

/// Every station of the scenario, candidates included.
fn all_stations(s: &Scenario) -> Vec<StationId> {
    let mut ids: Vec<_> = s.stations.iter().map(|st| st.id).collect();
    ids.sort();
    ids
}

fn prices_from(s: &Scenario, stations: &[StationId], fractions: &[f64]) -> PriceProfile {
    let p = &s.params;
    stations
        .iter()
        .zip(fractions.iter().cycle())
        .map(|(&id, f)| (id, p.price_min + f * (p.price_max - p.price_min)))
        .collect()
}

fn solve(s: &Scenario, prices: &PriceProfile, mode: Mode) -> FlowState {
    let open: Vec<_> = prices.stations().collect();
    let options = SolveOptions { mode, ..SolveOptions::default() };
    solve_user_equilibrium(s, &open, prices, &options).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn flows_are_conserved(which in 0usize..6, f in prop::collection::vec(0.0f64..=1.0, 4), exo in any::<bool>()) {
        let s = common::fixture(common::PRICED[which]);
        let prices = prices_from(&s, &all_stations(&s), &f);
        let mode = if exo { Mode::Exogenous } else { Mode::Endogenous };
        common::assert_conserved(&s, &solve(&s, &prices, mode));
    }

    #[test]
    fn raising_a_price_weakly_lowers_its_demand(
        which in 0usize..6,
        f in prop::collection::vec(0.0f64..=1.0, 4),
        pick in 0usize..8,
        bump in 0.0f64..=1.0,
    ) {
        let s = common::fixture(common::PRICED[which]);
        let stations = all_stations(&s);
        let low = prices_from(&s, &stations, &f);
        let target = stations[pick % stations.len()];
        let old = low.get(target).unwrap();
        let high = low.with(target, old + bump * (s.params.price_max - old));
        let d_low = station_demand(&solve(&s, &low, Mode::Endogenous), target);
        let d_high = station_demand(&solve(&s, &high, Mode::Endogenous), target);
        prop_assert!(d_high <= d_low + 1e-4 * (1.0 + d_low), "{}: {} -> {}", common::PRICED[which], d_low, d_high);
    }

    #[test]
    fn link_latency_is_monotone(which in 0usize..7, a in 0.0f64..500.0, b in 0.0f64..500.0) {
        let s = common::fixture(common::PRICED[which]);
        let (lo, hi) = (a.min(b), a.max(b));
        for link in &s.links {
            let (t_lo, t_hi) = (link_travel_time(&link.latency, lo).unwrap(), link_travel_time(&link.latency, hi).unwrap());
            prop_assert!(t_lo <= t_hi);
        }
    }
}

#[test]
fn grid_solution_is_conserved() {
    let s = common::fixture("grid5.scn");
    let prices = PriceProfile::uniform(&s.open_stations(), 0.7);
    for mode in [Mode::Endogenous, Mode::Exogenous] {
        common::assert_conserved(&s, &solve(&s, &prices, mode));
    }
}

fn without_nonev(s: &Scenario) -> Scenario {
    let mut data = s.clone().into_data();
    data.demand.retain(|d| d.class == TravelClass::Ev);
    validate_scenario(data).unwrap()
}

#[test]
fn no_background_means_no_difference() {
    let s = without_nonev(&common::fixture("placement4.scn"));
    let r = run_endogeneity_comparison(&s, 2, Method::Exhaustive, &PricingOptions::default()).unwrap();
    assert_eq!(r.endogenous.table, r.exogenous.table);
    assert_eq!(r.endogenous.pricing, r.exogenous.pricing);
    let d = &r.deltas;
    assert!(d.same_placement);
    for v in [d.profit_abs, d.profit_rel, d.max_price_diff, d.mean_ev_cost_diff] {
        assert_eq!(v, 0.0);
    }
    assert_eq!(d.congestion[0], d.congestion[1]);
}

#[test]
fn deltas_are_recomputable() {
    let s = common::fixture("divergence.scn");
    let r = run_endogeneity_comparison(&s, 1, Method::Exhaustive, &PricingOptions::default()).unwrap();
    assert_eq!(ComparisonDeltas::compute(&s, &r.endogenous, &r.exogenous), r.deltas);
    let d = &r.deltas;
    assert_eq!(d.profit_abs, r.exogenous.profit - r.endogenous.profit);
    assert_eq!(d.same_placement, r.endogenous.placement == r.exogenous.placement);
}

#[test]
fn background_shows_in_congestion() {
    let s = common::fixture("divergence.scn");
    let series = sweep(&s, SweepParameter::NonEvScale, &[0.0, 1.0], 1, Method::Exhaustive, &PricingOptions::default())
        .unwrap();
    let (empty, loaded) = (&series.points[0].report, &series.points[1].report);
    assert_ne!(empty.deltas.congestion[0], loaded.deltas.congestion[0]);
    assert!(loaded.deltas.congestion[1].mean > empty.deltas.congestion[1].mean);
    // The zero-scale point is the no-background case.
    let bare = run_endogeneity_comparison(&without_nonev(&s), 1, Method::Exhaustive, &PricingOptions::default()).unwrap();
    assert_eq!(empty.endogenous, bare.endogenous);
    assert!(empty.deltas.same_placement);
}

#[test]
fn sweeps_repeat_exactly() {
    let s = common::fixture("divergence.scn");
    let run = || sweep(&s, SweepParameter::OutsideCost, &[25.0, 30.7], 1, Method::Exhaustive, &PricingOptions::default()).unwrap();
    assert_eq!(run(), run());
}

#[test]
fn placement_flag_flips_along_background_scale() {
    let s = common::fixture("divergence.scn");
    let series = sweep(&s, SweepParameter::NonEvScale, &[0.0, 1.0, 2.0], 1, Method::Exhaustive, &PricingOptions::default())
        .unwrap();
    let flags: Vec<bool> = series.points.iter().map(|p| p.report.deltas.same_placement).collect();
    assert!(flags.windows(2).any(|w| w[0] != w[1]), "{flags:?}");
}

/// Two candidate sites serving separate markets, so a second site cannot
/// undercut the first.
fn separate_markets() -> Scenario {
    let text = "version 1
[params]
vot 1
energy 1
outside_cost 10
[nodes]
1
2
3
4
5
6
[links]
1 1 2 affine 1 0.05 0 0
2 2 3 affine 1 0.05 0 0
3 4 5 affine 1 0.05 0 0
4 5 6 affine 1 0.05 0 0
[providers]
1 entrant 1 2
[stations]
1 1 2 0 50 1 candidate
2 1 5 0 50 1 candidate
[demand]
ev 1 3 20
ev 4 6 10
[pricing]
p_min 0
p_max 10
grid 21
";
    trilevel::io::parse_scenario_str(text).unwrap()
}

#[test]
fn second_site_is_worth_at_least_its_cost_when_markets_are_separate() {
    let s = separate_markets();
    let series = sweep(&s, SweepParameter::K, &[1.0, 2.0], 1, Method::Exhaustive, &PricingOptions::default()).unwrap();
    let one = &series.points[0].report.endogenous;
    let two = &series.points[1].report.endogenous;
    let site_cost = s.entrant().site_cost;
    assert!(two.profit >= one.profit - site_cost, "{} vs {}", two.profit, one.profit);
}

#[test]
fn exhaustive_is_table_maximum_and_greedy_is_bounded() {
    let s = common::fixture("placement4.scn");
    let options = PricingOptions::default();
    let exhaustive = solve_placement(&s, 2, Method::Exhaustive, &options).unwrap();
    let top = exhaustive.table.iter().map(|r| r.profit).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(exhaustive.profit, top);
    assert_eq!(exhaustive.table[best_index(&exhaustive.table).unwrap()].placement, exhaustive.placement);
    let greedy = solve_placement(&s, 2, Method::Greedy, &options).unwrap();
    assert!(greedy.profit <= exhaustive.profit);
}

#[test]
fn unreachable_candidate_changes_nothing() {
    let s = common::fixture("divergence.scn");
    let mut data = s.clone().into_data();
    // A dead-end node only reachable from the destination.
    data.nodes.push(NodeId(9));
    let mut far = data.links[0].clone();
    far.id = trilevel::model::LinkId(99);
    far.tail = NodeId(4);
    far.head = NodeId(9);
    data.links.push(far);
    let mut site = data.stations[0].clone();
    site.id = StationId(9);
    site.node = NodeId(9);
    site.status = StationStatus::Candidate;
    data.stations.push(site);
    let extended = validate_scenario(data).unwrap();
    let options = PricingOptions::default();
    let before = solve_placement(&s, 1, Method::Exhaustive, &options).unwrap();
    let after = solve_placement(&extended, 1, Method::Exhaustive, &options).unwrap();
    assert_eq!(before.profit, after.profit);
    assert_eq!(before.placement, after.placement);
}

#[test]
fn mirrored_scenario_mirrors_the_placement() {
    // Swapping the two branches of the symmetric duopoly network, with an
    // entrant candidate on each, is an automorphism; with one branch made
    // slightly slower the optimum must move with the relabelling.
    let base = std::fs::read_to_string(common::path("duopoly_symmetric.scn")).unwrap();
    let build = |slow: &str, fast: &str| {
        let text = base
            .replace("1 1 2 bpr 10 60 0.15 4", &format!("1 1 2 bpr {slow} 60 0.15 4"))
            .replace("3 1 3 bpr 10 60 0.15 4", &format!("3 1 3 bpr {fast} 60 0.15 4"))
            .replace("2 2 3 2 30 2 open\n", "2 2 3 2 30 2 open\n3 3 2 2 30 2 candidate\n4 3 3 2 30 2 candidate\n");
        trilevel::io::parse_scenario_str(&text).unwrap()
    };
    let options = PricingOptions::default();
    let a = solve_placement(&build("11", "10"), 1, Method::Exhaustive, &options).unwrap();
    let b = solve_placement(&build("10", "11"), 1, Method::Exhaustive, &options).unwrap();
    let image = |id: StationId| if id == StationId(3) { StationId(4) } else { StationId(3) };
    assert_eq!(b.placement.stations(), [image(a.placement.stations()[0])]);
    assert!((a.profit - b.profit).abs() <= 1e-6 * (1.0 + a.profit.abs()));
}
