//! Random search for a small scenario on which the entrant's optimal
//! placement depends on whether non-EV traffic re-routes.
//!
//! cargo run --release --example divergence_search -- [seed] [tries] [min_lead]

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use trilevel::assignment::Mode;
use trilevel::io::parse_scenario_str;
use trilevel::placement::{solve_placement, Method};
use trilevel::pricing::PricingOptions;

fn instance(rng: &mut StdRng) -> String {
    let mut links = String::new();
    let mut id = 0;
    let mut link = |rng: &mut StdRng, tail: u32, head: u32| {
        id += 1;
        let t0 = rng.random_range(2.0..10.0f64);
        let cap = rng.random_range(20.0..120.0f64);
        links.push_str(&format!("{id} {tail} {head} bpr {t0:.2} {cap:.1} 0.15 4\n"));
    };
    for (t, h) in [(1, 2), (2, 4), (1, 3), (3, 4)] {
        link(rng, t, h);
    }
    if rng.random_bool(0.5) {
        link(rng, 2, 3);
    }
    let second_origin = rng.random_bool(0.5);
    if second_origin {
        link(rng, 5, 2);
        link(rng, 5, 3);
    }
    let nodes = if second_origin { "1\n2\n3\n4\n5\n" } else { "1\n2\n3\n4\n" };

    let mut stations = String::new();
    for (sid, node) in [(1, 2), (2, 3)] {
        let d0 = rng.random_range(1.0..5.0f64);
        let kappa = rng.random_range(10.0..60.0f64);
        stations.push_str(&format!("{sid} 2 {node} {d0:.2} {kappa:.1} 2 candidate\n"));
    }
    if rng.random_bool(0.5) {
        let node = rng.random_range(2..=3);
        stations.push_str(&format!("3 1 {node} 2 30 2 open\n"));
    }

    let mut demand = format!("ev 1 4 {:.1}\n", rng.random_range(10.0..60.0f64));
    demand.push_str(&format!("nonev 1 4 {:.1}\n", rng.random_range(0.0..150.0f64)));
    if second_origin {
        demand.push_str(&format!("nonev 5 4 {:.1}\n", rng.random_range(0.0..150.0f64)));
    }

    format!(
        "version 1\n\n[params]\nvot {:.2}\nenergy {:.1}\noutside_cost {:.1}\n\n[nodes]\n{nodes}\n[links]\n{links}\n[providers]\n1 incumbent 0.1 0\n2 entrant 0.1 {:.1}\n\n[stations]\n{stations}\n[demand]\n{demand}\n[pricing]\np_min 0.1\np_max 1.5\ngrid 15\n",
        rng.random_range(0.2..1.0f64),
        rng.random_range(10.0..40.0f64),
        rng.random_range(10.0..80.0f64),
        rng.random_range(0.0..20.0f64),
    )
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(1u64);
    let tries = args.get(2).and_then(|a| a.parse().ok()).unwrap_or(200usize);
    let min_lead = args.get(3).and_then(|a| a.parse().ok()).unwrap_or(0.02f64);
    let mut rng = StdRng::seed_from_u64(seed);
    for attempt in 0..tries {
        let text = instance(&mut rng);
        let Ok(scenario) = parse_scenario_str(&text) else {
            continue;
        };
        let mut options = PricingOptions::default();
        let endo = solve_placement(&scenario, 1, Method::Exhaustive, &options).unwrap();
        options.assignment.mode = Mode::Exogenous;
        let exo = solve_placement(&scenario, 1, Method::Exhaustive, &options).unwrap();
        if !(endo.converged && exo.converged) || endo.profit.abs() < 1e-6 {
            continue;
        }
        let rel = (exo.profit - endo.profit) / endo.profit.abs();
        // Relative lead of the winner over the runner-up in each mode.
        let margin = |r: &trilevel::placement::PlacementResult| {
            let second = r
                .table
                .iter()
                .filter(|row| row.placement != r.placement)
                .map(|row| row.profit)
                .fold(f64::NEG_INFINITY, f64::max);
            (r.profit - second) / r.profit.abs().max(1.0)
        };
        let lead = margin(&endo).min(margin(&exo));
        if endo.placement != exo.placement && rel.abs() >= 0.05 && lead >= min_lead {
            println!("# attempt {attempt}: endogenous {} ({:.3}) exogenous {} ({:.3}) rel {rel:.3} lead {lead:.3}",
                endo.placement, endo.profit, exo.placement, exo.profit);
            println!("{text}");
            return;
        }
        if attempt % 20 == 0 {
            eprintln!("attempt {attempt}");
        }
    }
    eprintln!("no divergence found");
}
