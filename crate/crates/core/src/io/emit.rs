//! Report layouts for solver results.

use crate::assignment::FlowState;
use crate::harness::{ComparisonReport, Metrics, SweepSeries};
use crate::placement::PlacementResult;
use crate::pricing::{NashReport, PricingResult};

use super::report::{Field, Report, Section, ToReport};

impl ToReport for FlowState {
    fn to_report(&self) -> Report {
        let mut r = Report::new("flow");
        let mut summary = Section::new("summary");
        summary
            .push("iterations", vec![self.iterations.into()])
            .push("relative_gap", vec![self.relative_gap.into()])
            .push("converged", vec![self.converged.into()]);
        r.sections.push(summary);

        let mut links = Section::new("links");
        for (i, id) in self.links.iter().enumerate() {
            links.push(
                id.to_string(),
                vec![
                    self.nonev_flow[i].into(),
                    self.ev_flow[i].into(),
                    self.total_flow(i).into(),
                ],
            );
        }
        r.sections.push(links);

        let mut stations = Section::new("stations");
        for (id, x) in &self.station_throughput {
            stations.push(id.to_string(), vec![(*x).into()]);
        }
        r.sections.push(stations);

        let mut opt_out = Section::new("opt_out");
        for o in &self.opt_out {
            opt_out.push(
                o.demand_index.to_string(),
                vec![
                    o.origin.0.into(),
                    o.destination.0.into(),
                    o.demand.into(),
                    o.volume.into(),
                ],
            );
        }
        r.sections.push(opt_out);
        r
    }
}

impl ToReport for PricingResult {
    fn to_report(&self) -> Report {
        let mut r = Report::new("pricing");
        let mut summary = Section::new("summary");
        summary
            .push("converged", vec![self.converged.into()])
            .push("rounds", vec![self.rounds.into()])
            .push("cycle_detected", vec![self.cycle_detected.into()])
            .push("infeasible", vec![self.infeasible.into()]);
        r.sections.push(summary);

        let mut prices = Section::new("prices");
        for (s, p) in self.prices.iter() {
            let demand = self.flow.station_throughput.get(&s).copied().unwrap_or(0.0);
            prices.push(s.to_string(), vec![p.into(), demand.into()]);
        }
        r.sections.push(prices);

        let mut profits = Section::new("profits");
        for (p, v) in &self.profits {
            profits.push(p.to_string(), vec![(*v).into()]);
        }
        r.sections.push(profits);
        r.extend_prefixed("flow", self.flow.to_report());
        r
    }
}

impl ToReport for NashReport {
    fn to_report(&self) -> Report {
        let mut r = Report::new("nash");
        let mut summary = Section::new("summary");
        summary
            .push("passed", vec![self.passed.into()])
            .push("max_gain", vec![self.max_gain.into()])
            .push("infeasible", vec![self.infeasible.into()])
            .push("base_converged", vec![self.base_converged.into()]);
        r.sections.push(summary);
        let mut providers = Section::new("providers");
        for d in &self.deviations {
            let opt = |v: Option<String>| Field::Text(v.unwrap_or_else(|| "-".into()));
            providers.push(
                d.provider.to_string(),
                vec![
                    d.profit.into(),
                    d.best_profit.into(),
                    d.gain.into(),
                    opt(d.station.map(|s| s.to_string())),
                    d.price.map(Field::Float).unwrap_or_else(|| "-".into()),
                    d.passed.into(),
                ],
            );
        }
        r.sections.push(providers);
        r
    }
}

impl ToReport for PlacementResult {
    fn to_report(&self) -> Report {
        let mut r = Report::new("placement");
        let mut summary = Section::new("summary");
        summary
            .push("method", vec![self.method.to_string().into()])
            .push("placement", vec![self.placement.to_string().into()])
            .push("profit", vec![self.profit.into()])
            .push("converged", vec![self.converged.into()])
            .push("all_failed", vec![self.all_failed.into()]);
        r.sections.push(summary);

        let mut table = Section::new("table");
        for row in &self.table {
            table.push(
                row.placement.to_string(),
                vec![row.profit.into(), row.converged.into(), row.cycle_detected.into()],
            );
        }
        r.sections.push(table);
        r.extend_prefixed("pricing", self.pricing.to_report());
        r
    }
}

impl ToReport for ComparisonReport {
    fn to_report(&self) -> Report {
        let d = &self.deltas;
        let mut r = Report::new("comparison");
        let mut summary = Section::new("summary");
        summary
            .push("k", vec![self.k.into()])
            .push("method", vec![self.endogenous.method.to_string().into()])
            .push("same_placement", vec![d.same_placement.into()])
            .push("endogenous_placement", vec![self.endogenous.placement.to_string().into()])
            .push("exogenous_placement", vec![self.exogenous.placement.to_string().into()])
            .push("converged", vec![self.converged().into()]);
        r.sections.push(summary);

        let mut deltas = Section::new("deltas");
        deltas
            .push("profit_abs", vec![d.profit_abs.into()])
            .push("profit_rel", vec![d.profit_rel.into()])
            .push("max_price_diff", vec![d.max_price_diff.into()])
            .push("mean_ev_cost_diff", vec![d.mean_ev_cost_diff.into()]);
        r.sections.push(deltas);

        let mut modes = Section::new("modes");
        for (i, name) in ["endogenous", "exogenous"].into_iter().enumerate() {
            let profit = if i == 0 { self.endogenous.profit } else { self.exogenous.profit };
            modes.push(
                name,
                vec![
                    profit.into(),
                    d.ev_cost[i].into(),
                    d.congestion[i].mean.into(),
                    d.congestion[i].max.into(),
                ],
            );
        }
        r.sections.push(modes);
        r.extend_prefixed("endogenous", self.endogenous.to_report());
        r.extend_prefixed("exogenous", self.exogenous.to_report());
        r
    }
}

impl ToReport for SweepSeries {
    fn to_report(&self) -> Report {
        let mut r = Report::new("sweep");
        let mut summary = Section::new("summary");
        summary
            .push("parameter", vec![self.parameter.to_string().into()])
            .push("points", vec![self.points.len().into()])
            .push("converged", vec![self.converged().into()]);
        r.sections.push(summary);

        let mut points = Section::new("points");
        for (i, p) in self.points.iter().enumerate() {
            let c = &p.report;
            points.push(
                i.to_string(),
                vec![
                    p.value.into(),
                    c.deltas.same_placement.into(),
                    c.endogenous.profit.into(),
                    c.exogenous.profit.into(),
                    c.deltas.profit_rel.into(),
                ],
            );
        }
        r.sections.push(points);
        for (i, p) in self.points.iter().enumerate() {
            r.extend_prefixed(&format!("point{i}"), p.report.to_report());
        }
        r
    }
}

impl ToReport for Metrics {
    fn to_report(&self) -> Report {
        let mut r = Report::new("metrics");
        let mut profits = Section::new("profits");
        for (p, v) in &self.profits {
            let role = if *p == self.entrant { "entrant" } else { "incumbent" };
            profits.push(p.to_string(), vec![role.into(), (*v).into()]);
        }
        r.sections.push(profits);

        let mut stations = Section::new("stations");
        for s in &self.stations {
            stations.push(
                s.station.to_string(),
                vec![s.provider.0.into(), s.price.into(), s.demand.into()],
            );
        }
        r.sections.push(stations);

        let mut opt_out = Section::new("opt_out");
        for (i, v) in &self.opt_out {
            opt_out.push(i.to_string(), vec![(*v).into()]);
        }
        r.sections.push(opt_out);

        let mut totals = Section::new("totals");
        totals
            .push("vc_mean", vec![self.congestion.mean.into()])
            .push("vc_max", vec![self.congestion.max.into()])
            .push("ev_travel_cost", vec![self.ev_travel_cost.into()])
            .push("nonev_travel_cost", vec![self.nonev_travel_cost.into()]);
        r.sections.push(totals);
        r
    }
}
