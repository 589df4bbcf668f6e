//! Frank–Wolfe on the Beckmann potential with exact line search.

use super::network::{AugmentedNetwork, Flows, Loads};
use super::{AssignmentError, IterationRecord, SolveOptions};

pub(crate) struct Solution {
    pub flows: Flows,
    pub iterations: usize,
    pub relative_gap: f64,
    pub converged: bool,
    pub trace: Vec<IterationRecord>,
}

/// `1 - shortest / current`, clamped at zero; zero when nothing travels.
pub(crate) fn gap_from_totals(current: f64, shortest: f64) -> f64 {
    if current <= 0.0 {
        0.0
    } else {
        (1.0 - shortest / current).max(0.0)
    }
}

/// Largest step in `[0, 1]` (to `tolerance`) at which the potential still
/// decreases along `x -> y`. Returning the lower bracket end keeps every
/// accepted step inside the region where the potential is non-increasing.
pub(crate) fn line_search(net: &AugmentedNetwork, x: &Loads, y: &Loads, tolerance: f64) -> f64 {
    if net.directional_derivative(x, y, 0.0) >= 0.0 {
        return 0.0;
    }
    if net.directional_derivative(x, y, 1.0) <= 0.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if net.directional_derivative(x, y, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn curvature(slopes: &(Vec<f64>, Vec<f64>), u: &Loads, v: &Loads) -> f64 {
    let links: f64 = (0..u.link.len()).map(|i| slopes.0[i] * u.link[i] * v.link[i]).sum();
    let chargers: f64 = (0..u.charger.len())
        .map(|i| slopes.1[i] * u.charger[i] * v.charger[i])
        .sum();
    links + chargers
}

/// Search points of the last one or two iterations, with the step taken
/// towards the most recent one.
struct History {
    last: Flows,
    before_last: Option<Flows>,
    last_step: f64,
}

/// Conjugate search point: the all-or-nothing `vertex` mixed with earlier
/// search points so that the new direction is conjugate (with respect to
/// the diagonal cost Jacobian) to the previous one or two directions.
fn conjugate_point(
    net: &AugmentedNetwork,
    loads: &Loads,
    vertex: &Flows,
    history: &History,
) -> Option<Flows> {
    let slopes = net.cost_slopes(loads);
    let to_vertex = vertex.loads().minus(loads);
    let last = history.last.loads();
    let d1 = last.minus(loads);
    let d1_curv = curvature(&slopes, &d1, &d1);
    if !(d1_curv > 0.0) {
        return None;
    }
    let mut mu = 0.0;
    if let Some(before) = &history.before_last {
        let tau = history.last_step;
        let before = before.loads();
        let d2 = Loads {
            link: (0..loads.link.len())
                .map(|i| tau * last.link[i] + (1.0 - tau) * before.link[i] - loads.link[i])
                .collect(),
            charger: (0..loads.charger.len())
                .map(|i| tau * last.charger[i] + (1.0 - tau) * before.charger[i] - loads.charger[i])
                .collect(),
            bypass: Vec::new(),
        };
        let denominator = curvature(&slopes, &d2, &before.minus(&last));
        if denominator != 0.0 {
            mu = (-curvature(&slopes, &d2, &to_vertex) / denominator).max(0.0);
        }
    }
    let tau = history.last_step;
    let mut nu = -curvature(&slopes, &d1, &to_vertex) / d1_curv;
    if history.before_last.is_some() {
        nu += mu * tau / (1.0 - tau);
    }
    let nu = nu.max(0.0);
    if !(mu.is_finite() && nu.is_finite()) || mu + nu == 0.0 {
        return None;
    }
    let vertex_weight = 1.0 / (1.0 + mu + nu);
    let mixed = Flows::blend(&history.last, nu / (nu + mu), history.before_last.as_ref().unwrap_or(&history.last));
    Some(Flows::blend(vertex, vertex_weight, &mixed))
}

/// Bi-conjugate Frank–Wolfe: each iteration solves an all-or-nothing
/// subproblem and mixes its vertex with the previous two search points.
/// Every step is an exact line search, so the Beckmann potential never
/// increases; when the mixed direction does not descend the plain vertex
/// is used instead.
pub(crate) fn solve(net: &AugmentedNetwork, options: &SolveOptions) -> Result<Solution, AssignmentError> {
    let zero = Flows::zero(net);
    let mut flows = net.all_or_nothing(&net.costs(&zero.loads()))?.flows;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut history: Option<History> = None;

    loop {
        let loads = flows.loads();
        let costs = net.costs(&loads);
        let vertex = net.all_or_nothing(&costs)?;
        let gap = gap_from_totals(net.total_cost(&loads, &costs), vertex.shortest_total);
        if options.record_trace {
            trace.push(IterationRecord {
                iteration: iterations,
                relative_gap: gap,
                objective: net.objective(&loads),
            });
        }
        let finished = gap <= options.gap_tolerance;
        if finished || iterations >= options.max_iterations {
            return Ok(Solution {
                flows,
                iterations,
                relative_gap: gap,
                converged: finished,
                trace,
            });
        }

        let vertex = vertex.flows;
        let target = history
            .as_ref()
            .and_then(|h| conjugate_point(net, &loads, &vertex, h));
        let mut step = 0.0;
        if let Some(point) = &target {
            step = line_search(net, &loads, &point.loads(), options.line_search_tolerance);
        }
        let (point, conjugate) = match target {
            Some(point) if step > 0.0 => (point, true),
            _ => {
                step = line_search(net, &loads, &vertex.loads(), options.line_search_tolerance);
                (vertex, false)
            }
        };
        if step == 0.0 {
            // No descent left at working precision.
            return Ok(Solution {
                flows,
                iterations,
                relative_gap: gap,
                converged: false,
                trace,
            });
        }
        flows.move_toward(&point, step);
        history = if step < 1.0 {
            let before_last = match history {
                Some(h) if conjugate => Some(h.last),
                _ => None,
            };
            Some(History {
                last: point,
                before_last,
                last_step: step,
            })
        } else {
            None
        };
        iterations += 1;
    }
}
