//! Complete solutions: costing, the shared feasibility checker, and the
//! plain-text solution format.

use std::fmt::{self, Write as _};

use crate::instances::{DistanceMatrix, Instance, Problem};
use crate::TIME_EPS;

/// A set of routes, each written with both depot copies: `[0, .., end]`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Solution {
    pub routes: Vec<Vec<usize>>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SolutionError {
    #[error("solution is incomplete: customer {0} not visited")]
    Incomplete(usize),
    #[error("malformed solution text at line {line}: {message}")]
    Format { line: usize, message: String },
}

/// What a rollout is scored by.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    Distance,
    /// `M * vehicles + distance`, with `M` large enough to order by vehicles first.
    VehiclesThenDistance,
    /// Distance plus `beta` times the total lateness of an at-earliest schedule.
    SoftPenalized {
        beta: f64,
    },
}

/// Default weight of the soft time-window penalty.
pub const DEFAULT_SOFT_BETA: f64 = 10.0;

impl Solution {
    pub fn vehicles(&self) -> usize {
        self.routes.len()
    }

    pub fn distance(&self, dist: &DistanceMatrix) -> f64 {
        self.routes.iter().map(|r| r.windows(2).map(|e| dist.get(e[0], e[1])).sum::<f64>()).sum()
    }
}

/// At-earliest timing of one route.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteTiming {
    /// Service start at each position of the route.
    pub starts: Vec<f64>,
    /// Sum over nodes of `max(0, start - due)`.
    pub lateness: f64,
}

/// Serves every node of `route` at `max(arrival, ready)`, starting from the
/// depot ready time. Late service is recorded, not rejected.
pub fn simulate_route(route: &[usize], inst: &Instance, dist: &DistanceMatrix) -> RouteTiming {
    let mut starts = Vec::with_capacity(route.len());
    let mut lateness = 0.0;
    let mut prev: Option<(usize, f64)> = None;
    for &i in route {
        let node = &inst.nodes[i];
        let arrival = match prev {
            None => node.tw_open,
            Some((p, dep)) => dep + dist.get(p, i),
        };
        let start = arrival.max(node.tw_open);
        lateness += (start - node.tw_close).max(0.0);
        starts.push(start);
        prev = Some((i, start + node.service));
    }
    RouteTiming { starts, lateness }
}

/// The big constant used by [`Objective::VehiclesThenDistance`]:
/// 100 times the instance diameter times the customer count.
pub fn vehicle_weight(inst: &Instance, dist: &DistanceMatrix) -> f64 {
    100.0 * dist.max().max(1.0) * inst.n_customers().max(1) as f64
}

fn check_complete(sol: &Solution, inst: &Instance) -> Result<(), SolutionError> {
    let mut seen = vec![false; inst.n_nodes()];
    for r in &sol.routes {
        for &i in r {
            if i < seen.len() {
                seen[i] = true;
            }
        }
    }
    match inst.customers().find(|&c| !seen[c]) {
        Some(c) => Err(SolutionError::Incomplete(c)),
        None => Ok(()),
    }
}

pub fn solution_cost<P: Problem + ?Sized>(
    sol: &Solution,
    problem: &P,
    dist: &DistanceMatrix,
    objective: Objective,
) -> Result<f64, SolutionError> {
    let inst = problem.base();
    check_complete(sol, inst)?;
    let distance = sol.distance(dist);
    Ok(match objective {
        Objective::Distance => distance,
        Objective::VehiclesThenDistance => vehicle_weight(inst, dist) * sol.vehicles() as f64 + distance,
        Objective::SoftPenalized { beta } => {
            let late: f64 = sol.routes.iter().map(|r| simulate_route(r, inst, dist).lateness).sum();
            distance + beta * late
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolutionViolation {
    Missing(usize),
    Duplicate(usize),
    UnknownNode(usize),
    EmptyRoute { route: usize },
    BadStart { route: usize },
    BadEnd { route: usize },
    InteriorDepot { route: usize },
    Capacity { route: usize, load: i64 },
    TimeWindow { node: usize, start: f64, due: f64 },
    Precedence { pickup: usize, delivery: usize },
}

impl fmt::Display for SolutionViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Checks partition, depot placement, capacity along each route, hard time
/// windows under at-earliest scheduling, and, for PDPTW, that each pickup
/// precedes its delivery on the same route.
pub fn validate_solution<P: Problem + ?Sized>(
    sol: &Solution,
    problem: &P,
    dist: &DistanceMatrix,
) -> Vec<SolutionViolation> {
    use SolutionViolation as V;
    let inst = problem.base();
    let end = inst.end_depot();
    let n = inst.n_nodes();
    let mut out = Vec::new();
    let mut count = vec![0usize; n];
    for (k, r) in sol.routes.iter().enumerate() {
        if r.len() < 3 {
            out.push(V::EmptyRoute { route: k });
        }
        if r.first() != Some(&0) {
            out.push(V::BadStart { route: k });
        }
        if r.last() != Some(&end) {
            out.push(V::BadEnd { route: k });
        }
        let inner = if r.len() >= 2 { &r[1..r.len() - 1] } else { &r[..0] };
        let mut load = 0i64;
        let mut reported_load = false;
        for &i in inner {
            if i >= n {
                out.push(V::UnknownNode(i));
                continue;
            }
            if inst.is_depot(i) {
                out.push(V::InteriorDepot { route: k });
                continue;
            }
            count[i] += 1;
            load += inst.nodes[i].demand;
            if !reported_load && (load > inst.capacity || load < 0) {
                out.push(V::Capacity { route: k, load });
                reported_load = true;
            }
        }
        if r.iter().any(|&i| i >= n) {
            continue;
        }
        let timing = simulate_route(r, inst, dist);
        for (pos, &i) in r.iter().enumerate() {
            let due = inst.nodes[i].tw_close;
            if timing.starts[pos] > due + TIME_EPS {
                out.push(V::TimeWindow { node: i, start: timing.starts[pos], due });
            }
        }
        if let Some(nr) = problem.requests() {
            for (pos, &i) in inner.iter().enumerate() {
                if (1..=nr).contains(&i) && !inner[pos + 1..].contains(&(i + nr)) {
                    out.push(V::Precedence { pickup: i, delivery: i + nr });
                }
            }
        }
    }
    for c in inst.customers() {
        match count[c] {
            0 => out.push(V::Missing(c)),
            1 => {}
            _ => out.push(V::Duplicate(c)),
        }
    }
    out
}

/// Text form: a header line `instance <id> distance <d> vehicles <k>` followed
/// by one route per line as space-separated node indices.
pub fn write_solution(sol: &Solution, id: &str, dist: &DistanceMatrix) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "instance {id} distance {} vehicles {}", sol.distance(dist), sol.vehicles());
    for r in &sol.routes {
        let line: Vec<String> = r.iter().map(|i| i.to_string()).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    s
}

/// Parses [`write_solution`] output, returning the instance id and routes.
pub fn parse_solution(text: &str) -> Result<(String, Solution), SolutionError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(SolutionError::Format { line: 1, message: "empty".into() })?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 6 || toks[0] != "instance" || toks[2] != "distance" || toks[4] != "vehicles" {
        return Err(SolutionError::Format { line: 1, message: "bad header".into() });
    }
    let mut routes = Vec::new();
    for (k, line) in lines {
        let r: Result<Vec<usize>, _> = line.split_whitespace().map(str::parse).collect();
        routes.push(r.map_err(|e| SolutionError::Format { line: k + 1, message: format!("{e}") })?);
    }
    Ok((toks[1].to_string(), Solution { routes }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{generate_pdptw, travel_matrix, GenProfile, NodeRec};

    fn line_instance() -> Instance {
        let depot = NodeRec::new(0, 0.0, 0.0, 0, (0.0, 100.0), 0.0);
        let cs = (1..=3).map(|k| NodeRec::new(k, k as f64, 0.0, 2, (0.0, 100.0), 1.0)).collect();
        Instance::new("line", depot, cs, 5)
    }

    #[test]
    fn single_route_cost() {
        let inst = line_instance();
        let d = travel_matrix(&inst);
        let mut sol = Solution { routes: vec![vec![0, 2, 4]] };
        assert!(matches!(solution_cost(&sol, &inst, &d, Objective::Distance), Err(SolutionError::Incomplete(1))));
        sol.routes.push(vec![0, 1, 3, 4]);
        let cost = solution_cost(&sol, &inst, &d, Objective::Distance).unwrap();
        assert_eq!(cost, 4.0 + 6.0);
        let m = vehicle_weight(&inst, &d);
        let vtd = solution_cost(&sol, &inst, &d, Objective::VehiclesThenDistance).unwrap();
        assert_eq!(vtd, 2.0 * m + 10.0);
    }

    #[test]
    fn capacity_and_window_violations() {
        let mut inst = line_instance();
        inst.nodes[3].tw_close = 2.0;
        let d = travel_matrix(&inst);
        let sol = Solution { routes: vec![vec![0, 1, 2, 3, 4]] };
        let v = validate_solution(&sol, &inst, &d);
        assert!(v.contains(&SolutionViolation::Capacity { route: 0, load: 6 }));
        // start at 3: arrival 1, service 1, arrive 2 -> start 2, service, arrive 4 at node 3.
        assert!(v.iter().any(|x| matches!(x, SolutionViolation::TimeWindow { node: 3, .. })));
    }

    #[test]
    fn partition_checks() {
        let inst = line_instance();
        let d = travel_matrix(&inst);
        let sol = Solution { routes: vec![vec![0, 1, 1, 4], vec![0, 4], vec![1, 2, 0]] };
        let v = validate_solution(&sol, &inst, &d);
        assert!(v.contains(&SolutionViolation::Duplicate(1)));
        assert!(v.contains(&SolutionViolation::Missing(3)));
        assert!(v.contains(&SolutionViolation::EmptyRoute { route: 1 }));
        assert!(v.contains(&SolutionViolation::BadStart { route: 2 }));
        assert!(v.contains(&SolutionViolation::BadEnd { route: 2 }));
    }

    #[test]
    fn precedence_swap_detected() {
        let pdp = generate_pdptw(3, 1, &GenProfile::pdptw()).unwrap();
        let d = travel_matrix(&pdp);
        let good = Solution { routes: vec![vec![0, 1, 2, 3]] };
        assert_eq!(validate_solution(&good, &pdp, &d), vec![]);
        let bad = Solution { routes: vec![vec![0, 2, 1, 3]] };
        let v = validate_solution(&bad, &pdp, &d);
        assert!(v.contains(&SolutionViolation::Precedence { pickup: 1, delivery: 2 }));
    }

    #[test]
    fn soft_penalty_counts_lateness() {
        let mut inst = line_instance();
        inst.nodes[1].tw_close = 0.5;
        let d = travel_matrix(&inst);
        let sol = Solution { routes: vec![vec![0, 1, 2, 3, 4]] };
        let c = solution_cost(&sol, &inst, &d, Objective::SoftPenalized { beta: 10.0 }).unwrap();
        assert!((c - (6.0 + 10.0 * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn text_round_trip() {
        let inst = line_instance();
        let d = travel_matrix(&inst);
        let sol = Solution { routes: vec![vec![0, 1, 4], vec![0, 3, 2, 4]] };
        let text = write_solution(&sol, "line", &d);
        assert!(text.starts_with("instance line distance "));
        let (id, back) = parse_solution(&text).unwrap();
        assert_eq!(id, "line");
        assert_eq!(back, sol);
        assert!(parse_solution("nonsense\n0 1 2").is_err());
    }
}
