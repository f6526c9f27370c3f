//! Exhaustive reference solvers for tiny instances. They share no code with
//! the environments: routes are simulated with plain scalar loops.

use crate::cvrptw::{EnvError, RouteState, TwMode};
use crate::instances::{DistanceMatrix, Instance, PdpInstance};
use crate::solution::{vehicle_weight, Objective, Solution};
use crate::TIME_EPS;

/// Largest customer count accepted by [`brute_force`].
pub const BRUTE_FORCE_LIMIT: usize = 8;

fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = v.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let j = v.iter().rposition(|&x| x > v[i]).unwrap();
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}

/// Simulates `0 -> customers -> end` at earliest service times and returns
/// `(distance, lateness)` when capacity, precedence and the depot due date
/// hold and, under hard windows, every window holds.
fn route_eval(
    customers: &[usize],
    inst: &Instance,
    pairs: Option<&PdpInstance>,
    dist: &DistanceMatrix,
    mode: TwMode,
) -> Option<(f64, f64)> {
    let end = inst.end_depot();
    let (mut t, mut prev, mut load, mut len, mut late) = (inst.horizon().0, 0, 0i64, 0.0, 0.0);
    for (k, &c) in customers.iter().enumerate() {
        let node = &inst.nodes[c];
        load += node.demand;
        if load > inst.capacity || load < 0 {
            return None;
        }
        if let Some(p) = pairs {
            if p.is_delivery(c) && !customers[..k].contains(&p.pickup_of(c)) {
                return None;
            }
            if p.is_pickup(c) && !customers[k..].contains(&p.delivery_of(c)) {
                return None;
            }
        }
        let arrive = t + dist.get(prev, c);
        let start = arrive.max(node.tw_open);
        if start > node.tw_close + TIME_EPS {
            if mode == TwMode::Hard {
                return None;
            }
            late += start - node.tw_close;
        }
        len += dist.get(prev, c);
        t = start + node.service;
        prev = c;
    }
    if t + dist.get(prev, end) > inst.nodes[end].tw_close + TIME_EPS {
        return None;
    }
    Some((len + dist.get(prev, end), late))
}

/// Optimal solution by enumerating every customer permutation and every way
/// of cutting it into routes. `pairs` adds pickup-delivery precedence.
/// Returns `Ok(None)` when no feasible solution exists.
pub fn brute_force(
    inst: &Instance,
    pairs: Option<&PdpInstance>,
    dist: &DistanceMatrix,
    objective: Objective,
) -> Result<Option<(f64, Solution)>, EnvError> {
    let n = inst.n_customers();
    if n > BRUTE_FORCE_LIMIT {
        return Err(EnvError::Guard(format!(
            "brute force over {n} customers exceeds the limit of {BRUTE_FORCE_LIMIT}"
        )));
    }
    let mode = match objective {
        Objective::SoftPenalized { .. } => TwMode::Soft,
        _ => TwMode::Hard,
    };
    let weight = vehicle_weight(inst, dist);
    let mut perm: Vec<usize> = inst.customers().collect();
    let mut best: Option<(f64, Solution)> = None;
    loop {
        let cuts = if n == 0 { 1 } else { 1u32 << (n - 1) };
        'split: for mask in 0..cuts {
            let mut routes = Vec::new();
            let (mut start, mut len, mut late) = (0, 0.0, 0.0);
            for k in 0..n {
                if k + 1 == n || mask & (1 << k) != 0 {
                    let Some((l, z)) = route_eval(&perm[start..=k], inst, pairs, dist, mode) else {
                        continue 'split;
                    };
                    len += l;
                    late += z;
                    let mut r = vec![0];
                    r.extend_from_slice(&perm[start..=k]);
                    r.push(inst.end_depot());
                    routes.push(r);
                    start = k + 1;
                }
            }
            let cost = match objective {
                Objective::Distance => len,
                Objective::VehiclesThenDistance => weight * routes.len() as f64 + len,
                Objective::SoftPenalized { beta } => len + beta * late,
            };
            if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                best = Some((cost, Solution { routes }));
            }
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok(best)
}

/// One-step feasibility for C-VRP-TW, recomputed from the open route alone:
/// the route is re-simulated from the depot and each customer is tried as
/// its next stop.
pub fn one_step_mask(state: &RouteState, inst: &Instance, dist: &DistanceMatrix, mode: TwMode) -> Vec<bool> {
    let end = inst.end_depot();
    let mut mask = vec![false; inst.n_nodes()];
    let done = inst.customers().all(|c| state.visited[c]);
    if done && state.active_route.is_empty() {
        return mask;
    }
    for c in inst.customers() {
        if state.visited[c] {
            continue;
        }
        let mut route = state.active_route.clone();
        route.push(c);
        mask[c] = route_eval(&route, inst, None, dist, mode).is_some();
    }
    mask[end] = !state.active_route.is_empty();
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{travel_matrix, NodeRec};

    #[test]
    fn permutations_are_complete() {
        let mut v = vec![1, 2, 3, 4];
        let mut count = 1;
        while next_permutation(&mut v) {
            count += 1;
        }
        assert_eq!(count, 24);
        assert_eq!(v, vec![4, 3, 2, 1]);
    }

    #[test]
    fn line_instance_optimum() {
        let wide = (0.0, 100.0);
        let depot = NodeRec::new(0, 0.0, 0.0, 0, wide, 0.0);
        let cs = (1..=3).map(|k| NodeRec::new(k, k as f64, 0.0, 1, wide, 0.0)).collect();
        let inst = Instance::new("line", depot, cs, 10);
        let d = travel_matrix(&inst);
        let (cost, sol) = brute_force(&inst, None, &d, Objective::Distance).unwrap().unwrap();
        assert_eq!(cost, 6.0);
        assert_eq!(sol.vehicles(), 1);
        let tight = Instance { capacity: 1, ..inst };
        let (cost, sol) = brute_force(&tight, None, &d, Objective::Distance).unwrap().unwrap();
        assert_eq!(cost, 12.0);
        assert_eq!(sol.vehicles(), 3);
    }

    #[test]
    fn infeasible_returns_none() {
        let depot = NodeRec::new(0, 0.0, 0.0, 0, (0.0, 1.0), 0.0);
        let inst = Instance::new("far", depot, vec![NodeRec::new(1, 5.0, 0.0, 1, (0.0, 100.0), 0.0)], 10);
        let d = travel_matrix(&inst);
        assert_eq!(brute_force(&inst, None, &d, Objective::Distance).unwrap(), None);
    }
}
