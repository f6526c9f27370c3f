use super::PdpState;
use crate::cvrptw::EnvError;
use crate::instances::{DistanceMatrix, PdpInstance};
use crate::TIME_EPS;

/// Largest number of pending deliveries (including the new one) the
/// exhaustive search accepts.
pub const EXACT_LIMIT: usize = 9;

/// Exhaustive reference for [`super::check_insertion`]: true iff some order of
/// `γ ∪ {u + N}`, served after appending `u` to the route, meets every window
/// and returns to the depot in time.
pub fn exact_feasible(state: &PdpState, u: usize, inst: &PdpInstance, dist: &DistanceMatrix) -> Result<bool, EnvError> {
    if state.gamma.len() + 1 > EXACT_LIMIT {
        return Err(EnvError::Guard(format!(
            "exact search over {} deliveries exceeds the limit of {EXACT_LIMIT}; use a smaller instance",
            state.gamma.len() + 1
        )));
    }
    let nodes = &inst.nodes;
    let cur = state.current();
    let dep = state.est[cur] + nodes[cur].service;
    let t_u = (dep + dist.get(cur, u)).max(nodes[u].tw_open);
    if t_u > nodes[u].tw_close + TIME_EPS {
        return Ok(false);
    }
    let mut pending = state.gamma.clone();
    pending.push(inst.delivery_of(u));
    let full = (1u32 << pending.len()) - 1;
    Ok(search(inst, dist, &pending, 0, u, t_u + nodes[u].service, full))
}

fn search(
    inst: &PdpInstance,
    dist: &DistanceMatrix,
    pending: &[usize],
    used: u32,
    at: usize,
    dep: f64,
    full: u32,
) -> bool {
    if used == full {
        let end = inst.end_depot();
        return dep + dist.get(at, end) <= inst.nodes[end].tw_close + TIME_EPS;
    }
    for (k, &g) in pending.iter().enumerate() {
        if used & (1 << k) != 0 {
            continue;
        }
        let node = &inst.nodes[g];
        let t = (dep + dist.get(at, g)).max(node.tw_open);
        if t > node.tw_close + TIME_EPS {
            continue;
        }
        if search(inst, dist, pending, used | (1 << k), g, t + node.service, full) {
            return true;
        }
    }
    false
}
