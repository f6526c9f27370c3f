use super::{PdpState, SlackTable};
use crate::instances::{DistanceMatrix, PdpInstance};
use crate::TIME_EPS;

/// Outcome of testing pickup `u` against the prospective delivery sequence.
///
/// Position `x` means the delivery `u + N` is placed after the first `x`
/// elements of `γ` (so `x = 0` puts it directly after `u`).
#[derive(Debug, Clone, PartialEq)]
pub struct InsertionVerdict {
    pub pickup: usize,
    pub feasible_positions: Vec<usize>,
    pub best_position: Option<usize>,
    /// Detour length of placing the delivery at `best_position`.
    pub added_cost: f64,
    /// Earliest service time of `u` if appended to the route.
    pub pickup_start: f64,
}

impl InsertionVerdict {
    fn rejected(pickup: usize, pickup_start: f64) -> Self {
        InsertionVerdict {
            pickup,
            feasible_positions: Vec::new(),
            best_position: None,
            added_cost: f64::INFINITY,
            pickup_start,
        }
    }

    pub fn is_feasible(&self) -> bool {
        !self.feasible_positions.is_empty()
    }
}

/// CSV header matching [`verdict_csv_row`].
pub const VERDICT_CSV_HEADER: &str = "pickup,positions,best_x,added_cost";

/// One CSV row; `positions` is a 0/1 string over `x = 0..=w`.
pub fn verdict_csv_row(v: &InsertionVerdict, gamma_len: usize) -> String {
    let bits: String = (0..=gamma_len).map(|x| if v.feasible_positions.contains(&x) { '1' } else { '0' }).collect();
    let best = v.best_position.map(|b| b.to_string()).unwrap_or_default();
    let cost = if v.is_feasible() { format!("{}", v.added_cost) } else { String::new() };
    format!("{},{bits},{best},{cost}", v.pickup)
}

pub(crate) fn check_insertion_counted(
    state: &PdpState,
    table: &SlackTable,
    u: usize,
    inst: &PdpInstance,
    dist: &DistanceMatrix,
    ops: &mut u64,
) -> InsertionVerdict {
    let nodes = &inst.nodes;
    let cur = table.delta[0];
    let dep0 = table.t[0] + nodes[cur].service;
    let pu = &nodes[u];
    let t_u = (dep0 + dist.get(cur, u)).max(pu.tw_open);
    *ops += 1;
    if !state.unvisited[u] || state.load_used + pu.demand > inst.capacity || t_u > pu.tw_close + TIME_EPS {
        return InsertionVerdict::rejected(u, t_u);
    }
    let dep_u = t_u + pu.service;
    let first = table.delta[1];
    let shift = dep_u + dist.get(u, first) - table.t[1];
    *ops += 1;
    if shift > table.f(1) + TIME_EPS {
        return InsertionVerdict::rejected(u, t_u);
    }

    let del = inst.delivery_of(u);
    let pd = &nodes[del];
    let w = table.len() - 2;
    let mut feasible = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for x in 0..=w {
        *ops += 1;
        // Node after which the delivery is placed, with its (shifted) departure.
        let (prev, prev_dep) = if x == 0 {
            (u, dep_u)
        } else {
            let shifted = table.t[x] + (shift - table.w(1, x)).max(0.0);
            (table.delta[x], shifted + nodes[table.delta[x]].service)
        };
        let t_del = (prev_dep + dist.get(prev, del)).max(pd.tw_open);
        if t_del > pd.tw_close + TIME_EPS {
            continue;
        }
        let next = table.delta[x + 1];
        let next_shift = t_del + pd.service + dist.get(del, next) - table.t[x + 1];
        if next_shift > table.f(x + 1) + TIME_EPS {
            continue;
        }
        feasible.push(x);
        let cost = dist.get(prev, del) + dist.get(del, next) - dist.get(prev, next);
        if best.is_none_or(|(_, c)| cost < c) {
            best = Some((x, cost));
        }
    }
    match best {
        Some((x, c)) => InsertionVerdict {
            pickup: u,
            feasible_positions: feasible,
            best_position: Some(x),
            added_cost: c,
            pickup_start: t_u,
        },
        None => InsertionVerdict::rejected(u, t_u),
    }
}

/// Tests whether pickup `u` can be appended to the route with its delivery
/// inserted somewhere in `γ`, keeping the order of `γ` fixed. Each candidate
/// position costs `O(1)` given the precomputed table.
pub fn check_insertion(
    state: &PdpState,
    table: &SlackTable,
    u: usize,
    inst: &PdpInstance,
    dist: &DistanceMatrix,
) -> InsertionVerdict {
    check_insertion_counted(state, table, u, inst, dist, &mut 0)
}

/// Tests whether `γ[k]` (0-based, `k ≥ 1`) can be served next, with the rest
/// of `γ` kept in order. Delays on `γ[..k]` are bounded by a prefix minimum of
/// the slack terms since `γ[k]` no longer sits between them and the tail.
pub fn can_promote(table: &SlackTable, k: usize, inst: &PdpInstance, dist: &DistanceMatrix) -> bool {
    let nodes = &inst.nodes;
    // Δ position of γ[k].
    let pos = k + 1;
    if pos < 2 || pos + 1 >= table.len() {
        return pos == 1;
    }
    let cur = table.delta[0];
    let g = table.delta[pos];
    let dep0 = table.t[0] + nodes[cur].service;
    let t_g = (dep0 + dist.get(cur, g)).max(nodes[g].tw_open);
    if t_g > nodes[g].tw_close + TIME_EPS {
        return false;
    }
    let first = table.delta[1];
    let shift = t_g + nodes[g].service + dist.get(g, first) - table.t[1];
    let mut bound = f64::INFINITY;
    for j in 1..pos {
        bound = bound.min(table.w(1, j) + nodes[table.delta[j]].tw_close - table.t[j]);
    }
    if shift > bound + TIME_EPS {
        return false;
    }
    let before = table.delta[pos - 1];
    let shifted = table.t[pos - 1] + (shift - table.w(1, pos - 1)).max(0.0);
    let after = table.delta[pos + 1];
    let next_shift = shifted + nodes[before].service + dist.get(before, after) - table.t[pos + 1];
    next_shift <= table.f(pos + 1) + TIME_EPS
}
