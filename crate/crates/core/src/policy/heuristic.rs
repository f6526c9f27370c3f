use crate::cvrptw::EnvError;
use crate::env::RoutingEnv;
use crate::solution::Solution;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeuristicRule {
    /// Closest feasible node to the current one.
    NearestFeasible,
    /// Smallest increase of the planned route length.
    CheapestInsertion,
}

/// Non-learned construction baseline. Customers are preferred over closing
/// the route; the end depot is taken only when nothing else is feasible.
/// Ties go to the lowest node index.
pub fn greedy_heuristic<E: RoutingEnv>(env: &E, rule: HeuristicRule) -> Result<Solution, EnvError> {
    let end = env.instance().end_depot();
    let mut s = env.initial_state();
    while !env.is_terminal(&s) {
        let mask = env.mask(&s);
        let last = env.context(&s).last;
        let mut best: Option<(usize, f64)> = None;
        for a in (0..end).filter(|&a| mask[a]) {
            let score = match rule {
                HeuristicRule::NearestFeasible => env.dist().get(last, a),
                HeuristicRule::CheapestInsertion => env.insertion_cost(&s, a),
            };
            if best.is_none_or(|(_, b)| score < b) {
                best = Some((a, score));
            }
        }
        let action = match best {
            Some((a, _)) => a,
            None if mask[end] => end,
            None => return Err(EnvError::Guard("heuristic reached a state with no feasible action".into())),
        };
        s = env.step(&s, action)?;
    }
    Ok(env.solution(&s))
}
