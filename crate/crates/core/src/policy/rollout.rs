use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{featurize, AttentionModel, Encoded, PolicyError};
use crate::cvrptw::EnvError;
use crate::derive_seed;
use crate::env::RoutingEnv;
use crate::numeric::{Graph, Tensor, Var};
use crate::solution::Solution;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    /// Highest probability; ties go to the lowest node index.
    Greedy,
    /// Draw from the policy; row `r` of a batch uses `derive_seed(seed, [r])`.
    Sample(u64),
}

/// How actions are chosen during a batched rollout.
#[derive(Debug, Clone, Copy)]
pub enum Chooser<'a> {
    Decode(DecodeMode),
    /// Re-take recorded actions (forced starts included) to rebuild log-probs.
    Replay(&'a [Vec<usize>]),
}

/// Actions of one rollout and the probability of each decoded choice.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub actions: Vec<usize>,
    pub step_probs: Vec<f64>,
}

impl Trace {
    pub fn log_prob(&self) -> f64 {
        self.step_probs.iter().map(|p| p.ln()).sum()
    }
}

#[derive(Debug)]
pub struct BatchRollout<S> {
    pub states: Vec<S>,
    pub traces: Vec<Trace>,
    /// `rows x 1` summed log-probabilities, differentiable.
    pub log_probs: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub solution: Solution,
    pub trace: Trace,
    pub log_prob: f64,
}

fn pick(probs: &[f64], mode: DecodeMode, rng: &mut Option<ChaCha8Rng>) -> usize {
    match mode {
        DecodeMode::Greedy => {
            let mut best = 0;
            for (i, &p) in probs.iter().enumerate() {
                if p > probs[best] {
                    best = i;
                }
            }
            best
        }
        DecodeMode::Sample(_) => {
            let u: f64 = rng.as_mut().expect("sampling rng").gen();
            let mut acc = 0.0;
            let mut last = 0;
            for (i, &p) in probs.iter().enumerate() {
                if p > 0.0 {
                    acc += p;
                    last = i;
                    if u < acc {
                        return i;
                    }
                }
            }
            last
        }
    }
}

impl AttentionModel {
    /// Runs one rollout per entry of `starts` on the same encoded instance.
    /// A `Some` start forces the first action; it is not part of the
    /// log-probability.
    pub fn rollout_batch<E: RoutingEnv>(
        &self,
        g: &mut Graph,
        enc: &Encoded,
        env: &E,
        starts: &[Option<usize>],
        chooser: Chooser,
    ) -> Result<BatchRollout<E::State>, PolicyError> {
        let rows = starts.len();
        let n = env.n_nodes();
        let mut states: Vec<E::State> = (0..rows).map(|_| env.initial_state()).collect();
        let mut traces = vec![Trace { actions: Vec::new(), step_probs: Vec::new() }; rows];
        let mut rngs: Vec<Option<ChaCha8Rng>> = (0..rows)
            .map(|r| match chooser {
                Chooser::Decode(DecodeMode::Sample(seed)) => {
                    Some(ChaCha8Rng::seed_from_u64(derive_seed(seed, &[r as u64])))
                }
                _ => None,
            })
            .collect();
        let mut total: Option<Var> = None;
        let mut t = 0;
        loop {
            let active: Vec<bool> = states.iter().map(|s| !env.is_terminal(s)).collect();
            if !active.iter().any(|&a| a) {
                break;
            }
            let mut masks = vec![false; rows * n];
            let mut forced = vec![None; rows];
            for r in 0..rows {
                if !active[r] {
                    masks[r * n] = true;
                    continue;
                }
                let m = env.mask(&states[r]);
                if !m.iter().any(|&x| x) {
                    return Err(EnvError::Guard(format!("dead end after {} actions", traces[r].actions.len())).into());
                }
                masks[r * n..(r + 1) * n].copy_from_slice(&m);
                if t == 0 {
                    forced[r] = starts[r];
                }
                if let Chooser::Replay(actions) = chooser {
                    if t == 0 && starts[r].is_some() {
                        continue;
                    }
                    let a =
                        *actions[r].get(t).ok_or_else(|| PolicyError::Config(format!("replay row {r} too short")))?;
                    if !m[a] {
                        return Err(EnvError::Infeasible { action: a }.into());
                    }
                }
            }
            let needs_decode = (0..rows).any(|r| active[r] && forced[r].is_none());
            let mut picks = vec![None; rows];
            let mut chosen = vec![0; rows];
            if needs_decode {
                let contexts: Vec<_> = states.iter().map(|s| env.context(s)).collect();
                let probs = self.decode_step(g, enc, &contexts, &masks)?;
                let p = g.value(probs);
                for r in (0..rows).filter(|&r| active[r] && forced[r].is_none()) {
                    let a = match chooser {
                        Chooser::Decode(mode) => pick(p.row(r), mode, &mut rngs[r]),
                        Chooser::Replay(actions) => actions[r][t],
                    };
                    traces[r].step_probs.push(p.get(r, a));
                    picks[r] = Some(a);
                    chosen[r] = a;
                }
                let lg = g.log_gather(probs, &picks)?;
                total = Some(match total {
                    Some(acc) => g.add(acc, lg)?,
                    None => lg,
                });
            }
            for r in (0..rows).filter(|&r| active[r]) {
                let a = forced[r].unwrap_or(chosen[r]);
                if forced[r].is_some() && !masks[r * n + a] {
                    return Err(EnvError::Infeasible { action: a }.into());
                }
                states[r] = env.step(&states[r], a)?;
                traces[r].actions.push(a);
            }
            t += 1;
        }
        let log_probs = match total {
            Some(v) => v,
            None => g.input(Tensor::zeros(rows, 1)),
        };
        Ok(BatchRollout { states, traces, log_probs })
    }

    /// Encodes the instance and runs a single rollout.
    pub fn rollout<E: RoutingEnv>(
        &self,
        env: &E,
        mode: DecodeMode,
        start: Option<usize>,
    ) -> Result<Rollout, PolicyError> {
        let mut g = Graph::new(&self.params);
        let enc = self.encode(&mut g, &featurize(env, &self.config))?;
        let mut b = self.rollout_batch(&mut g, &enc, env, &[start], Chooser::Decode(mode))?;
        let log_prob = g.value(b.log_probs).item();
        let trace = b.traces.pop().unwrap();
        Ok(Rollout { solution: env.solution(&b.states[0]), trace, log_prob })
    }
}
