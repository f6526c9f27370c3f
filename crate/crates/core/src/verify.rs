//! Randomized verification suites that compare the fast checks against
//! independent references: exhaustive search, scalar recomputation and
//! finite differences.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cvrptw::{CvrptwEnv, TwMode};
use crate::derive_seed;
use crate::exact::one_step_mask;
use crate::instances::{generate_cvrptw, generate_pdptw, travel_matrix, DistanceMatrix, GenProfile, PdpInstance};
use crate::numeric::{finite_difference_check, Graph, NumericError, ParamStore, Tensor, Var};
use crate::pdptw::{check_insertion, InsertionVerdict, PdpState, PdptwEnv, SlackTable};
use crate::policy::{featurize, AttentionModel, PolicyConfig, Variant};
use crate::solution::simulate_route;
use crate::training::{freeze_batch, frozen_loss, TrainConfig};
use crate::TIME_EPS;

/// Signature of an insertion check, so that the suites can be pointed at a
/// deliberately broken implementation.
pub type InsertionChecker = fn(&PdpState, &SlackTable, usize, &PdpInstance, &DistanceMatrix) -> InsertionVerdict;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    pub notes: Vec<String>,
}

impl SuiteReport {
    fn new(name: &'static str) -> Self {
        SuiteReport { name, cases: 0, failures: 0, notes: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        self.cases > 0 && self.failures == 0
    }
}

impl SuiteReport {
    /// Case and failure counts followed by the notes.
    pub fn summary(&self) -> String {
        let mut s = format!("{} cases, {} failures", self.cases, self.failures);
        for n in &self.notes {
            s.push_str("; ");
            s.push_str(n);
        }
        s
    }
}

impl std::fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {}", self.name, self.summary())
    }
}

/// Window feasibility of `τ ++ order ++ [end]` at earliest service times.
fn replay_feasible(s: &PdpState, order: &[usize], inst: &PdpInstance, dist: &DistanceMatrix) -> bool {
    let mut route = s.tau.clone();
    route.extend_from_slice(order);
    route.push(inst.end_depot());
    let timing = simulate_route(&route, inst, dist);
    route.iter().zip(&timing.starts).all(|(&i, &t)| t <= inst.nodes[i].tw_close + TIME_EPS)
}

/// Random walks through the PDP environment; calls `visit` on every
/// non-terminal state until it returns false or `budget` states were seen.
fn walk_states(
    inst: &PdpInstance,
    dist: &DistanceMatrix,
    seed: u64,
    budget: usize,
    mut visit: impl FnMut(&PdptwEnv, &PdpState) -> bool,
) -> usize {
    let env = PdptwEnv::new(inst, dist);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = 0;
    while seen < budget {
        let mut s = env.initial_state();
        while !s.is_terminal() && seen < budget {
            seen += 1;
            if !visit(&env, &s) {
                return seen;
            }
            let acts = env.feasible_actions(&s);
            let Some(&a) = acts.choose(&mut rng) else { break };
            s = env.step(&s, a).expect("masked action");
        }
    }
    seen
}

/// Every position accepted by `checker` must replay window-feasible.
/// Incompleteness (accepted by the exhaustive search but rejected here) is
/// measured on every `exact_every`-th state and reported.
pub fn insertion_soundness(
    seeds: Range<u64>,
    states_per_seed: usize,
    max_gamma: usize,
    exact_every: usize,
    checker: InsertionChecker,
) -> SuiteReport {
    let mut r = SuiteReport::new("insertion soundness");
    let (mut positions, mut exact_cases, mut missed) = (0usize, 0usize, 0usize);
    for seed in seeds {
        let inst = generate_pdptw(seed, 20, &GenProfile::pdptw()).expect("generator");
        let dist = travel_matrix(&inst);
        let mut counted = 0;
        walk_states(&inst, &dist, derive_seed(seed, &[7]), usize::MAX, |env, s| {
            if s.gamma.len() > max_gamma {
                return true;
            }
            counted += 1;
            r.cases += 1;
            for u in (1..=inst.n_requests()).filter(|&u| s.unvisited[u]) {
                let v = checker(s, &s.table, u, &inst, &dist);
                for &x in &v.feasible_positions {
                    positions += 1;
                    let mut order = vec![u];
                    order.extend_from_slice(&s.gamma[..x]);
                    order.push(inst.delivery_of(u));
                    order.extend_from_slice(&s.gamma[x..]);
                    if !replay_feasible(s, &order, &inst, &dist) {
                        r.failures += 1;
                    }
                }
                if exact_every > 0 && r.cases.is_multiple_of(exact_every) {
                    exact_cases += 1;
                    if !v.is_feasible() && env.exact_feasible(s, u).unwrap_or(false) {
                        missed += 1;
                    }
                }
            }
            counted < states_per_seed
        });
    }
    r.notes.push(format!("{positions} accepted positions replayed"));
    if exact_cases > 0 {
        r.notes.push(format!(
            "incompleteness {missed}/{exact_cases} ({:.3}%) pickups feasible by exhaustive search but rejected",
            100.0 * missed as f64 / exact_cases as f64
        ));
    }
    r
}

/// With no pending deliveries the check must agree exactly with the
/// exhaustive search.
pub fn empty_gamma_agreement(seeds: Range<u64>, min_cases: usize, checker: InsertionChecker) -> SuiteReport {
    let mut r = SuiteReport::new("empty-gamma exact agreement");
    for seed in seeds.clone() {
        let inst = generate_pdptw(seed, 12, &GenProfile::pdptw()).expect("generator");
        let dist = travel_matrix(&inst);
        let per_seed = min_cases.div_ceil(seeds.clone().count().max(1));
        let mut here = 0;
        walk_states(&inst, &dist, derive_seed(seed, &[11]), 200_000, |env, s| {
            if !s.gamma.is_empty() {
                return true;
            }
            for u in (1..=inst.n_requests()).filter(|&u| s.unvisited[u]) {
                let fast = checker(s, &s.table, u, &inst, &dist).is_feasible();
                let exact = env.exact_feasible(s, u).expect("small gamma");
                r.cases += 1;
                here += 1;
                if fast != exact {
                    r.failures += 1;
                }
            }
            here < per_seed
        });
    }
    r
}

/// The C-VRP-TW mask against a one-step reference that re-simulates the
/// open route from the depot.
pub fn mask_equivalence(seeds: Range<u64>, n_states: usize) -> SuiteReport {
    let mut r = SuiteReport::new("one-step mask equivalence");
    let per_seed = n_states.div_ceil(seeds.clone().count().max(1));
    for seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[3]));
        let n = rng.gen_range(3..=8);
        let inst = generate_cvrptw(seed, n, &GenProfile::cvrptw()).expect("generator");
        let dist = travel_matrix(&inst);
        for mode in [TwMode::Hard, TwMode::Soft] {
            let env = CvrptwEnv::new(&inst, &dist, mode);
            let mut done = 0;
            while done < per_seed.div_ceil(2) {
                let mut s = env.initial_state();
                while !s.is_terminal() {
                    r.cases += 1;
                    done += 1;
                    let mask = env.feasible_mask(&s);
                    if mask != one_step_mask(&s, &inst, &dist, mode) {
                        r.failures += 1;
                    }
                    let acts: Vec<usize> = (0..mask.len()).filter(|&a| mask[a]).collect();
                    s = env.step(&s, *acts.choose(&mut rng).unwrap()).unwrap().next_state;
                }
            }
        }
    }
    r
}

/// Recomputes times, cumulative waits and slacks along `Δ` with plain loops
/// and compares against the stored table.
pub fn precompute_agreement(seeds: Range<u64>, n_chains: usize) -> SuiteReport {
    let mut r = SuiteReport::new("precompute agreement");
    let per_seed = n_chains.div_ceil(seeds.clone().count().max(1));
    let mut worst: f64 = 0.0;
    for seed in seeds {
        let inst = generate_pdptw(seed, 15, &GenProfile::pdptw()).expect("generator");
        let dist = travel_matrix(&inst);
        let mut here = 0;
        walk_states(&inst, &dist, derive_seed(seed, &[5]), 100_000, |_, s| {
            if s.gamma.is_empty() {
                return true;
            }
            here += 1;
            r.cases += 1;
            let nodes = &inst.nodes;
            let mut delta = vec![*s.tau.last().unwrap()];
            delta.extend_from_slice(&s.gamma);
            delta.push(inst.end_depot());
            let m = delta.len();
            let mut t = vec![s.est[delta[0]]];
            let mut idle = vec![0.0];
            for p in 1..m {
                let arrive = t[p - 1] + nodes[delta[p - 1]].service + dist.get(delta[p - 1], delta[p]);
                let start = arrive.max(nodes[delta[p]].tw_open);
                t.push(start);
                idle.push(start - arrive);
            }
            let tab = &s.table;
            let mut err: f64 = 0.0;
            for i in 0..m {
                err = err.max((tab.t[i] - t[i]).abs());
                let mut f = f64::INFINITY;
                for j in i..m {
                    let w: f64 = idle[i + 1..=j].iter().sum();
                    err = err.max((tab.w(i, j) - w).abs());
                    f = f.min(w + nodes[delta[j]].tw_close - t[j]);
                }
                err = err.max((tab.f(i) - f).abs());
            }
            worst = worst.max(err);
            if tab.delta != delta || err > 1e-9 {
                r.failures += 1;
            }
            here < per_seed
        });
    }
    r.notes.push(format!("max abs error {worst:.2e}"));
    r
}

type OpBuilder = fn(&mut Graph, &[Var]) -> Result<Var, NumericError>;
type OpCase = (&'static str, Vec<(usize, usize)>, OpBuilder);

/// `(name, parameter shapes, builder)`; each builder returns the op output.
fn op_cases() -> Vec<OpCase> {
    vec![
        ("matmul", vec![(3, 4), (4, 2)], |g, p| g.matmul(p[0], p[1])),
        ("matmul_t", vec![(3, 4), (5, 4)], |g, p| g.matmul_t(p[0], p[1])),
        ("add", vec![(3, 2), (3, 2)], |g, p| g.add(p[0], p[1])),
        ("add_row", vec![(3, 2), (1, 2)], |g, p| g.add_row(p[0], p[1])),
        ("mul", vec![(2, 3), (2, 3)], |g, p| g.mul(p[0], p[1])),
        ("scale", vec![(2, 3)], |g, p| Ok(g.scale(p[0], -1.7))),
        ("relu", vec![(3, 3)], |g, p| Ok(g.relu(p[0]))),
        ("tanh", vec![(3, 3)], |g, p| Ok(g.tanh(p[0]))),
        ("softmax", vec![(2, 4)], |g, p| g.softmax(p[0], None)),
        ("softmax_masked", vec![(2, 4)], |g, p| {
            g.softmax(p[0], Some(&[true, false, true, true, false, true, false, false]))
        }),
        ("instance_norm", vec![(5, 3), (1, 3), (1, 3)], |g, p| g.instance_norm(p[0], p[1], p[2])),
        ("concat_cols", vec![(2, 2), (2, 3)], |g, p| g.concat_cols(&[p[0], p[1]])),
        ("slice_cols", vec![(2, 5)], |g, p| g.slice_cols(p[0], 1, 3)),
        ("mean_rows", vec![(4, 3)], |g, p| Ok(g.mean_rows(p[0]))),
        ("gather_rows", vec![(4, 2)], |g, p| g.gather_rows(p[0], &[2, 0, 2])),
        ("log_gather", vec![(3, 4)], |g, p| {
            let s = g.softmax(p[0], None)?;
            g.log_gather(s, &[Some(1), None, Some(3)])
        }),
        ("sum", vec![(2, 3)], |g, p| Ok(g.sum(p[0]))),
    ]
}

/// Finite-difference check of every graph op at `points` random inputs.
pub fn gradient_ops(points: usize, seed: u64) -> SuiteReport {
    let mut r = SuiteReport::new("op gradients");
    let mut worst: (f64, &str) = (0.0, "");
    for (name, shapes, build) in op_cases() {
        for k in 0..points {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[k as u64, name.len() as u64]));
            let mut store = ParamStore::new();
            for (i, &(rows, cols)) in shapes.iter().enumerate() {
                // Keep clear of the relu kink.
                let t = Tensor::from_fn(rows, cols, |_, _| {
                    let x: f64 = rng.gen_range(0.05..1.5);
                    if rng.gen() {
                        x
                    } else {
                        -x
                    }
                });
                store.register(format!("p{i}"), t).unwrap();
            }
            let out_shape = {
                let mut g = Graph::new(&store);
                let vars: Vec<Var> = store.ids().map(|id| g.param(id)).collect();
                let out = build(&mut g, &vars).expect("op");
                g.value(out).shape()
            };
            let weights = Tensor::from_fn(out_shape.0, out_shape.1, |_, _| rng.gen_range(-1.0..1.0));
            let res = finite_difference_check(&store, 1e-5, |g| {
                let vars: Vec<Var> = g.store().ids().map(|id| g.param(id)).collect();
                let out = build(g, &vars)?;
                let w = g.input(weights.clone());
                let prod = g.mul(out, w)?;
                Ok(g.sum(prod))
            })
            .expect("gradient check");
            r.cases += 1;
            if res.max_rel >= 1e-4 {
                r.failures += 1;
            }
            if res.max_rel > worst.0 {
                worst = (res.max_rel, name);
            }
        }
    }
    r.notes.push(format!("max relative error {:.2e} ({})", worst.0, worst.1));
    r
}

fn tiny_config(variant: Variant) -> PolicyConfig {
    PolicyConfig { d_emb: 8, layers: 1, heads: 2, ff_dim: 12, ..PolicyConfig::new(variant) }
}

/// Finite differences of `log p` through one decoding step and of the
/// frozen policy-gradient surrogate on a 5-customer batch.
pub fn gradient_end_to_end(seed: u64) -> SuiteReport {
    let mut r = SuiteReport::new("end-to-end gradients");
    let mut notes = Vec::new();

    let inst = generate_cvrptw(seed, 5, &GenProfile::cvrptw()).expect("generator");
    let dist = travel_matrix(&inst);
    let env = CvrptwEnv::new(&inst, &dist, TwMode::Hard);
    let model = AttentionModel::new(tiny_config(Variant::Cvrptw), seed).expect("model");
    let feats = featurize(&env, &model.config);
    let s = env.initial_state();
    let ctx = [crate::env::RoutingEnv::context(&env, &s)];
    let mask = env.feasible_mask(&s);
    let target = mask.iter().position(|&m| m).unwrap();
    let step = finite_difference_check(&model.params, 1e-5, |g| {
        let enc = model.encode(g, &feats).map_err(to_numeric)?;
        let p = model.decode_step(g, &enc, &ctx, &mask).map_err(to_numeric)?;
        let lg = g.log_gather(p, &[Some(target)])?;
        Ok(g.sum(lg))
    })
    .expect("decode check");
    r.cases += 1;
    if step.max_rel >= 1e-4 {
        r.failures += 1;
    }
    notes.push(format!("decode log-prob max rel {:.2e} over {} scalars", step.max_rel, step.checked));

    let mut cfg = TrainConfig::new(Variant::Cvrptw);
    cfg.problem_size = 5;
    cfg.batch = 2;
    cfg.pomo_starts = 3;
    cfg.seed = seed;
    cfg.policy = tiny_config(Variant::Cvrptw);
    let batch = freeze_batch(&model, &cfg, 0).expect("frozen batch");
    let whole =
        finite_difference_check(&model.params, 1e-5, |g| frozen_loss(&model, g, &batch, 0.0).map_err(to_numeric))
            .expect("policy gradient check");
    r.cases += 1;
    if whole.max_rel >= 1e-3 {
        r.failures += 1;
    }
    notes.push(format!("frozen policy gradient max rel {:.2e} over {} scalars", whole.max_rel, whole.checked));
    r.notes = notes;
    r
}

fn to_numeric(e: crate::policy::PolicyError) -> NumericError {
    match e {
        crate::policy::PolicyError::Numeric(n) => n,
        other => NumericError::Checkpoint(other.to_string()),
    }
}

/// Operation counts of one table rebuild plus one insertion check for each
/// `|γ|` in `sizes`, and the least-squares exponent of `ops ~ |γ|^k`.
pub fn insertion_complexity(sizes: &[usize]) -> (Vec<(usize, u64)>, f64) {
    let max = sizes.iter().copied().max().unwrap_or(1);
    let mut profile = GenProfile::pdptw();
    profile.capacity = Some(10 * (max as i64 + 2));
    profile.p_tw = 0.0;
    profile.horizon = 100.0 * (max as f64 + 2.0);
    let inst = generate_pdptw(1, max + 1, &profile).expect("generator");
    let dist = travel_matrix(&inst);
    let env = PdptwEnv::new(&inst, &dist);
    let mut s = env.initial_state();
    let mut rows = Vec::new();
    for p in 1..=max {
        s = env.step(&s, p).expect("wide windows");
        if sizes.contains(&s.gamma.len()) {
            let mut ops = 0;
            let _ = crate::pdptw::precompute_counted(&s, &inst, &dist, &mut ops);
            let _ = crate::pdptw::check_insertion_counted(&s, &s.table, max + 1, &inst, &dist, &mut ops);
            rows.push((s.gamma.len(), ops));
        }
    }
    (rows.clone(), fit_exponent(&rows))
}

/// Slope of `ln y` against `ln x`.
pub fn fit_exponent(rows: &[(usize, u64)]) -> f64 {
    let pts: Vec<(f64, f64)> = rows.iter().map(|&(x, y)| ((x as f64).ln(), (y as f64).ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let var: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    cov / var
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    All,
    Insertion,
    Precompute,
    Gradient,
    Mask,
}

impl std::str::FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "all" => Suite::All,
            "insertion" => Suite::Insertion,
            "precompute" => Suite::Precompute,
            "gradient" => Suite::Gradient,
            "mask" => Suite::Mask,
            other => return Err(format!("unknown suite `{other}`")),
        })
    }
}

/// Runs `suite` over seeds `0..seeds` with the production insertion check,
/// or with `checker` when given.
pub fn run_suite(suite: Suite, seeds: u64, checker: Option<InsertionChecker>) -> Vec<SuiteReport> {
    let checker = checker.unwrap_or(check_insertion);
    let want = |s: Suite| suite == Suite::All || suite == s;
    let mut out = Vec::new();
    if want(Suite::Insertion) {
        out.push(insertion_soundness(0..seeds, 200, 6, 10, checker));
        out.push(empty_gamma_agreement(0..seeds, 100 * seeds as usize, checker));
    }
    if want(Suite::Precompute) {
        out.push(precompute_agreement(0..seeds, 10 * seeds as usize));
    }
    if want(Suite::Mask) {
        out.push(mask_equivalence(0..seeds, 10 * seeds as usize));
    }
    if want(Suite::Gradient) {
        out.push(gradient_ops(seeds.clamp(1, 20) as usize, 0));
        out.push(gradient_end_to_end(0));
    }
    out
}
