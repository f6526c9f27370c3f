//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Set `LILIM_DIR` to a directory holding the Li & Lim 100-task files
//! (`lr101.txt` .. `lr211.txt`); `data/lilim` is tried otherwise. When the
//! files are missing that criterion reports FAIL without aborting the run,
//! unless `ACCEPTANCE_STRICT=1`.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use amroute::bench::{load_benchmark, solve_instance, BestKnown, SolveMode, DEFAULT_SAMPLES};
use amroute::cvrptw::{CvrptwEnv, TwMode};
use amroute::env::RoutingEnv;
use amroute::exec::Execution;
use amroute::instances::{generate_cvrptw, generate_pdptw, travel_matrix, GenProfile, Rounding};
use amroute::numeric::{Graph, Tensor};
use amroute::pdptw::{check_insertion, PdptwEnv};
use amroute::policy::{featurize, AttentionModel, PolicyConfig, Variant};
use amroute::solution::{solution_cost, Objective, Solution};
use amroute::training::{evaluate_greedy, held_out, train_step, GeneratedInstance, TrainConfig};
use amroute::verify;

struct Outcome {
    name: &'static str,
    pass: bool,
    /// Reported but not fatal unless strict.
    missing_data: bool,
    detail: String,
}

fn outcome(name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { name, pass, missing_data: false, detail }
}

fn insertion_soundness() -> Outcome {
    let t = Instant::now();
    let r = verify::insertion_soundness(0..100, 1000, 6, 50, check_insertion);
    let secs = t.elapsed().as_secs_f64();
    let pass = r.passed() && r.cases >= 100_000 && secs < 120.0;
    outcome("insertion soundness", pass, format!("{}; {secs:.1}s", r.summary()))
}

fn empty_gamma() -> Outcome {
    let r = verify::empty_gamma_agreement(0..100, 10_000, check_insertion);
    outcome("empty-gamma exact agreement", r.passed() && r.cases >= 10_000, r.summary())
}

fn mask() -> Outcome {
    let r = verify::mask_equivalence(0..100, 1000);
    outcome("one-step mask equivalence", r.passed() && r.cases >= 1000, r.summary())
}

fn precompute() -> Outcome {
    let r = verify::precompute_agreement(0..100, 1000);
    outcome("precompute correctness", r.passed() && r.cases >= 1000, r.summary())
}

fn gradients() -> Outcome {
    let ops = verify::gradient_ops(20, 0);
    let e2e = verify::gradient_end_to_end(0);
    outcome(
        "gradient suite",
        ops.passed() && e2e.passed(),
        format!("ops: {} | end-to-end: {}", ops.summary(), e2e.summary()),
    )
}

fn equivariance_and_normalization() -> Outcome {
    let mut worst_eq: f64 = 0.0;
    let mut worst_norm: f64 = 0.0;
    let mut masked_nonzero = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for (k, variant) in [Variant::Cvrptw, Variant::Cpdptw].into_iter().enumerate() {
        let model = AttentionModel::new(PolicyConfig::new(variant), 100 + k as u64).unwrap();
        for seed in 0..5u64 {
            let inst = match variant {
                Variant::Cpdptw => GeneratedInstance::Pdp(generate_pdptw(seed, 6, &GenProfile::pdptw()).unwrap()),
                _ => GeneratedInstance::Vrp(generate_cvrptw(seed, 12, &GenProfile::cvrptw()).unwrap()),
            };
            let (w, n, m) = match &inst {
                GeneratedInstance::Vrp(i) => {
                    let d = travel_matrix(i);
                    check_policy(&model, &CvrptwEnv::new(i, &d, TwMode::Hard), &mut rng)
                }
                GeneratedInstance::Pdp(i) => {
                    let d = travel_matrix(i);
                    check_policy(&model, &PdptwEnv::new(i, &d), &mut rng)
                }
            };
            worst_eq = worst_eq.max(w);
            worst_norm = worst_norm.max(n);
            masked_nonzero += m;
        }
    }
    outcome(
        "encoder equivariance / decoder normalization",
        worst_eq < 1e-9 && worst_norm < 1e-12 && masked_nonzero == 0,
        format!("equivariance {worst_eq:.2e}, normalization {worst_norm:.2e}, masked nonzero {masked_nonzero}"),
    )
}

/// Encodes a row-permuted copy of the features and compares embeddings, then
/// checks every decoding step of one random rollout.
fn check_policy<E: RoutingEnv>(model: &AttentionModel, env: &E, rng: &mut ChaCha8Rng) -> (f64, f64, usize) {
    let feats = featurize(env, &model.config);
    let n = feats.rows();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let permuted = Tensor::from_fn(n, feats.cols(), |r, c| feats.get(perm[r], c));
    let mut g = Graph::new(&model.params);
    let a = model.encode(&mut g, &feats).unwrap();
    let b = model.encode(&mut g, &permuted).unwrap();
    let (ea, eb) = (g.value(a.nodes).clone(), g.value(b.nodes).clone());
    let mut eq: f64 = 0.0;
    for (r, &src) in perm.iter().enumerate() {
        for c in 0..ea.cols() {
            eq = eq.max((eb.get(r, c) - ea.get(src, c)).abs());
        }
    }
    for c in 0..ea.cols() {
        eq = eq.max((g.value(a.graph).get(0, c) - g.value(b.graph).get(0, c)).abs());
    }

    let (mut norm, mut masked): (f64, usize) = (0.0, 0);
    let mut s = env.initial_state();
    while !env.is_terminal(&s) {
        let mask = env.mask(&s);
        let p = model.decode_step(&mut g, &a, &[env.context(&s)], &mask).unwrap();
        let row = g.value(p).row(0).to_vec();
        norm = norm.max((row.iter().sum::<f64>() - 1.0).abs());
        masked += row.iter().zip(&mask).filter(|(&p, &m)| !m && p != 0.0).count();
        let acts: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        s = env.step(&s, *acts.choose(rng).unwrap()).unwrap();
    }
    (eq, norm, masked)
}

fn desk_training() -> Outcome {
    let mut cfg = TrainConfig::new(Variant::Cvrptw);
    cfg.problem_size = 10;
    cfg.batch = 16;
    cfg.pomo_starts = 10;
    cfg.lr = 1e-3;
    cfg.seed = 1;
    cfg.policy = PolicyConfig { d_emb: 32, layers: 2, heads: 4, ff_dim: 64, ..PolicyConfig::new(Variant::Cvrptw) };
    let t = Instant::now();
    let eval = held_out(Variant::Cvrptw, 10, 100, 99).unwrap();
    let mut model = AttentionModel::new(cfg.policy, 7).unwrap();
    let exec = Execution::default();
    let (initial, heuristic) = evaluate_greedy(&model, &eval, Objective::Distance, TwMode::Hard, exec).unwrap();
    for step in 0..2000 {
        train_step(&mut model, &cfg, step, exec).unwrap();
    }
    let (last, _) = evaluate_greedy(&model, &eval, Objective::Distance, TwMode::Hard, exec).unwrap();
    let reduction = (initial - last) / initial;
    let ratio = last / heuristic;
    outcome(
        "desk-scale learning signal",
        reduction >= 0.15 && ratio <= 1.3,
        format!(
            "initial {initial:.3}, trained {last:.3} ({:.1}% lower), nearest-feasible {heuristic:.3}, ratio {ratio:.3}; {:.0}s",
            100.0 * reduction,
            t.elapsed().as_secs_f64()
        ),
    )
}

fn lilim_dir() -> PathBuf {
    std::env::var_os("LILIM_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/lilim"))
}

fn lilim_files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for family in [1..=12, 1..=11].into_iter().enumerate() {
        let (k, range) = family;
        for i in range {
            let stem = format!("lr{}{:02}", k + 1, i);
            if let Some(p) =
                ["txt", "TXT", "pdptw"].iter().map(|e| dir.join(format!("{stem}.{e}"))).find(|p| p.exists())
            {
                out.push(p);
            }
        }
    }
    out
}

/// Greedy plus best-of-16 sampling on each instance with an untrained
/// full-size policy; returns (feasible count, total, elapsed).
fn solve_all(insts: &[GeneratedInstance]) -> (usize, usize, Duration) {
    let model = AttentionModel::new(PolicyConfig::new(Variant::Cpdptw), 5).unwrap();
    let best = BestKnown::default();
    let t = Instant::now();
    let rows = Execution::default().map(insts.len(), |k| {
        [SolveMode::Greedy, SolveMode::Sample { k: DEFAULT_SAMPLES, seed: k as u64 }].map(|mode| {
            solve_instance(&model, &insts[k], mode, Rounding::Exact, &best).map(|s| s.row.feasible).unwrap_or(false)
        })
    });
    let ok = rows.iter().flatten().filter(|&&f| f).count();
    (ok, 2 * insts.len(), t.elapsed())
}

fn lilim() -> Outcome {
    let dir = lilim_dir();
    let files = lilim_files(&dir);
    let proxy: Vec<GeneratedInstance> =
        (0..23).map(|s| GeneratedInstance::Pdp(generate_pdptw(s, 50, &GenProfile::pdptw()).unwrap())).collect();
    let (pok, ptotal, ptime) = solve_all(&proxy);
    let proxy_note = format!("generated 50-request proxy: {pok}/{ptotal} feasible in {:.1}s", ptime.as_secs_f64());
    if files.len() != 23 {
        return Outcome {
            name: "Li & Lim end-to-end feasibility",
            pass: false,
            missing_data: true,
            detail: format!("dataset not found ({} of 23 lr files in {}); {proxy_note}", files.len(), dir.display()),
        };
    }
    let insts: Vec<GeneratedInstance> =
        files.iter().map(|p| load_benchmark(p, Variant::Cpdptw, Some(50)).unwrap()).collect();
    let (ok, total, time) = solve_all(&insts);
    outcome(
        "Li & Lim end-to-end feasibility",
        ok == total && time.as_secs_f64() < 60.0,
        format!("{ok}/{total} feasible in {:.1}s; {proxy_note}", time.as_secs_f64()),
    )
}

fn random_solution(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Solution {
    let mut perm: Vec<usize> = (1..=n).collect();
    perm.shuffle(rng);
    let mut cuts: Vec<usize> = (1..n).collect();
    cuts.shuffle(rng);
    cuts.truncate(k - 1);
    cuts.sort();
    cuts.push(n);
    let mut prev = 0;
    let routes = cuts
        .into_iter()
        .map(|c| {
            let r = [&[0][..], &perm[prev..c], &[n + 1][..]].concat();
            prev = c;
            r
        })
        .collect();
    Solution { routes }
}

fn lexicographic() -> Outcome {
    let mut runner = TestRunner::new(Config { cases: 10_000, failure_persistence: None, ..Config::default() });
    let pairs = std::cell::Cell::new(0usize);
    let res = runner.run(&(any::<u64>(), 2usize..40), |(seed, n)| {
        let inst = generate_cvrptw(seed, n, &GenProfile::cvrptw()).unwrap();
        let d = travel_matrix(&inst);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k1 = rng.gen_range(1..=n);
        let k2 = (k1 - 1 + rng.gen_range(1..n)) % n + 1;
        let (a, b) = (random_solution(n, k1, &mut rng), random_solution(n, k2, &mut rng));
        let ca = solution_cost(&a, &inst, &d, Objective::VehiclesThenDistance).unwrap();
        let cb = solution_cost(&b, &inst, &d, Objective::VehiclesThenDistance).unwrap();
        pairs.set(pairs.get() + 1);
        prop_assert_ne!(k1, k2);
        prop_assert_eq!(k1 < k2, ca < cb);
        Ok(())
    });
    outcome(
        "lexicographic cost ordering",
        res.is_ok() && pairs.get() >= 10_000,
        match res {
            Ok(()) => format!("{} random pairs", pairs.get()),
            Err(e) => e.to_string(),
        },
    )
}

fn complexity() -> Outcome {
    let (rows, k) = verify::insertion_complexity(&[4, 8, 16, 32, 64]);
    outcome("insertion-check complexity", k <= 2.2 && rows.len() == 5, format!("ops {rows:?}, fitted exponent {k:.3}"))
}

fn main() {
    let criteria: [fn() -> Outcome; 10] = [
        insertion_soundness,
        empty_gamma,
        mask,
        precompute,
        gradients,
        equivariance_and_normalization,
        desk_training,
        lilim,
        lexicographic,
        complexity,
    ];
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut fatal = Vec::new();
    for c in criteria {
        let o = c();
        println!("{} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.name, o.detail);
        if !o.pass && (strict || !o.missing_data) {
            fatal.push(o.name);
        }
    }
    if !fatal.is_empty() {
        eprintln!("failed criteria: {fatal:?}");
        std::process::exit(1);
    }
}
