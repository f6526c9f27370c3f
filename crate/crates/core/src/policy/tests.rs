use super::*;
use crate::cvrptw::{CvrptwEnv, TwMode};
use crate::env::RoutingEnv;
use crate::exact::brute_force;
use crate::instances::{generate_cvrptw, generate_pdptw, travel_matrix, GenProfile, Instance, NodeRec};
use crate::numeric::Graph;
use crate::pdptw::PdptwEnv;
use crate::solution::{validate_solution, Objective};

fn small(variant: Variant) -> PolicyConfig {
    PolicyConfig { d_emb: 16, layers: 2, heads: 4, ff_dim: 32, ..PolicyConfig::new(variant) }
}

#[test]
fn config_defaults_and_validation() {
    let c = PolicyConfig::new(Variant::Cvrptw);
    assert_eq!((c.d_emb, c.layers, c.heads, c.ff_dim, c.d_key()), (128, 3, 8, 512, 16));
    assert_eq!(c.input_dim(), 5);
    assert_eq!(PolicyConfig::new(Variant::Cvrp).input_dim(), 3);
    assert_eq!(PolicyConfig::new(Variant::Cpdptw).input_dim(), 8);
    assert_eq!(PolicyConfig { pair_coords: false, ..PolicyConfig::new(Variant::Cpdptw) }.input_dim(), 6);
    assert!(PolicyConfig { heads: 5, ..c }.validate().is_err());
    assert!(AttentionModel::new(PolicyConfig { d_emb: 0, ..c }, 0).is_err());
}

#[test]
fn features_are_bounded() {
    for seed in 0..30 {
        let inst = generate_cvrptw(seed, 12, &GenProfile::cvrptw()).unwrap();
        let d = travel_matrix(&inst);
        let env = CvrptwEnv::new(&inst, &d, TwMode::Hard);
        let f = featurize(&env, &small(Variant::Cvrptw));
        assert_eq!(f.shape(), (14, 5));
        assert!(f.data().iter().all(|x| (-1.0..=1.0).contains(x)));
        assert_eq!(f.get(0, 2), 0.0);

        let pdp = generate_pdptw(seed, 5, &GenProfile::pdptw()).unwrap();
        let pd = travel_matrix(&pdp);
        let penv = PdptwEnv::new(&pdp, &pd);
        let f = featurize(&penv, &small(Variant::Cpdptw));
        assert_eq!(f.shape(), (12, 8));
        assert!(f.data().iter().all(|x| (-1.0..=1.0).contains(x)));
        assert_eq!(f.get(0, 5), 0.0);
        assert_eq!(f.get(1, 5), -1.0);
        assert_eq!(f.get(6, 5), 1.0);
        assert_eq!((f.get(1, 6), f.get(1, 7)), (f.get(6, 0), f.get(6, 1)));
        assert_eq!((f.get(6, 6), f.get(6, 7)), (0.0, 0.0));
    }
}

fn permuted(inst: &Instance, perm: &[usize]) -> Instance {
    let customers = perm.iter().map(|&i| inst.nodes[i]).collect();
    Instance::new(inst.name.clone(), inst.nodes[0], customers, inst.capacity)
}

#[test]
fn encoder_is_permutation_equivariant() {
    let inst = generate_cvrptw(4, 9, &GenProfile::cvrptw()).unwrap();
    let perm = vec![5, 2, 9, 1, 7, 3, 8, 4, 6];
    let other = permuted(&inst, &perm);
    let (d1, d2) = (travel_matrix(&inst), travel_matrix(&other));
    let model = AttentionModel::new(small(Variant::Cvrptw), 11).unwrap();
    let (e1, e2) = (CvrptwEnv::new(&inst, &d1, TwMode::Hard), CvrptwEnv::new(&other, &d2, TwMode::Hard));
    let mut g = Graph::new(&model.params);
    let a = model.encode(&mut g, &featurize(&e1, &model.config)).unwrap();
    let b = model.encode(&mut g, &featurize(&e2, &model.config)).unwrap();
    let (wa, wb) = (g.value(a.nodes).clone(), g.value(b.nodes).clone());
    assert_eq!(wa.shape(), (11, 16));
    for (new_pos, &old) in perm.iter().enumerate() {
        for c in 0..16 {
            assert!((wb.get(new_pos + 1, c) - wa.get(old, c)).abs() < 1e-9);
        }
    }
    for c in 0..16 {
        assert!((g.value(a.graph).get(0, c) - g.value(b.graph).get(0, c)).abs() < 1e-9);
        let mean = (0..11).map(|r| wa.get(r, c)).sum::<f64>() / 11.0;
        assert!((g.value(a.graph).get(0, c) - mean).abs() < 1e-12);
    }

    // Decoding the initial state is equivariant too.
    let ctx = [e1.context(&RoutingEnv::initial_state(&e1))];
    let pa = model.decode_step(&mut g, &a, &ctx, &e1.mask(&RoutingEnv::initial_state(&e1))).unwrap();
    let pb = model.decode_step(&mut g, &b, &ctx, &e2.mask(&RoutingEnv::initial_state(&e2))).unwrap();
    for (new_pos, &old) in perm.iter().enumerate() {
        assert!((g.value(pb).get(0, new_pos + 1) - g.value(pa).get(0, old)).abs() < 1e-9);
    }
}

#[test]
fn single_node_encoding() {
    let model = AttentionModel::new(small(Variant::Cvrp), 1).unwrap();
    let mut g = Graph::new(&model.params);
    let f = crate::numeric::Tensor::row_vector(vec![0.3, 0.4, 0.0]);
    let e = model.encode(&mut g, &f).unwrap();
    assert_eq!(g.value(e.nodes).shape(), (1, 16));
    assert_eq!(g.value(e.graph), g.value(e.nodes));
}

#[test]
fn decode_normalization_and_masking() {
    let inst = generate_cvrptw(8, 10, &GenProfile::cvrptw()).unwrap();
    let d = travel_matrix(&inst);
    let env = CvrptwEnv::new(&inst, &d, TwMode::Hard);
    let model = AttentionModel::new(small(Variant::Cvrptw), 2).unwrap();
    let mut g = Graph::new(&model.params);
    let enc = model.encode(&mut g, &featurize(&env, &model.config)).unwrap();
    let s = RoutingEnv::initial_state(&env);
    let ctx = [env.context(&s)];
    let mut only = vec![false; 12];
    only[7] = true;
    let p = model.decode_step(&mut g, &enc, &ctx, &only).unwrap();
    assert_eq!(g.value(p).get(0, 7), 1.0);
    let mask = env.mask(&s);
    let p = model.decode_step(&mut g, &enc, &ctx, &mask).unwrap();
    let row = g.value(p).row(0);
    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    for (k, &m) in mask.iter().enumerate() {
        assert!(if m { row[k] > 0.0 } else { row[k] == 0.0 });
    }
    assert!(model.decode_step(&mut g, &enc, &ctx, &[false; 12]).is_err());
}

#[test]
fn rollouts_are_consistent() {
    let model = AttentionModel::new(small(Variant::Cvrptw), 3).unwrap();
    for seed in 0..20 {
        let inst = generate_cvrptw(seed, 10, &GenProfile::cvrptw()).unwrap();
        let d = travel_matrix(&inst);
        let env = CvrptwEnv::new(&inst, &d, TwMode::Hard);
        let a = model.rollout(&env, DecodeMode::Greedy, None).unwrap();
        assert_eq!(a, model.rollout(&env, DecodeMode::Greedy, None).unwrap());
        assert!(validate_solution(&a.solution, &inst, &d).is_empty());
        let s = model.rollout(&env, DecodeMode::Sample(seed), None).unwrap();
        assert_eq!(s, model.rollout(&env, DecodeMode::Sample(seed), None).unwrap());
        let product: f64 = s.trace.step_probs.iter().product();
        assert!((s.log_prob.exp() - product).abs() < 1e-9);
        assert!((s.trace.log_prob() - s.log_prob).abs() < 1e-9);
        let f = model.rollout(&env, DecodeMode::Sample(seed), Some(3)).unwrap();
        assert_eq!(f.trace.actions[0], 3);
        assert_eq!(f.trace.step_probs.len(), f.trace.actions.len() - 1);
    }
}

#[test]
fn pdp_rollouts_are_feasible() {
    let model = AttentionModel::new(small(Variant::Cpdptw), 5).unwrap();
    for seed in 0..20 {
        let inst = generate_pdptw(seed, 6, &GenProfile::pdptw()).unwrap();
        let d = travel_matrix(&inst);
        let env = PdptwEnv::new(&inst, &d);
        for mode in [DecodeMode::Greedy, DecodeMode::Sample(seed)] {
            let r = model.rollout(&env, mode, None).unwrap();
            assert!(validate_solution(&r.solution, &inst, &d).is_empty());
        }
    }
}

#[test]
fn replay_reproduces_log_probs() {
    let inst = generate_cvrptw(2, 8, &GenProfile::cvrptw()).unwrap();
    let d = travel_matrix(&inst);
    let env = CvrptwEnv::new(&inst, &d, TwMode::Hard);
    let model = AttentionModel::new(small(Variant::Cvrptw), 9).unwrap();
    let starts = [Some(1), Some(4), None];
    let mut g = Graph::new(&model.params);
    let enc = model.encode(&mut g, &featurize(&env, &model.config)).unwrap();
    let first = model.rollout_batch(&mut g, &enc, &env, &starts, Chooser::Decode(DecodeMode::Sample(7))).unwrap();
    let actions: Vec<Vec<usize>> = first.traces.iter().map(|t| t.actions.clone()).collect();
    let again = model.rollout_batch(&mut g, &enc, &env, &starts, Chooser::Replay(&actions)).unwrap();
    assert_eq!(g.value(first.log_probs), g.value(again.log_probs));
    for (r, t) in first.traces.iter().enumerate() {
        assert!((g.value(first.log_probs).get(r, 0) - t.log_prob()).abs() < 1e-12);
    }
}

#[test]
fn heuristic_follows_a_line() {
    let wide = (0.0, 100.0);
    let depot = NodeRec::new(0, 0.0, 0.0, 0, wide, 0.0);
    let cs = vec![
        NodeRec::new(1, 3.0, 0.0, 1, wide, 0.0),
        NodeRec::new(2, 1.0, 0.0, 1, wide, 0.0),
        NodeRec::new(3, 2.0, 0.0, 1, wide, 0.0),
    ];
    let inst = Instance::new("line", depot, cs, 10);
    let d = travel_matrix(&inst);
    let env = CvrptwEnv::new(&inst, &d, TwMode::Hard);
    for rule in [HeuristicRule::NearestFeasible, HeuristicRule::CheapestInsertion] {
        let sol = greedy_heuristic(&env, rule).unwrap();
        assert_eq!(sol.routes, vec![vec![0, 2, 3, 1, 4]]);
    }
}

#[test]
fn heuristic_is_feasible_and_not_below_optimum() {
    for seed in 0..15 {
        let inst = generate_cvrptw(seed, 6, &GenProfile::cvrptw()).unwrap();
        let d = travel_matrix(&inst);
        let env = CvrptwEnv::new(&inst, &d, TwMode::Hard);
        let (opt, _) = brute_force(&inst, None, &d, Objective::Distance).unwrap().unwrap();
        for rule in [HeuristicRule::NearestFeasible, HeuristicRule::CheapestInsertion] {
            let sol = greedy_heuristic(&env, rule).unwrap();
            assert!(validate_solution(&sol, &inst, &d).is_empty());
            assert!(sol.distance(&d) >= opt - 1e-9);
        }
        let pdp = generate_pdptw(seed, 3, &GenProfile::pdptw()).unwrap();
        let pd = travel_matrix(&pdp);
        let penv = PdptwEnv::new(&pdp, &pd);
        let (popt, _) = brute_force(&pdp, Some(&pdp), &pd, Objective::Distance).unwrap().unwrap();
        let sol = greedy_heuristic(&penv, HeuristicRule::CheapestInsertion).unwrap();
        assert!(validate_solution(&sol, &pdp, &pd).is_empty());
        assert!(sol.distance(&pd) >= popt - 1e-9);
    }
}

#[test]
fn save_and_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let c = PolicyConfig { tanh_clip: Some(10.0), ..small(Variant::Cpdptw) };
    let model = AttentionModel::new(c, 4).unwrap();
    model.save(&path).unwrap();
    let back = AttentionModel::load(&path).unwrap();
    assert_eq!(back.config, c);
    assert_eq!(back.params, model.params);
    assert_eq!(parse_meta(&format_meta(&c), &path).unwrap(), c);
    assert!(parse_meta("variant = cvrp\n", &path).is_err());
}
