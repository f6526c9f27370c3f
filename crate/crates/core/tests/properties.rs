use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use amroute::cvrptw::{CvrptwEnv, TwMode};
use amroute::instances::*;
use amroute::pdptw::PdptwEnv;
use amroute::solution::{solution_cost, validate_solution, Objective, Solution};

/// Random partition of the customers into `k` nonempty routes.
fn random_solution(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Solution {
    let mut perm: Vec<usize> = (1..=n).collect();
    perm.shuffle(rng);
    let mut cuts: Vec<usize> = (1..n).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts.into_iter().take(k - 1).collect();
    cuts.sort();
    let mut routes = Vec::new();
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(n)) {
        let mut r = vec![0];
        r.extend_from_slice(&perm[prev..c]);
        r.push(n + 1);
        routes.push(r);
        prev = c;
    }
    Solution { routes }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn fewer_vehicles_always_cost_less(seed in any::<u64>(), n in 2usize..30) {
        let inst = generate_cvrptw(seed, n, &GenProfile::cvrptw()).unwrap();
        let d = travel_matrix(&inst);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k1 = rng.gen_range(1..=n);
        let k2 = rng.gen_range(1..=n);
        prop_assume!(k1 != k2);
        let (a, b) = (random_solution(n, k1, &mut rng), random_solution(n, k2, &mut rng));
        let ca = solution_cost(&a, &inst, &d, Objective::VehiclesThenDistance).unwrap();
        let cb = solution_cost(&b, &inst, &d, Objective::VehiclesThenDistance).unwrap();
        prop_assert_eq!(k1 < k2, ca < cb);
    }

    #[test]
    fn generated_instances_validate(seed in any::<u64>(), n in 1usize..40, p_tw in 0.0f64..=1.0) {
        let mut profile = GenProfile::cvrptw();
        profile.p_tw = p_tw;
        let inst = generate_cvrptw(seed, n, &profile).unwrap();
        prop_assert!(validate_instance(&inst).is_empty());
        prop_assert_eq!(inst.n_customers(), n);
        let mut profile = GenProfile::pdptw();
        profile.p_tw = p_tw;
        let pdp = generate_pdptw(seed, n.min(20), &profile).unwrap();
        prop_assert!(validate_pdp_instance(&pdp).is_empty());
    }

    #[test]
    fn instance_text_round_trips(seed in any::<u64>(), n in 1usize..15) {
        let inst = generate_cvrptw(seed, n, &GenProfile::cvrptw()).unwrap();
        let ParsedInstance::Vrptw(once) = parse_instance_text(&write_instance(&inst)).unwrap() else {
            panic!("expected a vrptw instance")
        };
        prop_assert_eq!(&once.nodes, &inst.nodes);
        prop_assert_eq!(parse_instance_text(&write_instance(&once)).unwrap(), ParsedInstance::Vrptw(once));

        let pdp = generate_pdptw(seed, n, &GenProfile::pdptw()).unwrap();
        let ParsedInstance::Pdptw(once) = parse_instance_text(&write_instance(&pdp)).unwrap() else {
            panic!("expected a pdptw instance")
        };
        prop_assert_eq!(&once.nodes, &pdp.nodes);
        prop_assert_eq!(parse_instance_text(&write_instance(&once)).unwrap(), ParsedInstance::Pdptw(once));
    }

    #[test]
    fn distances_are_a_metric(seed in any::<u64>(), n in 1usize..12) {
        let inst = generate_cvrptw(seed, n, &GenProfile::cvrptw()).unwrap();
        let d = travel_matrix(&inst);
        for i in 0..d.len() {
            prop_assert_eq!(d.get(i, i), 0.0);
            for j in 0..d.len() {
                prop_assert_eq!(d.get(i, j), d.get(j, i));
                for k in 0..d.len() {
                    prop_assert!(d.get(i, k) <= d.get(i, j) + d.get(j, k) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn random_cvrptw_rollouts_are_valid(seed in any::<u64>(), n in 1usize..25) {
        let inst = generate_cvrptw(seed, n, &GenProfile::cvrptw()).unwrap();
        let d = travel_matrix(&inst);
        let env = CvrptwEnv::new(&inst, &d, TwMode::Hard);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let mut s = env.initial_state();
        while !s.is_terminal() {
            let mask = env.feasible_mask(&s);
            let acts: Vec<usize> = (0..mask.len()).filter(|&a| mask[a]).collect();
            prop_assert!(!acts.is_empty());
            s = env.step(&s, *acts.choose(&mut rng).unwrap()).unwrap().next_state;
        }
        let sol = env.solution(&s);
        prop_assert!(validate_solution(&sol, &inst, &d).is_empty());
    }

    #[test]
    fn random_pdptw_rollouts_are_valid(seed in any::<u64>(), n in 1usize..12) {
        let inst = generate_pdptw(seed, n, &GenProfile::pdptw()).unwrap();
        let d = travel_matrix(&inst);
        let env = PdptwEnv::new(&inst, &d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let mut s = env.initial_state();
        while !s.is_terminal() {
            let acts = env.feasible_actions(&s);
            prop_assert!(!acts.is_empty());
            s = env.step(&s, *acts.choose(&mut rng).unwrap()).unwrap();
        }
        let sol = env.solution(&s);
        prop_assert!(validate_solution(&sol, &inst, &d).is_empty(), "{:?}", validate_solution(&sol, &inst, &d));
    }
}
