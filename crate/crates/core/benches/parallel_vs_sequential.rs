use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use amroute::cvrptw::TwMode;
use amroute::exec::Execution;
use amroute::policy::{AttentionModel, PolicyConfig, Variant};
use amroute::solution::Objective;
use amroute::training::{evaluate_greedy, held_out, train_step, TrainConfig};

fn config(variant: Variant) -> TrainConfig {
    let mut cfg = TrainConfig::new(variant);
    cfg.problem_size = 10;
    cfg.batch = 8;
    cfg.pomo_starts = 8;
    cfg.lr = 1e-3;
    cfg.policy = PolicyConfig { d_emb: 32, layers: 2, heads: 4, ff_dim: 64, ..PolicyConfig::new(variant) };
    cfg
}

fn train_steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("train_step");
    group.sample_size(10);
    for variant in [Variant::Cvrptw, Variant::Cpdptw] {
        let cfg = config(variant);
        for exec in [Execution::Sequential, Execution::Parallel] {
            let mut model = AttentionModel::new(cfg.policy, 1).unwrap();
            let mut step = 0;
            group.bench_with_input(BenchmarkId::new(format!("{variant}"), format!("{exec:?}")), &exec, |b, &exec| {
                b.iter(|| {
                    train_step(&mut model, &cfg, step, exec).unwrap();
                    step += 1;
                })
            });
        }
    }
    group.finish();
}

fn greedy_eval(c: &mut Criterion) {
    let mut group = c.benchmark_group("greedy_eval");
    group.sample_size(10);
    let cfg = config(Variant::Cvrptw);
    let model = AttentionModel::new(cfg.policy, 1).unwrap();
    let insts = held_out(Variant::Cvrptw, 20, 32, 0).unwrap();
    for exec in [Execution::Sequential, Execution::Parallel] {
        group.bench_function(format!("{exec:?}"), |b| {
            b.iter(|| evaluate_greedy(&model, &insts, Objective::Distance, TwMode::Hard, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, train_steps, greedy_eval);
criterion_main!(benches);
