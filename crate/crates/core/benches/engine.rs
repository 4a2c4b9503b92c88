use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use coevonet::engine::{sweep, Policy, SimConfig, Simulation};
use coevonet::Execution;

fn config(side: usize) -> SimConfig {
    SimConfig {
        rows: side,
        cols: side,
        horizon: 50,
        seed: 1,
        ..Default::default()
    }
}

fn steps(c: &mut Criterion) {
    let mut g = c.benchmark_group("run_50_steps");
    g.sample_size(10);
    for side in [10, 20] {
        for exec in [Execution::Sequential, Execution::Parallel] {
            g.bench_with_input(
                BenchmarkId::new(format!("{exec:?}"), side),
                &side,
                |b, &side| {
                    b.iter(|| {
                        Simulation::new(config(side))
                            .unwrap()
                            .with_execution(exec)
                            .run()
                    })
                },
            );
        }
    }
    g.finish();
}

fn sweeps(c: &mut Criterion) {
    let mut g = c.benchmark_group("sweep_3x3");
    g.sample_size(10);
    let cfg = SimConfig {
        horizon: 30,
        ..config(6)
    };
    let grid = [0.3, 0.6, 0.9];
    for exec in [Execution::Sequential, Execution::Parallel] {
        g.bench_function(format!("{exec:?}"), |b| {
            b.iter(|| sweep(&cfg, &grid, &grid, 1, Policy::QLearning, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, steps, sweeps);
criterion_main!(benches);
