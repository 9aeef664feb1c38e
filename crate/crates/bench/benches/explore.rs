use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use flowlock::explore::successors;
use flowlock::invariants::declared_checks;
use flowlock::symmetry::Symmetry;
use flowlock::{reach, ReachOptions};
use flowlock_bench::{german, states};

fn reach_german(c: &mut Criterion) {
    let m = german(3);
    let checks = declared_checks(&m);
    let mut g = c.benchmark_group("reach_german_n3");
    g.sample_size(10);
    for (name, symmetry, workers) in [
        ("plain_1", false, 1),
        ("plain_all", false, 0),
        ("sym_1", true, 1),
    ] {
        let opts = ReachOptions {
            symmetry,
            workers,
            ..Default::default()
        };
        g.bench_function(name, |b| {
            b.iter(|| reach(&m, &checks, &opts).unwrap().states)
        });
    }
    g.finish();
}

fn per_state(c: &mut Criterion) {
    let m = german(3);
    let sym = Symmetry::new(&m).unwrap();
    let all = states(&m);
    let sample: Vec<_> = all.iter().step_by(all.len() / 256).cloned().collect();
    let packed: Vec<_> = sample.iter().map(|s| m.layout.pack(s)).collect();

    c.bench_function("pack", |b| {
        b.iter(|| {
            for s in &sample {
                black_box(m.layout.pack(s));
            }
        })
    });
    c.bench_function("unpack", |b| {
        b.iter(|| {
            for p in &packed {
                black_box(m.layout.unpack(p));
            }
        })
    });
    c.bench_function("canonicalize", |b| {
        b.iter(|| {
            for s in &sample {
                black_box(sym.canonicalize(s));
            }
        })
    });
    c.bench_function("successors", |b| {
        b.iter_batched(
            || sample.clone(),
            |v| {
                for s in &v {
                    black_box(successors(&m, s).unwrap());
                }
            },
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, reach_german, per_state);
criterion_main!(benches);
