use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use pomdp_forge::finite::fixtures::{two_state_history, two_state_multiple_mds};
use pomdp_forge::finite::{enumerate_distribution, UniformPolicy};
use pomdp_forge::verify::{enumerate_mds, MdsMode, Measure};
use pomdp_forge::wrappers::{convolve_all, deconvolve};
use pomdp_forge::{equivalent_hdp, Family, Process};
use pomdp_forge_bench::{fresh_env, linproc_spec, play_episode, pomdps, real_sequence};

fn stepping(c: &mut Criterion) {
    let mut group = c.benchmark_group("episode");
    for (name, wrapped) in [("plain", false), ("wrapped", true)] {
        let mut env = fresh_env(&linproc_spec(Family::NoEq, 4, wrapped));
        let mut ep = 0u64;
        group.bench_function(BenchmarkId::new("no_eq_k4", name), |b| {
            b.iter(|| {
                ep += 1;
                black_box(play_episode(env.as_mut(), ep))
            })
        });
    }
    group.finish();
}

fn deconvolution(c: &mut Criterion) {
    let mut group = c.benchmark_group("deconvolve");
    for len in [64usize, 256, 1024] {
        let (kernel, states) = real_sequence(len);
        let obs = convolve_all(&kernel, &states).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(len), &obs, |b, obs| {
            b.iter(|| deconvolve(&kernel, black_box(obs)).unwrap())
        });
    }
    group.finish();
}

fn exact(c: &mut Criterion) {
    let instances = pomdps(8);
    c.bench_function("equivalent_hdp/largest_shape", |b| {
        b.iter(|| {
            for p in &instances {
                black_box(equivalent_hdp(p).unwrap());
            }
        })
    });
    c.bench_function("enumerate/largest_shape", |b| {
        b.iter(|| {
            for p in &instances {
                black_box(enumerate_distribution(Process::Pomdp(p), &UniformPolicy).unwrap());
            }
        })
    });
    let fixture = two_state_multiple_mds();
    let (obs, actions) = two_state_history();
    c.bench_function("mds/two_state", |b| {
        b.iter(|| {
            enumerate_mds(Process::Pomdp(&fixture), MdsMode::Pomdp, &obs, &actions, Measure::UniformRandom).unwrap()
        })
    });
}

criterion_group!(benches, stepping, deconvolution, exact);
criterion_main!(benches);
