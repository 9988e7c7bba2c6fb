use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use edurepair_bench::synthetic_program;
use edurepair_core::metrics::{oracle, pass_at_k, rouge_at_k, rouge_l, tokenize_code};
use rand::{Rng, SeedableRng};

fn estimators(c: &mut Criterion) {
    let mut group = c.benchmark_group("pass_at_k");
    for n in [10usize, 100, 1000] {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| pass_at_k(black_box(n), black_box(n / 3), black_box(n / 2)).unwrap())
        });
    }
    group.finish();

    let mut rng = rand::rngs::StdRng::seed_from_u64(7);
    let mut group = c.benchmark_group("rouge_at_k");
    for n in [10usize, 100, 1000] {
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &scores, |b, s| {
            b.iter(|| rouge_at_k(black_box(s), black_box(5.min(s.len()))).unwrap())
        });
    }
    group.finish();

    let scores: Vec<f64> = (0..16).map(|_| rng.gen_range(0.0..=1.0)).collect();
    c.bench_function("rouge_at_k_enumeration_n16_k5", |b| {
        b.iter(|| oracle::brute_force_rouge_at_k(black_box(&scores), 5).unwrap())
    });
}

fn rouge(c: &mut Criterion) {
    let mut group = c.benchmark_group("rouge_l");
    for lines in [10usize, 50, 200] {
        let reference = synthetic_program(lines, 0);
        let candidate = synthetic_program(lines, 3);
        let (rt, ct) = (tokenize_code(&reference), tokenize_code(&candidate));
        group.bench_with_input(
            BenchmarkId::new("lcs", rt.len()),
            &(ct, rt),
            |b, (ct, rt)| b.iter(|| rouge_l(black_box(ct), black_box(rt))),
        );
        group.bench_with_input(BenchmarkId::new("tokenize", lines), &reference, |b, src| {
            b.iter(|| tokenize_code(black_box(src)).len())
        });
    }
    group.finish();
}

criterion_group!(benches, estimators, rouge);
criterion_main!(benches);
