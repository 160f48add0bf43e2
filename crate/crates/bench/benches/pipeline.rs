use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use tcpa_bench::corpus_jobs;
use tcpa_core::crypto::seeded_rng;
use tcpa_core::harness::{run_isolated, run_plain, BenchConfig};
use tcpa_core::protocol::{decode_frame, encode_frame, ProtocolMessage};
use tcpa_core::solver::{bin, check_sat, cmp, BvOp, CheckBudget, CmpOp, PathCondition, SymExpr};
use tcpa_core::tee::Manufacturer;

fn analysis(c: &mut Criterion) {
    let cfg = BenchConfig::default();
    let mut rng = seeded_rng(1);
    let man = Manufacturer::new(&mut rng);
    let mut g = c.benchmark_group("corpus");
    g.sample_size(10);
    for job in corpus_jobs() {
        g.bench_function(format!("plain/{}", job.name), |b| b.iter(|| run_plain(black_box(&job), &cfg).unwrap()));
        g.bench_function(format!("isolated/{}", job.name), |b| {
            b.iter(|| run_isolated(black_box(&job), &cfg, &man, &mut rng).unwrap())
        });
    }
    g.finish();
}

fn solver(c: &mut Criterion) {
    let x = SymExpr::var("x", 32);
    let masked = bin(BvOp::And, x, SymExpr::constant(32, 0xff));
    let product = bin(BvOp::Mul, masked, SymExpr::constant(32, 3));
    let mut pc = PathCondition::new();
    pc.push(cmp(CmpOp::Eq, product, SymExpr::constant(32, 381)), true);
    c.bench_function("solver/masked_linear", |b| b.iter(|| check_sat(black_box(&pc), &CheckBudget::default())));
}

fn framing(c: &mut Criterion) {
    let msg = ProtocolMessage::SubmitJob {
        s_t: vec![7; 4096],
        e: vec![9; 4096],
    };
    c.bench_function("frame/roundtrip_8k", |b| b.iter(|| decode_frame(&encode_frame(black_box(&msg))).unwrap()));
}

criterion_group!(benches, analysis, solver, framing);
criterion_main!(benches);
