//! Hot-path benchmarks: the dense kernels, one message-passing step, and a
//! full forecast window forward and forward+backward at training batch
//! shapes.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use plumecast::featurize::{EDGE_FEATURE_COUNT, NODE_FEATURE_COUNT};
use plumecast::model::{
    forward, rollout, spatial_step, GraphView, ModelKind, ModelParams, ModelSpec,
};
use plumecast::numerics::{backward, mse_loss, Tape, Tensor};

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Ring-of-12 graph with chords, roughly the default synthetic world's size.
fn bench_graph() -> GraphView {
    let n = 12;
    let mut edges = Vec::new();
    for i in 0..n {
        for d in [1usize, 2, 3] {
            let j = (i + d) % n;
            edges.push((i, j));
            edges.push((j, i));
        }
    }
    GraphView::new(n, &edges).unwrap()
}

fn spec() -> ModelSpec {
    let mut s = ModelSpec::new(ModelKind::Pm25Gnn);
    s.e_dim = 16;
    s.z_dim = 16;
    s.h_dim = 32;
    s.psi_hidden = 16;
    s
}

fn gnn_params(spec: &ModelSpec, n: usize) -> plumecast::model::Pm25GnnParams {
    match ModelParams::init(spec, n).unwrap() {
        ModelParams::Pm25Gnn(p) => p,
        _ => unreachable!(),
    }
}

fn bench_matmul(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a = rand_tensor(&mut rng, &[576, 31]);
    let b = rand_tensor(&mut rng, &[31, 32]);
    c.bench_function("matmul_576x31x32", |bench| {
        bench.iter(|| black_box(a.matmul(&b).unwrap()))
    });
}

fn bench_spatial_step(c: &mut Criterion) {
    let spec = spec();
    let graph = bench_graph().replicate(8);
    let params = gnn_params(&spec, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let xi = rand_tensor(&mut rng, &[graph.n_nodes, 1 + NODE_FEATURE_COUNT]);
    let q = rand_tensor(&mut rng, &[graph.n_edges(), EDGE_FEATURE_COUNT]);
    c.bench_function("spatial_step_batch8", |bench| {
        bench.iter(|| black_box(spatial_step(&xi, &q, &graph, &params, false).unwrap()))
    });
}

fn bench_rollout(c: &mut Criterion) {
    let spec = spec();
    let graph = bench_graph().replicate(8);
    let params = gnn_params(&spec, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x0 = rand_tensor(&mut rng, &[graph.n_nodes, 1]);
    let p = rand_tensor(&mut rng, &[24, graph.n_nodes, NODE_FEATURE_COUNT]);
    let q = rand_tensor(&mut rng, &[24, graph.n_edges(), EDGE_FEATURE_COUNT]);
    c.bench_function("rollout_t24_batch8_forward", |bench| {
        bench.iter(|| black_box(rollout(&x0, &p, &q, &graph, &params, &spec).unwrap()))
    });

    let truth = rand_tensor(&mut rng, &[24, graph.n_nodes]);
    let model = ModelParams::Pm25Gnn(params);
    c.bench_function("rollout_t24_batch8_train_step", |bench| {
        bench.iter(|| {
            let tape = Tape::new();
            let watched = model.watch(&tape);
            let pred = forward(&spec, &watched, &x0, &p, &q, &graph).unwrap();
            let pred2 = pred.reshape(vec![24, graph.n_nodes]).unwrap();
            let loss = mse_loss(&pred2, &truth).unwrap();
            let grads = backward(&loss).unwrap();
            black_box(grads.get(watched.tensors()[0]).unwrap())
        })
    });
}

criterion_group!(benches, bench_matmul, bench_spatial_step, bench_rollout);
criterion_main!(benches);
