use criterion::{black_box, criterion_group, criterion_main, Criterion};
use heatlab_core::{
    dirichlet_heat_kernel, fujita_product, heat_kernel, integrate_mol, DirichletOperator, MolOptions, MuMode, Output,
    Problem, WeightedGraph,
};

fn eigensolve(c: &mut Criterion) {
    let g = WeightedGraph::lattice(2, 12, MuMode::Counting).unwrap();
    let ball = g.ball(g.point(&[0, 0]).unwrap(), 10).unwrap();
    c.bench_function("dirichlet operator, Z2 ball r=10", |b| {
        b.iter(|| DirichletOperator::new(black_box(ball.clone())).unwrap())
    });
    let op = DirichletOperator::new(ball).unwrap();
    c.bench_function("kernel matrix from eigenpairs, Z2 ball r=10", |b| {
        b.iter(|| dirichlet_heat_kernel(&op, black_box(1.0)).unwrap())
    });
}

fn exhaustion(c: &mut Criterion) {
    let g = WeightedGraph::lattice(1, 200, MuMode::Degree).unwrap();
    let o = g.point(&[0]).unwrap();
    c.bench_function("exhausted kernel p(4,0,3) on Z", |b| {
        b.iter(|| heat_kernel(&g, black_box(4.0), o, o + 3, 1e-10).unwrap())
    });
}

fn mol(c: &mut Criterion) {
    let g = WeightedGraph::lattice(1, 60, MuMode::Degree).unwrap();
    let ball = g.ball(g.point(&[0]).unwrap(), 50).unwrap();
    let p = Problem::new(ball.clone(), 2.0, vec![0.5; ball.len()], 10.0).unwrap();
    let opts = MolOptions {
        output: Output::Times(Vec::new()),
        ..Default::default()
    };
    c.bench_function("MOL to blow-up, Z ball r=50, alpha=2", |b| {
        b.iter(|| integrate_mol(black_box(&p), &opts).unwrap())
    });
}

fn product(c: &mut Criterion) {
    c.bench_function("Fujita product alpha=1", |b| b.iter(|| fujita_product(black_box(1.0), 1e-12).unwrap()));
}

criterion_group!(benches, eigensolve, exhaustion, mol, product);
criterion_main!(benches);
