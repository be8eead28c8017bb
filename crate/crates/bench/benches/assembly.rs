use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fefg::fracdiff::{frac_b_all, FracRules};
use fefg::plate::{assemble, tangent, Discretization, ResidualForm};
use fefg_bench::square_plate;
use std::hint::black_box;

fn btilde(c: &mut Criterion) {
    let mut g = c.benchmark_group("btilde_all_gauss_points");
    g.sample_size(10);
    for n in [8usize, 12, 16] {
        let case = square_plate(n, 0.8, 0.5);
        let rules = FracRules::new(case.n_gjp, 0.8).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(case.n_dof()), &case, |b, case| {
            b.iter(|| {
                for gp in case.mesh.gauss_points() {
                    black_box(frac_b_all(gp.point, &case.frac, Some(&rules), &case.cloud).unwrap());
                }
            })
        });
    }
    g.finish();
}

fn stiffness(c: &mut Criterion) {
    let mut g = c.benchmark_group("linear_stiffness");
    g.sample_size(10);
    for n in [8usize, 12] {
        let disc = Discretization::build(&square_plate(n, 0.8, 0.5)).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(disc.n_dof()), &disc, |b, disc| {
            b.iter(|| black_box(assemble(disc, None)))
        });
    }
    g.finish();
}

fn newton_tangent(c: &mut Criterion) {
    let disc = Discretization::build(&square_plate(8, 0.8, 0.5)).unwrap();
    let u: Vec<f64> = (0..disc.n_dof()).map(|i| 1e-3 * (i as f64).sin()).collect();
    c.bench_function("tangent_8x8", |b| b.iter(|| black_box(tangent(&disc, &u, ResidualForm::Variational))));
}

criterion_group!(benches, btilde, stiffness, newton_tangent);
criterion_main!(benches);
