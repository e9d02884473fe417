use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DMatrix;
use std::hint::black_box;

use prt_core::models::{example2, siwr, SiwrOptions, SiwrSystem, SIWR_GAMMA, SIWR_THETA_HAT};
use prt_core::ode::linspace;
use prt_core::{
    average_sfim, eigendecompose, integrate, jacobian_fd, sample, FdOptions, ParameterSpace, SampleScheme,
    Tolerances,
};

fn spd(n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 13) % 11) as f64 - 5.0);
    &a * a.transpose()
}

fn eigen(c: &mut Criterion) {
    for n in [4, 24] {
        let m = spd(n);
        c.bench_function(&format!("jacobi_eigen_{n}"), |b| b.iter(|| eigendecompose(black_box(&m), 1e-8).unwrap()));
    }
}

fn jacobian(c: &mut Criterion) {
    let model = siwr(&SIWR_THETA_HAT, &SiwrOptions::default()).unwrap();
    let fd = FdOptions::with_step(1e-4);
    c.bench_function("fd_jacobian_siwr", |b| b.iter(|| jacobian_fd(&model, black_box(&SIWR_THETA_HAT), &fd).unwrap()));
}

fn ode(c: &mut Criterion) {
    let system = SiwrSystem { gamma: SIWR_GAMMA, y0: 1.0, w0: 0.0 };
    let times = linspace(0.0, 300.0, 21);
    let tol = Tolerances::new(1e-11, 1e-17);
    c.bench_function("integrate_siwr", |b| {
        b.iter(|| integrate(&system, black_box(&SIWR_THETA_HAT), (0.0, 300.0), &times, tol).unwrap())
    });
}

fn average(c: &mut Criterion) {
    let space = ParameterSpace::new(vec!["theta1".into(), "theta2".into()], vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
    let s = sample(&space, SampleScheme::Lhs, 1000, 0).unwrap();
    let model = example2();
    c.bench_function("average_sfim_example2_1000", |b| {
        b.iter(|| average_sfim(&model, black_box(&s), &FdOptions::default(), 1e-8).unwrap())
    });
}

criterion_group!(benches, eigen, jacobian, ode, average);
criterion_main!(benches);
