//! Timings for the hot numerical kernels: Hermitian eigendecomposition,
//! log-derivative solves, dense-grid measurement statistics, Monte Carlo
//! sampling, and the group-correction matrix.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use num_complex::Complex64;

use qcrb_bench::dense_hermitian;
use qcrb_core::bounds::{k_matrix, StructureConstants};
use qcrb_core::logderiv::{fisher_sld, sld};
use qcrb_core::matkernel::hermitian_eigen;
use qcrb_core::povm::{builtin_heterodyne, builtin_spectral, error_matrices, mc_error_matrix};
use qcrb_core::states::{fock_ops, thermal_state};
use qcrb_core::{CMatrix, GeneratorSet, ParamPoint, StateFamily, Tolerances};

fn thermal_family(dim: usize, nbar: f64, tol: &Tolerances) -> StateFamily {
    let ops = fock_ops(dim).unwrap();
    StateFamily::canonical_real(
        thermal_state(dim, nbar, tol).unwrap(),
        GeneratorSet::new(vec![ops.n.clone()]).unwrap(),
        tol,
    )
    .unwrap()
}

fn bench_eigen(c: &mut Criterion) {
    let tol = Tolerances::standard();
    let m = dense_hermitian(64);
    c.bench_function("hermitian_eigen_dim64", |b| {
        b.iter(|| hermitian_eigen(black_box(&m), &tol).unwrap())
    });
}

fn bench_sld(c: &mut Criterion) {
    let tol = Tolerances::standard();
    let fam = thermal_family(32, 1.0, &tol);
    let p = ParamPoint::Real(vec![0.2]);
    c.bench_function("sld_fisher_thermal_dim32", |b| {
        b.iter(|| {
            let set = sld(black_box(&fam), black_box(&p), &tol).unwrap();
            let rho = fam.evaluate(&p).unwrap();
            fisher_sld(&rho, &set).unwrap()
        })
    });
}

fn bench_heterodyne(c: &mut Criterion) {
    let tol = Tolerances::standard();
    let dim = 12;
    let povm = builtin_heterodyne(dim, 6.0, 80, &tol).unwrap();
    let fam = StateFamily::canonical_complex(
        qcrb_core::states::pure_fock(dim, 0, &tol).unwrap(),
        GeneratorSet::new(vec![fock_ops(dim).unwrap().a.clone()]).unwrap(),
        &tol,
    )
    .unwrap();
    let rho = fam
        .evaluate(&ParamPoint::from_betas(&[Complex64::new(0.2, 0.1)]))
        .unwrap();
    c.bench_function("heterodyne_error_matrices_6400_outcomes", |b| {
        b.iter(|| error_matrices(black_box(&povm), black_box(&rho), None, &tol).unwrap())
    });
}

fn bench_mc(c: &mut Criterion) {
    let tol = Tolerances::standard();
    let dim = 16;
    let ops = fock_ops(dim).unwrap();
    let povm = builtin_spectral(std::slice::from_ref(&ops.n), &tol).unwrap();
    let rho = thermal_state(dim, 1.0, &tol).unwrap();
    c.bench_function("mc_error_matrix_10k_samples", |b| {
        b.iter(|| mc_error_matrix(black_box(&povm), black_box(&rho), None, 10_000, 7).unwrap())
    });
}

fn bench_k_matrix(c: &mut Criterion) {
    let tol = Tolerances::standard();
    let z = Complex64::new;
    let sx = CMatrix::from_row_slice(2, 2, &[z(0.0, 0.0), z(0.5, 0.0), z(0.5, 0.0), z(0.0, 0.0)]);
    let sy = CMatrix::from_row_slice(2, 2, &[z(0.0, 0.0), z(0.0, -0.5), z(0.0, 0.5), z(0.0, 0.0)]);
    let sz = CMatrix::from_row_slice(2, 2, &[z(0.5, 0.0), z(0.0, 0.0), z(0.0, 0.0), z(-0.5, 0.0)]);
    let sc = StructureConstants::from_generators(&[sx, sy, sz], 1.0, &tol).unwrap();
    let theta = [0.3, -0.2, 0.5];
    c.bench_function("k_matrix_su2", |b| {
        b.iter(|| k_matrix(black_box(&sc), black_box(&theta), &tol).unwrap())
    });
}

criterion_group!(
    kernels,
    bench_eigen,
    bench_sld,
    bench_heterodyne,
    bench_mc,
    bench_k_matrix
);
criterion_main!(kernels);
