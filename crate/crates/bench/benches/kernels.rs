use atlab_core::algebra::{condexp_petz, decompose_algebra, random_block_algebra, random_faithful_state};
use atlab_core::entropy::relative_entropy;
use atlab_core::generators::{davies_generator, HamiltonianSpec, RateProfile};
use atlab_core::linops::{eigh, pauli_string, r};
use atlab_core::sampling::{random_density, random_hermitian, rng};
use criterion::{black_box, criterion_group, criterion_main, Criterion};

fn spectral(c: &mut Criterion) {
    let mut g = rng(1);
    for d in [8, 32] {
        let x = random_hermitian(d, &mut g);
        c.bench_function(&format!("eigh d={d}"), |b| b.iter(|| eigh(black_box(&x)).unwrap()));
    }
    let rho = random_density(16, &mut g);
    let sigma = random_density(16, &mut g);
    c.bench_function("relative entropy d=16", |b| {
        b.iter(|| relative_entropy(black_box(&rho), black_box(&sigma)).unwrap())
    });
}

fn conditional_expectations(c: &mut Criterion) {
    let dec = decompose_algebra(&random_block_algebra(&[(2, 2), (1, 3), (2, 1)], 2).unwrap()).unwrap();
    let sigma = random_faithful_state(9, 3);
    c.bench_function("Petz conditional expectation d=9", |b| {
        b.iter(|| condexp_petz(black_box(&dec), black_box(&sigma)).unwrap())
    });
}

fn generators(c: &mut Criterion) {
    let h = pauli_string("ZZI").unwrap() + pauli_string("IZZ").unwrap() + pauli_string("ZII").unwrap() * r(0.3);
    let spec = HamiltonianSpec::new(h, 1.0).unwrap();
    let couplings = [pauli_string("XII").unwrap(), pauli_string("IXI").unwrap()];
    c.bench_function("Davies generator three qubits", |b| {
        b.iter(|| davies_generator(black_box(&spec), black_box(&couplings), &RateProfile::Glauber).unwrap())
    });
}

criterion_group!(benches, spectral, conditional_expectations, generators);
criterion_main!(benches);
