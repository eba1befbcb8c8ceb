use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use pbpe_core::bellman::{build_residuals, lstd_solve, NoiseModel, Ridge};
use pbpe_core::envs::{collect_trajectories, MountainCarVariant, Policy, VariantTag};
use pbpe_core::features::tile_code;
use pbpe_core::mixing::gamma_matrix;
use pbpe_core::pacbayes::{select_lambda, BoundConstants};
use pbpe_core::{FeatureMap, FiniteChain, PosteriorFamilyConfig, TileCodingConfig};

fn kernels(c: &mut Criterion) {
    let features = TileCodingConfig::mountain_car();
    let variant = MountainCarVariant::new(VariantTag::AltitudeReward, 0.9).unwrap();
    let data = collect_trajectories(&variant, &Policy::BangBang, 100, 5, 1).unwrap();

    c.bench_function("tile_code", |b| b.iter(|| tile_code(black_box(&[-0.5, 0.01]), &features)));

    c.bench_function("lstd_500", |b| {
        b.iter(|| lstd_solve(black_box(&data), &features, 0.9, Ridge::Auto).unwrap())
    });

    let theta_hat = lstd_solve(&data, &features, 0.9, Ridge::Auto).unwrap().theta;
    let residuals = build_residuals(&data, &features, 0.9).unwrap();
    let cfg = PosteriorFamilyConfig::new(vec![0.5; features.dim()], 0.01, theta_hat, 0.01).unwrap();
    let mu0 = cfg.prior().unwrap();
    let noise = NoiseModel::zero(features.dim());
    let constants = BoundConstants::derive(500, 0.05, 0.9, 1.0, 25.0)
        .unwrap()
        .with_sample_size_threshold(1.0)
        .unwrap();
    c.bench_function("select_lambda_101", |b| {
        b.iter(|| select_lambda(&cfg, &mu0, black_box(&residuals), &noise, &constants, 0.01).unwrap())
    });

    let chain = FiniteChain::two_state(0.3, 0.2, [0.0, 1.0], 0.9).unwrap();
    c.bench_function("gamma_matrix_200", |b| b.iter(|| gamma_matrix(black_box(&chain), 200).unwrap()));
}

criterion_group!(benches, kernels);
criterion_main!(benches);
