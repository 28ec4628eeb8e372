use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spherekit::convolutions::{DiscoOperator, FilterBasis, MixWeights};
use spherekit::exec;
use spherekit::harmonics::ShtPlan;
use spherekit::metrics::{crps_field, CrpsVariant};
use spherekit::{EnsembleField, GridSpec, SphericalField};

fn random_field(grid: &Arc<GridSpec>, channels: usize, rng: &mut impl Rng) -> SphericalField {
    SphericalField::from_fn(grid.clone(), channels, |_, _, _| rng.random_range(-1.0..1.0))
}

fn sht_forward(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = Arc::new(GridSpec::gaussian(64, 128).unwrap());
    let plan = ShtPlan::new(g.clone(), 64, 64).unwrap();
    let u = random_field(&g, 8, &mut rng);
    let mut group = c.benchmark_group("sht_forward_64x128x8");
    group.bench_function("parallel", |b| b.iter(|| plan.forward(black_box(&u)).unwrap()));
    group.bench_function("sequential", |b| b.iter(|| exec::sequential(|| plan.forward(black_box(&u)).unwrap())));
    group.finish();
}

fn disco_apply(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let gin = Arc::new(GridSpec::equiangular(48, 96).unwrap());
    let gout = Arc::new(GridSpec::gaussian(24, 48).unwrap());
    let op = DiscoOperator::assemble(gin.clone(), gout, FilterBasis::morlet(0.3, 2)).unwrap();
    let k = op.n_basis();
    let mix = MixWeights::new(8, 8, k, (0..64 * k).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let u = random_field(&gin, 8, &mut rng);
    let mut group = c.benchmark_group("disco_apply_48x96_to_24x48");
    group.bench_function("parallel", |b| b.iter(|| op.apply(black_box(&u), &mix).unwrap()));
    group.bench_function("sequential", |b| b.iter(|| exec::sequential(|| op.apply(black_box(&u), &mix).unwrap())));
    group.finish();
}

fn ensemble_crps(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = Arc::new(GridSpec::gaussian(32, 64).unwrap());
    let members: Vec<_> = (0..16).map(|_| random_field(&g, 4, &mut rng)).collect();
    let ens = EnsembleField::from_members(&members).unwrap();
    let obs = random_field(&g, 4, &mut rng);
    let mut group = c.benchmark_group("crps_fair_16x32x64x4");
    group.bench_function("parallel", |b| b.iter(|| crps_field(black_box(&ens), &obs, CrpsVariant::Fair).unwrap()));
    group.bench_function("sequential", |b| {
        b.iter(|| exec::sequential(|| crps_field(black_box(&ens), &obs, CrpsVariant::Fair).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, sht_forward, disco_apply, ensemble_crps);
criterion_main!(benches);
