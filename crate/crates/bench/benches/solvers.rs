use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::{Vector2, Vector3};
use rand::Rng;
use std::hint::black_box;

use nonsac::datagen::{gen_pcr, gen_relpose, SceneConfig};
use nonsac::estimator::pcr::{score_correspondences, Pcr99Config};
use nonsac::estimator::pnp::p3p_solve;
use nonsac::estimator::relpose::five_point_solve;
use nonsac::estimator::{Pair2D2D, Pair3D2D};
use nonsac::geometry::{random_rotation, sampson_error};
use nonsac::rng::rng_from_seed;
use nonsac::scoring::tlp_cost;
use nonsac::{EssentialMatrix, RigidTransform};

fn five_point(c: &mut Criterion) {
    let (pairs, _) = gen_relpose(&SceneConfig::new(5, 0.0, 0.0), 1).unwrap();
    let pairs: [Pair2D2D; 5] = pairs.try_into().unwrap();
    c.bench_function("five_point_solve", |b| b.iter(|| five_point_solve(black_box(&pairs))));
}

fn p3p(c: &mut Criterion) {
    let mut rng = rng_from_seed(2);
    let pose = RigidTransform::new(random_rotation(&mut rng), Vector3::new(0.1, -0.2, 0.3));
    let pairs: [Pair3D2D; 3] = std::array::from_fn(|_| {
        let cam = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 1.0) * rng.random_range(2.0..6.0);
        Pair3D2D::new(pose.inverse().apply(&cam), Vector2::new(cam.x / cam.z, cam.y / cam.z))
    });
    c.bench_function("p3p_solve", |b| b.iter(|| p3p_solve(black_box(&pairs))));
}

fn sampson(c: &mut Criterion) {
    let (pairs, gt) = gen_relpose(&SceneConfig::new(1000, 0.002, 0.5), 3).unwrap();
    let e = EssentialMatrix::from_pose(&gt.pose).unwrap();
    c.bench_function("sampson_1000", |b| {
        b.iter(|| pairs.iter().map(|p| sampson_error(&p.x1, &p.x2, black_box(&e))).sum::<f64>())
    });
}

fn tlp(c: &mut Criterion) {
    let mut rng = rng_from_seed(4);
    let residuals: Vec<f64> = (0..10_000).map(|_| rng.random_range(0.0..0.1)).collect();
    c.bench_function("tlp_cost_10k", |b| b.iter(|| tlp_cost(black_box(&residuals), 0.1, 0.01)));
}

// Pairwise scoring is quadratic in the sample size and dominates PCR-99.
fn pcr_scoring(c: &mut Criterion) {
    let mut group = c.benchmark_group("pcr_score_correspondences");
    group.sample_size(10);
    for n in [500, 1000, 2000] {
        let (pairs, _) = gen_pcr(&SceneConfig::new(n, 0.01, 0.99), 5).unwrap();
        let config = Pcr99Config::for_noise(0.01);
        group.bench_with_input(BenchmarkId::from_parameter(n), &pairs, |b, pairs| {
            b.iter(|| score_correspondences(pairs, &config, 0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, five_point, p3p, sampson, tlp, pcr_scoring);
criterion_main!(benches);
