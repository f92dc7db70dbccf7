// SPDX-License-Identifier: MIT OR Apache-2.0

use std::f64::consts::{PI, SQRT_2};

use featgeom::irreducibility::{
    binned_mi, hard_mixture_count, mixture_index, normalize_cloud, rank_clusters, score_cluster,
    separability_index, soft_mixture_objective, MixtureOptions, PointCloud2D, DEFAULT_EPS, MI_BINS,
};
use featgeom::numerics::Matrix;
use featgeom::synth::{sample_distribution, Distribution};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn cloud(kind: Distribution, n: usize, seed: u64) -> Matrix {
    sample_distribution(kind, n, seed).unwrap().values
}

/// Rotation by `angle`, scaling by `scale`, then a shift.
fn affine(points: &Matrix, angle: f64, scale: f64, shift: [f64; 2]) -> Matrix {
    let (s, c) = angle.sin_cos();
    Matrix::from_fn(points.rows(), 2, |i, j| {
        let (x, y) = (points[(i, 0)], points[(i, 1)]);
        let r = if j == 0 { c * x - s * y } else { s * x + c * y };
        scale * r + shift[j]
    })
}

/// Best tangent-band capture for a uniform circle: with unit `v` on the
/// radius-√2 normalized circle, `u = √2·cos φ + c` and `RMS(u) = √(1 + c²)`,
/// so the captured arc is a difference of arccosines. Grid search over `c`.
fn circle_mixture_oracle(eps: f64) -> f64 {
    let arc = |lo: f64, hi: f64| {
        let lo = (lo / SQRT_2).clamp(-1.0, 1.0);
        let hi = (hi / SQRT_2).clamp(-1.0, 1.0);
        (lo.acos() - hi.acos()) / PI
    };
    (0..=40_000)
        .map(|i| {
            let c = 4.0 * i as f64 / 40_000.0;
            let w = eps * (1.0 + c * c).sqrt();
            arc(-c - w, -c + w)
        })
        .fold(0.0, f64::max)
}

/// `2Φ(ε) − 1` by Simpson's rule on the standard normal density.
fn gaussian_mixture_oracle(eps: f64) -> f64 {
    let n = 2000;
    let h = 2.0 * eps / n as f64;
    let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    let mut sum = pdf(-eps) + pdf(eps);
    for i in 1..n {
        sum += pdf(-eps + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

#[test]
fn soft_objective_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let kinds = [
        Distribution::Circle2d,
        Distribution::Gaussian2d,
        Distribution::PlantedMixture2d { weight: 0.5 },
        Distribution::UniformSquare2d,
    ];
    for trial in 0..100u64 {
        let points = normalize_cloud(&cloud(kinds[trial as usize % 4], 60, trial)).unwrap();
        let v = [
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        ];
        let c: f64 = rng.sample(StandardNormal);
        let t = rng.random_range(0.2..1.0);
        let (_, grad) = soft_mixture_objective(&points, v, c, DEFAULT_EPS, t);
        let h = 1e-6;
        let f = |v: [f64; 2], c: f64| soft_mixture_objective(&points, v, c, DEFAULT_EPS, t).0;
        let numeric = [
            (f([v[0] + h, v[1]], c) - f([v[0] - h, v[1]], c)) / (2.0 * h),
            (f([v[0], v[1] + h], c) - f([v[0], v[1] - h], c)) / (2.0 * h),
            (f(v, c + h) - f(v, c - h)) / (2.0 * h),
        ];
        let diff = grad
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(
            diff / scale.max(1e-12) < 1e-4,
            "trial {trial}: relative error {}",
            diff / scale
        );
    }
}

#[test]
fn mi_is_periodic_in_pi() {
    let points = normalize_cloud(&cloud(
        Distribution::PlantedMixture2d { weight: 0.3 },
        5000,
        2,
    ))
    .unwrap();
    for i in 0..50 {
        let theta = i as f64 * 0.37;
        let a = binned_mi(&points, theta);
        let b = binned_mi(&points, theta + PI);
        assert!((a - b).abs() < 1e-10, "theta {theta}: {a} vs {b}");
    }
}

#[test]
fn independent_uniforms_have_small_mi() {
    let points = normalize_cloud(&cloud(Distribution::UniformSquare2d, 100_000, 5)).unwrap();
    assert!(binned_mi(&points, 0.0) < 0.05);
}

#[test]
fn circle_is_inseparable_and_gaussian_is_separable() {
    let circle = separability_index(&cloud(Distribution::Circle2d, 100_000, 1)).unwrap();
    assert!(circle.bits > 0.5, "circle S = {}", circle.bits);
    let gauss = separability_index(&cloud(Distribution::Gaussian2d, 100_000, 1)).unwrap();
    assert!(gauss.bits < 0.05, "gaussian S = {}", gauss.bits);
}

#[test]
fn planted_mixture_band_is_found() {
    let m = mixture_index(
        &cloud(Distribution::PlantedMixture2d { weight: 0.5 }, 5000, 0),
        DEFAULT_EPS,
        &MixtureOptions::default(),
    )
    .unwrap();
    assert!(m.fraction >= 0.5, "M = {}", m.fraction);
    assert!(!m.lr_halved);
}

#[test]
fn circle_mixture_matches_tangent_band_oracle() {
    let oracle = circle_mixture_oracle(DEFAULT_EPS);
    assert!((oracle - 0.2186).abs() < 1e-3, "oracle {oracle}");
    for seed in 0..2 {
        let m = mixture_index(
            &cloud(Distribution::Circle2d, 5000, seed),
            DEFAULT_EPS,
            &MixtureOptions {
                seed,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(
            (m.fraction - oracle).abs() <= 0.03,
            "seed {seed}: M = {}",
            m.fraction
        );
    }
}

#[test]
fn gaussian_mixture_matches_erf_oracle() {
    let oracle = gaussian_mixture_oracle(DEFAULT_EPS);
    assert!((oracle - 0.0797).abs() < 1e-4);
    // the sample maximum over bands overshoots the population value by a few
    // binomial standard deviations, hence the large sample
    let m = mixture_index(
        &cloud(Distribution::Gaussian2d, 20_000, 0),
        DEFAULT_EPS,
        &MixtureOptions::default(),
    )
    .unwrap();
    assert!((m.fraction - oracle).abs() <= 0.01, "M = {}", m.fraction);
}

#[test]
fn optimizer_beats_random_probes() {
    let kinds = [
        Distribution::Circle2d,
        Distribution::Gaussian2d,
        Distribution::PlantedMixture2d { weight: 0.3 },
        Distribution::UniformSquare2d,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for trial in 0..100u64 {
        let raw = cloud(kinds[trial as usize % 4], 200, trial);
        let m = mixture_index(
            &raw,
            DEFAULT_EPS,
            &MixtureOptions {
                seed: trial,
                ..Default::default()
            },
        )
        .unwrap();
        let points = normalize_cloud(&raw).unwrap();
        assert_eq!(
            m.fraction,
            hard_mixture_count(&points, m.v, m.c, DEFAULT_EPS)
        );
        for _ in 0..32 {
            let angle = rng.random_range(0.0..2.0 * PI);
            let c = 2.0 * rng.sample::<f64, _>(StandardNormal);
            let probe = hard_mixture_count(&points, [angle.cos(), angle.sin()], c, DEFAULT_EPS);
            assert!(
                m.fraction >= probe,
                "trial {trial}: optimizer {} < probe {probe}",
                m.fraction
            );
        }
    }
}

#[test]
fn scores_survive_affine_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for (i, kind) in [
        Distribution::Circle2d,
        Distribution::PlantedMixture2d { weight: 0.5 },
    ]
    .into_iter()
    .enumerate()
    {
        let raw = cloud(kind, 4000, i as u64);
        let base_s = separability_index(&raw).unwrap().bits;
        let base_m = mixture_index(&raw, DEFAULT_EPS, &MixtureOptions::default())
            .unwrap()
            .fraction;
        for _ in 0..2 {
            let mapped = affine(
                &raw,
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0.1..10.0),
                [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)],
            );
            let s = separability_index(&mapped).unwrap().bits;
            let m = mixture_index(&mapped, DEFAULT_EPS, &MixtureOptions::default())
                .unwrap()
                .fraction;
            assert!((s - base_s).abs() <= 0.05, "{kind:?}: S {base_s} -> {s}");
            assert!((m - base_m).abs() <= 0.01, "{kind:?}: M {base_m} -> {m}");
        }
    }
}

#[test]
fn circle_cluster_ranks_first() {
    let opts = MixtureOptions::default();
    let kinds = [
        Distribution::Gaussian2d,
        Distribution::Circle2d,
        Distribution::PlantedMixture2d { weight: 0.5 },
    ];
    let scores: Vec<_> = kinds
        .iter()
        .enumerate()
        .map(|(id, &kind)| {
            let plane = PointCloud2D::new(cloud(kind, 3000, id as u64)).unwrap();
            score_cluster(id, &[plane], DEFAULT_EPS, &opts).unwrap()
        })
        .collect();
    let ranking = rank_clusters(&scores).unwrap();
    assert_eq!(ranking.by_product[0], 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalized_cloud_has_rms_sqrt2(seed in 0u64..10_000, sx in 0.01f64..100.0, sy in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = Matrix::from_fn(50, 2, |_, j| {
            let s = if j == 0 { sx } else { sy };
            s * rng.sample::<f64, _>(StandardNormal) + 3.0
        });
        let y = normalize_cloud(&raw).unwrap();
        let means = y.column_means();
        prop_assert!(means.iter().all(|m| m.abs() < 1e-12));
        let ms = y.as_slice().iter().map(|v| v * v).sum::<f64>() / 50.0;
        prop_assert!((ms.sqrt() - SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn mi_is_bounded(seed in 0u64..10_000, theta in 0.0f64..PI) {
        let points = normalize_cloud(&cloud(Distribution::Gaussian2d, 300, seed)).unwrap();
        let mi = binned_mi(&points, theta);
        prop_assert!(mi >= 0.0);
        prop_assert!(mi <= ((MI_BINS * MI_BINS) as f64).log2());
    }
}
