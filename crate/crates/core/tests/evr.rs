// SPDX-License-Identifier: MIT OR Apache-2.0

use featgeom::evr::{
    build_design_matrix, evr_fit, planted_evr_dataset, residual_rgb, staged_fit, FeatureSpec,
    RgbGrid, TaskLabels, Variable,
};
use featgeom::numerics::{dot, Matrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ALPHA: FeatureSpec = FeatureSpec::OneHot {
    var: Variable::Alpha,
};
const BETA: FeatureSpec = FeatureSpec::OneHot {
    var: Variable::Beta,
};
const GAMMA_CIRCLE: FeatureSpec = FeatureSpec::Circle {
    var: Variable::Gamma,
    modulus: None,
};

fn grid_labels(m: usize, per_cell: usize) -> TaskLabels {
    let n = m * m * per_cell;
    let alpha = (0..n).map(|i| (i % (m * m)) / m).collect();
    let beta = (0..n).map(|i| i % m).collect();
    TaskLabels::from_alpha_beta(alpha, beta, m).unwrap()
}

/// Largest over channels of within-group variance divided by grid variance.
fn within_group_variance_fraction(
    grid: &RgbGrid,
    group: impl Fn(usize, usize) -> usize,
    groups: usize,
) -> f64 {
    let mut worst: f64 = 0.0;
    for ch in 0..3 {
        let vals: Vec<(usize, f64)> = (0..grid.rows)
            .flat_map(|a| (0..grid.cols).map(move |b| (a, b)))
            .map(|(a, b)| (group(a, b), grid.get(a, b)[ch]))
            .collect();
        let n = vals.len() as f64;
        let mean = vals.iter().map(|v| v.1).sum::<f64>() / n;
        let total = vals.iter().map(|v| (v.1 - mean).powi(2)).sum::<f64>();
        if total == 0.0 {
            continue;
        }
        let mut within = 0.0;
        for g in 0..groups {
            let members: Vec<f64> = vals.iter().filter(|v| v.0 == g).map(|v| v.1).collect();
            let mu = members.iter().sum::<f64>() / members.len() as f64;
            within += members.iter().map(|v| (v - mu).powi(2)).sum::<f64>();
        }
        worst = worst.max(within / total);
    }
    worst
}

#[test]
fn exact_linear_signal_is_fully_explained() {
    let m = 5;
    let labels = grid_labels(m, 2);
    let design = build_design_matrix(&labels, &[ALPHA, GAMMA_CIRCLE], m).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let coef = Matrix::from_fn(design.values.cols(), 4, |_, _| rng.random_range(-1.0..1.0));
    let x = design.values.matmul(&coef).unwrap();
    let report = evr_fit(&design, &x).unwrap();
    assert!((report.r2 - 1.0).abs() < 1e-10);
    assert!(report.residuals.as_slice().iter().all(|v| v.abs() < 1e-10));
}

#[test]
fn circle_gap_matches_planted_fraction() {
    let (acts, labels, planted) = planted_evr_dataset(7, 20, [1.0, 0.8, 1.2], 0.1, 3).unwrap();
    let only_alpha = evr_fit(
        &build_design_matrix(&labels, &[ALPHA], 7).unwrap(),
        &acts.values,
    )
    .unwrap();
    let with_circle = evr_fit(
        &build_design_matrix(&labels, &[ALPHA, GAMMA_CIRCLE], 7).unwrap(),
        &acts.values,
    )
    .unwrap();
    assert!(only_alpha.r2 < with_circle.r2);
    let gap = with_circle.r2 - only_alpha.r2;
    assert!(
        (gap - planted.gamma_circle).abs() < 0.02,
        "{gap} vs {}",
        planted.gamma_circle
    );
}

#[test]
fn staged_fit_increments_match_planted_fractions() {
    for seed in 0..5 {
        let (acts, labels, planted) =
            planted_evr_dataset(7, 10, [1.0, 0.7, 1.1], 0.15, seed).unwrap();
        let stages = staged_fit(
            &labels,
            &[vec![ALPHA], vec![BETA], vec![GAMMA_CIRCLE]],
            7,
            &acts.values,
        )
        .unwrap();
        let r2: Vec<f64> = stages.iter().map(|s| s.r2).collect();
        assert!(r2.windows(2).all(|w| w[1] >= w[0]), "{r2:?}");
        let increments = [r2[0], r2[1] - r2[0], r2[2] - r2[1]];
        let want = [planted.alpha, planted.beta, planted.gamma_circle];
        for (got, want) in increments.iter().zip(want) {
            assert!(
                (got - want).abs() < 0.02,
                "seed {seed}: {increments:?} vs {want}"
            );
        }
    }
}

#[test]
fn residuals_are_orthogonal_to_design() {
    let (acts, labels, _) = planted_evr_dataset(5, 4, [1.0, 1.0, 1.0], 0.3, 8).unwrap();
    let design = build_design_matrix(&labels, &[ALPHA, BETA, GAMMA_CIRCLE], 5).unwrap();
    let report = evr_fit(&design, &acts.values).unwrap();
    for c in 0..design.values.cols() {
        let col = design.values.column(c);
        for j in 0..report.residuals.cols() {
            assert!(dot(&col, &report.residuals.column(j)).abs() < 1e-8);
        }
    }
}

#[test]
fn gamma_residual_paints_anti_diagonals() {
    let m = 7;
    let labels = grid_labels(m, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for d in [2, 5] {
        let per_gamma: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let residuals = Matrix::from_fn(labels.len(), d, |r, c| per_gamma[labels.gamma[r]][c]);
        let grid = residual_rgb(&residuals, &labels.alpha, &labels.beta, m, m).unwrap();
        let frac = within_group_variance_fraction(&grid, |a, b| (a + b) % m, m);
        assert!(frac < 0.01, "d {d}: within anti-diagonal fraction {frac}");
    }
}

#[test]
fn gamma_circle_left_after_one_hot_fit_is_diagonal() {
    // noise-free planted data: the one-hot fit leaves exactly the circle
    let m = 7;
    let (acts, labels, _) = planted_evr_dataset(m, 2, [1.0, 1.0, 1.0], 0.0, 2).unwrap();
    let report = evr_fit(
        &build_design_matrix(&labels, &[ALPHA, BETA], m).unwrap(),
        &acts.values,
    )
    .unwrap();
    let grid = residual_rgb(&report.residuals, &labels.alpha, &labels.beta, m, m).unwrap();
    let frac = within_group_variance_fraction(&grid, |a, b| (a + b) % m, m);
    assert!(frac < 0.01, "within anti-diagonal fraction {frac}");
}

#[test]
fn alpha_residual_paints_rows() {
    let m = 6;
    let labels = grid_labels(m, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let per_alpha: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let residuals = Matrix::from_fn(labels.len(), 4, |r, c| per_alpha[labels.alpha[r]][c]);
    let grid = residual_rgb(&residuals, &labels.alpha, &labels.beta, m, m).unwrap();
    for a in 0..m {
        for b in 1..m {
            let (p, q) = (grid.get(a, 0), grid.get(a, b));
            assert!(p.iter().zip(&q).all(|(x, y)| (x - y).abs() < 1e-9));
        }
    }
    assert!(grid.cells.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn adding_columns_never_lowers_r2(seed in 0u64..10_000) {
        let m = 4;
        let labels = grid_labels(m, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_fn(labels.len(), 3, |_, _| rng.random_range(-1.0..1.0));
        let small = evr_fit(&build_design_matrix(&labels, &[BETA], m).unwrap(), &x).unwrap();
        let large = evr_fit(&build_design_matrix(&labels, &[BETA, GAMMA_CIRCLE, ALPHA], m).unwrap(), &x).unwrap();
        prop_assert!(large.r2 >= small.r2 - 1e-12);
        prop_assert!((0.0..=1.0).contains(&small.r2));
    }
}
