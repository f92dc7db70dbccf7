// SPDX-License-Identifier: MIT OR Apache-2.0

use featgeom::numerics::Matrix;
use featgeom::reconstruct::{cluster_reconstruct, project_planes};
use featgeom::sae::SaeParams;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_sae(seed: u64, d: usize, m: usize) -> SaeParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w_enc = Matrix::from_fn(m, d, |_, _| rng.random_range(-1.0..1.0));
    let b_enc = (0..m).map(|_| rng.random_range(-0.5..0.2)).collect();
    let w_dec = Matrix::from_fn(d, m, |_, _| rng.random_range(-1.0..1.0));
    let b_dec = (0..d).map(|_| rng.random_range(-0.3..0.3)).collect();
    SaeParams::from_parts(w_enc, b_enc, w_dec, b_dec, seed % 2 == 0).unwrap()
}

fn random_inputs(seed: u64, n: usize, d: usize) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
    Matrix::from_fn(n, d, |_, _| rng.random_range(-2.0..2.0))
}

fn na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// Literal pseudocode: encode each row, skip it unless some cluster element
/// is positive, reconstruct from the cluster's decoder columns.
fn oracle(params: &SaeParams, cluster: &[usize], x: &Matrix) -> (Vec<usize>, Vec<DVector<f64>>) {
    let we = na(&params.w_enc);
    let wd = na(&params.w_dec);
    let be = DVector::from_column_slice(&params.b_enc);
    let bd = DVector::from_column_slice(&params.b_dec);
    let mut kept = Vec::new();
    let mut recs = Vec::new();
    for r in 0..x.rows() {
        let xr = DVector::from_column_slice(x.row(r));
        let input = if params.use_pre_encoder_bias {
            &xr - &bd
        } else {
            xr
        };
        let enc = (&we * input + &be).map(|v| v.max(0.0));
        let active = cluster
            .iter()
            .map(|&j| enc[j])
            .fold(f64::NEG_INFINITY, f64::max);
        if active > 0.0 {
            let sub = wd.select_columns(cluster);
            let code = DVector::from_iterator(cluster.len(), cluster.iter().map(|&j| enc[j]));
            kept.push(r);
            recs.push(sub * code);
        }
    }
    (kept, recs)
}

#[test]
fn matches_literal_pseudocode() {
    for seed in 0..30 {
        let (d, m) = (6, 12);
        let params = random_sae(seed, d, m);
        let x = random_inputs(seed, 80, d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 500);
        let size = rng.random_range(1..=m);
        let mut cluster: Vec<usize> = (0..m).collect();
        for i in (1..m).rev() {
            cluster.swap(i, rng.random_range(0..=i));
        }
        cluster.truncate(size);
        cluster.sort();
        let (kept, recs) = oracle(&params, &cluster, &x);
        match cluster_reconstruct(&params, 0, &cluster, &x) {
            Ok(rec) => {
                assert_eq!(rec.kept_rows, kept, "seed {seed}");
                for (i, want) in recs.iter().enumerate() {
                    for (a, b) in rec.reconstructions.row(i).iter().zip(want.iter()) {
                        assert!((a - b).abs() < 1e-12);
                    }
                }
            }
            Err(_) => assert!(kept.is_empty(), "seed {seed}"),
        }
    }
}

#[test]
fn full_cluster_is_full_reconstruction_without_bias() {
    let params = random_sae(3, 5, 9);
    let x = random_inputs(3, 50, 5);
    let all: Vec<usize> = (0..9).collect();
    let rec = cluster_reconstruct(&params, 0, &all, &x).unwrap();
    let codes = params.encode_matrix(&x).unwrap();
    for (i, &r) in rec.kept_rows.iter().enumerate() {
        let full = params.decode(codes.row(r)).unwrap();
        for (k, (&a, b)) in rec.reconstructions.row(i).iter().zip(&full).enumerate() {
            assert!((a - (b - params.b_dec[k])).abs() < 1e-12);
        }
    }
}

#[test]
fn planes_are_uncorrelated_with_other_components() {
    let params = random_sae(8, 7, 10);
    let x = random_inputs(8, 300, 7);
    let cluster: Vec<usize> = (0..10).collect();
    let rec = cluster_reconstruct(&params, 0, &cluster, &x).unwrap();
    let planes = project_planes(&rec).unwrap();
    assert_eq!(planes.len(), 4);
    let scores = rec
        .pca
        .as_ref()
        .unwrap()
        .transform(&rec.reconstructions)
        .unwrap();
    let n = scores.rows() as f64;
    let cov = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (n - 1.0);
    let scale = rec.pca.as_ref().unwrap().explained_variance[0];
    for plane in &planes {
        let (i, j) = plane.tag.unwrap().components;
        assert_eq!(j, i + 1);
        for axis in [0, 1] {
            let coord = plane.points.column(axis);
            for other in (0..scores.cols()).filter(|&c| c != i && c != j) {
                assert!(cov(&coord, &scores.column(other)).abs() < 1e-8 * scale.max(1.0));
            }
        }
        let within = cov(&plane.points.column(0), &plane.points.column(1));
        assert!(within.abs() < 1e-8 * scale.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn enlarging_cluster_keeps_rows(seed in 0u64..10_000, base in proptest::collection::btree_set(0usize..10, 1..5), extra in proptest::collection::btree_set(0usize..10, 0..5)) {
        let params = random_sae(seed, 4, 10);
        let x = random_inputs(seed, 40, 4);
        let small: Vec<usize> = base.iter().copied().collect();
        let large: Vec<usize> = base.union(&extra).copied().collect();
        if let Ok(a) = cluster_reconstruct(&params, 0, &small, &x) {
            let b = cluster_reconstruct(&params, 0, &large, &x).unwrap();
            prop_assert!(a.kept_rows.iter().all(|r| b.kept_rows.contains(r)));
        }
    }
}
