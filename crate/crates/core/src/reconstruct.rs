// SPDX-License-Identifier: MIT OR Apache-2.0

//! Cluster-restricted reconstructions and their PCA planes.
//!
//! Every dictionary element outside the cluster is ablated; rows on which no
//! cluster element fires are dropped. The decoder bias is left out, so each
//! reconstruction is a pure combination of cluster columns.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::irreducibility::{PlaneTag, PointCloud2D};
use crate::numerics::{pca, Matrix, PcaBasis};
use crate::sae::SaeParams;

/// PCA components kept per cluster reconstruction.
pub const MAX_COMPONENTS: usize = 5;
/// Consecutive component pairs scored per cluster: 1-2, 2-3, 3-4, 4-5.
pub const MAX_PLANES: usize = MAX_COMPONENTS - 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterReconstruction {
    pub cluster: usize,
    /// Dictionary elements in the cluster, ascending.
    pub features: Vec<usize>,
    /// Input rows on which at least one cluster element fired, ascending.
    pub kept_rows: Vec<usize>,
    /// One row per kept input.
    pub reconstructions: Matrix,
    /// Absent when fewer than two rows were kept.
    pub pca: Option<PcaBasis>,
}

impl ClusterReconstruction {
    /// Leading PCA components with nonzero variance, capped by the cluster
    /// size (the reconstructions span at most that many directions).
    pub fn usable_components(&self) -> usize {
        let Some(basis) = &self.pca else { return 0 };
        let nonzero = basis.zero_variance.iter().take_while(|z| !**z).count();
        nonzero.min(self.features.len())
    }
}

/// Reconstructs `x` from the cluster's dictionary elements only.
pub fn cluster_reconstruct(
    params: &SaeParams,
    cluster: usize,
    features: &[usize],
    x: &Matrix,
) -> Result<ClusterReconstruction> {
    if features.is_empty() {
        return Err(invalid(format!("cluster {cluster} has no features")));
    }
    if x.cols() != params.d() {
        return Err(shape(format!(
            "input has {} columns, SAE expects {}",
            x.cols(),
            params.d()
        )));
    }
    let m = params.m();
    if let Some(&bad) = features.iter().find(|&&j| j >= m) {
        return Err(invalid(format!(
            "feature {bad} out of range for {m} dictionary elements"
        )));
    }
    let mut features = features.to_vec();
    features.sort_unstable();
    features.dedup();

    let d = params.d();
    let rows: Vec<Option<Vec<f64>>> = (0..x.rows())
        .into_par_iter()
        .map(|r| {
            let f = params.encode(x.row(r)).expect("row width checked above");
            if features.iter().all(|&j| f[j] <= 0.0) {
                return None;
            }
            let mut out = vec![0.0; d];
            for &j in &features {
                if f[j] > 0.0 {
                    for (i, o) in out.iter_mut().enumerate() {
                        *o += params.w_dec[(i, j)] * f[j];
                    }
                }
            }
            Some(out)
        })
        .collect();

    let mut kept_rows = Vec::new();
    let mut data = Vec::new();
    for (r, row) in rows.into_iter().enumerate() {
        if let Some(row) = row {
            kept_rows.push(r);
            data.extend(row);
        }
    }
    if kept_rows.is_empty() {
        return Err(Error::Degenerate(format!(
            "no row activates cluster {cluster}"
        )));
    }
    let reconstructions = Matrix::from_vec(kept_rows.len(), d, data)?;
    let basis = if kept_rows.len() >= 2 {
        Some(pca(
            &reconstructions,
            MAX_COMPONENTS.min(d).min(kept_rows.len()),
        )?)
    } else {
        None
    };
    Ok(ClusterReconstruction {
        cluster,
        features,
        kept_rows,
        reconstructions,
        pca: basis,
    })
}

/// Projects the reconstructions onto consecutive PCA component pairs.
///
/// Returns up to [`MAX_PLANES`] clouds, fewer for small clusters, and none
/// when fewer than two components carry variance.
pub fn project_planes(rec: &ClusterReconstruction) -> Result<Vec<PointCloud2D>> {
    let usable = rec.usable_components();
    let Some(basis) = &rec.pca else {
        return Ok(Vec::new());
    };
    if usable < 2 {
        return Ok(Vec::new());
    }
    let scores = basis.transform(&rec.reconstructions)?;
    (0..(usable - 1).min(MAX_PLANES))
        .map(|i| {
            let points = scores.select_columns(&[i, i + 1]);
            Ok(PointCloud2D::new(points)?.with_tag(PlaneTag {
                cluster: rec.cluster,
                components: (i, i + 1),
            }))
        })
        .collect()
}
