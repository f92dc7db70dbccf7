// SPDX-License-Identifier: MIT OR Apache-2.0

//! Grouping dictionary elements into candidate multi-dimensional features.
//!
//! Two methods: a k-nearest-neighbour graph pruned at a cosine threshold
//! (clusters are its connected components), and spectral clustering of a
//! similarity matrix. Dead elements can be excluded; they get no cluster.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::numerics::{cosine_similarity_matrix, symmetric_eigen, Matrix};
use crate::synth::seeded_rng;

pub const DEFAULT_K: usize = 2;
pub const DEFAULT_TAU: f64 = 0.5;

const KMEANS_RESTARTS: usize = 100;
const KMEANS_MAX_ITER: usize = 300;

/// How pairwise similarity between dictionary elements is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    /// Spectral clustering treats negative cosines as zero affinity.
    #[default]
    Cosine,
    /// `1 − arccos(cos)/π`, in [0, 1]. Between orthogonal planes this is 0.5,
    /// the same as its average around a fully covered circle, so spectral
    /// clustering on it tends to cut circles in half rather than separate planes.
    Angular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", content = "params", rename_all = "snake_case")]
pub enum ClusterMethod {
    Graph {
        k: usize,
        tau: f64,
    },
    Spectral {
        n_clusters: usize,
        seed: u64,
        /// How the similarity matrix was built, when it came from a dictionary.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        similarity: Option<Similarity>,
    },
}

/// A partition of the non-excluded dictionary elements.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub method: ClusterMethod,
    /// Cluster id per element; `None` for excluded elements.
    pub assignments: Vec<Option<usize>>,
    pub n_clusters: usize,
}

#[derive(Serialize, Deserialize)]
struct ClusteringFile {
    #[serde(flatten)]
    method: ClusterMethod,
    n_elements: usize,
    clusters: Vec<Vec<usize>>,
}

impl Clustering {
    /// Builds a clustering from labels, renumbering ids densely in order of
    /// each cluster's smallest member.
    pub fn from_labels(method: ClusterMethod, labels: &[Option<usize>]) -> Self {
        let mut remap = std::collections::BTreeMap::new();
        let assignments: Vec<Option<usize>> = labels
            .iter()
            .map(|l| {
                l.map(|raw| {
                    let next = remap.len();
                    *remap.entry(raw).or_insert(next)
                })
            })
            .collect();
        Self {
            method,
            n_clusters: remap.len(),
            assignments,
        }
    }

    pub fn n_elements(&self) -> usize {
        self.assignments.len()
    }

    /// Member lists, indexed by cluster id, each sorted ascending.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters];
        for (j, a) in self.assignments.iter().enumerate() {
            if let Some(c) = a {
                out[*c].push(j);
            }
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clusters().iter().map(Vec::len).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ClusteringFile {
            method: self.method.clone(),
            n_elements: self.n_elements(),
            clusters: self.clusters(),
        };
        let mut text = serde_json::to_string_pretty(&file)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ClusteringFile = serde_json::from_str(text)?;
        let mut labels = vec![None; file.n_elements];
        for (c, members) in file.clusters.iter().enumerate() {
            if members.is_empty() {
                return Err(invalid(format!("cluster {c} is empty")));
            }
            for &j in members {
                if j >= file.n_elements {
                    return Err(invalid(format!(
                        "cluster {c} names element {j} of {}",
                        file.n_elements
                    )));
                }
                if labels[j].replace(c).is_some() {
                    return Err(invalid(format!(
                        "element {j} appears in more than one cluster"
                    )));
                }
            }
        }
        Ok(Self::from_labels(file.method, &labels))
    }
}

/// Maps a cosine similarity to `1 − arccos(cos)/π`.
pub fn angular_similarity(cos: f64) -> f64 {
    1.0 - cos.clamp(-1.0, 1.0).acos() / std::f64::consts::PI
}

/// Pairwise similarity between the columns of `dictionary`.
pub fn similarity_matrix(dictionary: &Matrix, kind: Similarity) -> Result<Matrix> {
    let cos = cosine_similarity_matrix(dictionary)?;
    Ok(match kind {
        Similarity::Cosine => cos,
        Similarity::Angular => {
            let m = cos.rows();
            Matrix::from_fn(m, m, |i, j| {
                if i == j {
                    1.0
                } else {
                    angular_similarity(cos[(i, j)])
                }
            })
        }
    })
}

fn included(mask: Option<&[bool]>, m: usize) -> Result<Vec<usize>> {
    match mask {
        None => Ok((0..m).collect()),
        Some(mask) if mask.len() == m => Ok((0..m).filter(|&j| mask[j]).collect()),
        Some(mask) => Err(shape(format!(
            "mask has {} entries for {m} elements",
            mask.len()
        ))),
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins so roots are stable
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Indices of the `k` most cosine-similar other elements (ties to the lower index).
fn nearest(cos: &Matrix, row: usize, candidates: &[usize], k: usize) -> Vec<usize> {
    let mut others: Vec<usize> = candidates.iter().copied().filter(|&j| j != row).collect();
    others.sort_by(|&a, &b| cos[(row, b)].total_cmp(&cos[(row, a)]).then(a.cmp(&b)));
    others.truncate(k);
    others
}

fn graph_from_cosine(cos: &Matrix, keep: &[usize], k: usize, tau: f64) -> Vec<Option<usize>> {
    let m = cos.rows();
    let mut uf = UnionFind::new(m);
    for &i in keep {
        for j in nearest(cos, i, keep, k) {
            if cos[(i, j)] >= tau {
                uf.union(i, j);
            }
        }
    }
    let mut labels = vec![None; m];
    for &i in keep {
        labels[i] = Some(uf.find(i));
    }
    labels
}

/// k-nearest-neighbour graph clustering of the columns of `dictionary`.
///
/// Each element gets directed edges to its `k` most cosine-similar elements;
/// edges are made undirected, those with similarity below `tau` are dropped,
/// and the connected components are the clusters. Elements with `false` in
/// `mask` are left out entirely.
pub fn graph_cluster(
    dictionary: &Matrix,
    k: usize,
    tau: f64,
    mask: Option<&[bool]>,
) -> Result<Clustering> {
    if !tau.is_finite() {
        return Err(invalid(format!("tau must be finite, got {tau}")));
    }
    let keep = included(mask, dictionary.cols())?;
    let cos = cosine_similarity_of(dictionary, &keep)?;
    let labels = graph_from_cosine(&cos, &keep, k, tau);
    Ok(Clustering::from_labels(
        ClusterMethod::Graph { k, tau },
        &labels,
    ))
}

/// Cosine matrix over all columns, only requiring nonzero norm for `keep`.
fn cosine_similarity_of(dictionary: &Matrix, keep: &[usize]) -> Result<Matrix> {
    let m = dictionary.cols();
    let sub = cosine_similarity_matrix(&dictionary.select_columns(keep)).map_err(|e| match e {
        Error::ZeroColumn(j) => Error::ZeroColumn(keep[j]),
        other => other,
    })?;
    let mut full = Matrix::zeros(m, m);
    for (a, &i) in keep.iter().enumerate() {
        for (b, &j) in keep.iter().enumerate() {
            full.row_mut(i)[j] = sub[(a, b)];
        }
    }
    Ok(full)
}

fn check_similarity(s: &Matrix) -> Result<()> {
    let (r, c) = s.shape();
    if r != c {
        return Err(shape(format!(
            "similarity matrix must be square, got {r}×{c}"
        )));
    }
    for i in 0..r {
        for j in 0..r {
            let v = s[(i, j)];
            if !v.is_finite() || !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&v) {
                return Err(invalid(format!(
                    "similarity ({i}, {j}) = {v} lies outside [-1, 1]"
                )));
            }
            if (v - s[(j, i)]).abs() > 1e-10 {
                return Err(invalid(format!(
                    "similarity matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Row-normalized spectral embedding of a similarity matrix.
///
/// Negative similarities are treated as zero affinity. Rows are the top
/// `dims` eigenvectors of `D^-1/2 A D^-1/2`, scaled to unit length.
pub fn spectral_embedding(similarity: &Matrix, dims: usize) -> Result<Matrix> {
    check_similarity(similarity)?;
    let n = similarity.rows();
    if dims == 0 || dims > n {
        return Err(invalid(format!(
            "embedding dimension {dims} not in 1..={n}"
        )));
    }
    let affinity = Matrix::from_fn(n, n, |i, j| similarity[(i, j)].max(0.0));
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|i| {
            let deg: f64 = affinity.row(i).iter().sum();
            if deg > 0.0 {
                1.0 / deg.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let normalized = Matrix::from_fn(n, n, |i, j| {
        affinity[(i, j)] * inv_sqrt_deg[i] * inv_sqrt_deg[j]
    });
    let eig = symmetric_eigen(&normalized)?;
    let mut embed = Matrix::from_fn(n, dims, |i, c| eig.vectors[(i, c)]);
    for i in 0..n {
        let row = embed.row_mut(i);
        let len = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if len > 0.0 {
            row.iter_mut().for_each(|v| *v /= len);
        }
    }
    Ok(embed)
}

/// Spectral clustering of all elements of a similarity matrix into exactly
/// `n_clusters` groups.
pub fn spectral_cluster(similarity: &Matrix, n_clusters: usize, seed: u64) -> Result<Clustering> {
    let n = similarity.rows();
    if n_clusters == 0 || n_clusters > n {
        return Err(invalid(format!(
            "n_clusters = {n_clusters} but there are {n} elements"
        )));
    }
    let embed = spectral_embedding(similarity, n_clusters)?;
    let labels = kmeans(&embed, n_clusters, seed).labels;
    let labels: Vec<Option<usize>> = labels.into_iter().map(Some).collect();
    Ok(Clustering::from_labels(
        ClusterMethod::Spectral {
            n_clusters,
            seed,
            similarity: None,
        },
        &labels,
    ))
}

/// Spectral clustering of the columns of `dictionary`, skipping masked elements.
pub fn spectral_cluster_dictionary(
    dictionary: &Matrix,
    n_clusters: usize,
    seed: u64,
    similarity: Similarity,
    mask: Option<&[bool]>,
) -> Result<Clustering> {
    let keep = included(mask, dictionary.cols())?;
    let sim =
        similarity_matrix(&dictionary.select_columns(&keep), similarity).map_err(|e| match e {
            Error::ZeroColumn(j) => Error::ZeroColumn(keep[j]),
            other => other,
        })?;
    let inner = spectral_cluster(&sim, n_clusters, seed)?;
    let mut labels = vec![None; dictionary.cols()];
    for (a, &j) in keep.iter().enumerate() {
        labels[j] = inner.assignments[a];
    }
    Ok(Clustering::from_labels(
        ClusterMethod::Spectral {
            n_clusters,
            seed,
            similarity: Some(similarity),
        },
        &labels,
    ))
}

/// Result of a k-means fit.
#[derive(Debug, Clone)]
pub struct KMeans {
    pub labels: Vec<usize>,
    pub centers: Matrix,
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_pp_init(points: &Matrix, k: usize, rng: &mut impl Rng) -> Matrix {
    let n = points.rows();
    let mut centers = Vec::with_capacity(k);
    centers.push(rng.random_range(0..n));
    let mut best: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), points.row(centers[0])))
        .collect();
    while centers.len() < k {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in best.iter().enumerate() {
                if w > 0.0 && target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.push(pick);
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.min(sq_dist(points.row(i), points.row(pick)));
        }
    }
    points.select_rows(&centers)
}

fn lloyd(points: &Matrix, mut centers: Matrix) -> KMeans {
    let (n, dim) = points.shape();
    let k = centers.rows();
    let mut labels = vec![usize::MAX; n];
    let mut dists = vec![0.0; n];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for i in 0..n {
            let (mut arg, mut val) = (0, f64::INFINITY);
            for c in 0..k {
                let dist = sq_dist(points.row(i), centers.row(c));
                if dist < val {
                    arg = c;
                    val = dist;
                }
            }
            dists[i] = val;
            if labels[i] != arg {
                labels[i] = arg;
                changed = true;
            }
        }
        // empty clusters steal the worst-fit point from a cluster with spares
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        for c in 0..k {
            if counts[c] == 0 {
                let donor = (0..n)
                    .filter(|&i| counts[labels[i]] > 1)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
                if let Some(i) = donor {
                    counts[labels[i]] -= 1;
                    labels[i] = c;
                    counts[c] = 1;
                    dists[i] = 0.0;
                    changed = true;
                }
            }
        }
        let mut sums = Matrix::zeros(k, dim);
        for i in 0..n {
            let row = sums.row_mut(labels[i]);
            for (s, v) in row.iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                let mean: Vec<f64> = sums.row(c).iter().map(|v| v * inv).collect();
                centers.row_mut(c).copy_from_slice(&mean);
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = (0..n)
        .map(|i| sq_dist(points.row(i), centers.row(labels[i])))
        .sum();
    KMeans {
        labels,
        centers,
        inertia,
    }
}

/// k-means with k-means++ seeding; the best of 100 restarts by inertia.
pub fn kmeans(points: &Matrix, k: usize, seed: u64) -> KMeans {
    assert!(k >= 1 && k <= points.rows(), "k-means needs 1 ≤ k ≤ n");
    let mut rng = seeded_rng(seed);
    let mut best: Option<KMeans> = None;
    for _ in 0..KMEANS_RESTARTS {
        let init = kmeans_pp_init(points, k, &mut rng);
        let fit = lloyd(points, init);
        if best
            .as_ref()
            .is_none_or(|b| fit.inertia < b.inertia - 1e-12 * b.inertia.abs().max(1.0))
        {
            best = Some(fit);
        }
    }
    best.expect("at least one restart")
}

/// Jaccard index of two index sets.
pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    let sa: std::collections::BTreeSet<usize> = a.iter().copied().collect();
    let sb: std::collections::BTreeSet<usize> = b.iter().copied().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 0.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

/// Best Jaccard match between `reference` and any cluster, for every
/// `(k, τ)` pair of graph clustering. Rows follow `k_values`, columns `tau_values`.
pub fn jaccard_stability_sweep(
    dictionary: &Matrix,
    k_values: &[usize],
    tau_values: &[f64],
    reference: &[usize],
    mask: Option<&[bool]>,
) -> Result<Matrix> {
    if reference.is_empty() {
        return Err(invalid("reference cluster is empty"));
    }
    if let Some(&bad) = reference.iter().find(|&&j| j >= dictionary.cols()) {
        return Err(invalid(format!(
            "reference names element {bad} of {}",
            dictionary.cols()
        )));
    }
    if let Some(t) = tau_values.iter().find(|t| !t.is_finite()) {
        return Err(invalid(format!("tau must be finite, got {t}")));
    }
    let keep = included(mask, dictionary.cols())?;
    let cos = cosine_similarity_of(dictionary, &keep)?;
    let cells: Vec<f64> = (0..k_values.len() * tau_values.len())
        .into_par_iter()
        .map(|cell| {
            let (ki, ti) = (cell / tau_values.len(), cell % tau_values.len());
            let labels = graph_from_cosine(&cos, &keep, k_values[ki], tau_values[ti]);
            let clustering = Clustering::from_labels(
                ClusterMethod::Graph {
                    k: k_values[ki],
                    tau: tau_values[ti],
                },
                &labels,
            );
            clustering
                .clusters()
                .iter()
                .map(|c| jaccard(c, reference))
                .fold(0.0, f64::max)
        })
        .collect();
    Matrix::from_vec(k_values.len(), tau_values.len(), cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_pairs() -> Matrix {
        // columns: a, a', b, b' with cos(a, a') ≈ 0.99 and a ⟂ b
        Matrix::from_columns(&[
            [1.0, 0.0, 0.0],
            [0.99, 0.141, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.141, 0.99],
        ])
        .unwrap()
    }

    #[test]
    fn two_near_duplicate_pairs() {
        let c = graph_cluster(&two_pairs(), DEFAULT_K, DEFAULT_TAU, None).unwrap();
        assert_eq!(c.clusters(), vec![vec![0, 1], vec![2, 3]]);
        assert_eq!(c.method, ClusterMethod::Graph { k: 2, tau: 0.5 });
    }

    #[test]
    fn threshold_above_one_gives_singletons() {
        let c = graph_cluster(&two_pairs(), 3, 1.0 + 1e-9, None).unwrap();
        assert_eq!(c.n_clusters, 4);
    }

    #[test]
    fn masked_elements_are_unassigned() {
        let mut d = two_pairs();
        d.set_column(1, &[0.0, 0.0, 0.0]);
        let mask = [true, false, true, true];
        let c = graph_cluster(&d, 2, 0.5, Some(&mask)).unwrap();
        assert_eq!(c.assignments[1], None);
        assert_eq!(c.clusters(), vec![vec![0], vec![2, 3]]);
        assert!(matches!(
            graph_cluster(&d, 2, 0.5, None),
            Err(Error::ZeroColumn(1))
        ));
    }

    #[test]
    fn nearest_ties_prefer_lower_index() {
        let cos = Matrix::from_rows(&[
            [1.0, 0.5, 0.5, 0.5],
            [0.5, 1.0, 0.0, 0.0],
            [0.5, 0.0, 1.0, 0.0],
            [0.5, 0.0, 0.0, 1.0],
        ])
        .unwrap();
        assert_eq!(nearest(&cos, 0, &[0, 1, 2, 3], 2), vec![1, 2]);
    }

    #[test]
    fn block_similarity_recovered() {
        let block = |i: usize, j: usize| if (i < 3) == (j < 3) { 1.0 } else { 0.0 };
        let s = Matrix::from_fn(7, 7, block);
        let c = spectral_cluster(&s, 2, 0).unwrap();
        assert_eq!(c.clusters(), vec![vec![0, 1, 2], vec![3, 4, 5, 6]]);
    }

    #[test]
    fn spectral_rejects_bad_inputs() {
        let s = Matrix::identity(3);
        assert!(spectral_cluster(&s, 4, 0).is_err());
        assert!(spectral_cluster(&s, 0, 0).is_err());
        let asym = Matrix::from_rows(&[[1.0, 0.2], [0.3, 1.0]]).unwrap();
        assert!(spectral_cluster(&asym, 1, 0).is_err());
        let big = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(spectral_cluster(&big, 1, 0).is_err());
    }

    #[test]
    fn exactly_n_groups_even_with_duplicates() {
        let s = Matrix::from_fn(4, 4, |_, _| 1.0);
        let c = spectral_cluster(&s, 3, 1).unwrap();
        assert_eq!(c.n_clusters, 3);
    }

    #[test]
    fn angular_similarity_endpoints() {
        assert_eq!(angular_similarity(1.0), 1.0);
        assert!((angular_similarity(0.0) - 0.5).abs() < 1e-15);
        assert!(angular_similarity(-1.0).abs() < 1e-15);
    }

    #[test]
    fn jaccard_values() {
        assert_eq!(jaccard(&[1, 2], &[1, 2]), 1.0);
        assert_eq!(jaccard(&[1, 2], &[3]), 0.0);
        assert!((jaccard(&[1, 2, 3], &[2, 3, 4]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sweep_matches_reference_cluster() {
        let grid =
            jaccard_stability_sweep(&two_pairs(), &[1, 2], &[0.5, 1.5], &[0, 1], None).unwrap();
        assert_eq!(grid[(0, 0)], 1.0);
        assert_eq!(grid[(1, 0)], 1.0);
        assert_eq!(grid[(0, 1)], 0.5);
        let disjoint = jaccard_stability_sweep(
            &two_pairs(),
            &[2],
            &[0.5],
            &[0, 1],
            Some(&[false, false, true, true]),
        )
        .unwrap();
        assert_eq!(disjoint[(0, 0)], 0.0);
        assert!(jaccard_stability_sweep(&two_pairs(), &[2], &[0.5], &[], None).is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = graph_cluster(&two_pairs(), 2, 0.5, Some(&[true, true, false, true])).unwrap();
        let text = c.to_json().unwrap();
        assert!(text.contains("\"method\": \"graph\""));
        assert_eq!(Clustering::from_json(&text).unwrap(), c);
    }
}
