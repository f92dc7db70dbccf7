// SPDX-License-Identifier: MIT OR Apache-2.0

//! Irreducibility tests for 2-D feature distributions.
//!
//! The separability index is the smallest binned mutual information between
//! the two coordinates over a sweep of rotations; the ε-mixture index is the
//! largest fraction of points a band `|v·f + c| < ε·RMS(v·f + c)` can hold,
//! found by gradient ascent on a sigmoid-softened count.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::numerics::Matrix;
use crate::synth::seeded_rng;

pub const MI_BINS: usize = 40;
pub const MI_CLIP: f64 = 3.0;
pub const ANGLE_STEPS: usize = 1000;
pub const DEFAULT_EPS: f64 = 0.1;
/// Clouds smaller than this are not scored.
pub const MIN_POINTS: usize = 10;

/// Where a 2-D cloud came from: a cluster and the pair of PCA components it
/// was projected on (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaneTag {
    pub cluster: usize,
    pub components: (usize, usize),
}

/// An n×2 point cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud2D {
    pub points: Matrix,
    pub tag: Option<PlaneTag>,
}

impl PointCloud2D {
    pub fn new(points: Matrix) -> Result<Self> {
        if points.cols() != 2 {
            return Err(shape(format!(
                "a 2-D cloud needs 2 columns, got {}",
                points.cols()
            )));
        }
        if !points.is_finite() {
            return Err(invalid("point cloud contains non-finite values"));
        }
        Ok(Self { points, tag: None })
    }

    pub fn with_tag(mut self, tag: PlaneTag) -> Self {
        self.tag = Some(tag);
        self
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }
}

/// Centers the cloud and scales it so the RMS row norm is √2.
pub fn normalize_cloud(points: &Matrix) -> Result<Matrix> {
    if points.cols() != 2 {
        return Err(shape(format!(
            "a 2-D cloud needs 2 columns, got {}",
            points.cols()
        )));
    }
    let n = points.rows();
    if n < 2 {
        return Err(invalid(format!(
            "normalizing needs at least 2 points, got {n}"
        )));
    }
    let centered = points.center_rows(&points.column_means());
    let mean_sq = centered.as_slice().iter().map(|v| v * v).sum::<f64>() / n as f64;
    let rms = mean_sq.sqrt();
    let scale = points.as_slice().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !(rms > 1e-12 * scale.max(f64::MIN_POSITIVE)) {
        return Err(Error::Degenerate("all points are identical".into()));
    }
    Ok(centered.scale(std::f64::consts::SQRT_2 / rms))
}

fn bin(v: f64) -> usize {
    let clipped = v.clamp(-MI_CLIP, MI_CLIP);
    let idx = ((clipped + MI_CLIP) / (2.0 * MI_CLIP) * MI_BINS as f64).floor() as usize;
    idx.min(MI_BINS - 1)
}

/// Mutual information in bits of a 2-D histogram of counts.
fn histogram_mi(counts: &[u32], n: usize) -> f64 {
    let mut pa = [0.0f64; MI_BINS];
    let mut pb = [0.0f64; MI_BINS];
    let inv = 1.0 / n as f64;
    for a in 0..MI_BINS {
        for b in 0..MI_BINS {
            let p = counts[a * MI_BINS + b] as f64 * inv;
            pa[a] += p;
            pb[b] += p;
        }
    }
    let mut mi = 0.0;
    for a in 0..MI_BINS {
        for b in 0..MI_BINS {
            let c = counts[a * MI_BINS + b];
            if c > 0 {
                let p = c as f64 * inv;
                mi += p * (p / (pa[a] * pb[b])).log2();
            }
        }
    }
    mi.max(0.0)
}

/// Binned mutual information (bits) between the coordinates of an already
/// normalized cloud after rotating it by `theta`.
pub fn binned_mi(normalized: &Matrix, theta: f64) -> f64 {
    let n = normalized.rows();
    if n == 0 {
        return 0.0;
    }
    let (s, c) = theta.sin_cos();
    let mut counts = vec![0u32; MI_BINS * MI_BINS];
    for row in normalized.row_iter() {
        let a = c * row[0] - s * row[1];
        let b = s * row[0] + c * row[1];
        counts[bin(a) * MI_BINS + bin(b)] += 1;
    }
    histogram_mi(&counts, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Separability {
    /// Minimum mutual information over the rotation sweep, in bits.
    pub bits: f64,
    /// Rotation attaining it (lowest angle on ties).
    pub theta: f64,
}

/// Separability index: minimum binned MI over 1000 rotations in [0, π).
pub fn separability_index(points: &Matrix) -> Result<Separability> {
    if points.rows() < MIN_POINTS {
        return Err(invalid(format!(
            "separability needs at least {MIN_POINTS} points, got {}",
            points.rows()
        )));
    }
    let normalized = normalize_cloud(points)?;
    let values: Vec<f64> = (0..ANGLE_STEPS)
        .into_par_iter()
        .map(|i| binned_mi(&normalized, sweep_angle(i)))
        .collect();
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    Ok(Separability {
        bits: values[best],
        theta: sweep_angle(best),
    })
}

fn sweep_angle(i: usize) -> f64 {
    std::f64::consts::PI * i as f64 / ANGLE_STEPS as f64
}

/// Optimizer settings for the mixture index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixtureOptions {
    pub steps: usize,
    pub lr: f64,
    pub restarts: usize,
    /// Random bands screened by hard count; the best `restarts` of them seed
    /// the gradient ascent.
    pub candidates: usize,
    pub seed: u64,
}

impl Default for MixtureOptions {
    fn default() -> Self {
        Self {
            steps: 10_000,
            lr: 0.1,
            restarts: 8,
            candidates: 256,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    /// Fraction of points inside the best band.
    pub fraction: f64,
    pub v: [f64; 2],
    pub c: f64,
    /// True when some restart diverged and was rerun with a smaller step.
    pub lr_halved: bool,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn projections(points: &Matrix, v: [f64; 2], c: f64) -> Vec<f64> {
    points
        .row_iter()
        .map(|r| v[0] * r[0] + v[1] * r[1] + c)
        .collect()
}

fn rms(u: &[f64]) -> f64 {
    (u.iter().map(|x| x * x).sum::<f64>() / u.len() as f64).sqrt()
}

/// Fraction of points with `|v·f + c| < ε·RMS(v·f + c)`.
pub fn hard_mixture_count(points: &Matrix, v: [f64; 2], c: f64, eps: f64) -> f64 {
    let u = projections(points, v, c);
    let limit = eps * rms(&u);
    u.iter().filter(|x| x.abs() < limit).count() as f64 / u.len().max(1) as f64
}

/// First and second moments of a cloud, so that `E[u²]`, `E[u·f]` and `E[u]`
/// for `u = v·f + c` need no pass over the points.
struct Moments {
    mean: [f64; 2],
    // E[f fᵀ] as (xx, xy, yy)
    second: [f64; 3],
}

impl Moments {
    fn of(points: &Matrix) -> Self {
        let n = points.rows() as f64;
        let (mut mx, mut my, mut xx, mut xy, mut yy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for r in points.row_iter() {
            mx += r[0];
            my += r[1];
            xx += r[0] * r[0];
            xy += r[0] * r[1];
            yy += r[1] * r[1];
        }
        Self {
            mean: [mx / n, my / n],
            second: [xx / n, xy / n, yy / n],
        }
    }

    /// `(E[u·f], E[u], E[u²])`.
    fn projected(&self, v: [f64; 2], c: f64) -> ([f64; 2], f64, f64) {
        let [xx, xy, yy] = self.second;
        let uf = [
            xx * v[0] + xy * v[1] + c * self.mean[0],
            xy * v[0] + yy * v[1] + c * self.mean[1],
        ];
        let u_mean = v[0] * self.mean[0] + v[1] * self.mean[1] + c;
        let u_sq = v[0] * uf[0] + v[1] * uf[1] + c * u_mean;
        (uf, u_mean, u_sq)
    }
}

/// Soft objective `mean σ((ε − |u|/R)/T)` and its gradient in `(v, c)`.
pub fn soft_mixture_objective(
    points: &Matrix,
    v: [f64; 2],
    c: f64,
    eps: f64,
    temperature: f64,
) -> (f64, [f64; 3]) {
    soft_objective_with(points, &Moments::of(points), v, c, eps, temperature)
}

fn soft_objective_with(
    points: &Matrix,
    moments: &Moments,
    v: [f64; 2],
    c: f64,
    eps: f64,
    temperature: f64,
) -> (f64, [f64; 3]) {
    let n = points.rows() as f64;
    let (uf, u_mean, u_sq) = moments.projected(v, c);
    let r = u_sq.max(0.0).sqrt();
    let inv_r = 1.0 / r;
    let inv_t = 1.0 / temperature;

    let mut value = 0.0;
    let (mut a0, mut a1, mut ac) = (0.0, 0.0, 0.0);
    let mut b = 0.0;
    for row in points.row_iter() {
        let ui = v[0] * row[0] + v[1] * row[1] + c;
        let z = (eps - ui.abs() * inv_r) * inv_t;
        // σ(z) < 1e-17 here: below the resolution of the running sums
        if z < -40.0 {
            continue;
        }
        let s = sigmoid(z);
        value += s;
        let slope = s * (1.0 - s);
        if slope == 0.0 {
            continue;
        }
        let signed = if ui > 0.0 {
            slope
        } else if ui < 0.0 {
            -slope
        } else {
            0.0
        };
        a0 += signed * row[0];
        a1 += signed * row[1];
        ac += signed;
        b += slope * ui.abs();
    }
    // d(|u|/R) = sign(u)·du/R − |u|·E[u·du]/R³
    let k = -inv_t / n;
    let r3 = r * r * r;
    let grad = [
        k * (a0 * inv_r - b * uf[0] / r3),
        k * (a1 * inv_r - b * uf[1] / r3),
        k * (ac * inv_r - b * u_mean / r3),
    ];
    (value / n, grad)
}

const CHECKPOINT_EVERY: usize = 10;

struct Ascent {
    fraction: f64,
    v: [f64; 2],
    c: f64,
}

/// Annealed gradient ascent; returns the best hard-count checkpoint.
fn ascend(
    points: &Matrix,
    moments: &Moments,
    eps: f64,
    start: ([f64; 2], f64),
    steps: usize,
    lr: f64,
) -> Option<Ascent> {
    let (mut v, mut c) = start;
    let mut best: Option<Ascent> = None;
    let consider = |v: [f64; 2], c: f64, best: &mut Option<Ascent>| {
        let fraction = hard_mixture_count(points, v, c, eps);
        if best.as_ref().is_none_or(|b| fraction > b.fraction) {
            *best = Some(Ascent { fraction, v, c });
        }
    };
    for t in 0..steps {
        if t % CHECKPOINT_EVERY == 0 {
            consider(v, c, &mut best);
        }
        let temperature = 1.0 - t as f64 / steps as f64;
        let (value, g) = soft_objective_with(points, moments, v, c, eps, temperature);
        if !value.is_finite() || !g.iter().all(|x| x.is_finite()) {
            return None;
        }
        v[0] += lr * g[0];
        v[1] += lr * g[1];
        c += lr * g[2];
    }
    consider(v, c, &mut best);
    best
}

/// ε-mixture index of a cloud (normalized internally).
///
/// `candidates` random bands (unit `v`, passing through a random point) are
/// ranked by hard count, and each restart anneals the temperature linearly
/// from 1 towards 0 starting at the next best one. The soft objective is
/// nearly flat at high temperature, so the ascent mostly refines its start. Late in the anneal the gradient
/// grows like 1/T and can throw the band off the data, so the hard count is
/// checkpointed every few steps and each restart reports its best checkpoint.
/// The best restart wins (earliest on ties). A restart that produces
/// non-finite values is rerun with half the step size.
pub fn mixture_index(points: &Matrix, eps: f64, opts: &MixtureOptions) -> Result<Mixture> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(invalid(format!("eps must be positive, got {eps}")));
    }
    if opts.restarts == 0 {
        return Err(invalid("mixture index needs at least one restart"));
    }
    if !(opts.lr > 0.0 && opts.lr.is_finite()) {
        return Err(invalid(format!(
            "learning rate must be positive, got {}",
            opts.lr
        )));
    }
    let normalized = normalize_cloud(points)?;
    let moments = Moments::of(&normalized);
    let mut rng = seeded_rng(opts.seed);
    let n = normalized.rows();
    let mut pool: Vec<(f64, [f64; 2], f64)> = (0..opts.candidates.max(opts.restarts))
        .map(|_| {
            let angle = rng.random::<f64>() * std::f64::consts::TAU;
            let v = [angle.cos(), angle.sin()];
            let anchor = normalized.row(rng.random_range(0..n));
            let c = -(v[0] * anchor[0] + v[1] * anchor[1]);
            (hard_mixture_count(&normalized, v, c, eps), v, c)
        })
        .collect();
    // stable: equal counts keep draw order
    pool.sort_by(|a, b| b.0.total_cmp(&a.0));
    // restarts are independent; results are folded in pool order, so ties
    // still go to the earliest restart
    let runs: Vec<(Option<Ascent>, bool)> = pool
        .par_iter()
        .take(opts.restarts)
        .map(|&(_, v, c)| {
            let mut lr = opts.lr;
            let mut halved = false;
            for _ in 0..20 {
                match ascend(&normalized, &moments, eps, (v, c), opts.steps, lr) {
                    Some(a) => return (Some(a), halved),
                    None => {
                        lr *= 0.5;
                        halved = true;
                    }
                }
            }
            (None, halved)
        })
        .collect();
    let lr_halved = runs.iter().any(|r| r.1);
    let mut best: Option<Mixture> = None;
    for a in runs.into_iter().filter_map(|r| r.0) {
        if best.as_ref().is_none_or(|b| a.fraction > b.fraction) {
            best = Some(Mixture {
                fraction: a.fraction,
                v: a.v,
                c: a.c,
                lr_halved,
            });
        }
    }
    let mut best =
        best.ok_or_else(|| Error::Degenerate("every mixture-index restart diverged".into()))?;
    best.lr_halved = lr_halved;
    Ok(best)
}

/// Scores of one 2-D cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrreducibilityScore {
    pub separability: f64,
    pub mixture: f64,
    pub eps: f64,
    pub theta: f64,
    pub v: [f64; 2],
    pub c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<PlaneTag>,
}

pub fn score_cloud(
    cloud: &PointCloud2D,
    eps: f64,
    opts: &MixtureOptions,
) -> Result<IrreducibilityScore> {
    let sep = separability_index(&cloud.points)?;
    let mix = mixture_index(&cloud.points, eps, opts)?;
    Ok(IrreducibilityScore {
        separability: sep.bits,
        mixture: mix.fraction,
        eps,
        theta: sep.theta,
        v: mix.v,
        c: mix.c,
        tag: cloud.tag,
    })
}

/// Mean scores over a cluster's planes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterScore {
    pub cluster: usize,
    pub separability: f64,
    pub mixture: f64,
    pub planes: Vec<IrreducibilityScore>,
}

impl ClusterScore {
    /// Averages per-plane scores.
    pub fn from_planes(cluster: usize, planes: Vec<IrreducibilityScore>) -> Result<Self> {
        if planes.is_empty() {
            return Err(invalid(format!("cluster {cluster} has no planes to score")));
        }
        let n = planes.len() as f64;
        Ok(Self {
            cluster,
            separability: planes.iter().map(|p| p.separability).sum::<f64>() / n,
            mixture: planes.iter().map(|p| p.mixture).sum::<f64>() / n,
            planes,
        })
    }

    /// `(1 − M)·S`.
    pub fn product_key(&self) -> f64 {
        (1.0 - self.mixture) * self.separability
    }
}

pub fn score_cluster(
    cluster: usize,
    planes: &[PointCloud2D],
    eps: f64,
    opts: &MixtureOptions,
) -> Result<ClusterScore> {
    if planes.is_empty() {
        return Err(invalid(format!("cluster {cluster} has no planes to score")));
    }
    let scores = planes
        .iter()
        .map(|p| score_cloud(p, eps, opts))
        .collect::<Result<Vec<_>>>()?;
    ClusterScore::from_planes(cluster, scores)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub cluster: usize,
    pub separability: f64,
    pub mixture: f64,
    pub product_key: f64,
    /// 0-based position when sorted by descending separability.
    pub separability_position: usize,
    /// 0-based position when sorted by ascending mixture.
    pub mixture_position: usize,
    pub min_position: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    /// Cluster ids by descending `(1 − M)·S`.
    pub by_product: Vec<usize>,
    /// Cluster ids by ascending min(separability position, mixture position).
    pub by_min_position: Vec<usize>,
    /// Per-cluster keys, in input order.
    pub entries: Vec<RankEntry>,
}

/// Orders clusters by the product metric and by the min-sorted-position rule.
/// Ties go to the lower cluster id.
pub fn rank_clusters(scores: &[ClusterScore]) -> Result<Ranking> {
    if scores.is_empty() {
        return Err(invalid("nothing to rank"));
    }
    let n = scores.len();
    let idx: Vec<usize> = (0..n).collect();
    let by_id = |a: usize, b: usize| scores[a].cluster.cmp(&scores[b].cluster);

    let mut sep_order = idx.clone();
    sep_order.sort_by(|&a, &b| {
        scores[b]
            .separability
            .total_cmp(&scores[a].separability)
            .then(by_id(a, b))
    });
    let mut mix_order = idx.clone();
    mix_order.sort_by(|&a, &b| {
        scores[a]
            .mixture
            .total_cmp(&scores[b].mixture)
            .then(by_id(a, b))
    });
    let mut sep_pos = vec![0; n];
    let mut mix_pos = vec![0; n];
    for (p, &i) in sep_order.iter().enumerate() {
        sep_pos[i] = p;
    }
    for (p, &i) in mix_order.iter().enumerate() {
        mix_pos[i] = p;
    }

    let entries: Vec<RankEntry> = (0..n)
        .map(|i| RankEntry {
            cluster: scores[i].cluster,
            separability: scores[i].separability,
            mixture: scores[i].mixture,
            product_key: scores[i].product_key(),
            separability_position: sep_pos[i],
            mixture_position: mix_pos[i],
            min_position: sep_pos[i].min(mix_pos[i]),
        })
        .collect();

    let mut product = idx.clone();
    product.sort_by(|&a, &b| {
        entries[b]
            .product_key
            .total_cmp(&entries[a].product_key)
            .then(by_id(a, b))
    });
    let mut min_rule = idx;
    min_rule.sort_by(|&a, &b| {
        entries[a]
            .min_position
            .cmp(&entries[b].min_position)
            .then(by_id(a, b))
    });
    Ok(Ranking {
        by_product: product.iter().map(|&i| scores[i].cluster).collect(),
        by_min_position: min_rule.iter().map(|&i| scores[i].cluster).collect(),
        entries,
    })
}
