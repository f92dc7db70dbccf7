// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dictionary clustering, cluster reconstructions, scoring, and ranking.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use featgeom::clustering::{
    graph_cluster, spectral_cluster_dictionary, Clustering, Similarity, DEFAULT_K, DEFAULT_TAU,
};
use featgeom::error::Error;
use featgeom::irreducibility::{
    rank_clusters, score_cloud, score_cluster, ClusterScore, MixtureOptions, PointCloud2D, Ranking,
    DEFAULT_EPS,
};
use featgeom::numerics::Matrix;
use featgeom::reconstruct::{cluster_reconstruct, project_planes};
use featgeom::sae::SaeParams;
use serde::{Deserialize, Serialize};

use super::{parse_named, required, seed_of, sidecar_manifest, Skipped, Step};
use crate::error::{invalid, CliResult};
use crate::plot::{render_svg, PlotData, Scatter, Style};
use crate::session::Session;

/// How the dictionary is partitioned.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ClusterOptions {
    /// graph or spectral.
    #[arg(long, default_value = "graph")]
    pub method: String,
    /// Nearest neighbours per element (graph).
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    /// Cosine threshold for a neighbour edge (graph).
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    /// Number of clusters (spectral).
    #[arg(long, default_value_t = 2)]
    pub n_clusters: usize,
    /// cosine or angular (spectral).
    #[arg(long, default_value = "cosine")]
    pub similarity: String,
}

impl ClusterOptions {
    /// Rejects unknown names before any input is read.
    fn validate(&self) -> CliResult<()> {
        match self.method.as_str() {
            "graph" => Ok(()),
            "spectral" => parse_named::<Similarity>(&self.similarity, "similarity").map(|_| ()),
            other => Err(invalid(format!(
                "unknown clustering method '{other}', expected graph or spectral"
            ))),
        }
    }

    fn cluster(&self, sae: &SaeParams, mask: Option<&[bool]>, seed: u64) -> CliResult<Clustering> {
        match self.method.as_str() {
            "graph" => Ok(graph_cluster(&sae.w_dec, self.k, self.tau, mask)?),
            "spectral" => {
                let similarity: Similarity = parse_named(&self.similarity, "similarity")?;
                Ok(spectral_cluster_dictionary(
                    &sae.w_dec,
                    self.n_clusters,
                    seed,
                    similarity,
                    mask,
                )?)
            }
            other => Err(invalid(format!(
                "unknown clustering method '{other}', expected graph or spectral"
            ))),
        }
    }
}

/// Optimizer and band width of the mixture index.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ScoreOptions {
    /// Band half-width as a fraction of the projection RMS.
    #[arg(long, default_value_t = DEFAULT_EPS)]
    pub eps: f64,
    #[arg(long, default_value_t = MixtureOptions::default().steps)]
    pub steps: usize,
    #[arg(long, default_value_t = MixtureOptions::default().lr)]
    pub lr: f64,
    #[arg(long, default_value_t = MixtureOptions::default().restarts)]
    pub restarts: usize,
    #[arg(long, default_value_t = MixtureOptions::default().candidates)]
    pub candidates: usize,
    /// Clusters with fewer elements are not scored.
    #[arg(long, default_value_t = 2)]
    pub min_size: usize,
}

impl ScoreOptions {
    fn mixture(&self, seed: u64) -> MixtureOptions {
        MixtureOptions {
            steps: self.steps,
            lr: self.lr,
            restarts: self.restarts,
            candidates: self.candidates,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoredCluster {
    pub size: usize,
    pub product_key: f64,
    #[serde(flatten)]
    pub score: ClusterScore,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreReport {
    pub eps: f64,
    pub clusters: Vec<ScoredCluster>,
    pub skipped: Vec<Skipped>,
}

/// Scores every cluster; returns the report and the scored planes by cluster.
fn score_all(
    sae: &SaeParams,
    clustering: &Clustering,
    x: &Matrix,
    opts: &ScoreOptions,
    seed: u64,
) -> CliResult<(ScoreReport, BTreeMap<usize, Vec<PointCloud2D>>)> {
    let mixture = opts.mixture(seed);
    let mut clusters = Vec::new();
    let mut skipped = Vec::new();
    let mut planes_by_cluster = BTreeMap::new();
    for (id, features) in clustering.clusters().into_iter().enumerate() {
        let skip = |reason: &str| Skipped {
            cluster: id,
            size: features.len(),
            reason: reason.into(),
        };
        if features.len() < opts.min_size {
            skipped.push(skip("below min_size"));
            continue;
        }
        let rec = match cluster_reconstruct(sae, id, &features, x) {
            Ok(rec) => rec,
            Err(Error::Degenerate(_)) => {
                skipped.push(skip("no input activates the cluster"));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let planes = project_planes(&rec)?;
        if planes.is_empty() {
            skipped.push(skip("fewer than two principal directions with variance"));
            continue;
        }
        let score = score_cluster(id, &planes, opts.eps, &mixture)?;
        clusters.push(ScoredCluster {
            size: features.len(),
            product_key: score.product_key(),
            score,
        });
        planes_by_cluster.insert(id, planes);
    }
    Ok((
        ScoreReport {
            eps: opts.eps,
            clusters,
            skipped,
        },
        planes_by_cluster,
    ))
}

fn ranking_of(report: &ScoreReport) -> CliResult<Ranking> {
    let scores: Vec<ClusterScore> = report.clusters.iter().map(|c| c.score.clone()).collect();
    Ok(rank_clusters(&scores)?)
}

fn alive_mask(sae: &SaeParams, x: Option<&Matrix>) -> CliResult<Option<Vec<bool>>> {
    x.map(|x| sae.alive_mask(x)).transpose().map_err(Into::into)
}

fn load_clustering(s: &mut Session, path: &Path, m: usize) -> CliResult<Clustering> {
    let text = String::from_utf8(s.read(path)?)
        .map_err(|_| invalid(format!("{}: not UTF-8", path.display())))?;
    let clustering = Clustering::from_json(&text)?;
    if clustering.n_elements() != m {
        return Err(invalid(format!(
            "clustering covers {} elements but the SAE has {m}",
            clustering.n_elements()
        )));
    }
    Ok(clustering)
}

fn clustering_bytes(c: &Clustering) -> CliResult<Vec<u8>> {
    let mut text = c.to_json()?;
    if !text.ends_with('\n') {
        text.push('\n');
    }
    Ok(text.into_bytes())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Cluster {
    /// SAE directory written by sae-train.
    #[arg(long)]
    pub sae: Option<PathBuf>,
    /// Activations used to exclude dead dictionary elements.
    #[arg(long)]
    pub acts: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub options: ClusterOptions,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Clustering JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Step for Cluster {
    const NAME: &'static str = "cluster";

    fn manifest_path(&self) -> CliResult<PathBuf> {
        Ok(sidecar_manifest(required(&self.out, "out")?))
    }

    fn run(&self, s: &mut Session) -> CliResult<()> {
        let out = required(&self.out, "out")?;
        self.options.validate()?;
        let (sae, _) = s.read_sae(required(&self.sae, "sae")?)?;
        let x = self.acts.as_deref().map(|p| s.read_matrix(p)).transpose()?;
        let mask = alive_mask(&sae, x.as_ref())?;
        let clustering = self
            .options
            .cluster(&sae, mask.as_deref(), seed_of(self.seed))?;
        s.emit(out.to_path_buf(), clustering_bytes(&clustering)?)
    }
}

#[derive(Debug, Clone, Serialize)]
struct ReconstructionSummary {
    cluster: usize,
    features: Vec<usize>,
    kept_rows: Vec<usize>,
    usable_components: usize,
    explained_variance_ratio: Vec<f64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Reconstruct {
    #[arg(long)]
    pub sae: Option<PathBuf>,
    #[arg(long)]
    pub acts: Option<PathBuf>,
    /// Clustering JSON written by cluster.
    #[arg(long)]
    pub clusters: Option<PathBuf>,
    /// Only this cluster id; all clusters when omitted.
    #[arg(long)]
    pub cluster: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Step for Reconstruct {
    const NAME: &'static str = "reconstruct";

    fn manifest_path(&self) -> CliResult<PathBuf> {
        Ok(required(&self.out, "out")?.join("manifest.json"))
    }

    fn run(&self, s: &mut Session) -> CliResult<()> {
        let out = required(&self.out, "out")?;
        let (sae, _) = s.read_sae(required(&self.sae, "sae")?)?;
        let x = s.read_matrix(required(&self.acts, "acts")?)?;
        let clustering = load_clustering(s, required(&self.clusters, "clusters")?, sae.m())?;
        let all = clustering.clusters();
        let ids: Vec<usize> = match self.cluster {
            Some(id) if id < all.len() => vec![id],
            Some(id) => {
                return Err(invalid(format!(
                    "cluster {id} does not exist ({} clusters)",
                    all.len()
                )))
            }
            None => (0..all.len()).collect(),
        };
        let mut index = Vec::new();
        let mut skipped = Vec::new();
        for id in ids {
            let rec = match cluster_reconstruct(&sae, id, &all[id], &x) {
                Ok(rec) => rec,
                Err(Error::Degenerate(reason)) => {
                    skipped.push(Skipped {
                        cluster: id,
                        size: all[id].len(),
                        reason,
                    });
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            s.emit_matrix(out.join(format!("cluster_{id}.npy")), &rec.reconstructions)?;
            if let Some(pca) = &rec.pca {
                s.emit_matrix(
                    out.join(format!("cluster_{id}_pca.npy")),
                    &pca.transform(&rec.reconstructions)?,
                )?;
            }
            let summary = ReconstructionSummary {
                cluster: id,
                features: rec.features.clone(),
                kept_rows: rec.kept_rows.clone(),
                usable_components: rec.usable_components(),
                explained_variance_ratio: rec
                    .pca
                    .as_ref()
                    .map(|p| p.explained_variance_ratio())
                    .unwrap_or_default(),
            };
            s.emit_json(out.join(format!("cluster_{id}.json")), &summary)?;
            index.push(id);
        }
        s.emit_json(
            out.join("index.json"),
            &serde_json::json!({ "reconstructed": index, "skipped": skipped }),
        )
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Score {
    /// A single n×2 point cloud to score instead of SAE clusters.
    #[arg(long)]
    pub points: Option<PathBuf>,
    #[arg(long)]
    pub sae: Option<PathBuf>,
    #[arg(long)]
    pub acts: Option<PathBuf>,
    #[arg(long)]
    pub clusters: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub options: ScoreOptions,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Scores JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Step for Score {
    const NAME: &'static str = "score";

    fn manifest_path(&self) -> CliResult<PathBuf> {
        Ok(sidecar_manifest(required(&self.out, "out")?))
    }

    fn run(&self, s: &mut Session) -> CliResult<()> {
        let out = required(&self.out, "out")?.to_path_buf();
        let seed = seed_of(self.seed);
        if let Some(points) = &self.points {
            if self.sae.is_some() || self.clusters.is_some() {
                return Err(invalid(
                    "--points cannot be combined with --sae or --clusters",
                ));
            }
            let cloud = PointCloud2D::new(s.read_matrix(points)?)?;
            let score = score_cloud(&cloud, self.options.eps, &self.options.mixture(seed))?;
            return s.emit_json(out, &score);
        }
        let (sae, _) = s.read_sae(required(&self.sae, "sae")?)?;
        let x = s.read_matrix(required(&self.acts, "acts")?)?;
        let clustering = load_clustering(s, required(&self.clusters, "clusters")?, sae.m())?;
        let (report, _) = score_all(&sae, &clustering, &x, &self.options, seed)?;
        s.emit_json(out, &report)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Rank {
    /// Scores JSON written by score.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Ranking JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Step for Rank {
    const NAME: &'static str = "rank";

    fn manifest_path(&self) -> CliResult<PathBuf> {
        Ok(sidecar_manifest(required(&self.out, "out")?))
    }

    fn run(&self, s: &mut Session) -> CliResult<()> {
        let report: ScoreReport = s.read_json(required(&self.scores, "scores")?)?;
        let ranking = ranking_of(&report)?;
        s.emit_json(required(&self.out, "out")?.to_path_buf(), &ranking)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Discover {
    #[arg(long)]
    pub acts: Option<PathBuf>,
    #[arg(long)]
    pub sae: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub clustering: ClusterOptions,
    #[command(flatten)]
    #[serde(flatten)]
    pub scoring: ScoreOptions,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Step for Discover {
    const NAME: &'static str = "discover";

    fn manifest_path(&self) -> CliResult<PathBuf> {
        Ok(required(&self.out, "out")?.join("manifest.json"))
    }

    fn run(&self, s: &mut Session) -> CliResult<()> {
        let out = required(&self.out, "out")?;
        let seed = seed_of(self.seed);
        self.clustering.validate()?;
        let x = s.read_matrix(required(&self.acts, "acts")?)?;
        let (sae, _) = s.read_sae(required(&self.sae, "sae")?)?;
        let mask = sae.alive_mask(&x)?;
        let clustering = self.clustering.cluster(&sae, Some(&mask), seed)?;
        let (report, planes) = score_all(&sae, &clustering, &x, &self.scoring, seed)?;
        s.emit(out.join("clusters.json"), clustering_bytes(&clustering)?)?;
        s.emit_json(out.join("scores.json"), &report)?;
        if report.clusters.is_empty() {
            return Err(invalid("no cluster could be scored, nothing to rank"));
        }
        let ranking = ranking_of(&report)?;
        s.emit_json(out.join("ranking.json"), &ranking)?;
        let top = ranking.by_product[0];
        let cloud = &planes[&top][0];
        let style = Style {
            title: Some(format!("cluster {top}, components 1-2")),
            x_label: Some("PC 1".into()),
            y_label: Some("PC 2".into()),
            ..Style::default()
        };
        let scatter = PlotData::Scatter(Scatter {
            points: cloud.points.row_iter().map(|r| [r[0], r[1]]).collect(),
            ..Scatter::default()
        });
        s.emit(
            out.join("top_cluster.svg"),
            render_svg(&scatter, &style)?.into_bytes(),
        )
    }
}
