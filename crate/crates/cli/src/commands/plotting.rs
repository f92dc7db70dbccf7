// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};

use clap::Args;
use featgeom::interventions::InterventionRecord;
use featgeom::numerics::Matrix;
use serde::{Deserialize, Serialize};

use super::{required, sidecar_manifest, Step};
use crate::error::{invalid, CliResult};
use crate::plot::{render_svg, HeatCells, Heatmap, PlotData, Scatter, Series, Style};
use crate::session::Session;

/// The part of a sweep report the plot needs.
#[derive(Deserialize)]
struct SweepRecords {
    records: Vec<InterventionRecord>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Plot {
    /// A .npy array, or a sweep JSON from intervene-sweep.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// scatter, heatmap, or line.
    #[arg(long, default_value = "scatter")]
    pub kind: String,
    /// Integer class per row for scatter coloring.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub label_column: usize,
    #[arg(long, default_value_t = 0)]
    pub x_column: usize,
    #[arg(long, default_value_t = 1)]
    pub y_column: usize,
    #[arg(long)]
    pub title: Option<String>,
    #[arg(long)]
    pub x_label: Option<String>,
    #[arg(long)]
    pub y_label: Option<String>,
    #[arg(long, default_value_t = 640)]
    pub width: u32,
    #[arg(long, default_value_t = 480)]
    pub height: u32,
    /// SVG file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Plot {
    fn column(&self, x: &Matrix, c: usize) -> CliResult<Vec<f64>> {
        if c >= x.cols() {
            return Err(invalid(format!(
                "column {c} missing: input has {} columns",
                x.cols()
            )));
        }
        Ok(x.column(c))
    }

    fn array_data(&self, s: &mut Session, input: &Path) -> CliResult<PlotData> {
        let x = s.read_matrix(input)?;
        match self.kind.as_str() {
            "scatter" => {
                let xs = self.column(&x, self.x_column)?;
                let ys = self.column(&x, self.y_column)?;
                let classes = match &self.labels {
                    Some(path) => {
                        let columns = s.read_labels(path)?;
                        let c = columns.get(self.label_column).cloned().ok_or_else(|| {
                            invalid(format!("label column {} missing", self.label_column))
                        })?;
                        Some(c)
                    }
                    None => None,
                };
                Ok(PlotData::Scatter(Scatter {
                    points: xs.into_iter().zip(ys).map(|(a, b)| [a, b]).collect(),
                    classes,
                    class_names: None,
                }))
            }
            "heatmap" => Ok(PlotData::Heatmap(Heatmap {
                rows: x.rows(),
                cols: x.cols(),
                cells: HeatCells::Scalar(x.as_slice().to_vec()),
            })),
            "line" => {
                let series = if x.cols() == 1 {
                    vec![Series {
                        name: "series 1".into(),
                        points: x
                            .as_slice()
                            .iter()
                            .enumerate()
                            .map(|(i, &v)| [i as f64, v])
                            .collect(),
                    }]
                } else {
                    let xs = x.column(0);
                    (1..x.cols())
                        .map(|c| Series {
                            name: format!("series {c}"),
                            points: xs.iter().zip(x.column(c)).map(|(&a, b)| [a, b]).collect(),
                        })
                        .collect()
                };
                Ok(PlotData::Line(series))
            }
            _ => unreachable!("kind checked in run"),
        }
    }

    /// Polar-sweep targets placed at `(r cos θ, r sin θ)`, colored by prediction.
    fn sweep_data(&self, s: &mut Session, input: &Path) -> CliResult<PlotData> {
        if self.kind != "scatter" {
            return Err(invalid("sweep records can only be drawn as a scatter"));
        }
        let sweep: SweepRecords = s.read_json(input)?;
        let modulus = sweep
            .records
            .iter()
            .map(|r| r.predicted + 1)
            .max()
            .unwrap_or(0);
        Ok(PlotData::Scatter(Scatter {
            points: sweep
                .records
                .iter()
                .map(|r| [r.r * r.theta.cos(), r.r * r.theta.sin()])
                .collect(),
            classes: Some(sweep.records.iter().map(|r| r.predicted).collect()),
            class_names: Some((0..modulus).map(|g| format!("predicted {g}")).collect()),
        }))
    }
}

impl Step for Plot {
    const NAME: &'static str = "plot";

    fn manifest_path(&self) -> CliResult<PathBuf> {
        Ok(sidecar_manifest(required(&self.out, "out")?))
    }

    fn run(&self, s: &mut Session) -> CliResult<()> {
        let input = required(&self.input, "input")?;
        if !matches!(self.kind.as_str(), "scatter" | "heatmap" | "line") {
            return Err(invalid(format!(
                "unknown plot kind '{}', expected scatter, heatmap, or line",
                self.kind
            )));
        }
        let data = if input.extension().is_some_and(|e| e == "json") {
            self.sweep_data(s, input)?
        } else {
            self.array_data(s, input)?
        };
        let style = Style {
            title: self.title.clone(),
            x_label: self.x_label.clone(),
            y_label: self.y_label.clone(),
            width: self.width,
            height: self.height,
            ..Style::default()
        };
        s.emit(
            required(&self.out, "out")?.to_path_buf(),
            render_svg(&data, &style)?.into_bytes(),
        )
    }
}
