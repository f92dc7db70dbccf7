// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

use clap::Args;
use featgeom::evr::{
    build_design_matrix, evr_fit, residual_rgb, staged_fit, EvrStage, FeatureSpec, TaskLabels,
};
use serde::{Deserialize, Serialize};

use super::{required, Step};
use crate::error::{invalid, CliResult};
use crate::plot::{render_svg, HeatCells, Heatmap, PlotData, Style};
use crate::session::Session;

#[derive(Debug, Clone, Serialize)]
struct EvrSummary {
    modulus: usize,
    stages: Vec<EvrStage>,
    final_r2: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Evr {
    #[arg(long)]
    pub acts: Option<PathBuf>,
    /// (α, β) labels; γ = α + β mod m.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    pub modulus: usize,
    /// One regression stage, repeatable. Descriptors joined by '+', each
    /// `onehot:<var>` or `circle:<var>[:<modulus>]`.
    #[arg(long = "stage", default_values_t = ["onehot:alpha".to_string(), "onehot:beta".to_string(), "circle:gamma".to_string()])]
    pub stages: Vec<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Evr {
    fn parsed_stages(&self) -> CliResult<Vec<Vec<FeatureSpec>>> {
        if self.stages.is_empty() {
            return Err(invalid("at least one --stage is required"));
        }
        self.stages
            .iter()
            .map(|stage| {
                stage
                    .split('+')
                    .map(|spec| spec.parse::<FeatureSpec>().map_err(Into::into))
                    .collect()
            })
            .collect()
    }
}

impl Step for Evr {
    const NAME: &'static str = "evr";

    fn manifest_path(&self) -> CliResult<PathBuf> {
        Ok(required(&self.out, "out")?.join("manifest.json"))
    }

    fn run(&self, s: &mut Session) -> CliResult<()> {
        let out = required(&self.out, "out")?;
        let stages = self.parsed_stages()?;
        let x = s.read_matrix(required(&self.acts, "acts")?)?;
        let mut columns = s.read_labels(required(&self.labels, "labels")?)?;
        if columns.len() < 2 {
            return Err(invalid("labels need an alpha and a beta column"));
        }
        let beta = columns.swap_remove(1);
        let alpha = columns.swap_remove(0);
        let labels = TaskLabels::from_alpha_beta(alpha, beta, self.modulus)?;
        let fits = staged_fit(&labels, &stages, self.modulus, &x)?;
        let all_specs: Vec<FeatureSpec> = stages.concat();
        let last = evr_fit(&build_design_matrix(&labels, &all_specs, self.modulus)?, &x)?;
        let grid = residual_rgb(
            &last.residuals,
            &labels.alpha,
            &labels.beta,
            self.modulus,
            self.modulus,
        )?;

        s.emit_json(
            out.join("report.json"),
            &EvrSummary {
                modulus: self.modulus,
                stages: fits,
                final_r2: last.r2,
            },
        )?;
        s.emit_matrix(out.join("residuals.npy"), &last.residuals)?;
        s.emit(out.join("residual_rgb.csv"), grid.to_csv().into_bytes())?;
        let heatmap = PlotData::Heatmap(Heatmap {
            rows: grid.rows,
            cols: grid.cols,
            cells: HeatCells::Rgb(grid.cells.clone()),
        });
        let style = Style {
            title: Some("residual top-3 principal components".into()),
            x_label: Some("beta".into()),
            y_label: Some("alpha".into()),
            ..Style::default()
        };
        s.emit(
            out.join("residual_rgb.svg"),
            render_svg(&heatmap, &style)?.into_bytes(),
        )
    }
}
