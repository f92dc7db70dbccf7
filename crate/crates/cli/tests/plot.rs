// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use std::collections::BTreeSet;

use common::{arg, run_ok, sha256_file};
use featgeom::npy::{labels_to_array, write_matrix_f64};
use featgeom::numerics::Matrix;
use featgeom_cli::plot::{render_svg, HeatCells, Heatmap, PlotData, Scatter, Series, Style};
use proptest::prelude::*;
use roxmltree::{Document, Node};

fn parse(svg: &str) -> Document<'_> {
    let doc = Document::parse(svg).expect("well-formed XML");
    let root = doc.root_element();
    assert_eq!(root.tag_name().name(), "svg");
    assert_eq!(
        root.tag_name().namespace(),
        Some("http://www.w3.org/2000/svg")
    );
    doc
}

fn group<'a, 'i>(doc: &'a Document<'i>, class: &str) -> Option<Node<'a, 'i>> {
    doc.descendants()
        .find(|n| n.has_tag_name("g") && n.attribute("class") == Some(class))
}

fn count_in(doc: &Document, class: &str, tag: &str) -> usize {
    group(doc, class).map_or(0, |g| {
        g.descendants().filter(|n| n.has_tag_name(tag)).count()
    })
}

fn legend_entries(doc: &Document) -> Vec<String> {
    doc.descendants()
        .filter(|n| n.attribute("class") == Some("legend-entry"))
        .map(|n| {
            let swatch = n.children().find(|c| c.has_tag_name("rect")).unwrap();
            swatch.attribute("fill").unwrap().to_string()
        })
        .collect()
}

#[test]
fn empty_dataset_draws_axes_only() {
    for data in [
        PlotData::Scatter(Scatter::default()),
        PlotData::Line(Vec::new()),
        PlotData::Heatmap(Heatmap {
            rows: 0,
            cols: 0,
            cells: HeatCells::Scalar(Vec::new()),
        }),
    ] {
        let svg = render_svg(&data, &Style::default()).unwrap();
        let doc = parse(&svg);
        assert!(group(&doc, "axes").is_some());
        assert_eq!(count_in(&doc, "points", "circle"), 0);
        assert_eq!(count_in(&doc, "cells", "rect"), 0);
        assert_eq!(count_in(&doc, "series", "polyline"), 0);
        assert!(legend_entries(&doc).is_empty());
    }
}

#[test]
fn seven_classes_give_seven_legend_entries() {
    let points: Vec<[f64; 2]> = (0..70)
        .map(|i| {
            let t = i as f64 * 0.3;
            [t.cos() * (1 + i % 7) as f64, t.sin()]
        })
        .collect();
    let classes: Vec<usize> = (0..70).map(|i| i % 7).collect();
    let data = PlotData::Scatter(Scatter {
        points,
        classes: Some(classes),
        class_names: None,
    });
    let doc_text = render_svg(&data, &Style::default()).unwrap();
    let doc = parse(&doc_text);
    let colors = legend_entries(&doc);
    assert_eq!(colors.len(), 7);
    assert_eq!(colors.iter().collect::<BTreeSet<_>>().len(), 7);
    assert_eq!(count_in(&doc, "points", "circle"), 70);
    // every point is filled with one of the legend colors
    let fills: BTreeSet<String> = group(&doc, "points")
        .unwrap()
        .descendants()
        .filter_map(|n| n.attribute("fill").map(str::to_string))
        .collect();
    assert!(fills.iter().all(|f| colors.contains(f)), "{fills:?}");
}

#[test]
fn heatmap_has_one_cell_per_entry() {
    let data = PlotData::Heatmap(Heatmap {
        rows: 3,
        cols: 4,
        cells: HeatCells::Scalar((0..12).map(f64::from).collect()),
    });
    let doc_text = render_svg(&data, &Style::default()).unwrap();
    assert_eq!(count_in(&parse(&doc_text), "cells", "rect"), 12);

    let rgb = PlotData::Heatmap(Heatmap {
        rows: 1,
        cols: 2,
        cells: HeatCells::Rgb(vec![[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]),
    });
    let doc_text = render_svg(&rgb, &Style::default()).unwrap();
    let doc = parse(&doc_text);
    let fills: Vec<&str> = group(&doc, "cells")
        .unwrap()
        .children()
        .filter_map(|n| n.attribute("fill"))
        .collect();
    assert_eq!(fills, ["#ff0000", "#0000ff"]);
}

#[test]
fn line_chart_draws_each_series() {
    let series: Vec<Series> = (0..3)
        .map(|k| Series {
            name: format!("s{k}"),
            points: (0..10).map(|i| [i as f64, (i * k) as f64]).collect(),
        })
        .collect();
    let doc_text = render_svg(&PlotData::Line(series), &Style::default()).unwrap();
    let doc = parse(&doc_text);
    assert_eq!(count_in(&doc, "series", "polyline"), 3);
    assert_eq!(legend_entries(&doc).len(), 3);
}

#[test]
fn text_is_escaped() {
    let style = Style {
        title: Some("a < b & \"c\"".into()),
        ..Style::default()
    };
    let doc_text = render_svg(&PlotData::Scatter(Scatter::default()), &style).unwrap();
    let doc = parse(&doc_text);
    assert!(doc.descendants().any(|n| n.text() == Some("a < b & \"c\"")));
}

#[test]
fn cli_plot_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let path = |name: &str| tmp.path().join(name);
    let x = Matrix::from_fn(49, 2, |i, j| if j == 0 { i as f64 } else { (i % 7) as f64 });
    write_matrix_f64(&path("x.npy"), &x).unwrap();
    let classes: Vec<usize> = (0..49).map(|i| i % 7).collect();
    labels_to_array(&[&classes])
        .unwrap()
        .save(&path("y.npy"))
        .unwrap();
    for name in ["a.svg", "b.svg"] {
        run_ok([
            "plot",
            "--input",
            &arg(&path("x.npy")),
            "--labels",
            &arg(&path("y.npy")),
            "--out",
            &arg(&path(name)),
        ]);
    }
    assert_eq!(sha256_file(&path("a.svg")), sha256_file(&path("b.svg")));
    let text = std::fs::read_to_string(path("a.svg")).unwrap();
    assert_eq!(legend_entries(&parse(&text)).len(), 7);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scatter_is_well_formed(
        points in proptest::collection::vec((-1e6f64..1e6, -1e6f64..1e6), 0..60),
        k in 1usize..12,
    ) {
        let classes: Vec<usize> = (0..points.len()).map(|i| i % k).collect();
        let distinct = classes.iter().collect::<BTreeSet<_>>().len();
        let data = PlotData::Scatter(Scatter {
            points: points.iter().map(|&(a, b)| [a, b]).collect(),
            classes: Some(classes),
            class_names: None,
        });
        let svg = render_svg(&data, &Style::default()).unwrap();
        prop_assert_eq!(&svg, &render_svg(&data, &Style::default()).unwrap());
        let doc = parse(&svg);
        prop_assert_eq!(count_in(&doc, "points", "circle"), points.len());
        prop_assert_eq!(legend_entries(&doc).len(), distinct);
    }
}
