//! Curve tables (CSV), curve plots (SVG) and model comparison tables.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{interval_integral, CurvePoint, MetricCurve, MetricError, MetricKind};
use crate::sweep::VariationAxis;

pub const CSV_HEADER: [&str; 6] = [
    "theta",
    "model_id",
    "metric",
    "estimate",
    "std",
    "n_eligible",
];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("curves do not share a variation axis")]
    MixedAxes,
    #[error("curves do not share a metric kind")]
    MixedKinds,
    #[error("model '{0}' appears more than once")]
    DuplicateModel(String),
    #[error("pairing names unknown model '{0}'")]
    UnknownPairModel(String),
    #[error("model '{0}' leads more than one pair")]
    DuplicatePair(String),
    #[error("curve '{model_id}' ({metric}) does not cover the axis grid")]
    GridMismatch { model_id: String, metric: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad curve row {row}: {message}")]
    BadRow { row: usize, message: String },
    #[error("model registry: {0}")]
    Registry(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

struct CountingWriter<W> {
    inner: W,
    count: usize,
}

impl<W: Write> Write for CountingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.count += n;
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

fn shared_axis(curves: &[MetricCurve]) -> Result<Option<&VariationAxis>, ReportError> {
    let Some(first) = curves.first() else {
        return Ok(None);
    };
    if curves.iter().any(|c| c.axis != first.axis) {
        return Err(ReportError::MixedAxes);
    }
    Ok(Some(&first.axis))
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes curves as CSV rows sorted by (model_id, θ). Numbers use the
/// shortest decimal form that parses back to the same double; undefined
/// cells are empty. Returns the number of bytes written.
pub fn emit_curve_csv<W: Write>(curves: &[MetricCurve], out: W) -> Result<usize, ReportError> {
    shared_axis(curves)?;
    let mut rows: Vec<(&str, String, &CurvePoint)> = curves
        .iter()
        .flat_map(|c| {
            let label = c.kind.label();
            c.points
                .iter()
                .map(move |p| (c.model_id.as_str(), label.clone(), p))
        })
        .collect();
    rows.sort_by(|a, b| {
        a.0.cmp(b.0)
            .then(a.2.theta.total_cmp(&b.2.theta))
            .then_with(|| a.1.cmp(&b.1))
    });

    let mut counter = CountingWriter {
        inner: out,
        count: 0,
    };
    {
        let mut w = csv::Writer::from_writer(&mut counter);
        w.write_record(CSV_HEADER)?;
        for (model_id, label, p) in rows {
            w.write_record([
                p.theta.to_string(),
                model_id.to_string(),
                label,
                opt(p.estimate),
                opt(p.std),
                p.n_eligible.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(counter.count)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub theta: f64,
    pub model_id: String,
    pub metric: String,
    pub estimate: Option<f64>,
    pub std: Option<f64>,
    pub n_eligible: usize,
}

pub fn parse_curve_csv<R: Read>(input: R) -> Result<Vec<CurveRow>, ReportError> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(ReportError::BadRow {
            row: 1,
            message: format!("expected header {}", CSV_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 2;
        let bad = |message: String| ReportError::BadRow { row, message };
        let number = |idx: usize| -> Result<Option<f64>, ReportError> {
            match &record[idx] {
                "" => Ok(None),
                s => s
                    .parse()
                    .map(Some)
                    .map_err(|_| bad(format!("'{s}' is not a number"))),
            }
        };
        rows.push(CurveRow {
            theta: number(0)?.ok_or_else(|| bad("theta is empty".into()))?,
            model_id: record[1].to_string(),
            metric: record[2].to_string(),
            estimate: number(3)?,
            std: number(4)?,
            n_eligible: record[5]
                .parse()
                .map_err(|_| bad(format!("'{}' is not a count", &record[5])))?,
        });
    }
    Ok(rows)
}

/// Regroups parsed rows into curves along `axis`, one per (model, metric) in
/// order of first appearance. Every curve must cover the grid exactly.
pub fn curves_from_rows(
    rows: &[CurveRow],
    axis: &VariationAxis,
) -> Result<Vec<MetricCurve>, ReportError> {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String), Vec<&CurveRow>> = BTreeMap::new();
    for r in rows {
        let key = (r.model_id.clone(), r.metric.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let mut group = groups.remove(&key).expect("group exists");
            group.sort_by(|a, b| a.theta.total_cmp(&b.theta));
            let (model_id, metric) = key;
            if group.len() != axis.grid.len()
                || group.iter().zip(&axis.grid).any(|(r, &g)| r.theta != g)
            {
                return Err(ReportError::GridMismatch { model_id, metric });
            }
            let kind: MetricKind = metric.parse()?;
            Ok(MetricCurve {
                axis: axis.clone(),
                model_id,
                kind,
                points: group
                    .iter()
                    .map(|r| CurvePoint {
                        theta: r.theta,
                        estimate: r.estimate,
                        std: r.std,
                        n_eligible: r.n_eligible,
                    })
                    .collect(),
                diagnostic: None,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct CurvePlotSpec {
    pub curves: Vec<MetricCurve>,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub error_bars: bool,
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 460.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 220.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Renders curves as a standalone SVG with the y axis fixed to [0, 1].
/// Each run of defined points is its own polyline, so undefined points
/// leave gaps. Returns the number of bytes written.
pub fn emit_curve_svg<W: Write>(spec: &CurvePlotSpec, mut out: W) -> Result<usize, ReportError> {
    let axis = shared_axis(&spec.curves)?;
    let (x_min, x_max) = match axis {
        Some(a) if a.grid.len() > 1 => (a.grid[0], a.grid[a.grid.len() - 1]),
        Some(a) => (a.grid[0] - 1.0, a.grid[0] + 1.0),
        None => (0.0, 1.0),
    };
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| TOP + (1.0 - y.clamp(0.0, 1.0)) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text class="title" x="{:.2}" y="25" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(&spec.title)
    );

    // Axes, grid lines and ticks.
    let _ = writeln!(svg, r#"<g class="axes" stroke="black" stroke-width="1">"#);
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}"/>"#,
        TOP + plot_h
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>"#,
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h
    );
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(svg, r#"<g class="y-ticks">"#);
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let y = sy(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.1}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(svg, r#"<g class="x-ticks">"#);
    let ticks: Vec<f64> = match axis {
        Some(a) => {
            let step = a.grid.len().div_ceil(12).max(1);
            a.grid.iter().copied().step_by(step).collect()
        }
        None => vec![0.0, 1.0],
    };
    for t in ticks {
        let x = sx(t);
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 18.0,
            t
        );
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(
        svg,
        r#"<text class="x-label" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0,
        escape(&spec.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text class="y-label" x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(&spec.y_label)
    );

    for (ci, curve) in spec.curves.iter().enumerate() {
        let color = PALETTE[ci % PALETTE.len()];
        let _ = writeln!(
            svg,
            r#"<g class="curve" data-model="{}" data-metric="{}" stroke="{color}" fill="{color}">"#,
            escape(&curve.model_id),
            escape(&curve.kind.label())
        );
        for segment in curve.points.split(|p| p.estimate.is_none()) {
            if segment.is_empty() {
                continue;
            }
            let coords: Vec<String> = segment
                .iter()
                .map(|p| {
                    format!(
                        "{:.2},{:.2}",
                        sx(p.theta),
                        sy(p.estimate.unwrap_or_default())
                    )
                })
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline class="segment" fill="none" stroke-width="2" points="{}"/>"#,
                coords.join(" ")
            );
        }
        for p in &curve.points {
            let Some(est) = p.estimate else { continue };
            let (x, y) = (sx(p.theta), sy(est));
            let _ = writeln!(
                svg,
                r#"<circle class="marker" cx="{x:.2}" cy="{y:.2}" r="2.5"/>"#
            );
            if let (true, Some(std)) = (spec.error_bars, p.std) {
                let (y_hi, y_lo) = (sy(est + std), sy(est - std));
                let _ = writeln!(
                    svg,
                    r#"<path class="error-bar" fill="none" d="M{x:.2} {y_hi:.2} V{y_lo:.2} M{:.2} {y_hi:.2} H{:.2} M{:.2} {y_lo:.2} H{:.2}"/>"#,
                    x - 3.0,
                    x + 3.0,
                    x - 3.0,
                    x + 3.0
                );
            }
        }
        let _ = writeln!(svg, "</g>");
    }

    let _ = writeln!(svg, r#"<g class="legend">"#);
    for (ci, curve) in spec.curves.iter().enumerate() {
        let color = PALETTE[ci % PALETTE.len()];
        let x = LEFT + plot_w + 15.0;
        let y = TOP + 10.0 + ci as f64 * 18.0;
        let _ = writeln!(
            svg,
            r#"<g class="legend-entry"><line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text></g>"#,
            x + 20.0,
            x + 26.0,
            y + 4.0,
            escape(&curve.model_id)
        );
    }
    let _ = writeln!(svg, "</g>");
    svg.push_str("</svg>\n");

    out.write_all(svg.as_bytes())?;
    Ok(svg.len())
}

/// Pass-through model metadata for comparison tables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub model_id: String,
    #[serde(default)]
    pub params: Option<String>,
    #[serde(default)]
    pub flops: Option<String>,
    #[serde(default)]
    pub train_data: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelRegistry {
    pub models: Vec<ModelInfo>,
}

impl ModelRegistry {
    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        let models: Vec<ModelInfo> =
            serde_json::from_str(text).map_err(|e| ReportError::Registry(e.to_string()))?;
        Ok(ModelRegistry { models })
    }

    pub fn get(&self, model_id: &str) -> Option<&ModelInfo> {
        self.models.iter().find(|m| m.model_id == model_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Margins {
    pub mean: Option<f64>,
    pub integral: Option<f64>,
    pub min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub model_id: String,
    pub params: Option<String>,
    pub flops: Option<String>,
    pub train_data: Option<String>,
    /// Mean over the defined points.
    pub mean: Option<f64>,
    pub integral: Option<f64>,
    /// (minimum estimate, θ where it first occurs)
    pub min: Option<(f64, f64)>,
    /// Twin model and this row minus the twin, when this model leads a pair.
    pub twin: Option<String>,
    pub margins: Option<Margins>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonTable {
    pub metric: String,
    pub interval: Option<(f64, f64)>,
    pub rows: Vec<ComparisonRow>,
}

fn diff(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? - b?)
}

/// Summarizes one curve per model. With `pairing`, the row of each pair's
/// first model gains margins against the second.
pub fn compare_models(
    curves: &[MetricCurve],
    interval: Option<(f64, f64)>,
    pairing: &[(String, String)],
    registry: Option<&ModelRegistry>,
) -> Result<ComparisonTable, ReportError> {
    shared_axis(curves)?;
    let kind = curves.first().map(|c| c.kind);
    if curves.iter().any(|c| Some(c.kind) != kind) {
        return Err(ReportError::MixedKinds);
    }
    let mut seen = HashSet::new();
    for c in curves {
        if !seen.insert(c.model_id.as_str()) {
            return Err(ReportError::DuplicateModel(c.model_id.clone()));
        }
    }

    let mut rows = curves
        .iter()
        .map(|c| {
            let defined: Vec<&CurvePoint> =
                c.points.iter().filter(|p| p.estimate.is_some()).collect();
            let mean = (!defined.is_empty()).then(|| {
                defined.iter().filter_map(|p| p.estimate).sum::<f64>() / defined.len() as f64
            });
            let min = defined.iter().fold(None, |best: Option<(f64, f64)>, p| {
                let e = p.estimate.expect("defined");
                match best {
                    Some((b, _)) if b <= e => best,
                    _ => Some((e, p.theta)),
                }
            });
            let integral = interval
                .map(|(lo, hi)| interval_integral(c, lo, hi))
                .transpose()?;
            let info = registry.and_then(|r| r.get(&c.model_id));
            Ok(ComparisonRow {
                model_id: c.model_id.clone(),
                params: info.and_then(|i| i.params.clone()),
                flops: info.and_then(|i| i.flops.clone()),
                train_data: info.and_then(|i| i.train_data.clone()),
                mean,
                integral,
                min,
                twin: None,
                margins: None,
            })
        })
        .collect::<Result<Vec<_>, ReportError>>()?;

    let position = |id: &str| {
        rows.iter()
            .position(|r| r.model_id == id)
            .ok_or_else(|| ReportError::UnknownPairModel(id.to_string()))
    };
    let mut margins = Vec::new();
    for (first, second) in pairing {
        let (a, b) = (position(first)?, position(second)?);
        let (ra, rb) = (&rows[a], &rows[b]);
        margins.push((
            a,
            second.clone(),
            Margins {
                mean: diff(ra.mean, rb.mean),
                integral: diff(ra.integral, rb.integral),
                min: diff(ra.min.map(|m| m.0), rb.min.map(|m| m.0)),
            },
        ));
    }
    for (a, twin, m) in margins {
        if rows[a].twin.is_some() {
            return Err(ReportError::DuplicatePair(rows[a].model_id.clone()));
        }
        rows[a].twin = Some(twin);
        rows[a].margins = Some(m);
    }

    Ok(ComparisonTable {
        metric: kind.map(|k| k.label()).unwrap_or_default(),
        interval,
        rows,
    })
}

pub const TABLE_HEADER: [&str; 13] = [
    "model_id",
    "params",
    "flops",
    "train_data",
    "metric",
    "mean",
    "integral",
    "min",
    "argmin_theta",
    "twin",
    "margin_mean",
    "margin_integral",
    "margin_min",
];

pub fn emit_table_csv<W: Write>(table: &ComparisonTable, out: W) -> Result<usize, ReportError> {
    let mut counter = CountingWriter {
        inner: out,
        count: 0,
    };
    {
        let mut w = csv::Writer::from_writer(&mut counter);
        w.write_record(TABLE_HEADER)?;
        for r in &table.rows {
            let m = r.margins;
            w.write_record([
                r.model_id.clone(),
                r.params.clone().unwrap_or_default(),
                r.flops.clone().unwrap_or_default(),
                r.train_data.clone().unwrap_or_default(),
                table.metric.clone(),
                opt(r.mean),
                opt(r.integral),
                opt(r.min.map(|m| m.0)),
                opt(r.min.map(|m| m.1)),
                r.twin.clone().unwrap_or_default(),
                opt(m.and_then(|m| m.mean)),
                opt(m.and_then(|m| m.integral)),
                opt(m.and_then(|m| m.min)),
            ])?;
        }
        w.flush()?;
    }
    Ok(counter.count)
}
