//! Output rendering: per-site comparison tables, pie charts of fleet
//! distributions, and value histograms with a zoomed variant.
//!
//! Every renderer is a pure function of its inputs: no timestamps, no
//! randomness, deterministic ordering throughout, so artifacts are stable
//! under golden-file comparison.

use std::collections::BTreeSet;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::aggregate::{direction_for, Direction, FleetDistribution, MetricKey, SiteStats};
use crate::results::format_value;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("distribution has no categories")]
    EmptyDistribution,
    #[error("no values to bin")]
    NoValues,
    #[error("bin count must be >= 1")]
    BadBins,
    #[error("zoom percentile must be in (0, 100], got {0}")]
    BadPercentile(f64),
    #[error("table needs at least one site")]
    NoSites,
}

/// Marker appended to a site's best cell in a metric column.
pub const BEST_MARKER: &str = " *";

/// A rendered table: caption, headers and text cells; every row has the
/// header's arity.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub caption: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    /// Plain-text form with aligned columns.
    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.headers.iter().map(String::len).collect();
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                widths[i] = widths[i].max(cell.chars().count());
            }
        }
        let mut out = String::new();
        out.push_str(&self.caption);
        out.push('\n');
        let fmt_row = |cells: &[String]| -> String {
            cells
                .iter()
                .enumerate()
                .map(|(i, c)| format!("{:width$}", c, width = widths[i]))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        out.push_str(&fmt_row(&self.headers));
        out.push('\n');
        out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&fmt_row(row));
            out.push('\n');
        }
        out
    }

    /// CSV form under the toolkit's codec conventions.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        w.write_record(&self.headers).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

/// One row per site, one column per metric key with `mean ± stddev (count)`
/// cells. The best cell per column (min for latencies, max for bandwidths)
/// carries [`BEST_MARKER`]; missing cells render as an em dash.
pub fn render_table(stats: &[SiteStats], keys: &[MetricKey]) -> Result<Table, ReportError> {
    let sites: BTreeSet<&str> = stats.iter().map(|s| s.site.as_str()).collect();
    if sites.is_empty() {
        return Err(ReportError::NoSites);
    }
    let mut headers = vec!["site".to_string()];
    headers.extend(keys.iter().map(MetricKey::label));

    let cell_for = |site: &str, key: &MetricKey| -> Option<&SiteStats> {
        stats.iter().find(|s| s.site == site && &s.key == key)
    };
    let best_site = |key: &MetricKey| -> Option<String> {
        let candidates: Vec<&SiteStats> = stats.iter().filter(|s| &s.key == key).collect();
        let best = match direction_for(key) {
            Direction::Ascending => candidates
                .iter()
                .min_by(|a, b| a.mean.partial_cmp(&b.mean).unwrap().then(a.site.cmp(&b.site))),
            Direction::Descending => candidates
                .iter()
                .max_by(|a, b| a.mean.partial_cmp(&b.mean).unwrap().then(b.site.cmp(&a.site))),
        };
        best.map(|s| s.site.clone())
    };
    let bests: Vec<Option<String>> = keys.iter().map(best_site).collect();

    let mut rows = Vec::new();
    for site in &sites {
        let mut row = vec![site.to_string()];
        for (key, best) in keys.iter().zip(&bests) {
            let cell = match cell_for(site, key) {
                Some(s) => {
                    let mut text = format!(
                        "{} ± {} ({})",
                        format_value(s.mean),
                        format_value(s.stddev),
                        s.count
                    );
                    if best.as_deref() == Some(*site) {
                        text.push_str(BEST_MARKER);
                    }
                    text
                }
                None => "—".to_string(),
            };
            row.push(cell);
        }
        rows.push(row);
    }
    Ok(Table {
        caption: "Per-site comparison (mean ± stddev (n); * marks the best column entry)"
            .to_string(),
        headers,
        rows,
    })
}

/// One pie wedge: label, share in [0,1], and the angle it subtends.
#[derive(Debug, Clone, PartialEq)]
pub struct Wedge {
    pub label: String,
    pub share: f64,
    pub angle_degrees: f64,
}

/// Pie geometry: wedges ordered by share descending, then label.
#[derive(Debug, Clone, PartialEq)]
pub struct PieSpec {
    pub title: String,
    pub wedges: Vec<Wedge>,
}

pub fn pie_spec(distribution: &FleetDistribution) -> Result<PieSpec, ReportError> {
    if distribution.shares.is_empty() {
        return Err(ReportError::EmptyDistribution);
    }
    let mut wedges: Vec<Wedge> = distribution
        .shares
        .iter()
        .map(|(label, &share)| Wedge {
            label: label.clone(),
            share,
            angle_degrees: share * 360.0,
        })
        .collect();
    wedges.sort_by(|a, b| {
        b.share.partial_cmp(&a.share).expect("finite shares").then_with(|| a.label.cmp(&b.label))
    });
    Ok(PieSpec {
        title: format!("{} ({})", distribution.attribute, distribution.weighting.as_str()),
        wedges,
    })
}

/// Histogram geometry: uniform bin edges, counts, optional zoom cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramSpec {
    pub title: String,
    /// bins + 1 edges; uniform over [min, max] or [min, zoom cutoff].
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Values above the cutoff land in the overflow annotation, not a bin.
    pub overflow: u64,
    pub zoom_upper: Option<f64>,
}

/// Nearest-rank percentile of a non-empty sorted slice.
fn nearest_rank(sorted: &[f64], percentile: f64) -> f64 {
    let n = sorted.len();
    let rank = ((percentile / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

pub fn histogram_spec(
    title: &str,
    values: &[f64],
    bins: usize,
    zoom_percentile: Option<f64>,
) -> Result<HistogramSpec, ReportError> {
    if values.is_empty() {
        return Err(ReportError::NoValues);
    }
    if bins == 0 {
        return Err(ReportError::BadBins);
    }
    if let Some(p) = zoom_percentile {
        if !(p > 0.0 && p <= 100.0) {
            return Err(ReportError::BadPercentile(p));
        }
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let min = sorted[0];
    let (upper, zoom_upper) = match zoom_percentile {
        Some(p) => {
            let cutoff = nearest_rank(&sorted, p);
            (cutoff, Some(cutoff))
        }
        None => (sorted[sorted.len() - 1], None),
    };

    if upper <= min {
        // Degenerate span: one bin holds everything at or below the cutoff.
        let counts = vec![values.iter().filter(|&&v| v <= upper).count() as u64];
        let overflow = values.len() as u64 - counts[0];
        return Ok(HistogramSpec {
            title: title.to_string(),
            edges: vec![min, upper],
            counts,
            overflow,
            zoom_upper,
        });
    }

    let width = (upper - min) / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|i| if i == bins { upper } else { min + width * i as f64 })
        .collect();
    let mut counts = vec![0u64; bins];
    let mut overflow = 0u64;
    for &v in values {
        if v > upper {
            overflow += 1;
        } else if v == upper {
            counts[bins - 1] += 1;
        } else {
            let idx = (((v - min) / (upper - min)) * bins as f64) as usize;
            counts[idx.min(bins - 1)] += 1;
        }
    }
    Ok(HistogramSpec { title: title.to_string(), edges, counts, overflow, zoom_upper })
}

// ---------------------------------------------------------------------------
// SVG rendering. Deterministic float formatting, escaped text, single root.

const PALETTE: [&str; 12] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7",
    "#9c755f", "#bab0ac", "#86bcb6", "#d37295",
];

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

fn svg_num(v: f64) -> String {
    // Fixed precision keeps coordinates deterministic across platforms.
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// Render a fleet distribution as a pie chart. Wedge paths carry their angle
/// and share as data attributes, labels show the percentage to one decimal.
pub fn render_pie(distribution: &FleetDistribution) -> Result<String, ReportError> {
    let spec = pie_spec(distribution)?;
    let (cx, cy, r) = (200.0, 210.0, 150.0);
    let legend_x = 380.0;
    let width = 720.0;
    let height = (440.0f64).max(60.0 + spec.wedges.len() as f64 * 22.0);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
        svg_num(width),
        svg_num(height),
        svg_num(width),
        svg_num(height)
    ));
    svg.push_str(&format!(
        "  <title>{}</title>\n  <text x=\"16\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" font-weight=\"bold\">{}</text>\n",
        xml_escape(&spec.title),
        xml_escape(&spec.title)
    ));

    let mut start_angle = -90.0f64; // 12 o'clock, clockwise
    for (i, wedge) in spec.wedges.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pct = format!("{:.1}%", wedge.share * 100.0);
        if wedge.angle_degrees >= 360.0 - 1e-9 {
            svg.push_str(&format!(
                "  <circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{}\" stroke=\"white\" data-label=\"{}\" data-share=\"{}\" data-angle=\"{}\"/>\n",
                svg_num(cx),
                svg_num(cy),
                svg_num(r),
                color,
                xml_escape(&wedge.label),
                format_value(wedge.share),
                format_value(wedge.angle_degrees)
            ));
        } else {
            let end_angle = start_angle + wedge.angle_degrees;
            let (x0, y0) = polar(cx, cy, r, start_angle);
            let (x1, y1) = polar(cx, cy, r, end_angle);
            let large_arc = if wedge.angle_degrees > 180.0 { 1 } else { 0 };
            svg.push_str(&format!(
                "  <path d=\"M {} {} L {} {} A {} {} 0 {} 1 {} {} Z\" fill=\"{}\" stroke=\"white\" data-label=\"{}\" data-share=\"{}\" data-angle=\"{}\"/>\n",
                svg_num(cx),
                svg_num(cy),
                svg_num(x0),
                svg_num(y0),
                svg_num(r),
                svg_num(r),
                large_arc,
                svg_num(x1),
                svg_num(y1),
                color,
                xml_escape(&wedge.label),
                format_value(wedge.share),
                format_value(wedge.angle_degrees)
            ));
            start_angle = end_angle;
        }
        let ly = 60.0 + i as f64 * 22.0;
        svg.push_str(&format!(
            "  <rect x=\"{}\" y=\"{}\" width=\"14\" height=\"14\" fill=\"{}\"/>\n",
            svg_num(legend_x),
            svg_num(ly - 11.0),
            color
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\">{} ({})</text>\n",
            svg_num(legend_x + 20.0),
            svg_num(ly),
            xml_escape(&wedge.label),
            pct
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn polar(cx: f64, cy: f64, r: f64, angle_degrees: f64) -> (f64, f64) {
    let rad = angle_degrees.to_radians();
    (cx + r * rad.cos(), cy + r * rad.sin())
}

/// Render a histogram as vertical bars with an overflow annotation when a
/// zoom cutoff excluded values.
pub fn render_histogram(
    title: &str,
    values: &[f64],
    bins: usize,
    zoom_percentile: Option<f64>,
) -> Result<String, ReportError> {
    let spec = histogram_spec(title, values, bins, zoom_percentile)?;
    let (width, height) = (720.0, 420.0);
    let (left, right, top, bottom) = (60.0, 20.0, 50.0, 50.0);
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;
    let max_count = spec.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let nbins = spec.counts.len() as f64;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
        svg_num(width),
        svg_num(height),
        svg_num(width),
        svg_num(height)
    ));
    svg.push_str(&format!(
        "  <title>{}</title>\n  <text x=\"16\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" font-weight=\"bold\">{}</text>\n",
        xml_escape(&spec.title),
        xml_escape(&spec.title)
    ));
    svg.push_str(&format!(
        "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        svg_num(left),
        svg_num(top + plot_h),
        svg_num(left + plot_w),
        svg_num(top + plot_h)
    ));
    for (i, &count) in spec.counts.iter().enumerate() {
        let bar_w = plot_w / nbins;
        let x = left + bar_w * i as f64;
        let h = plot_h * count as f64 / max_count;
        svg.push_str(&format!(
            "  <rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\" stroke=\"white\" data-count=\"{count}\"/>\n",
            svg_num(x),
            svg_num(top + plot_h - h),
            svg_num(bar_w),
            svg_num(h),
            PALETTE[0]
        ));
    }
    // Edge labels under first, middle and last edge.
    let label_edges =
        [0usize, spec.edges.len() / 2, spec.edges.len() - 1];
    for &i in &label_edges {
        let x = left + plot_w * i as f64 / (spec.edges.len() - 1) as f64;
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            svg_num(x),
            svg_num(top + plot_h + 16.0),
            xml_escape(&format_value(spec.edges[i]))
        ));
    }
    if let Some(cutoff) = spec.zoom_upper {
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" data-overflow=\"{}\">overflow: {} value(s) &gt; {}</text>\n",
            svg_num(left),
            svg_num(height - 12.0),
            spec.overflow,
            spec.overflow,
            xml_escape(&format_value(cutoff))
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Write report artifacts plus `manifest.txt` listing them (sorted, one per
/// line).
pub fn write_artifacts(dir: &Path, artifacts: &[(String, String)]) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut names: Vec<&str> = Vec::new();
    for (name, content) in artifacts {
        std::fs::write(dir.join(name), content)?;
        names.push(name);
    }
    names.sort();
    let mut manifest = names.join("\n");
    manifest.push('\n');
    std::fs::write(dir.join("manifest.txt"), manifest)
}
