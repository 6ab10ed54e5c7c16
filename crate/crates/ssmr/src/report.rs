//! Report emission: per-task tracking plots as dependency-free SVG line
//! charts plus a markdown summary table whose cells read straight from the
//! summary JSON.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::pipeline::ControlSummary;

/// One plotted series.
pub struct Series<'a> {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub color: &'a str,
    pub dashed: bool,
}

/// Minimal SVG line chart with axes and a legend.
pub fn render_line_chart(title: &str, x_label: &str, series: &[Series<'_>]) -> String {
    let width = 860.0;
    let height = 420.0;
    let margin = 60.0;
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(x, y) in &s.points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if !x_min.is_finite() {
        x_min = 0.0;
        x_max = 1.0;
        y_min = 0.0;
        y_max = 1.0;
    }
    if (y_max - y_min).abs() < 1e-12 {
        y_min -= 0.5;
        y_max += 0.5;
    }
    if (x_max - x_min).abs() < 1e-12 {
        x_max = x_min + 1.0;
    }
    let sx = |x: f64| margin + (x - x_min) / (x_max - x_min) * (width - 2.0 * margin);
    let sy = |y: f64| height - margin - (y - y_min) / (y_max - y_min) * (height - 2.0 * margin);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{title}</text>\n",
        width / 2.0
    ));
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = margin,
        b = height - margin,
        r = width - margin,
        t = margin
    ));
    for i in 0..=4 {
        let fx = x_min + (x_max - x_min) * i as f64 / 4.0;
        let fy = y_min + (y_max - y_min) * i as f64 / 4.0;
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{fx:.3}</text>\n",
            sx(fx),
            height - margin + 18.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{fy:.3}</text>\n",
            margin - 6.0,
            sy(fy) + 4.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{x_label}</text>\n",
        width / 2.0,
        height - 16.0
    ));
    for (idx, s) in series.iter().enumerate() {
        let mut path = String::new();
        for (i, &(x, y)) in s.points.iter().enumerate() {
            path.push_str(if i == 0 { "M" } else { "L" });
            path.push_str(&format!("{:.2},{:.2} ", sx(x), sy(y)));
        }
        let dash = if s.dashed {
            " stroke-dasharray=\"6,4\""
        } else {
            ""
        };
        svg.push_str(&format!(
            "<path d=\"{path}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"{dash}/>\n",
            s.color
        ));
        let ly = margin + 16.0 * idx as f64;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{}\" stroke-width=\"2\"{dash}/>\n",
            width - margin - 130.0,
            width - margin - 104.0,
            s.color
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            width - margin - 98.0,
            ly + 4.0,
            s.name
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Six significant digits, shared by the summary table and its tests.
pub fn format_metric(v: f64) -> String {
    format!("{v:.6e}")
}

const SERIES_COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn parse_log_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::MalformedFile {
            path: path.display().to_string(),
            reason: "empty log".into(),
        })?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>().unwrap_or(f64::NAN))
            .collect();
        rows.push(row);
    }
    Ok((header, rows))
}

/// Renders `report.md` plus one SVG per task log found next to
/// `summary.json`. With no summary, an explicit "no runs" report is written.
pub fn render_report(out_dir: &Path) -> Result<()> {
    let summary_path = out_dir.join("summary.json");
    let mut md = String::from("# Closed-loop tracking report\n\n");
    if !summary_path.exists() {
        md.push_str("No control runs found: summary.json is missing.\n");
        fs::write(out_dir.join("report.md"), md)?;
        return Ok(());
    }
    let summary: ControlSummary = serde_json::from_str(&fs::read_to_string(&summary_path)?)?;
    if summary.tasks.is_empty() {
        md.push_str("No control runs recorded (empty task list).\n");
        fs::write(out_dir.join("report.md"), md)?;
        return Ok(());
    }

    md.push_str("| Task | MSE total | QP ms (mean) | QP ms (p95) | SCP iters (mean) | Max slack | Faults |\n");
    md.push_str("|---|---|---|---|---|---|---|\n");
    for task in &summary.tasks {
        md.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} |\n",
            task.task,
            format_metric(task.mse_total),
            format_metric(task.qp_ms_mean),
            format_metric(task.qp_ms_p95),
            format_metric(task.scp_iters_mean),
            format_metric(task.slack_max),
            task.faults,
        ));
    }
    md.push('\n');

    for task in &summary.tasks {
        let log_path = out_dir.join(format!("log_{}.csv", task.task));
        if !log_path.exists() {
            continue;
        }
        let (header, rows) = parse_log_csv(&log_path)?;
        let o = header.iter().filter(|h| h.starts_with("z_")).count();
        let mut series = Vec::new();
        for axis in 0..o {
            let z_col = 1 + axis;
            let zbar_col = 1 + o + axis;
            series.push(Series {
                name: format!("z_{}", axis + 1),
                points: rows.iter().map(|r| (r[0], r[z_col])).collect(),
                color: SERIES_COLORS[axis % SERIES_COLORS.len()],
                dashed: false,
            });
            series.push(Series {
                name: format!("ref_{}", axis + 1),
                points: rows.iter().map(|r| (r[0], r[zbar_col])).collect(),
                color: "#444444",
                dashed: true,
            });
        }
        let svg = render_line_chart(
            &format!("{} tracking", task.task),
            "time (s)",
            &series,
        );
        let svg_name = format!("plot_{}.svg", task.task);
        fs::write(out_dir.join(&svg_name), svg)?;
        md.push_str(&format!("![{}]({})\n\n", task.task, svg_name));
    }
    fs::write(out_dir.join("report.md"), md)?;
    Ok(())
}
