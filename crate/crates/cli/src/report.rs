use std::fmt::Write as _;
use std::path::Path;

use h2ncm_core::{Error, Result};
use serde_json::Value;

use crate::Format;

/// One `(model, alpha)` run.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub model: String,
    pub alpha: f64,
    pub folds: usize,
    pub rmse_mean: f64,
    pub rmse_stderr: f64,
    pub ce: Option<[f64; 3]>,
}

const PALETTE: [&str; 8] = ["#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#9c755f"];

fn read_json(path: &Path) -> Result<Value> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&s)?)
}

/// Every `report.json` under `runs` with its sibling `config.json`, sorted
/// by model and alpha.
pub fn collect(runs: &Path) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for entry in walkdir::WalkDir::new(runs).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::Input(format!("{}: {e}", runs.display())))?;
        if entry.file_name() != "report.json" {
            continue;
        }
        let path = entry.path();
        let report = read_json(path)?;
        let config = read_json(&path.with_file_name("config.json"))?;
        let bad = |what: &str| Error::Schema(format!("{}: missing {what}", path.display()));
        let model = config["model"].as_str().ok_or_else(|| bad("model"))?.to_string();
        let alpha = config["alpha"].as_f64().ok_or_else(|| bad("alpha"))?;
        let ag = &report["aggregates"];
        let f = |k: &str| ag[k].as_f64();
        let ce = match (f("class_error_p10"), f("class_error_p50"), f("class_error_p90")) {
            (Some(a), Some(b), Some(c)) => Some([a, b, c]),
            _ => None,
        };
        rows.push(Row {
            model,
            alpha,
            folds: report["folds"].as_array().map_or(0, Vec::len),
            rmse_mean: f("rmse_mean").ok_or_else(|| bad("rmse_mean"))?,
            rmse_stderr: f("rmse_stderr").ok_or_else(|| bad("rmse_stderr"))?,
            ce,
        });
    }
    rows.sort_by(|a, b| a.model.cmp(&b.model).then(a.alpha.total_cmp(&b.alpha)));
    Ok(rows)
}

pub fn to_csv(rows: &[Row]) -> String {
    let mut s =
        String::from("model,alpha,folds,rmse_mean,rmse_stderr,class_error_p10,class_error_p50,class_error_p90\n");
    for r in rows {
        let ce = r.ce.map_or(",,".to_string(), |c| format!("{},{},{}", c[0], c[1], c[2]));
        let _ = writeln!(s, "{},{},{},{},{},{ce}", r.model, r.alpha, r.folds, r.rmse_mean, r.rmse_stderr);
    }
    s
}

/// A bar with a whisker from `lo` to `hi`.
struct Bar {
    group: usize,
    series: usize,
    value: f64,
    lo: f64,
    hi: f64,
}

fn chart(
    title: &str,
    y_label: &str,
    groups: &[String],
    series: &[String],
    bars: &[Bar],
    reference: Option<f64>,
) -> String {
    let (w_bar, gap, left, top, h) = (18.0, 24.0, 70.0, 40.0, 260.0);
    let per_group = series.len().max(1) as f64 * w_bar + gap;
    let width = left + groups.len() as f64 * per_group + 20.0 + 120.0;
    let height = top + h + 60.0;
    let y_max = bars.iter().map(|b| b.hi.max(b.value)).chain(reference).fold(0.0f64, f64::max).max(1e-12) * 1.1;
    let y = |v: f64| top + h - v / y_max * h;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<text x="{left}" y="20" font-size="14">{title}</text>"#);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#, top + h);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#, top + h, width - 130.0);
    for k in 0..=4 {
        let v = y_max / 1.1 * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.3}</text>"#, left - 4.0, y(v) + 4.0);
    }
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" transform="rotate(-90 14 {:.1})" text-anchor="middle">{y_label}</text>"#,
        top + h / 2.0,
        top + h / 2.0
    );
    for (g, name) in groups.iter().enumerate() {
        let x = left + gap / 2.0 + g as f64 * per_group + (per_group - gap) / 2.0;
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{name}</text>"#, top + h + 16.0);
    }
    for b in bars {
        let x = left + gap / 2.0 + b.group as f64 * per_group + b.series as f64 * w_bar;
        let color = PALETTE[b.series % PALETTE.len()];
        let _ = writeln!(
            s,
            r#"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{color}"/>"#,
            y(b.value),
            w_bar - 2.0,
            (top + h - y(b.value)).max(0.0)
        );
        let cx = x + (w_bar - 2.0) / 2.0;
        let _ =
            writeln!(s, r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#, y(b.lo), y(b.hi));
    }
    if let Some(r) = reference {
        let _ = writeln!(
            s,
            r#"<line class="reference" x1="{left}" y1="{0:.1}" x2="{1:.1}" y2="{0:.1}" stroke="gray" stroke-dasharray="5,4"/>"#,
            y(r),
            width - 130.0
        );
        let _ =
            writeln!(s, r#"<text x="{:.1}" y="{:.1}" fill="gray">random guessing</text>"#, width - 126.0, y(r) + 4.0);
    }
    for (i, name) in series.iter().enumerate() {
        let ly = top + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{:.1}" y="{ly:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{:.1}">{name}</text>"#,
            width - 126.0,
            PALETTE[i % PALETTE.len()],
            width - 112.0,
            ly + 9.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// RMSE and classification-error charts, models as groups and alphas as
/// series.
pub fn to_svgs(rows: &[Row]) -> (String, String) {
    let mut groups: Vec<String> = rows.iter().map(|r| r.model.clone()).collect();
    groups.dedup();
    let mut alphas: Vec<f64> = rows.iter().map(|r| r.alpha).collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    let series: Vec<String> = alphas.iter().map(|a| format!("alpha = {a}")).collect();
    let pos = |r: &Row| {
        (
            groups.iter().position(|g| *g == r.model).expect("listed"),
            alphas.iter().position(|a| *a == r.alpha).expect("listed"),
        )
    };
    let rmse: Vec<Bar> = rows
        .iter()
        .map(|r| {
            let (group, series) = pos(r);
            Bar { group, series, value: r.rmse_mean, lo: r.rmse_mean - r.rmse_stderr, hi: r.rmse_mean + r.rmse_stderr }
        })
        .collect();
    let ce: Vec<Bar> = rows
        .iter()
        .filter_map(|r| {
            let (group, series) = pos(r);
            r.ce.map(|c| Bar { group, series, value: c[1], lo: c[0], hi: c[2] })
        })
        .collect();
    (
        chart("Prediction RMSE (mean and standard error)", "RMSE", &groups, &series, &rmse, None),
        chart(
            "Causal classification error (median, 10th to 90th percentile)",
            "classification error",
            &groups,
            &series,
            &ce,
            Some(2.0 / 3.0),
        ),
    )
}

pub fn write_report(runs: &Path, format: Format, out: Option<&Path>) -> Result<()> {
    let rows = collect(runs)?;
    if rows.is_empty() {
        return Err(Error::Input(format!("no report.json under {}", runs.display())));
    }
    let out = out.unwrap_or(runs);
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let write = |name: &str, s: &str| {
        let p = out.join(name);
        std::fs::write(&p, s).map_err(|e| Error::io(&p, e))
    };
    write("summary.csv", &to_csv(&rows))?;
    if format == Format::Svg {
        let (rmse, ce) = to_svgs(&rows);
        write("rmse.svg", &rmse)?;
        write("class_error.svg", &ce)?;
    }
    println!("{} runs summarized in {}", rows.len(), out.display());
    Ok(())
}
