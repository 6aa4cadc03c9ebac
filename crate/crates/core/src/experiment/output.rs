use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::analysis::slope_estimate;
use super::config::{DemandSpec, ExperimentSpec};
use crate::error::Result;
use crate::sim::Aggregate;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyResult {
    pub policy: String,
    pub aggregate: Aggregate,
}

pub const SUMMARY_HEADER: [&str; 6] = ["policy", "t", "mean_cum_regret", "std_cum_regret", "mean_variation", "epochs"];
pub const DETAIL_HEADER: [&str; 9] = ["t", "w", "q", "xi", "profit", "benchmark", "regret_cum", "epoch", "phase"];

const PALETTE: [&str; 7] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"];

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

/// `sha256("blob <len>\0" ‖ bytes)`, hex encoded.
pub fn git_blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.partial"));
    let res = fs::write(&tmp, bytes).and_then(|_| fs::rename(&tmp, path));
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    res.map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| std::io::Error::other(e.to_string()).into())
}

pub fn summary_csv(results: &[PolicyResult]) -> Result<Vec<u8>> {
    let mut w = csv_writer();
    w.write_record(SUMMARY_HEADER)?;
    for r in results {
        let a = &r.aggregate;
        for i in 0..a.mean_cum_regret.len() {
            w.write_record([
                r.policy.clone(),
                (i + 1).to_string(),
                float(a.mean_cum_regret[i]),
                float(a.std_cum_regret[i]),
                float(a.mean_variation[i]),
                float(a.mean_epochs[i]),
            ])?;
        }
    }
    finish(w)
}

pub fn detail_csv(result: &PolicyResult) -> Result<Option<Vec<u8>>> {
    let Some(records) = result.aggregate.runs.first().and_then(|r| r.records.as_ref()) else {
        return Ok(None);
    };
    let mut w = csv_writer();
    w.write_record(DETAIL_HEADER)?;
    for r in records {
        w.write_record([
            r.t.to_string(),
            float(r.w),
            float(r.q),
            float(r.xi),
            float(r.profit),
            float(r.benchmark),
            float(r.regret_cum),
            r.epoch.to_string(),
            r.phase.to_string(),
        ])?;
    }
    finish(w).map(Some)
}

/// Standalone log-log plot of mean cumulative regret, one polyline per policy.
pub fn svg_plot(results: &[PolicyResult], title: &str) -> String {
    let (width, height, margin) = (800.0, 500.0, 70.0);
    let curves: Vec<Vec<(f64, f64)>> = results
        .iter()
        .map(|r| {
            let y = &r.aggregate.mean_cum_regret;
            let n = y.len();
            // about 400 log-spaced samples per curve
            let mut idx: Vec<usize> = (0..=400)
                .map(|k| ((n as f64).powf(k as f64 / 400.0).round() as usize).clamp(1, n.max(1)))
                .collect();
            idx.dedup();
            idx.into_iter()
                .filter(|&t| t <= n && y[t - 1] > 0.0)
                .map(|t| ((t as f64).log10(), y[t - 1].log10()))
                .collect()
        })
        .collect();
    let all = curves.iter().flatten();
    let x_max = all.clone().map(|p| p.0).fold(1.0_f64, f64::max).ceil();
    let y_min = all.clone().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let y_max = all.map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let (y_min, y_max) = if y_min.is_finite() { (y_min.floor(), y_max.ceil().max(y_min.floor() + 1.0)) } else { (0.0, 1.0) };
    let px = |x: f64| margin + x / x_max * (width - 2.0 * margin);
    let py = |y: f64| height - margin - (y - y_min) / (y_max - y_min) * (height - 2.0 * margin);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="30" text-anchor="middle" font-size="15">{}</text>"#, width / 2.0, escape(title));
    let (x0, y0, x1, y1) = (px(0.0), py(y_min), px(x_max), py(y_max));
    let _ = writeln!(s, r#"<path d="M{x0},{y1} V{y0} H{x1}" stroke="black" fill="none"/>"#);
    for k in 0..=x_max as i64 {
        let x = px(k as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{x}" y1="{y0}" x2="{x}" y2="{y1}" stroke="#ddd"/><text x="{x}" y="{}" text-anchor="middle">1e{k}</text>"##,
            y0 + 18.0
        );
    }
    for k in y_min as i64..=y_max as i64 {
        let y = py(k as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{x0}" y1="{y}" x2="{x1}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">1e{k}</text>"##,
            x0 - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">round t</text>"#, width / 2.0, height - 20.0);
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">mean cumulative regret</text>"#,
        height / 2.0,
        height / 2.0
    );
    for (i, (r, c)) in results.iter().zip(&curves).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = c.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" stroke="{color}" stroke-width="2" fill="none"/>"#, pts.join(" "));
        let ly = margin + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            x0 + 10.0,
            x0 + 35.0,
            x0 + 40.0,
            ly + 4.0,
            escape(&r.policy)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn metadata(results: &[PolicyResult], experiment: &ExperimentSpec, config_text: &str) -> Result<String> {
    let mut m = String::new();
    let _ = writeln!(m, "generator = \"luna {}\"", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(m, "scenario = \"{}\"", experiment.scenario);
    let _ = writeln!(m, "seed = {}", experiment.seed);
    let _ = writeln!(m, "replications = {}", experiment.replications);
    let _ = writeln!(m, "config_sha256 = \"{}\"", git_blob_hash(config_text.as_bytes()));
    if let DemandSpec::Monthly { dataset, .. } = &experiment.demand {
        let _ = writeln!(m, "dataset_sha256 = \"{}\"", git_blob_hash(&fs::read(dataset)?));
    }
    for r in results {
        let a = &r.aggregate;
        let _ = writeln!(m, "\n[policy.\"{}\"]", r.policy);
        let _ = writeln!(m, "final_mean_cum_regret = {}", float(a.mean_cum_regret.last().copied().unwrap_or(0.0)));
        match slope_estimate(&a.mean_cum_regret, experiment.output.window) {
            Ok(slope) => {
                let _ = writeln!(m, "slope = {}", float(slope));
            }
            Err(e) => log::warn!("{}: no slope: {e}", r.policy),
        }
        let seeds: Vec<String> = a.runs.iter().map(|run| run.rep.to_string()).collect();
        let _ = writeln!(m, "replication_indices = [{}]", seeds.join(", "));
    }
    Ok(m)
}

/// Writes `config.toml`, `metadata.toml`, `summary.csv`, `detail_<policy>.csv`
/// and `regret.svg` (as enabled) under `dir`.
pub fn emit_outputs(results: &[PolicyResult], experiment: &ExperimentSpec, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", dir.display())))?;
    let mut written = Vec::new();
    let mut put = |name: &str, bytes: &[u8]| -> Result<()> {
        let path = dir.join(name);
        write_atomic(&path, bytes)?;
        written.push(path);
        Ok(())
    };
    let config_text = experiment.to_config_text();
    put("config.toml", config_text.as_bytes())?;
    put("metadata.toml", metadata(results, experiment, &config_text)?.as_bytes())?;
    if experiment.output.csv {
        put("summary.csv", &summary_csv(results)?)?;
        for r in results {
            if let Some(bytes) = detail_csv(r)? {
                put(&format!("detail_{}.csv", r.policy), &bytes)?;
            }
        }
    }
    if experiment.output.svg {
        put("regret.svg", svg_plot(results, &experiment.scenario).as_bytes())?;
    }
    Ok(written)
}
