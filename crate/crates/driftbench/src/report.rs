//! Report and plot emission: run manifests, delimited tables, and static SVG
//! figures. The reporter only formats numbers computed by the metrics
//! module; it never re-derives a metric.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::StoreError;
use crate::metrics::{geometry_curves, AggregateReport, Rho, TradeoffPoint};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Provenance record written into every output directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 hex digest of the effective configuration.
    pub config_digest: String,
    pub seed: u64,
    pub mode: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub tool_version: String,
    pub wall_clock_ms: u128,
    /// Unix seconds at write time; informational only, excluded from
    /// determinism comparisons.
    pub written_at: u64,
}

impl RunManifest {
    pub fn new(command: &str, config_digest: String, seed: u64, mode: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            config_digest,
            seed,
            mode: mode.to_string(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_ms: 0,
            written_at: 0,
        }
    }
}

/// SHA-256 hex digest of any serialized configuration.
pub fn config_digest(serialized: &str) -> String {
    let mut h = Sha256::new();
    h.update(serialized.as_bytes());
    format!("{:x}", h.finalize())
}

/// Write the manifest into `dir`, creating the directory if needed. Each
/// output directory holds exactly one manifest; rewriting replaces it.
pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<PathBuf, StoreError> {
    fs::create_dir_all(dir)?;
    let mut manifest = manifest.clone();
    manifest.written_at =
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let path = dir.join(MANIFEST_FILE);
    let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
    fs::write(&tmp, serde_json::to_string_pretty(&manifest).map_err(|e| StoreError::Io(e.into()))?)?;
    fs::rename(&tmp, &path)?;
    Ok(path)
}

/// One labelled column of a report: usually one platform, or one agent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedReport {
    pub name: String,
    pub report: AggregateReport,
}

fn pct(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{:.2}", v * 100.0),
        None => "-".to_string(),
    }
}

fn mean(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().filter_map(|v| *v).collect();
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

fn harmonic(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(a), Some(b)) => {
            if a == 0.0 && b == 0.0 {
                Some(0.0)
            } else {
                Some(2.0 * a * b / (a + b))
            }
        }
        _ => None,
    }
}

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join("\t");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
    out
}

/// Write the delimited tables plus a full-precision JSON file.
///
/// The tables mirror the shapes of the headline summaries: overall recall
/// and balance per column with an Avg column (arithmetic mean), the
/// stability/novelty decomposition, and the four error rates. The overall
/// balance score is the harmonic mean of the averaged recalls, not the mean
/// of the per-column balance scores.
pub fn emit_report(dir: &Path, columns: &[NamedReport]) -> Result<Vec<PathBuf>, StoreError> {
    fs::create_dir_all(dir)?;
    let names: Vec<&str> = columns.iter().map(|c| c.name.as_str()).collect();
    let mut header: Vec<&str> = vec!["metric"];
    header.extend(names.iter());
    header.push("Avg.");

    let avg_stab = mean(&columns.iter().map(|c| c.report.r_stab).collect::<Vec<_>>());
    let avg_nov = mean(&columns.iter().map(|c| c.report.r_nov).collect::<Vec<_>>());
    let row = |label: &str, get: &dyn Fn(&AggregateReport) -> Option<f64>, avg: Option<f64>| {
        let mut cells = vec![label.to_string()];
        cells.extend(columns.iter().map(|c| pct(get(&c.report))));
        cells.push(pct(avg));
        cells
    };
    let avg_of = |get: &dyn Fn(&AggregateReport) -> Option<f64>| {
        mean(&columns.iter().map(|c| get(&c.report)).collect::<Vec<_>>())
    };

    let recall_rows = vec![
        row("overall_recall", &|r| r.r, avg_of(&|r| r.r)),
        row("balance_f1", &|r| r.f1_ns, harmonic(avg_stab, avg_nov)),
    ];
    let decomp_rows = vec![
        row("stability_recall", &|r| r.r_stab, avg_stab),
        row("novelty_recall", &|r| r.r_nov, avg_nov),
    ];
    let error_rows = vec![
        row("decay_error", &|r| r.e_decay, avg_of(&|r| r.e_decay)),
        row("peer_error", &|r| r.e_peer, avg_of(&|r| r.e_peer)),
        row("viral_error", &|r| r.e_viral, avg_of(&|r| r.e_viral)),
        row("random_error", &|r| r.e_random, avg_of(&|r| r.e_random)),
    ];

    let mut written = Vec::new();
    for (file, rows) in [
        ("recall.tsv", recall_rows),
        ("decomposition.tsv", decomp_rows),
        ("errors.tsv", error_rows),
    ] {
        let path = dir.join(file);
        fs::write(&path, table(&header, &rows))?;
        written.push(path);
    }
    let json_path = dir.join("report.json");
    fs::write(
        &json_path,
        serde_json::to_string_pretty(columns).map_err(|e| StoreError::Io(e.into()))?,
    )?;
    written.push(json_path);
    Ok(written)
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 480.0;
const MARGIN: f64 = 60.0;

fn svg_x(x: f64) -> f64 {
    MARGIN + x.clamp(0.0, 1.0) * (SVG_W - 2.0 * MARGIN)
}

fn svg_y(y: f64) -> f64 {
    SVG_H - MARGIN - y.clamp(0.0, 1.0) * (SVG_H - 2.0 * MARGIN)
}

fn svg_frame(title: &str, x_label: &str, y_label: &str, body: &str) -> String {
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<rect x=\"{m}\" y=\"{m}\" width=\"{iw}\" height=\"{ih}\" fill=\"none\" ",
            "stroke=\"black\"/>\n",
            "<text x=\"{cx}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{title}</text>\n",
            "<text x=\"{cx}\" y=\"{h2}\" text-anchor=\"middle\" font-size=\"12\">{xl}</text>\n",
            "<text x=\"16\" y=\"{cy}\" text-anchor=\"middle\" font-size=\"12\" ",
            "transform=\"rotate(-90 16 {cy})\">{yl}</text>\n",
            "{body}</svg>\n"
        ),
        w = SVG_W,
        h = SVG_H,
        m = MARGIN,
        iw = SVG_W - 2.0 * MARGIN,
        ih = SVG_H - 2.0 * MARGIN,
        cx = SVG_W / 2.0,
        cy = SVG_H / 2.0,
        h2 = SVG_H - 20.0,
        title = title,
        xl = x_label,
        yl = y_label,
        body = body,
    )
}

fn ratio_f64(r: &num_rational::Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Scatter of (B, ρ) per named agent. ρ is plotted on a 0..=4 band; points
/// with ρ = +infinity sit on the top axis boundary with a triangle marker.
pub fn emit_tradeoff_plot(
    dir: &Path,
    points: &[(String, TradeoffPoint)],
) -> Result<PathBuf, StoreError> {
    fs::create_dir_all(dir)?;
    const RHO_MAX: f64 = 4.0;
    let mut body = String::new();
    for (name, point) in points {
        let x = svg_x(ratio_f64(&point.b));
        match &point.rho {
            Some(Rho::Finite(r)) => {
                let y = svg_y((ratio_f64(r) / RHO_MAX).min(1.0));
                body.push_str(&format!(
                    "<circle cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"4\" fill=\"steelblue\"/>\n\
                     <text x=\"{tx:.1}\" y=\"{ty:.1}\" font-size=\"10\">{name}</text>\n",
                    tx = x + 6.0,
                    ty = y - 6.0,
                ));
            }
            Some(Rho::Infinite) => {
                let y = svg_y(1.0);
                body.push_str(&format!(
                    "<path d=\"M {x0:.1} {y0:.1} L {x1:.1} {y0:.1} L {x:.1} {y2:.1} Z\" \
                     fill=\"firebrick\"/>\n\
                     <text x=\"{tx:.1}\" y=\"{ty:.1}\" font-size=\"10\">{name} (inf)</text>\n",
                    x0 = x - 5.0,
                    x1 = x + 5.0,
                    y0 = y + 8.0,
                    y2 = y,
                    tx = x + 8.0,
                    ty = y + 4.0,
                ));
            }
            None => {
                body.push_str(&format!(
                    "<rect x=\"{rx:.1}\" y=\"{ry:.1}\" width=\"6\" height=\"6\" fill=\"gray\"/>\n\
                     <text x=\"{tx:.1}\" y=\"{ty:.1}\" font-size=\"10\">{name} (no hits)</text>\n",
                    rx = x - 3.0,
                    ry = svg_y(0.0) - 3.0,
                    tx = x + 6.0,
                    ty = svg_y(0.0) - 6.0,
                ));
            }
        }
    }
    let svg = svg_frame("Budget vs allocation ratio", "budget B", "ratio rho", &body);
    let path = dir.join("tradeoff.svg");
    fs::write(&path, svg)?;
    Ok(path)
}

/// Constraint line and iso-balance contours in the (stability, novelty)
/// recall plane at one α and budget.
pub fn emit_recall_plane_plot(
    dir: &Path,
    alpha: f64,
    b: f64,
    f1_levels: &[f64],
) -> Result<PathBuf, StoreError> {
    fs::create_dir_all(dir)?;
    let mut body = String::new();
    let mut first = true;
    for level in f1_levels {
        let curves = geometry_curves(alpha, b, *level)
            .map_err(|e| StoreError::Corrupt {
                path: dir.display().to_string(),
                detail: format!("geometry: {e}"),
            })?;
        if first {
            body.push_str(&polyline(&curves.constraint, "black", 2.0));
            first = false;
        }
        body.push_str(&polyline(&curves.iso_f1, "darkorange", 1.0));
    }
    let svg = svg_frame(
        &format!("Constraint at alpha={alpha}, B={b}"),
        "stability recall",
        "novelty recall",
        &body,
    );
    let path = dir.join("recall-plane.svg");
    fs::write(&path, svg)?;
    Ok(path)
}

fn polyline(points: &[(f64, f64)], color: &str, width: f64) -> String {
    if points.is_empty() {
        return String::new();
    }
    let coords: Vec<String> = points
        .iter()
        .map(|(x, y)| format!("{:.1},{:.1}", svg_x(*x), svg_y(*y)))
        .collect();
    format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\"/>\n",
        coords.join(" ")
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use tempfile::tempdir;

    fn rep(r: f64, stab: f64, nov: f64) -> AggregateReport {
        AggregateReport {
            r: Some(r),
            r_stab: Some(stab),
            r_nov: Some(nov),
            e_decay: Some(0.1),
            e_peer: Some(0.0),
            e_viral: Some(0.0),
            e_random: Some(0.0),
            f1_ns: Some(2.0 * stab * nov / (stab + nov)),
            users: 10,
            steps: 40,
        }
    }

    #[test]
    fn single_column_avg_equals_column() {
        let dir = tempdir().unwrap();
        let cols = vec![NamedReport { name: "WB".into(), report: rep(0.4, 0.5, 0.3) }];
        emit_report(dir.path(), &cols).unwrap();
        let recall = fs::read_to_string(dir.path().join("recall.tsv")).unwrap();
        let line: Vec<&str> =
            recall.lines().find(|l| l.starts_with("overall_recall")).unwrap().split('\t').collect();
        assert_eq!(line[1], line[2], "Avg must equal the only column");
        assert_eq!(line[1], "40.00");
    }

    #[test]
    fn avg_is_arithmetic_mean_and_f1_from_avg_recalls() {
        let dir = tempdir().unwrap();
        let cols = vec![
            NamedReport { name: "A".into(), report: rep(0.3, 0.6, 0.2) },
            NamedReport { name: "B".into(), report: rep(0.5, 0.2, 0.6) },
        ];
        emit_report(dir.path(), &cols).unwrap();
        let recall = fs::read_to_string(dir.path().join("recall.tsv")).unwrap();
        let overall: Vec<&str> =
            recall.lines().find(|l| l.starts_with("overall_recall")).unwrap().split('\t').collect();
        assert_eq!(overall[3], "40.00");
        // avg recalls are (0.4, 0.4) so overall balance is 40.00, while the
        // mean of the per-column balance scores would be 30.00
        let f1: Vec<&str> =
            recall.lines().find(|l| l.starts_with("balance_f1")).unwrap().split('\t').collect();
        assert_eq!(f1[3], "40.00");
    }

    #[test]
    fn manifest_written_once_per_dir() {
        let dir = tempdir().unwrap();
        let m = RunManifest::new("score", config_digest("{}"), 1, "oracle");
        write_manifest(dir.path(), &m).unwrap();
        write_manifest(dir.path(), &m).unwrap();
        let manifests: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| {
                e.as_ref().unwrap().file_name().to_string_lossy().contains("manifest")
            })
            .collect();
        assert_eq!(manifests.len(), 1);
    }

    #[test]
    fn plots_render_edge_cases() {
        let dir = tempdir().unwrap();
        let alpha = Ratio::new(6, 25);
        let points = vec![
            (
                "balanced".to_string(),
                TradeoffPoint { b: Ratio::new(1, 1), rho: Some(Rho::Finite(Ratio::new(1, 1))), alpha },
            ),
            (
                "novelty_only".to_string(),
                TradeoffPoint { b: Ratio::new(1, 2), rho: Some(Rho::Infinite), alpha },
            ),
            ("no_hits".to_string(), TradeoffPoint { b: Ratio::new(0, 1), rho: None, alpha }),
        ];
        let p = emit_tradeoff_plot(dir.path(), &points).unwrap();
        let svg = fs::read_to_string(p).unwrap();
        assert!(svg.contains("(inf)"));
        assert!(svg.contains("steelblue"));

        let p = emit_recall_plane_plot(dir.path(), 0.24, 0.6, &[0.2, 0.5]).unwrap();
        let svg = fs::read_to_string(p).unwrap();
        assert!(svg.contains("polyline"));
    }
}
