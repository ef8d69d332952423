use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use mobman_core::executor::LatencyConfig;
use mobman_core::sim::{rows_from_csv, Condition, ConditionSummary, EpisodeRow, LabelFrame};
use serde_json::json;

use crate::aggregate::Aggregate;
use crate::error::CliError;
use crate::manifest::{hash_inputs, RunInfo};
use crate::ReportArgs;

const PALETTE: [&str; 4] = ["#1b6ca8", "#d1495b", "#66a182", "#edae49"];

/// Conditions sharing a scenario and latency.
struct Group {
    scenario: String,
    latency: Option<LatencyConfig>,
    conditions: Vec<ConditionSummary>,
}

fn summarize_rows(rows: &[EpisodeRow]) -> Vec<ConditionSummary> {
    let mut keys: Vec<(String, LabelFrame, bool)> = Vec::new();
    for r in rows {
        let k = (r.scenario.clone(), r.label, r.matching);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(scenario, label, matching)| {
            let rs: Vec<_> = rows
                .iter()
                .filter(|r| r.scenario == scenario && r.label == label && r.matching == matching)
                .collect();
            let n = rs.len();
            let splices: usize = rs.iter().map(|r| r.splices).sum();
            let rollbacks: usize = rs.iter().map(|r| r.rollbacks).sum();
            let jitter: usize = rs.iter().map(|r| r.jitter).sum();
            let ok: Vec<_> = rs.iter().filter(|r| r.success).collect();
            let per = |x: usize| if splices == 0 { 0.0 } else { x as f64 / splices as f64 };
            // pooled moments from per-episode means and deviations
            let (mut m1, mut m2) = (0.0, 0.0);
            for r in &rs {
                let w = r.splices as f64;
                m1 += w * r.i_star_mean;
                m2 += w * (r.i_star_std.powi(2) + r.i_star_mean.powi(2));
            }
            let (mean, std) = if splices == 0 {
                (0.0, 0.0)
            } else {
                let m = m1 / splices as f64;
                (m, (m2 / splices as f64 - m * m).max(0.0).sqrt())
            };
            ConditionSummary {
                scenario,
                label,
                matching,
                trials: n,
                success_rate: ok.len() as f64 / n as f64,
                mean_time: (!ok.is_empty())
                    .then(|| ok.iter().map(|r| r.completion_time).sum::<f64>() / ok.len() as f64),
                rollbacks,
                rollbacks_per_splice: per(rollbacks),
                jitter,
                jitter_per_splice: per(jitter),
                splices,
                i_star_mean: mean,
                i_star_std: std,
                i_star_hist: Vec::new(),
            }
        })
        .collect()
}

fn load(path: &Path) -> Result<Vec<Group>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "csv") {
        let rows = rows_from_csv(&text)?;
        let mut groups: Vec<Group> = Vec::new();
        for s in summarize_rows(&rows) {
            match groups.iter_mut().find(|g| g.scenario == s.scenario) {
                Some(g) => g.conditions.push(s),
                None => groups.push(Group {
                    scenario: s.scenario.clone(),
                    latency: None,
                    conditions: vec![s],
                }),
            }
        }
        return Ok(groups);
    }
    let agg: Aggregate =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(vec![Group {
        scenario: agg.scenario,
        latency: Some(agg.latency),
        conditions: agg.conditions,
    }])
}

fn name(s: &ConditionSummary) -> String {
    Condition {
        label: s.label,
        matching: s.matching,
    }
    .name()
}

fn pct(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

fn heading(g: &Group) -> String {
    match &g.latency {
        Some(l) => format!(
            "{} at {} ms latency ({} / {} / {} ms, jitter {} ms)",
            g.scenario,
            l.total_ms(),
            l.input_ms,
            l.net_ms,
            l.exe_ms,
            l.jitter_std_ms
        ),
        None => g.scenario.clone(),
    }
}

/// Success rates laid out as label frame rows by matching columns, when the
/// group covers all four cells.
fn matrix(g: &Group) -> Option<String> {
    let cell = |label, matching| g.conditions.iter().find(|s| s.label == label && s.matching == matching);
    let mut out = String::from("| label frame | matching on | matching off |\n|---|---|---|\n");
    for label in [LabelFrame::Relative, LabelFrame::Global] {
        let (on, off) = (cell(label, true)?, cell(label, false)?);
        let _ = writeln!(
            out,
            "| {} | {} | {} |",
            label.name(),
            pct(on.success_rate),
            pct(off.success_rate)
        );
    }
    Some(out)
}

const COLUMNS: [&str; 9] = [
    "condition",
    "trials",
    "success",
    "mean time (s)",
    "rollbacks",
    "rollbacks/splice",
    "jitter",
    "jitter/splice",
    "i* mean ± std",
];

fn cells(s: &ConditionSummary) -> [String; 9] {
    [
        name(s),
        s.trials.to_string(),
        pct(s.success_rate),
        s.mean_time.map_or("-".into(), |t| format!("{t:.1}")),
        s.rollbacks.to_string(),
        format!("{:.3}", s.rollbacks_per_splice),
        s.jitter.to_string(),
        format!("{:.3}", s.jitter_per_splice),
        format!("{:.2} ± {:.2}", s.i_star_mean, s.i_star_std),
    ]
}

fn markdown(groups: &[Group], inputs: &[(String, String)]) -> String {
    let mut md = String::from("# Simulation report\n\nInputs:\n\n");
    for (p, h) in inputs {
        let _ = writeln!(md, "- `{p}` (sha256 `{h}`)");
    }
    for g in groups {
        let _ = write!(md, "\n## {}\n\n", heading(g));
        if let Some(m) = matrix(g) {
            md.push_str("Success rate:\n\n");
            md.push_str(&m);
            md.push('\n');
        }
        let _ = writeln!(md, "| {} |", COLUMNS.join(" | "));
        let _ = writeln!(md, "|{}", "---|".repeat(COLUMNS.len()));
        for s in &g.conditions {
            let _ = writeln!(md, "| {} |", cells(s).join(" | "));
        }
    }
    md.push_str(
        "\nJitter counts forward-velocity sign reversals within 500 ms after a splice. \
         It is a proxy for visible mechanical jitter, not a measurement of it.\n",
    );
    md
}

fn plain(groups: &[Group]) -> String {
    let mut txt = String::new();
    for g in groups {
        let rows: Vec<[String; 9]> = g.conditions.iter().map(cells).collect();
        let widths: Vec<usize> = (0..COLUMNS.len())
            .map(|c| {
                rows.iter()
                    .map(|r| r[c].chars().count())
                    .chain([COLUMNS[c].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cols: Vec<&str>| {
            cols.iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let _ = writeln!(txt, "{}", heading(g));
        let _ = writeln!(txt, "{}", line(COLUMNS.to_vec()));
        for r in &rows {
            let _ = writeln!(txt, "{}", line(r.iter().map(String::as_str).collect()));
        }
        txt.push('\n');
    }
    txt
}

/// Grouped vertical bars, one group per category and one bar per series.
fn bar_chart(title: &str, categories: &[String], series: &[(String, Vec<f64>)]) -> String {
    let (left, top, plot_h, group_w) = (60.0, 40.0, 200.0, 24.0 * series.len().max(1) as f64 + 20.0);
    let width = left + group_w * categories.len() as f64 + 180.0;
    let height = top + plot_h + 50.0;
    let max = series
        .iter()
        .flat_map(|s| s.1.iter().copied())
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <text x=\"{left}\" y=\"20\" font-size=\"14\">{title}</text>\n\
         <line x1=\"{left}\" y1=\"{y0:.1}\" x2=\"{x1:.1}\" y2=\"{y0:.1}\" stroke=\"#333\"/>\n\
         <text x=\"{lx:.1}\" y=\"{ty:.1}\" text-anchor=\"end\">{max:.3}</text>\n",
        y0 = top + plot_h,
        x1 = left + group_w * categories.len() as f64,
        lx = left - 4.0,
        ty = top + 4.0,
    );
    for (ci, cat) in categories.iter().enumerate() {
        let gx = left + group_w * ci as f64 + 10.0;
        for (si, (_, values)) in series.iter().enumerate() {
            let v = values.get(ci).copied().unwrap_or(0.0);
            let h = plot_h * v / max;
            let _ = writeln!(
                svg,
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"20\" height=\"{:.1}\" fill=\"{}\"><title>{v:.4}</title></rect>",
                gx + 24.0 * si as f64,
                top + plot_h - h,
                h,
                PALETTE[si % PALETTE.len()]
            );
        }
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{cat}</text>",
            gx + 12.0 * series.len() as f64,
            top + plot_h + 16.0
        );
    }
    for (si, (label, _)) in series.iter().enumerate() {
        let y = top + 16.0 * si as f64;
        let x = left + group_w * categories.len() as f64 + 20.0;
        let _ = writeln!(
            svg,
            "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"{:.1}\" y=\"{:.1}\">{label}</text>",
            y,
            PALETTE[si % PALETTE.len()],
            x + 14.0,
            y + 9.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn istar_chart(groups: &[Group]) -> String {
    let all: Vec<&ConditionSummary> = groups
        .iter()
        .flat_map(|g| &g.conditions)
        .filter(|s| s.splices > 0 && !s.i_star_hist.is_empty())
        .collect();
    let top = all
        .iter()
        .filter_map(|s| s.i_star_hist.iter().rposition(|&c| c > 0))
        .max()
        .unwrap_or(0);
    let categories: Vec<String> = (0..=top).map(|i| i.to_string()).collect();
    let series: Vec<(String, Vec<f64>)> = all
        .iter()
        .map(|s| {
            let n = s.i_star_hist.iter().sum::<usize>().max(1) as f64;
            (
                format!("{} {}", s.scenario, name(s)),
                (0..=top)
                    .map(|i| s.i_star_hist.get(i).copied().unwrap_or(0) as f64 / n)
                    .collect(),
            )
        })
        .collect();
    bar_chart("Splice index i* (fraction of splices)", &categories, &series)
}

fn rollback_chart(groups: &[Group]) -> String {
    let all: Vec<&ConditionSummary> = groups.iter().flat_map(|g| &g.conditions).collect();
    let categories: Vec<String> = all.iter().map(|s| format!("{} {}", s.scenario, name(s))).collect();
    let series = vec![
        (
            "rollbacks per splice".to_string(),
            all.iter().map(|s| s.rollbacks_per_splice).collect(),
        ),
        (
            "jitter per splice".to_string(),
            all.iter().map(|s| s.jitter_per_splice).collect(),
        ),
    ];
    bar_chart("Rollbacks and jitter proxy per splice", &categories, &series)
}

pub fn run(a: &ReportArgs) -> Result<RunInfo, CliError> {
    let mut groups = Vec::new();
    for p in &a.metrics {
        groups.extend(load(p)?);
    }
    groups.retain(|g| !g.conditions.is_empty());
    if groups.is_empty() {
        return Err(CliError::Rejected("metrics files contain no episodes".into()));
    }
    let hashes = hash_inputs(&a.metrics)?;
    let inputs: Vec<(String, String)> = hashes.into_iter().map(|h| (h.path, h.sha256)).collect();
    fs::write(a.out.join("report.md"), markdown(&groups, &inputs))?;
    fs::write(a.out.join("report.txt"), plain(&groups))?;
    fs::write(a.out.join("i_star_hist.svg"), istar_chart(&groups))?;
    fs::write(a.out.join("rollbacks_jitter.svg"), rollback_chart(&groups))?;
    print!("{}", plain(&groups));
    Ok(RunInfo {
        config: json!({ "metrics": a.metrics }),
        inputs: a.metrics.clone(),
        ..RunInfo::default()
    })
}
