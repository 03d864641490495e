//! Report emission: CSV and Markdown renderings of an [`EvalReport`], plus
//! JSON-lines episode logs.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

use super::{EpisodeRow, EvalReport};

pub enum ReportFormat {
    Csv,
    Markdown,
}

/// Render the aggregated cells. The CSV schema is fixed:
/// `env,horizon,source,method,episodes,successes,success_rate,mean_dist,mean_seconds`.
pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => {
            let mut out = String::from(
                "env,horizon,source,method,episodes,successes,success_rate,mean_dist,mean_seconds\n",
            );
            for c in &report.cells {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    c.env,
                    c.horizon,
                    c.source,
                    c.method,
                    c.episodes,
                    c.successes,
                    c.success_rate,
                    c.mean_dist,
                    c.mean_seconds
                )
                .expect("string write");
            }
            out
        }
        ReportFormat::Markdown => {
            let mut out = String::from(
                "| env | horizon | source | method | episodes | successes | success_rate | mean_dist | mean_seconds |\n|---|---|---|---|---|---|---|---|---|\n",
            );
            for c in &report.cells {
                writeln!(
                    out,
                    "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                    c.env,
                    c.horizon,
                    c.source,
                    c.method,
                    c.episodes,
                    c.successes,
                    c.success_rate,
                    c.mean_dist,
                    c.mean_seconds
                )
                .expect("string write");
            }
            out
        }
    }
}

/// Write the rendered report to a file.
pub fn emit_report<P: AsRef<Path>>(
    report: &EvalReport,
    format: ReportFormat,
    path: P,
) -> Result<()> {
    if let Some(parent) = path.as_ref().parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, render_report(report, format))?;
    Ok(())
}

/// One JSON-lines record per replan, as documented: fields
/// `(t, rho_final, max_residual, cost, action_norm)`.
pub fn episode_log_lines(episode: &EpisodeRow) -> String {
    let mut out = String::new();
    for replan in &episode.replans {
        out.push_str(&serde_json::to_string(replan).expect("replan serializes"));
        out.push('\n');
    }
    out
}

/// Write per-episode JSONL logs under `dir/logs/`.
pub fn emit_episode_logs<P: AsRef<Path>>(report: &EvalReport, dir: P) -> Result<()> {
    let logs = dir.as_ref().join("logs");
    std::fs::create_dir_all(&logs)?;
    for e in &report.episodes {
        let name = format!(
            "{}_h{}_{}_{}_{:03}.jsonl",
            e.env, e.horizon, e.source, e.method, e.episode
        );
        std::fs::write(logs.join(name), episode_log_lines(e))?;
    }
    Ok(())
}
