//! Markdown summary assembled from whatever artifacts exist in a run
//! directory.

use std::fmt::Write as _;
use std::path::Path;

use super::data::{read, SWEEP};
use super::stages::SweepRecord;
use super::{PipelineError, Result};

const MISSING: &str = "_stage missing_\n";

fn optional(dir: &Path, name: &str) -> Result<Option<String>> {
    let path = dir.join(name);
    if path.is_file() {
        read(&path).map(Some)
    } else {
        Ok(None)
    }
}

/// Renders a CSV file as a Markdown table.
fn csv_table(text: &str) -> String {
    let mut out = String::new();
    for (i, line) in text.lines().enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        let _ = writeln!(out, "| {} |", cells.join(" | "));
        if i == 0 {
            let _ = writeln!(out, "|{}", "---|".repeat(cells.len()));
        }
    }
    out
}

fn sweep_section(dir: &Path, out: &mut String) -> Result<()> {
    out.push_str("## Clustering sweep\n\n");
    let Some(text) = optional(dir, SWEEP)? else {
        out.push_str(MISSING);
        return Ok(());
    };
    let sweep: SweepRecord = serde_json::from_str(&text).map_err(|e| PipelineError::Data(format!("{SWEEP}: {e}")))?;
    let _ = writeln!(out, "Features: {:?}. Cells show the silhouette score.\n", sweep.features);
    let _ = write!(out, "| k |");
    for a in &sweep.algorithms {
        let _ = write!(out, " {a} |");
    }
    let _ = writeln!(out, "\n|---|{}", "---|".repeat(sweep.algorithms.len()));
    for &k in &sweep.ks {
        let _ = write!(out, "| {k} |");
        for &a in &sweep.algorithms {
            let cell = sweep.cells.iter().find(|c| c.algorithm == a && c.k == k);
            let text = match cell {
                Some(c) if c.error.is_some() => "error".to_string(),
                Some(c) => c.silhouette.map_or("n/a".into(), |s| format!("{s:.4}")),
                None => String::new(),
            };
            let _ = write!(out, " {text} |");
        }
        out.push('\n');
    }
    out.push('\n');
    Ok(())
}

fn files_with(dir: &Path, prefix: &str, suffix: &str) -> Result<Vec<String>> {
    let entries = std::fs::read_dir(dir).map_err(|source| PipelineError::Io { path: dir.to_path_buf(), source })?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.starts_with(prefix) && n.ends_with(suffix))
        .collect();
    names.sort();
    Ok(names)
}

fn csv_files_section(dir: &Path, out: &mut String, title: &str, prefix: &str) -> Result<()> {
    let _ = writeln!(out, "## {title}\n");
    let names = files_with(dir, prefix, ".csv")?;
    if names.is_empty() {
        out.push_str(MISSING);
    }
    for name in names {
        let _ = writeln!(out, "### {}\n", name.trim_end_matches(".csv"));
        out.push_str(&csv_table(&read(&dir.join(&name))?));
        out.push('\n');
    }
    out.push('\n');
    Ok(())
}

fn reports_section(dir: &Path, out: &mut String) -> Result<()> {
    out.push_str("## Classification reports\n\n");
    let names = files_with(dir, "report_", ".txt")?;
    if names.is_empty() {
        out.push_str(MISSING);
    }
    for name in names {
        let _ = writeln!(out, "### {}\n\n```\n{}```\n", name.trim_end_matches(".txt"), read(&dir.join(&name))?);
    }
    Ok(())
}

fn rankings_section(dir: &Path, out: &mut String) -> Result<()> {
    out.push_str("## Token rankings\n\n");
    let mut any = false;
    for (name, title) in [("rankings_gain.md", "Boosted trees, total gain"), ("rankings_logreg.md", "Logistic regression, coefficient")] {
        if let Some(text) = optional(dir, name)? {
            any = true;
            let _ = writeln!(out, "### {title}\n\n{text}");
        }
    }
    if !any {
        out.push_str(MISSING);
    }
    out.push('\n');
    Ok(())
}

/// Builds `report.md` from the artifacts in `dir`. Sections whose stage
/// has not run are marked as missing.
pub fn render_report(dir: &Path) -> Result<String> {
    if !dir.is_dir() {
        return Err(PipelineError::MissingArtifact { artifact: dir.display().to_string(), stage: "synth` or `ingest".into() });
    }
    let mut out = String::from("# Findings classification report\n\n");
    sweep_section(dir, &mut out)?;
    csv_files_section(dir, &mut out, "Cluster-to-label accuracy", "accuracy_grid_")?;
    csv_files_section(dir, &mut out, "Per-label accuracy", "label_accuracy_")?;
    reports_section(dir, &mut out)?;
    rankings_section(dir, &mut out)?;
    out.push_str("## Attribution by feature block\n\n");
    match optional(dir, "block_summary.csv")? {
        Some(text) => out.push_str(&csv_table(&text)),
        None => out.push_str(MISSING),
    }
    Ok(out)
}
