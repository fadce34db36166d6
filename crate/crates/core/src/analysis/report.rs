//! Rendering of analysis results as JSON, CSV, or aligned text tables.

use std::fmt::Write as _;

use serde::Serialize;

use super::{significance_stars, BugInductionTable, CorpusStats, CorrelationReport, EditMode};

#[derive(Clone, Debug, Serialize)]
pub struct AnalysisOutput {
    pub corpus: CorpusStats,
    pub completed_prs: usize,
    pub bug_fix_prs: usize,
    pub bug_induction: BugInductionTable,
    pub correlation: CorrelationReport,
}

fn mode_label(mode: EditMode) -> &'static str {
    match mode {
        EditMode::Concurrent => "concurrent",
        EditMode::NonConcurrent => "non_concurrent",
    }
}

fn rho_cell(rho: Option<f64>, p: Option<f64>) -> String {
    match (rho, p) {
        (Some(r), Some(p)) => format!("{r:.2}{}", significance_stars(p)),
        (Some(r), None) => format!("{r:.2}"),
        _ => "n/a".to_string(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub fn render_json(out: &AnalysisOutput) -> String {
    serde_json::to_string_pretty(out).expect("analysis output serializes")
}

pub fn render_csv(out: &AnalysisOutput) -> String {
    let mut s = String::new();
    s.push_str("section,mode,window_days,followed,total,percentage\n");
    for c in &out.bug_induction.cells {
        let _ = writeln!(
            s,
            "bug_induction,{},{},{},{},{:.4}",
            mode_label(c.mode),
            c.window_days,
            c.followed,
            c.total,
            c.percentage
        );
    }
    s.push('\n');
    s.push_str("section,repo_id,n,rho_total,p_total,rho_concurrent,p_concurrent,rho_non_concurrent,p_non_concurrent\n");
    for r in &out.correlation.rows {
        let _ = writeln!(
            s,
            "correlation,{},{},{},{},{},{},{},{}",
            r.repo_id,
            r.n,
            opt(r.rho_total),
            opt(r.p_total),
            opt(r.rho_concurrent),
            opt(r.p_concurrent),
            opt(r.rho_non_concurrent),
            opt(r.p_non_concurrent)
        );
    }
    s
}

pub fn render_table(out: &AnalysisOutput) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "Completed PRs: {}, bug-fix PRs: {}\n",
        out.completed_prs, out.bug_fix_prs
    );

    let mut windows: Vec<u32> = Vec::new();
    for c in &out.bug_induction.cells {
        if !windows.contains(&c.window_days) {
            windows.push(c.window_days);
        }
    }
    let _ = write!(s, "{:<16}", "Edit mode");
    for w in &windows {
        let _ = write!(s, "{:>10}", format!("{w}d"));
    }
    s.push('\n');
    for mode in [EditMode::Concurrent, EditMode::NonConcurrent] {
        let _ = write!(s, "{:<16}", mode_label(mode));
        for &w in &windows {
            let cell = out
                .bug_induction
                .rate(mode, w)
                .map(|p| format!("{p:.2}%"))
                .unwrap_or_default();
            let _ = write!(s, "{cell:>10}");
        }
        s.push('\n');
    }
    s.push('\n');

    let _ = writeln!(
        s,
        "{:<24}{:>8}{:>14}{:>14}{:>14}",
        "Repository", "Files", "Total", "Concurrent", "Non-conc."
    );
    for r in &out.correlation.rows {
        let _ = writeln!(
            s,
            "{:<24}{:>8}{:>14}{:>14}{:>14}",
            r.repo_id,
            r.n,
            rho_cell(r.rho_total, r.p_total),
            rho_cell(r.rho_concurrent, r.p_concurrent),
            rho_cell(r.rho_non_concurrent, r.p_non_concurrent)
        );
    }
    let _ = writeln!(
        s,
        "\nSpearman rho; p-values from a two-sided permutation test ({} permutations, seed {}).\n*** p < 0.001, ** p < 0.01, * p < 0.05",
        out.correlation.permutations, out.correlation.seed
    );
    for w in &out.correlation.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}
