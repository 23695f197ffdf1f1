//! Cost-report rendering: aligned plain-text table or tab-separated rows.
//!
//! TSV rows are `layer<TAB>params<TAB>macs`, one per layer plus a final
//! `total` row; lines starting with `#` carry informational figures.
//! Numbers always use `.` as the decimal separator.

use ndbm2_core::CostReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Tsv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "tsv" => Ok(ReportFormat::Tsv),
            other => Err(format!("unknown format '{other}' (expected table or tsv)")),
        }
    }
}

pub fn render(report: &CostReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Table => render_table(report),
        ReportFormat::Tsv => render_tsv(report),
    }
}

fn render_table(report: &CostReport) -> String {
    let name_w = report
        .per_layer
        .iter()
        .map(|l| l.name.len())
        .chain(["layer".len(), "total".len()])
        .max()
        .unwrap_or(5);
    let mut out = String::new();
    out.push_str(&format!(
        "{:<name_w$}  {:>12}  {:>14}\n",
        "layer", "params", "macs"
    ));
    for l in &report.per_layer {
        out.push_str(&format!(
            "{:<name_w$}  {:>12}  {:>14}\n",
            l.name, l.params, l.macs
        ));
    }
    out.push_str(&format!(
        "{:<name_w$}  {:>12}  {:>14}\n",
        "total", report.params_total, report.macs_total
    ));
    if report.tokens > 0 {
        out.push_str(&format!("tokens (post-alignment): {}\n", report.tokens));
        out.push_str(&format!(
            "params: {:.2}k   macs: {:.4} GMac\n",
            report.params_total as f64 / 1e3,
            report.gmacs()
        ));
        out.push_str(&format!(
            "scan recurrence (not in totals): {:.4} GMac naive, {:.4} GMac chunked\n",
            report.scan_macs as f64 / 1e9,
            report.scan_macs_chunked as f64 / 1e9
        ));
    } else {
        out.push_str(&format!(
            "params: {:.2}k\n",
            report.params_total as f64 / 1e3
        ));
    }
    if let Some(ms) = report.wall_ms {
        out.push_str(&format!("median wall time: {ms:.3} ms\n"));
    }
    out
}

fn render_tsv(report: &CostReport) -> String {
    let mut out = String::new();
    for l in &report.per_layer {
        out.push_str(&format!("{}\t{}\t{}\n", l.name, l.params, l.macs));
    }
    out.push_str(&format!(
        "total\t{}\t{}\n",
        report.params_total, report.macs_total
    ));
    if report.tokens > 0 {
        out.push_str(&format!("# tokens\t{}\n", report.tokens));
        out.push_str(&format!(
            "# scan_macs_naive\t{}\n# scan_macs_chunked\t{}\n",
            report.scan_macs, report.scan_macs_chunked
        ));
    }
    if let Some(ms) = report.wall_ms {
        out.push_str(&format!("# wall_ms\t{ms:.6}\n"));
    }
    out
}
