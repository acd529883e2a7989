//! Evaluation report CSV.
//!
//! One row per instance under the header line, then `# aggregate` rows, one
//! per size class in ascending order and a final `all` row. An `auc` of `NA`
//! marks an instance whose labels are single-class.

use std::fmt::Write as _;
use std::path::Path;

use edgegae_core::metrics::{EvalReport, Summary};

use crate::error::{write_atomic, Result};

pub const HEADER: &str = "id,n,f1,auc,predicted_length,oracle_length,gap_percent,tp,fp,fn";
pub const AGGREGATE_HEADER: &str =
    "# aggregate,n,count,f1_mean,f1_std,pooled_f1,auc_mean,auc_std,gap_mean,gap_std";

pub fn report_csv(report: &EvalReport) -> String {
    let mut out = String::new();
    writeln!(out, "{HEADER}").unwrap();
    for r in &report.records {
        let auc = r.auc.map_or_else(|| "NA".to_string(), |a| a.to_string());
        let c = &r.confusion;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.id, r.n, r.f1, auc, r.predicted_length, r.oracle_length, r.gap_percent, c.tp, c.fp, c.fn_
        )
        .unwrap();
    }
    writeln!(out, "{AGGREGATE_HEADER}").unwrap();
    for a in &report.aggregates {
        let n = a.n.map_or_else(|| "all".to_string(), |n| n.to_string());
        let s = |s: &Summary| format!("{},{}", s.mean, s.std);
        writeln!(out, "# aggregate,{n},{},{},{},{},{}", a.count, s(&a.f1), a.pooled_f1, s(&a.auc), s(&a.gap)).unwrap();
    }
    out
}

pub fn write_report(path: &Path, report: &EvalReport) -> Result<()> {
    write_atomic(path, report_csv(report).as_bytes())
}
