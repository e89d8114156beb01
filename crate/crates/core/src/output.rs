//! Plot-ready CSV text. Every table starts with a `# config_sha256=` line.

use std::fmt::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::Trajectory;
use crate::pipeline::{ReduceRow, SweepReport, ZoneSummary};
use crate::reduction::Clustering;
use crate::scheduler::ClosedLoopLog;

pub fn provenance(sha256: &str) -> String {
    format!("# config_sha256={sha256}\n")
}

/// `time_s,node_0,…` with one row per sample.
pub fn trajectory_csv(tr: &Trajectory, sha256: &str) -> String {
    let mut out = provenance(sha256);
    let n = tr.states.first().map_or(0, Vec::len);
    out.push_str("time_s");
    for i in 0..n {
        write!(out, ",node_{i}").unwrap();
    }
    out.push('\n');
    for (t, s) in tr.times.iter().zip(&tr.states) {
        write!(out, "{t}").unwrap();
        for h in s {
            write!(out, ",{h}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn cluster_csv(c: &Clustering, sha256: &str) -> String {
    provenance(sha256) + &c.to_csv()
}

pub fn reduce_csv(rows: &[ReduceRow], sha256: &str) -> String {
    let mut out = provenance(sha256);
    out.push_str("threshold,r,mse\n");
    for r in rows {
        writeln!(out, "{},{},{}", r.threshold, r.r, r.mse).unwrap();
    }
    out
}

/// Knee and saturation ratio go in comment lines after the provenance.
pub fn sweep_csv(report: &SweepReport, sha256: &str) -> String {
    let mut out = provenance(sha256);
    if let Some(k) = report.knee_amount {
        writeln!(out, "# knee_amount={k}").unwrap();
    }
    if let Some(s) = report.saturation_ratio {
        writeln!(
            out,
            "# saturation_ratio={s} saturating={}",
            report.saturating()
        )
        .unwrap();
    }
    out.push_str("amount,days,capped\n");
    for r in &report.rows {
        writeln!(out, "{},{},{}", r.amount, r.days, r.capped).unwrap();
    }
    out
}

/// One row per planning step; rates joined with `;`.
pub fn log_csv(log: &ClosedLoopLog, sha256: &str) -> String {
    let mut out = provenance(sha256);
    out.push_str("event_index,t_start_s,u_rates,T_chosen_s,water_m3,deficiency_increment,min_rootzone_head\n");
    for r in &log.rows {
        let rates: Vec<String> = r.u_rates.iter().map(f64::to_string).collect();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.event_index,
            r.t_start_s,
            rates.join(";"),
            r.t_chosen_s,
            r.water_m3,
            r.deficiency_increment,
            r.min_rootzone_head
        )
        .unwrap();
    }
    out
}

/// Sampled plant stress with the mean and minimum root-zone head.
pub fn stress_csv(log: &ClosedLoopLog, sha256: &str) -> String {
    let mut out = provenance(sha256);
    out.push_str("time_s,dt_s,alpha,ky,mean_rootzone_head,min_rootzone_head\n");
    for k in 0..log.sample_times.len() {
        let y = &log.rootzone[k];
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let min = y.iter().copied().fold(f64::INFINITY, f64::min);
        writeln!(
            out,
            "{},{},{},{},{},{}",
            log.sample_times[k],
            log.sample_dts[k],
            log.sample_alpha[k],
            log.sample_ky[k],
            mean,
            min
        )
        .unwrap();
    }
    out
}

pub fn summary_csv(s: &ZoneSummary, sha256: &str) -> String {
    let mut out = provenance(sha256);
    out.push_str("key,value\n");
    let starts: Vec<String> = s
        .event_starts_days
        .iter()
        .map(|d| format!("{d:.4}"))
        .collect();
    let cv = s.spacing_cv.map_or("nan".to_string(), |v| v.to_string());
    let thirds: Vec<String> = s.events_per_third.iter().map(usize::to_string).collect();
    for (k, v) in [
        ("events", s.events.to_string()),
        ("event_starts_days", starts.join(";")),
        ("events_per_third", thirds.join(";")),
        ("spacing_cv", cv),
        ("rootzone_samples", s.samples.to_string()),
        ("min_rootzone_head", s.min_head.to_string()),
        (
            "frac_above_actual_lower",
            s.frac_above_actual_lower.to_string(),
        ),
        ("frac_above_lower", s.frac_above_lower.to_string()),
        ("total_water_m3", s.total_water_m3.to_string()),
        ("total_deficiency", s.total_deficiency.to_string()),
    ] {
        writeln!(out, "{k},{v}").unwrap();
    }
    out
}

pub fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
