//! Stable on-disk forms of simulation results.
//!
//! Every float is written with six decimals and rows are emitted in a fixed
//! order, so equal reports always produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::engine::{MetricsReport, SweepRow};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Six-decimal fixed point; negative zero is written as zero.
pub fn fixed6(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

fn rounded(v: f64) -> Value {
    // parse back the fixed form so JSON carries exactly the CSV value
    let v: f64 = fixed6(v).parse().expect("fixed-point text parses");
    json!(v)
}

pub fn epochs_csv(report: &MetricsReport) -> String {
    let mut out =
        String::from("epoch,partition_canonical,user_id,mode,eff_snr_db,mcs,goodput_mbps\n");
    for e in &report.epochs {
        let partition = e.partition.to_string();
        for u in &e.users {
            let mcs = u.mcs.map_or_else(|| "NO_TX".to_string(), |m| m.to_string());
            writeln!(
                out,
                "{},\"{}\",{},{},{},{},{}",
                e.epoch,
                partition,
                u.user_id,
                u.mode,
                fixed6(u.eff_snr_db),
                mcs,
                fixed6(u.goodput_mbps)
            )
            .unwrap();
        }
    }
    out
}

pub fn qoe_csv(report: &MetricsReport) -> String {
    let mut out =
        String::from("user_id,segments,loss_rate,underflow_rate,switch_rate,mean_bitrate_mbps\n");
    for u in &report.users {
        let q = &u.qoe;
        writeln!(
            out,
            "{},{},{},{},{},{}",
            q.user_id,
            q.segments_played + q.segments_lost,
            fixed6(q.loss_rate),
            fixed6(q.underflow_rate),
            fixed6(q.switch_rate),
            fixed6(q.mean_bitrate_mbps)
        )
        .unwrap();
    }
    out
}

/// Per-segment log, one row per finished or lost segment.
pub fn segments_csv(report: &MetricsReport) -> String {
    let mut out = String::from("user_id,seq,bitrate_idx,bitrate_mbps,lost,switched,underflow\n");
    for s in &report.segments {
        let o = &s.outcome;
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.user_id,
            o.seq,
            o.bitrate_idx,
            fixed6(s.bitrate_mbps),
            u8::from(o.lost),
            u8::from(o.switched),
            u8::from(o.underflow)
        )
        .unwrap();
    }
    out
}

pub fn summary_json(report: &MetricsReport) -> String {
    let n = report.epochs.len() as f64;
    let users: Vec<Value> = report
        .users
        .iter()
        .map(|u| {
            let q = &u.qoe;
            let id = q.user_id;
            let mean_goodput = report
                .epochs
                .iter()
                .flat_map(|e| e.users.iter().filter(move |x| x.user_id == id))
                .map(|x| x.goodput_mbps)
                .sum::<f64>()
                / n;
            let mu_epochs = report
                .epochs
                .iter()
                .filter(|e| e.partition.group_of(id).is_some_and(|g| g.len() >= 2))
                .count();
            json!({
                "user_id": id,
                "mean_goodput_mbps": rounded(mean_goodput),
                "mu_epochs": mu_epochs,
                "segments_played": q.segments_played,
                "segments_lost": q.segments_lost,
                "loss_rate": rounded(q.loss_rate),
                "underflow_rate": rounded(q.underflow_rate),
                "switch_rate": rounded(q.switch_rate),
                "mean_bitrate_mbps": rounded(q.mean_bitrate_mbps),
                "underflows": u.underflows,
                "switches": u.switches,
                "z_loss": rounded(u.queues.z_loss),
                "z_und": rounded(u.queues.z_und),
                "z_sw": rounded(u.queues.z_sw),
            })
        })
        .collect();
    let correlations: Vec<Value> = report
        .epochs
        .iter()
        .map(|e| {
            let row: Vec<Value> = e
                .users
                .iter()
                .map(|u| {
                    json!({
                        "user_id": u.user_id,
                        "correlation": u.csi_correlation.map(rounded),
                        "is_mobile": u.is_mobile,
                    })
                })
                .collect();
            json!({ "epoch": e.epoch, "users": row })
        })
        .collect();
    let aggregate = report.epochs.iter().map(|e| e.aggregate_mbps).sum::<f64>() / n;
    let doc = json!({
        "seed": report.seed,
        "config_digest": report.config_digest,
        "policy": report.policy.as_str(),
        "epochs": report.epochs.len(),
        "mean_aggregate_mbps": rounded(aggregate),
        "mean_user_goodput_mbps": rounded(report.mean_user_goodput_mbps()),
        "users": users,
        "csi_correlation": correlations,
    });
    serde_json::to_string_pretty(&doc).expect("summary serialises") + "\n"
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("axis,level,seed,arm,mean_user_goodput_mbps\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.axis.as_str(),
            r.level,
            r.seed,
            r.arm.as_str(),
            fixed6(r.mean_user_goodput_mbps)
        )
        .unwrap();
    }
    out
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), ReportError> {
    fs::write(path, contents).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn ensure_dir(dir: &Path) -> Result<(), ReportError> {
    fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// Writes the report files into `out_dir` and returns their paths.
pub fn emit_report(
    report: &MetricsReport,
    format: OutputFormat,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    ensure_dir(out_dir)?;
    let files: Vec<(&str, String)> = match format {
        OutputFormat::Csv => vec![
            ("epochs.csv", epochs_csv(report)),
            ("qoe.csv", qoe_csv(report)),
            ("segments.csv", segments_csv(report)),
            ("summary.json", summary_json(report)),
        ],
        OutputFormat::Json => vec![
            (
                "report.json",
                serde_json::to_string_pretty(report).expect("report serialises") + "\n",
            ),
            ("summary.json", summary_json(report)),
        ],
    };
    let mut written = Vec::with_capacity(files.len());
    for (name, text) in files {
        let path = out_dir.join(name);
        write_file(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}

pub fn emit_sweep(
    rows: &[SweepRow],
    format: OutputFormat,
    out_dir: &Path,
) -> Result<PathBuf, ReportError> {
    ensure_dir(out_dir)?;
    let (name, text) = match format {
        OutputFormat::Csv => ("sweep.csv", sweep_csv(rows)),
        OutputFormat::Json => (
            "sweep.json",
            serde_json::to_string_pretty(rows).expect("rows serialise") + "\n",
        ),
    };
    let path = out_dir.join(name);
    write_file(&path, &text)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Policy, SimConfig};
    use crate::engine::run_sim;
    use crate::phy::{ApConfig, UserProfile};

    #[test]
    fn six_decimals() {
        assert_eq!(fixed6(64.5454545), "64.545455");
        assert_eq!(fixed6(-1e-9), "0.000000");
        assert_eq!(fixed6(0.0), "0.000000");
        assert_eq!(fixed6(-2.5), "-2.500000");
    }

    #[test]
    fn one_user_one_epoch_gives_one_row() {
        let mut c = SimConfig::new(ApConfig::new(4), vec![UserProfile::new(0, 30.0)]);
        c.duration_epochs = 1;
        c.policy = Policy::AllSu;
        let r = run_sim(&c, 0).unwrap();
        let csv = epochs_csv(&r);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(
            lines[1].starts_with("0,\"[0]\",0,SU,30.000000,"),
            "{}",
            lines[1]
        );
        assert!(!csv.contains('\r'));
        assert_eq!(qoe_csv(&r).lines().count(), 2);
    }

    #[test]
    fn no_transmission_is_marked() {
        let mut c = SimConfig::new(ApConfig::new(4), vec![UserProfile::new(0, 0.0)]);
        c.duration_epochs = 1;
        c.policy = Policy::AllSu;
        let r = run_sim(&c, 0).unwrap();
        assert!(epochs_csv(&r)
            .lines()
            .nth(1)
            .unwrap()
            .ends_with(",NO_TX,0.000000"));
    }

    #[test]
    fn unwritable_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let mut c = SimConfig::new(ApConfig::new(4), vec![UserProfile::new(0, 30.0)]);
        c.duration_epochs = 1;
        c.policy = Policy::AllSu;
        let r = run_sim(&c, 0).unwrap();
        assert!(emit_report(&r, OutputFormat::Csv, &blocker.join("sub")).is_err());
    }
}
