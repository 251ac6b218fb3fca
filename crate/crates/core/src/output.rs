//! Plain-text result files.
//!
//! * metrics series: CSV `t,rmse,variance,mean_bias_sq,node0,...`
//! * fusion log: whitespace-separated `t node source count`
//! * events: one event per line
//! * summary: `key = value` lines

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::experiment::{Event, FusionLogRow, RunResult, Table2};
use crate::metrics::MetricsRecord;
use crate::{Error, Result};

/// Renders a series, checking the error decomposition on every row.
pub fn series_to_csv(records: &[MetricsRecord]) -> Result<String> {
    let nodes = records.first().map_or(0, |r| r.per_node_error.len());
    let mut out = String::from("t,rmse,variance,mean_bias_sq");
    for i in 0..nodes {
        write!(out, ",node{i}").unwrap();
    }
    out.push('\n');
    for r in records {
        r.check_identity()?;
        if r.per_node_error.len() != nodes {
            return Err(Error::InvalidInput(format!("record t={} has a different node count", r.t)));
        }
        write!(out, "{},{},{},{}", r.t, r.rmse, r.variance, r.mean_bias_sq).unwrap();
        for e in &r.per_node_error {
            write!(out, ",{e}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_series(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    write(path, &series_to_csv(records)?)
}

pub fn parse_series(text: &str, origin: &Path) -> Result<Vec<MetricsRecord>> {
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, l)| l).unwrap_or_default();
    if !header.starts_with("t,rmse,variance,mean_bias_sq") {
        return Err(Error::parse(origin, 1, "missing series header"));
    }
    let mut records = Vec::new();
    for (k, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::parse(origin, k + 1, msg);
        let mut fields = line.split(',');
        let t = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| bad("bad step index"))?;
        let values = fields
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(&e.to_string()))?;
        if values.len() < 3 {
            return Err(bad("too few columns"));
        }
        records.push(MetricsRecord {
            t,
            rmse: values[0],
            variance: values[1],
            mean_bias_sq: values[2],
            per_node_error: values[3..].to_vec(),
        });
    }
    Ok(records)
}

pub fn read_series(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_series(&text, path)
}

pub fn fusion_log_to_text(rows: &[FusionLogRow]) -> String {
    let mut out = String::from("t node source count\n");
    for r in rows {
        writeln!(out, "{} {} {} {}", r.t, r.node, r.source, r.count).unwrap();
    }
    out
}

pub fn events_to_text(events: &[Event]) -> String {
    events.iter().map(|e| format!("{e}\n")).collect()
}

pub fn summary_to_text(pairs: &[(&str, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

/// Writes `summary.txt` plus per-trial series, events and (if recorded)
/// fusion logs into `dir`.
pub fn write_run(dir: &Path, run: &RunResult) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let cfg = &run.config;
    let mut pairs = vec![
        ("scenario", run.scenario.clone()),
        ("nodes", run.nodes.to_string()),
        ("mode", cfg.mode.to_string()),
        ("policy", cfg.policy.to_string()),
        ("steps", cfg.steps.to_string()),
        ("trials", cfg.trials.to_string()),
        ("seed", cfg.global_seed.to_string()),
        ("particles", cfg.filter.particles.to_string()),
        ("steady_rmse", run.rmse().to_string()),
        ("steady_sqrt_variance", run.sqrt_variance().to_string()),
    ];
    for t in &run.trials {
        pairs.push(("trial_steady_rmse", format!("{} {}", t.trial, t.steady_rmse())));
    }
    write(&dir.join("summary.txt"), &summary_to_text(&pairs))?;
    for t in &run.trials {
        write_series(&dir.join(format!("series_trial{}.csv", t.trial)), &t.records)?;
        write(&dir.join(format!("events_trial{}.txt", t.trial)), &events_to_text(&t.events))?;
        if cfg.record_fusion_log {
            write(
                &dir.join(format!("fusion_log_trial{}.txt", t.trial)),
                &fusion_log_to_text(&t.fusion_log),
            )?;
        }
    }
    Ok(())
}

/// Mechanism-by-network table of steady-state RMSE.
pub fn table2_to_csv(table: &Table2) -> String {
    let mut out = String::from("mechanism");
    for n in &table.networks {
        write!(out, ",{}", n.name).unwrap();
    }
    out.push('\n');
    for m in crate::experiment::Mechanism::ALL {
        out.push_str(m.label());
        for k in 0..table.networks.len() {
            write!(out, ",{}", table.cell(m, k).rmse()).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
