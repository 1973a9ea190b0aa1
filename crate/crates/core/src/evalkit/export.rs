//! CSV tables for plotting.

use std::io::Write;

use super::experiments::{CapacityCurve, RobustnessReport};
use super::roc::RocCurve;
use super::stats::ZipfStats;
use crate::Result;

pub fn write_roc_csv<W: Write>(roc: &RocCurve, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["threshold", "fpr", "tpr"])?;
    // the first point precedes every threshold
    w.write_record(["", "0", "0"])?;
    for (i, &(fpr, tpr)) in roc.points.iter().enumerate().skip(1) {
        let threshold = roc
            .thresholds
            .get(i - 1)
            .map(f64::to_string)
            .unwrap_or_default();
        w.write_record([threshold, fpr.to_string(), tpr.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_capacity_csv<W: Write>(curve: &CapacityCurve, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["capacity", "ber", "symbol_error_rate", "trials"])?;
    for e in &curve.entries {
        w.write_record([
            e.capacity.to_string(),
            e.ber.to_string(),
            e.symbol_error_rate.to_string(),
            e.trials.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Long format: one row per (corpus, rank).
pub fn write_rank_frequency_csv<W: Write>(corpora: &[(&str, &ZipfStats)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["corpus", "rank", "frequency"])?;
    for (name, stats) in corpora {
        for &(rank, freq) in &stats.rank_freq {
            w.write_record([name.to_string(), rank.to_string(), freq.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_robustness_csv<W: Write>(report: &RobustnessReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["channel", "accuracy", "ber", "trials"])?;
    for r in &report.rows {
        w.write_record([
            r.channel.clone(),
            r.accuracy.to_string(),
            r.ber.to_string(),
            r.trials.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
