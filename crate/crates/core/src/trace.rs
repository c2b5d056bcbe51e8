//! Trace serialization: the per-round metrics CSV, the optional message log
//! and per-agent snapshot JSON.
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! traces produce byte-identical files.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::agent::NeighborMessage;
use crate::engine::{RoundMetrics, SimTrace, Snapshot};
use crate::scalar::Real;

pub const TRACE_HEADER: [&str; 7] = [
    "iteration",
    "lambda_spread",
    "lambda_mean",
    "total_gen",
    "total_demand",
    "max_abs_mismatch",
    "wall_time_s",
];

pub const MESSAGE_HEADER: [&str; 4] = ["round", "sender_id", "p_gd_bar", "w"];

fn metrics_record(m: &RoundMetrics) -> [String; 7] {
    [
        m.iteration.to_string(),
        m.lambda_spread.to_string(),
        m.lambda_mean.to_string(),
        m.total_gen.to_string(),
        m.total_demand.to_string(),
        m.max_abs_mismatch_estimate.to_string(),
        m.wall_time.to_string(),
    ]
}

pub fn write_trace_csv<W: Write>(trace: &SimTrace, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for m in &trace.metrics {
        w.write_record(metrics_record(m))?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a trace CSV written by [`write_trace_csv`].
pub fn read_trace_csv(text: &str) -> csv::Result<Vec<RoundMetrics>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record?;
        let f = |i: usize| record[i].parse::<f64>().unwrap_or(f64::NAN);
        rows.push(RoundMetrics {
            iteration: record[0].parse().unwrap_or(usize::MAX),
            lambda_spread: f(1),
            lambda_mean: f(2),
            total_gen: f(3),
            total_demand: f(4),
            max_abs_mismatch_estimate: f(5),
            wall_time: f(6),
        });
    }
    Ok(rows)
}

/// One published message, as logged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub round: usize,
    pub sender_id: usize,
    pub p_gd_bar: f64,
    pub w: f64,
}

/// Streams every round's messages to CSV.
pub struct MessageLog<W: Write> {
    writer: csv::Writer<W>,
}

impl<W: Write> MessageLog<W> {
    pub fn new(out: W) -> csv::Result<Self> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(MESSAGE_HEADER)?;
        Ok(Self { writer })
    }

    pub fn write_round<T: Real>(&mut self, round: usize, messages: &[NeighborMessage<T>]) -> csv::Result<()> {
        for m in messages {
            self.writer.write_record([
                round.to_string(),
                m.sender_id.to_string(),
                m.p_gd_bar.to_f64_lossy().to_string(),
                m.w.to_f64_lossy().to_string(),
            ])?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> csv::Result<W> {
        self.writer.flush()?;
        self.writer.into_inner().map_err(|e| e.into_error().into())
    }
}

pub fn read_messages_csv(text: &str) -> csv::Result<Vec<MessageRecord>> {
    csv::Reader::from_reader(text.as_bytes()).deserialize().collect()
}

pub fn snapshots_json(snapshots: &[Snapshot]) -> String {
    serde_json::to_string_pretty(snapshots).expect("snapshots serialize")
}
