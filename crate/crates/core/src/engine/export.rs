//! Trace CSV reading and writing.

use std::io::Write;

use super::run::{RunTrace, TraceRow};
use crate::error::{NdgdError, Result};
use crate::fmt17;

const FIXED_COLUMNS: [&str; 6] = ["k", "consensus_error", "grad_q_norm", "q_value", "grad_sum_norm", "lmin_hess_sum"];

pub fn trace_header(m: usize) -> String {
    let mut cols: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    cols.extend((0..m).map(|i| format!("dist_agent_{i}")));
    cols.join(",")
}

pub fn write_trace_csv<W: Write>(trace: &RunTrace, out: &mut W) -> Result<()> {
    writeln!(out, "{}", trace_header(trace.final_point.m()))?;
    for r in &trace.rows {
        let mut line = r.k.to_string();
        for v in [r.consensus_error, r.grad_q_norm, r.q_value, r.grad_sum_norm, r.lmin_hess_sum].iter().chain(&r.dist) {
            line.push(',');
            line.push_str(&fmt17(*v));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn trace_csv_string(trace: &RunTrace) -> String {
    let mut buf = Vec::new();
    write_trace_csv(trace, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

/// Parses a trace written by [`write_trace_csv`].
pub fn read_trace_csv(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| NdgdError::Parameter("empty trace".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < FIXED_COLUMNS.len() || cols[..FIXED_COLUMNS.len()] != FIXED_COLUMNS {
        return Err(NdgdError::Parameter(format!("unexpected trace header {header:?}")));
    }
    let m = cols.len() - FIXED_COLUMNS.len();
    if trace_header(m) != header {
        return Err(NdgdError::Parameter(format!("unexpected trace header {header:?}")));
    }
    let bad = |ln: usize, what: &str| NdgdError::Parameter(format!("trace line {}: {what}", ln + 2));
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(ln, l)| {
            let fields: Vec<&str> = l.split(',').collect();
            if fields.len() != cols.len() {
                return Err(bad(ln, "wrong number of fields"));
            }
            let k = fields[0].parse::<usize>().map_err(|_| bad(ln, "bad iteration index"))?;
            let vals = fields[1..]
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| bad(ln, "bad number")))
                .collect::<Result<Vec<f64>>>()?;
            Ok(TraceRow {
                k,
                consensus_error: vals[0],
                grad_q_norm: vals[1],
                q_value: vals[2],
                grad_sum_norm: vals[3],
                lmin_hess_sum: vals[4],
                dist: vals[5..].to_vec(),
            })
        })
        .collect()
}
