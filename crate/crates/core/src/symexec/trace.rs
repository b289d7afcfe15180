//! JSONL dump of explored paths.

use std::io::Write;

use serde::Serialize;

use super::explore::{ExplorationReport, PathResult, Terminal};

#[derive(Debug, Serialize)]
pub struct TraceWrite {
    pub slot: String,
    pub value: String,
    pub seq: usize,
    pub tainted: bool,
    pub pc: usize,
}

#[derive(Debug, Serialize)]
pub struct TraceLine {
    pub path_id: usize,
    pub constraints: Vec<String>,
    pub writes: Vec<TraceWrite>,
    pub terminal: Terminal,
    pub covered_count: usize,
}

impl TraceLine {
    pub fn new(path_id: usize, path: &PathResult) -> Self {
        TraceLine {
            path_id,
            constraints: path.constraints.iter().map(|c| c.term.to_string()).collect(),
            writes: path
                .writes
                .iter()
                .map(|w| TraceWrite {
                    slot: w.address_term.to_string(),
                    value: w.value_term.to_string(),
                    seq: w.seq,
                    tainted: w.tainted,
                    pc: w.pc,
                })
                .collect(),
            terminal: path.terminal,
            covered_count: path.covered.len(),
        }
    }
}

pub fn write_trace(report: &ExplorationReport, out: &mut impl Write) -> std::io::Result<()> {
    for (i, p) in report.paths.iter().enumerate() {
        serde_json::to_writer(&mut *out, &TraceLine::new(i, p))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
