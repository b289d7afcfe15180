//! Static call targets and the instance-level call graph.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::DetectionRecord;
use crate::disasm::{opcode, Program};
use crate::hash::{Address, CodeHash};
use crate::symexec::{CallKind, ExplorationReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeSource {
    ConcreteArg,
    Push20Scan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CallEdge {
    pub caller: CodeHash,
    pub callee: Address,
    pub kind: CallKind,
    pub pc: usize,
    pub source: EdgeSource,
}

fn low_address(bytes: [u8; 32]) -> Address {
    let mut a = [0u8; 20];
    a.copy_from_slice(&bytes[12..]);
    Address(a)
}

/// Constant callees observed during exploration, then PUSH20 immediates not
/// already covered by one of those.
///
/// A scanned address is attributed to the next call-family instruction in
/// program order; addresses with no later call instruction are dropped.
pub fn extract_static_callees(program: &Program, report: &ExplorationReport) -> Vec<CallEdge> {
    let caller = CodeHash(program.code_hash());
    let mut concrete = BTreeSet::new();
    for site in report.paths.iter().flat_map(|p| &p.call_sites) {
        if let Some(v) = site.callee.as_const() {
            concrete.insert(CallEdge {
                caller,
                callee: low_address(v.to_be_bytes::<32>()),
                kind: site.kind,
                pc: site.pc,
                source: EdgeSource::ConcreteArg,
            });
        }
    }
    let covered: BTreeSet<Address> = concrete.iter().map(|e| e.callee).collect();
    let mut scanned = BTreeSet::new();
    let ins = program.instructions();
    for (i, push) in ins.iter().enumerate() {
        if push.opcode != opcode::PUSH20 || push.immediate.len() != 20 {
            continue;
        }
        let mut addr = [0u8; 20];
        addr.copy_from_slice(&push.immediate);
        let addr = Address(addr);
        if covered.contains(&addr) {
            continue;
        }
        let kind = ins[i + 1..].iter().find_map(|n| CallKind::from_opcode(n.opcode));
        if let Some(kind) = kind {
            scanned.insert(CallEdge { caller, callee: addr, kind, pc: push.offset, source: EdgeSource::Push20Scan });
        }
    }
    concrete.into_iter().chain(scanned).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CallGraph {
    pub nodes: BTreeSet<CodeHash>,
    pub address_index: BTreeMap<Address, CodeHash>,
    edges: BTreeMap<(CodeHash, Address, CallKind, usize), CallEdge>,
}

impl CallGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_instance(&mut self, hash: CodeHash, addresses: impl IntoIterator<Item = Address>) {
        self.nodes.insert(hash);
        for a in addresses {
            self.address_index.insert(a, hash);
        }
    }

    /// Adds edges, registering their callers as nodes. The first edge seen
    /// for a (caller, callee, kind, pc) key is kept.
    pub fn add_edges(&mut self, edges: impl IntoIterator<Item = CallEdge>) {
        for e in edges {
            self.nodes.insert(e.caller);
            self.edges.entry((e.caller, e.callee, e.kind, e.pc)).or_insert(e);
        }
    }

    pub fn edges(&self) -> impl Iterator<Item = &CallEdge> {
        self.edges.values()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn outgoing(&self, caller: CodeHash) -> impl Iterator<Item = &CallEdge> {
        self.edges.values().filter(move |e| e.caller == caller)
    }

    pub fn resolve(&self, callee: &Address) -> Option<CodeHash> {
        self.address_index.get(callee).copied()
    }

    pub fn write_jsonl(&self, out: &mut impl Write) -> std::io::Result<()> {
        for e in self.edges() {
            serde_json::to_writer(&mut *out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DelegationReport {
    /// One entry per signature-positive, behavior-negative instance.
    pub flags: BTreeMap<CodeHash, bool>,
    /// Edges whose callee has no known code.
    pub unresolved_edges: usize,
}

impl DelegationReport {
    pub fn flagged(&self) -> impl Iterator<Item = &CodeHash> {
        self.flags.iter().filter(|(_, f)| **f).map(|(h, _)| h)
    }
}

/// Flags signature-only instances that call into a behavior-detected one.
pub fn delegation_check(
    graph: &CallGraph,
    records: &BTreeMap<CodeHash, DetectionRecord>,
    sig_threshold: usize,
) -> DelegationReport {
    let mut report = DelegationReport {
        unresolved_edges: graph.edges().filter(|e| graph.resolve(&e.callee).is_none()).count(),
        ..Default::default()
    };
    for (hash, record) in records {
        let sig = record.sig_at(sig_threshold).is_some_and(|s| s.detected);
        if !sig || record.behavior.detected {
            continue;
        }
        let flagged = graph
            .outgoing(*hash)
            .any(|e| graph.resolve(&e.callee).and_then(|h| records.get(&h)).is_some_and(|r| r.behavior.detected));
        report.flags.insert(*hash, flagged);
    }
    report
}
