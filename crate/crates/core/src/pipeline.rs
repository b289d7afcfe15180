//! Batch analysis of a corpus: configuration, per-instance analysis and the
//! contingency summary.

use std::collections::BTreeMap;
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::behavior::{self, BehaviorVerdict};
use crate::callgraph::{delegation_check, extract_static_callees, CallGraph, DelegationReport};
use crate::corpus::{BytecodeInstance, DetectionRecord};
use crate::disasm::disassemble;
use crate::error::{Error, Result};
use crate::hash::CodeHash;
use crate::sighash::{self, SelectorSet, DEFAULT_THRESHOLD, RELAXED_THRESHOLD};
use crate::symexec::{explore_with, ExplorationLimits, FeasibilityOracle, OracleRegistry, DEFAULT_ORACLE};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub timeout_secs: u64,
    pub max_path_length: usize,
    pub max_paths: usize,
    pub max_steps_per_path: usize,
    pub sig_thresholds: Vec<usize>,
    /// Selector set file for the signature check; ERC-20 when absent.
    pub selectors: Option<PathBuf>,
    /// Worker threads; `None` uses one per core.
    pub workers: Option<usize>,
    pub out: PathBuf,
    pub oracle: String,
    /// Only analyze instances with at least this many transactions.
    pub active_min_tx: Option<u64>,
    pub busy_min_tx: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let limits = ExplorationLimits::default();
        RunConfig {
            timeout_secs: limits.timeout.as_secs(),
            max_path_length: limits.max_path_length,
            max_paths: limits.max_paths,
            max_steps_per_path: limits.max_steps_per_path,
            sig_thresholds: vec![DEFAULT_THRESHOLD, RELAXED_THRESHOLD],
            selectors: None,
            workers: None,
            out: PathBuf::from("out"),
            oracle: DEFAULT_ORACLE.to_string(),
            active_min_tx: None,
            busy_min_tx: crate::corpus::DEFAULT_BUSY_MIN_TX,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.sig_thresholds.is_empty() {
            return bad("at least one signature threshold is required");
        }
        if self.sig_thresholds.contains(&0) {
            return bad("signature thresholds must be positive");
        }
        if self.max_paths == 0 || self.max_steps_per_path == 0 {
            return bad("path and step limits must be positive");
        }
        if self.workers == Some(0) {
            return bad("worker count must be positive");
        }
        Ok(())
    }

    pub fn limits(&self) -> ExplorationLimits {
        ExplorationLimits {
            timeout: Duration::from_secs(self.timeout_secs),
            max_path_length: self.max_path_length,
            max_paths: self.max_paths,
            max_steps_per_path: self.max_steps_per_path,
        }
    }

    /// Thresholds in configured order without repeats.
    pub fn thresholds(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for t in &self.sig_thresholds {
            if !out.contains(t) {
                out.push(*t);
            }
        }
        out
    }

    /// The threshold used where a single signature verdict is needed.
    pub fn primary_threshold(&self) -> usize {
        self.sig_thresholds.first().copied().unwrap_or(DEFAULT_THRESHOLD)
    }

    pub fn selector_set(&self) -> Result<SelectorSet> {
        match &self.selectors {
            Some(p) => SelectorSet::load(p),
            None => Ok(SelectorSet::erc20()),
        }
    }
}

/// Everything an analysis needs besides the instance itself.
pub struct Analyzer {
    pub limits: ExplorationLimits,
    pub thresholds: Vec<usize>,
    pub selectors: SelectorSet,
    pub erc777: SelectorSet,
    pub oracle: Arc<dyn FeasibilityOracle>,
}

impl Analyzer {
    pub fn from_config(config: &RunConfig, registry: &OracleRegistry) -> Result<Self> {
        config.validate()?;
        Ok(Analyzer {
            limits: config.limits(),
            thresholds: config.thresholds(),
            selectors: config.selector_set()?,
            erc777: SelectorSet::erc777(),
            oracle: registry.get(&config.oracle)?,
        })
    }

    fn negative(&self, code_hash: CodeHash, reason: String) -> DetectionRecord {
        DetectionRecord {
            code_hash,
            sig: self
                .thresholds
                .iter()
                .map(|&t| sighash::verdict_from_constants(&Default::default(), &self.selectors, t))
                .collect(),
            behavior: BehaviorVerdict {
                detected: false,
                witness: None,
                candidates_checked: 0,
                coverage: 0.0,
                timed_out: false,
            },
            erc777_hits: 0,
            analysis_error: Some(reason),
        }
    }

    fn analyze_inner(&self, inst: &BytecodeInstance) -> DetectionRecord {
        let program = disassemble(&inst.code);
        let (behavior, report) = behavior::detect(&program, &self.limits, self.oracle.as_ref());
        if report.decode_error {
            return self.negative(inst.code_hash, "decode_error".into());
        }
        let constants = sighash::extract_push4(&program);
        DetectionRecord {
            code_hash: inst.code_hash,
            sig: self
                .thresholds
                .iter()
                .map(|&t| sighash::verdict_from_constants(&constants, &self.selectors, t))
                .collect(),
            behavior,
            erc777_hits: constants.intersection(&self.erc777.selectors).count(),
            analysis_error: None,
        }
    }

    /// Never fails: problems become negative records with `analysis_error`.
    pub fn analyze(&self, inst: &BytecodeInstance) -> DetectionRecord {
        catch_unwind(AssertUnwindSafe(|| self.analyze_inner(inst))).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| e.downcast_ref::<String>().cloned())
                .unwrap_or_default();
            self.negative(inst.code_hash, format!("internal: {msg}"))
        })
    }
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Config(e.to_string()))
}

/// One record per instance, in corpus order.
pub fn run_detect(
    instances: &[BytecodeInstance],
    analyzer: &Analyzer,
    workers: Option<usize>,
) -> Result<Vec<DetectionRecord>> {
    let pool = pool(workers)?;
    Ok(pool.install(|| instances.par_iter().map(|i| analyzer.analyze(i)).collect()))
}

/// Builds the call graph for a corpus and runs the delegation check.
pub fn run_callgraph(
    instances: &[BytecodeInstance],
    records: &[DetectionRecord],
    analyzer: &Analyzer,
    sig_threshold: usize,
    workers: Option<usize>,
) -> Result<(CallGraph, DelegationReport)> {
    let pool = pool(workers)?;
    let edges: Vec<_> = pool.install(|| {
        instances
            .par_iter()
            .map(|i| {
                let program = disassemble(&i.code);
                let report = explore_with(&program, &analyzer.limits, analyzer.oracle.as_ref());
                extract_static_callees(&program, &report)
            })
            .collect()
    });
    let mut graph = CallGraph::new();
    for (inst, e) in instances.iter().zip(edges) {
        graph.add_instance(inst.code_hash, inst.addresses.iter().copied());
        graph.add_edges(e);
    }
    let by_hash: BTreeMap<CodeHash, DetectionRecord> = records.iter().map(|r| (r.code_hash, r.clone())).collect();
    let report = delegation_check(&graph, &by_hash, sig_threshold);
    Ok((graph, report))
}

/// Behav x Sig counts at one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Contingency {
    pub threshold: usize,
    pub both: usize,
    pub behav_only: usize,
    pub sig_only: usize,
    pub neither: usize,
}

impl Contingency {
    pub fn total(&self) -> usize {
        self.both + self.behav_only + self.sig_only + self.neither
    }

    pub fn sig_detected(&self) -> usize {
        self.both + self.sig_only
    }

    pub fn behav_detected(&self) -> usize {
        self.both + self.behav_only
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub instances: usize,
    pub analysis_errors: usize,
    pub timed_out: usize,
    pub tables: Vec<Contingency>,
    pub mean_coverage: f64,
    pub median_coverage: f64,
}

fn median(sorted: &[f64]) -> f64 {
    match sorted.len() {
        0 => 0.0,
        n if n % 2 == 1 => sorted[n / 2],
        n => (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0,
    }
}

/// Coverage statistics ignore records with an analysis error.
pub fn summarize(records: &[DetectionRecord], thresholds: &[usize]) -> Summary {
    let tables = thresholds
        .iter()
        .map(|&t| {
            let mut c = Contingency { threshold: t, both: 0, behav_only: 0, sig_only: 0, neither: 0 };
            for r in records {
                let sig = r.sig_at(t).is_some_and(|s| s.detected);
                match (r.behavior.detected, sig) {
                    (true, true) => c.both += 1,
                    (true, false) => c.behav_only += 1,
                    (false, true) => c.sig_only += 1,
                    (false, false) => c.neither += 1,
                }
            }
            c
        })
        .collect();
    let mut cov: Vec<f64> =
        records.iter().filter(|r| r.analysis_error.is_none()).map(|r| r.behavior.coverage).collect();
    cov.sort_by(f64::total_cmp);
    let mean = if cov.is_empty() { 0.0 } else { cov.iter().sum::<f64>() / cov.len() as f64 };
    Summary {
        instances: records.len(),
        analysis_errors: records.iter().filter(|r| r.analysis_error.is_some()).count(),
        timed_out: records.iter().filter(|r| r.behavior.timed_out).count(),
        tables,
        mean_coverage: mean,
        median_coverage: median(&cov),
    }
}

fn pct(n: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * n as f64 / total as f64
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "instances: {} (analysis errors: {}, timed out: {})",
            self.instances, self.analysis_errors, self.timed_out
        )?;
        writeln!(f, "coverage: mean {:.3}, median {:.3}", self.mean_coverage, self.median_coverage)?;
        for t in &self.tables {
            let n = t.total();
            let cell = |v: usize| format!("{v} ({:.1}%)", pct(v, n));
            writeln!(f)?;
            writeln!(f, "signature threshold {}", t.threshold)?;
            writeln!(f, "{:<10}{:>18}{:>18}{:>18}", "", "Sig", "no Sig", "total")?;
            writeln!(
                f,
                "{:<10}{:>18}{:>18}{:>18}",
                "Behav",
                cell(t.both),
                cell(t.behav_only),
                cell(t.behav_detected())
            )?;
            writeln!(
                f,
                "{:<10}{:>18}{:>18}{:>18}",
                "no Behav",
                cell(t.sig_only),
                cell(t.neither),
                cell(t.sig_only + t.neither)
            )?;
            writeln!(
                f,
                "{:<10}{:>18}{:>18}{:>18}",
                "total",
                cell(t.sig_detected()),
                cell(t.behav_only + t.neither),
                cell(n)
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::Witness;

    fn record(behav: bool, hits: usize, coverage: f64) -> DetectionRecord {
        let set = SelectorSet::erc20();
        let constants = set.selectors.iter().take(hits).copied().collect();
        DetectionRecord {
            code_hash: CodeHash([hits as u8; 32]),
            sig: [5, 3].iter().map(|&t| sighash::verdict_from_constants(&constants, &set, t)).collect(),
            behavior: BehaviorVerdict {
                detected: behav,
                witness: behav.then_some(Witness { sws0_pc: 0, sws1_pc: 1, cge_pc: 0, path_id: 0 }),
                candidates_checked: 1,
                coverage,
                timed_out: false,
            },
            erc777_hits: 0,
            analysis_error: None,
        }
    }

    #[test]
    fn tables_partition_records() {
        let records = [record(true, 6, 0.9), record(false, 4, 0.5), record(false, 0, 0.7), record(true, 1, 0.2)];
        let s = summarize(&records, &[5, 3]);
        assert_eq!(s.tables[0], Contingency { threshold: 5, both: 1, behav_only: 1, sig_only: 0, neither: 2 });
        assert_eq!(s.tables[1], Contingency { threshold: 3, both: 1, behav_only: 1, sig_only: 1, neither: 1 });
        assert!((s.mean_coverage - 0.575).abs() < 1e-12);
        assert!((s.median_coverage - 0.6).abs() < 1e-12);
        let text = s.to_string();
        assert!(text.contains("signature threshold 3"));
        assert!(text.contains("4 (100.0%)"));
    }

    #[test]
    fn config_validation() {
        assert!(RunConfig::default().validate().is_ok());
        let c = RunConfig { sig_thresholds: vec![], ..Default::default() };
        assert!(c.validate().is_err());
        let c = RunConfig { workers: Some(0), ..Default::default() };
        assert!(c.validate().is_err());
        let c = RunConfig { sig_thresholds: vec![5, 3, 5], ..Default::default() };
        assert_eq!(c.thresholds(), vec![5, 3]);
        assert_eq!(RunConfig::default().limits(), ExplorationLimits::default());
    }

    #[test]
    fn analysis_errors_are_negative() {
        let analyzer = Analyzer::from_config(&RunConfig::default(), &OracleRegistry::with_builtins()).unwrap();
        let code = vec![0x0c, 0x00];
        let inst = BytecodeInstance {
            code_hash: CodeHash::of(&code),
            code,
            addresses: vec![],
            tx_count_total: 0,
            per_address_tx: None,
        };
        let r = analyzer.analyze(&inst);
        assert_eq!(r.analysis_error.as_deref(), Some("decode_error"));
        assert!(!r.behavior.detected);
        assert!(r.sig.iter().all(|s| !s.detected));
    }
}
