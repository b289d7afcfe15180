use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use tokscan_core::behavior;
use tokscan_core::corpus::{self, Corpus};
use tokscan_core::disasm::{disassemble, parse_hex};
use tokscan_core::pipeline::{self, Analyzer, RunConfig};
use tokscan_core::sighash;
use tokscan_core::symexec::{trace, OracleRegistry, Terminal};

#[derive(Parser)]
#[command(name = "tokscan", version, about = "Detect token systems in EVM runtime bytecode")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the instruction listing of a hex bytecode file.
    Disasm { file: PathBuf },
    /// Print the 4-byte selector of each function signature.
    Selector {
        #[arg(required = true)]
        signatures: Vec<String>,
    },
    /// Explore one bytecode file and report its behavior verdict.
    Explore {
        file: PathBuf,
        /// Write one JSON line per explored path here.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        opts: AnalysisOpts,
    },
    /// Run both detectors over a corpus and write the record store.
    Detect {
        corpus: PathBuf,
        #[command(flatten)]
        opts: AnalysisOpts,
    },
    /// Build the static call graph and run the delegation check.
    Callgraph {
        corpus: PathBuf,
        /// Record store written by `detect`.
        #[arg(long)]
        records: PathBuf,
        #[command(flatten)]
        opts: AnalysisOpts,
    },
    /// Rank token-detected instances by number of deployments.
    Reuse {
        corpus: PathBuf,
        #[arg(long)]
        records: PathBuf,
        #[arg(long, default_value_t = corpus::DEFAULT_BUSY_MIN_TX)]
        busy_min_tx: u64,
    },
}

#[derive(Args)]
struct AnalysisOpts {
    #[arg(long, default_value_t = 60)]
    timeout_secs: u64,
    #[arg(long, default_value_t = 58)]
    max_path_length: usize,
    #[arg(long, default_value_t = 2000)]
    max_paths: usize,
    /// Repeatable; defaults to 5 and 3.
    #[arg(long = "sig-threshold")]
    sig_thresholds: Vec<usize>,
    /// Selector set JSON file used for the signature check.
    #[arg(long)]
    selectors: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Feasibility oracle used to prune branches.
    #[arg(long, default_value = tokscan_core::symexec::DEFAULT_ORACLE)]
    oracle: String,
    /// Only analyze instances with at least this many transactions.
    #[arg(long)]
    active_min_tx: Option<u64>,
}

impl AnalysisOpts {
    fn config(&self) -> RunConfig {
        let mut c = RunConfig {
            timeout_secs: self.timeout_secs,
            max_path_length: self.max_path_length,
            max_paths: self.max_paths,
            selectors: self.selectors.clone(),
            workers: self.workers,
            out: self.out.clone(),
            oracle: self.oracle.clone(),
            active_min_tx: self.active_min_tx,
            ..RunConfig::default()
        };
        if !self.sig_thresholds.is_empty() {
            c.sig_thresholds = self.sig_thresholds.clone();
        }
        c
    }
}

/// Failures the user can fix: exit code 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn require_file(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(UsageError(format!("{}: no such file or directory", path.display())).into());
    }
    Ok(())
}

fn analyzer(config: &RunConfig) -> Result<Analyzer> {
    if let Some(p) = &config.selectors {
        require_file(p)?;
    }
    Analyzer::from_config(config, &OracleRegistry::with_builtins()).map_err(|e| UsageError(e.to_string()).into())
}

fn load_corpus(path: &Path, config: Option<&RunConfig>) -> Result<Corpus> {
    require_file(path)?;
    let mut c = corpus::ingest(path)?;
    if let Some(min) = config.and_then(|c| c.active_min_tx) {
        c.instances = corpus::active_filter(&c.instances, min);
    }
    Ok(c)
}

fn create_out(dir: &Path, name: &str) -> Result<BufWriter<fs::File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn read_code(file: &Path) -> Result<Vec<u8>> {
    require_file(file)?;
    let text = fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    parse_hex(&text).map_err(|e| UsageError(format!("{}: {e}", file.display())).into())
}

fn run(cli: Cli) -> Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Disasm { file } => {
            let program = disassemble(&read_code(&file)?);
            out.write_all(program.listing().as_bytes())?;
        }
        Command::Selector { signatures } => {
            for s in signatures {
                let sel = sighash::selector(&s).map_err(|e| UsageError(e.to_string()))?;
                writeln!(out, "{sel}  {s}")?;
            }
        }
        Command::Explore { file, trace: trace_path, opts } => {
            let config = opts.config();
            let analyzer = analyzer(&config)?;
            let program = disassemble(&read_code(&file)?);
            let (verdict, report) = behavior::detect(&program, &analyzer.limits, analyzer.oracle.as_ref());
            if let Some(p) = trace_path {
                let mut w = BufWriter::new(fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?);
                trace::write_trace(&report, &mut w)?;
                w.flush()?;
            }
            let mut terminals: BTreeMap<String, usize> = BTreeMap::new();
            for p in &report.paths {
                *terminals.entry(format!("{:?}", p.terminal)).or_default() += 1;
            }
            writeln!(out, "instructions: {}", report.instruction_count)?;
            writeln!(out, "paths: {} {:?}", report.paths.len(), terminals)?;
            writeln!(out, "coverage: {:.3}", report.coverage)?;
            if report.decode_error {
                writeln!(out, "decode error")?;
            }
            if report.timed_out || report.paths.iter().any(|p| p.terminal == Terminal::Timeout) {
                writeln!(out, "timed out")?;
            }
            if report.path_budget_exhausted {
                writeln!(out, "path budget exhausted")?;
            }
            writeln!(out, "behavior: {}", serde_json::to_string(&verdict)?)?;
            for t in analyzer.thresholds.iter() {
                let v = sighash::is_token_sig(&program, &analyzer.selectors, *t);
                writeln!(
                    out,
                    "signature (threshold {t}): {} of {} matched, detected={}",
                    v.matched_count,
                    analyzer.selectors.len(),
                    v.detected
                )?;
            }
        }
        Command::Detect { corpus: path, opts } => {
            let config = opts.config();
            let analyzer = analyzer(&config)?;
            let corpus = load_corpus(&path, Some(&config))?;
            let records = pipeline::run_detect(&corpus.instances, &analyzer, config.workers)?;
            let mut w = create_out(&config.out, "records.jsonl")?;
            corpus::write_records(&records, &mut w)?;
            w.flush()?;
            if corpus.skipped > 0 {
                writeln!(out, "skipped inputs: {}", corpus.skipped)?;
            }
            write!(out, "{}", pipeline::summarize(&records, &analyzer.thresholds))?;
        }
        Command::Callgraph { corpus: path, records, opts } => {
            let config = opts.config();
            let analyzer = analyzer(&config)?;
            let corpus = load_corpus(&path, Some(&config))?;
            require_file(&records)?;
            let records = corpus::read_records(&records)?;
            let (graph, report) = pipeline::run_callgraph(
                &corpus.instances,
                &records,
                &analyzer,
                config.primary_threshold(),
                config.workers,
            )?;
            let mut w = create_out(&config.out, "edges.jsonl")?;
            graph.write_jsonl(&mut w)?;
            w.flush()?;
            let scanned = graph.edges().filter(|e| e.source == tokscan_core::callgraph::EdgeSource::Push20Scan).count();
            writeln!(out, "nodes: {}", graph.nodes.len())?;
            writeln!(out, "edges: {} ({} from push20 scan)", graph.edge_count(), scanned)?;
            writeln!(out, "unresolved callee edges: {}", report.unresolved_edges)?;
            writeln!(out, "sig-only instances checked: {}", report.flags.len())?;
            let flagged: Vec<_> = report.flagged().collect();
            writeln!(out, "delegating to a behavior-detected instance: {}", flagged.len())?;
            for h in flagged {
                writeln!(out, "  {h}")?;
            }
        }
        Command::Reuse { corpus: path, records, busy_min_tx } => {
            let corpus = load_corpus(&path, None)?;
            require_file(&records)?;
            let records: BTreeMap<_, _> =
                corpus::read_records(&records)?.into_iter().map(|r| (r.code_hash, r)).collect();
            let rows = corpus::reuse_stats(&corpus.instances, &records, busy_min_tx);
            writeln!(out, "{:<4} {:<66} {:>8} {:>8}", "rank", "code_hash", "total", "busy")?;
            for (i, r) in rows.iter().enumerate() {
                let busy = r.busy_deployments.map_or("unknown".to_string(), |b| b.to_string());
                writeln!(out, "{:<4} {:<66} {:>8} {:>8}", i + 1, r.code_hash.to_string(), r.total_deployments, busy)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
