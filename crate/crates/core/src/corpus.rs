//! Bytecode corpora, detection records and reuse statistics.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::behavior::BehaviorVerdict;
use crate::disasm::parse_hex;
use crate::error::{Error, Result};
use crate::hash::{Address, CodeHash};
use crate::sighash::{SigVerdict, DEFAULT_THRESHOLD};

pub const DEFAULT_ACTIVE_MIN_TX: u64 = 1000;
pub const DEFAULT_BUSY_MIN_TX: u64 = 100;

/// A unique runtime bytecode with every address it was seen at.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BytecodeInstance {
    pub code_hash: CodeHash,
    pub code: Vec<u8>,
    pub addresses: Vec<Address>,
    pub tx_count_total: u64,
    /// Present only when every occurrence carried a transaction count.
    pub per_address_tx: Option<Vec<(Address, u64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub code_hash: CodeHash,
    pub sig: Vec<SigVerdict>,
    pub behavior: BehaviorVerdict,
    pub erc777_hits: usize,
    pub analysis_error: Option<String>,
}

impl DetectionRecord {
    pub fn sig_at(&self, threshold: usize) -> Option<&SigVerdict> {
        self.sig.iter().find(|s| s.threshold == threshold)
    }

    /// Detected by behavior, or by signature at the default threshold.
    pub fn is_token(&self) -> bool {
        self.behavior.detected || self.sig_at(DEFAULT_THRESHOLD).is_some_and(|s| s.detected)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub instances: Vec<BytecodeInstance>,
    /// Lines or files that could not be parsed.
    pub skipped: usize,
}

#[derive(Deserialize)]
struct CorpusLine {
    #[serde(default)]
    address: Option<Address>,
    code: String,
    #[serde(default)]
    tx_count: Option<u64>,
}

struct Entry {
    instance: BytecodeInstance,
    all_counted: bool,
    per_address: Vec<(Address, u64)>,
}

/// Accumulates occurrences, keeping first-seen order of code hashes.
#[derive(Default)]
struct Builder {
    order: Vec<CodeHash>,
    entries: HashMap<CodeHash, Entry>,
    skipped: usize,
}

impl Builder {
    fn add(&mut self, code: Vec<u8>, address: Option<Address>, tx_count: Option<u64>) {
        let hash = CodeHash::of(&code);
        let entry = self.entries.entry(hash).or_insert_with(|| {
            self.order.push(hash);
            Entry {
                instance: BytecodeInstance {
                    code_hash: hash,
                    code,
                    addresses: Vec::new(),
                    tx_count_total: 0,
                    per_address_tx: None,
                },
                all_counted: true,
                per_address: Vec::new(),
            }
        });
        let inst = &mut entry.instance;
        inst.tx_count_total += tx_count.unwrap_or(0);
        match (address, tx_count) {
            (Some(a), Some(n)) => {
                if !inst.addresses.contains(&a) {
                    inst.addresses.push(a);
                }
                entry.per_address.push((a, n));
            }
            (Some(a), None) => {
                if !inst.addresses.contains(&a) {
                    inst.addresses.push(a);
                }
                entry.all_counted = false;
            }
            (None, _) => entry.all_counted = false,
        }
    }

    fn finish(mut self) -> Corpus {
        let instances = self
            .order
            .iter()
            .map(|h| {
                let Entry { mut instance, all_counted, per_address } = self.entries.remove(h).expect("ordered hash");
                if all_counted {
                    instance.per_address_tx = Some(per_address);
                }
                instance
            })
            .collect();
        Corpus { instances, skipped: self.skipped }
    }
}

fn ingest_lines(reader: impl BufRead, path: &Path, b: &mut Builder) -> Result<()> {
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<CorpusLine>(line)
            .ok()
            .and_then(|l| parse_hex(&l.code).ok().map(|code| (code, l.address, l.tx_count)));
        match parsed {
            Some((code, address, tx)) => b.add(code, address, tx),
            None => b.skipped += 1,
        }
    }
    Ok(())
}

/// Reads a JSON-lines file, or a directory of hex files. In a directory,
/// a file stem that parses as an address is used as the address.
pub fn ingest(source: &Path) -> Result<Corpus> {
    let mut b = Builder::default();
    let meta = fs::metadata(source).map_err(|e| Error::io(source, e))?;
    if meta.is_dir() {
        let mut files: Vec<_> = fs::read_dir(source)
            .map_err(|e| Error::io(source, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        for file in files {
            let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
            let address = file.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse().ok());
            match parse_hex(&text) {
                Ok(code) => b.add(code, address, None),
                Err(_) => b.skipped += 1,
            }
        }
    } else {
        let f = fs::File::open(source).map_err(|e| Error::io(source, e))?;
        ingest_lines(BufReader::new(f), source, &mut b)?;
    }
    Ok(b.finish())
}

pub fn active_filter(instances: &[BytecodeInstance], min_tx: u64) -> Vec<BytecodeInstance> {
    instances.iter().filter(|i| i.tx_count_total >= min_tx).cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReuseRow {
    pub code_hash: CodeHash,
    pub total_deployments: usize,
    /// `None` when per-address transaction counts are missing.
    pub busy_deployments: Option<usize>,
}

/// Deployment counts for token-detected instances, most deployed first.
pub fn reuse_stats(
    instances: &[BytecodeInstance],
    records: &BTreeMap<CodeHash, DetectionRecord>,
    busy_tx: u64,
) -> Vec<ReuseRow> {
    let mut rows: Vec<ReuseRow> = instances
        .iter()
        .filter(|i| records.get(&i.code_hash).is_some_and(DetectionRecord::is_token))
        .map(|i| ReuseRow {
            code_hash: i.code_hash,
            total_deployments: i.addresses.len(),
            busy_deployments: i.per_address_tx.as_ref().map(|p| p.iter().filter(|(_, n)| *n > busy_tx).count()),
        })
        .collect();
    rows.sort_by(|a, b| b.total_deployments.cmp(&a.total_deployments).then(a.code_hash.cmp(&b.code_hash)));
    rows
}

pub fn write_records(records: &[DetectionRecord], out: &mut impl Write) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<DetectionRecord>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
