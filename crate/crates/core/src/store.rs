//! Central aggregate: quantized weighted sums with per-label counts.
//!
//! Raw reports are never retained. The on-disk form is line oriented:
//!
//! ```text
//! ARA-STORE v1 k=32 params=1f0c...e2 total=3
//! 25.28652\tv1:2,v2:1
//! ```
//!
//! Keys are sorted, labels within a line are sorted, lines end in LF.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::constants::ConstantTable;
use crate::error::{Error, Result};
use crate::rappor::{ClientReport, EncodingParams};
use crate::weighting::{weighted_sum_of_report, WeightKey};

const MAGIC: &str = "ARA-STORE";
const VERSION: &str = "v1";

/// Labels must survive the line format unescaped.
pub fn validate_label(label: &str) -> Result<()> {
    if label.is_empty() || label.contains([':', ',', '\t', '\n', '\r']) {
        return Err(Error::InvalidLabel(label.to_owned()));
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StoreEntry {
    pub counts: BTreeMap<String, u64>,
}

impl StoreEntry {
    /// Most frequent label; ties go to the lexicographically smallest.
    pub fn modal_label(&self) -> Option<&str> {
        let mut best: Option<(&str, u64)> = None;
        for (label, &count) in &self.counts {
            // BTreeMap iterates in ascending order, so strict > keeps the smallest tie.
            if best.is_none_or(|(_, c)| count > c) {
                best = Some((label, count));
            }
        }
        best.map(|(label, _)| label)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CentralStore {
    k: u32,
    params_fingerprint: String,
    entries: BTreeMap<WeightKey, StoreEntry>,
    total_training_reports: u64,
}

impl CentralStore {
    pub fn new(params: &EncodingParams) -> Self {
        Self {
            k: params.k,
            params_fingerprint: params.fingerprint(),
            entries: BTreeMap::new(),
            total_training_reports: 0,
        }
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn params_fingerprint(&self) -> &str {
        &self.params_fingerprint
    }

    pub fn total_training_reports(&self) -> u64 {
        self.total_training_reports
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&WeightKey, &StoreEntry)> {
        self.entries.iter()
    }

    /// Adds one labeled report at its weighted-sum key.
    pub fn ingest(&mut self, report: &ClientReport, table: &ConstantTable) -> Result<()> {
        let label = report
            .true_value
            .as_deref()
            .ok_or_else(|| Error::UnlabeledReport(report.client_id.clone()))?;
        validate_label(label)?;
        let key = weighted_sum_of_report(report, table)?.key;
        self.add_count(key, label, 1);
        Ok(())
    }

    pub fn ingest_all<'a>(
        &mut self,
        reports: impl IntoIterator<Item = &'a ClientReport>,
        table: &ConstantTable,
    ) -> Result<()> {
        reports.into_iter().try_for_each(|r| self.ingest(r, table))
    }

    fn add_count(&mut self, key: WeightKey, label: &str, count: u64) {
        *self
            .entries
            .entry(key)
            .or_default()
            .counts
            .entry(label.to_owned())
            .or_insert(0) += count;
        self.total_training_reports += count;
    }

    pub fn lookup(&self, key: &WeightKey) -> Option<&StoreEntry> {
        self.entries.get(key)
    }

    /// Folds a partial store built with the same parameters into this one.
    /// Count addition makes the merge associative and commutative.
    pub fn merge(&mut self, other: CentralStore) -> Result<()> {
        if other.k != self.k || other.params_fingerprint != self.params_fingerprint {
            return Err(Error::IncompatibleStores);
        }
        for (key, entry) in other.entries {
            for (label, count) in entry.counts {
                self.add_count(key.clone(), &label, count);
            }
        }
        Ok(())
    }

    pub fn save<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "{MAGIC} {VERSION} k={} params={} total={}",
            self.k, self.params_fingerprint, self.total_training_reports
        )?;
        for (key, entry) in &self.entries {
            let counts: Vec<String> = entry
                .counts
                .iter()
                .map(|(label, count)| format!("{label}:{count}"))
                .collect();
            writeln!(out, "{key}\t{}", counts.join(","))?;
        }
        out.flush()?;
        Ok(())
    }

    /// Loads a store and checks it was built with `params`.
    pub fn load<R: BufRead>(input: R, params: &EncodingParams) -> Result<Self> {
        let store = Self::load_unchecked(input)?;
        let expected = params.fingerprint();
        if store.params_fingerprint != expected || store.k != params.k {
            return Err(Error::FingerprintMismatch {
                expected,
                found: store.params_fingerprint,
            });
        }
        Ok(store)
    }

    /// Loads a store without comparing its fingerprint to any session.
    pub fn load_unchecked<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = match lines.next() {
            Some(line) => line?,
            None => return Err(Error::parse(1, "missing header")),
        };
        let (k, params_fingerprint, declared_total) = parse_header(&header)?;

        let mut store = CentralStore {
            k,
            params_fingerprint,
            entries: BTreeMap::new(),
            total_training_reports: 0,
        };
        for (idx, line) in lines.enumerate() {
            let line_no = idx as u64 + 2;
            let line = line?;
            let (key_text, counts_text) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(line_no, "expected <key>\\t<counts>"))?;
            let key = WeightKey::parse(key_text)
                .ok_or_else(|| Error::parse(line_no, format!("malformed key {key_text:?}")))?;
            if store.entries.contains_key(&key) {
                return Err(Error::parse(line_no, format!("duplicate key {key}")));
            }
            let mut entry = StoreEntry::default();
            for item in counts_text.split(',') {
                let (label, count) = item
                    .rsplit_once(':')
                    .ok_or_else(|| Error::parse(line_no, format!("malformed count {item:?}")))?;
                validate_label(label).map_err(|e| Error::parse(line_no, e.to_string()))?;
                let count: u64 = count
                    .parse()
                    .ok()
                    .filter(|&c| c >= 1)
                    .ok_or_else(|| Error::parse(line_no, format!("invalid count {count:?}")))?;
                if entry.counts.insert(label.to_owned(), count).is_some() {
                    return Err(Error::parse(line_no, format!("duplicate label {label:?}")));
                }
                store.total_training_reports += count;
            }
            store.entries.insert(key, entry);
        }
        if store.total_training_reports != declared_total {
            return Err(Error::parse(
                1,
                format!(
                    "header total {declared_total} but entries sum to {}",
                    store.total_training_reports
                ),
            ));
        }
        Ok(store)
    }
}

fn parse_header(header: &str) -> Result<(u32, String, u64)> {
    let bad = |msg: &str| Error::parse(1, format!("{msg} in header {header:?}"));
    let fields: Vec<&str> = header.split(' ').collect();
    if fields.len() != 5 || fields[0] != MAGIC {
        return Err(bad("unrecognized layout"));
    }
    if fields[1] != VERSION {
        return Err(bad("unsupported version"));
    }
    let k = fields[2]
        .strip_prefix("k=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("invalid k"))?;
    let fingerprint = fields[3]
        .strip_prefix("params=")
        .filter(|v| v.len() == 16 && v.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')))
        .ok_or_else(|| bad("invalid params fingerprint"))?;
    let total = fields[4]
        .strip_prefix("total=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("invalid total"))?;
    Ok((k, fingerprint.to_owned(), total))
}
