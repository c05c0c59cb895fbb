//! Matching unlabeled batches against the central store.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use rayon::prelude::*;

use crate::constants::{build_constant_table, ConstantTable};
use crate::error::{Error, Result};
use crate::fleet::{generate_corpus, FleetConfig};
use crate::rappor::ClientReport;
use crate::store::CentralStore;
use crate::weighting::weighted_sum_of_report;

pub const RESULTS_HEADER: &str =
    "test,major_value,sample_size,achievement_pct,ground_truth,correct";
pub const SIZE_SERIES_FILE: &str = "achievement_vs_size.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub sample_size: usize,
    pub matched: usize,
    /// Credited matches per label; labels with no credit are absent.
    pub credits: BTreeMap<String, u64>,
    /// Most credited label, or `""` when nothing matched.
    pub major_value: String,
    pub achievement_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub test_no: usize,
    pub major_true_value: String,
    pub sample_size: usize,
    pub achievement_pct: f64,
    pub ground_truth_major: String,
    pub detected_correctly: bool,
}

/// Label of the store entry at the report's key: the modal label, ties to
/// the lexicographically smallest. `None` when the key is absent.
pub fn match_report<'s>(
    report: &ClientReport,
    store: &'s CentralStore,
    table: &ConstantTable,
) -> Result<Option<&'s str>> {
    let key = weighted_sum_of_report(report, table)?.key;
    Ok(store.lookup(&key).and_then(|entry| entry.modal_label()))
}

/// Largest count wins; ties go to the lexicographically smallest label.
fn argmax_label(counts: &BTreeMap<String, u64>) -> Option<&str> {
    counts
        .iter()
        .fold(
            None,
            |best: Option<(&str, u64)>, (label, &count)| match best {
                Some((_, c)) if c >= count => best,
                _ => Some((label, count)),
            },
        )
        .map(|(label, _)| label)
}

pub fn analyze_batch(
    reports: &[ClientReport],
    store: &CentralStore,
    table: &ConstantTable,
) -> Result<AnalysisReport> {
    if reports.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut credits: BTreeMap<String, u64> = BTreeMap::new();
    let mut matched = 0;
    for report in reports {
        if let Some(label) = match_report(report, store, table)? {
            matched += 1;
            *credits.entry(label.to_owned()).or_insert(0) += 1;
        }
    }
    let major_value = argmax_label(&credits).unwrap_or_default().to_owned();
    let major_credits = credits.get(&major_value).copied().unwrap_or(0);
    Ok(AnalysisReport {
        sample_size: reports.len(),
        matched,
        achievement_pct: 100.0 * major_credits as f64 / reports.len() as f64,
        credits,
        major_value,
    })
}

/// Most frequent true value among labeled reports; `""` if none are labeled.
pub fn ground_truth_major<'a>(reports: impl IntoIterator<Item = &'a ClientReport>) -> String {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for label in reports.into_iter().filter_map(|r| r.true_value.as_deref()) {
        *counts.entry(label.to_owned()).or_insert(0) += 1;
    }
    argmax_label(&counts).unwrap_or_default().to_owned()
}

/// A store built from a training fleet plus a test corpus to draw batches from.
pub struct Experiment {
    pub table: ConstantTable,
    pub store: CentralStore,
    pub test_corpus: Vec<ClientReport>,
    test_seed: u64,
}

impl Experiment {
    pub fn prepare(train: &FleetConfig, test: &FleetConfig) -> Result<Self> {
        if train.params != test.params {
            return Err(Error::InvalidFleet(
                "training and test fleets use different encoding parameters".into(),
            ));
        }
        let table = build_constant_table(train.params.k)?;
        let mut store = CentralStore::new(&train.params);
        store.ingest_all(&generate_corpus(train)?, &table)?;
        Ok(Self {
            table,
            store,
            test_corpus: generate_corpus(test)?,
            test_seed: test.seed,
        })
    }

    /// Runs tests numbered `first_test_no..first_test_no + n_tests`. Each
    /// test samples `batch_size` reports without replacement using a
    /// generator derived from the test seed and the test number.
    pub fn run(
        &self,
        n_tests: usize,
        batch_size: usize,
        first_test_no: usize,
    ) -> Result<Vec<ExperimentRow>> {
        if batch_size == 0 {
            return Err(Error::EmptyBatch);
        }
        if batch_size > self.test_corpus.len() {
            return Err(Error::SampleTooLarge {
                size: batch_size,
                available: self.test_corpus.len(),
            });
        }
        (first_test_no..first_test_no + n_tests)
            .into_par_iter()
            .map(|test_no| {
                let mut rng = crate::derived_rng("ara/batch", self.test_seed, test_no as u64);
                let picked: Vec<&ClientReport> =
                    index::sample(&mut rng, self.test_corpus.len(), batch_size)
                        .into_iter()
                        .map(|i| &self.test_corpus[i])
                        .collect();
                let truth = ground_truth_major(picked.iter().copied());
                let batch: Vec<ClientReport> =
                    picked.into_iter().map(|r| r.clone().unlabeled()).collect();
                let report = analyze_batch(&batch, &self.store, &self.table)?;
                Ok(ExperimentRow {
                    test_no,
                    detected_correctly: report.major_value == truth,
                    major_true_value: report.major_value,
                    sample_size: batch_size,
                    achievement_pct: report.achievement_pct,
                    ground_truth_major: truth,
                })
            })
            .collect()
    }

    /// `n_tests` per batch size, numbered consecutively from 1.
    pub fn run_sizes(&self, n_tests: usize, batch_sizes: &[usize]) -> Result<Vec<ExperimentRow>> {
        let mut rows = Vec::with_capacity(n_tests * batch_sizes.len());
        for (i, &size) in batch_sizes.iter().enumerate() {
            rows.extend(self.run(n_tests, size, 1 + i * n_tests)?);
        }
        Ok(rows)
    }
}

/// Builds the store from `train` once, then runs `n_tests` batches of
/// `batch_size` drawn from the `test` corpus.
pub fn run_experiment(
    train: &FleetConfig,
    test: &FleetConfig,
    n_tests: usize,
    batch_size: usize,
) -> Result<Vec<ExperimentRow>> {
    Experiment::prepare(train, test)?.run(n_tests, batch_size, 1)
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // 1-based ranks; ties share the mean of their positions.
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties. `None` when
/// either series is constant or the lengths differ.
pub fn rank_correlation(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = rx.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mean) * (b - mean);
        sxx += (a - mean) * (a - mean);
        syy += (b - mean) * (b - mean);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

pub fn achievement_size_correlation(rows: &[ExperimentRow]) -> Option<f64> {
    let sizes: Vec<f64> = rows.iter().map(|r| r.sample_size as f64).collect();
    let achievements: Vec<f64> = rows.iter().map(|r| r.achievement_pct).collect();
    rank_correlation(&sizes, &achievements)
}

pub fn write_results<W: Write>(rows: &[ExperimentRow], mut out: W) -> Result<()> {
    writeln!(out, "{RESULTS_HEADER}")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            row.test_no,
            row.major_true_value,
            row.sample_size,
            row.achievement_pct,
            row.ground_truth_major,
            row.detected_correctly
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_size_series<W: Write>(rows: &[ExperimentRow], mut out: W) -> Result<()> {
    writeln!(out, "sample_size,achievement_pct")?;
    for row in rows {
        writeln!(out, "{},{}", row.sample_size, row.achievement_pct)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes the results table to `path` and the size/achievement series to
/// `achievement_vs_size.csv` in the same directory.
pub fn write_results_csv(rows: &[ExperimentRow], path: &Path) -> Result<()> {
    write_results(rows, BufWriter::new(File::create(path)?))?;
    let series = path
        .parent()
        .unwrap_or_else(|| Path::new(""))
        .join(SIZE_SERIES_FILE);
    write_size_series(rows, BufWriter::new(File::create(series)?))
}

pub fn read_results<R: BufRead>(input: R) -> Result<Vec<ExperimentRow>> {
    let mut lines = input.lines();
    let header = lines.next().transpose()?;
    if header.as_deref() != Some(RESULTS_HEADER) {
        return Err(Error::parse(1, "missing results header"));
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx as u64 + 2;
        let line = line?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::parse(
                line_no,
                format!("expected 6 fields, found {}", fields.len()),
            ));
        }
        let bad = |what: &str| Error::parse(line_no, format!("invalid {what}"));
        rows.push(ExperimentRow {
            test_no: fields[0].parse().map_err(|_| bad("test number"))?,
            major_true_value: fields[1].to_owned(),
            sample_size: fields[2].parse().map_err(|_| bad("sample size"))?,
            achievement_pct: fields[3].parse().map_err(|_| bad("achievement"))?,
            ground_truth_major: fields[4].to_owned(),
            detected_correctly: fields[5].parse().map_err(|_| bad("correct flag"))?,
        });
    }
    Ok(rows)
}
