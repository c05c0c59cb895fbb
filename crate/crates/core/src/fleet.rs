//! Seeded multi-client corpus generation and the report CSV format.

use std::io::{Read, Write};

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rappor::{encode_report, Bitset, ClientReport, CohortAssignment, EncodingParams};

pub const DEFAULT_RATE: f64 = 0.5;
pub const DEFAULT_VALUE_COUNT: usize = 10;

const HEADER_UNLABELED: [&str; 4] = ["client", "cohort", "prr", "irr"];
const LABEL_COLUMN: &str = "true_value";

/// `P(v_i) ∝ exp(-rate * i)` for `i = 1..=n_values`, normalized.
pub fn exponential_distribution(n_values: usize, rate: f64) -> Result<Vec<f64>> {
    if rate.is_nan() || rate <= 0.0 || rate.is_infinite() {
        return Err(Error::NonPositiveRate(rate));
    }
    if n_values == 0 {
        return Err(Error::InvalidFleet("at least one value required".into()));
    }
    let raw: Vec<f64> = (1..=n_values).map(|i| (-rate * i as f64).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// `v1`, `v2`, ... `vN`.
pub fn default_values(n_values: usize) -> Vec<String> {
    (1..=n_values).map(|i| format!("v{i}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FleetConfig {
    pub n_clients: usize,
    pub values: Vec<String>,
    pub distribution: Vec<f64>,
    pub seed: u64,
    pub params: EncodingParams,
}

impl FleetConfig {
    /// Values `v1..vN` drawn with exponentially decaying probability.
    pub fn exponential(
        n_clients: usize,
        n_values: usize,
        rate: f64,
        seed: u64,
        params: EncodingParams,
    ) -> Result<Self> {
        let config = Self {
            n_clients,
            values: default_values(n_values),
            distribution: exponential_distribution(n_values, rate)?,
            seed,
            params,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn single_value(n_clients: usize, value: &str, seed: u64, params: EncodingParams) -> Self {
        Self {
            n_clients,
            values: vec![value.to_owned()],
            distribution: vec![1.0],
            seed,
            params,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.values.is_empty() {
            return Err(Error::InvalidFleet("no values".into()));
        }
        if self.values.len() != self.distribution.len() {
            return Err(Error::InvalidFleet(format!(
                "{} values but {} probabilities",
                self.values.len(),
                self.distribution.len()
            )));
        }
        for (i, value) in self.values.iter().enumerate() {
            crate::store::validate_label(value)?;
            if self.values[..i].contains(value) {
                return Err(Error::InvalidFleet(format!("duplicate value {value:?}")));
            }
        }
        if self
            .distribution
            .iter()
            .any(|&p| p.is_nan() || p < 0.0 || p.is_infinite())
        {
            return Err(Error::InvalidFleet("negative probability".into()));
        }
        let total: f64 = self.distribution.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidFleet(format!("probabilities sum to {total}")));
        }
        Ok(())
    }

    pub fn client_id(&self, index: usize) -> String {
        format!("client-{:x}-{index}", self.seed)
    }
}

/// One labeled report per client. Client `i` draws from a generator keyed by
/// `(seed, i)`, so the result does not depend on evaluation order.
pub fn generate_corpus(config: &FleetConfig) -> Result<Vec<ClientReport>> {
    config.validate()?;
    let picker =
        WeightedIndex::new(&config.distribution).map_err(|e| Error::InvalidFleet(e.to_string()))?;
    (0..config.n_clients)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            let value = &config.values[picker.sample(&mut rng)];
            encode_report(
                &config.client_id(i),
                value,
                &config.params,
                CohortAssignment::KeyedHash,
                &mut rng,
            )
        })
        .collect()
}

/// Writes `client,cohort,prr,irr[,true_value]`. The label column is present
/// when any report is labeled.
pub fn write_csv<W: Write>(reports: &[ClientReport], out: W) -> Result<()> {
    let labeled = reports.iter().any(|r| r.true_value.is_some());
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let mut header = HEADER_UNLABELED.to_vec();
    if labeled {
        header.push(LABEL_COLUMN);
    }
    writer.write_record(&header).map_err(std::io::Error::from)?;
    for report in reports {
        let cohort = report.cohort.to_string();
        let prr = report.prr.to_string();
        let irr = report.irr.to_string();
        let mut row = vec![report.client_id.as_str(), &cohort, &prr, &irr];
        if labeled {
            row.push(report.true_value.as_deref().unwrap_or(""));
        }
        writer.write_record(&row).map_err(std::io::Error::from)?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_error(err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line());
    match err.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::parse(line, format!("{kind:?}")),
    }
}

/// Reads a report CSV, checking widths against `params.k` and cohorts
/// against `params.m`. An empty `true_value` field reads as unlabeled.
pub fn read_csv<R: Read>(input: R, params: &EncodingParams) -> Result<Vec<ClientReport>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut records = reader.records();

    let header = match records.next() {
        Some(record) => record.map_err(csv_error)?,
        None => return Err(Error::parse(1, "missing header")),
    };
    let columns: Vec<&str> = header.iter().collect();
    let labeled = if columns == HEADER_UNLABELED {
        false
    } else if columns.len() == 5 && columns[..4] == HEADER_UNLABELED && columns[4] == LABEL_COLUMN {
        true
    } else {
        return Err(Error::parse(1, format!("unexpected header {columns:?}")));
    };
    let width = if labeled { 5 } else { 4 };

    let mut reports = Vec::new();
    for record in records {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(Error::parse(
                line,
                format!("expected {width} columns, found {}", record.len()),
            ));
        }
        let cohort: u32 = record[1]
            .parse()
            .map_err(|_| Error::parse(line, format!("invalid cohort {:?}", &record[1])))?;
        if cohort >= params.m {
            return Err(Error::parse(
                line,
                format!("cohort {cohort} out of range [0, {})", params.m),
            ));
        }
        let prr = Bitset::parse(params.k, &record[2])
            .map_err(|e| Error::parse(line, format!("prr: {e}")))?;
        let irr = Bitset::parse(params.k, &record[3])
            .map_err(|e| Error::parse(line, format!("irr: {e}")))?;
        let true_value = if labeled && !record[4].is_empty() {
            Some(record[4].to_owned())
        } else {
            None
        };
        reports.push(ClientReport {
            client_id: record[0].to_owned(),
            cohort,
            prr,
            irr,
            true_value,
        });
    }
    Ok(reports)
}
