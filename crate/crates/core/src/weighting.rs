//! Weighted sum of a report and its quantized store key.

use std::fmt;

use crate::constants::ConstantTable;
use crate::error::{Error, Result};
use crate::rappor::ClientReport;

/// Fractional digits kept in a store key.
pub const KEY_DECIMALS: usize = 5;
const KEY_SCALE: f64 = 100_000.0;

/// Quantized weighted-sum key: minimal integer part, '.', five digits.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WeightKey(String);

impl WeightKey {
    /// Rounds half-up to five decimals.
    pub fn quantize(value: f64) -> Self {
        assert!(
            value.is_finite() && value >= 0.0,
            "weighted sum {value} not representable"
        );
        let units = (value * KEY_SCALE + 0.5).floor() as u64;
        WeightKey(format!("{}.{:05}", units / 100_000, units % 100_000))
    }

    /// Accepts only canonical keys, as produced by [`WeightKey::quantize`].
    pub fn parse(text: &str) -> Option<Self> {
        let (int, frac) = text.split_once('.')?;
        let canonical_int = !int.is_empty()
            && int.bytes().all(|b| b.is_ascii_digit())
            && (int == "0" || !int.starts_with('0'));
        let canonical_frac = frac.len() == KEY_DECIMALS && frac.bytes().all(|b| b.is_ascii_digit());
        (canonical_int && canonical_frac).then(|| WeightKey(text.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn to_f64(&self) -> f64 {
        self.0.parse().expect("keys are canonical decimals")
    }
}

impl fmt::Display for WeightKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSum {
    pub value: f64,
    pub key: WeightKey,
}

/// `[n_prr * C(n_prr) + n_irr * C(n_irr)] * V`, with the bracket alone when
/// the cohort is 0.
///
/// Cohorts 0 and 1 therefore always share a key.
pub fn weighted_sum(
    n_prr: u32,
    n_irr: u32,
    cohort: u32,
    table: &ConstantTable,
) -> Result<WeightedSum> {
    let prr_weight = table.constant_for_count(n_prr)?;
    let irr_weight = table.constant_for_count(n_irr)?;
    let bracket = f64::from(n_prr) * prr_weight + f64::from(n_irr) * irr_weight;
    let value = if cohort == 0 {
        bracket
    } else {
        bracket * f64::from(cohort)
    };
    Ok(WeightedSum {
        value,
        key: WeightKey::quantize(value),
    })
}

pub fn weighted_sum_of_report(report: &ClientReport, table: &ConstantTable) -> Result<WeightedSum> {
    for bits in [&report.prr, &report.irr] {
        if bits.width() != table.k() {
            return Err(Error::CountOutOfRange {
                count: bits.width(),
                k: table.k(),
            });
        }
    }
    weighted_sum(
        report.prr.count_ones(),
        report.irr.count_ones(),
        report.cohort,
        table,
    )
}
