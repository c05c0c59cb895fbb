//! Per-on-bit-count constant weights and the TF-IDF helpers around them.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rappor::ClientReport;

/// Published constants for 32-bit strings, on-bit counts 1 through 17.
#[allow(clippy::approx_constant)]
pub const PUBLISHED_TABLE_32: [(u32, f64); 17] = [
    (1, 1.20201279),
    (2, 1.0927389),
    (3, 0.993399),
    (4, 0.90309),
    (5, 0.80618),
    (6, 0.727),
    (7, 0.660052),
    (8, 0.60206),
    (9, 0.550907),
    (10, 0.50515),
    (11, 0.4637573),
    (12, 0.425969),
    (13, 0.3912066),
    (14, 0.3590219),
    (15, 0.329059),
    (16, 0.30103),
    (17, 0.274701),
];

/// Ratio between consecutive weights below the log anchor at c = 4.
pub const LOW_COUNT_RATIO: f64 = 1.1;

/// Sample sizes used when auditing the constant rule.
pub const DEFAULT_AUDIT_SIZES: [usize; 5] = [100, 1000, 10_000, 20_000, 25_000];

/// Weight per on-bit count, for counts 0 through k.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantTable {
    k: u32,
    weights: Vec<f64>,
}

impl ConstantTable {
    /// `weights[c] = log10(k / c)` for `c >= 4`; below that each weight is
    /// 1.1 times the next one, and an empty string weighs 0.
    pub fn build(k: u32) -> Result<Self> {
        if k < 4 {
            return Err(Error::WidthTooSmall(k));
        }
        let mut weights = vec![0.0; k as usize + 1];
        for c in 4..=k {
            weights[c as usize] = (f64::from(k) / f64::from(c)).log10();
        }
        for c in (1..4).rev() {
            weights[c] = LOW_COUNT_RATIO * weights[c + 1];
        }
        Ok(Self { k, weights })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn constant_for_count(&self, count: u32) -> Result<f64> {
        self.weights
            .get(count as usize)
            .copied()
            .ok_or(Error::CountOutOfRange { count, k: self.k })
    }

    /// Contribution of a string with `count` on bits to a sample of size
    /// `sample_size`: the constant divided by the sample size.
    pub fn tfidf_contribution(&self, count: u32, sample_size: usize) -> Result<f64> {
        if sample_size == 0 {
            return Err(Error::ZeroSampleSize);
        }
        Ok(self.constant_for_count(count)? / sample_size as f64)
    }
}

pub fn build_constant_table(k: u32) -> Result<ConstantTable> {
    ConstantTable::build(k)
}

/// Audit result for one on-bit count.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingCheck {
    pub count: u32,
    /// Sample sizes in which this count was observed.
    pub sample_sizes: Vec<usize>,
    pub max_relative_deviation: f64,
}

/// Re-derives each observed constant from subsamples of `reports`.
///
/// For every size a subsample is drawn without replacement; each PRR and IRR
/// string in it contributes `C_c / S`, which is scaled back by `S` and
/// compared against the table.
pub fn verify_constant_rule(
    reports: &[ClientReport],
    sample_sizes: &[usize],
    table: &ConstantTable,
    seed: u64,
) -> Result<Vec<SamplingCheck>> {
    if reports.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    for &size in sample_sizes {
        if size == 0 {
            return Err(Error::ZeroSampleSize);
        }
        if size > reports.len() {
            return Err(Error::SampleTooLarge {
                size,
                available: reports.len(),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks: BTreeMap<u32, SamplingCheck> = BTreeMap::new();
    for &size in sample_sizes {
        for i in index::sample(&mut rng, reports.len(), size) {
            let report = &reports[i];
            for count in [report.prr.count_ones(), report.irr.count_ones()] {
                let expected = table.constant_for_count(count)?;
                let recovered = table.tfidf_contribution(count, size)? * size as f64;
                let deviation = if expected == 0.0 {
                    recovered.abs()
                } else {
                    ((recovered - expected) / expected).abs()
                };
                let check = checks.entry(count).or_insert_with(|| SamplingCheck {
                    count,
                    sample_sizes: Vec::new(),
                    max_relative_deviation: 0.0,
                });
                if check.sample_sizes.last() != Some(&size) {
                    check.sample_sizes.push(size);
                }
                check.max_relative_deviation = check.max_relative_deviation.max(deviation);
            }
        }
    }
    Ok(checks.into_values().collect())
}

/// Term frequency: occurrences over document length.
pub fn tf(term_count: u64, doc_length: u64) -> Result<f64> {
    if doc_length == 0 {
        return Err(Error::ZeroSampleSize);
    }
    Ok(term_count as f64 / doc_length as f64)
}

/// Smoothed inverse document frequency, base 10.
pub fn idf(total_docs: u64, docs_containing: u64) -> f64 {
    (total_docs as f64 / (1.0 + docs_containing as f64)).log10()
}

pub fn tf_idf(
    term_count: u64,
    doc_length: u64,
    total_docs: u64,
    docs_containing: u64,
) -> Result<f64> {
    Ok(tf(term_count, doc_length)? * idf(total_docs, docs_containing))
}

/// Randomized-response survey: observed "yes" fraction and the probability
/// a respondent answers truthfully.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RRSurvey {
    pub yes_fraction: f64,
    pub truth_probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProportionEstimate {
    /// Estimate clamped to [0, 1].
    pub value: f64,
    /// The unclamped estimate.
    pub raw: f64,
    pub out_of_range: bool,
}

/// `(YA + p - 1) / (2p - 1)`.
pub fn estimate_true_proportion(survey: RRSurvey) -> Result<ProportionEstimate> {
    let RRSurvey {
        yes_fraction,
        truth_probability: p,
    } = survey;
    if !(0.0..=1.0).contains(&yes_fraction) {
        return Err(Error::ProbabilityOutOfRange("yes fraction"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::ProbabilityOutOfRange("truth probability"));
    }
    let denominator = 2.0 * p - 1.0;
    if denominator == 0.0 {
        return Err(Error::DegenerateSurvey);
    }
    let raw = (yes_fraction + p - 1.0) / denominator;
    let value = raw.clamp(0.0, 1.0);
    Ok(ProportionEstimate {
        value,
        raw,
        out_of_range: value != raw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rappor::Bitset;
    use proptest::prelude::*;

    fn table() -> ConstantTable {
        build_constant_table(32).unwrap()
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn published_entries() {
        let t = table();
        assert!((t.constant_for_count(8).unwrap() - 0.60206).abs() < 1e-5);
        assert!((t.constant_for_count(17).unwrap() - 0.274701).abs() < 1e-6);
        assert!((t.constant_for_count(1).unwrap() - 1.20201279).abs() < 1e-7);
        assert!((t.constant_for_count(4).unwrap() - 0.90309).abs() < 1e-5);
        assert!((t.constant_for_count(16).unwrap() - 0.30103).abs() < 1e-5);
        assert_eq!(t.constant_for_count(0).unwrap(), 0.0);
        for (count, published) in PUBLISHED_TABLE_32 {
            assert!((t.constant_for_count(count).unwrap() - published).abs() < 1e-4);
        }
    }

    #[test]
    fn extends_past_seventeen() {
        // log10(32 / 20) = log10(1.6)
        assert!((table().constant_for_count(20).unwrap() - 0.204_119_982_655_924_8).abs() < 1e-12);
    }

    #[test]
    fn count_above_width_rejected() {
        assert!(matches!(
            table().constant_for_count(33),
            Err(Error::CountOutOfRange { count: 33, k: 32 })
        ));
    }

    #[test]
    fn narrow_width_rejected() {
        assert!(matches!(
            build_constant_table(3),
            Err(Error::WidthTooSmall(3))
        ));
        // log10(4/4) = 0 anchors the whole chain at zero.
        let degenerate = build_constant_table(4).unwrap();
        assert!(degenerate.weights().iter().all(|&w| w == 0.0));
    }

    #[test]
    fn ratio_chain_only_below_four() {
        let w = table().weights().to_vec();
        for c in 1..=3 {
            assert!((w[c] / w[c + 1] - 1.1).abs() < 1e-4);
        }
        for c in 4..32 {
            assert!((w[c] / w[c + 1] - 1.1).abs() > 1e-4, "c = {c}");
        }
    }

    #[test]
    fn strictly_decreasing() {
        for k in [5, 8, 32, 64] {
            let w = build_constant_table(k).unwrap().weights().to_vec();
            for c in 1..k as usize {
                assert!(w[c] > w[c + 1], "k = {k}, c = {c}");
            }
        }
    }

    #[test]
    fn contribution_examples() {
        let t = table();
        assert!((t.tfidf_contribution(8, 1000).unwrap() - 0.00060206).abs() < 1e-8);
        assert_eq!(t.tfidf_contribution(0, 100).unwrap(), 0.0);
        assert_eq!(
            t.tfidf_contribution(8, 1).unwrap(),
            t.constant_for_count(8).unwrap()
        );
        assert!(matches!(
            t.tfidf_contribution(8, 0),
            Err(Error::ZeroSampleSize)
        ));
    }

    fn report_with_counts(prr: u32, irr: u32) -> ClientReport {
        let mask = |n: u32| if n == 0 { 0 } else { u64::MAX >> (64 - n) };
        ClientReport {
            client_id: "c".into(),
            cohort: 0,
            prr: Bitset::from_bits(32, mask(prr)).unwrap(),
            irr: Bitset::from_bits(32, mask(irr)).unwrap(),
            true_value: None,
        }
    }

    #[test]
    fn constant_rule_single_report() {
        let checks = verify_constant_rule(&[report_with_counts(5, 5)], &[1], &table(), 0).unwrap();
        assert_eq!(checks.len(), 1);
        assert_eq!(checks[0].count, 5);
        assert_eq!(checks[0].sample_sizes, vec![1]);
        assert_eq!(checks[0].max_relative_deviation, 0.0);
        assert!((table().constant_for_count(5).unwrap() - 0.80618).abs() < 1e-5);
    }

    #[test]
    fn constant_rule_edge_cases() {
        let reports: Vec<_> = (0..200)
            .map(|i| report_with_counts(i % 33, (i * 7) % 33))
            .collect();
        assert!(verify_constant_rule(&reports, &[], &table(), 0)
            .unwrap()
            .is_empty());
        assert!(matches!(
            verify_constant_rule(&[], &[1], &table(), 0),
            Err(Error::EmptyCorpus)
        ));
        assert!(matches!(
            verify_constant_rule(&reports, &[201], &table(), 0),
            Err(Error::SampleTooLarge {
                size: 201,
                available: 200
            })
        ));
        let checks = verify_constant_rule(&reports, &[100, 200], &table(), 3).unwrap();
        assert!(checks.iter().all(|c| c.max_relative_deviation < 1e-12));
    }

    #[test]
    fn tf_examples() {
        assert_eq!(tf(3, 12).unwrap(), 0.25);
        assert_eq!(tf(0, 10).unwrap(), 0.0);
        assert_eq!(tf(10, 10).unwrap(), 1.0);
        assert!(tf(1, 0).is_err());
    }

    #[test]
    fn idf_examples() {
        assert!((idf(10, 0) - 1.0).abs() < 1e-15);
        assert_eq!(idf(10, 9), 0.0);
        assert!((idf(100, 4) - 1.301_029_995_663_981_2).abs() < 1e-12);
        assert!((tf_idf(3, 12, 10, 0).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn proportion_examples() {
        let est = estimate_true_proportion(RRSurvey {
            yes_fraction: 0.55,
            truth_probability: 1.0 / 6.0,
        })
        .unwrap();
        assert!((est.value - 0.425).abs() < 1e-12);
        assert!(!est.out_of_range);

        let est = estimate_true_proportion(RRSurvey {
            yes_fraction: 0.25,
            truth_probability: 0.25,
        })
        .unwrap();
        assert!((est.value - 1.0).abs() < 1e-12);

        assert!(matches!(
            estimate_true_proportion(RRSurvey {
                yes_fraction: 0.3,
                truth_probability: 0.5
            }),
            Err(Error::DegenerateSurvey)
        ));
    }

    #[test]
    fn proportion_clamps() {
        let est = estimate_true_proportion(RRSurvey {
            yes_fraction: 1.0,
            truth_probability: 0.9,
        })
        .unwrap();
        assert!(est.out_of_range);
        assert_eq!(est.value, 1.0);
        assert!(est.raw > 1.0);
    }

    proptest! {
        #[test]
        fn zero_at_complementary_yes_fraction(p in 0.0f64..1.0) {
            prop_assume!((p - 0.5).abs() > 1e-3);
            let est = estimate_true_proportion(RRSurvey { yes_fraction: 1.0 - p, truth_probability: p }).unwrap();
            prop_assert!(est.raw.abs() < 1e-9);
        }

        #[test]
        fn constant_rule_holds(count in 0u32..=32, size in 1usize..1_000_000) {
            let t = table();
            let c = t.constant_for_count(count).unwrap();
            let back = t.tfidf_contribution(count, size).unwrap() * size as f64;
            prop_assert!((back - c).abs() <= 1e-12 * c.max(f64::MIN_POSITIVE));
        }
    }
}
