//! Client-side RAPPOR encoding.
//!
//! A value is hashed into a small Bloom filter, passed through a memoized
//! permanent randomized response (PRR) and then through a fresh
//! instantaneous randomized response (IRR). Only the resulting
//! `(cohort, prr, irr)` triple leaves the client.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Largest supported report width.
pub const MAX_WIDTH: u32 = 64;

const PRR_DOMAIN: &[u8] = b"ara/prr\0";
const COHORT_DOMAIN: &[u8] = b"ara/cohort\0";

/// RAPPOR knobs shared by every client in a fleet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodingParams {
    /// Report width in bits.
    pub k: u32,
    /// Bloom hash count.
    pub h: u32,
    /// Cohort count.
    pub m: u32,
    /// Permanent-response noise probability.
    pub f: f64,
    /// Probability an instantaneous report carries 1 where the PRR bit is 0.
    pub p: f64,
    /// Probability an instantaneous report carries 1 where the PRR bit is 1.
    pub q: f64,
}

impl Default for EncodingParams {
    fn default() -> Self {
        Self {
            k: 32,
            h: 2,
            m: 64,
            f: 0.5,
            p: 0.5,
            q: 0.75,
        }
    }
}

impl EncodingParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > MAX_WIDTH {
            return Err(Error::InvalidParams(format!(
                "k = {} outside [1, {MAX_WIDTH}]",
                self.k
            )));
        }
        // Each Bloom index consumes one digest byte.
        let max_h = self.k.min(32);
        if self.h == 0 || self.h > max_h {
            return Err(Error::InvalidParams(format!(
                "h = {} outside [1, {max_h}]",
                self.h
            )));
        }
        if self.m == 0 || self.m > u32::from(u16::MAX) + 1 {
            return Err(Error::InvalidParams(format!(
                "m = {} outside [1, 65536]",
                self.m
            )));
        }
        for (name, value) in [("f", self.f), ("p", self.p), ("q", self.q)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::InvalidParams(format!(
                    "{name} = {value} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    /// Stable 64-bit fingerprint rendered as 16 lowercase hex digits.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(b"ara/params/v1\0");
        for word in [self.k, self.h, self.m] {
            hasher.update(word.to_be_bytes());
        }
        for prob in [self.f, self.p, self.q] {
            hasher.update(prob.to_bits().to_be_bytes());
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Fixed-width bit vector holding a Bloom, PRR or IRR string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bitset {
    width: u32,
    bits: u64,
}

impl Bitset {
    pub fn zeros(width: u32) -> Self {
        assert!(
            (1..=MAX_WIDTH).contains(&width),
            "unsupported width {width}"
        );
        Self { width, bits: 0 }
    }

    /// Builds a bitset from raw bits; bits above `width` are rejected.
    pub fn from_bits(width: u32, bits: u64) -> Option<Self> {
        if width == 0 || width > MAX_WIDTH {
            return None;
        }
        if width < 64 && bits >> width != 0 {
            return None;
        }
        Some(Self { width, bits })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn get(&self, index: u32) -> bool {
        assert!(index < self.width);
        self.bits >> index & 1 == 1
    }

    pub fn set(&mut self, index: u32, on: bool) {
        assert!(index < self.width);
        if on {
            self.bits |= 1 << index;
        } else {
            self.bits &= !(1 << index);
        }
    }

    pub fn count_ones(&self) -> u32 {
        self.bits.count_ones()
    }

    pub fn ones(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.width).filter(move |&i| self.get(i))
    }

    /// Parses a '0'/'1' string, most significant index first.
    pub fn parse(width: u32, text: &str) -> std::result::Result<Self, String> {
        if text.len() != width as usize {
            return Err(format!(
                "bitstring has {} characters, expected {width}",
                text.len()
            ));
        }
        let mut out = Self::zeros(width);
        for (pos, ch) in text.bytes().enumerate() {
            let index = width - 1 - pos as u32;
            match ch {
                b'0' => {}
                b'1' => out.set(index, true),
                other => {
                    return Err(format!(
                        "non-binary character {:?} in bitstring",
                        other as char
                    ))
                }
            }
        }
        Ok(out)
    }
}

impl fmt::Display for Bitset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for index in (0..self.width).rev() {
            f.write_str(if self.get(index) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// One client's submission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientReport {
    pub client_id: String,
    pub cohort: u32,
    pub prr: Bitset,
    pub irr: Bitset,
    /// Present in training corpora, absent in test batches.
    pub true_value: Option<String>,
}

impl ClientReport {
    pub fn unlabeled(mut self) -> Self {
        self.true_value = None;
        self
    }
}

/// How a client picks its cohort.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CohortAssignment {
    /// Keyed hash of the client id, reduced mod `m`.
    #[default]
    KeyedHash,
    Fixed(u32),
}

/// Sets `h` Bloom bits for `value` in `cohort`.
///
/// The digest is SHA-256 over the cohort as two big-endian bytes followed by
/// the UTF-8 value; bit `j` is `digest[j] mod k`.
pub fn bloom_encode(value: &str, cohort: u32, params: &EncodingParams) -> Result<Bitset> {
    if cohort >= params.m {
        return Err(Error::CohortOutOfRange {
            cohort,
            m: params.m,
        });
    }
    let mut hasher = Sha256::new();
    hasher.update((cohort as u16).to_be_bytes());
    hasher.update(value.as_bytes());
    let digest = hasher.finalize();

    let mut bloom = Bitset::zeros(params.k);
    for &byte in digest.iter().take(params.h as usize) {
        bloom.set(u32::from(byte) % params.k, true);
    }
    Ok(bloom)
}

fn prr_rng(client_id: &str, value: &str) -> ChaCha20Rng {
    let mut hasher = Sha256::new();
    hasher.update(PRR_DOMAIN);
    hasher.update((client_id.len() as u64).to_be_bytes());
    hasher.update(client_id.as_bytes());
    hasher.update(value.as_bytes());
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&hasher.finalize());
    ChaCha20Rng::from_seed(seed)
}

/// Permanent randomized response, memoized on `(client_id, value)`.
///
/// Each bit becomes 1 with probability f/2, 0 with probability f/2, and
/// otherwise keeps its Bloom value.
pub fn permanent_rr(
    bloom: &Bitset,
    params: &EncodingParams,
    client_id: &str,
    value: &str,
) -> Bitset {
    let mut rng = prr_rng(client_id, value);
    let half = params.f / 2.0;
    let mut out = *bloom;
    for index in 0..bloom.width() {
        let u: f64 = rng.gen();
        if u < half {
            out.set(index, true);
        } else if u < params.f {
            out.set(index, false);
        }
    }
    out
}

/// Instantaneous randomized response: 1 with probability q over PRR ones
/// and p over PRR zeros. Fresh randomness on every call.
pub fn instantaneous_rr<R: Rng + ?Sized>(
    prr: &Bitset,
    params: &EncodingParams,
    rng: &mut R,
) -> Bitset {
    let mut out = Bitset::zeros(prr.width());
    for index in 0..prr.width() {
        let threshold = if prr.get(index) { params.q } else { params.p };
        let u: f64 = rng.gen();
        out.set(index, u < threshold);
    }
    out
}

/// Stable cohort for a client: keyed SHA-256 of the id, mod `m`.
pub fn cohort_for_client(client_id: &str, m: u32) -> u32 {
    let mut hasher = Sha256::new();
    hasher.update(COHORT_DOMAIN);
    hasher.update(client_id.as_bytes());
    let digest = hasher.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    (u64::from_be_bytes(head) % u64::from(m)) as u32
}

/// Bloom, PRR and IRR in sequence; the report carries `value` as its label.
pub fn encode_report<R: Rng + ?Sized>(
    client_id: &str,
    value: &str,
    params: &EncodingParams,
    cohort_assignment: CohortAssignment,
    rng: &mut R,
) -> Result<ClientReport> {
    params.validate()?;
    let cohort = match cohort_assignment {
        CohortAssignment::KeyedHash => cohort_for_client(client_id, params.m),
        CohortAssignment::Fixed(cohort) => cohort,
    };
    let bloom = bloom_encode(value, cohort, params)?;
    let prr = permanent_rr(&bloom, params, client_id, value);
    let irr = instantaneous_rr(&prr, params, rng);
    Ok(ClientReport {
        client_id: client_id.to_owned(),
        cohort,
        prr,
        irr,
        true_value: Some(value.to_owned()),
    })
}
