//! Toeplitz hashing of raw bits into final bits.
//!
//! An `m x n` Toeplitz matrix is fixed by `n + m - 1` seed bits `s`, with
//! `T[i][j] = s[m - 1 + j - i]`; the hash of an `n`-bit input `x` is `T x`
//! over GF(2). [`extract_naive`] multiplies the matrix out bit by bit and is
//! kept as the reference. [`extract_fast`] uses the fact that
//!
//! ```text
//! (T x)_i = sum_j s'[n - 1 + i - j] x_j,   s' = reverse(s)
//! ```
//!
//! is coefficient `n - 1 + i` of the polynomial product `s'(z) x(z)`, which
//! [`gf2::mul`] computes in sub-quadratic time.

pub mod gf2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::BitBuffer;
use crate::error::{Error, Result};
use crate::security::RateReport;

/// Raw bits hashed per block unless configured otherwise.
pub const DEFAULT_BLOCK_BITS: usize = 1 << 20;

/// Seed of an `m x n` Toeplitz matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToeplitzSeed {
    bits: BitBuffer,
    m: usize,
    n: usize,
}

fn seed_len(m: usize, n: usize) -> usize {
    (n + m).saturating_sub(1)
}

impl ToeplitzSeed {
    pub fn new(bits: BitBuffer, m: usize, n: usize) -> Result<Self> {
        if bits.len() != seed_len(m, n) {
            return Err(Error::DimensionMismatch(format!(
                "a {m}x{n} Toeplitz matrix needs {} seed bits, got {}",
                seed_len(m, n),
                bits.len()
            )));
        }
        if m > n {
            return Err(Error::DimensionMismatch(format!(
                "output length {m} exceeds input length {n}"
            )));
        }
        Ok(ToeplitzSeed { bits, m, n })
    }

    /// Builds the seed from the first `n + m - 1` bits of a longer stream.
    pub fn from_prefix(stream: &BitBuffer, m: usize, n: usize) -> Result<Self> {
        let need = seed_len(m, n);
        if stream.len() < need {
            return Err(Error::InsufficientData {
                needed: need,
                got: stream.len(),
            });
        }
        ToeplitzSeed::new(stream.slice(0, need), m, n)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bits(&self) -> &BitBuffer {
        &self.bits
    }

    /// Matrix entry `T[i][j]`.
    pub fn entry(&self, i: usize, j: usize) -> bool {
        self.bits.get(self.m - 1 + j - i)
    }

    fn check_input(&self, input: &BitBuffer) -> Result<()> {
        if input.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "seed expects {} input bits, got {}",
                self.n,
                input.len()
            )));
        }
        Ok(())
    }
}

/// Row-by-row matrix-vector product. Row `i` of `T` is the seed slice
/// starting at `m - 1 - i`, so each output bit is the parity of that slice
/// ANDed with the input.
pub fn extract_naive(input: &BitBuffer, seed: &ToeplitzSeed) -> Result<BitBuffer> {
    seed.check_input(input)?;
    Ok((0..seed.m)
        .map(|i| {
            let row = seed.bits.slice(seed.m - 1 - i, seed.n);
            let ones: u32 = row
                .words()
                .iter()
                .zip(input.words())
                .map(|(r, x)| (r & x).count_ones())
                .sum();
            ones & 1 == 1
        })
        .collect())
}

/// A seed prepared for repeated fast hashing.
#[derive(Debug, Clone)]
pub struct ToeplitzHasher {
    reversed: BitBuffer,
    m: usize,
    n: usize,
}

impl ToeplitzHasher {
    pub fn new(seed: &ToeplitzSeed) -> Self {
        ToeplitzHasher {
            reversed: seed.bits.reversed(),
            m: seed.m,
            n: seed.n,
        }
    }

    pub fn hash(&self, input: &BitBuffer) -> Result<BitBuffer> {
        if input.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "seed expects {} input bits, got {}",
                self.n,
                input.len()
            )));
        }
        if self.m == 0 {
            return Ok(BitBuffer::new());
        }
        let product = gf2::mul(self.reversed.words(), input.words());
        let product = BitBuffer::from_words(product, self.reversed.len() + self.n);
        Ok(product.slice(self.n - 1, self.m))
    }
}

/// Same output as [`extract_naive`], via polynomial multiplication.
pub fn extract_fast(input: &BitBuffer, seed: &ToeplitzSeed) -> Result<BitBuffer> {
    ToeplitzHasher::new(seed).hash(input)
}

/// How raw bits are cut into hashing blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractionPlan {
    pub block_n: usize,
    pub m_per_block: usize,
    pub seed_bits_needed: usize,
    /// Final bits per raw bit.
    pub ratio: f64,
}

impl ExtractionPlan {
    /// Output length for a block of `len` raw bits.
    pub fn output_len(&self, len: usize) -> usize {
        if len == self.block_n {
            self.m_per_block
        } else {
            ((len as f64 * self.ratio).floor() as usize).min(len)
        }
    }
}

pub fn plan_extraction(report: &RateReport, block_n: usize) -> Result<ExtractionPlan> {
    if block_n == 0 {
        return Err(Error::invalid("block_n", 0.0, "must be >= 1"));
    }
    let ratio = if report.n_z_single == 0 || report.extractable_bits <= 0.0 {
        0.0
    } else {
        (report.extractable_bits / report.n_z_single as f64).min(1.0)
    };
    let m_per_block = if ratio == 0.0 {
        0
    } else {
        ((block_n as f64 * report.extractable_bits / report.n_z_single as f64).floor() as usize)
            .min(block_n)
    };
    Ok(ExtractionPlan {
        block_n,
        m_per_block,
        seed_bits_needed: seed_len(m_per_block, block_n),
        ratio,
    })
}

/// Seed handling across blocks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedPolicy {
    /// One seed for every block of the session.
    #[default]
    Reuse,
    /// Consecutive `seed_bits_needed`-bit slices of the seed stream.
    FreshPerBlock,
}

/// Seed bits required to hash `raw_len` bits under `policy`.
pub fn seed_bits_required(plan: &ExtractionPlan, raw_len: usize, policy: SeedPolicy) -> usize {
    match policy {
        SeedPolicy::Reuse => plan.seed_bits_needed,
        SeedPolicy::FreshPerBlock => raw_len.div_ceil(plan.block_n) * plan.seed_bits_needed,
    }
}

/// Hashes `raw` block by block, keeping block order in the output. The last
/// partial block gets a proportionally shorter output.
pub fn extract_blocks(
    raw: &BitBuffer,
    seed_stream: &BitBuffer,
    plan: &ExtractionPlan,
    policy: SeedPolicy,
) -> Result<BitBuffer> {
    let need = seed_bits_required(plan, raw.len(), policy);
    if plan.m_per_block > 0 && seed_stream.len() < need {
        return Err(Error::InsufficientData {
            needed: need,
            got: seed_stream.len(),
        });
    }
    let blocks = raw.len().div_ceil(plan.block_n);
    let shared = match policy {
        SeedPolicy::Reuse if plan.m_per_block > 0 => Some(ToeplitzHasher::new(
            &ToeplitzSeed::from_prefix(seed_stream, plan.m_per_block, plan.block_n)?,
        )),
        _ => None,
    };

    let outputs: Vec<BitBuffer> = (0..blocks)
        .into_par_iter()
        .map(|k| {
            let start = k * plan.block_n;
            let len = plan.block_n.min(raw.len() - start);
            let m = plan.output_len(len);
            if m == 0 {
                return Ok(BitBuffer::new());
            }
            let block = raw.slice(start, len);
            match (&shared, policy) {
                (Some(hasher), _) if len == plan.block_n => hasher.hash(&block),
                (_, SeedPolicy::Reuse) => {
                    extract_fast(&block, &ToeplitzSeed::from_prefix(seed_stream, m, len)?)
                }
                (_, SeedPolicy::FreshPerBlock) => {
                    let slot = seed_stream.slice(k * plan.seed_bits_needed, plan.seed_bits_needed);
                    extract_fast(&block, &ToeplitzSeed::from_prefix(&slot, m, len)?)
                }
            }
        })
        .collect::<Result<_>>()?;

    let mut out = BitBuffer::with_capacity(outputs.iter().map(BitBuffer::len).sum());
    for o in &outputs {
        out.extend_from(o);
    }
    Ok(out)
}
