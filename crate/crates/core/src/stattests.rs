//! Statistical randomness tests after NIST SP 800-22.
//!
//! Eight tests are implemented: frequency (monobit), block frequency, runs,
//! longest run of ones, cumulative sums (forward and backward), serial,
//! approximate entropy and the discrete Fourier transform test. Samples are
//! slices of bit values, one `u8` (0 or 1) per bit.
//!
//! [`run_battery`] cuts a stream into samples and, for every test, reports
//! the fraction of samples that pass at level `alpha` together with a
//! Kolmogorov–Smirnov check that the p-values are uniform.

use std::f64::consts::{LN_2, SQRT_2};

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

use crate::bits::BitBuffer;
use crate::error::{Error, Result};

/// Minimum number of samples for a battery run.
pub const MIN_SAMPLES: usize = 10;
/// Minimum bits per sample for a battery run.
pub const MIN_SAMPLE_BITS: usize = 1000;
/// Uniformity of a test's p-values is rejected below this KS p-value.
pub const UNIFORMITY_THRESHOLD: f64 = 1e-4;

const BLOCK_FREQUENCY_LEN: usize = 128;

fn igamc(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        gamma_ur(a, x)
    }
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

fn ones(bits: &[u8]) -> usize {
    bits.iter().filter(|&&b| b != 0).count()
}

fn frequency_p(bits: &[u8]) -> f64 {
    let n = bits.len() as f64;
    let sum = 2.0 * ones(bits) as f64 - n;
    erfc(sum.abs() / n.sqrt() / SQRT_2)
}

/// Frequency (monobit) test. Needs at least 100 bits.
pub fn monobit_p_value(bits: &[u8]) -> Result<f64> {
    if bits.len() < 100 {
        return Err(Error::InsufficientData {
            needed: 100,
            got: bits.len(),
        });
    }
    Ok(frequency_p(bits))
}

/// Frequency within blocks of `block_len` bits; the tail is ignored.
pub fn block_frequency_p_value(bits: &[u8], block_len: usize) -> Result<f64> {
    let blocks = bits.len() / block_len.max(1);
    if block_len == 0 || blocks == 0 {
        return Err(Error::InsufficientData {
            needed: block_len.max(1),
            got: bits.len(),
        });
    }
    let m = block_len as f64;
    let chi2: f64 = bits
        .chunks_exact(block_len)
        .map(|block| {
            let pi = ones(block) as f64 / m;
            (pi - 0.5).powi(2)
        })
        .sum::<f64>()
        * 4.0
        * m;
    Ok(igamc(blocks as f64 / 2.0, chi2 / 2.0))
}

/// Runs test. Returns 0 when the frequency prerequisite already fails.
pub fn runs_p_value(bits: &[u8]) -> Result<f64> {
    if bits.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: bits.len(),
        });
    }
    let n = bits.len() as f64;
    let pi = ones(bits) as f64 / n;
    if (pi - 0.5).abs() >= 2.0 / n.sqrt() {
        return Ok(0.0);
    }
    let runs = 1 + bits.windows(2).filter(|w| w[0] != w[1]).count();
    let spread = pi * (1.0 - pi);
    let z = (runs as f64 - 2.0 * n * spread).abs() / (2.0 * (2.0 * n).sqrt() * spread);
    Ok(erfc(z))
}

/// Longest run of ones in blocks, with the block size and class table
/// chosen from the sample length.
pub fn longest_run_p_value(bits: &[u8]) -> Result<f64> {
    let n = bits.len();
    let (block, first, probs): (usize, usize, &[f64]) = if n < 128 {
        return Err(Error::InsufficientData {
            needed: 128,
            got: n,
        });
    } else if n < 6272 {
        (8, 1, &[0.2148, 0.3672, 0.2305, 0.1875])
    } else if n < 750_000 {
        (128, 4, &[0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124])
    } else {
        (
            10_000,
            10,
            &[0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727],
        )
    };
    let k = probs.len() - 1;
    let mut classes = vec![0usize; probs.len()];
    for chunk in bits.chunks_exact(block) {
        let mut longest: usize = 0;
        let mut run = 0;
        for &b in chunk {
            run = if b != 0 { run + 1 } else { 0 };
            longest = longest.max(run);
        }
        classes[longest.saturating_sub(first).min(k)] += 1;
    }
    let blocks = (n / block) as f64;
    let chi2: f64 = classes
        .iter()
        .zip(probs)
        .map(|(&v, &p)| (v as f64 - blocks * p).powi(2) / (blocks * p))
        .sum();
    Ok(igamc(k as f64 / 2.0, chi2 / 2.0))
}

fn cusum_p(n: usize, z: i64) -> f64 {
    if z == 0 {
        return 0.0;
    }
    let n_i = n as i64;
    let sqrt_n = (n as f64).sqrt();
    let zf = z as f64;
    // Integer division truncates toward zero, as in the reference code.
    let mut sum1 = 0.0;
    let mut k = (-n_i / z + 1) / 4;
    while k <= (n_i / z - 1) / 4 {
        let kf = k as f64;
        sum1 +=
            normal_cdf((4.0 * kf + 1.0) * zf / sqrt_n) - normal_cdf((4.0 * kf - 1.0) * zf / sqrt_n);
        k += 1;
    }
    let mut sum2 = 0.0;
    k = (-n_i / z - 3) / 4;
    while k <= (n_i / z - 1) / 4 {
        let kf = k as f64;
        sum2 +=
            normal_cdf((4.0 * kf + 3.0) * zf / sqrt_n) - normal_cdf((4.0 * kf + 1.0) * zf / sqrt_n);
        k += 1;
    }
    (1.0 - sum1 + sum2).clamp(0.0, 1.0)
}

/// Cumulative sums test, `[forward, backward]`.
pub fn cumulative_sums_p_values(bits: &[u8]) -> Result<[f64; 2]> {
    if bits.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let max_excursion = |iter: &mut dyn Iterator<Item = &u8>| {
        let mut s = 0i64;
        let mut z = 0i64;
        for &b in iter {
            s += if b != 0 { 1 } else { -1 };
            z = z.max(s.abs());
        }
        z
    };
    let forward = max_excursion(&mut bits.iter());
    let backward = max_excursion(&mut bits.iter().rev());
    Ok([cusum_p(bits.len(), forward), cusum_p(bits.len(), backward)])
}

/// Frequencies of all overlapping `m`-bit patterns, wrapping around.
fn pattern_counts(bits: &[u8], m: usize) -> Vec<u64> {
    let mut counts = vec![0u64; 1 << m];
    if m == 0 {
        counts[0] = bits.len() as u64;
        return counts;
    }
    let n = bits.len();
    let mask = (1usize << m) - 1;
    let mut window = 0usize;
    for &b in bits.iter().take(m - 1) {
        window = (window << 1) | usize::from(b != 0);
    }
    for i in 0..n {
        let b = bits[(i + m - 1) % n];
        window = ((window << 1) | usize::from(b != 0)) & mask;
        counts[window] += 1;
    }
    counts
}

fn psi_squared(bits: &[u8], m: usize) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let n = bits.len() as f64;
    let sum: f64 = pattern_counts(bits, m)
        .iter()
        .map(|&c| (c as f64).powi(2))
        .sum();
    sum * (1u64 << m) as f64 / n - n
}

/// Serial test with pattern length `m >= 3`, `[p1, p2]`.
pub fn serial_p_values(bits: &[u8], m: usize) -> Result<[f64; 2]> {
    if m < 3 || bits.len() < m {
        return Err(Error::InsufficientData {
            needed: m.max(3),
            got: bits.len(),
        });
    }
    let psi_m = psi_squared(bits, m);
    let psi_m1 = psi_squared(bits, m - 1);
    let psi_m2 = psi_squared(bits, m - 2);
    let del1 = psi_m - psi_m1;
    let del2 = psi_m - 2.0 * psi_m1 + psi_m2;
    Ok([
        igamc((1u64 << (m - 2)) as f64, del1 / 2.0),
        igamc((1u64 << (m - 3)) as f64, del2 / 2.0),
    ])
}

fn phi(bits: &[u8], m: usize) -> f64 {
    let n = bits.len() as f64;
    pattern_counts(bits, m)
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum()
}

/// Approximate entropy test with block length `m >= 1`.
pub fn approximate_entropy_p_value(bits: &[u8], m: usize) -> Result<f64> {
    if m == 0 || bits.len() <= m {
        return Err(Error::InsufficientData {
            needed: m + 1,
            got: bits.len(),
        });
    }
    let n = bits.len() as f64;
    let ap_en = phi(bits, m) - phi(bits, m + 1);
    let chi2 = 2.0 * n * (LN_2 - ap_en);
    Ok(igamc((1u64 << (m - 1)) as f64, chi2 / 2.0))
}

/// Discrete Fourier transform (spectral) test.
pub fn spectral_p_value(bits: &[u8]) -> Result<f64> {
    let n = bits.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let mut buf: Vec<Complex<f64>> = bits
        .iter()
        .map(|&b| Complex::new(if b != 0 { 1.0 } else { -1.0 }, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let nf = n as f64;
    let threshold = ((1.0 / 0.05f64).ln() * nf).sqrt();
    let expected = 0.95 * nf / 2.0;
    let below = buf[..n / 2].iter().filter(|c| c.norm() < threshold).count() as f64;
    let d = (below - expected) / (nf * 0.95 * 0.05 / 4.0).sqrt();
    Ok(erfc(d.abs() / SQRT_2))
}

/// Kolmogorov–Smirnov distance of the sample from uniform(0, 1).
pub fn ks_statistic(p_values: &[f64]) -> f64 {
    let mut sorted = p_values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let i = i as f64;
            ((i + 1.0) / n - x).max(x - i / n)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov survival function `P(K > lambda)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Theta-function form, converges fast for small lambda.
        let y = (-std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp();
        let series: f64 = (0..8).map(|k| y.powi((2 * k + 1) * (2 * k + 1))).sum();
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda * series;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let sum: f64 = (1..=100)
            .map(|k| {
                let k = k as f64;
                let sign = if k as u64 % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * k * k * lambda * lambda).exp()
            })
            .sum();
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

/// KS test of uniformity on p-values; returns the asymptotic p-value.
pub fn ks_uniformity(p_values: &[f64]) -> Result<f64> {
    if p_values.len() < 10 {
        return Err(Error::InsufficientData {
            needed: 10,
            got: p_values.len(),
        });
    }
    let d = ks_statistic(p_values);
    let sqrt_n = (p_values.len() as f64).sqrt();
    Ok(kolmogorov_q((sqrt_n + 0.12 + 0.11 / sqrt_n) * d))
}

/// `(1 - alpha) -/+ 3 sqrt((1 - alpha) alpha / n)`.
pub fn proportion_interval(alpha: f64, n_samples: usize) -> (f64, f64) {
    let centre = 1.0 - alpha;
    let half = 3.0 * (centre * alpha / n_samples as f64).sqrt();
    (centre - half, centre + half)
}

/// The tests of the battery, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Test {
    Frequency,
    BlockFrequency,
    Runs,
    LongestRun,
    CumulativeSums,
    Serial,
    ApproximateEntropy,
    Spectral,
}

impl Test {
    pub const ALL: [Test; 8] = [
        Test::Frequency,
        Test::BlockFrequency,
        Test::Runs,
        Test::LongestRun,
        Test::CumulativeSums,
        Test::Serial,
        Test::ApproximateEntropy,
        Test::Spectral,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Test::Frequency => "frequency",
            Test::BlockFrequency => "block-frequency",
            Test::Runs => "runs",
            Test::LongestRun => "longest-run",
            Test::CumulativeSums => "cumulative-sums",
            Test::Serial => "serial",
            Test::ApproximateEntropy => "approximate-entropy",
            Test::Spectral => "spectral",
        }
    }

    /// p-values of one sample, with parameters scaled to its length.
    pub fn p_values(self, bits: &[u8]) -> Result<Vec<f64>> {
        let log2n = (bits.len().max(1) as f64).log2().floor() as usize;
        Ok(match self {
            Test::Frequency => vec![monobit_p_value(bits)?],
            Test::BlockFrequency => vec![block_frequency_p_value(bits, BLOCK_FREQUENCY_LEN)?],
            Test::Runs => vec![runs_p_value(bits)?],
            Test::LongestRun => vec![longest_run_p_value(bits)?],
            Test::CumulativeSums => cumulative_sums_p_values(bits)?.to_vec(),
            Test::Serial => serial_p_values(bits, log2n.saturating_sub(3).clamp(3, 16))?.to_vec(),
            Test::ApproximateEntropy => {
                vec![approximate_entropy_p_value(
                    bits,
                    log2n.saturating_sub(6).clamp(2, 10),
                )?]
            }
            Test::Spectral => vec![spectral_p_value(bits)?],
        })
    }
}

/// Aggregated result of one test over all samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    /// `p_values[sample][outcome]`.
    pub p_values: Vec<Vec<f64>>,
    /// Fraction of samples with `p >= alpha`, averaged over outcomes.
    pub proportion: f64,
    pub alpha: f64,
    pub interval: (f64, f64),
    /// Smallest KS uniformity p-value over the outcomes.
    pub uniformity_p: f64,
    pub pass: bool,
}

impl TestReport {
    fn aggregate(test: Test, p_values: Vec<Vec<f64>>, alpha: f64) -> Result<TestReport> {
        let n = p_values.len();
        let outcomes = p_values.first().map_or(0, Vec::len);
        let mut proportion = 0.0;
        let mut uniformity_p = 1.0f64;
        for k in 0..outcomes {
            let column: Vec<f64> = p_values.iter().map(|p| p[k]).collect();
            proportion += column.iter().filter(|&&p| p >= alpha).count() as f64 / n as f64;
            uniformity_p = uniformity_p.min(ks_uniformity(&column)?);
        }
        proportion /= outcomes.max(1) as f64;
        let interval = proportion_interval(alpha, n);
        let pass = proportion >= interval.0
            && proportion <= interval.1
            && uniformity_p >= UNIFORMITY_THRESHOLD;
        Ok(TestReport {
            name: test.name().to_string(),
            p_values,
            proportion,
            alpha,
            interval,
            uniformity_p,
            pass,
        })
    }
}

/// Splits `bits` into `len / sample_bits` samples and runs every test.
pub fn run_battery(bits: &BitBuffer, sample_bits: usize, alpha: f64) -> Result<Vec<TestReport>> {
    if !(alpha > 0.0 && alpha <= 0.1) {
        return Err(Error::invalid("alpha", alpha, "must lie in (0, 0.1]"));
    }
    if sample_bits < MIN_SAMPLE_BITS {
        return Err(Error::InsufficientData {
            needed: MIN_SAMPLE_BITS,
            got: sample_bits,
        });
    }
    let n_samples = bits.len() / sample_bits;
    if n_samples < MIN_SAMPLES {
        return Err(Error::InsufficientData {
            needed: MIN_SAMPLES * sample_bits,
            got: bits.len(),
        });
    }
    let per_sample: Vec<Vec<Vec<f64>>> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let sample = bits.slice(s * sample_bits, sample_bits).to_bit_values();
            Test::ALL.iter().map(|t| t.p_values(&sample)).collect()
        })
        .collect::<Result<_>>()?;

    Test::ALL
        .iter()
        .enumerate()
        .map(|(t, &test)| {
            let column = per_sample.iter().map(|s| s[t].clone()).collect();
            TestReport::aggregate(test, column, alpha)
        })
        .collect()
}

/// Whether every test in the battery passed.
pub fn battery_passed(reports: &[TestReport]) -> bool {
    reports.iter().all(|r| r.pass)
}
