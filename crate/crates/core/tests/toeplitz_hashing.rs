//! Toeplitz hashing: collision rate of the family and fast/naive agreement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use siqrng::extractor::{
    extract_blocks, extract_fast, extract_naive, ExtractionPlan, SeedPolicy, ToeplitzHasher,
    ToeplitzSeed,
};
use siqrng::BitBuffer;

fn random_bits(rng: &mut ChaCha8Rng, len: usize) -> BitBuffer {
    let words = (0..len.div_ceil(64)).map(|_| rng.random::<u64>()).collect();
    BitBuffer::from_words(words, len)
}

#[test]
fn collision_rate_of_the_family() {
    const N: usize = 16;
    const M: usize = 4;
    const SEEDS: usize = 1_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pairs = (1u64 << N) * ((1u64 << N) - 1) / 2;
    let mut rates = Vec::with_capacity(SEEDS);
    for _ in 0..SEEDS {
        let hasher = ToeplitzHasher::new(
            &ToeplitzSeed::new(random_bits(&mut rng, N + M - 1), M, N).unwrap(),
        );
        let mut buckets = [0u64; 1 << M];
        for x in 0..1u64 << N {
            let y = hasher.hash(&BitBuffer::from_words(vec![x], N)).unwrap();
            buckets[y.words().first().copied().unwrap_or(0) as usize] += 1;
        }
        let collisions: u64 = buckets.iter().map(|&c| c * c.saturating_sub(1) / 2).sum();
        rates.push(collisions as f64 / pairs as f64);
    }
    let mean = rates.iter().sum::<f64>() / SEEDS as f64;
    let sd = (rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (SEEDS - 1) as f64).sqrt();
    let bound = (-(M as f64)).exp2();
    assert!(
        mean <= bound + 5.0 * sd / (SEEDS as f64).sqrt(),
        "mean collision rate {mean} vs {bound}"
    );
    // A linear map collides exactly on its kernel, so each rate is
    // (2^(N - rank) - 1) / (2^N - 1), which is below 2^-M at full rank.
    assert!(rates.iter().all(|&r| r >= bound * 0.99));
}

#[test]
fn fast_matches_naive_on_word_boundaries() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in [1usize, 63, 64, 65, 127, 128, 129, 1535, 1536, 1537, 4096] {
        for m in [1, n / 2, n.saturating_sub(1), n] {
            if m == 0 {
                continue;
            }
            let seed = ToeplitzSeed::new(random_bits(&mut rng, n + m - 1), m, n).unwrap();
            let input = random_bits(&mut rng, n);
            assert_eq!(
                extract_fast(&input, &seed).unwrap(),
                extract_naive(&input, &seed).unwrap(),
                "n = {n}, m = {m}"
            );
        }
    }
}

#[test]
fn large_block_matches_naive() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (n, m) = (20_000, 19_600);
    let seed = ToeplitzSeed::new(random_bits(&mut rng, n + m - 1), m, n).unwrap();
    let input = random_bits(&mut rng, n);
    assert_eq!(
        extract_fast(&input, &seed).unwrap(),
        extract_naive(&input, &seed).unwrap()
    );
}

#[test]
fn fresh_seeds_per_block() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let plan = ExtractionPlan {
        block_n: 1000,
        m_per_block: 900,
        seed_bits_needed: 1899,
        ratio: 0.9,
    };
    let raw = random_bits(&mut rng, 3500);
    let stream = random_bits(&mut rng, 4 * 1899);
    let out = extract_blocks(&raw, &stream, &plan, SeedPolicy::FreshPerBlock).unwrap();

    let mut expected = BitBuffer::new();
    for k in 0..3 {
        let seed = ToeplitzSeed::new(stream.slice(k * 1899, 1899), 900, 1000).unwrap();
        expected.extend_from(&extract_naive(&raw.slice(k * 1000, 1000), &seed).unwrap());
    }
    let tail = ToeplitzSeed::new(stream.slice(3 * 1899, 450 + 500 - 1), 450, 500).unwrap();
    expected.extend_from(&extract_naive(&raw.slice(3000, 500), &tail).unwrap());
    assert_eq!(out, expected);
}
