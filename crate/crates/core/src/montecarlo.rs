//! Pulse-by-pulse simulation of the four-detector receiver.
//!
//! Each pulse draws four independent Bernoulli clicks (H, V, D, A, in that
//! order) with the probabilities of [`click_probabilities`]. Pulses are
//! processed in fixed chunks; chunk `i` draws from a ChaCha8 stream keyed by
//! `(seed, i)`, so the output is identical for any number of worker threads.

use rand::distr::{Bernoulli, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::BitBuffer;
use crate::error::{Error, Result};
use crate::model::{click_probabilities, SystemModel};
use crate::security::EstimationInput;

/// Pulses per independently seeded chunk.
pub const DEFAULT_CHUNK_PULSES: u64 = 1 << 20;

/// Stream reserved for double-click bit assignment; chunk streams count up
/// from zero and never reach it.
const DOUBLE_CLICK_STREAM: u64 = u64::MAX;

/// Event counts. Every pulse lands in exactly one class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickTally {
    pub n_pulses: u64,
    pub n_h_s: u64,
    pub n_v_s: u64,
    pub n_d_s: u64,
    pub n_a_s: u64,
    pub n_z_d: u64,
    pub n_x_d: u64,
    /// Pulses with clicks in both bases; discarded from both.
    pub n_cross: u64,
    pub n_vacuum: u64,
}

impl ClickTally {
    pub fn n_z_single(&self) -> u64 {
        self.n_h_s + self.n_v_s
    }

    pub fn n_z_total(&self) -> u64 {
        self.n_z_single() + self.n_z_d
    }

    pub fn n_x_total(&self) -> u64 {
        self.n_d_s + self.n_a_s + self.n_x_d
    }

    fn classified(&self) -> u64 {
        self.n_z_total() + self.n_x_total() + self.n_cross + self.n_vacuum
    }

    pub fn validate(&self) -> Result<()> {
        if self.classified() != self.n_pulses {
            return Err(Error::Format(format!(
                "event classes sum to {} but n_pulses is {}",
                self.classified(),
                self.n_pulses
            )));
        }
        Ok(())
    }

    /// Adds another tally's counts into this one.
    pub fn merge(&mut self, other: &ClickTally) {
        self.n_pulses += other.n_pulses;
        self.n_h_s += other.n_h_s;
        self.n_v_s += other.n_v_s;
        self.n_d_s += other.n_d_s;
        self.n_a_s += other.n_a_s;
        self.n_z_d += other.n_z_d;
        self.n_x_d += other.n_x_d;
        self.n_cross += other.n_cross;
        self.n_vacuum += other.n_vacuum;
    }
}

/// Z-basis single-click outcomes in pulse order, H as 0 and V as 1.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawBits {
    pub bits: BitBuffer,
}

impl RawBits {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

struct Detectors {
    h: Bernoulli,
    v: Bernoulli,
    d: Bernoulli,
    a: Bernoulli,
}

impl Detectors {
    fn new(model: &SystemModel) -> Result<Self> {
        let p = click_probabilities(model)?;
        let make = |prob: f64| {
            Bernoulli::new(prob)
                .map_err(|_| Error::invalid("click probability", prob, "must lie in [0, 1]"))
        };
        Ok(Detectors {
            h: make(p.p0)?,
            v: make(p.p1)?,
            d: make(p.p_plus)?,
            a: make(p.p_minus)?,
        })
    }

    fn run_chunk(&self, seed: u64, index: u64, pulses: u64) -> (ClickTally, BitBuffer) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let mut tally = ClickTally {
            n_pulses: pulses,
            ..ClickTally::default()
        };
        let mut bits = BitBuffer::with_capacity((pulses / 4) as usize);
        for _ in 0..pulses {
            let h = self.h.sample(&mut rng);
            let v = self.v.sample(&mut rng);
            let d = self.d.sample(&mut rng);
            let a = self.a.sample(&mut rng);
            match (h || v, d || a) {
                (true, true) => tally.n_cross += 1,
                (false, false) => tally.n_vacuum += 1,
                (true, false) => match (h, v) {
                    (true, true) => tally.n_z_d += 1,
                    (true, false) => {
                        tally.n_h_s += 1;
                        bits.push(false);
                    }
                    _ => {
                        tally.n_v_s += 1;
                        bits.push(true);
                    }
                },
                (false, true) => match (d, a) {
                    (true, true) => tally.n_x_d += 1,
                    (true, false) => tally.n_d_s += 1,
                    _ => tally.n_a_s += 1,
                },
            }
        }
        (tally, bits)
    }
}

pub fn simulate(model: &SystemModel, n_pulses: u64, seed: u64) -> Result<(ClickTally, RawBits)> {
    simulate_chunked(model, n_pulses, seed, DEFAULT_CHUNK_PULSES)
}

/// [`simulate`] with an explicit chunk size. Output depends on the chunk
/// size but never on the thread count.
pub fn simulate_chunked(
    model: &SystemModel,
    n_pulses: u64,
    seed: u64,
    chunk_pulses: u64,
) -> Result<(ClickTally, RawBits)> {
    if n_pulses == 0 {
        return Err(Error::invalid("n_pulses", 0.0, "must be >= 1"));
    }
    if chunk_pulses == 0 {
        return Err(Error::invalid("chunk_pulses", 0.0, "must be >= 1"));
    }
    let detectors = Detectors::new(model)?;
    let chunks = n_pulses.div_ceil(chunk_pulses);
    let parts: Vec<(ClickTally, BitBuffer)> = (0..chunks)
        .into_par_iter()
        .map(|i| {
            let pulses = chunk_pulses.min(n_pulses - i * chunk_pulses);
            detectors.run_chunk(seed, i, pulses)
        })
        .collect();

    let mut tally = ClickTally::default();
    let mut bits = BitBuffer::with_capacity(parts.iter().map(|(_, b)| b.len()).sum());
    for (t, b) in &parts {
        tally.merge(t);
        bits.extend_from(b);
    }
    Ok((tally, RawBits { bits }))
}

/// Parameter-estimation statistics of a tally.
///
/// Double clicks in X count as half an error. The accumulation time is
/// taken as `n_pulses / f`.
pub fn tally_to_estimation_input(
    tally: &ClickTally,
    model: &SystemModel,
) -> Result<EstimationInput> {
    let n_x = tally.n_x_total();
    if n_x == 0 {
        return Err(Error::Degenerate(
            "no X-basis events, the QBER is undefined".into(),
        ));
    }
    let errors = tally.n_a_s as f64 + 0.5 * tally.n_x_d as f64;
    Ok(EstimationInput {
        n_total: tally.n_z_total() + n_x,
        n_x,
        p_x: model.p_x(),
        e_bx: errors / n_x as f64,
        n_z_single: tally.n_z_single(),
        eta_0: model.eta_0,
        eta_1: model.eta_1,
        duration_s: tally.n_pulses as f64 / model.f_hz,
    })
}

/// Appends one uniformly random bit per Z-basis double click.
pub fn double_click_assignment(raw: &RawBits, tally: &ClickTally, seed: u64) -> RawBits {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(DOUBLE_CLICK_STREAM);
    let coin = Bernoulli::new(0.5).expect("one half is a valid probability");
    let mut bits = raw.bits.clone();
    bits.extend((0..tally.n_z_d).map(|_| coin.sample(&mut rng)));
    RawBits { bits }
}
