//! Packed bit sequences.
//!
//! Bit `j` of a stream lives in bit `j % 64` of word `j / 64`, which makes the
//! little-endian byte image LSB-first: bit `j` is bit `j % 8` of byte `j / 8`.
//! Bits past `len` in the last word are always zero.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct BitBuffer {
    words: Vec<u64>,
    len: usize,
}

fn words_for(bits: usize) -> usize {
    bits.div_ceil(64)
}

impl BitBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(bits: usize) -> Self {
        BitBuffer {
            words: Vec::with_capacity(words_for(bits)),
            len: 0,
        }
    }

    pub fn zeros(len: usize) -> Self {
        BitBuffer {
            words: vec![0; words_for(len)],
            len,
        }
    }

    /// Takes ownership of packed words, clearing anything past `len`.
    pub fn from_words(mut words: Vec<u64>, len: usize) -> Self {
        words.resize(words_for(len), 0);
        let mut buf = BitBuffer { words, len };
        buf.clear_padding();
        buf
    }

    /// Parses the LSB-first byte image of a `len`-bit stream. Non-zero padding
    /// bits are rejected.
    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self> {
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::Format(format!(
                "{} bits need {} bytes, found {}",
                len,
                len.div_ceil(8),
                bytes.len()
            )));
        }
        if len % 8 != 0 {
            let last = bytes[bytes.len() - 1];
            if last >> (len % 8) != 0 {
                return Err(Error::Format("non-zero padding bits".into()));
            }
        }
        let words = bytes
            .chunks(8)
            .map(|chunk| {
                let mut le = [0u8; 8];
                le[..chunk.len()].copy_from_slice(chunk);
                u64::from_le_bytes(le)
            })
            .collect();
        Ok(BitBuffer { words, len })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out: Vec<u8> = self.words.iter().flat_map(|w| w.to_le_bytes()).collect();
        out.truncate(self.len.div_ceil(8));
        out
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(
            i < self.len,
            "bit index {i} out of range for length {}",
            self.len
        );
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(
            i < self.len,
            "bit index {i} out of range for length {}",
            self.len
        );
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn push(&mut self, bit: bool) {
        if self.len % 64 == 0 {
            self.words.push(0);
        }
        self.words[self.len / 64] |= u64::from(bit) << (self.len % 64);
        self.len += 1;
    }

    /// Appends another buffer, shifting its words into place.
    pub fn extend_from(&mut self, other: &BitBuffer) {
        let offset = self.len % 64;
        if offset == 0 {
            self.words.extend_from_slice(&other.words);
        } else {
            for &w in &other.words {
                let last = self.words.len() - 1;
                self.words[last] |= w << offset;
                self.words.push(w >> (64 - offset));
            }
        }
        self.len += other.len;
        self.words.truncate(words_for(self.len));
    }

    /// Copies `len` bits starting at `start`.
    pub fn slice(&self, start: usize, len: usize) -> BitBuffer {
        assert!(
            start + len <= self.len,
            "slice {start}+{len} exceeds length {}",
            self.len
        );
        let n_words = words_for(len);
        let first = start / 64;
        let shift = start % 64;
        let words = (0..n_words)
            .map(|k| {
                let lo = self.words[first + k] >> shift;
                let hi = if shift != 0 {
                    self.words
                        .get(first + k + 1)
                        .map_or(0, |w| w << (64 - shift))
                } else {
                    0
                };
                lo | hi
            })
            .collect();
        BitBuffer::from_words(words, len)
    }

    /// The same bits in reverse order.
    pub fn reversed(&self) -> BitBuffer {
        if self.len == 0 {
            return BitBuffer::new();
        }
        let mut words: Vec<u64> = self.words.iter().rev().map(|w| w.reverse_bits()).collect();
        let shift = words.len() * 64 - self.len;
        if shift != 0 {
            for k in 0..words.len() {
                let next = words.get(k + 1).copied().unwrap_or(0);
                words[k] = (words[k] >> shift) | (next << (64 - shift));
            }
        }
        BitBuffer::from_words(words, self.len)
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.words[i / 64] >> (i % 64) & 1 == 1)
    }

    /// One byte per bit, each 0 or 1.
    pub fn to_bit_values(&self) -> Vec<u8> {
        self.iter().map(u8::from).collect()
    }

    /// Bitwise XOR of two equal-length buffers.
    pub fn xor(&self, other: &BitBuffer) -> Result<BitBuffer> {
        if self.len != other.len {
            return Err(Error::DimensionMismatch(format!(
                "xor of {} and {} bits",
                self.len, other.len
            )));
        }
        let words = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| a ^ b)
            .collect();
        Ok(BitBuffer {
            words,
            len: self.len,
        })
    }

    fn clear_padding(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }
}

impl FromIterator<bool> for BitBuffer {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        let mut buf = BitBuffer::new();
        for bit in iter {
            buf.push(bit);
        }
        buf
    }
}

impl Extend<bool> for BitBuffer {
    fn extend<I: IntoIterator<Item = bool>>(&mut self, iter: I) {
        for bit in iter {
            self.push(bit);
        }
    }
}

impl fmt::Debug for BitBuffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 64;
        write!(f, "BitBuffer({} bits: ", self.len)?;
        for bit in self.iter().take(SHOWN) {
            f.write_str(if bit { "1" } else { "0" })?;
        }
        if self.len > SHOWN {
            f.write_str("...")?;
        }
        f.write_str(")")
    }
}
