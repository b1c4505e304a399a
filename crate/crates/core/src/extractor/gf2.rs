//! Carry-less multiplication of GF(2) polynomials packed into `u64` words
//! (coefficient of `x^k` is bit `k % 64` of word `k / 64`).
//!
//! Karatsuba recursion down to a schoolbook base case built on a 64x64
//! carry-less multiply, using PCLMULQDQ where the CPU has it.

/// Below this many words per operand the schoolbook product wins.
const KARATSUBA_CUTOFF: usize = 24;

type Base = fn(&[u64], &[u64], &mut [u64]);

/// Full product of `a` and `b`; the result has `a.len() + b.len()` words.
pub fn mul(a: &[u64], b: &[u64]) -> Vec<u64> {
    let mut out = vec![0; a.len() + b.len()];
    mul_into(a, b, &mut out, base_case());
    out
}

/// Same as [`mul`] but always on the portable path.
pub fn mul_portable(a: &[u64], b: &[u64]) -> Vec<u64> {
    let mut out = vec![0; a.len() + b.len()];
    mul_into(a, b, &mut out, schoolbook_portable);
    out
}

fn base_case() -> Base {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("pclmulqdq") {
            return schoolbook_clmul;
        }
    }
    schoolbook_portable
}

/// XORs `a * b` into `out[..a.len() + b.len()]`.
fn mul_into(a: &[u64], b: &[u64], out: &mut [u64], base: Base) {
    let (a, b) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if b.is_empty() {
        return;
    }
    if b.len() < KARATSUBA_CUTOFF {
        base(a, b, out);
        return;
    }
    if a.len() >= 2 * b.len() {
        // Unbalanced: slice the long operand into b-sized pieces.
        for (k, piece) in a.chunks(b.len()).enumerate() {
            let at = k * b.len();
            mul_into(piece, b, &mut out[at..at + piece.len() + b.len()], base);
        }
        return;
    }
    karatsuba(a, b, out, base);
}

/// `a = a1 x^h + a0`, `b = b1 x^h + b0` with `h = b.len() / 2`:
/// `a b = a1 b1 x^2h + ((a0+a1)(b0+b1) + a0 b0 + a1 b1) x^h + a0 b0`.
fn karatsuba(a: &[u64], b: &[u64], out: &mut [u64], base: Base) {
    let h = b.len() / 2;
    let (a0, a1) = a.split_at(h);
    let (b0, b1) = b.split_at(h);

    let mut low = vec![0; 2 * h];
    mul_into(a0, b0, &mut low, base);
    let mut high = vec![0; a1.len() + b1.len()];
    mul_into(a1, b1, &mut high, base);

    let mut sa = a1.to_vec();
    for (s, x) in sa.iter_mut().zip(a0) {
        *s ^= x;
    }
    let mut sb = b1.to_vec();
    for (s, x) in sb.iter_mut().zip(b0) {
        *s ^= x;
    }
    let mut mid = vec![0; sa.len() + sb.len()];
    mul_into(&sa, &sb, &mut mid, base);
    for (m, x) in mid.iter_mut().zip(&low) {
        *m ^= x;
    }
    for (m, x) in mid.iter_mut().zip(&high) {
        *m ^= x;
    }

    for (o, x) in out.iter_mut().zip(&low) {
        *o ^= x;
    }
    for (o, x) in out[h..].iter_mut().zip(&mid) {
        *o ^= x;
    }
    for (o, x) in out[2 * h..].iter_mut().zip(&high) {
        *o ^= x;
    }
}

/// 64x64 -> 128 carry-less product, four bits of `b` at a time.
pub fn clmul_portable(a: u64, b: u64) -> (u64, u64) {
    let mut table = [0u128; 16];
    for i in 1..16 {
        table[i] = if i & 1 == 1 {
            table[i - 1] ^ u128::from(a)
        } else {
            table[i >> 1] << 1
        };
    }
    let mut r = 0u128;
    for k in 0..16 {
        r ^= table[((b >> (4 * k)) & 0xf) as usize] << (4 * k);
    }
    (r as u64, (r >> 64) as u64)
}

fn schoolbook_portable(a: &[u64], b: &[u64], out: &mut [u64]) {
    for (i, &x) in a.iter().enumerate() {
        if x == 0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            let (lo, hi) = clmul_portable(x, y);
            out[i + j] ^= lo;
            out[i + j + 1] ^= hi;
        }
    }
}

#[cfg(target_arch = "x86_64")]
fn schoolbook_clmul(a: &[u64], b: &[u64], out: &mut [u64]) {
    // SAFETY: only selected by `base_case` after runtime detection.
    unsafe { schoolbook_clmul_impl(a, b, out) }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "pclmulqdq,sse2")]
unsafe fn schoolbook_clmul_impl(a: &[u64], b: &[u64], out: &mut [u64]) {
    use std::arch::x86_64::*;
    assert!(out.len() >= a.len() + b.len());
    for (i, &x) in a.iter().enumerate() {
        let xv = _mm_set_epi64x(0, x as i64);
        let mut carry = 0u64;
        for (j, &y) in b.iter().enumerate() {
            let prod = _mm_clmulepi64_si128(xv, _mm_set_epi64x(0, y as i64), 0x00);
            let lo = _mm_cvtsi128_si64(prod) as u64;
            let hi = _mm_cvtsi128_si64(_mm_unpackhi_epi64(prod, prod)) as u64;
            out[i + j] ^= lo ^ carry;
            carry = hi;
        }
        out[i + b.len()] ^= carry;
    }
}
