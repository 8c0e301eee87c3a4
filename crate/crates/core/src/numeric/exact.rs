//! Order-independent summation.
//!
//! Each term is split into a coarse fixed-point part (resolution 2^-26) and a
//! fine part (resolution 2^-78). Integer addition is associative, so the
//! result does not depend on the order the terms arrive in. Reductions over a
//! token axis use this so that set-like inputs (pooled points, attention keys)
//! give bit-identical outputs under permutation.

const HI_SCALE: f64 = (1u64 << 26) as f64;
const LO_SCALE: f64 = HI_SCALE * HI_SCALE * (1u64 << 26) as f64; // 2^78

/// Largest magnitude a single term may have.
pub const MAX_TERM: f64 = (1u64 << 36) as f64;

#[derive(Debug, Clone, Copy, Default)]
pub struct ExactSum {
    hi: i64,
    lo: i128,
}

impl ExactSum {
    pub const fn new() -> Self {
        Self { hi: 0, lo: 0 }
    }

    #[inline(always)]
    pub fn add(&mut self, x: f64) {
        let hi = (x * HI_SCALE) as i64;
        let rem = x - hi as f64 * (1.0 / HI_SCALE);
        let lo = (rem * LO_SCALE) as i64;
        self.hi = self.hi.wrapping_add(hi);
        self.lo += lo as i128;
    }

    #[inline(always)]
    pub fn value(&self) -> f64 {
        self.hi as f64 * (1.0 / HI_SCALE) + self.lo as f64 * (1.0 / LO_SCALE)
    }
}

/// Sum of `xs` independent of their order.
pub fn exact_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = ExactSum::new();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}
