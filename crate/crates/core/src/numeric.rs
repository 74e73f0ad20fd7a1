//! The single numeric tolerance used for every threshold comparison.

/// Relative slack applied to "value ≥ threshold" tests.
pub const EPS_NUM: f64 = 1e-9;

/// `value ≥ threshold·(1 − EPS_NUM)`.
///
/// For a zero threshold this is plain `value ≥ 0`, so a zero-valued agent is
/// satisfied by any bundle.
#[inline]
pub fn at_least(value: f64, threshold: f64) -> bool {
    value >= threshold * (1.0 - EPS_NUM)
}

/// `value ≤ threshold·(1 + EPS_NUM)`.
#[inline]
pub fn at_most(value: f64, threshold: f64) -> bool {
    value <= threshold * (1.0 + EPS_NUM)
}

/// Equality up to `EPS_NUM` relative to the larger magnitude (absolute near zero).
#[inline]
pub fn approx_eq(a: f64, b: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= EPS_NUM * a.abs().max(b.abs()).max(1.0)
}

/// Strictly larger than `b` by more than the tolerance.
#[inline]
pub fn definitely_greater(a: f64, b: f64) -> bool {
    a > b && !approx_eq(a, b)
}

/// `floor(log2 n) + 1` for `n ≥ 1`; the number of repeated matchings that
/// leaves no agent unsatisfied when each round halves the unsatisfied set.
pub fn matching_rounds(n: usize) -> usize {
    if n == 0 {
        0
    } else {
        (usize::BITS - n.leading_zeros()) as usize
    }
}
