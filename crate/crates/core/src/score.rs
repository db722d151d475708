//! Victim scores as exact non-negative rationals.
//!
//! Every strategy that ranks blocks by a ratio compares scores by
//! cross-multiplication, so orderings are exact and reproducible.

use std::cmp::Ordering;
use std::fmt;

/// A non-negative rational `num / den`. `den == 0` encodes +∞.
#[derive(Debug, Clone, Copy)]
pub struct Score {
    num: u128,
    den: u128,
}

impl Score {
    pub const ZERO: Score = Score { num: 0, den: 1 };
    pub const INFINITY: Score = Score { num: 1, den: 0 };

    pub fn new(num: u128, den: u128) -> Self {
        if den == 0 {
            Score::INFINITY
        } else {
            Score { num, den }
        }
    }

    pub fn integer(v: u128) -> Self {
        Score { num: v, den: 1 }
    }

    pub fn is_infinite(&self) -> bool {
        self.den == 0
    }

    pub fn numer(&self) -> u128 {
        self.num
    }

    pub fn denom(&self) -> u128 {
        self.den
    }

    pub fn to_f64(&self) -> f64 {
        if self.is_infinite() {
            f64::INFINITY
        } else {
            self.num as f64 / self.den as f64
        }
    }

    /// `self * k / d` for positive `d`, kept exact.
    pub fn scale(&self, k: u128, d: u128) -> Self {
        if self.is_infinite() {
            return *self;
        }
        Score::new(self.num * k, self.den * d)
    }
}

impl PartialEq for Score {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Score {}

impl PartialOrd for Score {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Score {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.is_infinite(), other.is_infinite()) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Greater,
            (false, true) => Ordering::Less,
            (false, false) => (self.num * other.den).cmp(&(other.num * self.den)),
        }
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.to_f64())
        }
    }
}

/// Cost-benefit value `age * (1 - u) / (2u)` with `u = valid / pages_per_block`.
///
/// An empty block scores +∞.
pub fn cb_value(valid: u32, pages_per_block: u32, age: u64) -> Score {
    debug_assert!(valid <= pages_per_block);
    if valid == 0 {
        return Score::INFINITY;
    }
    let invalid = (pages_per_block - valid) as u128;
    Score::new(age as u128 * invalid, 2 * valid as u128)
}

/// Discrete, log-like age normalisation used by CAT: `floor(log2(age + 1)) + 1`.
pub fn cat_age_norm(age: u64) -> u64 {
    (u64::BITS - (age.saturating_add(1)).leading_zeros()) as u64
}

/// Cost-age-times value `((1 - u) / u) * norm(age) / (erase_count + 1)`.
pub fn cat_value(valid: u32, pages_per_block: u32, age_since_creation: u64, erase_count: u64) -> Score {
    debug_assert!(valid <= pages_per_block);
    if valid == 0 {
        return Score::INFINITY;
    }
    let invalid = (pages_per_block - valid) as u128;
    Score::new(
        invalid * cat_age_norm(age_since_creation) as u128,
        valid as u128 * (erase_count as u128 + 1),
    )
}

/// Cost-with-age: the summed ages of a block's invalid pages, `n_inv * now - Σ t_i`.
pub fn cwa_value(inv_count: u32, inv_time_sum: u64, now: u64) -> u128 {
    let total = inv_count as u128 * now as u128;
    debug_assert!(total >= inv_time_sum as u128);
    total - inv_time_sum as u128
}
