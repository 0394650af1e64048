//! Capture timestamps as integer microseconds since the epoch.
//!
//! All interval arithmetic in the toolkit is done on integers so that two
//! runs over the same bytes produce identical results.

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

/// Microseconds since the Unix epoch.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Micros(pub u64);

pub const MICROS_PER_SEC: u64 = 1_000_000;

impl Micros {
    pub fn from_secs(secs: u64) -> Self {
        Micros(secs * MICROS_PER_SEC)
    }

    pub fn from_parts(secs: u64, micros: u64) -> Self {
        Micros(secs * MICROS_PER_SEC + micros)
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / MICROS_PER_SEC as f64
    }

    /// Saturating distance to an earlier timestamp.
    pub fn since(self, earlier: Micros) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

impl Add<u64> for Micros {
    type Output = Micros;
    fn add(self, rhs: u64) -> Micros {
        Micros(self.0 + rhs)
    }
}

impl Sub<Micros> for Micros {
    type Output = u64;
    fn sub(self, rhs: Micros) -> u64 {
        self.0.saturating_sub(rhs.0)
    }
}

impl fmt::Display for Micros {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / MICROS_PER_SEC, self.0 % MICROS_PER_SEC)
    }
}

/// Length of the union of possibly overlapping `[start, end]` intervals,
/// in the same unit as the inputs.
pub fn union_length_us(intervals: &[(u64, u64)]) -> u64 {
    merge_intervals(intervals).iter().map(|(s, e)| e - s).sum()
}

/// Normalize intervals: sort, drop empty, merge overlapping/adjacent ones.
pub fn merge_intervals(intervals: &[(u64, u64)]) -> Vec<(u64, u64)> {
    let mut iv: Vec<(u64, u64)> = intervals.iter().copied().filter(|(s, e)| e > s).collect();
    iv.sort_unstable();
    let mut out: Vec<(u64, u64)> = Vec::with_capacity(iv.len());
    for (s, e) in iv {
        match out.last_mut() {
            Some((_, last_e)) if s <= *last_e => {
                if e > *last_e {
                    *last_e = e;
                }
            }
            _ => out.push((s, e)),
        }
    }
    out
}
