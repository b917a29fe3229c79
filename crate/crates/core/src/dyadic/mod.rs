//! Dyadic lattice on (0, ∞), open sets with exact dyadic-rational endpoints,
//! Whitney decompositions, the dyadic maximal function over Carleson boxes,
//! and principal-interval stopping families.

mod maximal;
mod stopping;
mod whitney;

pub use maximal::{
    default_level_bounds, maximal_function, weak_11_check, MaximalValue, Weak11Report,
};
pub use stopping::{
    box_alpha, carleson_packing_check, principal_intervals, CarlesonReport, StoppingFamily,
};
pub use whitney::{
    default_min_level, nesting_violations, whitney_decompose, whitney_properties,
    WhitneyCollection, WhitneyMode, WhitneyReport,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{hat, CarlesonBox, Interval};

/// `[j·2^k, (j+1)·2^k)` as a lattice cell; geometric tests use the open
/// interval `(j·2^k, (j+1)·2^k)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicInterval {
    pub level: i32,
    pub index: u64,
}

impl DyadicInterval {
    pub fn new(level: i32, index: u64) -> Self {
        Self { level, index }
    }

    #[inline]
    pub fn len(&self) -> f64 {
        2f64.powi(self.level)
    }

    #[inline]
    pub fn left(&self) -> f64 {
        self.index as f64 * self.len()
    }

    #[inline]
    pub fn right(&self) -> f64 {
        (self.index + 1) as f64 * self.len()
    }

    pub fn to_interval(&self) -> Interval {
        Interval::new(self.left(), self.right()).expect("dyadic cells are valid intervals")
    }

    pub fn hat(&self) -> CarlesonBox {
        hat(&self.to_interval())
    }

    pub fn parent(&self) -> Self {
        Self::new(self.level + 1, self.index / 2)
    }

    pub fn children(&self) -> [Self; 2] {
        [
            Self::new(self.level - 1, 2 * self.index),
            Self::new(self.level - 1, 2 * self.index + 1),
        ]
    }

    /// The cell at `level` whose open interior contains `x`; `None` when `x`
    /// is a lattice point at that level.
    pub fn containing(x: f64, level: i32) -> Option<Self> {
        if !(x > 0.0 && x.is_finite()) {
            return None;
        }
        let j = (x / 2f64.powi(level)).floor();
        if j >= 2f64.powi(63) {
            return None;
        }
        let cell = Self::new(level, j as u64);
        cell.to_interval().contains(x).then_some(cell)
    }

    /// Ancestor-or-self test.
    pub fn contains(&self, other: &Self) -> bool {
        if other.level > self.level {
            return false;
        }
        let shift = (self.level - other.level) as u32;
        if shift >= 64 {
            return self.index == 0;
        }
        other.index >> shift == self.index
    }

    /// Same-level neighbour `index + offset`; `None` below the origin.
    pub fn shifted(&self, offset: i64) -> Option<Self> {
        let j = self.index as i64 + offset;
        (j >= 0).then(|| Self::new(self.level, j as u64))
    }
}

/// Smallest `k` with `2^k ≥ v`.
pub(crate) fn ceil_log2(v: f64) -> i32 {
    let mut k = v.log2().ceil() as i32;
    while 2f64.powi(k) < v {
        k += 1;
    }
    while 2f64.powi(k - 1) >= v {
        k -= 1;
    }
    k
}

/// Largest `k` with `2^k ≤ v`.
pub(crate) fn floor_log2(v: f64) -> i32 {
    let mut k = v.log2().floor() as i32;
    while 2f64.powi(k) > v {
        k -= 1;
    }
    while 2f64.powi(k + 1) <= v {
        k += 1;
    }
    k
}

/// Finite union of pairwise-disjoint open intervals, sorted by left endpoint.
/// Neighbouring parts may share an endpoint, which then lies outside the set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OpenSet {
    parts: Vec<Interval>,
}

impl OpenSet {
    pub fn new(mut parts: Vec<Interval>) -> Result<Self> {
        parts.sort_by(|p, q| p.a().total_cmp(&q.a()));
        for w in parts.windows(2) {
            if w[0].b() > w[1].a() {
                return Err(Error::InvalidOpenSet(format!(
                    "parts ({}, {}) and ({}, {}) overlap",
                    w[0].a(),
                    w[0].b(),
                    w[1].a(),
                    w[1].b()
                )));
            }
        }
        Ok(Self { parts })
    }

    /// Builds from raw bounds; `b = ∞` is rejected as either an empty
    /// complement (`a = 0`) or an unbounded part.
    pub fn from_bounds(bounds: &[(f64, f64)]) -> Result<Self> {
        let mut parts = Vec::with_capacity(bounds.len());
        for &(a, b) in bounds {
            if b == f64::INFINITY {
                return Err(if a <= 0.0 {
                    Error::ComplementEmpty
                } else {
                    Error::Unbounded(a)
                });
            }
            parts.push(Interval::new(a, b)?);
        }
        Self::new(parts)
    }

    /// Parses `"a1,b1;a2,b2"`; `inf` is accepted as a right endpoint.
    pub fn parse(text: &str) -> Result<Self> {
        let mut bounds = Vec::new();
        for chunk in text.split(';').map(str::trim).filter(|c| !c.is_empty()) {
            let mut it = chunk.split(',').map(str::trim);
            let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
                return Err(Error::InvalidOpenSet(format!("expected `a,b`, got `{chunk}`")));
            };
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::InvalidOpenSet(format!("not a number: `{s}`")))
            };
            bounds.push((num(a)?, num(b)?));
        }
        Self::from_bounds(&bounds)
    }

    pub fn parts(&self) -> &[Interval] {
        &self.parts
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn measure(&self) -> f64 {
        self.parts.iter().map(Interval::len).sum()
    }

    pub fn contains_point(&self, x: f64) -> bool {
        self.parts.iter().any(|p| p.contains(x))
    }

    /// `interval ⊆ Ω`. An open interval is connected, so it must sit inside
    /// a single part.
    pub fn contains_interval(&self, interval: &Interval) -> bool {
        self.parts.iter().any(|p| interval.is_subset_of(p))
    }

    pub fn is_subset_of(&self, other: &OpenSet) -> bool {
        self.parts.iter().all(|p| other.contains_interval(p))
    }
}
