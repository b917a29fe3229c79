//! Intervals on (0, ∞) with origin-truncated dilations, Carleson boxes, and
//! finite atomic measures on the half line and the quarter plane.
//!
//! Conventions: intervals are open, a box `I × (0, h]` is closed at the top,
//! and an atom sitting exactly on an endpoint belongs to neither side.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    a: f64,
    b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if a.is_finite() && b.is_finite() && 0.0 <= a && a < b {
            Ok(Self { a, b })
        } else {
            Err(Error::InvalidInterval { a, b })
        }
    }

    #[inline]
    pub fn a(&self) -> f64 {
        self.a
    }

    #[inline]
    pub fn b(&self) -> f64 {
        self.b
    }

    #[inline]
    pub fn len(&self) -> f64 {
        self.b - self.a
    }

    #[inline]
    pub fn center(&self) -> f64 {
        0.5 * (self.a + self.b)
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        self.a < x && x < self.b
    }

    /// `self ⊆ other` for open intervals.
    #[inline]
    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.a <= self.a && self.b <= other.b
    }

    pub fn overlap_len(&self, other: &Interval) -> f64 {
        (self.b.min(other.b) - self.a.max(other.a)).max(0.0)
    }

    /// Translate by `delta` and truncate to (0, ∞); `None` if nothing is left.
    pub fn translate(&self, delta: f64) -> Option<Interval> {
        let b = self.b + delta;
        if b <= 0.0 {
            return None;
        }
        Interval::new((self.a + delta).max(0.0), b).ok()
    }
}

/// `I(x, r) = (x − r, x + r) ∩ (0, ∞)`.
pub fn general_interval(x: f64, r: f64) -> Result<Interval> {
    if !(x > 0.0 && r > 0.0 && x.is_finite() && r.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "general_interval needs x > 0 and r > 0, got x = {x}, r = {r}"
        )));
    }
    Interval::new((x - r).max(0.0), x + r)
}

/// `nI`: same center, `n` times the length, truncated at the origin.
pub fn dilate(interval: &Interval, n: u32) -> Interval {
    let half = 0.5 * f64::from(n) * interval.len();
    let c = interval.center();
    Interval {
        a: (c - half).max(0.0),
        b: c + half,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarlesonBox {
    pub base: Interval,
    pub height: f64,
}

impl CarlesonBox {
    #[inline]
    pub fn contains(&self, x: f64, t: f64) -> bool {
        self.base.contains(x) && t > 0.0 && t <= self.height
    }
}

/// `Î = I × (0, |I|]`, using the (possibly truncated) length of `I`.
pub fn hat(interval: &Interval) -> CarlesonBox {
    CarlesonBox {
        base: *interval,
        height: interval.len(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom1D {
    pub y: f64,
    pub w: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom2D {
    pub x: f64,
    pub t: f64,
    pub w: f64,
}

fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

fn bad(field: String, reason: &str) -> Error {
    Error::InvalidMeasure {
        field,
        reason: reason.to_string(),
    }
}

/// Finite atomic measure `σ` on (0, ∞).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure1D {
    atoms: Vec<Atom1D>,
}

impl DiscreteMeasure1D {
    pub fn new(atoms: Vec<Atom1D>) -> Result<Self> {
        for (i, a) in atoms.iter().enumerate() {
            if !positive(a.y) {
                return Err(bad(format!("sigma[{i}][0]"), "location must be a finite positive number"));
            }
            if !positive(a.w) {
                return Err(bad(format!("sigma[{i}][1]"), "weight must be a finite positive number"));
            }
        }
        let mut order: Vec<usize> = (0..atoms.len()).collect();
        order.sort_by(|&i, &j| atoms[i].y.total_cmp(&atoms[j].y));
        for w in order.windows(2) {
            if atoms[w[0]].y == atoms[w[1]].y {
                return Err(bad(format!("sigma[{}][0]", w[0].max(w[1])), "duplicate location"));
            }
        }
        Ok(Self { atoms })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(y, w)| Atom1D { y, w }).collect())
    }

    pub fn atoms(&self) -> &[Atom1D] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.atoms.iter().map(|a| a.w).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            atoms: self.atoms.iter().map(|a| Atom1D { y: a.y, w: a.w * c }).collect(),
        }
    }
}

/// Finite atomic measure `μ` on (0, ∞) × (0, ∞).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure2D {
    atoms: Vec<Atom2D>,
}

impl DiscreteMeasure2D {
    pub fn new(atoms: Vec<Atom2D>) -> Result<Self> {
        for (i, a) in atoms.iter().enumerate() {
            if !positive(a.x) {
                return Err(bad(format!("mu[{i}][0]"), "x must be a finite positive number"));
            }
            if !positive(a.t) {
                return Err(bad(format!("mu[{i}][1]"), "t must be a finite positive number"));
            }
            if !positive(a.w) {
                return Err(bad(format!("mu[{i}][2]"), "weight must be a finite positive number"));
            }
        }
        let mut order: Vec<usize> = (0..atoms.len()).collect();
        order.sort_by(|&i, &j| {
            atoms[i]
                .x
                .total_cmp(&atoms[j].x)
                .then(atoms[i].t.total_cmp(&atoms[j].t))
        });
        for w in order.windows(2) {
            let (p, q) = (atoms[w[0]], atoms[w[1]]);
            if p.x == q.x && p.t == q.t {
                return Err(bad(format!("mu[{}]", w[0].max(w[1])), "duplicate location"));
            }
        }
        Ok(Self { atoms })
    }

    pub fn from_triples(triples: &[(f64, f64, f64)]) -> Result<Self> {
        Self::new(triples.iter().map(|&(x, t, w)| Atom2D { x, t, w }).collect())
    }

    pub fn atoms(&self) -> &[Atom2D] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom2D { w: a.w * c, ..*a })
                .collect(),
        }
    }
}

pub fn mass_1d(sigma: &DiscreteMeasure1D, interval: &Interval) -> f64 {
    sigma
        .atoms
        .iter()
        .filter(|a| interval.contains(a.y))
        .map(|a| a.w)
        .sum()
}

pub fn mass_2d(mu: &DiscreteMeasure2D, region: &CarlesonBox) -> f64 {
    mu.atoms
        .iter()
        .filter(|a| region.contains(a.x, a.t))
        .map(|a| a.w)
        .sum()
}

/// `dμ̃ = t² dμ`.
pub fn tilde(mu: &DiscreteMeasure2D) -> DiscreteMeasure2D {
    DiscreteMeasure2D {
        atoms: mu
            .atoms
            .iter()
            .map(|a| Atom2D { w: a.w * a.t * a.t, ..*a })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iv(a: f64, b: f64) -> Interval {
        Interval::new(a, b).unwrap()
    }

    #[test]
    fn general_interval_examples() {
        assert_eq!(general_interval(1.0, 2.0).unwrap(), iv(0.0, 3.0));
        assert_eq!(general_interval(5.0, 1.0).unwrap(), iv(4.0, 6.0));
        assert_eq!(general_interval(0.5, 0.5).unwrap(), iv(0.0, 1.0));
        assert!(general_interval(0.0, 1.0).is_err());
        assert!(general_interval(1.0, -1.0).is_err());
    }

    #[test]
    fn dilate_examples() {
        assert_eq!(dilate(&iv(1.0, 2.0), 5), iv(0.0, 4.0));
        assert_eq!(dilate(&iv(0.0, 1.0), 5), iv(0.0, 3.0));
        assert_eq!(dilate(&iv(4.0, 6.0), 3), iv(2.0, 8.0));
    }

    #[test]
    fn hat_examples() {
        let b = hat(&iv(0.0, 1.0));
        assert_eq!((b.base, b.height), (iv(0.0, 1.0), 1.0));
        let b = hat(&dilate(&iv(1.0, 2.0), 3));
        assert_eq!((b.base, b.height), (iv(0.0, 3.0), 3.0));
        let b = hat(&iv(4.0, 6.0));
        assert_eq!((b.base, b.height), (iv(4.0, 6.0), 2.0));
        // hat of the truncated 5I for I = (0, 1)
        let b = hat(&dilate(&iv(0.0, 1.0), 5));
        assert_eq!((b.base, b.height), (iv(0.0, 3.0), 3.0));
    }

    #[test]
    fn box_is_closed_on_top_and_open_elsewhere() {
        let b = hat(&iv(0.0, 1.0));
        assert!(b.contains(0.5, 1.0));
        assert!(!b.contains(0.5, 1.0 + 1e-12));
        assert!(!b.contains(1.0, 0.5));
        assert!(!b.contains(0.0, 0.5));
    }

    #[test]
    fn mass_examples() {
        let s = DiscreteMeasure1D::from_pairs(&[(1.0, 2.0)]).unwrap();
        assert_eq!(mass_1d(&s, &iv(0.0, 3.0)), 2.0);
        assert_eq!(mass_1d(&s, &iv(2.0, 3.0)), 0.0);
        // endpoint atoms belong to neither side
        assert_eq!(mass_1d(&s, &iv(0.0, 1.0)) + mass_1d(&s, &iv(1.0, 2.0)), 0.0);
        let m = DiscreteMeasure2D::from_triples(&[(1.0, 0.5, 3.0)]).unwrap();
        assert_eq!(mass_2d(&m, &hat(&iv(0.0, 1.0))), 0.0);
        assert_eq!(mass_2d(&m, &hat(&iv(0.0, 2.0))), 3.0);
        let m = DiscreteMeasure2D::from_triples(&[(0.75, 0.5, 3.0)]).unwrap();
        assert_eq!(mass_2d(&m, &hat(&iv(0.0, 1.0))), 3.0);
    }

    #[test]
    fn tilde_examples() {
        let m = DiscreteMeasure2D::from_triples(&[(1.0, 2.0, 1.0)]).unwrap();
        assert_eq!(tilde(&m).atoms()[0].w, 4.0);
        let m = DiscreteMeasure2D::from_triples(&[(1.0, 1.0, 0.3)]).unwrap();
        assert_eq!(tilde(&m), m);
        assert!(tilde(&DiscreteMeasure2D::default()).is_empty());
    }

    #[test]
    fn measure_validation_names_the_field() {
        let err = DiscreteMeasure1D::from_pairs(&[(1.0, 1.0), (2.0, -1.0)]).unwrap_err();
        assert!(err.to_string().contains("sigma[1][1]"), "{err}");
        let err = DiscreteMeasure1D::from_pairs(&[(1.0, 1.0), (1.0, 2.0)]).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
        let err = DiscreteMeasure2D::from_triples(&[(1.0, 0.0, 1.0)]).unwrap_err();
        assert!(err.to_string().contains("mu[0][1]"), "{err}");
    }

    // dyadic rationals keep every dilation exact
    fn dyadic_interval() -> impl Strategy<Value = Interval> {
        (0u32..64, 1u32..64, -4i32..4).prop_map(|(a, len, k)| {
            let s = 2f64.powi(k);
            Interval::new(f64::from(a) * s, f64::from(a + len) * s).unwrap()
        })
    }

    proptest! {
        #[test]
        fn dilation_laws(i in dyadic_interval(), m in 1u32..9) {
            prop_assert_eq!(dilate(&i, 1), i);
            let d = dilate(&i, m);
            prop_assert_eq!(dilate(&d, 1), d);
            prop_assert_eq!(d.a(), (i.center() - 0.5 * f64::from(m) * i.len()).max(0.0));
            prop_assert!(i.is_subset_of(&d));
            if m % 2 == 1 {
                prop_assert!(d.is_subset_of(&dilate(&i, m + 2)));
            }
        }

        #[test]
        fn masses_are_additive_and_monotone(
            ys in proptest::collection::btree_set(1u32..200, 1..20),
            cut in 1u32..200,
        ) {
            let pairs: Vec<(f64, f64)> = ys.iter().map(|&y| (f64::from(y) + 0.5, f64::from(y % 7 + 1))).collect();
            let s = DiscreteMeasure1D::from_pairs(&pairs).unwrap();
            let whole = iv(0.0, 256.0);
            let c = f64::from(cut);
            let left = iv(0.0, c);
            let right = iv(c, 256.0);
            prop_assert!((mass_1d(&s, &left) + mass_1d(&s, &right) - mass_1d(&s, &whole)).abs() < 1e-9);
            prop_assert!(mass_1d(&s, &left) <= mass_1d(&s, &whole));
        }
    }
}
