use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{floor_log2, DyadicInterval, OpenSet};
use crate::error::{Error, Result};
use crate::geometry::{dilate, Interval};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WhitneyMode {
    /// Maximal dyadic `I` with `3I ⊂ Ω`.
    Repaired,
    /// Maximal dyadic `I` with `3I ⊂ Ω` and `5I ⊄ Ω`.
    Literal,
}

impl std::str::FromStr for WhitneyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "repaired" => Ok(Self::Repaired),
            "literal" | "paper-literal" => Ok(Self::Literal),
            other => Err(Error::InvalidParameter(format!("unknown Whitney mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhitneyCollection {
    pub intervals: Vec<DyadicInterval>,
    pub omega: OpenSet,
    pub mode: WhitneyMode,
    pub min_level: i32,
    /// Length of Ω left uncovered, either by the resolution floor or (in
    /// literal mode) by cells whose `5I` already lies inside Ω.
    pub uncovered_tail: f64,
}

impl WhitneyCollection {
    /// The member whose open interior contains `x`.
    pub fn member_containing(&self, x: f64) -> Option<DyadicInterval> {
        let idx = self.intervals.partition_point(|d| d.right() <= x);
        self.intervals
            .get(idx)
            .copied()
            .filter(|d| d.to_interval().contains(x))
    }
}

/// `floor(log2(smallest part length)) − 14`; zero for the empty set.
pub fn default_min_level(omega: &OpenSet) -> i32 {
    omega
        .parts()
        .iter()
        .map(|p| floor_log2(p.len()))
        .min()
        .map_or(0, |k| k - 14)
}

// Is there a cell of length h whose 3-fold dilation fits inside `part`?
fn floor_fits(part: &Interval, h: f64) -> bool {
    if part.a() == 0.0 && 2.0 * h <= part.b() {
        return true;
    }
    let j = ((part.a() / h).ceil() + 1.0).max(1.0);
    (j + 2.0) * h <= part.b()
}

struct Builder<'a> {
    part: &'a Interval,
    mode: WhitneyMode,
    min_level: i32,
    members: Vec<DyadicInterval>,
    uncovered: f64,
}

impl Builder<'_> {
    fn visit(&mut self, cell: DyadicInterval) {
        let iv = cell.to_interval();
        let overlap = iv.overlap_len(self.part);
        if overlap == 0.0 {
            return;
        }
        if dilate(&iv, 3).is_subset_of(self.part) {
            match self.mode {
                WhitneyMode::Repaired => self.members.push(cell),
                WhitneyMode::Literal => {
                    if dilate(&iv, 5).is_subset_of(self.part) {
                        // every descendant also has 5J ⊂ Ω
                        self.uncovered += overlap;
                    } else {
                        self.members.push(cell);
                    }
                }
            }
            return;
        }
        if cell.level <= self.min_level {
            self.uncovered += overlap;
            return;
        }
        for child in cell.children() {
            self.visit(child);
        }
    }
}

/// Whitney decomposition of `omega` down to `min_level` (default
/// [`default_min_level`]). Dilations are origin-truncated.
pub fn whitney_decompose(
    omega: &OpenSet,
    min_level: Option<i32>,
    mode: WhitneyMode,
) -> Result<WhitneyCollection> {
    let min_level = min_level.unwrap_or_else(|| default_min_level(omega));
    let h = 2f64.powi(min_level);
    let mut intervals = Vec::new();
    let mut uncovered_tail = 0.0;
    for part in omega.parts() {
        if !floor_fits(part, h) {
            return Err(Error::MinLevelTooCoarse {
                min_level,
                part_len: part.len(),
            });
        }
        let top = super::ceil_log2(part.len()).max(min_level);
        let size = 2f64.powi(top);
        let first = (part.a() / size).floor() as u64;
        let last = (part.b() / size).ceil() as u64;
        let mut builder = Builder {
            part,
            mode,
            min_level,
            members: Vec::new(),
            uncovered: 0.0,
        };
        for j in first..last {
            builder.visit(DyadicInterval::new(top, j));
        }
        intervals.extend(builder.members);
        uncovered_tail += builder.uncovered;
    }
    intervals.sort_by(|p, q| p.left().total_cmp(&q.left()));
    Ok(WhitneyCollection {
        intervals,
        omega: omega.clone(),
        mode,
        min_level,
        uncovered_tail,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhitneyReport {
    pub members: usize,
    /// `|Ω \ ∪I|`.
    pub coverage_defect: f64,
    pub uncovered_tail: f64,
    pub coverage_matches_tail: bool,
    pub disjoint: bool,
    /// `sup_x Σ_I 1_{3I}(x)`.
    pub overlap: usize,
    /// Every member has `3I ⊂ Ω`.
    pub triples_inside: bool,
    /// Every member has `5I ⊄ Ω` (only meaningful in literal mode).
    pub fives_escape: bool,
}

/// Sup of the number of open intervals covering a point.
pub(crate) fn max_overlap(intervals: &[Interval]) -> usize {
    // closings sort before openings at equal coordinates (open intervals)
    let mut events: Vec<(f64, i32)> = intervals
        .iter()
        .flat_map(|i| [(i.a(), 1), (i.b(), -1)])
        .collect();
    events.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
    let (mut cur, mut best) = (0i32, 0i32);
    for (_, delta) in events {
        cur += delta;
        best = best.max(cur);
    }
    best as usize
}

pub fn whitney_properties(w: &WhitneyCollection) -> WhitneyReport {
    let ivs: Vec<Interval> = w.intervals.iter().map(DyadicInterval::to_interval).collect();
    let covered: f64 = ivs.iter().map(Interval::len).sum();
    let coverage_defect = w.omega.measure() - covered;
    let disjoint = ivs.windows(2).all(|p| p[0].b() <= p[1].a());
    let triples: Vec<Interval> = ivs.iter().map(|i| dilate(i, 3)).collect();
    let tol = 1e-12 * w.omega.measure().max(1.0);
    WhitneyReport {
        members: ivs.len(),
        coverage_defect,
        uncovered_tail: w.uncovered_tail,
        coverage_matches_tail: (coverage_defect - w.uncovered_tail).abs() <= tol,
        disjoint,
        overlap: max_overlap(&triples),
        triples_inside: triples.iter().all(|t| w.omega.contains_interval(t)),
        fives_escape: ivs.iter().all(|i| !w.omega.contains_interval(&dilate(i, 5))),
    }
}

/// Pairs `(k, I, k', I')` with `I ∈ 𝓘_k`, `I' ∈ 𝓘_{k'}`, `I ⊊ I'` but `k ≤ k'`.
pub fn nesting_violations(
    family: &[(i64, &WhitneyCollection)],
) -> Vec<(i64, DyadicInterval, i64, DyadicInterval)> {
    let mut owners: HashMap<DyadicInterval, Vec<i64>> = HashMap::new();
    let mut top = i32::MIN;
    for (k, w) in family {
        for d in &w.intervals {
            owners.entry(*d).or_default().push(*k);
            top = top.max(d.level);
        }
    }
    let mut out = Vec::new();
    for (k, w) in family {
        for d in &w.intervals {
            let mut anc = d.parent();
            while anc.level <= top {
                if let Some(ks) = owners.get(&anc) {
                    out.extend(ks.iter().filter(|&&k2| *k <= k2).map(|&k2| (*k, *d, k2, anc)));
                }
                anc = anc.parent();
            }
        }
    }
    out
}
