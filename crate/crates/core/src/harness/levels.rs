//! Level sets `Ω_j = {P*_μ φ > 2^j}` located on a geometric dyadic grid, their
//! Whitney families, and the exact dyadic band of every σ-atom.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::dyadic::{ceil_log2, floor_log2, whitney_decompose, DyadicInterval, OpenSet, WhitneyCollection, WhitneyMode};
use crate::error::{Error, Result};
use crate::geometry::Interval;
use crate::operators::{apply_adjoint, PreparedInstance};

/// Octaves appended per extension step, and the most ever appended.
const EXTENSION_STEP: i32 = 4;
const MAX_EXTENSION: i32 = 96;

/// Nodes `0, 2^lo, …, 2^top` with `2^refinement` equal cells per octave above
/// `2^lo`, all dyadic rationals; `values[0]` repeats `values[1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelGrid {
    pub low_level: i32,
    pub top_level: i32,
    pub refinement: u32,
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
}

fn octave_nodes(level: i32, refinement: u32) -> impl Iterator<Item = f64> {
    let base = (level as f64).exp2();
    let cells = 1u64 << refinement;
    (0..cells).map(move |i| base + base * i as f64 / cells as f64)
}

impl LevelGrid {
    fn sample(prepared: &PreparedInstance, phi: &[f64], low_level: i32, top_level: i32, refinement: u32) -> Result<Self> {
        let mut nodes = vec![0.0];
        for level in low_level..top_level {
            nodes.extend(octave_nodes(level, refinement));
        }
        nodes.push((top_level as f64).exp2());
        let mut values = vec![0.0];
        values.extend(apply_adjoint(prepared.instance(), phi, &nodes[1..])?);
        values[0] = values[1];
        Ok(Self {
            low_level,
            top_level,
            refinement,
            nodes,
            values,
        })
    }

    fn extend(&mut self, prepared: &PreparedInstance, phi: &[f64], octaves: i32) -> Result<()> {
        let last = self.nodes.pop();
        self.values.pop();
        debug_assert!(last.is_some());
        let mut fresh = Vec::new();
        for level in self.top_level..self.top_level + octaves {
            fresh.extend(octave_nodes(level, self.refinement));
        }
        self.top_level += octaves;
        fresh.push((self.top_level as f64).exp2());
        self.values.extend(apply_adjoint(prepared.instance(), phi, &fresh)?);
        self.nodes.extend(fresh);
        Ok(())
    }

    /// `{P*_μ φ > 2^level}` as seen by the grid: every run of nodes above the
    /// threshold, with each end moved to the crossing inside the adjacent cell.
    pub fn level_set(&self, prepared: &PreparedInstance, phi: &[f64], level: i32) -> Result<OpenSet> {
        self.level_set_with(level, &mut Evaluator::new(prepared, phi))
    }

    fn level_set_with(&self, level: i32, eval: &mut Evaluator<'_>) -> Result<OpenSet> {
        let threshold = (level as f64).exp2();
        let last = self.nodes.len() - 1;
        let above = |i: usize| self.values[i] > threshold;
        let mut parts = Vec::new();
        let mut i = 0;
        while i <= last {
            if !above(i) {
                i += 1;
                continue;
            }
            let first = i;
            while i < last && above(i + 1) {
                i += 1;
            }
            let a = if first == 0 {
                0.0
            } else {
                eval.crossing(self.nodes[first - 1], self.nodes[first], threshold, false)?
            };
            let b = if i == last {
                self.nodes[last]
            } else {
                eval.crossing(self.nodes[i], self.nodes[i + 1], threshold, true)?
            };
            parts.push(Interval::new(a, b)?);
            i += 1;
        }
        OpenSet::new(parts)
    }
}

/// Halvings used to place a crossing inside its grid cell. Deep enough that a
/// crossing's binary expansion runs well past the Whitney floor of its part.
const CROSSING_DEPTH: u32 = 24;

/// `P*_μ φ` at single points, memoised on the bit pattern of the point.
struct Evaluator<'a> {
    prepared: &'a PreparedInstance,
    phi: &'a [f64],
    cache: HashMap<u64, f64>,
}

impl<'a> Evaluator<'a> {
    fn new(prepared: &'a PreparedInstance, phi: &'a [f64]) -> Self {
        Self {
            prepared,
            phi,
            cache: HashMap::new(),
        }
    }

    fn value(&mut self, x: f64) -> Result<f64> {
        if let Some(v) = self.cache.get(&x.to_bits()) {
            return Ok(*v);
        }
        let v = apply_adjoint(self.prepared.instance(), self.phi, &[x])?[0];
        self.cache.insert(x.to_bits(), v);
        Ok(v)
    }

    /// Bisects the cell `(a, b)` on dyadic midpoints. With `falling`, `a` is
    /// above the threshold and the first point found at or below it is
    /// returned; otherwise the last point at or below it before `b`.
    fn crossing(&mut self, a: f64, b: f64, threshold: f64, falling: bool) -> Result<f64> {
        let (mut lo, mut hi) = (a, b);
        for _ in 0..CROSSING_DEPTH {
            let mid = 0.5 * (lo + hi);
            if (self.value(mid)? > threshold) == falling {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(if falling { hi } else { lo })
    }
}

fn intersect(p: &OpenSet, q: &OpenSet) -> Result<OpenSet> {
    let mut parts = Vec::new();
    let (mut i, mut j) = (0, 0);
    let (ps, qs) = (p.parts(), q.parts());
    while i < ps.len() && j < qs.len() {
        let a = ps[i].a().max(qs[j].a());
        let b = ps[i].b().min(qs[j].b());
        if a < b {
            parts.push(Interval::new(a, b)?);
        }
        if ps[i].b() < qs[j].b() {
            i += 1;
        } else {
            j += 1;
        }
    }
    OpenSet::new(parts)
}

/// `j` with `2^j < v ≤ 2^{j+1}`; `None` for `v = 0`.
pub fn dyadic_band(v: f64) -> Option<i32> {
    (v > 0.0).then(|| ceil_log2(v) - 1)
}

/// The member `I` of `w` with `y ∈ [left(I), right(I))`. Members tile their
/// union this way, so an atom on a shared endpoint is still assigned.
pub fn member_half_open(w: &WhitneyCollection, y: f64) -> Option<DyadicInterval> {
    let idx = w.intervals.partition_point(|d| d.right() <= y);
    w.intervals.get(idx).copied().filter(|d| d.left() <= y)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelStructure {
    /// Level shift between `Ω_k` and the band `Ω_{k+m} \ Ω_{k+m+1}`.
    pub m: u32,
    /// Exact `P*_μ φ` at the σ-atoms.
    pub sigma_values: Vec<f64>,
    pub bands: Vec<Option<i32>>,
    /// `[min band − m, max band − m]`; `None` when `P*_μ φ` vanishes on σ.
    pub k_range: Option<(i32, i32)>,
    pub grid: Option<LevelGrid>,
    /// Whitney families of `Ω_j` for `j ∈ [k_lo, k_hi + m + 1]`.
    pub whitney: BTreeMap<i32, WhitneyCollection>,
    /// Dyadic cell engulfing the grid window and the whole instance.
    pub root: DyadicInterval,
    /// (atom, level) pairs where `v_i > 2^j` disagrees with `y_i ∈ Ω_j`.
    pub grid_misses: usize,
}

fn instance_extent(prepared: &PreparedInstance) -> (f64, f64) {
    let inst = prepared.instance();
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for a in inst.sigma.atoms() {
        lo = lo.min(a.y);
        hi = hi.max(a.y);
    }
    for a in inst.mu.atoms() {
        lo = lo.min(a.x).min(a.t);
        hi = hi.max(a.x + a.t);
    }
    (lo, hi)
}

/// Samples `P*_μ φ`, extends the grid to the right until its last value is at
/// most `2^{k_lo}`, and decomposes every needed level set.
pub fn build_levels(
    prepared: &PreparedInstance,
    phi: &[f64],
    m: u32,
    mode: WhitneyMode,
    refinement: u32,
) -> Result<LevelStructure> {
    let inst = prepared.instance();
    if phi.len() != inst.mu.len() {
        return Err(crate::error::invalid("phi must have one value per mu atom"));
    }
    let sigma_values = prepared.adjoint_on_sigma(phi);
    let bands: Vec<Option<i32>> = sigma_values.iter().map(|&v| dyadic_band(v)).collect();
    let (lo, hi) = instance_extent(prepared);
    let low_level = floor_log2(lo) - 2;
    let start_top = ceil_log2(hi) + 6;
    let m_i = m as i32;
    let k_range = bands
        .iter()
        .flatten()
        .fold(None, |acc: Option<(i32, i32)>, &b| {
            Some(acc.map_or((b, b), |(l, h)| (l.min(b), h.max(b))))
        })
        .map(|(l, h)| (l - m_i, h - m_i));

    let Some((k_lo, k_hi)) = k_range else {
        return Ok(LevelStructure {
            m,
            sigma_values,
            bands,
            k_range,
            grid: None,
            whitney: BTreeMap::new(),
            root: DyadicInterval::new(start_top + 1, 0),
            grid_misses: 0,
        });
    };

    let mut grid = LevelGrid::sample(prepared, phi, low_level, start_top, refinement)?;
    let floor_value = (k_lo as f64).exp2();
    while *grid.values.last().unwrap() > floor_value {
        if grid.top_level - start_top >= MAX_EXTENSION {
            return Err(Error::GridTooCoarse(format!(
                "P*phi still exceeds 2^{k_lo} at 2^{}",
                grid.top_level
            )));
        }
        grid.extend(prepared, phi, EXTENSION_STEP)?;
    }

    let mut whitney = BTreeMap::new();
    let mut grid_misses = 0;
    let mut eval = Evaluator::new(prepared, phi);
    let mut below: Option<OpenSet> = None;
    for j in k_lo..=k_hi + m_i + 1 {
        let mut omega = grid.level_set_with(j, &mut eval)?;
        // a cell where the function is not monotone could otherwise break nesting
        if let Some(prev) = &below {
            omega = intersect(&omega, prev)?;
        }
        below = Some(omega.clone());
        let threshold = (j as f64).exp2();
        grid_misses += inst
            .sigma
            .atoms()
            .iter()
            .zip(&sigma_values)
            .filter(|(a, &v)| (v > threshold) != omega.contains_point(a.y))
            .count();
        whitney.insert(j, whitney_decompose(&omega, None, mode)?);
    }
    let root = DyadicInterval::new(grid.top_level + 1, 0);
    Ok(LevelStructure {
        m,
        sigma_values,
        bands,
        k_range,
        grid: Some(grid),
        whitney,
        root,
        grid_misses,
    })
}
