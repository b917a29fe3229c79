use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{ceil_log2, DyadicInterval};
use crate::error::{invalid, Result};
use crate::geometry::DiscreteMeasure2D;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaximalValue {
    pub value: f64,
    /// False when no candidate box around the query carries mass.
    pub covered: bool,
}

/// Smallest level whose origin cell engulfs every atom and the query.
fn engulfing_level(mu: &DiscreteMeasure2D, x: f64, t: f64) -> i32 {
    let (mut max_x, mut max_t) = (x, t);
    for a in mu.atoms() {
        max_x = max_x.max(a.x);
        max_t = max_t.max(a.t);
    }
    let mut level = ceil_log2(max_t).max(ceil_log2(max_x));
    // x must be strictly inside (0, 2^level)
    if 2f64.powi(level) <= max_x {
        level += 1;
    }
    level
}

/// `(⌈log2 t⌉, engulfing level)`: boxes below the first cannot reach height
/// `t`, boxes above the second all hold the same atoms.
pub fn default_level_bounds(mu: &DiscreteMeasure2D, x: f64, t: f64) -> (i32, i32) {
    let hi = engulfing_level(mu, x, t);
    (ceil_log2(t).min(hi), hi)
}

fn box_sums(mu: &DiscreteMeasure2D, psi: &[f64], cell: &DyadicInterval) -> (f64, f64) {
    let b = cell.hat();
    mu.atoms()
        .iter()
        .zip(psi)
        .filter(|(a, _)| b.contains(a.x, a.t))
        .fold((0.0, 0.0), |(m, s), (a, p)| (m + a.w, s + a.w * p.abs()))
}

fn check_len(mu: &DiscreteMeasure2D, psi: &[f64]) -> Result<()> {
    if mu.len() != psi.len() {
        return Err(invalid(format!(
            "psi has {} values for {} atoms",
            psi.len(),
            mu.len()
        )));
    }
    Ok(())
}

/// `M_μ̃ψ(x, t) = sup_{(x,t) ∈ Ĵ} μ̃(Ĵ)^{-1} ∫_Ĵ |ψ| dμ̃` over dyadic `J`
/// between the level bounds; boxes without mass are skipped.
pub fn maximal_function(
    mu_tilde: &DiscreteMeasure2D,
    psi: &[f64],
    x: f64,
    t: f64,
    level_bounds: Option<(i32, i32)>,
) -> Result<MaximalValue> {
    check_len(mu_tilde, psi)?;
    if !(x > 0.0 && t > 0.0) {
        return Err(invalid("maximal function query must lie in the open quadrant"));
    }
    let (lo, hi) = level_bounds.unwrap_or_else(|| default_level_bounds(mu_tilde, x, t));
    let lo = lo.max(ceil_log2(t));
    let mut out = MaximalValue {
        value: 0.0,
        covered: false,
    };
    for level in lo..=hi {
        let Some(cell) = DyadicInterval::containing(x, level) else {
            continue;
        };
        let (mass, integral) = box_sums(mu_tilde, psi, &cell);
        if mass > 0.0 {
            out.covered = true;
            out.value = out.value.max(integral / mass);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weak11Report {
    pub alpha: f64,
    /// `μ̃({M_μ̃ψ > α})`, evaluated atom by atom.
    pub level_set_mass: f64,
    /// Total mass of the maximal boxes with `∫_Ĵ|ψ| > α μ̃(Ĵ) > 0`.
    pub cover_mass: f64,
    /// `‖ψ‖_{L¹(μ̃)} / α`.
    pub bound: f64,
    pub cover: Vec<DyadicInterval>,
    pub cover_contains_level_set: bool,
    pub holds: bool,
}

/// Weak (1,1) with constant 1: `μ̃(S_α) ≤ α^{-1} ‖ψ‖_{L¹(μ̃)}`, together with
/// the maximal dyadic cover of `S_α`.
pub fn weak_11_check(mu_tilde: &DiscreteMeasure2D, psi: &[f64], alpha: f64) -> Result<Weak11Report> {
    check_len(mu_tilde, psi)?;
    if !(alpha > 0.0) {
        return Err(invalid("alpha must be positive"));
    }
    let atoms = mu_tilde.atoms();
    let l1: f64 = atoms.iter().zip(psi).map(|(a, p)| a.w * p.abs()).sum();
    let Some(first) = atoms.first() else {
        return Ok(Weak11Report {
            alpha,
            level_set_mass: 0.0,
            cover_mass: 0.0,
            bound: 0.0,
            cover: Vec::new(),
            cover_contains_level_set: true,
            holds: true,
        });
    };
    let top = engulfing_level(mu_tilde, first.x, first.t);

    let mut level_set = Vec::new();
    for (i, a) in atoms.iter().enumerate() {
        let m = maximal_function(mu_tilde, psi, a.x, a.t, Some((ceil_log2(a.t), top)))?;
        if m.value > alpha {
            level_set.push(i);
        }
    }
    let level_set_mass: f64 = level_set.iter().map(|&i| atoms[i].w).sum();

    // every box containing an atom, up to the engulfing level
    let mut candidates = BTreeSet::new();
    for a in atoms {
        for level in ceil_log2(a.t).min(top)..=top {
            if let Some(cell) = DyadicInterval::containing(a.x, level) {
                candidates.insert(cell);
            }
        }
    }
    let qualifying: BTreeMap<DyadicInterval, f64> = candidates
        .into_iter()
        .filter_map(|cell| {
            let (mass, integral) = box_sums(mu_tilde, psi, &cell);
            // the same quotient as the maximal function, so ties round alike
            (mass > 0.0 && integral / mass > alpha).then_some((cell, mass))
        })
        .collect();
    let cover: Vec<DyadicInterval> = qualifying
        .keys()
        .filter(|cell| {
            let mut anc = cell.parent();
            while anc.level <= top {
                if qualifying.contains_key(&anc) {
                    return false;
                }
                anc = anc.parent();
            }
            true
        })
        .copied()
        .collect();
    let cover_mass: f64 = cover.iter().map(|c| qualifying[c]).sum();
    let cover_contains_level_set = level_set.iter().all(|&i| {
        let a = atoms[i];
        cover.iter().any(|c| c.hat().contains(a.x, a.t))
    });
    let bound = l1 / alpha;
    Ok(Weak11Report {
        alpha,
        level_set_mass,
        cover_mass,
        bound,
        cover,
        cover_contains_level_set,
        holds: level_set_mass <= cover_mass * (1.0 + 1e-12)
            && cover_mass <= bound * (1.0 + 1e-12),
    })
}
