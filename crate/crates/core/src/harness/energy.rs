//! Level-set decomposition of `‖P*_μ φ‖²_{L²(σ)}` into light and heavy
//! Whitney intervals, and the split of the heavy part against the testing
//! constants.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::checks::{comparability_for_atoms, ComparabilityReport};
use super::levels::{build_levels, member_half_open, LevelStructure};
use crate::dyadic::{box_alpha, principal_intervals, DyadicInterval, StoppingFamily, WhitneyMode};
use crate::error::{invalid, Result};
use crate::geometry::{dilate, hat, tilde};
use crate::operators::{interval_family, PreparedInstance};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyConfig {
    pub delta: f64,
    pub m: u32,
    pub whitney_mode: WhitneyMode,
    pub grid_refinement: u32,
    /// Samples per axis for the box-comparability check (0 skips it).
    pub comparability_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub m: u32,
    pub delta: f64,
    /// `‖P*_μ φ‖²_{L²(σ)}` from the exact values at the σ-atoms.
    pub total: f64,
    /// `Σ_i σ_i 4^{j_i}` with `2^{j_i} < P*_μ φ(y_i) ≤ 2^{j_i+1}`; lies in
    /// `[total/4, total)`.
    pub riemann_sum: f64,
    /// `Σ_k 4^k σ(Ω_{k+m} \ Ω_{k+m+1}) = 4^{-m} riemann_sum`.
    pub shifted_sum: f64,
    pub a_term: f64,
    pub b_term: f64,
    /// Part of `shifted_sum` from atoms not covered by their Whitney family.
    pub unassigned: f64,
    pub conservation_ok: bool,
    pub bracket_ok: bool,
    /// `A ≤ δ Σ_k 4^k σ(∪𝓘_k)`.
    pub a_bounded: bool,
    /// `A ≤ δ ‖P*_μ φ‖²`.
    pub a_absorbed: bool,
    pub heavy_pairs: usize,
    pub b1_term: f64,
    pub b2_term: f64,
    /// `B ≤ B₁ + B₂`.
    pub b_split_ok: bool,
    /// Heavy `(k, I)` with `2^k > B₁(k,I) + B₂(k,I)`.
    pub lower_bound_failures: usize,
    /// `min (B₁(k,I) + B₂(k,I)) / 2^k`.
    pub lower_bound_min_ratio: Option<f64>,
    pub b21_term: f64,
    pub b22_term: f64,
    pub phi_norm_sq: f64,
    pub forward_constant: f64,
    pub backward_constant: f64,
    /// `B₁ / (δ⁻² F² ‖φ‖²)`.
    pub c_b1: Option<f64>,
    /// `B₂₁ / (δ⁻² B² ‖φ‖²)`.
    pub c_b21: Option<f64>,
    /// `B₂₂ / (δ⁻¹ F² ‖φ‖²)`.
    pub c_b22: Option<f64>,
    /// `B₂ / (B₂₁ + B₂₂)`.
    pub b2_over_split: Option<f64>,
    /// Largest number of heavy `k` sharing one dyadic `I`.
    pub qualifying_max: usize,
    pub qualifying_bound: usize,
    pub qualifying_ok: bool,
    pub qualifying_consecutive: bool,
    /// Largest number of `k` feeding one principal interval in `B₂₂`.
    pub translate_levels_max: usize,
    pub principal_intervals: usize,
    pub comparability: ComparabilityReport,
    pub grid_misses: usize,
}

impl EnergyReport {
    fn zero(cfg: &EnergyConfig, lambda: f64, forward: f64, backward: f64) -> Self {
        Self {
            m: cfg.m,
            delta: cfg.delta,
            total: 0.0,
            riemann_sum: 0.0,
            shifted_sum: 0.0,
            a_term: 0.0,
            b_term: 0.0,
            unassigned: 0.0,
            conservation_ok: true,
            bracket_ok: true,
            a_bounded: true,
            a_absorbed: true,
            heavy_pairs: 0,
            b1_term: 0.0,
            b2_term: 0.0,
            b_split_ok: true,
            lower_bound_failures: 0,
            lower_bound_min_ratio: None,
            b21_term: 0.0,
            b22_term: 0.0,
            phi_norm_sq: 0.0,
            forward_constant: forward,
            backward_constant: backward,
            c_b1: None,
            c_b21: None,
            c_b22: None,
            b2_over_split: None,
            qualifying_max: 0,
            qualifying_bound: qualifying_bound(cfg.delta),
            qualifying_ok: true,
            qualifying_consecutive: true,
            translate_levels_max: 0,
            principal_intervals: 0,
            comparability: ComparabilityReport::empty(lambda),
            grid_misses: 0,
        }
    }
}

/// `⌈1/δ⌉`.
pub fn qualifying_bound(delta: f64) -> usize {
    (1.0 / delta).ceil() as usize
}

/// Recorded bound on the number of `k` feeding one principal interval in
/// `B₂₂`: a window of `m + 1` levels for each of the three translates.
pub fn translate_levels_bound(m: u32) -> usize {
    3 * (m as usize + 1)
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Builds the level structure and testing constants, then decomposes.
pub fn decompose_energy(prepared: &PreparedInstance, phi: &[f64], cfg: &EnergyConfig) -> Result<EnergyReport> {
    let family = interval_family(prepared.instance(), false);
    let f = prepared.forward_testing(&family)?.value;
    let b = prepared.backward_testing(&family)?.value;
    let levels = build_levels(prepared, phi, cfg.m, cfg.whitney_mode, cfg.grid_refinement)?;
    decompose_with_levels(prepared, phi, &levels, cfg, f, b)
}

struct Heavy {
    k: i32,
    cell: DyadicInterval,
    f_atoms: Vec<usize>,
    i_atoms: Vec<usize>,
    f_mass: f64,
    i_mass: f64,
}

pub fn decompose_with_levels(
    prepared: &PreparedInstance,
    phi: &[f64],
    levels: &LevelStructure,
    cfg: &EnergyConfig,
    forward_constant: f64,
    backward_constant: f64,
) -> Result<EnergyReport> {
    if !(cfg.delta > 0.0 && cfg.delta < 1.0) {
        return Err(invalid("delta must lie in (0, 1)"));
    }
    if phi.len() != prepared.instance().mu.len() || phi.iter().any(|p| !(*p >= 0.0)) {
        return Err(invalid("phi must be nonnegative with one value per mu atom"));
    }
    if levels.m != cfg.m {
        return Err(invalid("level structure was built with a different m"));
    }
    let inst = prepared.instance();
    let lambda = inst.param.lambda();
    let sigma = inst.sigma.atoms();
    let mu = inst.mu.atoms();
    let mut rep = EnergyReport::zero(cfg, lambda, forward_constant, backward_constant);
    rep.phi_norm_sq = mu.iter().zip(phi).map(|(a, p)| p * p * a.w).sum();
    rep.total = sigma.iter().zip(&levels.sigma_values).map(|(a, v)| a.w * v * v).sum();
    let Some((k_lo, k_hi)) = levels.k_range else {
        return Ok(rep);
    };
    rep.grid_misses = levels.grid_misses;
    let m = cfg.m as i32;
    let pow4 = |k: i32| (2.0 * k as f64).exp2();

    rep.riemann_sum = sigma
        .iter()
        .zip(&levels.bands)
        .map(|(a, b)| b.map_or(0.0, |j| a.w * pow4(j)))
        .sum();
    rep.shifted_sum = sigma
        .iter()
        .zip(&levels.bands)
        .map(|(a, b)| b.map_or(0.0, |j| a.w * pow4(j - m)))
        .sum();
    rep.bracket_ok = rep.riemann_sum < rep.total && rep.total <= 4.0 * rep.riemann_sum * (1.0 + 1e-12);

    // F_k(I) and σ(I) with half-open membership
    let mut heavy = Vec::new();
    let mut covered_mass = 0.0;
    let mut assigned = vec![false; sigma.len()];
    for k in k_lo..=k_hi {
        let w = &levels.whitney[&k];
        let mut by_cell: BTreeMap<DyadicInterval, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
        for (i, a) in sigma.iter().enumerate() {
            if let Some(cell) = member_half_open(w, a.y) {
                let e = by_cell.entry(cell).or_default();
                e.1.push(i);
                if levels.bands[i] == Some(k + m) {
                    e.0.push(i);
                    assigned[i] = true;
                }
            }
        }
        for (cell, (f_atoms, i_atoms)) in by_cell {
            let f_mass: f64 = f_atoms.iter().map(|&i| sigma[i].w).sum();
            let i_mass: f64 = i_atoms.iter().map(|&i| sigma[i].w).sum();
            covered_mass += pow4(k) * i_mass;
            if f_atoms.is_empty() {
                continue;
            }
            if f_mass >= cfg.delta * i_mass {
                rep.b_term += pow4(k) * f_mass;
                heavy.push(Heavy {
                    k,
                    cell,
                    f_atoms,
                    i_atoms,
                    f_mass,
                    i_mass,
                });
            } else {
                rep.a_term += pow4(k) * f_mass;
            }
        }
    }
    rep.unassigned = sigma
        .iter()
        .zip(&levels.bands)
        .zip(&assigned)
        .filter(|(_, &done)| !done)
        .map(|((a, b), _)| b.map_or(0.0, |j| a.w * pow4(j - m)))
        .sum();
    rep.conservation_ok = close(rep.a_term + rep.b_term + rep.unassigned, rep.shifted_sum);
    rep.a_bounded = rep.a_term <= cfg.delta * covered_mass * (1.0 + 1e-12);
    rep.a_absorbed = rep.a_term <= cfg.delta * rep.total;
    rep.heavy_pairs = heavy.len();

    // qualifying k per dyadic interval
    let mut qualifying: BTreeMap<DyadicInterval, Vec<i32>> = BTreeMap::new();
    for h in &heavy {
        qualifying.entry(h.cell).or_default().push(h.k);
    }
    rep.qualifying_max = qualifying.values().map(Vec::len).max().unwrap_or(0);
    rep.qualifying_ok = rep.qualifying_max <= rep.qualifying_bound;
    rep.qualifying_consecutive = qualifying.values().all(|ks| ks.windows(2).all(|w| w[1] == w[0] + 1));

    let mu_tilde = tilde(&inst.mu);
    let family: StoppingFamily = principal_intervals(&mu_tilde, phi, levels.root)?;
    rep.principal_intervals = family.len();
    let alpha_cache: BTreeMap<DyadicInterval, f64> = levels
        .whitney
        .values()
        .flat_map(|w| w.intervals.iter())
        .filter_map(|j| box_alpha(&mu_tilde, phi, j).map(|a| (*j, a)))
        .collect();

    let mut translate_levels: BTreeMap<DyadicInterval, BTreeSet<i32>> = BTreeMap::new();
    for h in &heavy {
        let pow2k = (h.k as f64).exp2();
        let triple = dilate(&h.cell.to_interval(), 3);
        let region = hat(&triple);
        let upper = &levels.whitney[&(h.k + m + 1)];
        let inner: Vec<DyadicInterval> = upper
            .intervals
            .iter()
            .copied()
            .filter(|j| j.to_interval().is_subset_of(&triple))
            .collect();

        // B₁(k,I) + B₂(k,I) over μ-atoms in hat(3I)
        let (mut part1, mut part2) = (0.0, 0.0);
        for (j, a) in mu.iter().enumerate() {
            if !region.contains(a.x, a.t) {
                continue;
            }
            let row = prepared.kernel_row(j);
            let u: f64 = h.f_atoms.iter().map(|&i| row[i] * sigma[i].w).sum();
            let term = u * phi[j] * a.w / h.f_mass;
            if inner.iter().any(|c| c.hat().contains(a.x, a.t)) {
                part2 += term;
            } else {
                part1 += term;
            }
        }
        let lower = (part1 + part2) / pow2k;
        rep.lower_bound_min_ratio = Some(rep.lower_bound_min_ratio.map_or(lower, |r: f64| r.min(lower)));
        if lower < 1.0 - 1e-12 {
            rep.lower_bound_failures += 1;
        }
        rep.b1_term += 2.0 * part1 * part1 * h.f_mass;
        rep.b2_term += 2.0 * part2 * part2 * h.f_mass;

        if cfg.comparability_samples > 0 {
            for c in &inner {
                let r = comparability_for_atoms(inst, &h.cell.to_interval(), &h.f_atoms, c, cfg.comparability_samples)?;
                rep.comparability.merge(&r);
            }
        }

        // B₂₁ / B₂₂ over the translates I_{-1}, I_0, I_1
        let (mut s21, mut s22) = (0.0, 0.0);
        for theta in -1..=1 {
            let Some(shifted) = h.cell.shifted(theta) else { continue };
            let Some(top) = family.project(&shifted) else { continue };
            for c in upper.intervals.iter().filter(|c| shifted.contains(c)) {
                let Some(&alpha) = alpha_cache.get(c) else { continue };
                let b = c.hat();
                let mass: f64 = mu
                    .iter()
                    .enumerate()
                    .filter(|(_, a)| b.contains(a.x, a.t))
                    .map(|(j, a)| {
                        let row = prepared.kernel_row(j);
                        let v: f64 = h.i_atoms.iter().map(|&i| row[i] * sigma[i].w).sum();
                        v * a.t * a.w
                    })
                    .sum();
                let g = family.project(c).expect("descendant of a member");
                if g == top {
                    s21 += mass * alpha;
                } else {
                    s22 += mass * alpha;
                    translate_levels.entry(g).or_default().insert(h.k);
                }
            }
        }
        rep.b21_term += s21 * s21 / (cfg.delta * h.i_mass);
        rep.b22_term += s22 * s22 / (cfg.delta * h.i_mass);
    }
    rep.b_split_ok = rep.b_term <= (rep.b1_term + rep.b2_term) * (1.0 + 1e-12);
    rep.translate_levels_max = translate_levels.values().map(BTreeSet::len).max().unwrap_or(0);

    let d = cfg.delta;
    let f2 = forward_constant * forward_constant * rep.phi_norm_sq;
    let b2 = backward_constant * backward_constant * rep.phi_norm_sq;
    rep.c_b1 = ratio(rep.b1_term, f2 / (d * d));
    rep.c_b21 = ratio(rep.b21_term, b2 / (d * d));
    rep.c_b22 = ratio(rep.b22_term, f2 / d);
    rep.b2_over_split = ratio(rep.b2_term, rep.b21_term + rep.b22_term);
    Ok(rep)
}
