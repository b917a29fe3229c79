use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::DyadicInterval;
use crate::error::{invalid, Result};
use crate::geometry::DiscreteMeasure2D;

/// Growth factor that makes a child a new principal interval.
pub const STOPPING_FACTOR: f64 = 10.0;

/// `α(J) = μ̃(Ĵ)^{-1} ∫_Ĵ φ/t dμ̃`, or `None` when `μ̃(Ĵ) = 0`.
///
/// `mu_tilde` carries the tilted weights `t²w`; `phi` lives on the same atoms.
pub fn box_alpha(mu_tilde: &DiscreteMeasure2D, phi: &[f64], cell: &DyadicInterval) -> Option<f64> {
    let b = cell.hat();
    let (mass, integral) = mu_tilde
        .atoms()
        .iter()
        .zip(phi)
        .filter(|(a, _)| b.contains(a.x, a.t))
        .fold((0.0, 0.0), |(m, s), (a, p)| (m + a.w, s + a.w * p / a.t));
    (mass > 0.0).then(|| integral / mass)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingFamily {
    pub root: DyadicInterval,
    /// Principal intervals with their `α`.
    pub alpha: BTreeMap<DyadicInterval, f64>,
    /// Stopping parent of every non-root member.
    pub stopping_parent: BTreeMap<DyadicInterval, DyadicInterval>,
    /// Whether `Î₀` holds every atom.
    pub root_covers_support: bool,
}

impl StoppingFamily {
    pub fn members(&self) -> impl Iterator<Item = &DyadicInterval> {
        self.alpha.keys()
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// `π_𝒢(J)`: the minimal principal interval containing `J`.
    pub fn project(&self, cell: &DyadicInterval) -> Option<DyadicInterval> {
        if !self.root.contains(cell) {
            return None;
        }
        let mut cur = *cell;
        loop {
            if self.alpha.contains_key(&cur) {
                return Some(cur);
            }
            cur = cur.parent();
        }
    }
}

/// Principal intervals below `root`: a descendant `J` with `μ̃(Ĵ) > 0` joins
/// when `α(J) > 0` and `α(J) ≥ 10 α(G)` for its current stopping parent `G`.
/// Descent stops at children with empty boxes.
pub fn principal_intervals(
    mu_tilde: &DiscreteMeasure2D,
    phi: &[f64],
    root: DyadicInterval,
) -> Result<StoppingFamily> {
    if phi.len() != mu_tilde.len() {
        return Err(invalid("phi must have one value per atom"));
    }
    if phi.iter().any(|p| !(*p >= 0.0)) {
        return Err(invalid("phi must be nonnegative"));
    }
    let root_alpha =
        box_alpha(mu_tilde, phi, &root).ok_or_else(|| invalid("root box carries no mass"))?;
    let root_box = root.hat();
    let root_covers_support = mu_tilde.atoms().iter().all(|a| root_box.contains(a.x, a.t));

    let mut alpha = BTreeMap::from([(root, root_alpha)]);
    let mut stopping_parent = BTreeMap::new();
    let mut stack = vec![(root, root)];
    while let Some((cell, parent)) = stack.pop() {
        for child in cell.children() {
            let Some(a) = box_alpha(mu_tilde, phi, &child) else {
                continue;
            };
            if a > 0.0 && a >= STOPPING_FACTOR * alpha[&parent] {
                alpha.insert(child, a);
                stopping_parent.insert(child, parent);
                stack.push((child, child));
            } else {
                stack.push((child, parent));
            }
        }
    }
    Ok(StoppingFamily {
        root,
        alpha,
        stopping_parent,
        root_covers_support,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarlesonReport {
    /// `Σ_G α(G)² μ̃(Ĝ)`.
    pub lhs: f64,
    /// `‖φ‖²_{L²(μ)}`.
    pub phi_norm_sq: f64,
    /// `lhs / ‖φ‖²`, zero when both vanish.
    pub empirical_constant: f64,
    pub constant: f64,
    pub holds: bool,
}

pub fn carleson_packing_check(
    family: &StoppingFamily,
    mu_tilde: &DiscreteMeasure2D,
    phi: &[f64],
    constant: f64,
) -> CarlesonReport {
    let lhs: f64 = family
        .alpha
        .iter()
        .map(|(g, a)| {
            let b = g.hat();
            let mass: f64 = mu_tilde
                .atoms()
                .iter()
                .filter(|at| b.contains(at.x, at.t))
                .map(|at| at.w)
                .sum();
            a * a * mass
        })
        .sum();
    // ‖φ‖²_μ = Σ φ² w = Σ φ² w̃ / t²
    let phi_norm_sq: f64 = mu_tilde
        .atoms()
        .iter()
        .zip(phi)
        .map(|(a, p)| p * p * a.w / (a.t * a.t))
        .sum();
    let empirical_constant = if phi_norm_sq > 0.0 { lhs / phi_norm_sq } else { 0.0 };
    CarlesonReport {
        lhs,
        phi_norm_sq,
        empirical_constant,
        constant,
        holds: lhs <= constant * phi_norm_sq * (1.0 + 1e-12),
    }
}
