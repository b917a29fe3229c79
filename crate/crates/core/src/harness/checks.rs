//! Pointwise checks behind the energy estimate: the maximum principle on
//! Whitney intervals, sampled kernel comparisons in its two geometries, and
//! the comparability of `P_σ` across a Carleson box.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::levels::member_half_open;
use crate::dyadic::{DyadicInterval, WhitneyCollection};
use crate::error::{invalid, Result};
use crate::geometry::{dilate, hat, Interval};
use crate::kernel::{eval_kernel, BesselParam, KernelQuery};
use crate::operators::{PreparedInstance, TwoWeightInstance};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxPrincipleViolation {
    pub level: i32,
    pub interval: DyadicInterval,
    pub y: f64,
    pub value: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxPrincipleReport {
    pub level: i32,
    pub constant: f64,
    /// (member, σ-atom) pairs evaluated.
    pub pairs_checked: usize,
    /// `max P*_μ(φ 1_{(3Î)^c})(y) / 2^k`.
    pub max_ratio: f64,
    pub violations: Vec<MaxPrincipleViolation>,
}

impl MaxPrincipleReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// For each member `I` of the family of `Ω_k` and each σ-atom `y ∈ I`,
/// checks `P*_μ(φ 1_{(3Î)^c})(y) < C 2^k`, dropping the μ-atoms in
/// `hat(3I)`.
pub fn check_max_principle(
    prepared: &PreparedInstance,
    phi: &[f64],
    level: i32,
    whitney: &WhitneyCollection,
    constant: f64,
) -> MaxPrincipleReport {
    let inst = prepared.instance();
    let bound = constant * (level as f64).exp2();
    let mut report = MaxPrincipleReport {
        level,
        constant,
        pairs_checked: 0,
        max_ratio: 0.0,
        violations: Vec::new(),
    };
    for (i, a) in inst.sigma.atoms().iter().enumerate() {
        let Some(cell) = member_half_open(whitney, a.y) else {
            continue;
        };
        let region = hat(&dilate(&cell.to_interval(), 3));
        let value: f64 = inst
            .mu
            .atoms()
            .iter()
            .enumerate()
            .filter(|(_, m)| !region.contains(m.x, m.t))
            .map(|(j, m)| prepared.kernel_row(j)[i] * phi[j] * m.w)
            .sum();
        report.pairs_checked += 1;
        report.max_ratio = report.max_ratio.max(value / (level as f64).exp2());
        if !(value < bound) {
            report.violations.push(MaxPrincipleViolation {
                level,
                interval: cell,
                y: a.y,
                value,
                bound,
            });
        }
    }
    report
}

/// Where the far point `y` sits relative to the Whitney interval `I`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComparisonCase {
    /// `y ∉ 3I`, any height.
    Far,
    /// `y ∈ 3I` with `(y, t)` above `hat(3I)`.
    Tall,
}

/// Bound on `P_t(x, y) / P_t(z, y)` for `x ∈ I` and a complement witness
/// `z ∉ 3I` with `|z − x| < reach·|I|`.
pub fn comparison_constant(case: ComparisonCase, reach: f64, lambda: f64) -> f64 {
    let base = match case {
        // d_z < d_x + reach|I| < (1 + reach) d_x
        ComparisonCase::Far => (1.0 + reach).powi(2),
        // (d_x + reach t)² + t² ≤ 2d_x² + (2 reach² + 1) t²
        ComparisonCase::Tall => 2.0 * reach * reach + 1.0,
    };
    base.powf(lambda + 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSample {
    pub x: f64,
    pub z: f64,
    pub y: f64,
    pub t: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub lambda: f64,
    pub case: ComparisonCase,
    pub reach: f64,
    pub constant: f64,
    pub samples: usize,
    pub violations: usize,
    pub max_ratio: f64,
    pub worst: Option<ComparisonSample>,
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo.ln()..hi.ln()).exp()
}

/// One admissible `(x, z, y, t)`: random `I` (a quarter of them touching the
/// origin), `x ∈ I`, `z ∉ 3I` with `0 < z`, `|z − x| < reach|I|`, and `(y, t)`
/// placed according to `case`.
fn draw_configuration(rng: &mut impl Rng, case: ComparisonCase, reach: f64) -> (f64, f64, f64, f64) {
    loop {
        let len = log_uniform(rng, 0.05, 4.0);
        let a = if rng.gen_bool(0.25) { 0.0 } else { len * log_uniform(rng, 0.01, 20.0) };
        let interval = Interval::new(a, a + len).expect("positive length");
        let tripled = dilate(&interval, 3);
        let x = rng.gen_range(a..a + len);
        if x <= 0.0 {
            continue;
        }
        let zr = ((x - reach * len).max(0.0), x + reach * len);
        let mut z = None;
        for _ in 0..64 {
            let c = rng.gen_range(zr.0..zr.1);
            if c > 0.0 && !tripled.contains(c) && c != tripled.a() && c != tripled.b() && (c - x).abs() < reach * len {
                z = Some(c);
                break;
            }
        }
        let Some(z) = z else { continue };
        let (y, t) = match case {
            ComparisonCase::Far => {
                let y = if rng.gen_bool(0.5) {
                    // just outside 3I on either side
                    let gap = rng.gen_range(0.0..4.0 * len);
                    if rng.gen_bool(0.5) {
                        tripled.b() + gap
                    } else {
                        tripled.a() - gap
                    }
                } else {
                    log_uniform(rng, 1e-3 * len, 100.0 * len + tripled.b())
                };
                if y <= 0.0 || tripled.contains(y) {
                    continue;
                }
                (y, log_uniform(rng, 1e-3 * len, 1e3 * len))
            }
            ComparisonCase::Tall => {
                let y = rng.gen_range(tripled.a()..tripled.b());
                if y <= 0.0 {
                    continue;
                }
                let h = hat(&tripled).height;
                (y, h * rng.gen_range(0.0f64..(1e3f64).ln()).exp() * (1.0 + 1e-12))
            }
        };
        return (x, z, y, t);
    }
}

/// Samples `count` admissible configurations and checks
/// `P_t(x, y) ≤ C P_t(z, y)` with `C` from [`comparison_constant`].
pub fn sample_kernel_comparisons(
    p: &BesselParam,
    case: ComparisonCase,
    reach: f64,
    count: usize,
    rng: &mut impl Rng,
) -> Result<ComparisonReport> {
    if !(reach >= 1.0) {
        return Err(invalid("reach must be at least 1"));
    }
    let constant = comparison_constant(case, reach, p.lambda());
    let mut report = ComparisonReport {
        lambda: p.lambda(),
        case,
        reach,
        constant,
        samples: 0,
        violations: 0,
        max_ratio: 0.0,
        worst: None,
    };
    for _ in 0..count {
        let (x, z, y, t) = draw_configuration(rng, case, reach);
        let px = eval_kernel(p, &KernelQuery::new(x, y, t)?)?;
        let pz = eval_kernel(p, &KernelQuery::new(z, y, t)?)?;
        let ratio = px / pz;
        report.samples += 1;
        if px > constant * pz {
            report.violations += 1;
        }
        if ratio > report.max_ratio {
            report.max_ratio = ratio;
            report.worst = Some(ComparisonSample { x, z, y, t, ratio });
        }
    }
    Ok(report)
}

/// Explicit bracket for `P_σ(1_F)(x, t) / ((t/|J|) P_σ(1_F)(x_J, |J|))`: moving
/// `t` up to `|J|` changes each denominator by less than `2^{λ+1}`, and moving
/// `x` to the centre keeps `d_J` within `(d/2, 3d/2)`.
pub fn comparability_bracket(lambda: f64) -> (f64, f64) {
    let e = lambda + 1.0;
    (0.5 * (0.5f64 * 4.0 / 9.0).powf(e), 2.0 * (2.0f64 * 4.0).powf(e))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparabilityReport {
    pub samples: usize,
    /// Samples where some σ-atom of `F` lies within `|J|` of `x`.
    pub skipped: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub c_lo: f64,
    pub c_hi: f64,
    /// `J ⊂ 3I`.
    pub inside_triple: bool,
    pub holds: bool,
}

impl ComparabilityReport {
    pub fn empty(lambda: f64) -> Self {
        let (c_lo, c_hi) = comparability_bracket(lambda);
        Self {
            samples: 0,
            skipped: 0,
            min_ratio: f64::INFINITY,
            max_ratio: 0.0,
            c_lo,
            c_hi,
            inside_triple: true,
            holds: true,
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.samples += other.samples;
        self.skipped += other.skipped;
        self.min_ratio = self.min_ratio.min(other.min_ratio);
        self.max_ratio = self.max_ratio.max(other.max_ratio);
        self.inside_triple &= other.inside_triple;
        self.holds &= other.holds;
    }
}

fn restricted_forward(inst: &TwoWeightInstance, atoms: &[usize], x: f64, t: f64) -> Result<f64> {
    let s = inst.sigma.atoms();
    atoms.iter().try_fold(0.0, |acc, &i| {
        Ok(acc + eval_kernel(&inst.param, &KernelQuery::new(x, s[i].y, t)?)? * s[i].w)
    })
}

/// Compares `P_σ(1_F)` over an `n × n` sample of `Ĵ` (plus the centre at the
/// top) with its value at `(x_J, |J|)`, `F` being the σ-atoms in `f_set`.
pub fn check_box_comparability(
    inst: &TwoWeightInstance,
    interval: &Interval,
    f_set: &Interval,
    cell: &DyadicInterval,
    n: usize,
) -> Result<ComparabilityReport> {
    let atoms: Vec<usize> = (0..inst.sigma.len())
        .filter(|&i| f_set.contains(inst.sigma.atoms()[i].y))
        .collect();
    comparability_for_atoms(inst, interval, &atoms, cell, n)
}

pub(crate) fn comparability_for_atoms(
    inst: &TwoWeightInstance,
    interval: &Interval,
    atoms: &[usize],
    cell: &DyadicInterval,
    n: usize,
) -> Result<ComparabilityReport> {
    if n == 0 {
        return Err(invalid("need at least one sample per axis"));
    }
    let mut report = ComparabilityReport::empty(inst.param.lambda());
    report.inside_triple = cell.to_interval().is_subset_of(&dilate(interval, 3));
    let len = cell.len();
    let centre = 0.5 * (cell.left() + cell.right());
    let ys: Vec<f64> = atoms.iter().map(|&i| inst.sigma.atoms()[i].y).collect();
    let mut points: Vec<(f64, f64)> = (0..n)
        .flat_map(|i| {
            let x = cell.left() + (i as f64 + 0.5) / n as f64 * len;
            (0..n).map(move |k| (x, len * (k as f64 + 1.0) / n as f64))
        })
        .collect();
    points.push((centre, len));
    let admissible: Vec<(f64, f64)> = points
        .into_iter()
        .filter(|&(x, _)| !ys.is_empty() && ys.iter().all(|y| (x - y).abs() > len))
        .collect();
    report.skipped = n * n + 1 - admissible.len();
    if admissible.is_empty() {
        return Ok(report);
    }
    let reference = restricted_forward(inst, atoms, centre, len)?;
    for (x, t) in admissible {
        let ratio = restricted_forward(inst, atoms, x, t)? / (t / len * reference);
        report.samples += 1;
        report.min_ratio = report.min_ratio.min(ratio);
        report.max_ratio = report.max_ratio.max(ratio);
    }
    report.holds = report.min_ratio >= report.c_lo && report.max_ratio <= report.c_hi;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::{whitney_decompose, OpenSet, WhitneyMode};
    use crate::geometry::{DiscreteMeasure1D, DiscreteMeasure2D};
    use crate::harness::generate::instance_rng;
    use std::f64::consts::PI;

    fn closed(x: f64, y: f64, t: f64) -> f64 {
        4.0 * t / (PI * ((x - y).powi(2) + t * t) * ((x + y).powi(2) + t * t))
    }

    fn inst(sigma: &[(f64, f64)], mu: &[(f64, f64, f64)]) -> TwoWeightInstance {
        TwoWeightInstance::new(
            BesselParam::new(1.0).unwrap(),
            DiscreteMeasure1D::from_pairs(sigma).unwrap(),
            DiscreteMeasure2D::from_triples(mu).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn comparison_constants() {
        assert_eq!(comparison_constant(ComparisonCase::Far, 3.0, 1.0), 256.0);
        assert_eq!(comparison_constant(ComparisonCase::Tall, 3.0, 1.0), 361.0);
        assert_eq!(comparison_constant(ComparisonCase::Far, 4.0, 0.0), 25.0);
        assert_eq!(comparison_constant(ComparisonCase::Tall, 4.0, 0.0), 33.0);
        // the shipped constant dominates both repaired geometries
        assert!(comparison_constant(ComparisonCase::Far, 4.0, 2.0) < 33f64.powi(3));
    }

    #[test]
    fn atoms_inside_the_box_leave_nothing() {
        let p = PreparedInstance::new(inst(&[(0.3, 1.0)], &[(0.3, 0.1, 5.0)])).unwrap();
        let w = whitney_decompose(&OpenSet::parse("0,1").unwrap(), Some(-4), WhitneyMode::Repaired).unwrap();
        let r = check_max_principle(&p, &[1.0], -3, &w, 1.0);
        assert_eq!(r.pairs_checked, 1);
        assert_eq!(r.max_ratio, 0.0);
        assert!(r.ok());
    }

    #[test]
    fn single_far_atom_is_a_two_kernel_comparison() {
        // σ-atom y in I = (0, 1/2) ∈ W((0,1)); μ-atom far to the right with
        // witness z = 1 on ∂Ω: P*(φ1)(y) ≤ C P*(φ1)(z) follows from the kernel bound
        let (y, mx, mt) = (0.3, 6.0, 0.5);
        let p = PreparedInstance::new(inst(&[(y, 1.0)], &[(mx, mt, 1.0)])).unwrap();
        let w = whitney_decompose(&OpenSet::parse("0,1").unwrap(), Some(-4), WhitneyMode::Repaired).unwrap();
        let lhs = closed(mx, y, mt);
        let at_witness = closed(mx, 1.0, mt);
        assert!(lhs <= 33f64.powi(2) * at_witness);
        // threshold just above the witness value: the lemma's hypothesis
        let level = at_witness.log2().ceil() as i32;
        let r = check_max_principle(&p, &[1.0], level, &w, 33f64.powi(2));
        assert_eq!(r.pairs_checked, 1);
        assert!((r.max_ratio * (level as f64).exp2() - lhs).abs() < 1e-9 * lhs);
        assert!(r.ok());
        // a constant below the actual ratio is caught
        let tight = check_max_principle(&p, &[1.0], level, &w, 0.5 * lhs / (level as f64).exp2());
        assert_eq!(tight.violations.len(), 1);
    }

    #[test]
    fn sampled_comparisons_hold() {
        for lambda in [0.5, 1.0, 2.0] {
            let p = BesselParam::new(lambda).unwrap();
            let mut rng = instance_rng(11, 0);
            for (case, reach) in [
                (ComparisonCase::Far, 3.0),
                (ComparisonCase::Tall, 3.0),
                (ComparisonCase::Far, 4.0),
                (ComparisonCase::Tall, 4.0),
            ] {
                let r = sample_kernel_comparisons(&p, case, reach, 300, &mut rng).unwrap();
                assert_eq!(r.samples, 300);
                assert_eq!(r.violations, 0, "{r:?}");
                assert!(r.max_ratio > 1.0);
            }
        }
    }

    #[test]
    fn comparability_examples() {
        let i = inst(&[(4.0, 1.0)], &[(1.0, 1.0, 1.0)]);
        let cell = DyadicInterval::new(0, 1);
        let whole = Interval::new(0.0, 10.0).unwrap();
        let r = check_box_comparability(&i, &Interval::new(0.0, 3.0).unwrap(), &whole, &cell, 4).unwrap();
        assert_eq!(r.skipped, 0);
        assert_eq!(r.samples, 17);
        assert!(r.holds && r.inside_triple);
        assert!(r.min_ratio >= r.c_lo && r.max_ratio <= r.c_hi);
        // centre at the top: ratio exactly 1
        let one = check_box_comparability(&i, &Interval::new(0.0, 3.0).unwrap(), &whole, &cell, 1).unwrap();
        assert_eq!(one.samples, 2);
        assert!((one.max_ratio - 1.0).abs() < 1e-12 && (one.min_ratio - 1.0).abs() < 1e-12);

        // closed form at λ = 1: the ratio at (x, t) over the centre value
        let (x, t) = (1.25, 0.5);
        let expected = closed(x, 4.0, t) / (t * closed(1.5, 4.0, 1.0));
        assert!(expected > r.c_lo && expected < r.c_hi);

        // t-sweep at the centre: ratio / (t/|J|) stays bracketed
        for k in 1..=20 {
            let t = k as f64 / 20.0;
            let ratio = closed(1.5, 4.0, t) / (t * closed(1.5, 4.0, 1.0));
            assert!(ratio >= 1.0 && ratio < 2f64.powi(2));
        }

        // an atom within |J| of the box is skipped
        let near = inst(&[(2.2, 1.0)], &[(1.0, 1.0, 1.0)]);
        let s = check_box_comparability(&near, &whole, &whole, &cell, 2).unwrap();
        assert!(s.skipped > 0);
        let (lo, hi) = comparability_bracket(1.0);
        assert!((lo - 0.5 * (2.0f64 / 9.0).powi(2)).abs() < 1e-15 && hi == 128.0);
    }
}
