use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checks::{check_max_principle, sample_kernel_comparisons, ComparisonCase, ComparisonReport};
use super::config::ExperimentConfig;
use super::energy::{decompose_with_levels, translate_levels_bound, EnergyConfig, EnergyReport};
use super::generate::{gen_instance, instance_rng};
use super::levels::build_levels;
use crate::dyadic::{
    carleson_packing_check, nesting_violations, principal_intervals, weak_11_check, whitney_properties,
    CarlesonReport, WhitneyCollection,
};
use crate::error::Result;
use crate::geometry::tilde;
use crate::kernel::BesselParam;
use crate::operators::{interval_family, PreparedInstance, TestingResult};

/// Slack in the necessity check `F, B ≤ N(1 + NECESSITY_SLACK)`.
pub const NECESSITY_SLACK: f64 = 1e-8;
/// Tail allowance relative to `|Ω|` for the Whitney families.
pub const WHITNEY_TAIL_FRACTION: f64 = 1.0 / 4096.0;
/// Stream index reserved for the kernel-comparison sampler.
const COMPARISON_STREAM: u64 = u64::MAX;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxPrincipleSummary {
    pub constant: f64,
    pub levels: usize,
    pub pairs_checked: usize,
    pub violations: usize,
    /// `max P*_μ(φ 1_{(3Î)^c})(y) / 2^k` over every level.
    pub max_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhitneySummary {
    pub levels: usize,
    pub members: usize,
    pub max_overlap: usize,
    pub disjoint: bool,
    pub coverage_matches_tail: bool,
    pub tail_within_bound: bool,
    pub triples_inside: bool,
    pub nesting_violations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weak11Summary {
    pub alphas: usize,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub index: u64,
    pub lambda: f64,
    pub m: u32,
    pub testing: TestingResult,
    pub testing_shifted: Option<TestingResult>,
    pub necessity_ok: bool,
    pub max_principle: MaxPrincipleSummary,
    pub weak11: Weak11Summary,
    pub carleson: CarlesonReport,
    pub whitney: WhitneySummary,
    pub energy: EnergyReport,
}

impl InstanceRecord {
    pub fn max_principle_ok(&self) -> bool {
        self.max_principle.violations == 0
    }

    pub fn weak11_ok(&self) -> bool {
        self.weak11.failures == 0
    }
}

/// One assertion-grade failure, with what is needed to replay it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub seed: u64,
    pub index: u64,
    pub lambda: f64,
    pub check: String,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub records: usize,
    pub max_ratio: Option<f64>,
    pub max_ratio_shifted: Option<f64>,
    pub necessity_violations: usize,
    pub max_principle_violations: usize,
    pub max_principle_max_ratio: f64,
    pub weak11_failures: usize,
    pub carleson_max_constant: f64,
    pub whitney_max_overlap: usize,
    pub qualifying_max: usize,
    pub translate_levels_max: usize,
    pub lower_bound_failures: usize,
    pub a_absorption_misses: usize,
    pub max_c_b1: Option<f64>,
    pub max_c_b21: Option<f64>,
    pub max_c_b22: Option<f64>,
    pub comparability_min: Option<f64>,
    pub comparability_max: Option<f64>,
    pub kernel_comparison_violations: usize,
    pub grid_misses: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub config: ExperimentConfig,
    pub records: Vec<InstanceRecord>,
    pub kernel_comparisons: Vec<ComparisonReport>,
    pub aggregate: Aggregate,
    pub failures: Vec<Failure>,
}

impl TestReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn csv_rows(&self) -> Vec<CsvRow> {
        self.records.iter().map(CsvRow::from).collect()
    }
}

/// One summary line per (instance, λ).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub instance: u64,
    pub lambda: f64,
    #[serde(rename = "N")]
    pub n: f64,
    #[serde(rename = "F")]
    pub f: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub ratio: Option<f64>,
    pub max_principle_ok: bool,
    pub weak11_ok: bool,
    #[serde(rename = "carleson_C")]
    pub carleson_c: f64,
    pub whitney_overlap: usize,
}

impl From<&InstanceRecord> for CsvRow {
    fn from(r: &InstanceRecord) -> Self {
        Self {
            instance: r.index,
            lambda: r.lambda,
            n: r.testing.n,
            f: r.testing.f,
            b: r.testing.b,
            ratio: r.testing.ratio,
            max_principle_ok: r.max_principle_ok(),
            weak11_ok: r.weak11_ok(),
            carleson_c: r.carleson.empirical_constant,
            whitney_overlap: r.whitney.max_overlap,
        }
    }
}

fn summarize_whitney(families: &[(i64, &WhitneyCollection)]) -> WhitneySummary {
    let mut s = WhitneySummary {
        levels: families.len(),
        members: 0,
        max_overlap: 0,
        disjoint: true,
        coverage_matches_tail: true,
        tail_within_bound: true,
        triples_inside: true,
        nesting_violations: nesting_violations(families).len(),
    };
    for (_, w) in families {
        let r = whitney_properties(w);
        s.members += r.members;
        s.max_overlap = s.max_overlap.max(r.overlap);
        s.disjoint &= r.disjoint;
        s.coverage_matches_tail &= r.coverage_matches_tail;
        s.triples_inside &= r.triples_inside;
        s.tail_within_bound &= w.uncovered_tail <= WHITNEY_TAIL_FRACTION * w.omega.measure();
    }
    s
}

/// `α` sweep for the weak-type check: every value of `ψ` and of its box
/// averages' natural scale, nudged to either side.
fn alpha_sweep(psi: &[f64]) -> Vec<f64> {
    let mean = psi.iter().sum::<f64>() / psi.len().max(1) as f64;
    let mut alphas: Vec<f64> = (-6..=6).map(|j| mean * (j as f64).exp2()).collect();
    for &p in psi {
        alphas.extend([p * (1.0 - 1e-9), p * (1.0 + 1e-9)]);
    }
    alphas.retain(|a| *a > 0.0 && a.is_finite());
    alphas
}

fn run_one(cfg: &ExperimentConfig, index: u64, lambda: f64) -> Result<(InstanceRecord, Vec<Failure>)> {
    let g = gen_instance(cfg, index, lambda)?;
    let prepared = PreparedInstance::new(g.instance)?;
    let phi = g.phi;
    let inst = prepared.instance();
    let mut failures = Vec::new();
    let mut fail = |check: &str, detail: String| {
        failures.push(Failure {
            seed: cfg.seed,
            index,
            lambda,
            check: check.to_string(),
            detail,
        })
    };

    let family = interval_family(inst, false);
    let testing = prepared.testing(&family, cfg.norm_tol, cfg.norm_max_iters)?;
    let testing_shifted = if cfg.shift_thirds {
        Some(prepared.testing(&interval_family(inst, true), cfg.norm_tol, cfg.norm_max_iters)?)
    } else {
        None
    };
    let mut necessity_ok = true;
    for t in std::iter::once(&testing).chain(testing_shifted.as_ref()) {
        let bound = t.n * (1.0 + NECESSITY_SLACK);
        if t.f > bound || t.b > bound {
            necessity_ok = false;
            fail("necessity", format!("F = {}, B = {}, N = {}", t.f, t.b, t.n));
        }
        if !t.converged {
            fail("norm-convergence", format!("power iteration stopped after {} steps", t.iterations));
        }
    }

    let m = cfg.level_shift(lambda);
    let mode = cfg.mp_constant_mode;
    let levels = build_levels(&prepared, &phi, m, mode.whitney_mode(), cfg.grid_refinement)?;

    let constant = cfg.mp_constant(lambda);
    let mut mp = MaxPrincipleSummary {
        constant,
        levels: levels.whitney.len(),
        pairs_checked: 0,
        violations: 0,
        max_ratio: 0.0,
    };
    for (&k, w) in &levels.whitney {
        let r = check_max_principle(&prepared, &phi, k, w, constant);
        mp.pairs_checked += r.pairs_checked;
        mp.violations += r.violations.len();
        mp.max_ratio = mp.max_ratio.max(r.max_ratio);
        // literal-mode violations are findings about the literal lemma, not
        // assertion failures
        if mode == super::config::MpConstantMode::Repaired33 {
            for v in r.violations {
                fail("max-principle", format!("{v:?}"));
            }
        }
    }

    let families: Vec<(i64, &WhitneyCollection)> = levels.whitney.iter().map(|(k, w)| (*k as i64, w)).collect();
    let whitney = summarize_whitney(&families);
    if !(whitney.disjoint && whitney.coverage_matches_tail && whitney.triples_inside) {
        fail("whitney", format!("{whitney:?}"));
    }
    if mode == super::config::MpConstantMode::Repaired33 && !whitney.tail_within_bound {
        fail("whitney-tail", format!("{whitney:?}"));
    }
    if whitney.max_overlap > cfg.overlap_bound {
        fail("whitney-overlap", format!("overlap {} > {}", whitney.max_overlap, cfg.overlap_bound));
    }
    if whitney.nesting_violations > 0 {
        fail("whitney-nesting", format!("{} violations", whitney.nesting_violations));
    }

    let mu_tilde = tilde(&inst.mu);
    let psi: Vec<f64> = inst.mu.atoms().iter().zip(&phi).map(|(a, p)| p / a.t).collect();
    let alphas = alpha_sweep(&psi);
    let mut weak11 = Weak11Summary {
        alphas: alphas.len(),
        failures: 0,
    };
    for &alpha in &alphas {
        let r = weak_11_check(&mu_tilde, &psi, alpha)?;
        if !r.holds {
            weak11.failures += 1;
            fail("weak-11", format!("alpha = {alpha}: {r:?}"));
        }
    }

    let stopping = principal_intervals(&mu_tilde, &phi, levels.root)?;
    let carleson = carleson_packing_check(&stopping, &mu_tilde, &phi, cfg.carleson_constant);
    if !carleson.holds {
        fail("carleson", format!("{carleson:?}"));
    }

    let ecfg = EnergyConfig {
        delta: cfg.delta,
        m,
        whitney_mode: mode.whitney_mode(),
        grid_refinement: cfg.grid_refinement,
        comparability_samples: 2,
    };
    let energy = decompose_with_levels(&prepared, &phi, &levels, &ecfg, testing.f, testing.b)?;
    if !energy.conservation_ok {
        fail("energy-conservation", format!("A + B + unassigned != level sum: {energy:?}"));
    }
    if !energy.a_bounded {
        fail("energy-light", format!("A = {} above delta times the covered mass", energy.a_term));
    }
    if !energy.a_absorbed {
        fail("energy-absorption", format!("A = {} above delta times {}", energy.a_term, energy.total));
    }
    if !energy.bracket_ok {
        fail("energy-bracket", format!("{} vs {}", energy.riemann_sum, energy.total));
    }
    if !energy.qualifying_ok {
        fail("qualifying-count", format!("{} > {}", energy.qualifying_max, energy.qualifying_bound));
    }
    if energy.translate_levels_max > translate_levels_bound(m) {
        fail("translate-levels", format!("{} > {}", energy.translate_levels_max, translate_levels_bound(m)));
    }
    if !energy.comparability.holds {
        fail("box-comparability", format!("{:?}", energy.comparability));
    }

    Ok((
        InstanceRecord {
            index,
            lambda,
            m,
            testing,
            testing_shifted,
            necessity_ok,
            max_principle: mp,
            weak11,
            carleson,
            whitney,
            energy,
        },
        failures,
    ))
}

/// Kernel comparisons in both geometries, for the literal witness reach 3 and
/// the repaired reach 4.
pub fn kernel_comparisons(seed: u64, lambda: f64, samples: usize) -> Result<Vec<ComparisonReport>> {
    let p = BesselParam::new(lambda)?;
    let mut rng = instance_rng(seed, COMPARISON_STREAM);
    [
        (ComparisonCase::Far, 3.0),
        (ComparisonCase::Tall, 3.0),
        (ComparisonCase::Far, 4.0),
        (ComparisonCase::Tall, 4.0),
    ]
    .into_iter()
    .map(|(case, reach)| sample_kernel_comparisons(&p, case, reach, samples, &mut rng))
    .collect()
}

fn max_opt(acc: Option<f64>, v: Option<f64>) -> Option<f64> {
    match (acc, v) {
        (Some(a), Some(b)) => Some(a.max(b)),
        (a, b) => a.or(b),
    }
}

fn min_opt(acc: Option<f64>, v: Option<f64>) -> Option<f64> {
    match (acc, v) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

pub fn aggregate(records: &[InstanceRecord], comparisons: &[ComparisonReport]) -> Aggregate {
    let mut a = Aggregate {
        records: records.len(),
        ..Default::default()
    };
    for r in records {
        a.max_ratio = max_opt(a.max_ratio, r.testing.ratio);
        a.max_ratio_shifted = max_opt(a.max_ratio_shifted, r.testing_shifted.and_then(|t| t.ratio));
        a.necessity_violations += usize::from(!r.necessity_ok);
        a.max_principle_violations += r.max_principle.violations;
        a.max_principle_max_ratio = a.max_principle_max_ratio.max(r.max_principle.max_ratio);
        a.weak11_failures += r.weak11.failures;
        a.carleson_max_constant = a.carleson_max_constant.max(r.carleson.empirical_constant);
        a.whitney_max_overlap = a.whitney_max_overlap.max(r.whitney.max_overlap);
        a.qualifying_max = a.qualifying_max.max(r.energy.qualifying_max);
        a.translate_levels_max = a.translate_levels_max.max(r.energy.translate_levels_max);
        a.lower_bound_failures += r.energy.lower_bound_failures;
        a.a_absorption_misses += usize::from(!r.energy.a_absorbed);
        a.max_c_b1 = max_opt(a.max_c_b1, r.energy.c_b1);
        a.max_c_b21 = max_opt(a.max_c_b21, r.energy.c_b21);
        a.max_c_b22 = max_opt(a.max_c_b22, r.energy.c_b22);
        if r.energy.comparability.samples > 0 {
            a.comparability_min = min_opt(a.comparability_min, Some(r.energy.comparability.min_ratio));
            a.comparability_max = max_opt(a.comparability_max, Some(r.energy.comparability.max_ratio));
        }
        a.grid_misses += r.energy.grid_misses;
    }
    a.kernel_comparison_violations = comparisons.iter().map(|c| c.violations).sum();
    a
}

/// Every generated instance at every `λ`: testing constants and norm, then
/// each structural check. Records are ordered by `(index, λ position)`.
pub fn run_equivalence_suite(cfg: &ExperimentConfig) -> Result<TestReport> {
    cfg.validate()?;
    let jobs: Vec<(u64, f64)> = (0..cfg.instance_count as u64)
        .flat_map(|i| cfg.lambda_set.iter().map(move |&l| (i, l)))
        .collect();
    let results: Vec<(InstanceRecord, Vec<Failure>)> = jobs
        .par_iter()
        .map(|&(i, l)| run_one(cfg, i, l))
        .collect::<Result<_>>()?;
    let mut records = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (r, f) in results {
        records.push(r);
        failures.extend(f);
    }
    let mut comparisons = Vec::new();
    if cfg.kernel_samples > 0 {
        for &l in &cfg.lambda_set {
            comparisons.extend(kernel_comparisons(cfg.seed, l, cfg.kernel_samples)?);
        }
    }
    for c in &comparisons {
        // the literal constants are checked as stated; reach 4 backs the
        // repaired constant
        if c.violations > 0 {
            failures.push(Failure {
                seed: cfg.seed,
                index: COMPARISON_STREAM,
                lambda: c.lambda,
                check: "kernel-comparison".into(),
                detail: format!("{:?} reach {}: {} violations", c.case, c.reach, c.violations),
            });
        }
    }
    let aggregate = aggregate(&records, &comparisons);
    Ok(TestReport {
        config: cfg.clone(),
        records,
        kernel_comparisons: comparisons,
        aggregate,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(count: usize) -> ExperimentConfig {
        ExperimentConfig {
            instance_count: count,
            n_sigma: 6,
            n_mu: 6,
            lambda_set: vec![0.5, 1.0],
            ..Default::default()
        }
    }

    #[test]
    fn small_suite_passes_and_is_deterministic() {
        let cfg = small(3);
        let a = run_equivalence_suite(&cfg).unwrap();
        assert!(a.passed(), "{:#?}", a.failures);
        assert_eq!(a.records.len(), 6);
        let order: Vec<(u64, f64)> = a.records.iter().map(|r| (r.index, r.lambda)).collect();
        assert_eq!(order, vec![(0, 0.5), (0, 1.0), (1, 0.5), (1, 1.0), (2, 0.5), (2, 1.0)]);
        let b = run_equivalence_suite(&cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.csv_rows().len(), 6);
    }

    #[test]
    fn single_atom_ratio_is_one_half() {
        let cfg = ExperimentConfig {
            n_sigma: 1,
            n_mu: 1,
            ..small(4)
        };
        let r = run_equivalence_suite(&cfg).unwrap();
        assert!(r.passed(), "{:#?}", r.failures);
        for rec in &r.records {
            assert!((rec.testing.ratio.unwrap() - 0.5).abs() < 1e-8, "{rec:?}");
        }
    }

    #[test]
    fn joint_scaling_leaves_ratios_unchanged() {
        let cfg = small(2);
        let base = run_equivalence_suite(&cfg).unwrap();
        for rec in &base.records {
            let g = gen_instance(&cfg, rec.index, rec.lambda).unwrap();
            let mut inst = g.instance.clone();
            inst.sigma = inst.sigma.scaled(2.0);
            inst.mu = inst.mu.scaled(2.0);
            let p = PreparedInstance::new(inst).unwrap();
            let fam = interval_family(p.instance(), false);
            let t = p.testing(&fam, cfg.norm_tol, cfg.norm_max_iters).unwrap();
            assert!((t.ratio.unwrap() - rec.testing.ratio.unwrap()).abs() < 1e-9);
        }
    }
}
