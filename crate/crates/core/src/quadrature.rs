//! Globally adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! The driver keeps every panel in a max-heap keyed on its error estimate and
//! bisects the worst panel until the summed error estimate drops below the
//! requested tolerance. Panels that reach the depth cap are retired; if the
//! remaining error is still too large the outcome is marked unconverged.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the odd Kronrod nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PanelEstimate {
    pub value: f64,
    pub error: f64,
}

/// One 15-point Kronrod panel on `[a, b]` with the QUADPACK error heuristic.
pub fn gauss_kronrod_15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> PanelEstimate {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut resk = WGK[7] * fc;
    let mut resg = WG[3] * fc;
    let mut resabs = resk.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * resk;
    let mut resasc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let h = half.abs();
    let value = resk * half;
    resabs *= h;
    resasc *= h;
    let mut error = ((resk - resg) * half).abs();
    if resasc != 0.0 && error != 0.0 {
        error = resasc * (200.0 * error / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * resabs);
    }
    PanelEstimate { value, error }
}

#[derive(Clone, Copy, Debug)]
pub struct QuadConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Maximum number of bisections applied to any initial panel.
    pub max_depth: u32,
    /// Hard cap on the number of live panels.
    pub max_panels: usize,
}

impl QuadConfig {
    pub fn relative(rel_tol: f64, max_depth: u32) -> Self {
        Self {
            rel_tol,
            abs_tol: 0.0,
            max_depth,
            max_panels: 4096,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadOutcome {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
    pub converged: bool,
}

struct Panel {
    a: f64,
    b: f64,
    depth: u32,
    est: PanelEstimate,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.est.error == other.est.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.est.error.total_cmp(&other.est.error)
    }
}

/// Integrates `f` over `[breaks[0], breaks[last]]`, seeding one panel per
/// consecutive pair of breakpoints. Breakpoints must be non-decreasing;
/// zero-width pairs are ignored.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, breaks: &[f64], cfg: &QuadConfig) -> QuadOutcome {
    let mut heap = BinaryHeap::new();
    let mut retired: Vec<Panel> = Vec::new();
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            let est = gauss_kronrod_15(f, w[0], w[1]);
            heap.push(Panel {
                a: w[0],
                b: w[1],
                depth: 0,
                est,
            });
        }
    }
    let mut total: f64 = heap.iter().map(|p| p.est.value).sum();
    let mut err: f64 = heap.iter().map(|p| p.est.error).sum();
    let tolerance = |total: f64| cfg.abs_tol.max(cfg.rel_tol * total.abs());

    while err > tolerance(total) {
        let Some(worst) = heap.pop() else { break };
        if worst.depth >= cfg.max_depth || heap.len() + retired.len() + 2 > cfg.max_panels {
            retired.push(worst);
            continue;
        }
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            retired.push(worst);
            continue;
        }
        let left = gauss_kronrod_15(f, worst.a, mid);
        let right = gauss_kronrod_15(f, mid, worst.b);
        total += left.value + right.value - worst.est.value;
        err += left.error + right.error - worst.est.error;
        for (a, b, est) in [(worst.a, mid, left), (mid, worst.b, right)] {
            heap.push(Panel {
                a,
                b,
                depth: worst.depth + 1,
                est,
            });
        }
    }

    // Re-sum from scratch so the running updates do not leak rounding drift.
    let all = heap.iter().chain(retired.iter());
    let (value, error) = all.fold((0.0, 0.0), |(v, e), p| (v + p.est.value, e + p.est.error));
    QuadOutcome {
        value,
        error,
        panels: heap.len() + retired.len(),
        converged: error <= tolerance(value),
    }
}
