use serde::{Deserialize, Serialize};

use crate::dyadic::WhitneyMode;
use crate::error::{invalid, Result};

/// Which Whitney construction, and which maximum-principle constant goes
/// with it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MpConstantMode {
    /// Literal Whitney conditions with `19^{λ+1}`.
    #[serde(rename = "paper-19")]
    Paper19,
    /// Maximal `3I ⊂ Ω` construction with `33^{λ+1}`.
    #[serde(rename = "repaired-33")]
    Repaired33,
}

impl MpConstantMode {
    pub fn constant(self, lambda: f64) -> f64 {
        match self {
            Self::Paper19 => 19f64.powf(lambda + 1.0),
            Self::Repaired33 => 33f64.powf(lambda + 1.0),
        }
    }

    pub fn whitney_mode(self) -> WhitneyMode {
        match self {
            Self::Paper19 => WhitneyMode::Literal,
            Self::Repaired33 => WhitneyMode::Repaired,
        }
    }
}

impl std::str::FromStr for MpConstantMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-19" | "paper" | "literal" => Ok(Self::Paper19),
            "repaired-33" | "repaired" => Ok(Self::Repaired33),
            other => Err(invalid(format!("unknown max-principle mode {other:?}"))),
        }
    }
}

/// Log-uniform sampling ranges for generated instances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingWindow {
    pub position: (f64, f64),
    pub height: (f64, f64),
    pub weight: (f64, f64),
}

impl Default for SamplingWindow {
    fn default() -> Self {
        Self {
            position: (0.25, 8.0),
            height: (0.05, 2.0),
            weight: (0.1, 10.0),
        }
    }
}

/// Missing fields in a serialized config take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_sigma: usize,
    pub n_mu: usize,
    pub lambda_set: Vec<f64>,
    pub delta: f64,
    /// Level shift; `None` picks the smallest admissible value plus one for each `λ`.
    pub m: Option<u32>,
    pub mp_constant_mode: MpConstantMode,
    pub instance_count: usize,
    pub window: SamplingWindow,
    /// Also compute the ratio over the family enriched with one-third shifts.
    pub shift_thirds: bool,
    /// Asserted bound on `sup Σ 1_{3I}` for the Whitney families.
    pub overlap_bound: usize,
    /// Asserted constant in the stopping-family packing inequality.
    pub carleson_constant: f64,
    pub norm_tol: f64,
    pub norm_max_iters: usize,
    /// Level-set grid cells per octave, as a power of two.
    pub grid_refinement: u32,
    /// Number of sampled configurations per geometry in the pointwise
    /// kernel comparisons (0 disables them).
    pub kernel_samples: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_sigma: 12,
            n_mu: 12,
            lambda_set: vec![1.0],
            delta: 0.25,
            m: None,
            mp_constant_mode: MpConstantMode::Repaired33,
            instance_count: 100,
            window: SamplingWindow::default(),
            shift_thirds: true,
            overlap_bound: 12,
            carleson_constant: 8.0,
            norm_tol: crate::operators::DEFAULT_NORM_TOL,
            norm_max_iters: crate::operators::DEFAULT_NORM_MAX_ITERS,
            grid_refinement: 6,
            kernel_samples: 0,
        }
    }
}

fn window_ok((lo, hi): (f64, f64)) -> bool {
    lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sigma == 0 || self.n_mu == 0 {
            return Err(invalid("atom counts must be positive"));
        }
        if self.instance_count == 0 {
            return Err(invalid("instance_count must be positive"));
        }
        if self.lambda_set.is_empty() || self.lambda_set.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(invalid("lambda_set must be a nonempty list of positive numbers"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if let Some(m) = self.m {
            for &l in &self.lambda_set {
                let c = self.mp_constant_mode.constant(l);
                if m >= 1023 || (m as f64).exp2() <= c + 1.0 {
                    return Err(invalid(format!("m = {m} needs 2^m > C_MP + 1 = {} at lambda = {l}", c + 1.0)));
                }
            }
        }
        let w = &self.window;
        if !(window_ok(w.position) && window_ok(w.height) && window_ok(w.weight)) {
            return Err(invalid("sampling windows must be positive ranges"));
        }
        if !(self.norm_tol > 0.0 && self.norm_tol < 1.0) || self.norm_max_iters == 0 {
            return Err(invalid("norm_tol must lie in (0, 1) and norm_max_iters be positive"));
        }
        if self.overlap_bound == 0 || !(self.carleson_constant > 0.0) {
            return Err(invalid("overlap_bound and carleson_constant must be positive"));
        }
        if self.grid_refinement > 12 {
            return Err(invalid("grid_refinement above 12 is not supported"));
        }
        Ok(())
    }

    pub fn mp_constant(&self, lambda: f64) -> f64 {
        self.mp_constant_mode.constant(lambda)
    }

    /// `m` for this `λ`: the configured value, or `⌈log₂(C_MP + 1)⌉ + 1`.
    pub fn level_shift(&self, lambda: f64) -> u32 {
        self.m
            .unwrap_or_else(|| default_level_shift(self.mp_constant(lambda)))
    }
}

pub fn default_level_shift(mp_constant: f64) -> u32 {
    (mp_constant + 1.0).log2().ceil() as u32 + 1
}
