//! The Bessel Poisson kernel
//!
//! ```text
//! P_t(x, y) = (2λt/π) ∫_0^π sin^{2λ−1}θ / (x² + y² + t² − 2xy cos θ)^{λ+1} dθ
//! ```
//!
//! evaluated by adaptive Gauss–Kronrod quadrature, and the reference measure
//! `dm_λ(x) = x^{2λ} dx`.
//!
//! The θ-range is split at π/2 and each half is integrated in the distance
//! `s` from its endpoint (θ = s on the left half, θ = π − s on the right).
//! For λ < 1 the substitution `s = u^{1/(2λ)}` absorbs the `s^{2λ−1}` endpoint
//! behaviour, so the transformed integrand is bounded (and at least C¹) at
//! `u = 0`. The denominator is written as `(x−y)² + t² + 4xy sin²(θ/2)` to
//! avoid cancellation when `x ≈ y` and `t` is small, and the left half is
//! pre-split geometrically around the peak width `√(((x−y)² + t²)/(xy))`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{invalid, Error, Result};
use crate::geometry::{general_interval, Interval};
use crate::quadrature::{integrate, QuadConfig};

pub const DEFAULT_REL_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_DEPTH: u32 = 60;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BesselParam {
    lambda: f64,
    quad_rel_tol: f64,
    quad_max_depth: u32,
}

impl BesselParam {
    pub fn new(lambda: f64) -> Result<Self> {
        Self::with_quadrature(lambda, DEFAULT_REL_TOL, DEFAULT_MAX_DEPTH)
    }

    pub fn with_quadrature(lambda: f64, quad_rel_tol: f64, quad_max_depth: u32) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(invalid(format!("lambda must be > 0, got {lambda}")));
        }
        if !(quad_rel_tol > 0.0 && quad_rel_tol < 1.0) {
            return Err(invalid(format!("quad_rel_tol must lie in (0, 1), got {quad_rel_tol}")));
        }
        if quad_max_depth == 0 {
            return Err(invalid("quad_max_depth must be at least 1"));
        }
        Ok(Self {
            lambda,
            quad_rel_tol,
            quad_max_depth,
        })
    }

    #[inline]
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    #[inline]
    pub fn quad_rel_tol(&self) -> f64 {
        self.quad_rel_tol
    }

    #[inline]
    pub fn quad_max_depth(&self) -> u32 {
        self.quad_max_depth
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelQuery {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

impl KernelQuery {
    pub fn new(x: f64, y: f64, t: f64) -> Result<Self> {
        let q = Self { x, y, t };
        q.validate()?;
        Ok(q)
    }

    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.x) && ok(self.y) && ok(self.t) {
            Ok(())
        } else {
            Err(invalid(format!(
                "kernel arguments must be positive, got x = {}, y = {}, t = {}",
                self.x, self.y, self.t
            )))
        }
    }
}

// sin(s)/s, accurate near 0
fn sinc(s: f64) -> f64 {
    if s.abs() < 1e-4 {
        let s2 = s * s;
        1.0 - s2 / 6.0 + s2 * s2 / 120.0
    } else {
        s.sin() / s
    }
}

/// Evaluates `P_t^{[λ]}(x, y)` to relative accuracy `quad_rel_tol`.
pub fn eval_kernel(p: &BesselParam, q: &KernelQuery) -> Result<f64> {
    q.validate()?;
    let lambda = p.lambda;
    let KernelQuery { x, y, t } = *q;
    let gap2 = (x - y) * (x - y) + t * t;
    let cross = 4.0 * x * y;
    let power = lambda + 1.0;
    let expo = 2.0 * lambda - 1.0;

    // Left half: θ = s, D = gap² + 4xy sin²(s/2). Right half: θ = π − s,
    // D = gap² + 4xy cos²(s/2).
    let denom_left = |s: f64| {
        let h = (0.5 * s).sin();
        gap2 + cross * h * h
    };
    let denom_right = |s: f64| {
        let h = (0.5 * s).cos();
        gap2 + cross * h * h
    };

    // Peak width of the left half in θ.
    let width = (gap2 / (x * y)).sqrt();
    let mut s_breaks = vec![0.0];
    if width < FRAC_PI_2 {
        let mut b = width / 8.0;
        while b < FRAC_PI_2 {
            s_breaks.push(b);
            b *= 2.0;
        }
    }
    s_breaks.push(FRAC_PI_2);

    let cfg = QuadConfig::relative(p.quad_rel_tol, p.quad_max_depth);
    let substitute = lambda < 1.0;
    let (left, right) = if substitute {
        // s = u^{1/(2λ)}, ds = s^{1−2λ}/(2λ) du
        let inv = 1.0 / (2.0 * lambda);
        let u_breaks: Vec<f64> = s_breaks.iter().map(|s| s.powf(2.0 * lambda)).collect();
        let g_left = |u: f64| {
            let s = u.powf(inv);
            inv * sinc(s).powf(expo) / denom_left(s).powf(power)
        };
        let g_right = |u: f64| {
            let s = u.powf(inv);
            inv * sinc(s).powf(expo) / denom_right(s).powf(power)
        };
        let right_breaks = [0.0, u_breaks[u_breaks.len() - 1]];
        (
            integrate(&g_left, &u_breaks, &cfg),
            integrate(&g_right, &right_breaks, &cfg),
        )
    } else {
        let g_left = |s: f64| s.sin().powf(expo) / denom_left(s).powf(power);
        let g_right = |s: f64| s.sin().powf(expo) / denom_right(s).powf(power);
        (
            integrate(&g_left, &s_breaks, &cfg),
            integrate(&g_right, &[0.0, FRAC_PI_2], &cfg),
        )
    };

    let integral = left.value + right.value;
    let error = left.error + right.error;
    let prefactor = 2.0 * lambda * t / PI;
    if !(integral.is_finite() && integral > 0.0) || error > p.quad_rel_tol * integral {
        return Err(Error::AccuracyNotReached {
            value: prefactor * integral,
            error: prefactor * error,
        });
    }
    Ok(prefactor * integral)
}

/// Evaluates every query (concurrently); the output order matches `qs`.
pub fn eval_kernel_batch(p: &BesselParam, qs: &[KernelQuery]) -> Result<Vec<f64>> {
    qs.par_iter()
        .enumerate()
        .map(|(index, q)| {
            eval_kernel(p, q).map_err(|e| Error::Batch {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

/// `m_λ((a, b)) = (b^{2λ+1} − a^{2λ+1}) / (2λ+1)`.
pub fn m_lambda(p: &BesselParam, interval: &Interval) -> f64 {
    m_lambda_span(p, interval.a(), interval.b())
}

/// `m_λ` of the span `(a, b) ∩ (0, ∞)`; zero when the span is empty.
pub fn m_lambda_span(p: &BesselParam, a: f64, b: f64) -> f64 {
    let a = a.max(0.0);
    if b <= a {
        return 0.0;
    }
    let e = 2.0 * p.lambda + 1.0;
    (b.powf(e) - a.powf(e)) / e
}

/// Right-hand side of the kernel size estimate without its constant:
/// `1/(m_λ(I(y,t)) + m_λ(I(y,|x−y|))) · (t/(t+|x−y|))^γ`.
pub fn upper_bound_shape(p: &BesselParam, q: &KernelQuery, gamma: f64) -> Result<f64> {
    q.validate()?;
    let d = (q.x - q.y).abs();
    let near = m_lambda(p, &general_interval(q.y, q.t)?);
    let far = if d > 0.0 {
        m_lambda(p, &general_interval(q.y, d)?)
    } else {
        0.0
    };
    Ok((q.t / (q.t + d)).powf(gamma) / (near + far))
}

/// Whether `P_t(y, x) ≤ C · shape(γ)` holds at `q`.
pub fn check_kernel_upper_bound(p: &BesselParam, q: &KernelQuery, gamma: f64, c: f64) -> Result<bool> {
    if !(gamma > 0.0 && c > 0.0) {
        return Err(invalid("gamma and C must be positive"));
    }
    let value = eval_kernel(p, &KernelQuery { x: q.y, y: q.x, t: q.t })?;
    Ok(value <= c * upper_bound_shape(p, q, gamma)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpperBoundFit {
    pub gamma: f64,
    pub constant: f64,
    /// `(γ, C*(γ) on the grid, C*(γ) on the widened grid)` for every candidate.
    pub candidates: Vec<(f64, f64, f64)>,
}

/// Smallest `C` making the size estimate hold on every grid point at fixed `γ`.
pub fn fit_upper_bound_constant(p: &BesselParam, grid: &[KernelQuery], gamma: f64) -> Result<f64> {
    let values = eval_kernel_batch(p, grid)?;
    grid.iter().zip(values).try_fold(0.0f64, |acc, (q, v)| {
        // the estimate is stated for P_t(y, x); the kernel is symmetric
        Ok(acc.max(v / upper_bound_shape(p, q, gamma)?))
    })
}

/// Log-spaced `n × n × n` grid of queries over `[lo, hi]³`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<KernelQuery> {
    let pts: Vec<f64> = (0..n)
        .map(|i| {
            let s = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
            (lo.ln() + s * (hi.ln() - lo.ln())).exp()
        })
        .collect();
    let mut out = Vec::with_capacity(n * n * n);
    for &x in &pts {
        for &y in &pts {
            for &t in &pts {
                out.push(KernelQuery { x, y, t });
            }
        }
    }
    out
}

/// Fits `(γ*, C*)` for the size estimate. Each candidate `γ` is fitted on
/// `[lo, hi]³` and on the grid widened by a factor 4 at both ends; `γ*` is the
/// largest candidate whose fitted constant grows by at most 5% under the
/// widening (a growing constant means the decay exponent is too optimistic).
pub fn calibrate_upper_bound(
    p: &BesselParam,
    lo: f64,
    hi: f64,
    n: usize,
    gammas: &[f64],
) -> Result<UpperBoundFit> {
    let base = log_grid(lo, hi, n);
    let wide = log_grid(lo / 4.0, hi * 4.0, n + 2);
    let mut candidates = Vec::with_capacity(gammas.len());
    for &g in gammas {
        let c_base = fit_upper_bound_constant(p, &base, g)?;
        let c_wide = fit_upper_bound_constant(p, &wide, g)?;
        candidates.push((g, c_base, c_wide));
    }
    let best = candidates
        .iter()
        .filter(|(_, cb, cw)| *cw <= 1.05 * *cb)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .or_else(|| candidates.iter().min_by(|a, b| a.0.total_cmp(&b.0)))
        .ok_or_else(|| invalid("no candidate exponents"))?;
    Ok(UpperBoundFit {
        gamma: best.0,
        constant: best.2,
        candidates,
    })
}
