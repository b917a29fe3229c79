use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::Result;
use crate::geometry::{Atom1D, Atom2D, DiscreteMeasure1D, DiscreteMeasure2D};
use crate::kernel::BesselParam;
use crate::operators::TwoWeightInstance;

/// A generated measure pair with a nonnegative test function on the μ-atoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedInstance {
    pub index: u64,
    pub instance: TwoWeightInstance,
    pub phi: Vec<f64>,
}

/// Stream `index` of the ChaCha generator seeded with `seed`.
pub fn instance_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn log_uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo.ln()..hi.ln()).exp()
    }
}

/// Deterministic in `(cfg.seed, index)`; `λ` only sets the kernel parameter,
/// so the same measures are reused across `cfg.lambda_set`.
pub fn gen_instance(cfg: &ExperimentConfig, index: u64, lambda: f64) -> Result<GeneratedInstance> {
    let mut rng = instance_rng(cfg.seed, index);
    let w = cfg.window;
    let sigma: Vec<Atom1D> = (0..cfg.n_sigma)
        .map(|_| Atom1D {
            y: log_uniform(&mut rng, w.position),
            w: log_uniform(&mut rng, w.weight),
        })
        .collect();
    let mu: Vec<Atom2D> = (0..cfg.n_mu)
        .map(|_| Atom2D {
            x: log_uniform(&mut rng, w.position),
            t: log_uniform(&mut rng, w.height),
            w: log_uniform(&mut rng, w.weight),
        })
        .collect();
    // (0, 1]
    let phi: Vec<f64> = (0..cfg.n_mu).map(|_| 1.0 - rng.gen::<f64>()).collect();
    let instance = TwoWeightInstance::new(
        BesselParam::new(lambda)?,
        DiscreteMeasure1D::new(sigma)?,
        DiscreteMeasure2D::new(mu)?,
    )?;
    Ok(GeneratedInstance { index, instance, phi })
}
