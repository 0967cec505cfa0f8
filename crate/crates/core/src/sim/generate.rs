use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dist::normal_sf;
use crate::ensemble::{Family, PValueEnsemble};
use crate::error::Result;

use super::{Dependence, ScenarioConfig};

/// The random stream for one replicate: the ChaCha key comes from `seed`
/// and the stream id is the replicate index, so any replicate can be
/// regenerated on its own, in any order, on any thread.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// Draws replicate `replicate` of the scenario, with a truth mask.
///
/// Independent nulls are `Uniform(0, 1)` and non-nulls are
/// `1 - Phi(Z + mu)`. Under equicorrelation every hypothesis shares one
/// latent factor, `X = sqrt(rho) Z0 + sqrt(1 - rho) Z + mu`, and
/// `p = 1 - Phi(X)`; this one-sided Gaussian model is PRDS on the nulls.
pub fn generate(config: &ScenarioConfig, replicate: u64) -> Result<PValueEnsemble> {
    config.validate()?;
    let mut rng = replicate_rng(config.seed, replicate);
    let shared: f64 = match config.dependence {
        Dependence::Independent => 0.0,
        Dependence::Equicorrelated(_) => rng.sample(StandardNormal),
    };
    let families = (0..config.m)
        .map(|i| {
            let n = config.family_size(i);
            let truth: Vec<bool> = (0..n).map(|j| config.truth.is_null(i, j, config.m, n)).collect();
            let p_values: Vec<f64> = truth
                .iter()
                .map(|&null| {
                    let shift = if null { 0.0 } else { config.truth.effect() };
                    match config.dependence {
                        Dependence::Independent if null => rng.random::<f64>(),
                        Dependence::Independent => {
                            let z: f64 = rng.sample(StandardNormal);
                            normal_sf(z + shift)
                        }
                        Dependence::Equicorrelated(rho) => {
                            let z: f64 = rng.sample(StandardNormal);
                            normal_sf(rho.sqrt() * shared + (1.0 - rho).sqrt() * z + shift)
                        }
                    }
                })
                .collect();
            Family::new(i.to_string(), p_values).with_truth(truth)
        })
        .collect();
    PValueEnsemble::new(families)
}
