//! Seeded synthetic model and feature generators. Weights scale with
//! 1/sqrt(fan-in) so gate pre-activations stay in the live region of the
//! nonlinearities, and the bandlimited feature profile moves slowly enough
//! that a mid-range delta threshold suppresses a useful fraction of updates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fixedpoint::{quantize, QFormat};
use crate::mat::MatF;
use crate::model::GruLayerParamsF;

/// Temporal character of generated features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureProfile {
    /// Independent uniform samples per timestep: deltas rarely small.
    Iid,
    /// A few slow sinusoids per channel: deltas mostly small.
    Bandlimited,
}

impl std::str::FromStr for FeatureProfile {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "iid" => Ok(Self::Iid),
            "bandlimited" => Ok(Self::Bandlimited),
            other => Err(crate::error::Error::Parse(format!(
                "unknown feature profile {other:?} (use iid or bandlimited)"
            ))),
        }
    }
}

fn random_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> MatF {
    let scale = 1.0 / (cols as f64).sqrt();
    let mut m = MatF::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m.set(i, j, rng.gen_range(-scale..scale));
        }
    }
    m
}

/// Deterministic random model: `layers` GRU layers of `hidden` units over an
/// `input`-dimensional first layer.
pub fn gen_model(layers: usize, input: usize, hidden: usize, seed: u64) -> Vec<GruLayerParamsF> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..layers)
        .map(|l| {
            let n_in = if l == 0 { input } else { hidden };
            GruLayerParamsF {
                w_ir: random_mat(&mut rng, hidden, n_in),
                w_iu: random_mat(&mut rng, hidden, n_in),
                w_ic: random_mat(&mut rng, hidden, n_in),
                w_hr: random_mat(&mut rng, hidden, hidden),
                w_hu: random_mat(&mut rng, hidden, hidden),
                w_hc: random_mat(&mut rng, hidden, hidden),
                b_r: (0..hidden).map(|_| rng.gen_range(-0.1..0.1)).collect(),
                b_u: (0..hidden).map(|_| rng.gen_range(-0.1..0.1)).collect(),
                b_c: (0..hidden).map(|_| rng.gen_range(-0.1..0.1)).collect(),
            }
        })
        .collect()
}

/// Deterministic random float features, `steps` rows of width `dim`.
pub fn gen_features(steps: usize, dim: usize, seed: u64, profile: FeatureProfile) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match profile {
        FeatureProfile::Iid => (0..steps)
            .map(|_| (0..dim).map(|_| rng.gen_range(-4.0..4.0)).collect())
            .collect(),
        FeatureProfile::Bandlimited => {
            // three sinusoids per channel, periods of roughly 30..500 steps
            let channels: Vec<[(f64, f64, f64); 3]> = (0..dim)
                .map(|_| {
                    [(); 3].map(|_| {
                        (
                            rng.gen_range(0.3..2.0),                      // amplitude
                            rng.gen_range(0.002..0.035),                  // cycles per step
                            rng.gen_range(0.0..std::f64::consts::TAU),    // phase
                        )
                    })
                })
                .collect();
            (0..steps)
                .map(|t| {
                    channels
                        .iter()
                        .map(|comps| {
                            comps
                                .iter()
                                .map(|&(a, f, p)| {
                                    a * (std::f64::consts::TAU * f * t as f64 + p).sin()
                                })
                                .sum()
                        })
                        .collect()
                })
                .collect()
        }
    }
}

/// Quantized features for the engine.
pub fn gen_features_q(
    steps: usize,
    dim: usize,
    seed: u64,
    profile: FeatureProfile,
    act: QFormat,
) -> Vec<Vec<i16>> {
    gen_features(steps, dim, seed, profile)
        .into_iter()
        .map(|row| row.into_iter().map(|v| quantize(v, act) as i16).collect())
        .collect()
}
