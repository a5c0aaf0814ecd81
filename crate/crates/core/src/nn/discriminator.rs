use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::lstm::{LstmpConfig, LstmpNet, LstmpNetCache, Residual};
use super::seq::SeqBatch;
use crate::error::{Error, Result};
use crate::numeric::{Parameter, Parameterized, Real, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    /// Width of the scored features (enhanced or clean).
    pub feature_dim: usize,
    /// Width of the per-frame condition; 0 for an unconditioned discriminator.
    pub condition_dim: usize,
    pub layers: usize,
    pub cells: usize,
    pub proj: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            feature_dim: 40,
            condition_dim: 0,
            layers: 2,
            cells: 256,
            proj: 40,
        }
    }
}

impl DiscriminatorConfig {
    pub fn input_dim(&self) -> usize {
        self.feature_dim + self.condition_dim
    }

    pub fn is_conditional(&self) -> bool {
        self.condition_dim > 0
    }
}

/// LSTMP stack emitting one linear score per frame; an utterance's score is
/// the mean over its valid frames.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator<F: Real = f32> {
    pub config: DiscriminatorConfig,
    pub net: LstmpNet<F>,
}

#[derive(Clone, Debug)]
pub struct DiscriminatorCache<F: Real> {
    net: LstmpNetCache<F>,
    lengths: Vec<usize>,
}

impl<F: Real> Discriminator<F> {
    pub fn new(config: DiscriminatorConfig, seed: u64) -> Result<Self> {
        if config.feature_dim == 0 {
            return Err(Error::Config("discriminator feature width must be positive".into()));
        }
        let net = LstmpNet::new(
            "disc",
            LstmpConfig {
                input_dim: config.input_dim(),
                output_dim: 1,
                layers: config.layers,
                cells: config.cells,
                proj: config.proj,
                residual: Residual::None,
            },
            seed,
        )?;
        Ok(Discriminator { config, net })
    }

    /// Per-utterance scores. Gaussian noise with standard deviation
    /// `noise_sigma` is added to `features` (never to the condition).
    pub fn score<R: Rng>(
        &self,
        features: &SeqBatch<F>,
        condition: Option<&SeqBatch<F>>,
        noise_sigma: f64,
        rng: &mut R,
    ) -> Result<(Vec<F>, DiscriminatorCache<F>)> {
        if features.dim() != self.config.feature_dim {
            return Err(Error::shape(
                "discriminator features",
                &[self.config.feature_dim],
                &[features.dim()],
            ));
        }
        let mut feats = features.clone();
        if noise_sigma > 0.0 {
            let normal =
                Normal::new(0.0, noise_sigma).map_err(|e| Error::InvalidArgument(format!("noise sigma: {e}")))?;
            for v in feats.data.data_mut() {
                *v += F::from_f64(normal.sample(rng));
            }
        }
        let input = match (self.config.is_conditional(), condition) {
            (false, None) => feats,
            (false, Some(_)) => {
                return Err(Error::InvalidArgument(
                    "condition given to an unconditioned discriminator".into(),
                ))
            }
            (true, None) => {
                return Err(Error::InvalidArgument(
                    "conditional discriminator needs a condition".into(),
                ))
            }
            (true, Some(c)) => {
                if c.dim() != self.config.condition_dim {
                    return Err(Error::shape(
                        "discriminator condition",
                        &[self.config.condition_dim],
                        &[c.dim()],
                    ));
                }
                feats.concat_features(c)?
            }
        };
        let (frame_scores, net) = self.net.forward_seq(&input.data, input.steps(), input.batch())?;
        let scores = (0..input.batch())
            .map(|b| {
                let rows = input.rows_of(b);
                let sum: F = rows.iter().map(|&r| frame_scores.data()[r]).sum();
                sum / F::from_f64(rows.len() as f64)
            })
            .collect();
        Ok((
            scores,
            DiscriminatorCache {
                net,
                lengths: input.lengths.clone(),
            },
        ))
    }

    /// Accumulates parameter gradients for `d loss / d score` per utterance and
    /// returns the gradient with respect to the (noisy) feature input, with the
    /// condition columns dropped.
    pub fn backward(&mut self, cache: &DiscriminatorCache<F>, dscores: &[F]) -> Result<Tensor<F>> {
        let b = cache.lengths.len();
        if dscores.len() != b {
            return Err(Error::shape("discriminator score gradient", &[b], &[dscores.len()]));
        }
        let steps = cache.lengths.iter().copied().max().unwrap_or(0);
        let mut dframe = Tensor::zeros(&[steps * b, 1]);
        for (bi, (&len, &ds)) in cache.lengths.iter().zip(dscores).enumerate() {
            let g = ds / F::from_f64(len as f64);
            for t in 0..len {
                dframe.data_mut()[t * b + bi] = g;
            }
        }
        let dx = self.net.backward_seq(&cache.net, &dframe)?;
        if !self.config.is_conditional() {
            return Ok(dx);
        }
        let fd = self.config.feature_dim;
        let rows = dx.rows();
        let mut out = Vec::with_capacity(rows * fd);
        for r in 0..rows {
            out.extend_from_slice(&dx.row(r)[..fd]);
        }
        Tensor::from_vec(&[rows, fd], out)
    }
}

impl<F: Real> Parameterized<F> for Discriminator<F> {
    fn params(&self) -> Vec<&Parameter<F>> {
        self.net.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<F>> {
        self.net.params_mut()
    }
}
