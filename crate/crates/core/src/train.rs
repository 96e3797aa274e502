//! Mini-batch training of the affinity model with Adam and gradient clipping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{forward, sample_loss_grad, ModelParams, Sample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden_size: usize,
    pub seq_len: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_size: 64,
            seq_len: 10,
            learning_rate: 1e-3,
            epochs: 20,
            batch_size: 32,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean squared error per valid pair.
    pub train_loss: f64,
    pub val_loss: f64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = Self::BETA1 * self.m[k] + (1.0 - Self::BETA1) * grads[k];
            self.v[k] = Self::BETA2 * self.v[k] + (1.0 - Self::BETA2) * grads[k] * grads[k];
            params[k] -= self.lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Mean squared error per valid pair over `samples`.
pub fn mean_pair_loss(params: &ModelParams, samples: &[Sample]) -> Result<f64> {
    let per: Vec<(f64, usize)> = samples
        .par_iter()
        .map(|s| {
            let out = forward(params, &s.features, &s.mask)?;
            let mut sum = 0.0;
            let mut n = 0;
            for slot in s.valid_slots() {
                let r = out.affinities[slot] - s.labels[slot];
                sum += r * r;
                n += 1;
            }
            Ok((sum, n))
        })
        .collect::<Result<_>>()?;
    let (sum, n) = per.iter().fold((0.0, 0), |(a, b), (s, n)| (a + s, b + n));
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Gradient of the mean pair loss over one batch. Per-sample gradients are
/// computed in parallel and reduced in sample order.
fn batch_gradient(params: &ModelParams, batch: &[&Sample]) -> Result<(f64, usize, ModelParams)> {
    let pairs: usize = batch.iter().map(|s| s.num_valid()).sum();
    let mut total = ModelParams::zeros(params.input_size, params.hidden_size);
    if pairs == 0 {
        return Ok((0.0, 0, total));
    }
    let scale = 1.0 / pairs as f64;
    let parts: Vec<(f64, ModelParams)> = batch
        .par_iter()
        .map(|s| {
            let mut g = ModelParams::zeros(params.input_size, params.hidden_size);
            let l = sample_loss_grad(params, s, scale, &mut g)?;
            Ok((l, g))
        })
        .collect::<Result<_>>()?;
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        total.accumulate(g);
    }
    Ok((loss, pairs, total))
}

/// Trains from a seeded initialisation and returns the parameters with the
/// lowest validation loss, plus the per-epoch curve.
pub fn train(train_set: &[Sample], val_set: &[Sample], cfg: &TrainConfig) -> Result<(ModelParams, Vec<EpochLog>)> {
    let first = train_set
        .first()
        .ok_or_else(|| Error::Degenerate("empty training set".into()))?;
    let input_size = first.features.values.len() / (first.features.steps * first.features.slots).max(1);
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::invariant(
            "train config",
            "batch size and epochs must be positive",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::init(input_size, cfg.hidden_size, &mut rng);
    let mut flat = params.to_flat();
    let mut adam = Adam::new(flat.len(), cfg.learning_rate);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut best = (f64::INFINITY, params.clone());
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut pairs = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&k| &train_set[k]).collect();
            let (l, n, grads) = batch_gradient(&params, &batch)?;
            if !l.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    message: format!("batch loss {l}"),
                });
            }
            sum += l;
            pairs += n;
            if n == 0 {
                continue;
            }
            let mut g = grads.to_flat();
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > cfg.clip_norm {
                let s = cfg.clip_norm / norm;
                g.iter_mut().for_each(|v| *v *= s);
            }
            adam.step(&mut flat, &g);
            params.set_flat(&flat);
        }
        if !params.is_finite() {
            return Err(Error::Diverged {
                epoch,
                message: "non-finite parameters".into(),
            });
        }
        let train_loss = if pairs == 0 { 0.0 } else { sum / pairs as f64 };
        let val_loss = if val_set.is_empty() {
            train_loss
        } else {
            mean_pair_loss(&params, val_set)?
        };
        if !val_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                message: format!("validation loss {val_loss}"),
            });
        }
        if val_loss < best.0 {
            best = (val_loss, params.clone());
        }
        log.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
        });
    }
    Ok((best.1, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureTensor, PresenceMask, N_CHANNELS};
    use rand::Rng;

    fn toy_samples(seed: u64, count: usize, all_zero: bool) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let (steps, slots) = (3, 3);
                let mut features = FeatureTensor::new(0, steps, slots);
                let mut mask = PresenceMask::new(steps, slots);
                let mut labels = vec![0.0; slots];
                for s in 0..slots {
                    let partner = !all_zero && rng.random_bool(0.4);
                    labels[s] = if partner { 1.0 } else { 0.0 };
                    for t in 0..steps {
                        mask.set(t, s, true);
                        let v = features.at_mut(t, s);
                        for c in v.iter_mut() {
                            *c = rng.random_range(0.0..1.0);
                        }
                        // distance channel separates partners
                        v[2] = if partner {
                            rng.random_range(0.0..0.2)
                        } else {
                            rng.random_range(0.6..1.0)
                        };
                    }
                }
                Sample { features, mask, labels }
            })
            .collect()
    }

    fn small_cfg(seed: u64, epochs: usize) -> TrainConfig {
        TrainConfig {
            hidden_size: 6,
            seq_len: 3,
            learning_rate: 1e-2,
            epochs,
            batch_size: 16,
            clip_norm: 5.0,
            seed,
        }
    }

    #[test]
    fn all_zero_labels_drive_outputs_down() {
        let data = toy_samples(1, 64, true);
        let (p, _) = train(&data, &[], &small_cfg(3, 30)).unwrap();
        let mut total = 0.0;
        let mut n = 0;
        for s in &data {
            let out = forward(&p, &s.features, &s.mask).unwrap();
            total += out.affinities.iter().sum::<f64>();
            n += out.affinities.len();
        }
        assert!(total / (n as f64) < 0.1, "{}", total / n as f64);
    }

    #[test]
    fn separable_toy_loss_decreases() {
        let data = toy_samples(2, 128, false);
        let (_, log) = train(&data, &[], &small_cfg(5, 10)).unwrap();
        let losses: Vec<f64> = log.iter().map(|e| e.train_loss).collect();
        // three-epoch moving average must not increase
        let ma: Vec<f64> = losses.windows(3).map(|w| w.iter().sum::<f64>() / 3.0).collect();
        for w in ma.windows(2) {
            assert!(w[1] <= w[0] + 1e-3, "{losses:?}");
        }
        assert!(losses[9] < losses[0]);
    }

    #[test]
    fn same_seed_same_params() {
        let data = toy_samples(3, 40, false);
        let cfg = small_cfg(9, 3);
        let (a, la) = train(&data, &data[..10], &cfg).unwrap();
        let (b, lb) = train(&data, &data[..10], &cfg).unwrap();
        assert_eq!(la, lb);
        let bits = |p: &ModelParams| p.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.input_size, N_CHANNELS);
    }
}
