//! AdamW with per-group learning rates and a linear warmup/decay schedule.

use crate::autograd::Mat;
use crate::params::{ParamGroup, ParamStore};

#[derive(Clone, Debug, PartialEq)]
pub struct AdamWConfig {
    pub encoder_lr: f64,
    pub head_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            encoder_lr: 1e-5,
            head_lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

pub struct AdamW {
    config: AdamWConfig,
    first: Vec<Mat>,
    second: Vec<Mat>,
    steps: u64,
}

impl AdamW {
    pub fn new(config: AdamWConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Mat> = store.values().iter().map(|v| Mat::zeros(v.dim())).collect();
        AdamW {
            config,
            second: zeros.clone(),
            first: zeros,
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One update with every base learning rate multiplied by `lr_scale`.
    /// Parameters without a gradient (absent from the loss graph) are left
    /// untouched, weight decay included.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Option<Mat>], lr_scale: f64) {
        assert_eq!(grads.len(), store.len(), "one gradient slot per parameter");
        self.steps += 1;
        let c = &self.config;
        let t = self.steps as i32;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        let specs = store.specs().to_vec();
        for (i, (spec, value)) in specs.iter().zip(store.values_mut()).enumerate() {
            let Some(g) = &grads[i] else { continue };
            let lr = lr_scale
                * match spec.group {
                    ParamGroup::Encoder => c.encoder_lr,
                    _ => c.head_lr,
                };
            if spec.decay && c.weight_decay > 0.0 {
                value.mapv_inplace(|w| w * (1.0 - lr * c.weight_decay));
            }
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            ndarray::Zip::from(value).and(m).and(v).and(g).for_each(|w, m, v, &g| {
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                *w -= lr * (*m / bias1) / ((*v / bias2).sqrt() + c.eps);
            });
        }
    }
}

/// Linear warmup over the first `warmup` steps, then linear decay to zero at `total`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearSchedule {
    pub warmup: u64,
    pub total: u64,
}

impl LinearSchedule {
    pub fn with_warmup_fraction(total: u64, fraction: f64) -> Self {
        LinearSchedule {
            warmup: (total as f64 * fraction).round() as u64,
            total,
        }
    }

    /// Multiplier for the `step`-th update, counting from 1.
    pub fn factor(&self, step: u64) -> f64 {
        if step <= self.warmup && self.warmup > 0 {
            step as f64 / self.warmup as f64
        } else if self.total > self.warmup {
            (self.total.saturating_sub(step) + 1) as f64 / (self.total - self.warmup + 1) as f64
        } else {
            1.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Init;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn schedule_ramps_then_decays() {
        let s = LinearSchedule::with_warmup_fraction(100, 0.06);
        assert_eq!(s.warmup, 6);
        assert_abs_diff_eq!(s.factor(3), 0.5);
        assert_abs_diff_eq!(s.factor(6), 1.0);
        assert!(s.factor(7) <= 1.0 && s.factor(7) > s.factor(50));
        assert!(s.factor(100) > 0.0);
        let flat = LinearSchedule { warmup: 0, total: 0 };
        assert_eq!(flat.factor(1), 1.0);
    }

    #[test]
    fn first_step_moves_by_lr_against_the_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        store.add("enc", ParamGroup::Encoder, (1, 2), Init::Zeros, &mut rng);
        store.add("head", ParamGroup::RelationHead, (1, 2), Init::Zeros, &mut rng);
        store.add("evi", ParamGroup::EvidenceHead, (1, 1), Init::Zeros, &mut rng);
        let mut opt = AdamW::new(AdamWConfig::default(), &store);
        let g = Mat::from_elem((1, 2), 3.0);
        opt.step(&mut store, &[Some(g.clone()), Some(-g), None], 1.0);
        assert_abs_diff_eq!(store.values()[0][[0, 0]], -1e-5, epsilon = 1e-12);
        assert_abs_diff_eq!(store.values()[1][[0, 1]], 1e-4, epsilon = 1e-11);
        assert_eq!(store.values()[2][[0, 0]], 0.0);
    }
}
