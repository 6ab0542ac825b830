//! Adam with bias correction, and a linear-warmup / cosine-decay schedule.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moments per parameter tensor, plus the step count.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        Self {
            first_moment: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            second_moment: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            step: 0,
        }
    }
}

/// One Adam update of every parameter tensor in place.
///
/// `grads[k]` is `None` for tensors that received no gradient; they are
/// treated as zero gradients.
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[Option<&[f64]>],
    state: &mut AdamState,
    lr: f64,
    config: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len()
        || state.first_moment.len() != params.len()
        || state.second_moment.len() != params.len()
    {
        return Err(Error::InvalidArgument(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    for (k, p) in params.iter().enumerate() {
        let glen = grads[k].map_or(p.len(), <[f64]>::len);
        if glen != p.len()
            || state.first_moment[k].len() != p.len()
            || state.second_moment[k].len() != p.len()
        {
            return Err(Error::Shape {
                op: "adam_step",
                lhs: p.shape().to_vec(),
                rhs: vec![glen],
            });
        }
    }

    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - libm::pow(config.beta1, t);
    let bc2 = 1.0 - libm::pow(config.beta2, t);
    for (k, p) in params.iter_mut().enumerate() {
        let m = &mut state.first_moment[k];
        let v = &mut state.second_moment[k];
        let values = p.values_mut();
        for i in 0..values.len() {
            let g = grads[k].map_or(0.0, |g| g[i]);
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            values[i] -= lr * m_hat / (libm::sqrt(v_hat) + config.epsilon);
        }
    }
    Ok(())
}

/// Linear warmup from 0 to `base_lr`, then cosine decay to 0 at `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub base_lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl Schedule {
    pub fn new(base_lr: f64, warmup_steps: usize, total_steps: usize) -> Result<Self> {
        if warmup_steps == 0 || warmup_steps > total_steps {
            return Err(Error::InvalidArgument(format!(
                "need 0 < warmup_steps <= total_steps, got {warmup_steps} and {total_steps}"
            )));
        }
        if !(base_lr > 0.0) || !base_lr.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "base_lr must be positive, got {base_lr}"
            )));
        }
        Ok(Self {
            base_lr,
            warmup_steps,
            total_steps,
        })
    }

    pub fn lr_at(&self, step: usize) -> Result<f64> {
        if step > self.total_steps {
            return Err(Error::InvalidArgument(format!(
                "step {step} beyond total_steps {}",
                self.total_steps
            )));
        }
        if step < self.warmup_steps {
            return Ok(self.base_lr * step as f64 / self.warmup_steps as f64);
        }
        let decay = self.total_steps - self.warmup_steps;
        if decay == 0 {
            // no decay phase
            return Ok(self.base_lr);
        }
        let progress = (step - self.warmup_steps) as f64 / decay as f64;
        Ok(self.base_lr * 0.5 * (1.0 + libm::cos(PI * progress)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints() {
        let s = Schedule::new(5e-4, 300, 2500).unwrap();
        assert_eq!(s.lr_at(0).unwrap(), 0.0);
        assert_eq!(s.lr_at(300).unwrap(), 5e-4);
        assert_eq!(s.lr_at(2500).unwrap(), 0.0);
        assert!(s.lr_at(2501).is_err());
    }

    #[test]
    fn schedule_validation() {
        assert!(Schedule::new(1e-3, 0, 10).is_err());
        assert!(Schedule::new(1e-3, 11, 10).is_err());
        assert!(Schedule::new(0.0, 1, 10).is_err());
        assert_eq!(
            Schedule::new(1e-3, 10, 10).unwrap().lr_at(10).unwrap(),
            1e-3
        );
    }

    #[test]
    fn first_step_is_about_lr() {
        let mut p = vec![Tensor::scalar(0.0)];
        let mut st = AdamState::new(&p);
        adam_step(
            &mut p,
            &[Some(&[1.0])],
            &mut st,
            0.1,
            &AdamConfig::default(),
        )
        .unwrap();
        assert!((p[0].values()[0] + 0.1).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_from_fresh_state_is_identity() {
        let mut p = vec![Tensor::new(vec![3], vec![1.0, -2.0, 3.5]).unwrap()];
        let before = p.clone();
        let mut st = AdamState::new(&p);
        adam_step(
            &mut p,
            &[Some(&[0.0; 3])],
            &mut st,
            0.1,
            &AdamConfig::default(),
        )
        .unwrap();
        assert_eq!(p, before);
        adam_step(&mut p, &[None], &mut st, 0.1, &AdamConfig::default()).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn minimises_square() {
        let mut p = vec![Tensor::scalar(1.0)];
        let mut st = AdamState::new(&p);
        let mut prev = 1.0f64;
        for _ in 0..50 {
            let x = p[0].values()[0];
            let g = [2.0 * x];
            adam_step(&mut p, &[Some(&g)], &mut st, 0.1, &AdamConfig::default()).unwrap();
            let now = p[0].values()[0].abs();
            // monotone until the iterate reaches the 0.5 band
            if prev >= 0.5 {
                assert!(now < prev);
            }
            prev = now;
        }
        assert!(prev < 0.5);
    }

    #[test]
    fn shape_mismatch_errors() {
        let mut p = vec![Tensor::scalar(1.0)];
        let mut st = AdamState::new(&p);
        let cfg = AdamConfig::default();
        assert!(adam_step(&mut p, &[Some(&[1.0, 2.0])], &mut st, 0.1, &cfg).is_err());
        assert!(adam_step(&mut p, &[], &mut st, 0.1, &cfg).is_err());
    }
}
