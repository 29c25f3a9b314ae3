use super::TrainConfig;
use crate::autodiff::{ParamStore, Tensor};

/// Linear warmup from 0 to `lr` over the first `warmup_fraction` of the
/// steps, then linear decay back to 0 at `total_steps`.
pub fn lr_at(step: usize, total_steps: usize, config: &TrainConfig) -> f64 {
    if total_steps == 0 {
        return 0.0;
    }
    let (s, t) = (step as f64, total_steps as f64);
    let warm = config.warmup_fraction * t;
    let r = if s < warm { s / warm } else { (t - s) / (t - warm) };
    config.lr * r.clamp(0.0, 1.0)
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    steps: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(params: &ParamStore, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Tensor> = params
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape().to_vec()))
            .collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            steps: 0,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn first_moment(&self, i: usize) -> &Tensor {
        &self.m[i]
    }

    pub fn second_moment(&self, i: usize) -> &Tensor {
        &self.v[i]
    }

    /// `p -= lr * (m̂ / (sqrt(v̂) + eps) + weight_decay * p)`.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor], lr: f64, weight_decay: f64) {
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, g) in grads.iter().enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for ((mk, vk), gk) in m.iter_mut().zip(v.iter_mut()).zip(g.data()) {
                *mk = self.beta1 * *mk + (1.0 - self.beta1) * gk;
                *vk = self.beta2 * *vk + (1.0 - self.beta2) * gk * gk;
            }
            if lr == 0.0 {
                continue;
            }
            let p = params.tensor_mut(i).data_mut();
            for ((pk, mk), vk) in p.iter_mut().zip(m.iter()).zip(v.iter()) {
                let update = (mk / c1) / ((vk / c2).sqrt() + self.eps) + weight_decay * *pk;
                *pk -= lr * update;
            }
        }
    }
}
