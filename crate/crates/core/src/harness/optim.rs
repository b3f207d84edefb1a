use super::config::{OptimizerKind, TrainConfig};
use crate::tensor::Tensor;

/// Adam or SGD with optional momentum, one state slot per parameter.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    momentum: f64,
    steps: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(cfg: &TrainConfig, params: &[Tensor]) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.len()]).collect();
        Self {
            kind: cfg.optimizer,
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            momentum: cfg.momentum,
            steps: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Vec<f64>]) {
        self.steps = self.steps.saturating_add(1);
        match self.kind {
            OptimizerKind::Adam => {
                let c1 = 1.0 - self.beta1.powi(self.steps);
                let c2 = 1.0 - self.beta2.powi(self.steps);
                for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(&mut self.v)) {
                    for (i, w) in p.data_mut().iter_mut().enumerate() {
                        m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                        v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                        *w -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
                    }
                }
            }
            OptimizerKind::Sgd => {
                for ((p, g), m) in params.iter_mut().zip(grads).zip(&mut self.m) {
                    for (i, w) in p.data_mut().iter_mut().enumerate() {
                        m[i] = self.momentum * m[i] + g[i];
                        *w -= self.lr * m[i];
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_moves_by_lr() {
        let cfg = TrainConfig::default();
        let mut p = vec![Tensor::from_vec(vec![1.0, -2.0])];
        let mut opt = Optimizer::new(&cfg, &p);
        opt.step(&mut p, &[vec![0.5, -3.0]]);
        assert!((p[0].data()[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((p[0].data()[1] - (-2.0 + 1e-3)).abs() < 1e-9);
    }

    #[test]
    fn sgd_step_and_zero_lr() {
        let mut cfg = TrainConfig {
            optimizer: OptimizerKind::Sgd,
            learning_rate: 0.1,
            ..TrainConfig::default()
        };
        let mut p = vec![Tensor::from_vec(vec![1.0])];
        Optimizer::new(&cfg, &p).step(&mut p, &[vec![2.0]]);
        assert!((p[0].data()[0] - 0.8).abs() < 1e-15);
        for kind in [OptimizerKind::Adam, OptimizerKind::Sgd] {
            cfg.optimizer = kind;
            cfg.learning_rate = 0.0;
            let mut p = vec![Tensor::from_vec(vec![1.0, 2.0])];
            Optimizer::new(&cfg, &p).step(&mut p, &[vec![5.0, -5.0]]);
            assert_eq!(p[0].data(), &[1.0, 2.0]);
        }
    }
}
