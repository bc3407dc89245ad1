use std::f64::consts::PI;

/// Update rule applied to every trainable tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    #[default]
    Adam,
    /// Plain gradient descent.
    Sgd,
}

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;
/// Final learning rate as a fraction of the initial one.
pub const FINAL_LR_FRACTION: f64 = 0.01;

/// Adam (or plain descent) over a fixed list of flat tensors, with a cosine
/// learning-rate decay from `lr` to `lr / 100` across `total_steps`.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    total_steps: usize,
    t: usize,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, total_steps: usize, sizes: &[usize]) -> Self {
        let zeros = || sizes.iter().map(|&n| vec![0.0; n]).collect();
        Self { kind, lr, total_steps, t: 0, first: zeros(), second: zeros() }
    }

    pub fn steps_taken(&self) -> usize {
        self.t
    }

    /// Learning rate of the next update.
    pub fn learning_rate(&self) -> f64 {
        let floor = self.lr * FINAL_LR_FRACTION;
        let progress = if self.total_steps <= 1 {
            0.0
        } else {
            (self.t as f64 / (self.total_steps - 1) as f64).min(1.0)
        };
        floor + 0.5 * (self.lr - floor) * (1.0 + (PI * progress).cos())
    }

    /// Applies one update to each `params[i]` from `grads[i]`.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        assert_eq!(params.len(), self.first.len(), "optimizer tensor count");
        assert_eq!(grads.len(), self.first.len(), "optimizer gradient count");
        let lr = self.learning_rate();
        self.t += 1;
        let t = self.t as i32;
        let (c1, c2) = (1.0 - BETA1.powi(t), 1.0 - BETA2.powi(t));
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            assert_eq!(p.len(), g.len(), "gradient length");
            assert_eq!(p.len(), self.first[i].len(), "moment length");
            match self.kind {
                OptimizerKind::Sgd => {
                    for (x, &gx) in p.iter_mut().zip(g.iter()) {
                        *x -= lr * gx;
                    }
                }
                OptimizerKind::Adam => {
                    let (m, v) = (&mut self.first[i], &mut self.second[i]);
                    for j in 0..p.len() {
                        let gx = g[j];
                        m[j] = BETA1 * m[j] + (1.0 - BETA1) * gx;
                        v[j] = BETA2 * v[j] + (1.0 - BETA2) * gx * gx;
                        let m_hat = m[j] / c1;
                        let v_hat = v[j] / c2;
                        p[j] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
                    }
                }
            }
        }
    }
}
