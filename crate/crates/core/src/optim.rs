use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Adam with bias-corrected moments and L2 weight decay folded into the gradient.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: i32,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f64, weight_decay: f64, shapes: &[(usize, usize)]) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be > 0, got {lr}"
            )));
        }
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "weight decay must be >= 0, got {weight_decay}"
            )));
        }
        Ok(Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            first: shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect(),
            second: shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect(),
        })
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor]) -> Result<()> {
        assert_eq!(params.len(), self.first.len(), "parameter count changed");
        assert_eq!(grads.len(), params.len(), "one gradient per parameter");
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            p.check_same("adam", g)?;
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            let pd = p.data_mut();
            for j in 0..pd.len() {
                let grad = g.data()[j] + self.weight_decay * pd[j];
                let mj = self.beta1 * m.data()[j] + (1.0 - self.beta1) * grad;
                let vj = self.beta2 * v.data()[j] + (1.0 - self.beta2) * grad * grad;
                m.data_mut()[j] = mj;
                v.data_mut()[j] = vj;
                pd[j] -= self.lr * (mj / c1) / ((vj / c2).sqrt() + self.eps);
            }
            if !p.is_finite() {
                return Err(Error::NonFinite { op: "adam" });
            }
        }
        Ok(())
    }
}
