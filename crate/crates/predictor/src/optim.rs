use std::collections::BTreeMap;

use candle_core::backprop::GradStore;
use candle_core::{Tensor, Var};

use crate::error::Result;

/// Adam with L2 weight decay folded into the gradient.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    step: i32,
    state: BTreeMap<String, (Tensor, Tensor)>,
}

impl Adam {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            state: BTreeMap::new(),
        }
    }

    /// One update of every variable that received a gradient.
    pub fn step(&mut self, vars: &BTreeMap<String, Var>, grads: &GradStore) -> Result<()> {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (name, var) in vars {
            let Some(g) = grads.get(var.as_tensor()) else {
                continue;
            };
            // Gradients carry op history; detach so moments do not chain steps.
            let g = g.detach();
            let w = var.as_detached_tensor();
            let g = if self.weight_decay > 0.0 {
                (g + w.affine(self.weight_decay, 0.0)?)?
            } else {
                g
            };
            let (m, v) = match self.state.remove(name) {
                Some((m, v)) => (
                    (m.affine(self.beta1, 0.0)? + g.affine(1.0 - self.beta1, 0.0)?)?,
                    (v.affine(self.beta2, 0.0)? + g.sqr()?.affine(1.0 - self.beta2, 0.0)?)?,
                ),
                None => (g.affine(1.0 - self.beta1, 0.0)?, g.sqr()?.affine(1.0 - self.beta2, 0.0)?),
            };
            let denom = v.affine(1.0 / c2, 0.0)?.sqrt()?.affine(1.0, self.eps)?;
            let update = m.affine(self.lr / c1, 0.0)?.div(&denom)?;
            var.set(&(w - update)?)?;
            self.state.insert(name.clone(), (m, v));
        }
        Ok(())
    }
}
