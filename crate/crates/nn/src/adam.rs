use serde::{Deserialize, Serialize};

use crate::{NnError, Params, Result, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments. Moment buffers follow the parameter
/// order of the network it was created for.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<F = f32> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Tensor<F>>,
    pub v: Vec<Tensor<F>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new<P: Params<F>>(config: AdamConfig, params: &P) -> Self {
        let zeros: Vec<Tensor<F>> = params
            .params()
            .iter()
            .map(|p| Tensor::zeros(p.shape()))
            .collect();
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step<P: Params<F>>(&mut self, params: &mut P, grads: &[Tensor<F>]) -> Result<()> {
        let mut targets = params.params_mut();
        if targets.len() != grads.len() || targets.len() != self.m.len() {
            return Err(NnError::ShapeMismatch {
                op: "Adam::step",
                expected: vec![self.m.len()],
                actual: vec![targets.len(), grads.len()],
            });
        }
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (F::lit(c.beta1), F::lit(c.beta2));
        let bc1 = F::lit(1.0 - c.beta1.powi(self.step as i32));
        let bc2 = F::lit(1.0 - c.beta2.powi(self.step as i32));
        let (lr, eps) = (F::lit(c.lr), F::lit(c.eps));
        for (((p, g), m), v) in targets
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(NnError::ShapeMismatch {
                    op: "Adam::step",
                    expected: p.shape().to_vec(),
                    actual: g.shape().to_vec(),
                });
            }
            let pd = p.data_mut();
            let (md, vd) = (m.data_mut(), v.data_mut());
            for i in 0..pd.len() {
                let gi = g.data()[i];
                md[i] = b1 * md[i] + (F::one() - b1) * gi;
                vd[i] = b2 * vd[i] + (F::one() - b2) * gi * gi;
                let m_hat = md[i] / bc1;
                let v_hat = vd[i] / bc2;
                pd[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// `target <- (1 - tau) * target + tau * online`, elementwise.
pub fn soft_update<F: Scalar, P: Params<F>>(target: &mut P, online: &P, tau: f64) {
    let tau = F::lit(tau);
    let keep = F::one() - tau;
    for (t, o) in target.params_mut().into_iter().zip(online.params()) {
        for (x, &y) in t.data_mut().iter_mut().zip(o.data()) {
            *x = keep * *x + tau * y;
        }
    }
}
