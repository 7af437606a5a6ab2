use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{NetError, Result};
use crate::scalar::Real;
use crate::tensor::Param;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam on the real and imaginary part of every parameter separately.
/// Moments are kept per parameter in the order the parameters are passed.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Vec<Complex<T>>>,
    pub v: Vec<Vec<Complex<T>>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut Param<T>]) -> Result<()> {
        for p in params.iter() {
            if let Some(i) = p
                .grad
                .iter()
                .position(|g| !(g.re.is_finite() && g.im.is_finite()))
            {
                return Err(NetError::NonFinite(format!(
                    "gradient of {} at index {i}: {:?}",
                    p.name, p.grad[i]
                )));
            }
        }
        if self.m.is_empty() {
            let zeros = |p: &&mut Param<T>| vec![Complex::new(T::zero(), T::zero()); p.len()];
            self.m = params.iter().map(zeros).collect();
            self.v = params.iter().map(zeros).collect();
        }
        if self.m.len() != params.len() || self.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len()) {
            return Err(NetError::Shape("optimizer state does not match the parameters".into()));
        }
        self.t += 1;
        let c = self.config;
        let (b1, b2) = (T::c(c.beta1), T::c(c.beta2));
        let (one_b1, one_b2) = (T::c(1.0 - c.beta1), T::c(1.0 - c.beta2));
        let t = i32::try_from(self.t).unwrap_or(i32::MAX);
        let bc1 = T::one() - b1.powi(t);
        let bc2 = T::one() - b2.powi(t);
        let (lr, eps) = (T::c(c.lr), T::c(c.eps));
        let update = |x: &mut T, m: &mut T, v: &mut T, g: T| {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            let mh = *m / bc1;
            let vh = *v / bc2;
            *x = *x - lr * mh / (vh.sqrt() + eps);
        };
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let real_only = p.real_only;
            let Param { value, grad, .. } = &mut **p;
            for (((x, g), m), v) in value.iter_mut().zip(grad.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                update(&mut x.re, &mut m.re, &mut v.re, g.re);
                if !real_only {
                    update(&mut x.im, &mut m.im, &mut v.im, g.im);
                }
            }
        }
        Ok(())
    }
}
