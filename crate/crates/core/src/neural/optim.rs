use std::fmt;
use std::str::FromStr;

use super::mlp::{Gradients, Mlp};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    RmsProp,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::RmsProp => "rmsprop",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "adam" => Ok(OptimizerKind::Adam),
            "rmsprop" => Ok(OptimizerKind::RmsProp),
            other => Err(Error::config(format!("unknown optimizer `{other}`"))),
        }
    }
}

/// Optimizer choice and its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// RMSProp decay of the squared-gradient average.
    pub rho: f64,
    pub eps: f64,
}

impl OptimizerSpec {
    pub fn adam(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            rho: 0.9,
            eps: 1e-8,
        }
    }

    pub fn rmsprop(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::RmsProp,
            ..Self::adam(lr)
        }
    }

    pub fn with_kind(kind: OptimizerKind, lr: f64) -> Self {
        match kind {
            OptimizerKind::Adam => Self::adam(lr),
            OptimizerKind::RmsProp => Self::rmsprop(lr),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::config(format!("learning rate must be positive, got {}", self.lr)));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2), ("rho", self.rho)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::config(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::config(format!("eps must be positive, got {}", self.eps)));
        }
        Ok(())
    }
}

/// Moment accumulators for one parameter set.
#[derive(Debug, Clone)]
pub struct OptimizerState<T> {
    spec: OptimizerSpec,
    step: u64,
    /// Adam first moment; unused by RMSProp.
    first: Gradients<T>,
    /// Adam second moment or RMSProp running mean of squares.
    second: Gradients<T>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(spec: OptimizerSpec, params: &Mlp<T>) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            step: 0,
            first: Gradients::zeros_like(params),
            second: Gradients::zeros_like(params),
        })
    }

    pub fn spec(&self) -> &OptimizerSpec {
        &self.spec
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one descent step `params -= update(grads)`.
    pub fn step(&mut self, params: &mut Mlp<T>, grads: &Gradients<T>) -> Result<()> {
        let layout = self.first.layout();
        if grads.layout() != layout || params.tensors().map(|t| t.len()).ne(layout.iter().copied()) {
            return Err(Error::shape("optimizer state, parameters and gradients differ in shape"));
        }
        self.step += 1;
        let lr = T::of(self.spec.lr);
        let eps = T::of(self.spec.eps);
        match self.spec.kind {
            OptimizerKind::Adam => {
                let b1 = T::of(self.spec.beta1);
                let b2 = T::of(self.spec.beta2);
                let t = self.step as i32;
                let c1 = T::one() - T::of(self.spec.beta1.powi(t));
                let c2 = T::one() - T::of(self.spec.beta2.powi(t));
                let tensors = params
                    .tensors_mut()
                    .zip(grads.tensors())
                    .zip(self.first.tensors_mut().zip(self.second.tensors_mut()));
                for ((p, g), (m, v)) in tensors {
                    for i in 0..p.len() {
                        m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                        v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
            OptimizerKind::RmsProp => {
                let rho = T::of(self.spec.rho);
                let tensors = params
                    .tensors_mut()
                    .zip(grads.tensors())
                    .zip(self.second.tensors_mut());
                for ((p, g), v) in tensors {
                    for i in 0..p.len() {
                        v[i] = rho * v[i] + (T::one() - rho) * g[i] * g[i];
                        p[i] -= lr * g[i] / (v[i].sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
