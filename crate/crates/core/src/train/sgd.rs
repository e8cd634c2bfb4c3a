use crate::error::{Error, Result};
use crate::tensor::{Float, ModelGraph, ParamRole, Parameter, Tensor};

/// Nesterov momentum SGD with l2 weight decay on weights (not biases).
///
/// `g' = g + decay * w`, `v <- mu * v - lr * g'`, `w <- w + mu * v - lr * g'`.
pub struct Nesterov<T: Float = f32> {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Tensor<T>>,
}

impl<T: Float> Nesterov<T> {
    pub fn new(model: &ModelGraph<T>, momentum: f64, weight_decay: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::invalid(format!("momentum must lie in [0, 1), got {momentum}")));
        }
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(Error::invalid(format!("weight decay must be >= 0, got {weight_decay}")));
        }
        let velocity = model.params().iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        Ok(Self {
            momentum,
            weight_decay,
            velocity,
        })
    }

    pub fn velocity(&self) -> &[Tensor<T>] {
        &self.velocity
    }

    pub fn step(&mut self, model: &mut ModelGraph<T>, lr: f64) -> Result<()> {
        let mut params = model.params_mut();
        if params.len() != self.velocity.len() {
            return Err(Error::shape("optimizer state does not match model"));
        }
        for (i, (p, v)) in params.iter_mut().zip(&mut self.velocity).enumerate() {
            nesterov_update(p, v, lr, self.momentum, self.weight_decay).map_err(|e| match e {
                Error::NonFinite(m) => Error::NonFinite(format!("parameter {i}: {m}")),
                other => other,
            })?;
        }
        Ok(())
    }
}

/// One update of a single parameter tensor.
pub fn nesterov_update<T: Float>(
    p: &mut Parameter<T>,
    velocity: &mut Tensor<T>,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::invalid(format!("learning rate must be positive, got {lr}")));
    }
    p.grad.ensure_finite("gradient")?;
    let lr = T::from_f64_lossy(lr);
    let mu = T::from_f64_lossy(momentum);
    let decay = match p.role {
        ParamRole::Weight => T::from_f64_lossy(weight_decay),
        ParamRole::Bias => T::zero(),
    };
    let w = p.value.data_mut();
    let g = p.grad.data();
    for ((w, &g), v) in w.iter_mut().zip(g).zip(velocity.data_mut()) {
        let g = g + decay * *w;
        *v = mu * *v - lr * g;
        *w += mu * *v - lr * g;
    }
    Ok(())
}
