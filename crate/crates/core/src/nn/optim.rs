use super::model::ModelParams;
use crate::error::{Error, Result};

/// Heavy-ball momentum buffer plus step size.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub velocity: ModelParams,
    pub learning_rate: f64,
    pub momentum: f64,
}

impl OptimizerState {
    pub fn new(params: &ModelParams, learning_rate: f64, momentum: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::config(format!("learning rate must be positive, got {learning_rate}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::config(format!("momentum must lie in [0, 1), got {momentum}")));
        }
        Ok(Self {
            velocity: params.zeros_like(),
            learning_rate,
            momentum,
        })
    }
}

/// `v ← μ v + g; w ← w − η v`.
pub fn sgd_step(params: &mut ModelParams, grads: &ModelParams, opt: &mut OptimizerState) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&opt.velocity) {
        return Err(Error::Protocol("gradient or velocity shape does not match parameters".into()));
    }
    if !grads.is_finite() {
        return Err(Error::Numerical("non-finite gradient".into()));
    }
    opt.velocity.scale(opt.momentum);
    opt.velocity.scaled_add(1.0, grads);
    params.scaled_add(-opt.learning_rate, &opt.velocity);
    if !params.is_finite() {
        return Err(Error::Numerical("parameters became non-finite after update".into()));
    }
    Ok(())
}
