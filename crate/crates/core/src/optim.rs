//! Momentum SGD with coupled weight decay.
//!
//! Ordinary parameters follow `v <- mu v - lr (g + wd x); x <- x + v`. Stored
//! PELU parameters use the same momentum step followed by a clamp to
//! [`PARAM_FLOOR`]. The velocity is left untouched by the clamp.

use crate::activations::PARAM_FLOOR;
use crate::error::{invalid, Error, Result};
use crate::layers::Network;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Apply weight decay to PELU parameters as well as to weights.
    pub decay_on_activation_params: bool,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 0.0,
            decay_on_activation_params: true,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid(alloc::format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(invalid(alloc::format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(invalid(alloc::format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }

    fn without_decay(self) -> Self {
        Self {
            weight_decay: 0.0,
            ..self
        }
    }
}

pub fn step_unconstrained(
    param: &mut [f64],
    grad: &[f64],
    velocity: &mut [f64],
    cfg: &SgdConfig,
) -> Result<()> {
    if param.len() != grad.len() || param.len() != velocity.len() {
        return Err(Error::ShapeMismatch {
            op: "step_unconstrained",
            expected: alloc::vec![param.len()],
            found: alloc::vec![grad.len(), velocity.len()],
        });
    }
    for ((x, &g), v) in param.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = cfg.momentum * *v - cfg.learning_rate * (g + cfg.weight_decay * *x);
        *x += *v;
    }
    Ok(())
}

/// Clamped update for one stored activation parameter; returns
/// `(value, velocity)`.
pub fn step_constrained(value: f64, grad: f64, velocity: f64, cfg: &SgdConfig) -> (f64, f64) {
    let velocity = cfg.momentum * velocity - cfg.learning_rate * (grad + cfg.weight_decay * value);
    ((value + velocity).max(PARAM_FLOOR), velocity)
}

#[derive(Debug, Clone)]
pub struct Sgd {
    pub config: SgdConfig,
}

impl Sgd {
    pub fn new(config: SgdConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    /// Updates every registered parameter of `net` from its stored gradient.
    pub fn step(&self, net: &mut Network) -> Result<()> {
        for view in net.params() {
            let group = view.group;
            let decays = group.decays()
                && (!group.is_activation() || self.config.decay_on_activation_params);
            let cfg = if decays {
                self.config
            } else {
                self.config.without_decay()
            };
            if group.is_constrained() {
                for ((x, &g), v) in view
                    .value
                    .iter_mut()
                    .zip(view.grad.iter())
                    .zip(view.velocity.iter_mut())
                {
                    (*x, *v) = step_constrained(*x, g, *v, &cfg);
                }
            } else {
                step_unconstrained(view.value, view.grad, view.velocity, &cfg)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn cfg(lr: f64, mu: f64, wd: f64) -> SgdConfig {
        SgdConfig {
            learning_rate: lr,
            momentum: mu,
            weight_decay: wd,
            decay_on_activation_params: true,
        }
    }

    #[test]
    fn plain_gradient_step() {
        let (mut x, mut v) = ([5.0], [0.0]);
        step_unconstrained(&mut x, &[2.0], &mut v, &cfg(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(x, [3.0]);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let (mut x, mut v) = ([1.5, -2.0], [0.0, 0.0]);
        step_unconstrained(&mut x, &[0.0, 0.0], &mut v, &cfg(0.3, 0.9, 0.0)).unwrap();
        assert_eq!(x, [1.5, -2.0]);
        assert_eq!(
            step_constrained(0.7, 0.0, 0.0, &cfg(0.3, 0.9, 0.0)),
            (0.7, 0.0)
        );
    }

    #[test]
    fn two_momentum_steps_match_unrolled_recurrence() {
        let c = cfg(0.1, 0.9, 0.01);
        let (g1, g2) = (0.5, -0.3);
        let (mut x, mut v) = ([2.0], [0.0]);
        step_unconstrained(&mut x, &[g1], &mut v, &c).unwrap();
        step_unconstrained(&mut x, &[g2], &mut v, &c).unwrap();

        let x0 = 2.0;
        let v1 = -0.1 * (g1 + 0.01 * x0);
        let x1 = x0 + v1;
        let v2 = 0.9 * v1 - 0.1 * (g2 + 0.01 * x1);
        let x2 = x1 + v2;
        assert!((x[0] - x2).abs() <= 1e-12);
        assert!((v[0] - v2).abs() <= 1e-12);
    }

    #[test]
    fn clamp_to_floor_keeps_velocity() {
        // 0.15 + (-0.65) = -0.5, clamped to 0.1.
        let (x, v) = step_constrained(0.15, 0.65, 0.0, &cfg(1.0, 0.0, 0.0));
        assert_eq!(x, PARAM_FLOOR);
        assert_eq!(v, -0.65);
    }

    #[test]
    fn shape_mismatch() {
        let (mut x, mut v) = ([1.0, 2.0], [0.0, 0.0]);
        assert!(step_unconstrained(&mut x, &[1.0], &mut v, &cfg(1.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(cfg(0.0, 0.5, 0.0).validate().is_err());
        assert!(cfg(0.1, 1.0, 0.0).validate().is_err());
        assert!(cfg(0.1, 0.5, -1.0).validate().is_err());
        assert!(cfg(0.1, 0.0, 0.0).validate().is_ok());
    }

    #[test]
    fn fuzzed_constrained_steps_stay_above_floor() {
        let mut rng = Rng::new(77);
        let mut value = 1.0;
        let mut velocity = 0.0;
        for _ in 0..10_000 {
            let c = cfg(
                rng.uniform_range(1e-4, 2.0),
                rng.uniform_range(0.0, 0.99),
                rng.uniform_range(0.0, 1.0),
            );
            let grad = rng.normal() * 10.0;
            (value, velocity) = step_constrained(value, grad, velocity, &c);
            assert!(value >= PARAM_FLOOR);
        }
    }

    #[test]
    fn descends_convex_quadratic() {
        // E(x) = 0.5 * (x - 3)^2
        let c = cfg(0.1, 0.0, 0.0);
        let (mut x, mut v) = ([-1.0], [0.0]);
        let loss = |x: f64| 0.5 * (x - 3.0) * (x - 3.0);
        let before = loss(x[0]);
        let grad = [x[0] - 3.0];
        step_unconstrained(&mut x, &grad, &mut v, &c).unwrap();
        assert!(loss(x[0]) < before);
    }
}
