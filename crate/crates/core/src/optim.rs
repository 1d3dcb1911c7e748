//! SGD updates and stepsize schedules.

use crate::error::{CoreError, Result};
use crate::network::{LayerGrads, Network};
use crate::scalar::{cast, Scalar};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimKind {
    Sgd,
    SgdMomentum,
}

/// Optimizer hyperparameters. Weight decay enters as an additive L2 gradient
/// term: `g' = g + wd * w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSpec {
    pub kind: OptimKind,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl OptimizerSpec {
    pub fn sgd() -> Self {
        Self { kind: OptimKind::Sgd, momentum: 0.0, weight_decay: 0.0 }
    }

    pub fn momentum(momentum: f64, weight_decay: f64) -> Self {
        Self { kind: OptimKind::SgdMomentum, momentum, weight_decay }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum)) {
            return Err(CoreError::InvalidConfig(format!(
                "momentum must lie in [0,1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "weight decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Stepsize as a function of the global iteration index.
#[derive(Debug, Clone, PartialEq)]
pub enum StepSchedule {
    /// Constant stepsize.
    Fixed { gamma0: f64 },
    /// `gamma0 * factor^(milestones passed)`; milestones are iteration
    /// indices.
    StepDecay { gamma0: f64, milestones: Vec<u64>, factor: f64 },
    /// `a / (b + t)`: diverging sum, converging sum of squares.
    InverseT { a: f64, b: f64 },
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            StepSchedule::Fixed { gamma0 } => *gamma0 > 0.0 && gamma0.is_finite(),
            StepSchedule::StepDecay { gamma0, milestones, factor } => {
                *gamma0 > 0.0
                    && gamma0.is_finite()
                    && *factor > 0.0
                    && factor.is_finite()
                    && milestones.windows(2).all(|w| w[0] < w[1])
            }
            StepSchedule::InverseT { a, b } => *a > 0.0 && *b > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(CoreError::InvalidConfig(format!("invalid schedule {self:?}")))
        }
    }

    pub fn gamma(&self, t: u64) -> f64 {
        match self {
            StepSchedule::Fixed { gamma0 } => *gamma0,
            StepSchedule::StepDecay { gamma0, milestones, factor } => {
                let passed = milestones.iter().filter(|&&m| t >= m).count() as i32;
                gamma0 * factor.powi(passed)
            }
            StepSchedule::InverseT { a, b } => a / (b + t as f64),
        }
    }
}

/// Velocity buffers mirroring the network's weight shapes, plus the update
/// rule. Velocities start at zero.
#[derive(Debug, Clone)]
pub struct OptimizerState<S: Scalar> {
    pub spec: OptimizerSpec,
    velocity: Vec<Vec<Tensor<S>>>,
}

impl<S: Scalar> OptimizerState<S> {
    pub fn new(spec: OptimizerSpec, net: &Network<S>) -> Self {
        let velocity = net
            .layers()
            .iter()
            .map(|l| l.weights.iter().map(|w| Tensor::zeros(w.shape().to_vec())).collect())
            .collect();
        Self { spec, velocity }
    }

    pub fn velocity(&self) -> &[Vec<Tensor<S>>] {
        &self.velocity
    }

    pub fn velocity_mut(&mut self) -> &mut Vec<Vec<Tensor<S>>> {
        &mut self.velocity
    }

    /// One update with stepsize `gamma`:
    /// sgd              w <- w - gamma * (g + wd * w)
    /// sgd_momentum     v <- mu * v + g + wd * w;  w <- w - gamma * v
    pub fn step(&mut self, net: &mut Network<S>, grads: &LayerGrads<S>, gamma: f64) -> Result<()> {
        let gamma_s = cast::<S>(gamma);
        let wd = cast::<S>(self.spec.weight_decay);
        let mu = cast::<S>(self.spec.momentum);
        for (l, layer) in net.layers_mut().iter_mut().enumerate() {
            for (p, w) in layer.weights.iter_mut().enumerate() {
                let g = &grads[l][p];
                match self.spec.kind {
                    OptimKind::Sgd => {
                        // w -= gamma * (g + wd * w), elementwise in one pass
                        for (wi, &gi) in w.data_mut().iter_mut().zip(g.data().iter()) {
                            *wi = *wi - gamma_s * (gi + wd * *wi);
                        }
                    }
                    OptimKind::SgdMomentum => {
                        let v = &mut self.velocity[l][p];
                        for ((vi, &gi), wi) in
                            v.data_mut().iter_mut().zip(g.data().iter()).zip(w.data().iter())
                        {
                            *vi = *vi * mu + gi + wd * *wi;
                        }
                        w.axpy_inplace(-gamma_s, v)?;
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layer::{LayerKind, LayerSpec, LayerState};
    use crate::loss::LossSpec;

    fn scalar_net(w: f64) -> Network<f64> {
        let spec = LayerSpec::new(LayerKind::Linear { out_dim: 1 }, vec![1], 0.0).unwrap();
        let layer = LayerState::with_weights(
            spec,
            vec![Tensor::scalar(w).reshape(vec![1, 1]).unwrap(), Tensor::zeros(vec![1])],
        )
        .unwrap();
        Network::new(vec![layer], LossSpec::Mse { output_dim: 1 }).unwrap()
    }

    fn grad_of(g: f64) -> LayerGrads<f64> {
        vec![vec![
            Tensor::from_vec(vec![1, 1], vec![g]).unwrap(),
            Tensor::zeros(vec![1]),
        ]]
    }

    #[test]
    fn zero_gradient_leaves_weights_unchanged() {
        let mut net = scalar_net(1.0);
        let mut opt = OptimizerState::new(OptimizerSpec::momentum(0.9, 0.0), &net);
        opt.step(&mut net, &grad_of(0.0), 0.1).unwrap();
        assert_eq!(net.layers()[0].weights[0].data()[0], 1.0);
    }

    #[test]
    fn plain_sgd_hand_case() {
        // w = 1, g = 0.5, gamma = 0.1 -> w = 0.95
        let mut net = scalar_net(1.0);
        let mut opt = OptimizerState::new(OptimizerSpec::sgd(), &net);
        opt.step(&mut net, &grad_of(0.5), 0.1).unwrap();
        assert_eq!(net.layers()[0].weights[0].data()[0], 0.95);
    }

    #[test]
    fn momentum_two_step_recurrence() {
        // mu = 0.9, g = 1 twice at gamma = 0.1:
        //   v1 = 1,   w1 = w0 - 0.1
        //   v2 = 1.9, w2 = w1 - 0.19
        let mut net = scalar_net(1.0);
        let mut opt = OptimizerState::new(OptimizerSpec::momentum(0.9, 0.0), &net);
        opt.step(&mut net, &grad_of(1.0), 0.1).unwrap();
        opt.step(&mut net, &grad_of(1.0), 0.1).unwrap();
        let w = net.layers()[0].weights[0].data()[0];
        assert!((w - (1.0 - 0.1 - 0.19)).abs() < 1e-15);
    }

    #[test]
    fn schedules() {
        let fixed = StepSchedule::Fixed { gamma0: 0.01 };
        assert_eq!(fixed.gamma(0), 0.01);
        assert_eq!(fixed.gamma(1_000_000), 0.01);

        let decay = StepSchedule::StepDecay {
            gamma0: 0.01,
            milestones: vec![100, 200],
            factor: 0.1,
        };
        assert_eq!(decay.gamma(99), 0.01);
        assert!((decay.gamma(100) - 0.001).abs() < 1e-18);
        assert!((decay.gamma(250) - 0.0001).abs() < 1e-18);

        let inv = StepSchedule::InverseT { a: 5.0, b: 100.0 };
        assert!((inv.gamma(0) - 0.05).abs() < 1e-18);
        assert!(inv.gamma(10_000) < inv.gamma(0));
        // Robbins-Monro shape: partial sums of gamma grow without bound
        // while partial sums of gamma^2 stay bounded.
        let s1: f64 = (0..200_000).map(|t| inv.gamma(t)).sum();
        let s2: f64 = (0..200_000).map(|t| inv.gamma(t).powi(2)).sum();
        assert!(s1 > 30.0 && s2 < 0.26, "s1={s1} s2={s2}");
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(OptimizerSpec::momentum(1.0, 0.0).validate().is_err());
        assert!(OptimizerSpec::momentum(-0.1, 0.0).validate().is_err());
        assert!(OptimizerSpec::momentum(0.9, -1.0).validate().is_err());
        assert!(StepSchedule::Fixed { gamma0: 0.0 }.validate().is_err());
        assert!(StepSchedule::InverseT { a: 0.0, b: 1.0 }.validate().is_err());
    }
}
