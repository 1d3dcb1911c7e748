//! Sequential networks and the textbook backward walk.
//!
//! `bp_gradients` is the reference gradient path: loss gradient seeded at the
//! top, then chained layer by layer to the bottom. The replay engines never
//! call it; equivalence tests and the sigma probes use it as the oracle.

use crate::error::{CoreError, Result};
use crate::layer::LayerState;
use crate::loss::{loss_backward, loss_forward, LossSpec, Target};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-layer, per-parameter gradients, indexed like `Network::layers`.
pub type LayerGrads<S> = Vec<Vec<Tensor<S>>>;

/// An L-layer feedforward network with a loss head.
#[derive(Debug, Clone)]
pub struct Network<S: Scalar> {
    layers: Vec<LayerState<S>>,
    loss: LossSpec,
}

impl<S: Scalar> Network<S> {
    /// Validates that adjacent layer shapes compose and that the last layer
    /// feeds the loss.
    pub fn new(layers: Vec<LayerState<S>>, loss: LossSpec) -> Result<Self> {
        if layers.is_empty() {
            return Err(CoreError::InvalidConfig("network needs at least one layer".into()));
        }
        for i in 0..layers.len() - 1 {
            let out = layers[i].spec.out_shape()?;
            if out != layers[i + 1].spec.in_shape {
                return Err(CoreError::InvalidShape {
                    op: "network",
                    details: format!(
                        "layer {} out shape {:?} does not feed layer {} in shape {:?}",
                        i,
                        out,
                        i + 1,
                        layers[i + 1].spec.in_shape
                    ),
                });
            }
        }
        let top = layers.last().unwrap().spec.out_shape()?;
        if top != loss.output_shape() {
            return Err(CoreError::InvalidShape {
                op: "network",
                details: format!("top shape {:?} does not match loss {:?}", top, loss.output_shape()),
            });
        }
        Ok(Self { layers, loss })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[LayerState<S>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerState<S>] {
        &mut self.layers
    }

    pub fn loss_spec(&self) -> &LossSpec {
        &self.loss
    }

    pub fn in_shape(&self) -> &[usize] {
        &self.layers[0].spec.in_shape
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.spec.param_count()).sum()
    }

    /// All activations `h_0 .. h_L` (input included).
    pub fn forward_collect(&self, x: &Tensor<S>) -> Result<Vec<Tensor<S>>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for layer in &self.layers {
            let next = layer.forward(acts.last().unwrap())?;
            acts.push(next);
        }
        Ok(acts)
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward(&h)?;
        }
        Ok(h)
    }

    pub fn loss_on(&self, x: &Tensor<S>, y: &Target<S>) -> Result<S> {
        loss_forward(&self.loss, &self.forward(x)?, y)
    }

    /// Full forward + chain-rule backward; the reference gradient route.
    pub fn bp_gradients(&self, x: &Tensor<S>, y: &Target<S>) -> Result<(S, LayerGrads<S>)> {
        let acts = self.forward_collect(x)?;
        let loss = loss_forward(&self.loss, acts.last().unwrap(), y)?;
        let mut upstream = loss_backward(&self.loss, acts.last().unwrap(), y)?;
        let mut grads: LayerGrads<S> = vec![Vec::new(); self.layers.len()];
        for l in (0..self.layers.len()).rev() {
            let (wgrads, input_grad) = self.layers[l].backward(&acts[l], &upstream)?;
            grads[l] = wgrads;
            upstream = input_grad;
        }
        Ok((loss, grads))
    }

    /// XOR-fold checksum over every weight bit; probe-purity assertions
    /// compare this before and after running an oracle.
    pub fn weights_checksum(&self) -> u64 {
        let mut acc = 0u64;
        for (i, layer) in self.layers.iter().enumerate() {
            for w in &layer.weights {
                acc ^= w.bits_checksum().rotate_left((i % 63) as u32);
            }
        }
        acc
    }
}

/// Allocate zero gradients shaped like the network's weights.
pub fn zero_grads<S: Scalar>(net: &Network<S>) -> LayerGrads<S> {
    net.layers().iter().map(crate::layer::zero_grads_like).collect()
}

/// Flat inner product of two gradient sets over a layer range.
pub fn grads_dot<S: Scalar>(
    a: &LayerGrads<S>,
    b: &LayerGrads<S>,
    layers: std::ops::Range<usize>,
) -> Result<S> {
    let mut acc = S::zero();
    for l in layers {
        for (ga, gb) in a[l].iter().zip(b[l].iter()) {
            acc = acc + ga.dot(gb)?;
        }
    }
    Ok(acc)
}

/// Flat squared norm of a gradient set over a layer range.
pub fn grads_norm_sq<S: Scalar>(a: &LayerGrads<S>, layers: std::ops::Range<usize>) -> S {
    let mut acc = S::zero();
    for l in layers {
        for g in &a[l] {
            acc = acc + g.norm_sq();
        }
    }
    acc
}

pub fn grads_all_finite<S: Scalar>(a: &LayerGrads<S>) -> bool {
    a.iter().all(|layer| layer.iter().all(|g| g.all_finite()))
}

/// Largest elementwise difference between two gradient sets.
pub fn grads_max_abs_diff<S: Scalar>(a: &LayerGrads<S>, b: &LayerGrads<S>) -> Result<f64> {
    let mut worst = 0.0f64;
    for (la, lb) in a.iter().zip(b.iter()) {
        for (ga, gb) in la.iter().zip(lb.iter()) {
            worst = worst.max(ga.max_abs_diff(gb)?);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layer::{LayerKind, LayerSpec};
    use crate::rng::StreamRng;

    pub(crate) fn small_mlp(seed: u64) -> Network<f64> {
        let mut rng = StreamRng::new(seed);
        let l1 = LayerState::init(
            LayerSpec::new(LayerKind::Linear { out_dim: 5 }, vec![3], 0.5).unwrap(),
            &mut rng.child(0),
        );
        let l2 = LayerState::init(LayerSpec::new(LayerKind::Relu, vec![5], 0.0).unwrap(), &mut rng.child(1));
        let l3 = LayerState::init(
            LayerSpec::new(LayerKind::Linear { out_dim: 2 }, vec![5], 0.5).unwrap(),
            &mut rng.child(2),
        );
        Network::new(vec![l1, l2, l3], LossSpec::SoftmaxCrossEntropy { num_classes: 2 }).unwrap()
    }

    #[test]
    fn rejects_non_composing_layers() {
        let mut rng = StreamRng::new(0);
        let l1 = LayerState::<f64>::init(
            LayerSpec::new(LayerKind::Linear { out_dim: 4 }, vec![3], 0.5).unwrap(),
            &mut rng,
        );
        let l2 = LayerState::<f64>::init(
            LayerSpec::new(LayerKind::Linear { out_dim: 2 }, vec![5], 0.5).unwrap(),
            &mut rng,
        );
        assert!(Network::new(vec![l1, l2], LossSpec::SoftmaxCrossEntropy { num_classes: 2 }).is_err());
    }

    #[test]
    fn forward_collect_matches_forward() {
        let net = small_mlp(3);
        let mut rng = StreamRng::new(9);
        let x = Tensor::randn(vec![4, 3], &mut rng, 1.0);
        let acts = net.forward_collect(&x).unwrap();
        assert_eq!(acts.len(), 4);
        assert_eq!(acts.last().unwrap(), &net.forward(&x).unwrap());
    }

    #[test]
    fn checksum_changes_with_weights() {
        let a = small_mlp(3);
        let b = small_mlp(4);
        assert_ne!(a.weights_checksum(), b.weights_checksum());
        assert_eq!(a.weights_checksum(), small_mlp(3).weights_checksum());
    }
}
