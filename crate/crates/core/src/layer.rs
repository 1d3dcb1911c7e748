//! Layer primitives with explicit forward and backward maps.
//!
//! A layer's backward takes the layer's input explicitly instead of caching
//! it internally: the replay engines recompute activations from stored
//! inputs, so layers must stay pure functions of `(weights, input)`.

use crate::error::{CoreError, Result};
use crate::rng::StreamRng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Layer kind plus its hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerKind {
    Linear {
        out_dim: usize,
    },
    Relu,
    Conv2d {
        out_channels: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: usize,
    },
    Flatten,
}

/// Static description of a layer: kind, input shape (batch dim excluded),
/// and the init scale for its weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_shape: Vec<usize>,
    pub init_stddev: f64,
}

impl LayerSpec {
    pub fn new(kind: LayerKind, in_shape: Vec<usize>, init_stddev: f64) -> Result<Self> {
        let spec = Self { kind, in_shape, init_stddev };
        spec.out_shape()?; // validate hyperparameters against the input shape
        Ok(spec)
    }

    /// Output shape (batch dim excluded); a pure function of kind and input
    /// shape.
    pub fn out_shape(&self) -> Result<Vec<usize>> {
        match &self.kind {
            LayerKind::Linear { out_dim } => {
                if self.in_shape.len() != 1 {
                    return Err(CoreError::InvalidShape {
                        op: "linear",
                        details: format!("expected rank-1 input, got {:?}", self.in_shape),
                    });
                }
                Ok(vec![*out_dim])
            }
            LayerKind::Relu => Ok(self.in_shape.clone()),
            LayerKind::Conv2d { out_channels, kernel, stride, padding } => {
                if self.in_shape.len() != 3 {
                    return Err(CoreError::InvalidShape {
                        op: "conv2d",
                        details: format!("expected [channels, h, w] input, got {:?}", self.in_shape),
                    });
                }
                let (h, w) = (self.in_shape[1], self.in_shape[2]);
                let (kh, kw) = *kernel;
                if *stride == 0 || h + 2 * padding < kh || w + 2 * padding < kw {
                    return Err(CoreError::InvalidShape {
                        op: "conv2d",
                        details: format!(
                            "kernel {kernel:?} stride {stride} padding {padding} invalid for input {:?}",
                            self.in_shape
                        ),
                    });
                }
                let oh = (h + 2 * padding - kh) / stride + 1;
                let ow = (w + 2 * padding - kw) / stride + 1;
                Ok(vec![*out_channels, oh, ow])
            }
            LayerKind::Flatten => Ok(vec![self.in_shape.iter().product()]),
        }
    }

    /// Shapes of the owned weight tensors; empty for relu and flatten.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match &self.kind {
            LayerKind::Linear { out_dim } => {
                vec![vec![self.in_shape[0], *out_dim], vec![*out_dim]]
            }
            LayerKind::Conv2d { out_channels, kernel, .. } => vec![
                vec![*out_channels, self.in_shape[0], kernel.0, kernel.1],
                vec![*out_channels],
            ],
            LayerKind::Relu | LayerKind::Flatten => Vec::new(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|s| s.iter().product::<usize>()).sum()
    }
}

/// A layer bound to its weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState<S: Scalar> {
    pub spec: LayerSpec,
    pub weights: Vec<Tensor<S>>,
}

impl<S: Scalar> LayerState<S> {
    /// Gaussian weights at the spec's stddev; biases start at zero.
    pub fn init(spec: LayerSpec, rng: &mut StreamRng) -> Self {
        let shapes = spec.param_shapes();
        let weights = match spec.kind {
            LayerKind::Linear { .. } | LayerKind::Conv2d { .. } => vec![
                Tensor::randn(shapes[0].clone(), rng, spec.init_stddev),
                Tensor::zeros(shapes[1].clone()),
            ],
            LayerKind::Relu | LayerKind::Flatten => Vec::new(),
        };
        Self { spec, weights }
    }

    pub fn with_weights(spec: LayerSpec, weights: Vec<Tensor<S>>) -> Result<Self> {
        let shapes = spec.param_shapes();
        if weights.len() != shapes.len()
            || weights.iter().zip(shapes.iter()).any(|(w, s)| w.shape() != s.as_slice())
        {
            return Err(CoreError::InvalidShape {
                op: "with_weights",
                details: format!(
                    "weights {:?} do not match param shapes {:?}",
                    weights.iter().map(|w| w.shape().to_vec()).collect::<Vec<_>>(),
                    shapes
                ),
            });
        }
        Ok(Self { spec, weights })
    }

    fn check_input(&self, input: &Tensor<S>, op: &'static str) -> Result<()> {
        if input.shape().len() != self.spec.in_shape.len() + 1
            || input.shape()[1..] != self.spec.in_shape[..]
        {
            return Err(CoreError::ShapeMismatch {
                op,
                left: input.shape().to_vec(),
                right: self.spec.in_shape.clone(),
            });
        }
        Ok(())
    }

    /// Activation for a batched input; pure in `(weights, input)`.
    pub fn forward(&self, input: &Tensor<S>) -> Result<Tensor<S>> {
        self.check_input(input, "layer_forward")?;
        match &self.spec.kind {
            LayerKind::Linear { .. } => {
                let mut out = input.matmul(&self.weights[0])?;
                let bias = self.weights[1].data();
                let cols = bias.len();
                for (i, v) in out.data_mut().iter_mut().enumerate() {
                    *v = *v + bias[i % cols];
                }
                Ok(out)
            }
            LayerKind::Relu => Ok(input.relu()),
            LayerKind::Conv2d { .. } => self.conv_forward(input),
            LayerKind::Flatten => {
                let batch = input.batch();
                input.reshape(vec![batch, self.spec.in_shape.iter().product()])
            }
        }
    }

    /// Vector-Jacobian products: returns (weight grads, input grad) for
    /// `upstream = d<loss>/d<output>`.
    pub fn backward(
        &self,
        input: &Tensor<S>,
        upstream: &Tensor<S>,
    ) -> Result<(Vec<Tensor<S>>, Tensor<S>)> {
        self.check_input(input, "layer_backward")?;
        let out_shape = self.spec.out_shape()?;
        if upstream.shape().len() != out_shape.len() + 1
            || upstream.shape()[1..] != out_shape[..]
            || upstream.batch() != input.batch()
        {
            return Err(CoreError::ShapeMismatch {
                op: "layer_backward",
                left: upstream.shape().to_vec(),
                right: out_shape,
            });
        }
        match &self.spec.kind {
            LayerKind::Linear { .. } => {
                // dW = x^T u, db = per-column sum of u, dx = u W^T.
                let dw = input.transpose()?.matmul(upstream)?;
                let (batch, out_dim) = (upstream.batch(), upstream.shape()[1]);
                let mut db = Tensor::zeros(vec![out_dim]);
                for b in 0..batch {
                    for o in 0..out_dim {
                        db.data_mut()[o] = db.data()[o] + upstream.data()[b * out_dim + o];
                    }
                }
                let dx = upstream.matmul(&self.weights[0].transpose()?)?;
                Ok((vec![dw, db], dx))
            }
            LayerKind::Relu => Ok((Vec::new(), input.relu_grad_mask().mul(upstream)?)),
            LayerKind::Conv2d { .. } => self.conv_backward(input, upstream),
            LayerKind::Flatten => {
                let mut shape = vec![input.batch()];
                shape.extend_from_slice(&self.spec.in_shape);
                Ok((Vec::new(), upstream.reshape(shape)?))
            }
        }
    }

    fn conv_params(&self) -> (usize, usize, usize, usize, usize) {
        match self.spec.kind {
            LayerKind::Conv2d { out_channels, kernel, stride, padding } => {
                (out_channels, kernel.0, kernel.1, stride, padding)
            }
            _ => unreachable!("conv_params on non-conv layer"),
        }
    }

    // Direct convolution, no im2col: correctness and a fixed reduction order
    // over speed.
    fn conv_forward(&self, input: &Tensor<S>) -> Result<Tensor<S>> {
        let (oc, kh, kw, stride, pad) = self.conv_params();
        let (ic, h, w) = (self.spec.in_shape[0], self.spec.in_shape[1], self.spec.in_shape[2]);
        let out_shape = self.spec.out_shape()?;
        let (oh, ow) = (out_shape[1], out_shape[2]);
        let batch = input.batch();
        let kernel = self.weights[0].data();
        let bias = self.weights[1].data();
        let x = input.data();
        let mut out = Tensor::zeros(vec![batch, oc, oh, ow]);
        let o = out.data_mut();
        for b in 0..batch {
            for co in 0..oc {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = bias[co];
                        for ci in 0..ic {
                            for ky in 0..kh {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..kw {
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    let xi = ((b * ic + ci) * h + iy as usize) * w + ix as usize;
                                    let ki = ((co * ic + ci) * kh + ky) * kw + kx;
                                    acc = acc + x[xi] * kernel[ki];
                                }
                            }
                        }
                        o[((b * oc + co) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        Ok(out)
    }

    fn conv_backward(
        &self,
        input: &Tensor<S>,
        upstream: &Tensor<S>,
    ) -> Result<(Vec<Tensor<S>>, Tensor<S>)> {
        let (oc, kh, kw, stride, pad) = self.conv_params();
        let (ic, h, w) = (self.spec.in_shape[0], self.spec.in_shape[1], self.spec.in_shape[2]);
        let out_shape = self.spec.out_shape()?;
        let (oh, ow) = (out_shape[1], out_shape[2]);
        let batch = input.batch();
        let kernel = self.weights[0].data();
        let x = input.data();
        let u = upstream.data();

        let mut dker = Tensor::zeros(self.weights[0].shape().to_vec());
        let mut dbias = Tensor::zeros(vec![oc]);
        let mut dx = Tensor::zeros(input.shape().to_vec());
        {
            let dk = dker.data_mut();
            let db = dbias.data_mut();
            let di = dx.data_mut();
            for b in 0..batch {
                for co in 0..oc {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let g = u[((b * oc + co) * oh + oy) * ow + ox];
                            db[co] = db[co] + g;
                            for ci in 0..ic {
                                for ky in 0..kh {
                                    let iy = (oy * stride + ky) as isize - pad as isize;
                                    if iy < 0 || iy >= h as isize {
                                        continue;
                                    }
                                    for kx in 0..kw {
                                        let ix = (ox * stride + kx) as isize - pad as isize;
                                        if ix < 0 || ix >= w as isize {
                                            continue;
                                        }
                                        let xi = ((b * ic + ci) * h + iy as usize) * w + ix as usize;
                                        let ki = ((co * ic + ci) * kh + ky) * kw + kx;
                                        dk[ki] = dk[ki] + g * x[xi];
                                        di[xi] = di[xi] + g * kernel[ki];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok((vec![dker, dbias], dx))
    }
}

/// Convenience stddev for rectifier stacks: `sqrt(2 / fan_in)`.
pub fn he_stddev(spec_kind: &LayerKind, in_shape: &[usize]) -> f64 {
    let fan_in: usize = match spec_kind {
        LayerKind::Linear { .. } => in_shape[0],
        LayerKind::Conv2d { kernel, .. } => in_shape[0] * kernel.0 * kernel.1,
        _ => return 0.0,
    };
    (2.0 / fan_in as f64).sqrt()
}

/// Zero-filled gradients matching a layer's weight shapes.
pub fn zero_grads_like<S: Scalar>(layer: &LayerState<S>) -> Vec<Tensor<S>> {
    layer.weights.iter().map(|w| Tensor::zeros(w.shape().to_vec())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::identity;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape.to_vec(), data.to_vec()).unwrap()
    }

    fn linear(w: Tensor<f64>, b: Tensor<f64>) -> LayerState<f64> {
        let in_dim = w.shape()[0];
        let out_dim = w.shape()[1];
        let spec = LayerSpec::new(LayerKind::Linear { out_dim }, vec![in_dim], 0.0).unwrap();
        LayerState::with_weights(spec, vec![w, b]).unwrap()
    }

    #[test]
    fn linear_identity_weights() {
        let layer = linear(identity(2), Tensor::zeros(vec![2]));
        let out = layer.forward(&t(&[1, 2], &[1.0, 2.0])).unwrap();
        assert_eq!(out, t(&[1, 2], &[1.0, 2.0]));
    }

    #[test]
    fn linear_hand_case() {
        // W = diag(2,3), b = [1,1], x = [1,1] -> [3,4].
        let layer = linear(t(&[2, 2], &[2.0, 0.0, 0.0, 3.0]), t(&[2], &[1.0, 1.0]));
        let out = layer.forward(&t(&[1, 2], &[1.0, 1.0])).unwrap();
        assert_eq!(out, t(&[1, 2], &[3.0, 4.0]));
    }

    #[test]
    fn relu_layer_forward() {
        let spec = LayerSpec::new(LayerKind::Relu, vec![2], 0.0).unwrap();
        let layer = LayerState::<f64>::with_weights(spec, vec![]).unwrap();
        let out = layer.forward(&t(&[1, 2], &[-3.0, 5.0])).unwrap();
        assert_eq!(out, t(&[1, 2], &[0.0, 5.0]));
    }

    #[test]
    fn zero_upstream_zero_grads() {
        let layer = linear(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]), t(&[2], &[0.5, -0.5]));
        let x = t(&[2, 2], &[1.0, -1.0, 2.0, 0.5]);
        let (grads, dx) = layer.backward(&x, &Tensor::zeros(vec![2, 2])).unwrap();
        assert!(grads.iter().all(|g| g.data().iter().all(|&v| v == 0.0)));
        assert!(dx.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_backward_matches_symbolic_oracle() {
        // y = x W + b with batch 1: dW = x^T u, dx = u W^T, db = u.
        let w = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let layer = linear(w.clone(), t(&[2], &[0.0, 0.0]));
        let x = t(&[1, 2], &[5.0, 7.0]);
        let u = t(&[1, 2], &[0.1, -0.2]);
        let (grads, dx) = layer.backward(&x, &u).unwrap();
        let dw_expect = x.transpose().unwrap().matmul(&u).unwrap();
        let dx_expect = u.matmul(&w.transpose().unwrap()).unwrap();
        assert_eq!(grads[0], dw_expect);
        assert_eq!(grads[1], t(&[2], &[0.1, -0.2]));
        assert_eq!(dx, dx_expect);
    }

    #[test]
    fn relu_backward_masks_by_input_sign() {
        let spec = LayerSpec::new(LayerKind::Relu, vec![2], 0.0).unwrap();
        let layer = LayerState::<f64>::with_weights(spec, vec![]).unwrap();
        let (_, dx) = layer
            .backward(&t(&[1, 2], &[-1.0, 2.0]), &t(&[1, 2], &[5.0, 5.0]))
            .unwrap();
        assert_eq!(dx, t(&[1, 2], &[0.0, 5.0]));
    }

    #[test]
    fn flatten_round_trips_shape() {
        let spec = LayerSpec::new(LayerKind::Flatten, vec![2, 3], 0.0).unwrap();
        let layer = LayerState::<f64>::with_weights(spec, vec![]).unwrap();
        let x = t(&[2, 2, 3], &(0..12).map(|v| v as f64).collect::<Vec<_>>());
        let y = layer.forward(&x).unwrap();
        assert_eq!(y.shape(), &[2, 6]);
        let (_, dx) = layer.backward(&x, &y).unwrap();
        assert_eq!(dx, x);
    }

    #[test]
    fn forward_is_pure() {
        let mut rng = StreamRng::new(2);
        let spec = LayerSpec::new(
            LayerKind::Conv2d { out_channels: 2, kernel: (3, 3), stride: 1, padding: 1 },
            vec![1, 4, 4],
            0.5,
        )
        .unwrap();
        let layer: LayerState<f64> = LayerState::init(spec, &mut rng);
        let x = Tensor::randn(vec![2, 1, 4, 4], &mut rng, 1.0);
        assert_eq!(layer.forward(&x).unwrap(), layer.forward(&x).unwrap());
    }

    #[test]
    fn conv_output_shape() {
        let spec = LayerSpec::new(
            LayerKind::Conv2d { out_channels: 4, kernel: (3, 3), stride: 2, padding: 1 },
            vec![3, 8, 8],
            0.1,
        )
        .unwrap();
        assert_eq!(spec.out_shape().unwrap(), vec![4, 4, 4]);
        assert_eq!(spec.param_shapes(), vec![vec![4, 3, 3, 3], vec![4]]);
    }
}
