//! Loss functions.
//!
//! Losses are batch means (not sums), so stepsizes are batch-size
//! independent. Mean-squared error averages over every element of the
//! prediction; cross-entropy averages the per-sample negative log-likelihood.

use crate::error::{CoreError, Result};
use crate::scalar::{cast, Scalar};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LossSpec {
    /// Log-sum-exp stabilized softmax cross-entropy over `num_classes`
    /// logits; targets are integer labels in `[0, num_classes)`.
    SoftmaxCrossEntropy { num_classes: usize },
    /// Mean over all elements of the squared error `(pred - target)^2`.
    Mse { output_dim: usize },
}

impl LossSpec {
    pub fn output_shape(&self) -> Vec<usize> {
        match self {
            LossSpec::SoftmaxCrossEntropy { num_classes } => vec![*num_classes],
            LossSpec::Mse { output_dim } => vec![*output_dim],
        }
    }
}

/// Training target for one batch.
#[derive(Debug, Clone, PartialEq)]
pub enum Target<S: Scalar> {
    Labels(Vec<usize>),
    Values(Tensor<S>),
}

impl<S: Scalar> Target<S> {
    pub fn batch(&self) -> usize {
        match self {
            Target::Labels(l) => l.len(),
            Target::Values(v) => v.batch(),
        }
    }

    /// Select the batch rows named by `rows`, preserving order.
    pub fn gather(&self, rows: &[usize]) -> Target<S> {
        match self {
            Target::Labels(l) => Target::Labels(rows.iter().map(|&r| l[r]).collect()),
            Target::Values(v) => Target::Values(v.gather_rows(rows)),
        }
    }
}

fn check_shapes<S: Scalar>(
    spec: &LossSpec,
    prediction: &Tensor<S>,
    target: &Target<S>,
) -> Result<()> {
    if prediction.shape().len() != 2 || prediction.shape()[1..] != spec.output_shape()[..] {
        return Err(CoreError::ShapeMismatch {
            op: "loss",
            left: prediction.shape().to_vec(),
            right: spec.output_shape(),
        });
    }
    match (spec, target) {
        (LossSpec::SoftmaxCrossEntropy { num_classes }, Target::Labels(labels)) => {
            if labels.len() != prediction.batch() {
                return Err(CoreError::ShapeMismatch {
                    op: "loss",
                    left: vec![prediction.batch()],
                    right: vec![labels.len()],
                });
            }
            for (i, &label) in labels.iter().enumerate() {
                if label >= *num_classes {
                    return Err(CoreError::LabelOutOfRange {
                        label,
                        num_classes: *num_classes,
                        sample: i,
                    });
                }
            }
            Ok(())
        }
        (LossSpec::Mse { .. }, Target::Values(values)) => {
            if values.shape() != prediction.shape() {
                return Err(CoreError::ShapeMismatch {
                    op: "loss",
                    left: prediction.shape().to_vec(),
                    right: values.shape().to_vec(),
                });
            }
            Ok(())
        }
        _ => Err(CoreError::InvalidConfig(
            "target kind does not match loss kind".to_string(),
        )),
    }
}

/// Mean loss over the batch; finite for finite inputs.
pub fn loss_forward<S: Scalar>(
    spec: &LossSpec,
    prediction: &Tensor<S>,
    target: &Target<S>,
) -> Result<S> {
    check_shapes(spec, prediction, target)?;
    let batch = prediction.batch();
    match (spec, target) {
        (LossSpec::SoftmaxCrossEntropy { num_classes }, Target::Labels(labels)) => {
            let c = *num_classes;
            let z = prediction.data();
            let mut total = S::zero();
            for (i, &label) in labels.iter().enumerate() {
                let row = &z[i * c..(i + 1) * c];
                let mut max = row[0];
                for &v in &row[1..] {
                    if v > max {
                        max = v;
                    }
                }
                let mut sum_exp = S::zero();
                for &v in row {
                    sum_exp = sum_exp + (v - max).exp();
                }
                total = total + (sum_exp.ln() + max - row[label]);
            }
            Ok(total / cast(batch as f64))
        }
        (LossSpec::Mse { .. }, Target::Values(values)) => {
            let mut total = S::zero();
            for (&p, &t) in prediction.data().iter().zip(values.data().iter()) {
                let e = p - t;
                total = total + e * e;
            }
            Ok(total / cast(prediction.len() as f64))
        }
        _ => unreachable!("covered by check_shapes"),
    }
}

/// Gradient of the mean loss with respect to the prediction.
pub fn loss_backward<S: Scalar>(
    spec: &LossSpec,
    prediction: &Tensor<S>,
    target: &Target<S>,
) -> Result<Tensor<S>> {
    check_shapes(spec, prediction, target)?;
    let batch = prediction.batch();
    match (spec, target) {
        (LossSpec::SoftmaxCrossEntropy { num_classes }, Target::Labels(labels)) => {
            let c = *num_classes;
            let z = prediction.data();
            let inv_batch = S::one() / cast(batch as f64);
            let mut grad = Tensor::zeros(prediction.shape().to_vec());
            let g = grad.data_mut();
            for (i, &label) in labels.iter().enumerate() {
                let row = &z[i * c..(i + 1) * c];
                let mut max = row[0];
                for &v in &row[1..] {
                    if v > max {
                        max = v;
                    }
                }
                let mut sum_exp = S::zero();
                for &v in row {
                    sum_exp = sum_exp + (v - max).exp();
                }
                for j in 0..c {
                    let softmax = (row[j] - max).exp() / sum_exp;
                    let one_hot = if j == label { S::one() } else { S::zero() };
                    g[i * c + j] = (softmax - one_hot) * inv_batch;
                }
            }
            Ok(grad)
        }
        (LossSpec::Mse { .. }, Target::Values(values)) => {
            let scale = cast::<S>(2.0) / cast(prediction.len() as f64);
            let mut grad = Tensor::zeros(prediction.shape().to_vec());
            for ((g, &p), &t) in grad
                .data_mut()
                .iter_mut()
                .zip(prediction.data().iter())
                .zip(values.data().iter())
            {
                *g = (p - t) * scale;
            }
            Ok(grad)
        }
        _ => unreachable!("covered by check_shapes"),
    }
}
