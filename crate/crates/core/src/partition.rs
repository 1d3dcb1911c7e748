//! Splitting an L-layer network into K contiguous modules.
//!
//! Boundaries are the 1-based indices of each module's last layer, strictly
//! increasing and ending at L. Module `k` (1-based) owns the half-open
//! 0-based layer range `boundaries[k-2] .. boundaries[k-1]`.

use crate::error::{CoreError, Result};
use crate::network::{LayerGrads, Network};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// How to choose the module boundaries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PartitionSpec {
    /// Explicit last-layer indices, 1-based, ending at L.
    Explicit(Vec<usize>),
    /// K modules minimizing the largest per-module layer count.
    BalancedLayers(usize),
    /// K modules minimizing the largest per-module parameter count.
    BalancedParams(usize),
}

/// The fixed split of a network into contiguous modules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModulePartition {
    boundaries: Vec<usize>,
}

impl ModulePartition {
    pub fn new(boundaries: Vec<usize>, depth: usize) -> Result<Self> {
        if boundaries.is_empty() || boundaries.len() > depth {
            return Err(CoreError::InvalidConfig(format!(
                "need 1..={depth} modules, got {}",
                boundaries.len()
            )));
        }
        let mut prev = 0;
        for &b in &boundaries {
            if b <= prev || b > depth {
                return Err(CoreError::InvalidConfig(format!(
                    "boundaries {boundaries:?} not strictly increasing within 1..={depth}"
                )));
            }
            prev = b;
        }
        if *boundaries.last().unwrap() != depth {
            return Err(CoreError::InvalidConfig(format!(
                "last boundary must equal the layer count {depth}, got {boundaries:?}"
            )));
        }
        Ok(Self { boundaries })
    }

    /// Single-module partition (plain backprop's view of the network).
    pub fn single(depth: usize) -> Self {
        Self { boundaries: vec![depth] }
    }

    pub fn from_spec<S: Scalar>(net: &Network<S>, spec: &PartitionSpec) -> Result<Self> {
        match spec {
            PartitionSpec::Explicit(b) => Self::new(b.clone(), net.depth()),
            PartitionSpec::BalancedLayers(k) => {
                let costs = vec![1u64; net.depth()];
                Self::new(min_max_cut(&costs, *k)?, net.depth())
            }
            PartitionSpec::BalancedParams(k) => {
                let costs: Vec<u64> =
                    net.layers().iter().map(|l| l.spec.param_count() as u64).collect();
                Self::new(min_max_cut(&costs, *k)?, net.depth())
            }
        }
    }

    pub fn module_count(&self) -> usize {
        self.boundaries.len()
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    /// 0-based layer range owned by 1-based module `k`.
    pub fn layer_range(&self, k: usize) -> std::ops::Range<usize> {
        assert!(k >= 1 && k <= self.boundaries.len(), "module index {k} out of range");
        let start = if k == 1 { 0 } else { self.boundaries[k - 2] };
        start..self.boundaries[k - 1]
    }

    /// 1-based module owning 0-based layer `l`.
    pub fn module_of_layer(&self, l: usize) -> usize {
        self.boundaries
            .iter()
            .position(|&b| l < b)
            .map(|idx| idx + 1)
            .expect("layer index within network depth")
    }
}

/// Boundaries of a contiguous K-way split of `costs` minimizing the maximum
/// per-part cost. Reconstruction is deterministic: each module takes the
/// longest prefix that stays within the optimal bottleneck while leaving one
/// layer for every remaining module.
fn min_max_cut(costs: &[u64], k: usize) -> Result<Vec<usize>> {
    let n = costs.len();
    if k == 0 || k > n {
        return Err(CoreError::InvalidConfig(format!(
            "cannot split {n} layers into {k} modules"
        )));
    }
    let mut prefix = vec![0u64; n + 1];
    for (i, &c) in costs.iter().enumerate() {
        prefix[i + 1] = prefix[i] + c;
    }
    let seg = |a: usize, b: usize| prefix[b] - prefix[a]; // cost of layers a..b

    // dp[m][i]: least achievable bottleneck splitting the first i layers
    // into m parts.
    let mut dp = vec![vec![u64::MAX; n + 1]; k + 1];
    dp[0][0] = 0;
    for m in 1..=k {
        for i in m..=n {
            let mut best = u64::MAX;
            for j in (m - 1)..i {
                if dp[m - 1][j] == u64::MAX {
                    continue;
                }
                best = best.min(dp[m - 1][j].max(seg(j, i)));
            }
            dp[m][i] = best;
        }
    }
    let bottleneck = dp[k][n];

    let mut boundaries = Vec::with_capacity(k);
    let mut start = 0;
    for m in 1..=k {
        let remaining = k - m;
        let mut end = start + 1;
        if m == k {
            end = n;
        } else {
            while end < n - remaining && seg(start, end + 1) <= bottleneck {
                end += 1;
            }
        }
        boundaries.push(end);
        start = end;
    }
    Ok(boundaries)
}

/// Composition of the module's layers over a batched input.
pub fn module_forward<S: Scalar>(
    net: &Network<S>,
    part: &ModulePartition,
    k: usize,
    input: &Tensor<S>,
) -> Result<Tensor<S>> {
    let mut h = input.clone();
    for l in part.layer_range(k) {
        h = net.layers()[l].forward(&h)?;
    }
    Ok(h)
}

/// Forward through the module collecting the input of each layer; returns
/// `(per-layer inputs, module output)`. This is the replay step: it rebuilds
/// the local graph from a stored boundary feature.
pub fn module_replay<S: Scalar>(
    net: &Network<S>,
    part: &ModulePartition,
    k: usize,
    input: &Tensor<S>,
) -> Result<(Vec<Tensor<S>>, Tensor<S>)> {
    let range = part.layer_range(k);
    let mut inputs = Vec::with_capacity(range.len());
    let mut h = input.clone();
    for l in range {
        let next = net.layers()[l].forward(&h)?;
        inputs.push(h);
        h = next;
    }
    Ok((inputs, h))
}

/// Chain `delta` backward through the module given each layer's input.
/// Returns per-layer weight gradients (module order) and the gradient at the
/// module's input boundary.
pub fn module_backward_from_inputs<S: Scalar>(
    net: &Network<S>,
    part: &ModulePartition,
    k: usize,
    layer_inputs: &[Tensor<S>],
    delta: &Tensor<S>,
) -> Result<(Vec<Vec<Tensor<S>>>, Tensor<S>)> {
    let range = part.layer_range(k);
    debug_assert_eq!(layer_inputs.len(), range.len());
    let mut grads = vec![Vec::new(); range.len()];
    let mut upstream = delta.clone();
    for (offset, l) in range.clone().enumerate().rev() {
        let (wgrads, input_grad) = net.layers()[l].backward(&layer_inputs[offset], &upstream)?;
        grads[offset] = wgrads;
        upstream = input_grad;
    }
    Ok((grads, upstream))
}

/// Replay forward from `input`, then chain `delta` backward through the
/// rebuilt local graph.
pub fn module_backward<S: Scalar>(
    net: &Network<S>,
    part: &ModulePartition,
    k: usize,
    input: &Tensor<S>,
    delta: &Tensor<S>,
) -> Result<(Vec<Vec<Tensor<S>>>, Tensor<S>)> {
    let (inputs, _output) = module_replay(net, part, k, input)?;
    module_backward_from_inputs(net, part, k, &inputs, delta)
}

/// Scatter per-module gradient lists into a network-wide `LayerGrads`.
pub fn assemble_layer_grads<S: Scalar>(
    net: &Network<S>,
    part: &ModulePartition,
    per_module: Vec<Vec<Vec<Tensor<S>>>>,
) -> LayerGrads<S> {
    let mut grads: LayerGrads<S> = vec![Vec::new(); net.depth()];
    for (k0, module_grads) in per_module.into_iter().enumerate() {
        let range = part.layer_range(k0 + 1);
        for (offset, g) in module_grads.into_iter().enumerate() {
            grads[range.start + offset] = g;
        }
    }
    grads
}
