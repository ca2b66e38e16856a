//! Dueling Q-network: one shared rectified layer feeding a value stream and
//! an advantage stream, recombined as `Q = V + A - mean(A)`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetDims {
    pub input: usize,
    pub hidden: usize,
    pub value_hidden: usize,
    pub advantage_hidden: usize,
    pub actions: usize,
}

impl NetDims {
    pub fn new(input: usize, actions: usize, hidden: usize) -> Self {
        Self {
            input,
            hidden,
            value_hidden: hidden,
            advantage_hidden: hidden,
            actions,
        }
    }

    /// `(fan_in, fan_out)` of every layer in declared order.
    fn layer_shapes(&self) -> [(usize, usize); 5] {
        [
            (self.input, self.hidden),
            (self.hidden, self.value_hidden),
            (self.value_hidden, 1),
            (self.hidden, self.advantage_hidden),
            (self.advantage_hidden, self.actions),
        ]
    }

    /// Shapes of every tensor in declared order: each layer's weight, then its bias.
    pub fn tensor_shapes(&self) -> Vec<Vec<usize>> {
        self.layer_shapes()
            .iter()
            .flat_map(|&(i, o)| [vec![i, o], vec![o]])
            .collect()
    }
}

/// Fully connected layer; `weight` is `fan_in x fan_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and bias.
    pub fn init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        Self {
            weight: Array2::from_shape_simple_fn((fan_in, fan_out), || dist.sample(rng)),
            bias: Array1::from_shape_simple_fn(fan_out, || dist.sample(rng)),
        }
    }

    fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DuelingParams {
    pub shared: Dense,
    pub value_hidden: Dense,
    pub value_out: Dense,
    pub advantage_hidden: Dense,
    pub advantage_out: Dense,
}

/// Single-observation network output.
#[derive(Clone, Debug, PartialEq)]
pub struct QOutput {
    pub q: Vec<f64>,
    pub value: f64,
    pub advantage: Vec<f64>,
}

/// Batched forward pass with the activations needed for backprop.
pub struct ForwardCache {
    input: Array2<f64>,
    shared_pre: Array2<f64>,
    shared: Array2<f64>,
    value_pre: Array2<f64>,
    value_act: Array2<f64>,
    advantage_pre: Array2<f64>,
    advantage_act: Array2<f64>,
    pub value: Array1<f64>,
    pub advantage: Array2<f64>,
    pub q: Array2<f64>,
}

/// Transposed products come back column-major; flat tensor views need row-major.
fn row_major(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

fn relu_backward(grad: Array2<f64>, pre: &Array2<f64>) -> Array2<f64> {
    let mut g = grad;
    g.zip_mut_with(pre, |g, &z| {
        if z <= 0.0 {
            *g = 0.0;
        }
    });
    g
}

impl DuelingParams {
    pub fn new<R: Rng + ?Sized>(dims: NetDims, rng: &mut R) -> Self {
        let [a, b, c, d, e] = dims.layer_shapes();
        Self {
            shared: Dense::init(a.0, a.1, rng),
            value_hidden: Dense::init(b.0, b.1, rng),
            value_out: Dense::init(c.0, c.1, rng),
            advantage_hidden: Dense::init(d.0, d.1, rng),
            advantage_out: Dense::init(e.0, e.1, rng),
        }
    }

    pub fn zeros(dims: NetDims) -> Self {
        let [a, b, c, d, e] = dims.layer_shapes();
        Self {
            shared: Dense::zeros(a.0, a.1),
            value_hidden: Dense::zeros(b.0, b.1),
            value_out: Dense::zeros(c.0, c.1),
            advantage_hidden: Dense::zeros(d.0, d.1),
            advantage_out: Dense::zeros(e.0, e.1),
        }
    }

    pub fn dims(&self) -> NetDims {
        NetDims {
            input: self.shared.weight.nrows(),
            hidden: self.shared.weight.ncols(),
            value_hidden: self.value_hidden.weight.ncols(),
            advantage_hidden: self.advantage_hidden.weight.ncols(),
            actions: self.advantage_out.weight.ncols(),
        }
    }

    fn layers(&self) -> [&Dense; 5] {
        [
            &self.shared,
            &self.value_hidden,
            &self.value_out,
            &self.advantage_hidden,
            &self.advantage_out,
        ]
    }

    fn layers_mut(&mut self) -> [&mut Dense; 5] {
        [
            &mut self.shared,
            &mut self.value_hidden,
            &mut self.value_out,
            &mut self.advantage_hidden,
            &mut self.advantage_out,
        ]
    }

    /// Every tensor as a flat slice, in declared order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers()
            .into_iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers_mut()
            .into_iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Rebuilds parameters from flat tensors in declared order.
    pub fn from_tensors(dims: NetDims, tensors: &[Vec<f64>]) -> Result<Self> {
        let shapes = dims.tensor_shapes();
        if tensors.len() != shapes.len() {
            return Err(Error::Shape {
                expected: shapes.len(),
                actual: tensors.len(),
            });
        }
        let mut p = Self::zeros(dims);
        for (dst, src) in p.tensors_mut().into_iter().zip(tensors) {
            if dst.len() != src.len() {
                return Err(Error::Shape {
                    expected: dst.len(),
                    actual: src.len(),
                });
            }
            dst.copy_from_slice(src);
        }
        Ok(p)
    }

    pub fn forward_batch(&self, input: ArrayView2<f64>) -> Result<ForwardCache> {
        let dims = self.dims();
        if input.ncols() != dims.input {
            return Err(Error::Shape {
                expected: dims.input,
                actual: input.ncols(),
            });
        }
        let shared_pre = self.shared.apply(input);
        let shared = relu(&shared_pre);
        let value_pre = self.value_hidden.apply(shared.view());
        let value_act = relu(&value_pre);
        let value = self.value_out.apply(value_act.view()).column(0).to_owned();
        let advantage_pre = self.advantage_hidden.apply(shared.view());
        let advantage_act = relu(&advantage_pre);
        let advantage = self.advantage_out.apply(advantage_act.view());

        let mean_adv = advantage.mean_axis(Axis(1)).expect("at least one action");
        let mut q = advantage.clone();
        for ((mut row, &v), &m) in q.rows_mut().into_iter().zip(&value).zip(&mean_adv) {
            row.mapv_inplace(|a| v + a - m);
        }
        Ok(ForwardCache {
            input: input.to_owned(),
            shared_pre,
            shared,
            value_pre,
            value_act,
            advantage_pre,
            advantage_act,
            value,
            advantage,
            q,
        })
    }

    /// Q-values, state value and raw advantages for one observation.
    pub fn q_forward(&self, obs: &[f64]) -> Result<QOutput> {
        let x = ArrayView2::from_shape((1, obs.len()), obs).expect("row vector");
        let out = self.forward_batch(x)?;
        Ok(QOutput {
            q: out.q.row(0).to_vec(),
            value: out.value[0],
            advantage: out.advantage.row(0).to_vec(),
        })
    }

    /// Gradients of the parameters given `dL/dQ` for each batch row.
    pub fn backward(&self, cache: &ForwardCache, grad_q: &Array2<f64>) -> DuelingParams {
        let actions = grad_q.ncols() as f64;
        // Q = V + A - mean(A)
        let grad_value = grad_q.sum_axis(Axis(1));
        let mut grad_adv = grad_q.clone();
        for (mut row, &s) in grad_adv.rows_mut().into_iter().zip(&grad_value) {
            row.mapv_inplace(|g| g - s / actions);
        }
        let grad_value = grad_value.insert_axis(Axis(1));

        let adv_out = Dense {
            weight: row_major(cache.advantage_act.t().dot(&grad_adv)),
            bias: grad_adv.sum_axis(Axis(0)),
        };
        let grad_adv_pre = relu_backward(grad_adv.dot(&self.advantage_out.weight.t()), &cache.advantage_pre);
        let adv_hidden = Dense {
            weight: row_major(cache.shared.t().dot(&grad_adv_pre)),
            bias: grad_adv_pre.sum_axis(Axis(0)),
        };

        let value_out = Dense {
            weight: row_major(cache.value_act.t().dot(&grad_value)),
            bias: grad_value.sum_axis(Axis(0)),
        };
        let grad_value_pre = relu_backward(grad_value.dot(&self.value_out.weight.t()), &cache.value_pre);
        let value_hidden = Dense {
            weight: row_major(cache.shared.t().dot(&grad_value_pre)),
            bias: grad_value_pre.sum_axis(Axis(0)),
        };

        let grad_shared = grad_adv_pre.dot(&self.advantage_hidden.weight.t())
            + grad_value_pre.dot(&self.value_hidden.weight.t());
        let grad_shared_pre = relu_backward(grad_shared, &cache.shared_pre);
        let shared = Dense {
            weight: row_major(cache.input.t().dot(&grad_shared_pre)),
            bias: grad_shared_pre.sum_axis(Axis(0)),
        };

        DuelingParams {
            shared,
            value_hidden,
            value_out,
            advantage_hidden: adv_hidden,
            advantage_out: adv_out,
        }
    }
}

/// Importance-weighted squared TD loss and its exact gradient.
///
/// `loss = sum_i w_i (y_i - Q(s_i, a_i))^2`. Also returns the signed TD
/// errors `y_i - Q(s_i, a_i)` at the pre-update parameters.
pub fn loss_and_gradients(
    params: &DuelingParams,
    obs: ArrayView2<f64>,
    actions: &[usize],
    targets: &[f64],
    weights: &[f64],
) -> Result<(f64, DuelingParams, Vec<f64>)> {
    let batch = obs.nrows();
    for len in [actions.len(), targets.len(), weights.len()] {
        if len != batch {
            return Err(Error::Shape {
                expected: batch,
                actual: len,
            });
        }
    }
    let n_actions = params.dims().actions;
    if let Some(&bad) = actions.iter().find(|&&a| a >= n_actions) {
        return Err(Error::Shape {
            expected: n_actions,
            actual: bad,
        });
    }
    let cache = params.forward_batch(obs)?;
    let mut grad_q = Array2::zeros(cache.q.raw_dim());
    let mut loss = 0.0;
    let mut td = Vec::with_capacity(batch);
    for i in 0..batch {
        let err = targets[i] - cache.q[[i, actions[i]]];
        loss += weights[i] * err * err;
        grad_q[[i, actions[i]]] = -2.0 * weights[i] * err;
        td.push(err);
    }
    let grads = params.backward(&cache, &grad_q);
    Ok((loss, grads, td))
}
