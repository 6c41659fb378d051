//! Dense residual networks with exact reverse-mode gradients.
//!
//! Policy and value functions are separate networks of the same shape: a
//! fully connected projection onto the hidden width, a stack of residual
//! feedforward blocks (`x + W₂·relu(W₁·relu(x) + b₁) + b₂`), then a ReLU
//! and a final fully connected head. Gradients are computed by hand-rolled
//! backprop and checked against central finite differences in the tests;
//! training runs in `f32`, the verification harness in `f64`.

use ndarray::{Array2, Axis};
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Element type usable in network math (`f32` for training, `f64` for the
/// finite-difference harness).
pub trait Scalar:
    Float
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + std::ops::AddAssign
    + std::fmt::Debug
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Additive logit offset for illegal actions. Large enough that masked
/// probabilities underflow to exactly zero, finite so entropy terms stay
/// well defined.
pub const MASK_NEG: f64 = -1.0e9;

fn relu<F: Scalar>(x: &Array2<F>) -> Array2<F> {
    x.mapv(|v| if v > F::zero() { v } else { F::zero() })
}

/// Propagates `g` through a ReLU that saw pre-activation `pre`.
fn relu_backward<F: Scalar>(pre: &Array2<F>, g: &Array2<F>) -> Array2<F> {
    let mut out = g.clone();
    out.zip_mut_with(pre, |gv, pv| {
        if *pv <= F::zero() {
            *gv = F::zero();
        }
    });
    out
}

/// Fully connected layer, `y = x·Wᵀ + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear<F> {
    /// Weight matrix, shape `(out, in)`.
    pub weight: Array2<F>,
    /// Bias row, shape `(1, out)`.
    pub bias: Array2<F>,
}

impl<F: Scalar> Linear<F> {
    fn forward(&self, x: &Array2<F>) -> Array2<F> {
        x.dot(&self.weight.t()) + &self.bias
    }

    /// Accumulates into `grads = [g_weight, g_bias]`, returns `∂L/∂x`.
    fn backward(&self, x: &Array2<F>, g_out: &Array2<F>, grads: &mut [Array2<F>]) -> Array2<F> {
        grads[0] += &g_out.t().dot(x);
        grads[1] += &g_out.sum_axis(Axis(0)).insert_axis(Axis(0));
        g_out.dot(&self.weight)
    }
}

/// Residual feedforward block: `x + W₂·relu(W₁·relu(x) + b₁) + b₂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block<F> {
    pub fc1: Linear<F>,
    pub fc2: Linear<F>,
}

struct BlockCache<F> {
    x: Array2<F>,
    z1: Array2<F>,
    h1: Array2<F>,
    z2: Array2<F>,
}

impl<F: Scalar> Block<F> {
    fn forward(&self, x: &Array2<F>) -> Array2<F> {
        let z1 = relu(x);
        let h1 = self.fc1.forward(&z1);
        let z2 = relu(&h1);
        x + &self.fc2.forward(&z2)
    }

    fn forward_cached(&self, x: Array2<F>) -> (Array2<F>, BlockCache<F>) {
        let z1 = relu(&x);
        let h1 = self.fc1.forward(&z1);
        let z2 = relu(&h1);
        let y = &x + &self.fc2.forward(&z2);
        (y, BlockCache { x, z1, h1, z2 })
    }

    /// `grads = [g_w1, g_b1, g_w2, g_b2]`.
    fn backward(&self, cache: &BlockCache<F>, g_out: &Array2<F>, grads: &mut [Array2<F>]) -> Array2<F> {
        let (g1, g2) = grads.split_at_mut(2);
        let g_z2 = self.fc2.backward(&cache.z2, g_out, g2);
        let g_h1 = relu_backward(&cache.h1, &g_z2);
        let g_z1 = self.fc1.backward(&cache.z1, &g_h1, g1);
        g_out + &relu_backward(&cache.x, &g_z1)
    }
}

/// Residual MLP: input projection, `n_blocks` residual blocks, ReLU, head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualNet<F> {
    pub input: Linear<F>,
    pub blocks: Vec<Block<F>>,
    pub head: Linear<F>,
}

/// Activations recorded by [`ResidualNet::forward_cached`].
pub struct NetCache<F> {
    x: Array2<F>,
    blocks: Vec<BlockCache<F>>,
    pre_head: Array2<F>,
    z_head: Array2<F>,
}

/// Gradient arrays in [`ResidualNet::params`] order.
#[derive(Debug, Clone)]
pub struct NetGrads<F>(pub Vec<Array2<F>>);

impl<F: Scalar> ResidualNet<F> {
    /// Initializes with orthogonal weights (gain √2 on hidden layers,
    /// `head_gain` on the output head) and zero biases.
    pub fn init<R: Rng>(
        in_dim: usize,
        hidden: usize,
        n_blocks: usize,
        out_dim: usize,
        head_gain: f64,
        rng: &mut R,
    ) -> Self {
        let lin = |out: usize, inp: usize, gain: f64, rng: &mut R| Linear {
            weight: orthogonal(out, inp, gain, rng).mapv(|v| F::from(v).unwrap()),
            bias: Array2::zeros((1, out)),
        };
        let sqrt2 = std::f64::consts::SQRT_2;
        ResidualNet {
            input: lin(hidden, in_dim, sqrt2, rng),
            blocks: (0..n_blocks)
                .map(|_| Block {
                    fc1: lin(hidden, hidden, sqrt2, rng),
                    fc2: lin(hidden, hidden, sqrt2, rng),
                })
                .collect(),
            head: lin(out_dim, hidden, head_gain, rng),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.input.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.head.weight.nrows()
    }

    /// Forward pass without caching (inference).
    pub fn forward(&self, x: &Array2<F>) -> Array2<F> {
        let mut h = self.input.forward(x);
        for b in &self.blocks {
            h = b.forward(&h);
        }
        self.head.forward(&relu(&h))
    }

    /// Forward pass keeping activations for [`backward`](Self::backward).
    pub fn forward_cached(&self, x: Array2<F>) -> (Array2<F>, NetCache<F>) {
        let mut h = self.input.forward(&x);
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (next, cache) = b.forward_cached(h);
            blocks.push(cache);
            h = next;
        }
        let z_head = relu(&h);
        let out = self.head.forward(&z_head);
        (out, NetCache { x, blocks, pre_head: h, z_head })
    }

    /// Accumulates exact gradients of a scalar loss given `g_out = ∂L/∂out`.
    pub fn backward(&self, cache: &NetCache<F>, g_out: &Array2<F>, grads: &mut NetGrads<F>) {
        let g = &mut grads.0;
        let n = g.len();
        let g_z = self.head.backward(&cache.z_head, g_out, &mut g[n - 2..]);
        let mut back = relu_backward(&cache.pre_head, &g_z);
        for (i, b) in self.blocks.iter().enumerate().rev() {
            let base = 2 + 4 * i;
            back = b.backward(&cache.blocks[i], &back, &mut g[base..base + 4]);
        }
        self.input.backward(&cache.x, &back, &mut g[0..2]);
    }

    /// Parameter arrays in canonical order: input (w, b), each block's
    /// fc1 (w, b) and fc2 (w, b), head (w, b).
    pub fn params(&self) -> Vec<&Array2<F>> {
        let mut p = vec![&self.input.weight, &self.input.bias];
        for b in &self.blocks {
            p.extend([&b.fc1.weight, &b.fc1.bias, &b.fc2.weight, &b.fc2.bias]);
        }
        p.extend([&self.head.weight, &self.head.bias]);
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<F>> {
        let mut p = vec![&mut self.input.weight, &mut self.input.bias];
        for b in &mut self.blocks {
            p.extend([
                &mut b.fc1.weight,
                &mut b.fc1.bias,
                &mut b.fc2.weight,
                &mut b.fc2.bias,
            ]);
        }
        p.extend([&mut self.head.weight, &mut self.head.bias]);
        p
    }

    pub fn zero_grads(&self) -> NetGrads<F> {
        NetGrads(
            self.params()
                .iter()
                .map(|p| Array2::zeros(p.raw_dim()))
                .collect(),
        )
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Converts the element type (used by the 64-bit verification harness).
    pub fn cast<G: Scalar>(&self) -> ResidualNet<G> {
        let conv = |l: &Linear<F>| Linear {
            weight: l.weight.mapv(|v| G::from(v).unwrap()),
            bias: l.bias.mapv(|v| G::from(v).unwrap()),
        };
        ResidualNet {
            input: conv(&self.input),
            blocks: self
                .blocks
                .iter()
                .map(|b| Block { fc1: conv(&b.fc1), fc2: conv(&b.fc2) })
                .collect(),
            head: conv(&self.head),
        }
    }
}

/// Orthogonal matrix of shape `(rows, cols)` scaled by `gain`, via
/// modified Gram-Schmidt on a Gaussian sample.
fn orthogonal<R: Rng>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Array2<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let (n, m) = (rows.max(cols), rows.min(cols));
    let mut a: Array2<f64> = Array2::zeros((n, m));
    for v in a.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
    for j in 0..m {
        for i in 0..j {
            let dot = a.column(j).dot(&a.column(i));
            let prev = a.column(i).to_owned();
            a.column_mut(j).zip_mut_with(&prev, |x, p| *x -= dot * p);
        }
        let norm = a.column(j).dot(&a.column(j)).sqrt();
        a.column_mut(j).mapv_inplace(|x| x / norm);
    }
    let q = if rows >= cols { a } else { a.t().to_owned() };
    q * gain
}

/// Masked log-softmax over action logits.
///
/// Illegal entries receive [`MASK_NEG`] before the stable log-softmax, so
/// their probability is exactly zero while legal probabilities renormalize
/// to one. Fails if any row has no legal action.
pub fn masked_log_softmax<F: Scalar>(
    logits: &Array2<F>,
    masks: &Array2<bool>,
) -> Result<Array2<F>> {
    debug_assert_eq!(logits.dim(), masks.dim());
    let neg = F::from(MASK_NEG).unwrap();
    let mut out = logits.clone();
    for (mut row, mask_row) in out.rows_mut().into_iter().zip(masks.rows()) {
        let mut any = false;
        for (v, m) in row.iter_mut().zip(mask_row) {
            if !*m {
                *v = *v + neg;
            } else {
                any = true;
            }
        }
        if !any {
            return Err(Error::InvalidState("action mask with no legal action".into()));
        }
        let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
        let sum = row.iter().map(|v| (*v - max).exp()).fold(F::zero(), |a, b| a + b);
        let lse = max + sum.ln();
        for v in row.iter_mut() {
            *v = *v - lse;
        }
    }
    Ok(out)
}

/// Samples one action per row from masked log-probabilities.
pub fn sample_actions<F: Scalar, R: Rng>(log_probs: &Array2<F>, rng: &mut R) -> Vec<usize> {
    log_probs
        .rows()
        .into_iter()
        .map(|row| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut last_legal = 0;
            for (a, lp) in row.iter().enumerate() {
                let p = lp.to_f64().unwrap().exp();
                if p > 0.0 {
                    last_legal = a;
                    acc += p;
                    if u < acc {
                        return a;
                    }
                }
            }
            last_legal
        })
        .collect()
}

/// Argmax action per row (ties: lowest index).
pub fn greedy_actions<F: Scalar>(log_probs: &Array2<F>) -> Vec<usize> {
    log_probs
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            let mut best_v = F::neg_infinity();
            for (a, v) in row.iter().enumerate() {
                if *v > best_v {
                    best_v = *v;
                    best = a;
                }
            }
            best
        })
        .collect()
}

/// Per-row entropy of masked distributions (zero-probability entries
/// contribute nothing).
pub fn entropy<F: Scalar>(log_probs: &Array2<F>) -> Vec<F> {
    log_probs
        .rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .map(|lp| {
                    let p = lp.exp();
                    if p > F::zero() {
                        -(p * *lp)
                    } else {
                        F::zero()
                    }
                })
                .fold(F::zero(), |a, b| a + b)
        })
        .collect()
}

/// Adam optimizer state for one network.
pub struct Adam {
    m: Vec<Array2<f32>>,
    v: Vec<Array2<f32>>,
    t: i32,
    beta1: f32,
    beta2: f32,
    eps: f32,
}

impl Adam {
    pub fn new(net: &ResidualNet<f32>) -> Self {
        let zeros: Vec<Array2<f32>> = net
            .params()
            .iter()
            .map(|p| Array2::zeros(p.raw_dim()))
            .collect();
        Adam { m: zeros.clone(), v: zeros, t: 0, beta1: 0.9, beta2: 0.999, eps: 1e-5 }
    }

    /// One update with learning rate `lr` on gradients `grads`.
    pub fn step(&mut self, net: &mut ResidualNet<f32>, grads: &NetGrads<f32>, lr: f32) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for ((param, grad), (m, v)) in net
            .params_mut()
            .into_iter()
            .zip(&grads.0)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let (beta1, beta2, eps) = (self.beta1, self.beta2, self.eps);
            ndarray::Zip::from(param)
                .and(grad)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
                });
        }
    }
}

/// Scales gradients so their global L2 norm is at most `max_norm`;
/// returns the pre-clip norm.
pub fn clip_grad_norm(grads: &mut [&mut NetGrads<f32>], max_norm: f32) -> f32 {
    let mut sq = 0.0f64;
    for g in grads.iter() {
        for arr in &g.0 {
            sq += arr.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>();
        }
    }
    let norm = sq.sqrt() as f32;
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for arr in &mut g.0 {
                arr.mapv_inplace(|x| x * scale);
            }
        }
    }
    norm
}
