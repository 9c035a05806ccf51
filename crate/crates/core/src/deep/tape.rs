//! Reverse-mode differentiation over a linear tape of layer operations.

use super::ops::{self, NormCache};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv { x: Var, w: Var, pad: usize },
    Norm { x: Var, gamma: Var, cache: NormCache },
    LeakyRelu { x: Var, slope: f64 },
    MaxPool { x: Var, argmax: Vec<usize> },
    AvgPool { x: Var },
    Linear { x: Var, w: Var },
    MeanSqDist { y: Var, center: Vec<f64> },
    /// `Σ r ⊙ x` for a constant `r`.
    WeightedSum { x: Var, weights: Vec<f64> },
    /// `(β/2) Σ ‖W‖²` over the listed tensors.
    Penalty { params: Vec<Var>, beta: f64 },
    Add { a: Var, b: Var },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar with respect to every tape value.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of `v`; zero if the output does not depend on it.
    pub fn get(&self, v: Var, tape: &Tape) -> Tensor {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(tape.value(v).shape().to_vec()))
    }

    pub fn take(&mut self, v: Var, tape: &Tape) -> Tensor {
        self.grads[v.0]
            .take()
            .unwrap_or_else(|| Tensor::zeros(tape.value(v).shape().to_vec()))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn conv1d(&mut self, x: Var, w: Var, pad: usize) -> Result<Var> {
        let y = ops::conv1d(self.value(x), self.value(w), pad)?;
        Ok(self.push(y, Op::Conv { x, w, pad }))
    }

    /// Scale-only batch norm; `running` selects evaluation mode.
    pub fn batch_norm(&mut self, x: Var, gamma: Var, eps: f64, running: Option<(&[f64], &[f64])>) -> Result<Var> {
        let (y, cache) = ops::batch_norm(self.value(x), self.value(gamma), eps, running)?;
        Ok(self.push(y, Op::Norm { x, gamma, cache }))
    }

    /// Batch statistics of a training-mode batch norm node.
    pub fn norm_stats(&self, v: Var) -> Option<&(Vec<f64>, Vec<f64>)> {
        match &self.nodes[v.0].op {
            Op::Norm { cache, .. } => cache.batch_stats.as_ref(),
            _ => None,
        }
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let y = ops::leaky_relu(self.value(x), slope);
        self.push(y, Op::LeakyRelu { x, slope })
    }

    pub fn max_pool(&mut self, x: Var, size: usize) -> Result<Var> {
        let (y, argmax) = ops::max_pool(self.value(x), size)?;
        Ok(self.push(y, Op::MaxPool { x, argmax }))
    }

    pub fn avg_pool(&mut self, x: Var) -> Result<Var> {
        let y = ops::avg_pool(self.value(x))?;
        Ok(self.push(y, Op::AvgPool { x }))
    }

    pub fn linear(&mut self, x: Var, w: Var) -> Result<Var> {
        let y = ops::linear(self.value(x), self.value(w))?;
        Ok(self.push(y, Op::Linear { x, w }))
    }

    pub fn mean_sq_dist(&mut self, y: Var, center: &[f64]) -> Result<Var> {
        let loss = ops::mean_sq_dist(self.value(y), center)?;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::MeanSqDist {
                y,
                center: center.to_vec(),
            },
        ))
    }

    pub fn weighted_sum(&mut self, x: Var, weights: &[f64]) -> Result<Var> {
        let value = self.value(x);
        if value.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: value.len(),
                got: weights.len(),
            });
        }
        let s = value.data().iter().zip(weights).map(|(a, b)| a * b).sum();
        Ok(self.push(
            Tensor::scalar(s),
            Op::WeightedSum {
                x,
                weights: weights.to_vec(),
            },
        ))
    }

    pub fn penalty(&mut self, params: &[Var], beta: f64) -> Var {
        let total: f64 = params.iter().map(|&p| self.value(p).sum_sqr()).sum();
        self.push(
            Tensor::scalar(0.5 * beta * total),
            Op::Penalty {
                params: params.to_vec(),
                beta,
            },
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).len() != 1 || self.value(b).len() != 1 {
            return Err(Error::InvalidData("add is only defined for scalars".into()));
        }
        let s = self.value(a).item() + self.value(b).item();
        Ok(self.push(Tensor::scalar(s), Op::Add { a, b }))
    }

    /// Back-propagates from the scalar `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.value(root).len() != 1 {
            return Err(Error::InvalidData("backward needs a scalar root".into()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::filled(self.value(root).shape().to_vec(), 1.0));

        fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=root.0).rev() {
            let Some(dy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(dy);
                    continue;
                }
                Op::Conv { x, w, pad } => {
                    let (dx, dw) = ops::conv1d_backward(self.value(*x), self.value(*w), *pad, &dy);
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *w, dw);
                }
                Op::Norm { x, gamma, cache } => {
                    let (dx, dg) = ops::batch_norm_backward(self.value(*gamma), cache, &dy);
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *gamma, dg);
                }
                Op::LeakyRelu { x, slope } => {
                    let dx = ops::leaky_relu_backward(self.value(*x), *slope, &dy);
                    accumulate(&mut grads, *x, dx);
                }
                Op::MaxPool { x, argmax } => {
                    let dx = ops::max_pool_backward(self.value(*x).shape(), argmax, &dy);
                    accumulate(&mut grads, *x, dx);
                }
                Op::AvgPool { x } => {
                    let dx = ops::avg_pool_backward(self.value(*x).shape(), &dy);
                    accumulate(&mut grads, *x, dx);
                }
                Op::Linear { x, w } => {
                    let (dx, dw) = ops::linear_backward(self.value(*x), self.value(*w), &dy);
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *w, dw);
                }
                Op::MeanSqDist { y, center } => {
                    let dx = ops::mean_sq_dist_backward(self.value(*y), center, dy.item());
                    accumulate(&mut grads, *y, dx);
                }
                Op::WeightedSum { x, weights } => {
                    let g = dy.item();
                    let data = weights.iter().map(|w| g * w).collect();
                    accumulate(&mut grads, *x, Tensor::new(self.value(*x).shape().to_vec(), data)?);
                }
                Op::Penalty { params, beta } => {
                    let scale = beta * dy.item();
                    for &p in params {
                        let data = self.value(p).data().iter().map(|w| scale * w).collect();
                        let g = Tensor::new(self.value(p).shape().to_vec(), data)?;
                        accumulate(&mut grads, p, g);
                    }
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads, *a, dy.clone());
                    accumulate(&mut grads, *b, dy);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shared_inputs_accumulate() {
        // loss = ‖x − c‖² + (β/2)‖x‖² uses x twice
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![1, 2], vec![1.0, -2.0]).unwrap());
        let d = tape.mean_sq_dist(x, &[0.5, 0.5]).unwrap();
        let p = tape.penalty(&[x], 0.2);
        let loss = tape.add(d, p).unwrap();
        assert!((tape.value(loss).item() - (0.25 + 6.25 + 0.1 * 5.0)).abs() < 1e-15);
        let g = tape.backward(loss).unwrap();
        let gx = g.get(x, &tape);
        assert!((gx.data()[0] - (1.0 + 0.2)).abs() < 1e-15);
        assert!((gx.data()[1] - (-5.0 - 0.4)).abs() < 1e-15);
    }

    #[test]
    fn unused_leaf_has_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![1, 1], vec![3.0]).unwrap());
        let unused = tape.leaf(Tensor::zeros(vec![2]));
        let loss = tape.mean_sq_dist(x, &[1.0]).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(unused, &tape).data(), &[0.0, 0.0]);
        assert_eq!(g.get(x, &tape).data(), &[4.0]);
        assert!(tape.backward(x).is_ok());
        assert!(tape.backward(unused).is_err());
    }
}
