//! Operation tape for reverse-mode differentiation.
//!
//! A [`Tape`] is rebuilt for every forward pass. Nodes are appended in
//! evaluation order, so a node's parents always precede it and a single
//! reverse sweep visits every node after all of its consumers.

use super::kernels;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Var,
        stride: usize,
    },
    LeakyRelu {
        input: Var,
        alpha: f64,
    },
    Upsample2x {
        input: Var,
    },
    Concat {
        parts: Vec<Var>,
    },
    Crop {
        input: Var,
    },
    Scale {
        input: Var,
        factor: f64,
    },
    Sum {
        input: Var,
    },
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Stored node values in evaluation order.
    pub fn values(&self) -> impl Iterator<Item = &Tensor> {
        self.nodes.iter().map(|n| &n.value)
    }

    pub fn is_leaf(&self, v: Var) -> bool {
        matches!(self.nodes[v.0].op, Op::Leaf)
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var, stride: usize) -> Result<Var> {
        let y = kernels::conv2d(self.value(input), self.value(kernel), self.value(bias), stride)?;
        Ok(self.push(
            Op::Conv2d {
                input,
                kernel,
                bias,
                stride,
            },
            y,
        ))
    }

    pub fn leaky_relu(&mut self, input: Var, alpha: f64) -> Var {
        let y = kernels::leaky_relu(self.value(input), alpha);
        self.push(Op::LeakyRelu { input, alpha }, y)
    }

    pub fn upsample_bilinear_2x(&mut self, input: Var) -> Result<Var> {
        let y = kernels::upsample_bilinear_2x(self.value(input))?;
        Ok(self.push(Op::Upsample2x { input }, y))
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let y = kernels::concat_channels(&tensors)?;
        Ok(self.push(Op::Concat { parts: parts.to_vec() }, y))
    }

    pub fn crop(&mut self, input: Var, h: usize, w: usize) -> Result<Var> {
        let y = kernels::crop(self.value(input), h, w)?;
        Ok(self.push(Op::Crop { input }, y))
    }

    pub fn scale(&mut self, input: Var, factor: f64) -> Var {
        let y = self.value(input).scaled(factor);
        self.push(Op::Scale { input, factor }, y)
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let s = self.value(input).data().iter().sum();
        self.push(Op::Sum { input }, Tensor::scalar(s))
    }

    /// Re-evaluates every non-leaf node from the stored leaf values.
    pub fn replay(&self) -> Result<Vec<Tensor>> {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = |var: Var| &values[var.0];
            let y = match &node.op {
                Op::Leaf => node.value.clone(),
                Op::Conv2d {
                    input,
                    kernel,
                    bias,
                    stride,
                } => kernels::conv2d(v(*input), v(*kernel), v(*bias), *stride)?,
                Op::LeakyRelu { input, alpha } => kernels::leaky_relu(v(*input), *alpha),
                Op::Upsample2x { input } => kernels::upsample_bilinear_2x(v(*input))?,
                Op::Concat { parts } => {
                    let ts: Vec<&Tensor> = parts.iter().map(|p| v(*p)).collect();
                    kernels::concat_channels(&ts)?
                }
                Op::Crop { input } => {
                    let s = node.value.shape();
                    kernels::crop(v(*input), s[1], s[2])?
                }
                Op::Scale { input, factor } => v(*input).scaled(*factor),
                Op::Sum { input } => Tensor::scalar(v(*input).data().iter().sum()),
            };
            values.push(y);
        }
        Ok(values)
    }

    /// Propagates `cotangent` from `output` back to every node.
    ///
    /// Nodes that do not influence `output` end with a zero gradient.
    pub fn backward(&self, output: Var, cotangent: &Tensor) -> Result<Gradients> {
        let out_shape = self.value(output).shape();
        if cotangent.shape() != out_shape {
            return Err(Error::shape(
                "backward",
                "cotangent length",
                self.value(output).len(),
                cotangent.len(),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        grads[output.0] = Some(cotangent.clone());

        fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
            match slot {
                Some(acc) => acc.add_assign(&g),
                None => *slot = Some(g),
            }
        }

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Conv2d {
                    input,
                    kernel,
                    bias,
                    stride,
                } => {
                    let (gi, gk, gb) = kernels::conv2d_vjp(self.value(*input), self.value(*kernel), *stride, &g)?;
                    accumulate(&mut grads[input.0], gi);
                    accumulate(&mut grads[kernel.0], gk);
                    accumulate(&mut grads[bias.0], gb);
                }
                Op::LeakyRelu { input, alpha } => {
                    let gi = kernels::leaky_relu_vjp(self.value(*input), *alpha, &g);
                    accumulate(&mut grads[input.0], gi);
                }
                Op::Upsample2x { input } => {
                    let gi = kernels::upsample_bilinear_2x_vjp(self.value(*input).shape(), &g)?;
                    accumulate(&mut grads[input.0], gi);
                }
                Op::Concat { parts } => {
                    let [_, h, w] = g.dims3("concat_vjp")?;
                    let mut offset = 0;
                    for p in parts {
                        let shape = self.value(*p).shape().to_vec();
                        let n = shape[0] * h * w;
                        let piece = Tensor::new(shape, g.data()[offset..offset + n].to_vec())?;
                        offset += n;
                        accumulate(&mut grads[p.0], piece);
                    }
                }
                Op::Crop { input } => {
                    let gi = kernels::crop_vjp(self.value(*input).shape(), &g)?;
                    accumulate(&mut grads[input.0], gi);
                }
                Op::Scale { input, factor } => accumulate(&mut grads[input.0], g.scaled(*factor)),
                Op::Sum { input } => {
                    let shape = self.value(*input).shape().to_vec();
                    accumulate(&mut grads[input.0], Tensor::filled(shape, g.data()[0]));
                }
            }
            // Interior gradients are not needed once propagated.
            grads[idx] = None;
        }
        Ok(Gradients { grads })
    }
}

/// Per-node gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient with respect to a leaf; zeros when the leaf was not reached.
    pub fn wrt(&self, tape: &Tape, leaf: Var) -> Tensor {
        self.grads
            .get(leaf.0)
            .and_then(|g| g.clone())
            .unwrap_or_else(|| Tensor::zeros(tape.value(leaf).shape().to_vec()))
    }
}
