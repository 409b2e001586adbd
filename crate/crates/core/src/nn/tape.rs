//! Reverse-mode differentiation over a recorded tape of the few operations
//! the model needs.

use super::params::ParamSet;
use super::tensor::{matmul_acc, matmul_at_b_acc, transpose, ConvGeom, Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Leaf {
        requires_grad: bool,
    },
    Param(usize),
    /// `x[rows×in] · w[in×out] + b[out]`
    Dense {
        x: Var,
        w: Var,
        b: Var,
        rows: usize,
    },
    Conv {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
        cols: Vec<T>,
    },
    Relu(Var),
    Add(Var, Var),
    Concat(Vec<Var>),
    Reshape(Var),
    /// `Σ (pred - target)²`
    SquaredError {
        pred: Var,
        target: Var,
    },
    /// Sum of scalar nodes.
    SumScalars(Vec<Var>),
    Scale(Var, T),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

pub struct Tape<'p, T> {
    params: &'p ParamSet<T>,
    nodes: Vec<Node<T>>,
}

/// Gradients of one backward pass.
pub struct Gradients<T> {
    nodes: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient with respect to a leaf created by [`Tape::leaf`].
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].as_ref()
    }
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new(params: &'p ParamSet<T>) -> Self {
        Self {
            params,
            nodes: Vec::with_capacity(64),
        }
    }

    pub fn params(&self) -> &'p ParamSet<T> {
        self.params
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        match self.nodes[v.0].op {
            Op::Param(i) => &self.params.tensors[i],
            _ => &self.nodes[v.0].value,
        }
    }

    /// Input whose gradient is reported by [`Tape::backward`].
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        self.push(
            t,
            Op::Leaf {
                requires_grad: true,
            },
        )
    }

    /// Input that receives no gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(
            t,
            Op::Leaf {
                requires_grad: false,
            },
        )
    }

    pub fn param(&mut self, index: usize) -> Var {
        self.push(Tensor::zeros(&[0]), Op::Param(index))
    }

    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if wv.dims.len() != 2 {
            return Err(Error::shape("rank-2 weight", format!("{:?}", wv.dims)));
        }
        let (k, m) = (wv.dims[0], wv.dims[1]);
        if xv.len() % k != 0 || xv.is_empty() || bv.len() != m {
            return Err(Error::shape(
                format!("input multiple of {k}, bias {m}"),
                format!("input {:?}, bias {:?}", xv.dims, bv.dims),
            ));
        }
        let rows = xv.len() / k;
        let mut out = Vec::with_capacity(rows * m);
        for _ in 0..rows {
            out.extend_from_slice(&bv.data);
        }
        matmul_acc(&xv.data, &wv.data, &mut out, rows, k, m);
        let dims = if xv.dims.len() <= 1 && rows == 1 {
            vec![m]
        } else {
            vec![rows, m]
        };
        Ok(self.push(Tensor { dims, data: out }, Op::Dense { x, w, b, rows }))
    }

    /// 3×3 convolution of an HWC tensor; weight `[9·in_c, out_c]`.
    pub fn conv3x3(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.dims.len() != 3 || wv.dims.len() != 2 {
            return Err(Error::shape(
                "HWC input and rank-2 weight",
                format!("{:?} / {:?}", xv.dims, wv.dims),
            ));
        }
        let geom = ConvGeom {
            in_h: xv.dims[0],
            in_w: xv.dims[1],
            in_c: xv.dims[2],
            out_c: wv.dims[1],
            stride,
            pad,
        };
        if wv.dims[0] != geom.patch() || bv.len() != geom.out_c {
            return Err(Error::shape(
                format!("weight [{}, {}]", geom.patch(), geom.out_c),
                format!("{:?}", wv.dims),
            ));
        }
        let cols = geom.im2col(&xv.data);
        let n = geom.out_h() * geom.out_w();
        let mut out = Vec::with_capacity(n * geom.out_c);
        for _ in 0..n {
            out.extend_from_slice(&bv.data);
        }
        matmul_acc(&cols, &wv.data, &mut out, n, geom.patch(), geom.out_c);
        let value = Tensor {
            dims: vec![geom.out_h(), geom.out_w(), geom.out_c],
            data: out,
        };
        Ok(self.push(
            value,
            Op::Conv {
                x,
                w,
                b,
                geom,
                cols,
            },
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let value = Tensor {
            dims: xv.dims.clone(),
            data: xv
                .data
                .iter()
                .map(|&v| if v > T::ZERO { v } else { T::ZERO })
                .collect(),
        };
        self.push(value, Op::Relu(x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.dims != bv.dims {
            return Err(Error::shape(
                format!("{:?}", av.dims),
                format!("{:?}", bv.dims),
            ));
        }
        let value = Tensor {
            dims: av.dims.clone(),
            data: av.data.iter().zip(&bv.data).map(|(&x, &y)| x + y).collect(),
        };
        Ok(self.push(value, Op::Add(a, b)))
    }

    /// Concatenate flattened inputs into a vector.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(&self.value(p).data);
        }
        self.push(Tensor::vector(data), Op::Concat(parts.to_vec()))
    }

    pub fn reshape(&mut self, x: Var, dims: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        if dims.iter().product::<usize>() != xv.len() {
            return Err(Error::shape(
                format!("{} values", xv.len()),
                format!("{dims:?}"),
            ));
        }
        let value = Tensor {
            dims: dims.to_vec(),
            data: xv.data.clone(),
        };
        Ok(self.push(value, Op::Reshape(x)))
    }

    pub fn squared_error(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.len() != t.len() {
            return Err(Error::shape(p.len(), t.len()));
        }
        let s: T = p
            .data
            .iter()
            .zip(&t.data)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        Ok(self.push(Tensor::scalar(s), Op::SquaredError { pred, target }))
    }

    pub fn sum_scalars(&mut self, xs: &[Var]) -> Var {
        let s: T = xs.iter().map(|&x| self.value(x).data[0]).sum();
        self.push(Tensor::scalar(s), Op::SumScalars(xs.to_vec()))
    }

    pub fn scale(&mut self, x: Var, k: T) -> Var {
        let xv = self.value(x);
        let value = Tensor {
            dims: xv.dims.clone(),
            data: xv.data.iter().map(|&v| v * k).collect(),
        };
        self.push(value, Op::Scale(x, k))
    }

    /// Backpropagate from a scalar node, adding parameter gradients into
    /// `param_grads` (same layout as the tape's `ParamSet`).
    pub fn backward(&self, root: Var, param_grads: &mut ParamSet<T>) -> Result<Gradients<T>> {
        if self.value(root).len() != 1 {
            return Err(Error::shape(
                "scalar root",
                format!("{:?}", self.value(root).dims),
            ));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor {
            dims: self.value(root).dims.clone(),
            data: vec![T::ONE],
        });

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Leaf { requires_grad } => {
                    // leaves keep their gradient for inspection
                    if *requires_grad {
                        grads[idx] = Some(g);
                    }
                }
                Op::Param(i) => param_grads.tensors[*i].add_assign(&g),
                Op::Dense { x, w, b, rows } => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let (k, m) = (wv.dims[0], wv.dims[1]);
                    let mut db = Tensor::zeros(&[m]);
                    for r in 0..*rows {
                        for j in 0..m {
                            db.data[j] += g.data[r * m + j];
                        }
                    }
                    let mut dw = Tensor::zeros(&wv.dims);
                    matmul_at_b_acc(&xv.data, &g.data, &mut dw.data, *rows, k, m);
                    if self.needs_grad(*x) {
                        let wt = transpose(&wv.data, k, m);
                        let mut dx = Tensor::zeros(&xv.dims);
                        matmul_acc(&g.data, &wt, &mut dx.data, *rows, m, k);
                        accumulate(&mut grads, *x, dx);
                    }
                    accumulate(&mut grads, *b, db);
                    accumulate(&mut grads, *w, dw);
                }
                Op::Conv {
                    x,
                    w,
                    b,
                    geom,
                    cols,
                } => {
                    let wv = self.value(*w);
                    let n = geom.out_h() * geom.out_w();
                    let (patch, oc) = (geom.patch(), geom.out_c);
                    let mut db = Tensor::zeros(&[oc]);
                    for r in 0..n {
                        for j in 0..oc {
                            db.data[j] += g.data[r * oc + j];
                        }
                    }
                    let mut dw = Tensor::zeros(&wv.dims);
                    matmul_at_b_acc(cols, &g.data, &mut dw.data, n, patch, oc);
                    accumulate(&mut grads, *b, db);
                    accumulate(&mut grads, *w, dw);
                    if self.needs_grad(*x) {
                        let wt = transpose(&wv.data, patch, oc);
                        let mut dcols = vec![T::ZERO; n * patch];
                        matmul_acc(&g.data, &wt, &mut dcols, n, oc, patch);
                        let mut dx = Tensor::zeros(&self.value(*x).dims);
                        geom.col2im(&dcols, &mut dx.data);
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::Relu(x) => {
                    let out = &self.nodes[idx].value;
                    let data = g
                        .data
                        .iter()
                        .zip(&out.data)
                        .map(|(&gv, &o)| if o > T::ZERO { gv } else { T::ZERO })
                        .collect();
                    accumulate(
                        &mut grads,
                        *x,
                        Tensor {
                            dims: g.dims.clone(),
                            data,
                        },
                    );
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let pv = self.value(p);
                        let n = pv.len();
                        let piece = Tensor {
                            dims: pv.dims.clone(),
                            data: g.data[off..off + n].to_vec(),
                        };
                        off += n;
                        accumulate(&mut grads, p, piece);
                    }
                }
                Op::Reshape(x) => {
                    let dims = self.value(*x).dims.clone();
                    accumulate(&mut grads, *x, Tensor { dims, data: g.data });
                }
                Op::SquaredError { pred, target } => {
                    let (p, t) = (self.value(*pred), self.value(*target));
                    let two = T::from_f64(2.0) * g.data[0];
                    let dp = Tensor {
                        dims: p.dims.clone(),
                        data: p
                            .data
                            .iter()
                            .zip(&t.data)
                            .map(|(&a, &b)| two * (a - b))
                            .collect(),
                    };
                    let dt = Tensor {
                        dims: t.dims.clone(),
                        data: dp.data.iter().map(|&v| -v).collect(),
                    };
                    accumulate(&mut grads, *pred, dp);
                    if self.needs_grad(*target) {
                        accumulate(&mut grads, *target, dt);
                    }
                }
                Op::SumScalars(xs) => {
                    for &x in xs {
                        accumulate(&mut grads, x, g.clone());
                    }
                }
                Op::Scale(x, k) => {
                    let data = g.data.iter().map(|&v| v * *k).collect();
                    accumulate(
                        &mut grads,
                        *x,
                        Tensor {
                            dims: g.dims.clone(),
                            data,
                        },
                    );
                }
            }
        }
        Ok(Gradients { nodes: grads })
    }

    fn needs_grad(&self, v: Var) -> bool {
        !matches!(
            self.nodes[v.0].op,
            Op::Leaf {
                requires_grad: false
            }
        )
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot => *slot = Some(g),
    }
}
