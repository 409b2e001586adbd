use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::error::{Error, Result};

/// Floating-point element type. `f32` for training, `f64` for gradient checks.
pub trait Scalar:
    Copy
    + Default
    + PartialOrd
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn sqrt(self) -> Self;
    fn is_finite(self) -> bool;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            #[inline]
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
        }
    };
}
impl_scalar!(f32);
impl_scalar!(f64);

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub dims: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(dims: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::shape(
                format!("{n} values for dims {dims:?}"),
                data.len(),
            ));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self {
            dims: dims.to_vec(),
            data: vec![T::ZERO; dims.iter().product()],
        }
    }

    pub fn vector(data: Vec<T>) -> Self {
        Self {
            dims: vec![data.len()],
            data,
        }
    }

    pub fn scalar(v: T) -> Self {
        Self {
            dims: vec![],
            data: vec![v],
        }
    }

    pub fn from_f64(dims: &[usize], data: &[f64]) -> Result<Self> {
        Self::new(
            dims.to_vec(),
            data.iter().map(|&v| T::from_f64(v)).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.to_f64()).collect()
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|v| *v = T::ZERO);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `out[n×m] += a[n×k] · b[k×m]`
pub fn matmul_acc<T: Scalar>(a: &[T], b: &[T], out: &mut [T], n: usize, k: usize, m: usize) {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), k * m);
    debug_assert_eq!(out.len(), n * m);
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        let ai = &a[i * k..(i + 1) * k];
        for (p, &av) in ai.iter().enumerate() {
            if av == T::ZERO {
                continue;
            }
            let bp = &b[p * m..(p + 1) * m];
            for (o, &bv) in row.iter_mut().zip(bp) {
                *o += av * bv;
            }
        }
    }
}

/// `out[k×m] += aᵀ · b` with `a[n×k]`, `b[n×m]`.
pub fn matmul_at_b_acc<T: Scalar>(a: &[T], b: &[T], out: &mut [T], n: usize, k: usize, m: usize) {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), n * m);
    debug_assert_eq!(out.len(), k * m);
    for i in 0..n {
        let ai = &a[i * k..(i + 1) * k];
        let bi = &b[i * m..(i + 1) * m];
        for (p, &av) in ai.iter().enumerate() {
            if av == T::ZERO {
                continue;
            }
            let row = &mut out[p * m..(p + 1) * m];
            for (o, &bv) in row.iter_mut().zip(bi) {
                *o += av * bv;
            }
        }
    }
}

/// Transpose a `rows×cols` matrix.
pub fn transpose<T: Scalar>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::ZERO; a.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

/// Geometry of a 3×3 convolution over an HWC tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub out_c: usize,
    pub stride: usize,
    pub pad: usize,
}

pub const KERNEL: usize = 3;

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.pad - KERNEL) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.pad - KERNEL) / self.stride + 1
    }

    pub fn patch(&self) -> usize {
        KERNEL * KERNEL * self.in_c
    }

    /// `[out_h·out_w, 9·in_c]` patch matrix, zero padded.
    pub fn im2col<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let (oh, ow, patch, c) = (self.out_h(), self.out_w(), self.patch(), self.in_c);
        let mut cols = vec![T::ZERO; oh * ow * patch];
        for oy in 0..oh {
            for ox in 0..ow {
                let base = (oy * ow + ox) * patch;
                for ky in 0..KERNEL {
                    let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                    if iy < 0 || iy >= self.in_h as isize {
                        continue;
                    }
                    for kx in 0..KERNEL {
                        let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                        if ix < 0 || ix >= self.in_w as isize {
                            continue;
                        }
                        let src = (iy as usize * self.in_w + ix as usize) * c;
                        let dst = base + (ky * KERNEL + kx) * c;
                        cols[dst..dst + c].copy_from_slice(&x[src..src + c]);
                    }
                }
            }
        }
        cols
    }

    /// Scatter-add a patch-matrix gradient back onto the input.
    pub fn col2im<T: Scalar>(&self, dcols: &[T], dx: &mut [T]) {
        let (oh, ow, patch, c) = (self.out_h(), self.out_w(), self.patch(), self.in_c);
        for oy in 0..oh {
            for ox in 0..ow {
                let base = (oy * ow + ox) * patch;
                for ky in 0..KERNEL {
                    let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                    if iy < 0 || iy >= self.in_h as isize {
                        continue;
                    }
                    for kx in 0..KERNEL {
                        let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                        if ix < 0 || ix >= self.in_w as isize {
                            continue;
                        }
                        let dst = (iy as usize * self.in_w + ix as usize) * c;
                        let src = base + (ky * KERNEL + kx) * c;
                        for i in 0..c {
                            dx[dst + i] += dcols[src + i];
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0]; // 3x2
        let mut out = [0.0; 4];
        matmul_acc(&a, &b, &mut out, 2, 3, 2);
        assert_eq!(out, [4.0, 5.0, 10.0, 11.0]);
        let mut at = [0.0; 6];
        // aᵀ(3x2) · out(2x2) with a viewed as 2x3
        matmul_at_b_acc(&a, &out, &mut at, 2, 3, 2);
        assert_eq!(at, [44.0, 49.0, 58.0, 65.0, 72.0, 81.0]);
        assert_eq!(transpose(&a, 2, 3), vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    }

    #[test]
    fn conv_geometry() {
        let g = ConvGeom {
            in_h: 64,
            in_w: 64,
            in_c: 3,
            out_c: 8,
            stride: 2,
            pad: 1,
        };
        assert_eq!((g.out_h(), g.out_w(), g.patch()), (32, 32, 27));
    }

    #[test]
    fn im2col_col2im_adjoint() {
        // <im2col(x), y> == <x, col2im(y)>
        let g = ConvGeom {
            in_h: 5,
            in_w: 4,
            in_c: 2,
            out_c: 1,
            stride: 2,
            pad: 1,
        };
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let n = g.out_h() * g.out_w() * g.patch();
        let y: Vec<f64> = (0..n).map(|i| (i as f64 * 0.11).cos()).collect();
        let cols = g.im2col(&x);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut dx = vec![0.0; 40];
        g.col2im(&y, &mut dx);
        let rhs: f64 = x.iter().zip(&dx).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
