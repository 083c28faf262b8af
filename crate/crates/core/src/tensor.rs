//! Dense rank-4 tensors in (batch, channel, row, column) layout.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_like::Element;

use crate::error::{Error, Result};

pub mod num_like {
    //! Scalar types a [`Tensor`](super::Tensor) can hold.

    use std::fmt::Debug;
    use std::iter::Sum;
    use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

    /// Floating-point element. `f32` is the working precision for training;
    /// `f64` is used for gradient checking and reference computations.
    pub trait Element:
        Copy
        + Debug
        + Default
        + PartialOrd
        + Send
        + Sync
        + Sum
        + Add<Output = Self>
        + Sub<Output = Self>
        + Mul<Output = Self>
        + Div<Output = Self>
        + Neg<Output = Self>
        + AddAssign
        + SubAssign
        + MulAssign
        + 'static
    {
        const ZERO: Self;
        const ONE: Self;
        /// NumPy dtype descriptor for checkpoints.
        const NPY_DESCR: &'static str;

        fn from_f64(v: f64) -> Self;
        fn to_f64(self) -> f64;
        fn exp(self) -> Self;
        fn ln(self) -> Self;
        fn sqrt(self) -> Self;
        fn is_finite(self) -> bool;

        /// `c = alpha * a * b + beta * c` for row/column-strided matrices.
        ///
        /// # Safety
        /// Pointers and strides must describe valid, non-overlapping
        /// `m x k`, `k x n` and `m x n` matrices.
        #[allow(clippy::too_many_arguments)]
        unsafe fn gemm(
            m: usize,
            k: usize,
            n: usize,
            alpha: Self,
            a: *const Self,
            rsa: isize,
            csa: isize,
            b: *const Self,
            rsb: isize,
            csb: isize,
            beta: Self,
            c: *mut Self,
            rsc: isize,
            csc: isize,
        );
    }

    macro_rules! impl_element {
        ($t:ty, $descr:expr, $gemm:path) => {
            impl Element for $t {
                const ZERO: Self = 0.0;
                const ONE: Self = 1.0;
                const NPY_DESCR: &'static str = $descr;

                #[inline]
                fn from_f64(v: f64) -> Self {
                    v as $t
                }
                #[inline]
                fn to_f64(self) -> f64 {
                    self as f64
                }
                #[inline]
                fn exp(self) -> Self {
                    <$t>::exp(self)
                }
                #[inline]
                fn ln(self) -> Self {
                    <$t>::ln(self)
                }
                #[inline]
                fn sqrt(self) -> Self {
                    <$t>::sqrt(self)
                }
                #[inline]
                fn is_finite(self) -> bool {
                    <$t>::is_finite(self)
                }

                #[inline]
                unsafe fn gemm(
                    m: usize,
                    k: usize,
                    n: usize,
                    alpha: Self,
                    a: *const Self,
                    rsa: isize,
                    csa: isize,
                    b: *const Self,
                    rsb: isize,
                    csb: isize,
                    beta: Self,
                    c: *mut Self,
                    rsc: isize,
                    csc: isize,
                ) {
                    $gemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
                }
            }
        };
    }

    impl_element!(f32, "<f4", matrixmultiply::sgemm);
    impl_element!(f64, "<f8", matrixmultiply::dgemm);
}

/// Tensor dimensions `(n, c, h, w)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape4 {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w }
    }

    pub const fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements in one spatial plane.
    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    /// Elements in one batch item.
    pub const fn item(&self) -> usize {
        self.c * self.h * self.w
    }

    pub const fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    #[inline]
    pub const fn offset(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.c + c) * self.h + y) * self.w + x
    }
}

impl fmt::Debug for Shape4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

impl fmt::Display for Shape4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl From<[usize; 4]> for Shape4 {
    fn from([n, c, h, w]: [usize; 4]) -> Self {
        Self { n, c, h, w }
    }
}

/// Dense row-major tensor, `w` varying fastest.
#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Shape4,
    data: Vec<T>,
}

impl<T: Element> Tensor<T> {
    pub fn zeros(shape: impl Into<Shape4>) -> Self {
        Self::full(shape, T::ZERO)
    }

    pub fn full(shape: impl Into<Shape4>, value: T) -> Self {
        let shape = shape.into();
        assert!(
            shape.dims().iter().all(|&d| d >= 1),
            "tensor dims must be >= 1, got {shape}"
        );
        Self {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_vec(shape: impl Into<Shape4>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        if shape.dims().contains(&0) {
            return Err(Error::contract(format!("tensor dims must be >= 1, got {shape}")));
        }
        if data.len() != shape.len() {
            return Err(Error::contract(format!(
                "shape {shape} needs {} elements, got {}",
                shape.len(),
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    /// A `1x1x1x1` tensor.
    pub fn scalar(value: T) -> Self {
        Self::full([1, 1, 1, 1], value)
    }

    pub fn from_fn(shape: impl Into<Shape4>, mut f: impl FnMut([usize; 4]) -> T) -> Self {
        let shape = shape.into();
        let mut data = Vec::with_capacity(shape.len());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for y in 0..shape.h {
                    for x in 0..shape.w {
                        data.push(f([n, c, y, x]));
                    }
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape4 {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, idx: [usize; 4]) -> T {
        self.data[self.shape.offset(idx[0], idx[1], idx[2], idx[3])]
    }

    /// Same data under a new shape with equal element count.
    pub fn reshape(self, shape: impl Into<Shape4>) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Tensor<T>) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Batch items `[start, start + count)` as a new tensor.
    pub fn batch_range(&self, start: usize, count: usize) -> Tensor<T> {
        let item = self.shape.item();
        let data = self.data[start * item..(start + count) * item].to_vec();
        Tensor {
            shape: Shape4::new(count, self.shape.c, self.shape.h, self.shape.w),
            data,
        }
    }

    /// Stacks equally shaped tensors along the batch axis.
    pub fn stack_batch(items: &[Tensor<T>]) -> Result<Tensor<T>> {
        let first = items
            .first()
            .ok_or_else(|| Error::contract("stack_batch needs at least one tensor"))?;
        let s = first.shape;
        let mut data = Vec::with_capacity(s.len() * items.len());
        let mut n = 0;
        for t in items {
            if (t.shape.c, t.shape.h, t.shape.w) != (s.c, s.h, s.w) {
                return Err(Error::contract(format!(
                    "stack_batch: {} does not match {}",
                    t.shape, s
                )));
            }
            n += t.shape.n;
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor {
            shape: Shape4::new(n, s.c, s.h, s.w),
            data,
        })
    }
}

impl<T> Index<[usize; 4]> for Tensor<T> {
    type Output = T;

    fn index(&self, idx: [usize; 4]) -> &T {
        &self.data[self.shape.offset(idx[0], idx[1], idx[2], idx[3])]
    }
}

impl<T> IndexMut<[usize; 4]> for Tensor<T> {
    fn index_mut(&mut self, idx: [usize; 4]) -> &mut T {
        let off = self.shape.offset(idx[0], idx[1], idx[2], idx[3]);
        &mut self.data[off]
    }
}

impl<T: fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "Tensor<{}>[", self.shape)?;
        for (i, v) in self.data.iter().take(SHOWN).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v:?}")?;
        }
        if self.data.len() > SHOWN {
            write!(f, ", ...")?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_major_layout() {
        let t = Tensor::<f32>::from_fn([2, 3, 4, 5], |[n, c, y, x]| (n * 1000 + c * 100 + y * 10 + x) as f32);
        assert_eq!(t.data()[0], 0.0);
        assert_eq!(t.data()[1], 1.0);
        assert_eq!(t.data()[5], 10.0);
        assert_eq!(t.data()[20], 100.0);
        assert_eq!(t.data()[60], 1000.0);
        assert_eq!(t[[1, 2, 3, 4]], 1234.0);
    }

    #[test]
    fn from_vec_rejects_bad_lengths_and_zero_dims() {
        assert!(Tensor::<f64>::from_vec([1, 1, 2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::<f64>::from_vec([1, 0, 2, 2], vec![]).is_err());
    }

    #[test]
    fn stack_and_split_batch() {
        let a = Tensor::<f64>::full([1, 2, 2, 2], 1.0);
        let b = Tensor::<f64>::full([2, 2, 2, 2], 2.0);
        let s = Tensor::stack_batch(&[a.clone(), b]).unwrap();
        assert_eq!(s.shape(), Shape4::new(3, 2, 2, 2));
        assert_eq!(s.batch_range(0, 1), a);
        assert!(s.batch_range(1, 2).data().iter().all(|&v| v == 2.0));
    }
}
