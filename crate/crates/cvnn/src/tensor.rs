use num_complex::Complex;

use crate::error::{NetError, Result};
use crate::scalar::Real;

/// Batch of complex feature maps in NHWC order.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor<T> {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<Complex<T>>,
}

impl<T: Real> ComplexTensor<T> {
    pub fn zeros(n: usize, h: usize, w: usize, c: usize) -> Self {
        ComplexTensor {
            n,
            h,
            w,
            c,
            data: vec![Complex::new(T::zero(), T::zero()); n * h * w * c],
        }
    }

    pub fn from_data(n: usize, h: usize, w: usize, c: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if data.len() != n * h * w * c {
            return Err(NetError::Shape(format!(
                "{} values for a {n}x{h}x{w}x{c} tensor",
                data.len()
            )));
        }
        Ok(ComplexTensor { n, h, w, c, data })
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.h, self.w, self.c]
    }

    /// Pixels (`n·h·w`) in the batch.
    pub fn pixels(&self) -> usize {
        self.n * self.h * self.w
    }

    #[inline]
    pub fn idx(&self, n: usize, y: usize, x: usize, c: usize) -> usize {
        ((n * self.h + y) * self.w + x) * self.c + c
    }

    pub fn at(&self, n: usize, y: usize, x: usize, c: usize) -> Complex<T> {
        self.data[self.idx(n, y, x, c)]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(NetError::Shape(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    pub fn map<F: Fn(Complex<T>) -> Complex<T>>(&self, f: F) -> Self {
        ComplexTensor {
            data: self.data.iter().map(|&z| f(z)).collect(),
            ..*self
        }
    }

    pub fn cast<U: Real>(&self) -> ComplexTensor<U> {
        ComplexTensor {
            n: self.n,
            h: self.h,
            w: self.w,
            c: self.c,
            data: self.data.iter().map(|z| cast(*z)).collect(),
        }
    }
}

pub fn cast<T: Real, U: Real>(z: Complex<T>) -> Complex<U> {
    Complex::new(U::c(z.re.to_f64().unwrap()), U::c(z.im.to_f64().unwrap()))
}

/// A learnable tensor together with its accumulated gradient.
///
/// Gradients use the real-pair convention `∂L/∂Re + j·∂L/∂Im`, so a plain
/// descent step on each component is `value -= lr * grad`.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<Complex<T>>,
    pub grad: Vec<Complex<T>>,
    /// Only the real part is a parameter; the imaginary part stays zero.
    pub real_only: bool,
}

impl<T: Real> Param<T> {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, value: Vec<Complex<T>>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), value.len());
        let grad = vec![Complex::new(T::zero(), T::zero()); value.len()];
        Param {
            name: name.into(),
            shape,
            value,
            grad,
            real_only: false,
        }
    }

    pub fn real(name: impl Into<String>, shape: Vec<usize>, value: Vec<T>) -> Self {
        let mut p = Self::new(
            name,
            shape,
            value.into_iter().map(|v| Complex::new(v, T::zero())).collect(),
        );
        p.real_only = true;
        p
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(Complex::new(T::zero(), T::zero()));
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    /// Real scalars this parameter contributes.
    pub fn real_count(&self) -> usize {
        if self.real_only {
            self.len()
        } else {
            2 * self.len()
        }
    }
}
