//! Scalar abstraction (f32 for training, f64 for gradient checks) and a complex
//! matrix product built from strided real GEMMs.

use std::fmt::Debug;
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

pub type C<T> = Complex<T>;

pub trait Real:
    Float + NumAssign + FromPrimitive + ToPrimitive + Default + Debug + Send + Sync + Sum + 'static
{
    const NAME: &'static str;

    /// `c ← α·a·b + β·c` with arbitrary (real-element) strides.
    ///
    /// # Safety
    /// Every index reachable through the shapes and strides must be in bounds
    /// of the respective allocation, and `c` must not alias `a` or `b`.
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

    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("representable constant")
    }
}

impl Real for f32 {
    const NAME: &'static str = "f32";

    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    const NAME: &'static str = "f64";

    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Read-only view of a complex matrix stored interleaved, strides in complex
/// elements. `conj` conjugates every entry on the fly.
#[derive(Clone, Copy)]
pub struct MatRef<'a, T> {
    pub data: &'a [C<T>],
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
    pub conj: bool,
}

impl<'a, T> MatRef<'a, T> {
    /// Row-major `rows × cols` matrix.
    pub fn new(data: &'a [C<T>], rows: usize, cols: usize) -> Self {
        MatRef {
            data,
            rows,
            cols,
            rs: cols,
            cs: 1,
            conj: false,
        }
    }

    pub fn t(self) -> Self {
        MatRef {
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
            ..self
        }
    }

    pub fn conj(self) -> Self {
        MatRef {
            conj: !self.conj,
            ..self
        }
    }

    fn check(&self) {
        if self.rows > 0 && self.cols > 0 {
            let last = (self.rows - 1) * self.rs + (self.cols - 1) * self.cs;
            assert!(last < self.data.len(), "matrix view out of bounds");
        }
    }
}

/// `c ← a·b + (accumulate ? c : 0)` for complex matrices, `c` row-major with
/// `c.len() == a.rows * b.cols`.
pub fn cgemm<T: Real>(a: MatRef<'_, T>, b: MatRef<'_, T>, c: &mut [C<T>], accumulate: bool) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    assert_eq!(c.len(), a.rows * b.cols, "output size");
    a.check();
    b.check();
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c.fill(C::new(T::zero(), T::zero()));
        }
        return;
    }
    // (Ar + j·sa·Ai)(Br + j·sb·Bi) = ArBr − sa·sb·AiBi + j(sb·ArBi + sa·AiBr)
    let sa = if a.conj { -T::one() } else { T::one() };
    let sb = if b.conj { -T::one() } else { T::one() };
    let beta0 = if accumulate { T::one() } else { T::zero() };
    let ap = a.data.as_ptr() as *const T;
    let bp = b.data.as_ptr() as *const T;
    let cp = c.as_mut_ptr() as *mut T;
    let (rsa, csa) = (2 * a.rs as isize, 2 * a.cs as isize);
    let (rsb, csb) = (2 * b.rs as isize, 2 * b.cs as isize);
    let (rsc, csc) = (2 * n as isize, 2);
    // SAFETY: views were bounds-checked above; Complex<T> is repr(C) {re, im},
    // so the imaginary plane starts one real element after the real plane.
    // `c` is a distinct &mut borrow, so it cannot alias `a` or `b`.
    unsafe {
        let (ar, ai) = (ap, ap.add(1));
        let (br, bi) = (bp, bp.add(1));
        let (cr, ci) = (cp, cp.add(1));
        T::gemm(m, k, n, T::one(), ar, rsa, csa, br, rsb, csb, beta0, cr, rsc, csc);
        T::gemm(m, k, n, -(sa * sb), ai, rsa, csa, bi, rsb, csb, T::one(), cr, rsc, csc);
        T::gemm(m, k, n, sb, ar, rsa, csa, bi, rsb, csb, beta0, ci, rsc, csc);
        T::gemm(m, k, n, sa, ai, rsa, csa, br, rsb, csb, T::one(), ci, rsc, csc);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[C<f64>], b: &[C<f64>], m: usize, k: usize, n: usize) -> Vec<C<f64>> {
        let mut out = vec![C::new(0.0, 0.0); m * n];
        for i in 0..m {
            for j in 0..n {
                for l in 0..k {
                    out[i * n + j] += a[i * k + l] * b[l * n + j];
                }
            }
        }
        out
    }

    fn sample(len: usize, seed: f64) -> Vec<C<f64>> {
        (0..len)
            .map(|i| C::new((i as f64 * 0.37 + seed).sin(), (i as f64 * 0.91 - seed).cos()))
            .collect()
    }

    #[test]
    fn matches_naive_product() {
        let (m, k, n) = (5, 7, 3);
        let a = sample(m * k, 0.1);
        let b = sample(k * n, 0.7);
        let mut c = vec![C::new(0.0, 0.0); m * n];
        cgemm(MatRef::new(&a, m, k), MatRef::new(&b, k, n), &mut c, false);
        for (x, y) in c.iter().zip(naive(&a, &b, m, k, n)) {
            assert!((x - y).norm() < 1e-13);
        }
    }

    #[test]
    fn transposed_and_conjugated_views() {
        let (m, k, n) = (4, 6, 5);
        let at = sample(k * m, 0.3); // stored k × m
        let b = sample(n * k, 1.1); // stored n × k
        let a: Vec<_> = (0..m * k).map(|i| at[(i % k) * m + i / k].conj()).collect();
        let bb: Vec<_> = (0..k * n).map(|i| b[(i % n) * k + i / n]).collect();
        let mut c = vec![C::new(1.0, 1.0); m * n];
        let view_a = MatRef::new(&at, k, m).t().conj();
        let view_b = MatRef::new(&b, n, k).t();
        cgemm(view_a, view_b, &mut c, true);
        for (x, y) in c.iter().zip(naive(&a, &bb, m, k, n)) {
            assert!((x - (y + C::new(1.0, 1.0))).norm() < 1e-13);
        }
    }

    #[test]
    fn single_precision_agrees() {
        let a = [C::new(1.0f32, 2.0), C::new(-0.5, 0.25)];
        let b = [C::new(0.0f32, 1.0), C::new(2.0, -1.0)];
        let mut c = [C::new(0.0f32, 0.0)];
        cgemm(MatRef::new(&a, 1, 2), MatRef::new(&b, 2, 1), &mut c, false);
        let want = a[0] * b[0] + a[1] * b[1];
        assert!((c[0] - want).norm() < 1e-6);
    }
}
