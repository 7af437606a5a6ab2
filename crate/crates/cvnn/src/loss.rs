use rtf_core::FieldGrid;

use crate::error::{NetError, Result};
use crate::scalar::Real;
use crate::tensor::ComplexTensor;

/// `Σ |est − target|` together with its gradient `(est − target)/|est − target|`
/// (zero where the residual vanishes). The sum is accumulated in f64.
pub fn l1_loss<T: Real>(
    est: &ComplexTensor<T>,
    target: &ComplexTensor<T>,
) -> Result<(f64, ComplexTensor<T>)> {
    est.same_shape(target)?;
    let mut total = 0.0f64;
    let mut grad = ComplexTensor::zeros(est.n, est.h, est.w, est.c);
    for ((g, &e), &t) in grad.data.iter_mut().zip(&est.data).zip(&target.data) {
        let r = e - t;
        let norm = r.norm();
        total += norm.to_f64().unwrap();
        if norm > T::zero() {
            *g = r / norm;
        }
    }
    if !total.is_finite() {
        return Err(NetError::NonFinite("loss".into()));
    }
    Ok((total, grad))
}

/// Loss value only.
pub fn l1_value<T: Real>(est: &ComplexTensor<T>, target: &ComplexTensor<T>) -> Result<f64> {
    est.same_shape(target)?;
    Ok(est
        .data
        .iter()
        .zip(&target.data)
        .map(|(&e, &t)| (e - t).norm().to_f64().unwrap())
        .sum())
}

/// The same loss on two fields.
pub fn l1_complex_loss(estimate: &FieldGrid, target: &FieldGrid) -> Result<f64> {
    estimate.same_shape(target)?;
    Ok(estimate
        .data()
        .iter()
        .zip(target.data())
        .map(|(e, t)| (e - t).norm())
        .sum())
}


#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex;

    fn t(v: Vec<Complex<f64>>) -> ComplexTensor<f64> {
        let n = v.len();
        ComplexTensor::from_data(1, 1, n, 1, v).unwrap()
    }

    #[test]
    fn modulus_of_single_residual() {
        let (l, g) = l1_loss(&t(vec![Complex::new(3.0, 4.0)]), &t(vec![Complex::new(0.0, 0.0)])).unwrap();
        assert_eq!(l, 5.0);
        assert!((g.data[0] - Complex::new(0.6, 0.8)).norm() < 1e-15);
    }

    #[test]
    fn equal_inputs_give_zero_and_zero_gradient() {
        let a = t(vec![Complex::new(1.0, -2.0), Complex::new(0.5, 0.0)]);
        let (l, g) = l1_loss(&a, &a).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn shape_mismatch() {
        let a = t(vec![Complex::new(1.0, 0.0)]);
        let b = t(vec![Complex::new(1.0, 0.0); 2]);
        assert!(matches!(l1_loss(&a, &b), Err(NetError::Shape(_))));
    }
}
