//! Central finite differences, the reference every analytic gradient is checked against.

use super::{Element, Result, Tensor};

/// `(f(x + eps e_i) - f(x - eps e_i)) / (2 eps)` for every element `i` of `x`.
///
/// `f` receives a fresh constant tensor with the perturbed values and must
/// return a scalar.
pub fn finite_difference_gradient<T: Element>(
    f: impl Fn(&Tensor<T>) -> Result<T>,
    x: &Tensor<T>,
    eps: f64,
) -> Result<Tensor<T>> {
    let base = x.to_vec();
    let eps_t = T::from_f64_lossy(eps);
    let two_eps = eps_t + eps_t;
    let mut grad = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] = plus[i] + eps_t;
        let mut minus = base.clone();
        minus[i] = minus[i] - eps_t;
        let fp = f(&Tensor::from_vec(x.shape(), plus)?)?;
        let fm = f(&Tensor::from_vec(x.shape(), minus)?)?;
        grad.push((fp - fm) / two_eps);
    }
    Tensor::from_vec(x.shape(), grad)
}

/// Largest elementwise relative error `|a - b| / max(|a|, |b|, floor)`.
pub fn max_relative_error<T: Element>(analytic: &[T], numeric: &[T], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &b)| {
            let (a, b) = (
                a.to_f64().unwrap_or(f64::NAN),
                b.to_f64().unwrap_or(f64::NAN),
            );
            (a - b).abs() / a.abs().max(b.abs()).max(floor)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_of_sum_is_ones() {
        let x = Tensor::<f64>::from_vec(&[2, 2], vec![0.3, -1.0, 4.0, 2.5]).unwrap();
        let g = finite_difference_gradient(|t| t.sum().item(), &x, 1e-4).unwrap();
        for v in g.to_vec() {
            assert!((v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn gradient_of_square() {
        let x = Tensor::<f64>::from_vec(&[1], vec![3.0]).unwrap();
        let g = finite_difference_gradient(|t| Ok(t.data()[0] * t.data()[0]), &x, 1e-4).unwrap();
        assert!((g.to_vec()[0] - 6.0).abs() < 1e-6);
    }
}
