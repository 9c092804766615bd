use crate::error::{NnError, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Mean squared error over every element (batch, channels and pixels) and
/// its gradient `2 (O - t) / N`. The loss is accumulated in `f64`.
pub fn mse_loss<T: Real>(output: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    if output.shape() != target.shape() {
        return Err(NnError::Shape(format!("output {:?} and target {:?} differ", output.shape(), target.shape())));
    }
    let n = output.len().max(1) as f64;
    let scale = T::lit(2.0 / n);
    let mut sse = 0.0f64;
    let grad = output
        .data()
        .iter()
        .zip(target.data())
        .map(|(&o, &t)| {
            let d = o - t;
            sse += d.as_f64() * d.as_f64();
            scale * d
        })
        .collect();
    Ok((sse / n, Tensor::new(output.shape().to_vec(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_tensors_have_zero_loss() {
        let t = Tensor::<f64>::from_f64(vec![2, 1, 2, 2], &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]).unwrap();
        let (loss, grad) = mse_loss(&t, &t).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn two_pixel_hand_value() {
        let o = Tensor::<f64>::from_f64(vec![1, 1, 2], &[1.0, 3.0]).unwrap();
        let t = Tensor::<f64>::from_f64(vec![1, 1, 2], &[0.0, 1.0]).unwrap();
        let (loss, grad) = mse_loss(&o, &t).unwrap();
        assert_eq!(loss, 2.5);
        assert_eq!(grad.data(), &[1.0, 2.0]);
    }

    #[test]
    fn quadratic_in_the_error() {
        let o = Tensor::<f64>::from_f64(vec![1, 3], &[0.3, -1.0, 2.0]).unwrap();
        let t = Tensor::<f64>::from_f64(vec![1, 3], &[0.0, 0.5, 1.0]).unwrap();
        let c = 3.0;
        let shifted: Vec<f64> = o.data().iter().zip(t.data()).map(|(a, b)| b + c * (a - b)).collect();
        let scaled = Tensor::<f64>::from_f64(vec![1, 3], &shifted).unwrap();
        let (l1, _) = mse_loss(&o, &t).unwrap();
        let (l2, _) = mse_loss(&scaled, &t).unwrap();
        assert!((l2 - c * c * l1).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let values = [0.3, -0.7, 1.1, 0.05, -0.2, 0.9];
        let target = Tensor::<f64>::from_f64(vec![2, 3], &[0.0, 0.1, -0.4, 0.6, 0.2, 1.0]).unwrap();
        let o = Tensor::<f64>::from_f64(vec![2, 3], &values).unwrap();
        let (_, grad) = mse_loss(&o, &target).unwrap();
        let h = 1e-6;
        for i in 0..values.len() {
            let mut plus = values;
            plus[i] += h;
            let mut minus = values;
            minus[i] -= h;
            let lp = mse_loss(&Tensor::from_f64(vec![2, 3], &plus).unwrap(), &target).unwrap().0;
            let lm = mse_loss(&Tensor::from_f64(vec![2, 3], &minus).unwrap(), &target).unwrap().0;
            assert!(((lp - lm) / (2.0 * h) - grad.data()[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = Tensor::<f32>::zeros(vec![1, 4]);
        let b = Tensor::<f32>::zeros(vec![1, 2, 2]);
        assert!(mse_loss(&a, &b).is_err());
    }
}
