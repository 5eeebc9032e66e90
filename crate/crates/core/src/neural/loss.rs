use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Mean softmax cross-entropy over the batch and its gradient at the logits.
///
/// The gradient is `(softmax - onehot) / batch_size`. Each row is shifted
/// by its maximum before exponentiation.
pub fn cross_entropy<T: Scalar>(logits: &Matrix<T>, labels: &[usize]) -> Result<(T, Matrix<T>)> {
    let (n, k) = logits.shape();
    if labels.len() != n {
        return Err(Error::shape(format!(
            "{} labels for {n} rows of logits",
            labels.len()
        )));
    }
    if n == 0 {
        return Err(Error::data("cross-entropy of an empty batch"));
    }
    let inv_n = T::one() / T::of(n as f64);
    let mut grad = Matrix::zeros(n, k);
    let mut total = T::zero();
    for (i, (row, &label)) in logits.iter_rows().zip(labels).enumerate() {
        if label >= k {
            return Err(Error::data(format!(
                "label {label} at row {i} is outside [0, {k})"
            )));
        }
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let g = grad.row_mut(i);
        let mut sum = T::zero();
        for (gj, &v) in g.iter_mut().zip(row) {
            *gj = (v - max).exp();
            sum += *gj;
        }
        total += sum.ln() + max - row[label];
        for gj in g.iter_mut() {
            *gj = *gj / sum * inv_n;
        }
        g[label] -= inv_n;
    }
    Ok((total * inv_n, grad))
}
