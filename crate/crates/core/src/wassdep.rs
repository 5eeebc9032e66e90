//! Wasserstein dependency estimation between two representations.
//!
//! A batch of aligned pairs `(z_y[i], z_s[i])` is a sample of the joint
//! distribution; re-pairing each `z_y[i]` with `z_s[perm[i]]` gives a sample
//! of the product of marginals. A critic network scores concatenated pairs
//! and its objective is the mean score on joint rows minus the mean score on
//! product rows. With the critic's Lipschitz constant bounded (by weight
//! clamping), the maximized objective estimates the Wasserstein-1 distance
//! between the two distributions.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::neural::{Gradients, Mlp, OptimizerSpec, OptimizerState};
use crate::scalar::Scalar;

/// Joint and product-of-marginals batches built from one set of pairs.
#[derive(Debug, Clone)]
pub struct RepresentationBatch<T> {
    z_y: Matrix<T>,
    z_s: Matrix<T>,
    dependent: Matrix<T>,
    independent: Matrix<T>,
    permutation: Vec<usize>,
}

impl<T: Scalar> RepresentationBatch<T> {
    pub fn z_y(&self) -> &Matrix<T> {
        &self.z_y
    }

    pub fn z_s(&self) -> &Matrix<T> {
        &self.z_s
    }

    /// Row `i` is `[z_y[i] ‖ z_s[i]]`.
    pub fn dependent(&self) -> &Matrix<T> {
        &self.dependent
    }

    /// Row `i` is `[z_y[i] ‖ z_s[perm[i]]]`.
    pub fn independent(&self) -> &Matrix<T> {
        &self.independent
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn len(&self) -> usize {
        self.z_y.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Width of the critic input, `d_y + d_s`.
    pub fn pair_dim(&self) -> usize {
        self.dependent.cols()
    }

    /// The same pairs with the roles of the joint and product batches
    /// exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            dependent: self.independent.clone(),
            independent: self.dependent.clone(),
            ..self.clone()
        }
    }
}

/// Pairs `z_y` with `z_s` under a uniformly random permutation (or a
/// uniformly random derangement when `derangement` is set).
pub fn pair_batches<T: Scalar, R: Rng + ?Sized>(
    z_y: &Matrix<T>,
    z_s: &Matrix<T>,
    rng: &mut R,
    derangement: bool,
) -> Result<RepresentationBatch<T>> {
    check_rows(z_y, z_s)?;
    let perm = random_permutation(z_y.rows(), rng, derangement);
    pair_with_permutation(z_y, z_s, perm)
}

/// Uniform permutation of `0..n`, or uniform derangement when requested
/// (`n >= 2`).
pub fn random_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R, derangement: bool) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        perm.shuffle(rng);
        // rejection sampling; a uniform permutation is a derangement with
        // probability ~1/e
        if !derangement || n < 2 || perm.iter().enumerate().all(|(i, &p)| i != p) {
            return perm;
        }
    }
}

/// Pairs `z_y` with `z_s` under an explicit permutation.
pub fn pair_with_permutation<T: Scalar>(
    z_y: &Matrix<T>,
    z_s: &Matrix<T>,
    permutation: Vec<usize>,
) -> Result<RepresentationBatch<T>> {
    check_rows(z_y, z_s)?;
    let n = z_y.rows();
    let mut seen = vec![false; n];
    if permutation.len() != n
        || permutation
            .iter()
            .any(|&p| p >= n || std::mem::replace(&mut seen[p], true))
    {
        return Err(Error::shape(format!(
            "{permutation:?} is not a permutation of 0..{n}"
        )));
    }
    let dependent = z_y.hconcat(z_s)?;
    let independent = z_y.hconcat(&z_s.select_rows(&permutation))?;
    Ok(RepresentationBatch {
        z_y: z_y.clone(),
        z_s: z_s.clone(),
        dependent,
        independent,
        permutation,
    })
}

fn check_rows<T: Scalar>(z_y: &Matrix<T>, z_s: &Matrix<T>) -> Result<()> {
    if z_y.rows() != z_s.rows() {
        return Err(Error::shape(format!(
            "z_y has {} rows but z_s has {}",
            z_y.rows(),
            z_s.rows()
        )));
    }
    if z_y.rows() < 2 {
        return Err(Error::shape(format!(
            "pairing needs at least 2 rows, got {}",
            z_y.rows()
        )));
    }
    Ok(())
}

fn check_critic<T: Scalar>(critic: &Mlp<T>, batch: &RepresentationBatch<T>) -> Result<()> {
    if critic.output_dim() != 1 {
        return Err(Error::config(format!(
            "critic must have a single output unit, has {}",
            critic.output_dim()
        )));
    }
    if critic.input_dim() != batch.pair_dim() {
        return Err(Error::config(format!(
            "critic expects inputs of width {}, pairs have width {}",
            critic.input_dim(),
            batch.pair_dim()
        )));
    }
    Ok(())
}

fn mean_column<T: Scalar>(m: &Matrix<T>) -> T {
    let mut s = T::zero();
    for &v in m.as_slice() {
        s += v;
    }
    s / T::of(m.rows() as f64)
}

fn constant_column<T: Scalar>(rows: usize, value: T) -> Matrix<T> {
    Matrix::from_vec(rows, 1, vec![value; rows]).expect("rows x 1")
}

/// Critic objective `mean C(Z_dep) − mean C(Z_ind)`.
pub fn critic_value<T: Scalar>(critic: &Mlp<T>, batch: &RepresentationBatch<T>) -> Result<T> {
    check_critic(critic, batch)?;
    let dep = critic.predict(&batch.dependent)?;
    let ind = critic.predict(&batch.independent)?;
    Ok(mean_column(&dep) - mean_column(&ind))
}

/// Critic objective and its gradient with respect to the critic parameters.
/// The caller ascends this gradient.
pub fn critic_objective<T: Scalar>(
    critic: &Mlp<T>,
    batch: &RepresentationBatch<T>,
) -> Result<(T, Gradients<T>)> {
    check_critic(critic, batch)?;
    let n = batch.len();
    let w = T::one() / T::of(n as f64);
    let dep = critic.forward(&batch.dependent)?;
    let ind = critic.forward(&batch.independent)?;
    let value = mean_column(dep.logits()) - mean_column(ind.logits());
    let mut grads = critic.backward(&dep, &constant_column(n, w))?;
    let ind_grads = critic.backward(&ind, &constant_column(n, -w))?;
    grads.add_scaled(T::one(), &ind_grads)?;
    Ok((value, grads))
}

/// Critic objective and its gradient with respect to every `z_y` row, with
/// the critic and `z_s` held fixed. Row `i` of `z_y` appears in row `i` of
/// both the joint and the product batch, so both contributions are summed.
pub fn regularizer_grads<T: Scalar>(
    critic: &Mlp<T>,
    batch: &RepresentationBatch<T>,
) -> Result<(T, Matrix<T>)> {
    check_critic(critic, batch)?;
    let n = batch.len();
    let d_y = batch.z_y.cols();
    let w = T::one() / T::of(n as f64);
    let dep = critic.forward(&batch.dependent)?;
    let ind = critic.forward(&batch.independent)?;
    let value = mean_column(dep.logits()) - mean_column(ind.logits());
    let g_dep = critic
        .backward_full(&dep, &constant_column(n, w), None, true)?
        .input
        .expect("input gradient requested");
    let g_ind = critic
        .backward_full(&ind, &constant_column(n, -w), None, true)?
        .input
        .expect("input gradient requested");
    let mut grad = g_dep.column_range(0, d_y);
    grad.add_scaled(T::one(), &g_ind.column_range(0, d_y))?;
    Ok((value, grad))
}

/// Averaged critic objective over several freshly paired batches.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticEstimate {
    pub value: f64,
    pub n_batches_averaged: usize,
    pub per_batch: Vec<f64>,
}

impl CriticEstimate {
    /// Standard error of the batch mean.
    pub fn standard_error(&self) -> f64 {
        let n = self.per_batch.len() as f64;
        if n < 2.0 {
            return 0.0;
        }
        let var = self
            .per_batch
            .iter()
            .map(|v| (v - self.value).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        (var / n).sqrt()
    }
}

/// Averages the critic objective over `n_batches` batches drawn from
/// `next_batch`.
pub fn estimate_dependency<T, F>(critic: &Mlp<T>, mut next_batch: F, n_batches: usize) -> Result<CriticEstimate>
where
    T: Scalar,
    F: FnMut() -> Result<RepresentationBatch<T>>,
{
    if n_batches < 1 {
        return Err(Error::config("dependency estimate needs at least one batch"));
    }
    let per_batch = (0..n_batches)
        .map(|_| Ok(critic_value(critic, &next_batch()?)?.as_f64()))
        .collect::<Result<Vec<f64>>>()?;
    let value = per_batch.iter().sum::<f64>() / n_batches as f64;
    Ok(CriticEstimate {
        value,
        n_batches_averaged: n_batches,
        per_batch,
    })
}

/// Trains `critic` by ascending the objective on `steps` batches from
/// `next_batch`, clamping after every update. Returns the objective of each
/// batch before its update.
pub fn fit_critic<T, F>(
    critic: &mut Mlp<T>,
    optimizer: OptimizerSpec,
    clamp: f64,
    clamp_biases: bool,
    steps: usize,
    mut next_batch: F,
) -> Result<Vec<f64>>
where
    T: Scalar,
    F: FnMut() -> Result<RepresentationBatch<T>>,
{
    let mut opt = OptimizerState::new(optimizer, critic)?;
    critic.clamp(clamp, clamp_biases)?;
    let mut values = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (value, mut grads) = critic_objective(critic, &next_batch()?)?;
        grads.scale(-T::one());
        opt.step(critic, &grads)?;
        critic.clamp(clamp, clamp_biases)?;
        values.push(value.as_f64());
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Activation;
    use crate::rng;

    fn mats() -> (Matrix<f64>, Matrix<f64>) {
        let z_y = Matrix::from_f64_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let z_s = Matrix::from_f64_rows(&[&[10.0], &[20.0]]).unwrap();
        (z_y, z_s)
    }

    #[test]
    fn identity_permutation_reproduces_joint_batch() {
        let (z_y, z_s) = mats();
        let b = pair_with_permutation(&z_y, &z_s, vec![0, 1]).unwrap();
        assert_eq!(b.dependent(), b.independent());
    }

    #[test]
    fn swap_permutation_crosses_pairs() {
        let (z_y, z_s) = mats();
        let b = pair_with_permutation(&z_y, &z_s, vec![1, 0]).unwrap();
        assert_eq!(b.independent().row(0), &[1.0, 2.0, 20.0]);
        assert_eq!(b.independent().row(1), &[3.0, 4.0, 10.0]);
        assert_eq!(b.dependent().row(0), &[1.0, 2.0, 10.0]);
    }

    #[test]
    fn pairing_validates_inputs() {
        let (z_y, _) = mats();
        let z_s = Matrix::<f64>::zeros(3, 1);
        assert!(matches!(pair_with_permutation(&z_y, &z_s, vec![0, 1]), Err(Error::Shape(_))));
        let (z_y, z_s) = mats();
        assert!(pair_with_permutation(&z_y, &z_s, vec![0, 0]).is_err());
        let one = Matrix::<f64>::zeros(1, 1);
        assert!(pair_batches(&one, &one, &mut rng::seeded(0), false).is_err());
    }

    #[test]
    fn derangement_has_no_fixed_points() {
        let z = Matrix::<f64>::zeros(5, 1);
        let mut r = rng::seeded(3);
        for _ in 0..50 {
            let b = pair_batches(&z, &z, &mut r, true).unwrap();
            assert!(b.permutation().iter().enumerate().all(|(i, &p)| i != p));
        }
    }

    #[test]
    fn zero_critic_has_zero_value() {
        let (z_y, z_s) = mats();
        let b = pair_with_permutation(&z_y, &z_s, vec![1, 0]).unwrap();
        let critic = Mlp::<f64>::zeros(&[3, 4, 1], Activation::Relu).unwrap();
        let (v, g) = critic_objective(&critic, &b).unwrap();
        assert_eq!(v, 0.0);
        // output bias receives +1/n from each joint row and -1/n from each product row
        assert_eq!(g.biases[1][0], 0.0);
        let (_, gz) = regularizer_grads(&critic, &b).unwrap();
        assert_eq!(gz.max_abs(), 0.0);
    }

    #[test]
    fn critic_must_have_scalar_output() {
        let (z_y, z_s) = mats();
        let b = pair_with_permutation(&z_y, &z_s, vec![1, 0]).unwrap();
        let critic = Mlp::<f64>::zeros(&[3, 2], Activation::Relu).unwrap();
        assert!(matches!(critic_objective(&critic, &b), Err(Error::Config(_))));
        let narrow = Mlp::<f64>::zeros(&[2, 1], Activation::Relu).unwrap();
        assert!(matches!(critic_value(&narrow, &b), Err(Error::Config(_))));
    }

    #[test]
    fn linear_critic_regularizer_gradient_cancels() {
        let (z_y, z_s) = mats();
        let b = pair_with_permutation(&z_y, &z_s, vec![1, 0]).unwrap();
        let critic = Mlp::from_parts(
            vec![Matrix::from_f64_rows(&[&[0.3, -0.7, 1.1]]).unwrap()],
            vec![vec![0.25]],
            Activation::Identity,
        )
        .unwrap();
        let (_, g) = regularizer_grads(&critic, &b).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn estimate_requires_a_batch() {
        let critic = Mlp::<f64>::zeros(&[3, 1], Activation::Relu).unwrap();
        let (z_y, z_s) = mats();
        let next = || pair_with_permutation(&z_y, &z_s, vec![1, 0]);
        assert!(matches!(estimate_dependency(&critic, next, 0), Err(Error::Config(_))));
        let est = estimate_dependency(&critic, next, 4).unwrap();
        assert_eq!(est.value, 0.0);
        assert_eq!(est.n_batches_averaged, 4);
    }
}
