use std::fmt;
use std::str::FromStr;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::matrix::{matmul, matmul_nt, matmul_tn, Matrix};
use crate::rng;
use crate::scalar::Scalar;

/// Nonlinearity applied to every hidden layer. The output layer is always
/// affine (logits).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(T::zero()),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the cached pre- and post-activation.
    #[inline]
    fn derivative<T: Scalar>(self, pre: T, post: T) -> T {
        match self {
            Activation::Tanh => T::one() - post * post,
            Activation::Relu => {
                if pre > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Identity => T::one(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::config(format!("unknown activation `{other}`"))),
        }
    }
}

/// Parameters of a fully connected feed-forward network.
///
/// Layer `k` maps `layer_sizes[k]` inputs to `layer_sizes[k + 1]` outputs;
/// its weight matrix is stored as (outputs × inputs).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    layer_sizes: Vec<usize>,
    weights: Vec<Matrix<T>>,
    biases: Vec<Vec<T>>,
    activation: Activation,
}

/// Cached intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    pub input: Matrix<T>,
    /// Affine outputs, one per layer.
    pub pre_activations: Vec<Matrix<T>>,
    /// Post-activation outputs, one per layer; the last entry is the logits.
    pub activations: Vec<Matrix<T>>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn logits(&self) -> &Matrix<T> {
        self.activations.last().expect("trace has at least one layer")
    }

    pub fn into_logits(mut self) -> Matrix<T> {
        self.activations.pop().expect("trace has at least one layer")
    }

    pub fn layer_count(&self) -> usize {
        self.activations.len()
    }

    /// Output of hidden layer `k` (0-based).
    pub fn hidden(&self, k: usize) -> Option<&Matrix<T>> {
        if k + 1 < self.activations.len() {
            self.activations.get(k)
        } else {
            None
        }
    }
}

/// Gradients (or any per-parameter quantity) laid out like an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub weights: Vec<Matrix<T>>,
    pub biases: Vec<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(mlp: &Mlp<T>) -> Self {
        Self {
            weights: mlp
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: mlp.biases.iter().map(|b| vec![T::zero(); b.len()]).collect(),
        }
    }

    /// Weight and bias slices in storage order (W0, b0, W1, b1, ...).
    pub fn tensors(&self) -> impl Iterator<Item = &[T]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [T]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w.as_mut_slice(), b.as_mut_slice()])
    }

    pub fn to_flat(&self) -> Vec<T> {
        self.tensors().flatten().copied().collect()
    }

    pub fn scale(&mut self, k: T) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= k);
        }
    }

    /// `self += k * other`
    pub fn add_scaled(&mut self, k: T, other: &Self) -> Result<()> {
        if self.layout() != other.layout() {
            return Err(Error::shape("gradient layouts differ"));
        }
        for (a, b) in self.tensors_mut().zip(other.tensors()) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += k * y;
            }
        }
        Ok(())
    }

    pub fn max_abs(&self) -> T {
        self.tensors()
            .flatten()
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub(crate) fn layout(&self) -> Vec<usize> {
        self.tensors().map(|t| t.len()).collect()
    }
}

/// Gradients returned by [`Mlp::backward_full`].
#[derive(Debug, Clone)]
pub struct Backprop<T> {
    pub params: Gradients<T>,
    /// Gradient with respect to the network input, when requested.
    pub input: Option<Matrix<T>>,
}

impl<T: Scalar> Mlp<T> {
    /// Glorot-uniform weights, zero biases, deterministic in `seed`.
    pub fn new(layer_sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        let mut rng = rng::seeded(seed);
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = init_limit(fan_in, fan_out);
            let data = (0..fan_in * fan_out)
                .map(|_| T::of(rng.random_range(-limit..limit)))
                .collect();
            weights.push(Matrix::from_vec(fan_out, fan_in, data)?);
            biases.push(vec![T::zero(); fan_out]);
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            activation,
        })
    }

    /// Network with every weight and bias equal to zero.
    pub fn zeros(layer_sizes: &[usize], activation: Activation) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights: layer_sizes
                .windows(2)
                .map(|p| Matrix::zeros(p[1], p[0]))
                .collect(),
            biases: layer_sizes[1..].iter().map(|&n| vec![T::zero(); n]).collect(),
            activation,
        })
    }

    /// Assembles a network from explicit parameters, checking that shapes chain.
    pub fn from_parts(
        weights: Vec<Matrix<T>>,
        biases: Vec<Vec<T>>,
        activation: Activation,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::shape(format!(
                "{} weight matrices with {} bias vectors",
                weights.len(),
                biases.len()
            )));
        }
        let mut layer_sizes = vec![weights[0].cols()];
        for (k, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.cols() != *layer_sizes.last().unwrap() || w.rows() != b.len() {
                return Err(Error::shape(format!(
                    "layer {k}: weight {:?} and bias {} do not chain",
                    w.shape(),
                    b.len()
                )));
            }
            layer_sizes.push(w.rows());
        }
        validate_sizes(&layer_sizes)?;
        Ok(Self {
            layer_sizes,
            weights,
            biases,
            activation,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub fn hidden_count(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn weights(&self) -> &[Matrix<T>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<T>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix<T>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<T>] {
        &mut self.biases
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().map(|t| t.len()).sum()
    }

    /// Weight and bias slices in storage order (W0, b0, W1, b1, ...).
    pub fn tensors(&self) -> impl Iterator<Item = &[T]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [T]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w.as_mut_slice(), b.as_mut_slice()])
    }

    pub fn to_flat(&self) -> Vec<T> {
        self.tensors().flatten().copied().collect()
    }

    pub fn set_flat(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.parameter_count() {
            return Err(Error::shape(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                values.len()
            )));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&values[offset..offset + t.len()]);
            offset += t.len();
        }
        Ok(())
    }

    pub fn max_abs(&self) -> T {
        self.tensors()
            .flatten()
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().flatten().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Mlp<U> {
        Mlp {
            layer_sizes: self.layer_sizes.clone(),
            weights: self.weights.iter().map(Matrix::cast).collect(),
            biases: self
                .biases
                .iter()
                .map(|b| b.iter().map(|v| U::of(v.as_f64())).collect())
                .collect(),
            activation: self.activation,
        }
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<ForwardTrace<T>> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "input has {} columns, network expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        let last = self.layer_count() - 1;
        let mut pre_activations = Vec::with_capacity(self.layer_count());
        let mut activations: Vec<Matrix<T>> = Vec::with_capacity(self.layer_count());
        for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let input = if k == 0 { x } else { &activations[k - 1] };
            let mut z = matmul_nt(input, w)?;
            for i in 0..z.rows() {
                for (v, &bv) in z.row_mut(i).iter_mut().zip(b) {
                    *v += bv;
                }
            }
            let a = if k == last {
                z.clone()
            } else {
                let act = self.activation;
                z.map(|v| act.apply(v))
            };
            pre_activations.push(z);
            activations.push(a);
        }
        Ok(ForwardTrace {
            input: x.clone(),
            pre_activations,
            activations,
        })
    }

    /// Logits only.
    pub fn predict(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(self.forward(x)?.into_logits())
    }

    /// Gradients of a scalar loss with respect to all parameters, given the
    /// loss gradient at the logits.
    pub fn backward(&self, trace: &ForwardTrace<T>, grad_logits: &Matrix<T>) -> Result<Gradients<T>> {
        Ok(self.backward_full(trace, grad_logits, None, false)?.params)
    }

    /// Backpropagation with an optional extra gradient injected at the
    /// output of hidden layer `k`, and optionally the gradient with respect
    /// to the network input.
    pub fn backward_full(
        &self,
        trace: &ForwardTrace<T>,
        grad_logits: &Matrix<T>,
        injected: Option<(usize, &Matrix<T>)>,
        want_input_grad: bool,
    ) -> Result<Backprop<T>> {
        self.check_trace(trace)?;
        let n = trace.input.rows();
        if grad_logits.shape() != (n, self.output_dim()) {
            return Err(Error::shape(format!(
                "logit gradient {:?}, expected ({n}, {})",
                grad_logits.shape(),
                self.output_dim()
            )));
        }
        if let Some((k, g)) = injected {
            if k >= self.hidden_count() {
                return Err(Error::shape(format!(
                    "cannot inject at hidden layer {k} of a network with {} hidden layers",
                    self.hidden_count()
                )));
            }
            if g.shape() != (n, self.layer_sizes[k + 1]) {
                return Err(Error::shape(format!(
                    "injected gradient {:?}, expected ({n}, {})",
                    g.shape(),
                    self.layer_sizes[k + 1]
                )));
            }
        }

        let layers = self.layer_count();
        let mut grads = Gradients::zeros_like(self);
        let mut grad_post = grad_logits.clone();
        let mut input_grad = None;
        for l in (0..layers).rev() {
            let mut grad_pre = grad_post;
            if l + 1 != layers {
                let act = self.activation;
                let pre = trace.pre_activations[l].as_slice();
                let post = trace.activations[l].as_slice();
                for ((g, &p), &a) in grad_pre.as_mut_slice().iter_mut().zip(pre).zip(post) {
                    *g *= act.derivative(p, a);
                }
            }
            let layer_input = if l == 0 {
                &trace.input
            } else {
                &trace.activations[l - 1]
            };
            grads.weights[l] = matmul_tn(&grad_pre, layer_input)?;
            let bias = &mut grads.biases[l];
            for row in grad_pre.iter_rows() {
                for (b, &g) in bias.iter_mut().zip(row) {
                    *b += g;
                }
            }
            if l == 0 {
                if want_input_grad {
                    input_grad = Some(matmul(&grad_pre, &self.weights[0])?);
                }
                break;
            }
            grad_post = matmul(&grad_pre, &self.weights[l])?;
            if let Some((k, g)) = injected {
                if k == l - 1 {
                    grad_post.add_scaled(T::one(), g)?;
                }
            }
        }
        Ok(Backprop {
            params: grads,
            input: input_grad,
        })
    }

    /// Clips every weight (and bias, if `include_biases`) into `[-c, c]`.
    pub fn clamp(&mut self, c: f64, include_biases: bool) -> Result<()> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::config(format!("clamp value must be positive, got {c}")));
        }
        let hi = T::of(c);
        let lo = -hi;
        for w in &mut self.weights {
            w.map_inplace(|v| v.max(lo).min(hi));
        }
        if include_biases {
            for b in &mut self.biases {
                b.iter_mut().for_each(|v| *v = v.max(lo).min(hi));
            }
        }
        Ok(())
    }

    fn check_trace(&self, trace: &ForwardTrace<T>) -> Result<()> {
        if trace.layer_count() != self.layer_count() {
            return Err(Error::shape(format!(
                "trace has {} layers, network has {}",
                trace.layer_count(),
                self.layer_count()
            )));
        }
        for (k, a) in trace.activations.iter().enumerate() {
            if a.cols() != self.layer_sizes[k + 1] {
                return Err(Error::shape(format!(
                    "trace layer {k} has width {}, network has {}",
                    a.cols(),
                    self.layer_sizes[k + 1]
                )));
            }
        }
        if trace.input.cols() != self.input_dim() {
            return Err(Error::shape("trace input width differs from network"));
        }
        Ok(())
    }
}

/// Half-width of the Glorot-uniform interval.
pub fn init_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn validate_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::config(format!(
            "a network needs at least input and output sizes, got {layer_sizes:?}"
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::config(format!(
            "layer sizes must be positive, got {layer_sizes:?}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = Mlp::<f64>::new(&[4, 3, 2], Activation::Tanh, 7).unwrap();
        let b = Mlp::<f64>::new(&[4, 3, 2], Activation::Tanh, 7).unwrap();
        assert_eq!(a.to_flat(), b.to_flat());
        assert!(a.biases().iter().flatten().all(|&v| v == 0.0));
        let c = Mlp::<f64>::new(&[4, 3, 2], Activation::Tanh, 8).unwrap();
        assert_ne!(a.to_flat(), c.to_flat());
    }

    #[test]
    fn init_scale_matches_glorot_stddev() {
        let m = Mlp::<f64>::new(&[768, 300, 28], Activation::Tanh, 1).unwrap();
        for w in m.weights() {
            let n = w.as_slice().len() as f64;
            let mean = w.as_slice().iter().sum::<f64>() / n;
            let var = w.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            // uniform on [-l, l] has stddev l / sqrt(3)
            let expected = init_limit(w.cols(), w.rows()) / 3f64.sqrt();
            let ratio = var.sqrt() / expected;
            assert!((0.8..1.2).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn bad_sizes_are_config_errors() {
        assert!(matches!(
            Mlp::<f64>::new(&[4], Activation::Tanh, 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            Mlp::<f64>::new(&[4, 0, 2], Activation::Tanh, 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            Mlp::<f64>::new(&[], Activation::Relu, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn zero_network_gives_zero_logits() {
        let m = Mlp::<f64>::zeros(&[3, 5, 2], Activation::Tanh).unwrap();
        let x = Matrix::from_f64_rows(&[&[1.0, -2.0, 3.0], &[0.5, 0.5, 9.0]]).unwrap();
        let logits = m.predict(&x).unwrap();
        assert!(logits.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let m = Mlp::from_parts(
            vec![Matrix::<f64>::identity(2)],
            vec![vec![0.0, 0.0]],
            Activation::Identity,
        )
        .unwrap();
        let x = Matrix::from_f64_rows(&[&[3.0, -1.0]]).unwrap();
        assert_eq!(m.predict(&x).unwrap().as_slice(), &[3.0, -1.0]);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let m = Mlp::<f64>::new(&[3, 2], Activation::Tanh, 0).unwrap();
        let x = Matrix::zeros(2, 4);
        assert!(matches!(m.forward(&x), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let m = Mlp::<f64>::new(&[3, 4, 2], Activation::Tanh, 3).unwrap();
        let x = Matrix::from_f64_rows(&[&[1.0, 2.0, 3.0], &[-1.0, 0.0, 0.5]]).unwrap();
        let trace = m.forward(&x).unwrap();
        let g = m.backward(&trace, &Matrix::zeros(2, 2)).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn backward_rejects_foreign_trace() {
        let m = Mlp::<f64>::new(&[3, 4, 2], Activation::Tanh, 3).unwrap();
        let other = Mlp::<f64>::new(&[3, 2], Activation::Tanh, 3).unwrap();
        let x = Matrix::zeros(2, 3);
        let trace = other.forward(&x).unwrap();
        assert!(matches!(
            m.backward(&trace, &Matrix::zeros(2, 2)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn clamp_clips_and_is_idempotent() {
        let mut m = Mlp::<f64>::new(&[2, 2], Activation::Tanh, 0).unwrap();
        m.weights_mut()[0][(0, 0)] = 0.5;
        m.weights_mut()[0][(0, 1)] = 0.005;
        m.biases_mut()[0][1] = -3.0;
        m.clamp(0.01, true).unwrap();
        assert_eq!(m.weights()[0][(0, 0)], 0.01);
        assert_eq!(m.weights()[0][(0, 1)], 0.005);
        assert_eq!(m.biases()[0][1], -0.01);
        let once = m.clone();
        m.clamp(0.01, true).unwrap();
        assert_eq!(m, once);
        assert!(m.clamp(0.0, true).is_err());
        assert!(m.clamp(-1.0, true).is_err());
    }

    #[test]
    fn clamp_can_leave_biases_alone() {
        let mut m = Mlp::<f64>::new(&[2, 2], Activation::Tanh, 0).unwrap();
        m.biases_mut()[0][0] = 2.0;
        m.clamp(0.01, false).unwrap();
        assert_eq!(m.biases()[0][0], 2.0);
        assert!(m.weights()[0].max_abs() <= 0.01);
    }

    #[test]
    fn flat_round_trip() {
        let mut m = Mlp::<f64>::new(&[3, 4, 2], Activation::Relu, 5).unwrap();
        let mut flat = m.to_flat();
        flat[0] = 42.0;
        m.set_flat(&flat).unwrap();
        assert_eq!(m.weights()[0][(0, 0)], 42.0);
        assert!(m.set_flat(&flat[1..]).is_err());
    }
}
