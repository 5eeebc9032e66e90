//! Independent ground truth for tests and acceptance runs: exact optimal
//! transport on tiny instances, exact discrete mutual information, and a
//! central finite-difference gradient checker.
//!
//! Nothing here shares code with the training path. The transport and
//! information oracles work in plain `f64`; the gradient checker perturbs
//! parameters in whatever [`Scalar`] the loss is evaluated in.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const NORMALIZATION_TOL: f64 = 1e-12;

/// Largest support size accepted by the brute-force transport solver.
pub const MAX_BRUTE_FORCE_POINTS: usize = 8;

/// Finitely supported distribution on the real line.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    points: Vec<f64>,
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(points: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != probs.len() {
            return Err(Error::data(format!(
                "{} support points with {} probabilities",
                points.len(),
                probs.len()
            )));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::data("support points must be finite"));
        }
        if probs.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::data("probabilities must be non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::data(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { points, probs })
    }

    /// Equal mass on every point (the empirical measure of a sample).
    pub fn uniform(points: Vec<f64>) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::data("empty support"));
        }
        // last weight absorbs rounding so the total is exactly representable
        let w = 1.0 / n as f64;
        let mut probs = vec![w; n];
        probs[n - 1] = 1.0 - w * (n - 1) as f64;
        Self::new(points, probs)
    }

    pub fn dirac(x: f64) -> Self {
        Self {
            points: vec![x],
            probs: vec![1.0],
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn sorted_atoms(&self) -> Vec<(f64, f64)> {
        let mut atoms: Vec<(f64, f64)> = self
            .points
            .iter()
            .copied()
            .zip(self.probs.iter().copied())
            .collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        atoms
    }
}

/// Exact W1 between two distributions on the line via the quantile coupling:
/// mass is matched in sorted order, so the cost is the integral of
/// `|F_p⁻¹(u) − F_q⁻¹(u)|` over `u ∈ [0, 1]`.
pub fn exact_w1_1d(p: &DiscreteDistribution, q: &DiscreteDistribution) -> f64 {
    let a = p.sorted_atoms();
    let b = q.sorted_atoms();
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut cost = 0.0;
    while i < a.len() && j < b.len() {
        let m = ra.min(rb);
        cost += m * (a[i].0 - b[j].0).abs();
        ra -= m;
        rb -= m;
        // the smaller remainder is exhausted; rounding leftovers are dropped
        if ra <= rb {
            i += 1;
            if i < a.len() {
                ra = a[i].1;
            }
        } else {
            j += 1;
            if j < b.len() {
                rb = b[j].1;
            }
        }
    }
    cost
}

/// Exact transport cost between two equal-size, equal-weight point clouds,
/// by enumerating every permutation coupling. For uniform marginals the
/// optimum over doubly stochastic couplings is attained at a permutation.
pub fn exact_w1_discrete<F>(xs: &[Vec<f64>], ys: &[Vec<f64>], cost: F) -> Result<f64>
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    if xs.len() != ys.len() || xs.is_empty() {
        return Err(Error::data(format!(
            "brute-force transport needs equal non-empty supports, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let matrix: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| ys.iter().map(|y| cost(x, y)).collect())
        .collect();
    min_assignment_mean(&matrix)
}

/// Minimum mean cost over all permutations for a square cost matrix.
pub fn min_assignment_mean(cost: &[Vec<f64>]) -> Result<f64> {
    let n = cost.len();
    if n == 0 || cost.iter().any(|r| r.len() != n) {
        return Err(Error::data("cost matrix must be square and non-empty"));
    }
    if n > MAX_BRUTE_FORCE_POINTS {
        return Err(Error::config(format!(
            "refusing brute-force transport on {n} points (limit {MAX_BRUTE_FORCE_POINTS})"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let total = |perm: &[usize]| -> f64 { perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum() };
    let mut best = total(&perm);
    // Heap's algorithm, iterative form
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(total(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(best / n as f64)
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn manhattan(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Joint probability table over two finite alphabets.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    rows: usize,
    cols: usize,
    probs: Vec<f64>,
}

impl JointTable {
    pub fn new(rows: usize, cols: usize, probs: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || probs.len() != rows * cols {
            return Err(Error::data(format!(
                "{} entries cannot fill a {rows}x{cols} joint table",
                probs.len()
            )));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::data("joint table entries must be finite and non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::data(format!("joint table sums to {total}, not 1")));
        }
        Ok(Self { rows, cols, probs })
    }

    /// Normalizes arbitrary non-negative weights into a joint table.
    pub fn from_weights(rows: usize, cols: usize, weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::data("joint weights must have positive total"));
        }
        Self::new(rows, cols, weights.iter().map(|w| w / total).collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.probs[a * self.cols + b]
    }

    pub fn row_marginal(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|a| (0..self.cols).map(|b| self.get(a, b)).sum())
            .collect()
    }

    pub fn col_marginal(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|b| (0..self.rows).map(|a| self.get(a, b)).sum())
            .collect()
    }

    /// Pushes the row variable through a deterministic map `h: A → A'`.
    pub fn push_rows(&self, map: &[usize], image_size: usize) -> Result<Self> {
        if map.len() != self.rows {
            return Err(Error::data(format!(
                "map covers {} symbols, table has {}",
                map.len(),
                self.rows
            )));
        }
        if let Some(&bad) = map.iter().find(|&&m| m >= image_size) {
            return Err(Error::data(format!("map value {bad} outside image of size {image_size}")));
        }
        let mut out = vec![0.0; image_size * self.cols];
        for (a, &m) in map.iter().enumerate() {
            for b in 0..self.cols {
                out[m * self.cols + b] += self.get(a, b);
            }
        }
        Ok(Self {
            rows: image_size,
            cols: self.cols,
            probs: out,
        })
    }
}

/// Mutual information in nats, with `0 · ln(0/·) = 0`.
pub fn discrete_mi(joint: &JointTable) -> f64 {
    let pa = joint.row_marginal();
    let pb = joint.col_marginal();
    let mut mi = 0.0;
    for (a, &qa) in pa.iter().enumerate() {
        for (b, &qb) in pb.iter().enumerate() {
            let p = joint.get(a, b);
            if p > 0.0 {
                mi += p * (p / (qa * qb)).ln();
            }
        }
    }
    mi
}

/// Mutual information before and after mapping the row variable through `h`.
pub fn data_processing_check(joint: &JointTable, map: &[usize], image_size: usize) -> Result<(f64, f64)> {
    let pushed = joint.push_rows(map, image_size)?;
    Ok((discrete_mi(joint), discrete_mi(&pushed)))
}

/// Outcome of a finite-difference gradient comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
}

/// Compares `analytic` with central differences of `loss` around `params`.
///
/// The per-coordinate error is
/// `|g_a − g_fd| / max(1e-12, |g_a| + |g_fd|)`; the maximum is returned.
/// Perturbation and loss evaluation happen in `S`. With `S = f64` the
/// difference quotient carries roughly `1e-16 · |loss| / step` of rounding
/// noise, which swamps coordinates whose true gradient is (near) zero; use
/// [`crate::scalar::Extended`] to push that noise below the `1e-12` floor.
pub fn finite_diff_gradcheck<S, F>(mut loss: F, params: &[f64], analytic: &[f64], step: f64) -> Result<GradCheck>
where
    S: Scalar,
    F: FnMut(&[S]) -> S,
{
    if params.len() != analytic.len() {
        return Err(Error::shape(format!(
            "{} parameters with {} gradient entries",
            params.len(),
            analytic.len()
        )));
    }
    if !(step > 0.0) {
        return Err(Error::config("finite-difference step must be positive"));
    }
    let mut x: Vec<S> = params.iter().map(|&v| S::of(v)).collect();
    let h = S::of(step);
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
    };
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let up = loss(&x);
        x[i] = orig - h;
        let down = loss(&x);
        x[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss is not finite when perturbing coordinate {i}"
            )));
        }
        let numeric = ((up - down) / (h + h)).as_f64();
        let a = analytic[i];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-12);
        if rel > report.max_rel_error || i == 0 {
            report = GradCheck {
                max_rel_error: rel,
                worst_index: i,
                analytic_at_worst: a,
                numeric_at_worst: numeric,
            };
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirac_masses_one_apart() {
        let d = exact_w1_1d(&DiscreteDistribution::dirac(0.0), &DiscreteDistribution::dirac(1.0));
        assert_eq!(d, 1.0);
    }

    #[test]
    fn identical_distributions_are_zero_apart() {
        let p = DiscreteDistribution::new(vec![0.3, -1.0, 2.0], vec![0.2, 0.5, 0.3]).unwrap();
        assert_eq!(exact_w1_1d(&p, &p), 0.0);
    }

    #[test]
    fn sorted_matching_example() {
        let p = DiscreteDistribution::uniform(vec![0.0, 2.0]).unwrap();
        let q = DiscreteDistribution::uniform(vec![3.0, 1.0]).unwrap();
        assert_eq!(exact_w1_1d(&p, &q), 1.0);
    }

    #[test]
    fn unequal_weights_split_mass() {
        // 0.75 at 0 and 0.25 at 4 against all mass at 1: 0.75*1 + 0.25*3
        let p = DiscreteDistribution::new(vec![0.0, 4.0], vec![0.75, 0.25]).unwrap();
        let q = DiscreteDistribution::dirac(1.0);
        assert!((exact_w1_1d(&p, &q) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn unnormalized_input_is_data_error() {
        assert!(matches!(
            DiscreteDistribution::new(vec![0.0, 1.0], vec![0.5, 0.6]),
            Err(Error::Data(_))
        ));
        assert!(DiscreteDistribution::new(vec![0.0], vec![-0.0 - 1.0]).is_err());
    }

    #[test]
    fn brute_force_handles_multisets() {
        let xs = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let ys = vec![vec![1.0, 1.0], vec![0.0, 0.0]];
        assert_eq!(exact_w1_discrete(&xs, &ys, euclidean).unwrap(), 0.0);
        assert_eq!(exact_w1_discrete(&xs, &xs, manhattan).unwrap(), 0.0);
    }

    #[test]
    fn brute_force_refuses_large_instances() {
        let xs: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64]).collect();
        assert!(matches!(
            exact_w1_discrete(&xs, &xs, euclidean),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn brute_force_agrees_with_quantile_formula_on_a_line() {
        let xs = [0.3, -1.7, 2.2];
        let ys = [1.1, 0.0, -0.4];
        let brute = exact_w1_discrete(
            &xs.iter().map(|&v| vec![v]).collect::<Vec<_>>(),
            &ys.iter().map(|&v| vec![v]).collect::<Vec<_>>(),
            euclidean,
        )
        .unwrap();
        let quantile = exact_w1_1d(
            &DiscreteDistribution::uniform(xs.to_vec()).unwrap(),
            &DiscreteDistribution::uniform(ys.to_vec()).unwrap(),
        );
        // sorted: (-1.7, 0.3, 2.2) vs (-0.4, 0.0, 1.1) → (1.3 + 0.3 + 1.1) / 3
        assert!((brute - 0.9).abs() < 1e-12);
        assert!((brute - quantile).abs() < 1e-12);
    }

    #[test]
    fn mi_textbook_values() {
        let indep = JointTable::new(2, 2, vec![0.06, 0.14, 0.24, 0.56]).unwrap();
        assert!(discrete_mi(&indep).abs() < 1e-12);
        let diag = JointTable::new(2, 2, vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        assert!((discrete_mi(&diag) - 2f64.ln()).abs() < 1e-15);
        assert!((discrete_mi(&diag) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn mi_matches_term_by_term_sum() {
        let w = [0.05, 0.1, 0.02, 0.08, 0.12, 0.03, 0.07, 0.13, 0.09, 0.11, 0.04, 0.16];
        let joint = JointTable::new(3, 4, w.to_vec()).unwrap();
        let pa: Vec<f64> = (0..3).map(|a| w[a * 4..a * 4 + 4].iter().sum()).collect();
        let pb: Vec<f64> = (0..4).map(|b| (0..3).map(|a| w[a * 4 + b]).sum()).collect();
        let mut direct = 0.0;
        for a in 0..3 {
            for b in 0..4 {
                direct += w[a * 4 + b] * (w[a * 4 + b] / (pa[a] * pb[b])).ln();
            }
        }
        assert!((discrete_mi(&joint) - direct).abs() < 1e-12);
    }

    #[test]
    fn negative_joint_entries_are_data_errors() {
        assert!(matches!(
            JointTable::new(1, 2, vec![1.5, -0.5]),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn processing_with_identity_and_constant_maps() {
        let joint = JointTable::from_weights(3, 2, &[1.0, 4.0, 3.0, 1.0, 2.0, 2.0]).unwrap();
        let (before, after) = data_processing_check(&joint, &[0, 1, 2], 3).unwrap();
        assert_eq!(before, after);
        let (_, collapsed) = data_processing_check(&joint, &[0, 0, 0], 1).unwrap();
        assert_eq!(collapsed, 0.0);
    }

    #[test]
    fn gradcheck_on_quadratic() {
        let w = [0.5, -1.25, 3.0, 0.0];
        let loss = |v: &[f64]| 0.5 * v.iter().map(|x| x * x).sum::<f64>();
        let report = finite_diff_gradcheck(loss, &w, &w, 1e-6).unwrap();
        assert!(report.max_rel_error < 1e-9, "{report:?}");
    }

    #[test]
    fn gradcheck_detects_a_doubled_entry() {
        let w = [0.5, -1.25, 3.0];
        let mut grad = w.to_vec();
        grad[1] *= 2.0;
        let loss = |v: &[f64]| 0.5 * v.iter().map(|x| x * x).sum::<f64>();
        let report = finite_diff_gradcheck(loss, &w, &grad, 1e-6).unwrap();
        assert!(report.max_rel_error > 0.3);
        assert_eq!(report.worst_index, 1);
    }

    #[test]
    fn gradcheck_reports_non_finite_loss() {
        let loss = |v: &[f64]| if v[0] > 0.0 { f64::NAN } else { 0.0 };
        assert!(matches!(
            finite_diff_gradcheck(loss, &[0.0], &[0.0], 1e-6),
            Err(Error::NonFinite(_))
        ));
    }
}
