use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::fairmetrics::{equal_opportunity, gap, PredictionSet};
use crate::matrix::Matrix;
use crate::neural::{cross_entropy, Activation, Mlp, OptimizerSpec};
use crate::oracle::{
    data_processing_check, euclidean, exact_w1_1d, exact_w1_discrete, finite_diff_gradcheck, DiscreteDistribution,
    GradCheck, JointTable,
};
use crate::rng::{self, Rng};
use crate::scalar::{Extended, Scalar};
use crate::training::{classifier_objective, LayerSelector, TrainConfig};
use crate::wassdep::{critic_objective, fit_critic, pair_batches, pair_with_permutation, random_permutation};

const FD_STEP: f64 = 1e-6;

fn normal_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix<f64> {
    let data = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    Matrix::from_vec(rows, cols, data).expect("sizes agree")
}

fn labels(n: usize, k: usize, rng: &mut Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..k)).collect()
}

fn flat_f64(v: &[Extended]) -> Vec<f64> {
    v.iter().map(|e| e.as_f64()).collect()
}

/// Gradient checks run both the analytic pass and the central differences
/// in [`Extended`], so coordinates whose true gradient cancels to zero are
/// not swamped by `f64` rounding on either side.
///
/// Cross-entropy through a random `[5, 7, 3]` tanh network.
pub fn gradcheck_cross_entropy(seed: u64) -> Result<GradCheck> {
    let mut r = rng::seeded(seed);
    let net = Mlp::<f64>::new(&[5, 7, 3], Activation::Tanh, rng::derive(seed, 1))?;
    let x = normal_matrix(6, 5, &mut r);
    let y = labels(6, 3, &mut r);
    let mut wide = net.cast::<Extended>();
    let xe = x.cast::<Extended>();
    let trace = wide.forward(&xe)?;
    let (_, g) = cross_entropy(trace.logits(), &y)?;
    let analytic = flat_f64(&wide.backward(&trace, &g)?.to_flat());
    finite_diff_gradcheck(
        |p: &[Extended]| {
            wide.set_flat(p).expect("length fixed");
            cross_entropy(&wide.predict(&xe).expect("shapes fixed"), &y).expect("labels valid").0
        },
        &net.to_flat(),
        &analytic,
        FD_STEP,
    )
}

/// Critic objective with respect to the parameters of a random `[5, 8, 1]`
/// ReLU critic on a random pairing.
pub fn gradcheck_critic_objective(seed: u64) -> Result<GradCheck> {
    let mut r = rng::seeded(seed);
    let critic = Mlp::<f64>::new(&[5, 8, 1], Activation::Relu, rng::derive(seed, 1))?;
    let z_y = normal_matrix(8, 3, &mut r);
    let z_s = normal_matrix(8, 2, &mut r);
    let perm = random_permutation(8, &mut r, false);
    let mut wide = critic.cast::<Extended>();
    let wide_batch = pair_with_permutation(&z_y.cast::<Extended>(), &z_s.cast::<Extended>(), perm)?;
    let analytic = flat_f64(&critic_objective(&wide, &wide_batch)?.1.to_flat());
    finite_diff_gradcheck(
        |p: &[Extended]| {
            wide.set_flat(p).expect("length fixed");
            critic_objective(&wide, &wide_batch).expect("shapes fixed").0
        },
        &critic.to_flat(),
        &analytic,
        FD_STEP,
    )
}

/// Full regularized loss `CE + β·critic objective` with respect to the
/// classifier parameters, critic and `z_s` fixed.
pub fn gradcheck_full_loss(seed: u64) -> Result<GradCheck> {
    let mut r = rng::seeded(seed);
    let classifier = Mlp::<f64>::new(&[5, 7, 3], Activation::Tanh, rng::derive(seed, 1))?;
    let critic = Mlp::<f64>::new(&[9, 6, 1], Activation::Relu, rng::derive(seed, 2))?;
    let x = normal_matrix(8, 5, &mut r);
    let y = labels(8, 3, &mut r);
    let z_s = normal_matrix(8, 2, &mut r);
    let perm = random_permutation(8, &mut r, false);
    let config = TrainConfig {
        beta: 1.3,
        classifier_layer: LayerSelector::LastHidden,
        ..TrainConfig::default()
    };
    let mut wide = classifier.cast::<Extended>();
    let critic_e = critic.cast::<Extended>();
    let (xe, ze) = (x.cast::<Extended>(), z_s.cast::<Extended>());
    let (_, _, grads) = classifier_objective(&wide, &critic_e, &xe, &y, &ze, perm.clone(), &config)?;
    finite_diff_gradcheck(
        |p: &[Extended]| {
            wide.set_flat(p).expect("length fixed");
            classifier_objective(&wide, &critic_e, &xe, &y, &ze, perm.clone(), &config)
                .expect("shapes fixed")
                .0
        },
        &classifier.to_flat(),
        &flat_f64(&grads.to_flat()),
        FD_STEP,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfTestResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, outcome: Result<(bool, String)>) -> SelfTestResult {
    match outcome {
        Ok((passed, detail)) => SelfTestResult { name, passed, detail },
        Err(e) => SelfTestResult {
            name,
            passed: false,
            detail: e.to_string(),
        },
    }
}

fn gradchecks(f: fn(u64) -> Result<GradCheck>) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        worst = worst.max(f(seed)?.max_rel_error);
    }
    Ok((worst < 1e-6, format!("max relative error {worst:.3e} over 20 instances")))
}

fn w1_agreement() -> Result<(bool, String)> {
    let mut r = rng::seeded(4);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = r.random_range(1..=6);
        let xs: Vec<f64> = (0..n).map(|_| r.random_range(-5.0..5.0)).collect();
        let ys: Vec<f64> = (0..n).map(|_| r.random_range(-5.0..5.0)).collect();
        let line = exact_w1_1d(&DiscreteDistribution::uniform(xs.clone())?, &DiscreteDistribution::uniform(ys.clone())?);
        let wrap = |v: &[f64]| v.iter().map(|&p| vec![p]).collect::<Vec<_>>();
        let brute = exact_w1_discrete(&wrap(&xs), &wrap(&ys), euclidean)?;
        worst = worst.max((line - brute).abs());
    }
    Ok((worst < 1e-9, format!("max |difference| {worst:.3e} over 200 instances")))
}

fn dirac_distance() -> Result<(bool, String)> {
    let d = exact_w1_1d(&DiscreteDistribution::dirac(0.0), &DiscreteDistribution::dirac(1.0));
    Ok((d == 1.0, format!("W1(δ0, δ1) = {d:?}")))
}

fn data_processing() -> Result<(bool, String)> {
    let mut r = rng::seeded(5);
    let mut violations = 0;
    for _ in 0..1000 {
        let (rows, cols) = (r.random_range(1..=6), r.random_range(1..=4));
        let weights: Vec<f64> = (0..rows * cols).map(|_| r.random_range(0.0..1.0)).collect();
        let joint = JointTable::from_weights(rows, cols, &weights)?;
        let image = r.random_range(1..=rows);
        let mut map: Vec<usize> = (0..rows).map(|_| r.random_range(0..image)).collect();
        map.shuffle(&mut r);
        let (before, after) = data_processing_check(&joint, &map, image)?;
        if after > before + 1e-12 {
            violations += 1;
        }
    }
    Ok((violations == 0, format!("{violations} violations in 1000 trials")))
}

fn metric_fixtures() -> Result<(bool, String)> {
    let mut pred = Vec::new();
    let mut groups = Vec::new();
    for (g, hits) in [(0, 8), (1, 6)] {
        for i in 0..10 {
            pred.push(usize::from(i < hits));
            groups.push(g);
        }
    }
    let ps = PredictionSet::new(pred, vec![1; 20], groups, 2, 2)?;
    let eo = equal_opportunity(&ps, 1, 0, 1)?;
    let g = gap(&[0.2, 0.0]);
    let ok = eo == 0.2 && (g - 0.141421).abs() < 1e-6;
    Ok((ok, format!("EO {eo:?}, GAP(0.2, 0) {g:.6}")))
}

fn clamp_invariant() -> Result<(bool, String)> {
    let mut r = rng::seeded(6);
    let mut critic = Mlp::<f64>::new(&[4, 16, 1], Activation::Relu, 6)?;
    let z_y = normal_matrix(64, 2, &mut r);
    let z_s = z_y.clone();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let mut pairing = rng::seeded(r.random());
        fit_critic(&mut critic, OptimizerSpec::rmsprop(1e-2), 0.01, true, 1, || {
            pair_batches(&z_y, &z_s, &mut pairing, false)
        })?;
        worst = worst.max(critic.max_abs());
    }
    Ok((worst <= 0.01, format!("max |parameter| {worst:?} after 50 steps")))
}

/// Oracle-backed invariant checks, each quick enough to run at startup.
pub fn selftest() -> Vec<SelfTestResult> {
    vec![
        check("gradcheck cross-entropy", gradchecks(gradcheck_cross_entropy)),
        check("gradcheck critic objective", gradchecks(gradcheck_critic_objective)),
        check("gradcheck regularized loss", gradchecks(gradcheck_full_loss)),
        check("exact W1 on the line vs brute force", w1_agreement()),
        check("W1 between unit-distance Diracs", dirac_distance()),
        check("data processing inequality", data_processing()),
        check("EO and GAP fixtures", metric_fixtures()),
        check("critic clamp invariant", clamp_invariant()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_selftest_passes() {
        for r in selftest() {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
