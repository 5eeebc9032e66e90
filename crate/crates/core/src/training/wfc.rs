use std::fmt::Write as _;

use super::config::TrainConfig;
use super::demonic::{extract_representation, hidden_index, representation_dim, DemonicModel};
use crate::datagen::{BatchPlan, BatchStream, EmbeddingDataset};
use crate::error::{Error, Result};
use crate::fairmetrics::{eo_per_class, fairness_score, gap, PredictionSet};
use crate::matrix::Matrix;
use crate::neural::{accuracy_percent, cross_entropy, predict_labels, Gradients, Mlp, OptimizerState};
use crate::rng::{self, Rng};
use crate::scalar::Scalar;
use crate::wassdep::{critic_objective, critic_value, pair_with_permutation, random_permutation, regularizer_grads};

// independent random streams derived from the run seed
const STREAM_CLASSIFIER_INIT: u64 = 1;
const STREAM_CRITIC_INIT: u64 = 2;
const STREAM_CLASSIFIER_BATCHES: u64 = 3;
const STREAM_CRITIC_BATCHES: u64 = 4;
const STREAM_PAIRING: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLoss {
    pub cross_entropy: f64,
    /// Critic objective on the batch (the estimated dependency).
    pub regularizer: f64,
}

/// Total loss `CE + β·(mean C(Z_dep) − mean C(Z_ind))` for one batch and a
/// fixed pairing, with its gradient with respect to the classifier. The
/// critic and `z_s` are constants.
pub fn classifier_objective<T: Scalar>(
    classifier: &Mlp<T>,
    critic: &Mlp<T>,
    x: &Matrix<T>,
    y: &[usize],
    z_s: &Matrix<T>,
    permutation: Vec<usize>,
    config: &TrainConfig,
) -> Result<(T, StepLoss, Gradients<T>)> {
    let trace = classifier.forward(x)?;
    let (ce, mut grad_logits) = cross_entropy(trace.logits(), y)?;
    let layer = hidden_index(classifier, config.classifier_layer)?;
    let z_y = match layer {
        Some(k) => trace.hidden(k).expect("index checked"),
        None => trace.logits(),
    };
    let batch = pair_with_permutation(z_y, z_s, permutation)?;
    if config.beta == 0.0 {
        // the regularizer is only reported
        let reg = critic_value(critic, &batch)?;
        let grads = classifier.backward(&trace, &grad_logits)?;
        let loss = StepLoss {
            cross_entropy: ce.as_f64(),
            regularizer: reg.as_f64(),
        };
        return Ok((ce, loss, grads));
    }
    let beta = T::of(config.beta);
    let (reg, mut grad_z) = regularizer_grads(critic, &batch)?;
    grad_z.scale(beta);
    let grads = match layer {
        Some(k) => classifier.backward_full(&trace, &grad_logits, Some((k, &grad_z)), false)?.params,
        None => {
            grad_logits.add_scaled(T::one(), &grad_z)?;
            classifier.backward(&trace, &grad_logits)?
        }
    };
    let loss = StepLoss {
        cross_entropy: ce.as_f64(),
        regularizer: reg.as_f64(),
    };
    Ok((ce + beta * reg, loss, grads))
}

/// One critic update: pair the batch, ascend the critic objective, clamp.
/// Returns the objective before the update.
#[allow(clippy::too_many_arguments)]
pub fn critic_step<T: Scalar>(
    classifier: &Mlp<T>,
    critic: &mut Mlp<T>,
    opt: &mut OptimizerState<T>,
    x: &Matrix<T>,
    z_s: &Matrix<T>,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<f64> {
    let z_y = extract_representation(classifier, x, config.classifier_layer)?;
    let perm = random_permutation(z_y.rows(), rng, config.derangement);
    let batch = pair_with_permutation(&z_y, z_s, perm)?;
    let (value, mut grads) = critic_objective(critic, &batch)?;
    grads.scale(-T::one());
    opt.step(critic, &grads)?;
    critic.clamp(config.clamp, config.clamp_biases)?;
    Ok(value.as_f64())
}

/// One classifier update on the regularized loss.
#[allow(clippy::too_many_arguments)]
pub fn classifier_step<T: Scalar>(
    classifier: &mut Mlp<T>,
    critic: &Mlp<T>,
    opt: &mut OptimizerState<T>,
    x: &Matrix<T>,
    y: &[usize],
    z_s: &Matrix<T>,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<StepLoss> {
    let perm = random_permutation(x.rows(), rng, config.derangement);
    let (total, loss, grads) = classifier_objective(classifier, critic, x, y, z_s, perm, config)?;
    if !total.is_finite() {
        return Err(Error::NonFinite(format!(
            "classifier loss {} (cross-entropy {}, regularizer {})",
            total.as_f64(),
            loss.cross_entropy,
            loss.regularizer
        )));
    }
    opt.step(classifier, &grads)?;
    Ok(loss)
}

fn ce_step<T: Scalar>(classifier: &mut Mlp<T>, opt: &mut OptimizerState<T>, x: &Matrix<T>, y: &[usize]) -> Result<f64> {
    let trace = classifier.forward(x)?;
    let (ce, grad) = cross_entropy(trace.logits(), y)?;
    if !ce.is_finite() {
        return Err(Error::NonFinite(format!("cross-entropy {}", ce.as_f64())));
    }
    let grads = classifier.backward(&trace, &grad)?;
    opt.step(classifier, &grads)?;
    Ok(ce.as_f64())
}

/// Per-epoch summary. `val_gap` is NaN when EO is undefined on the
/// validation split; `critic_value` and `reg_value` are NaN without critic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub clf_loss: f64,
    pub reg_value: f64,
    pub val_acc: f64,
    pub val_gap: f64,
    pub critic_value: f64,
    /// Largest absolute critic parameter seen after any critic step of the
    /// epoch.
    pub critic_max_abs: f64,
    pub critic_steps: usize,
    pub classifier_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// Epoch (1-based) whose classifier was kept; 0 means the initial one.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "epoch,clf_loss,reg_value,val_acc,val_gap,critic_value";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:?},{:?},{:?},{:?},{:?}",
                r.epoch, r.clf_loss, r.reg_value, r.val_acc, r.val_gap, r.critic_value
            );
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub classifier: Mlp<T>,
    /// Critic at the kept epoch; absent for cross-entropy-only training.
    pub critic: Option<Mlp<T>>,
    pub history: TrainHistory,
}

/// Validation accuracy, GAP (NaN if undefined) and the selection score
/// `(accuracy + fairness) / 2`, falling back to accuracy.
pub fn validation_scores<T: Scalar>(classifier: &Mlp<T>, val: &EmbeddingDataset<T>) -> Result<(f64, f64, f64)> {
    let pred = predict_labels(classifier, val.features())?;
    let acc = accuracy_percent(&pred, val.labels());
    let ps = PredictionSet::new(pred, val.labels().to_vec(), val.groups().to_vec(), val.n_classes(), val.n_groups())?;
    match eo_per_class(&ps) {
        Ok(eo) => {
            let g = gap(&eo);
            Ok((acc, g, (acc + fairness_score(g)) / 2.0))
        }
        Err(Error::UndefinedMetric(_)) => Ok((acc, f64::NAN, acc)),
        Err(e) => Err(e),
    }
}

/// Alternating training: per epoch `n_critic` critic updates followed by
/// `n_classifier` classifier updates, early stopped on the validation
/// selection score with the best classifier restored.
pub fn train_wfc<T: Scalar>(
    train: &EmbeddingDataset<T>,
    val: &EmbeddingDataset<T>,
    demonic: &DemonicModel<T>,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    run(train, val, Some(demonic), config)
}

/// The same loop without demonic model or critic. Shares seeds and
/// batching with [`train_wfc`], so `β = 0` runs follow the same
/// trajectory.
pub fn train_ce<T: Scalar>(
    train: &EmbeddingDataset<T>,
    val: &EmbeddingDataset<T>,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    run(train, val, None, config)
}

fn run<T: Scalar>(
    train: &EmbeddingDataset<T>,
    val: &EmbeddingDataset<T>,
    demonic: Option<&DemonicModel<T>>,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    if val.dim() != train.dim() || val.n_classes() != train.n_classes() || val.n_groups() != train.n_groups() {
        return Err(Error::config("validation split does not match the training split"));
    }
    let n = train.len();
    if n < 2 {
        return Err(Error::data("training needs at least 2 rows"));
    }
    let sizes = config.classifier.layer_sizes(train.dim(), train.n_classes());
    let mut classifier = Mlp::new(
        &sizes,
        config.classifier.activation,
        rng::derive(config.seed, STREAM_CLASSIFIER_INIT),
    )?;
    let d_y = representation_dim(&classifier, config.classifier_layer)?;
    let mut clf_opt = OptimizerState::new(config.classifier.optimizer, &classifier)?;
    let batch_size = config.batch_size.min(n);
    let mut clf_batches = BatchStream::new(
        n,
        BatchPlan::new(batch_size, rng::derive(config.seed, STREAM_CLASSIFIER_BATCHES))?,
    )?;

    struct CriticParts<T> {
        critic: Mlp<T>,
        opt: OptimizerState<T>,
        z_s: Matrix<T>,
        batches: BatchStream,
        pairing: Rng,
    }
    let mut adversary = match demonic {
        None => None,
        Some(dm) => {
            let z_s = dm.signal(train.features(), config.demonic_mode).map_err(|e| match e {
                Error::Shape(m) => Error::config(format!("demonic model does not fit the data: {m}")),
                other => other,
            })?;
            let critic_sizes = config.critic.layer_sizes(d_y + z_s.cols(), 1);
            let mut critic = Mlp::new(
                &critic_sizes,
                config.critic.activation,
                rng::derive(config.seed, STREAM_CRITIC_INIT),
            )?;
            critic.clamp(config.clamp, config.clamp_biases)?;
            let opt = OptimizerState::new(config.critic.optimizer, &critic)?;
            let batches = BatchStream::new(
                n,
                BatchPlan::new(batch_size, rng::derive(config.seed, STREAM_CRITIC_BATCHES))?,
            )?;
            Some(CriticParts {
                critic,
                opt,
                z_s,
                batches,
                pairing: rng::seeded(rng::derive(config.seed, STREAM_PAIRING)),
            })
        }
    };

    let (_, _, initial_score) = validation_scores(&classifier, val)?;
    let mut best = (initial_score, classifier.clone(), adversary.as_ref().map(|a| a.critic.clone()), 0);
    let mut since_best = 0;
    let mut history = TrainHistory::default();

    for epoch in 1..=config.epochs {
        let mut critic_sum = 0.0;
        let mut critic_max_abs = 0.0f64;
        let mut critic_steps = 0;
        if let Some(a) = adversary.as_mut() {
            for _ in 0..config.n_critic {
                let idx = a.batches.next_batch().to_vec();
                let x = train.features().select_rows(&idx);
                let z_s = a.z_s.select_rows(&idx);
                critic_sum += critic_step(&classifier, &mut a.critic, &mut a.opt, &x, &z_s, config, &mut a.pairing)?;
                critic_max_abs = critic_max_abs.max(a.critic.max_abs().as_f64());
                critic_steps += 1;
            }
        }

        let mut ce_sum = 0.0;
        let mut reg_sum = 0.0;
        for step in 0..config.n_classifier {
            let idx = clf_batches.next_batch().to_vec();
            let x = train.features().select_rows(&idx);
            let y: Vec<usize> = idx.iter().map(|&i| train.labels()[i]).collect();
            let outcome = match adversary.as_mut() {
                Some(a) => {
                    let z_s = a.z_s.select_rows(&idx);
                    classifier_step(&mut classifier, &a.critic, &mut clf_opt, &x, &y, &z_s, config, &mut a.pairing)
                }
                None => ce_step(&mut classifier, &mut clf_opt, &x, &y).map(|ce| StepLoss {
                    cross_entropy: ce,
                    regularizer: f64::NAN,
                }),
            };
            let loss = outcome.map_err(|e| match e {
                Error::NonFinite(m) => Error::NonFinite(format!("epoch {epoch}, classifier step {step}: {m}")),
                other => other,
            })?;
            ce_sum += loss.cross_entropy;
            reg_sum += loss.regularizer;
        }

        let (val_acc, val_gap, score) = validation_scores(&classifier, val)?;
        let steps = config.n_classifier as f64;
        history.records.push(EpochRecord {
            epoch,
            clf_loss: ce_sum / steps,
            reg_value: reg_sum / steps,
            val_acc,
            val_gap,
            critic_value: if critic_steps > 0 {
                critic_sum / critic_steps as f64
            } else {
                f64::NAN
            },
            critic_max_abs,
            critic_steps,
            classifier_steps: config.n_classifier,
        });
        log::debug!("epoch {epoch}: acc {val_acc:.2} gap {val_gap:.4} score {score:.3}");

        if score > best.0 {
            best = (score, classifier.clone(), adversary.as_ref().map(|a| a.critic.clone()), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    let (_, classifier, critic, best_epoch) = best;
    history.best_epoch = best_epoch;
    Ok(TrainOutcome {
        classifier,
        critic,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_synthetic, split, SyntheticSpec};
    use crate::neural::Activation;
    use crate::training::{DemonicMode, LayerSelector, NetworkSpec};

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            epochs: 6,
            n_critic: 2,
            n_classifier: 3,
            batch_size: 16,
            classifier: NetworkSpec {
                hidden: vec![5],
                ..NetworkSpec::classifier_default()
            },
            critic: NetworkSpec {
                hidden: vec![6],
                ..NetworkSpec::critic_default()
            },
            ..TrainConfig::default()
        }
    }

    fn tiny_data() -> (EmbeddingDataset<f64>, EmbeddingDataset<f64>) {
        let ds = generate_synthetic(&SyntheticSpec {
            n_per_cell: 20,
            d: 6,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let mut parts = split(&ds, &[0.75, 0.25], 0).unwrap();
        let val = parts.pop().unwrap();
        (parts.pop().unwrap(), val)
    }

    fn tiny_demonic(train: &EmbeddingDataset<f64>) -> DemonicModel<f64> {
        let net = Mlp::new(&[train.dim(), 4, 2], Activation::Tanh, 9).unwrap();
        DemonicModel::from_params(net, LayerSelector::LastHidden, 0.0).unwrap()
    }

    #[test]
    fn alternation_counts_and_clamp() {
        let (train, val) = tiny_data();
        let cfg = TrainConfig {
            patience: 100,
            ..tiny_config()
        };
        let out = train_wfc(&train, &val, &tiny_demonic(&train), &cfg).unwrap();
        assert_eq!(out.history.records.len(), 6);
        for r in &out.history.records {
            assert_eq!((r.critic_steps, r.classifier_steps), (2, 3));
            assert!(r.critic_max_abs <= 0.01);
        }
        assert!(out.critic.unwrap().max_abs() <= 0.01);
    }

    #[test]
    fn zero_beta_matches_cross_entropy_training() {
        let (train, val) = tiny_data();
        let cfg = TrainConfig {
            beta: 0.0,
            ..tiny_config()
        };
        let a = train_wfc(&train, &val, &tiny_demonic(&train), &cfg).unwrap();
        let b = train_ce(&train, &val, &cfg).unwrap();
        assert_eq!(a.classifier, b.classifier);
        let acc = |o: &TrainOutcome<f64>| o.history.records.iter().map(|r| r.val_acc).collect::<Vec<_>>();
        assert_eq!(acc(&a), acc(&b));
    }

    #[test]
    fn zero_critic_step_equals_zero_beta_step() {
        let (train, _) = tiny_data();
        let cfg = tiny_config();
        let clf = Mlp::new(&[6, 5, 2], Activation::Tanh, 3).unwrap();
        let critic = Mlp::zeros(&[4, 6, 1], Activation::Relu).unwrap();
        let idx: Vec<usize> = (0..16).collect();
        let x = train.features().select_rows(&idx);
        let y: Vec<usize> = idx.iter().map(|&i| train.labels()[i]).collect();
        let z_s = Matrix::from_vec(16, 2, (0..32).map(|i| i as f64 * 0.1).collect()).unwrap();
        let mut results = Vec::new();
        for beta in [1.0, 0.0] {
            let mut c = clf.clone();
            let mut opt = OptimizerState::new(cfg.classifier.optimizer, &c).unwrap();
            let mut r = rng::seeded(0);
            let cfg = TrainConfig {
                beta,
                classifier_layer: LayerSelector::Logits,
                ..cfg.clone()
            };
            classifier_step(&mut c, &critic, &mut opt, &x, &y, &z_s, &cfg, &mut r).unwrap();
            results.push(c);
        }
        assert_eq!(results[0], results[1]);
    }

    #[test]
    fn same_seed_same_history() {
        let (train, val) = tiny_data();
        let cfg = TrainConfig {
            demonic_mode: DemonicMode::HardLabel,
            ..tiny_config()
        };
        let dm = tiny_demonic(&train);
        let a = train_wfc(&train, &val, &dm, &cfg).unwrap();
        let b = train_wfc(&train, &val, &dm, &cfg).unwrap();
        assert_eq!(a.history.to_csv(), b.history.to_csv());
        assert_eq!(a.classifier, b.classifier);
        assert!(a.history.to_csv().starts_with("epoch,clf_loss,reg_value,val_acc,val_gap"));
    }

    #[test]
    fn mismatched_demonic_is_a_config_error() {
        let (train, val) = tiny_data();
        let net = Mlp::new(&[3, 4, 2], Activation::Tanh, 9).unwrap();
        let dm = DemonicModel::from_params(net, LayerSelector::LastHidden, 0.0).unwrap();
        assert!(matches!(train_wfc(&train, &val, &dm, &tiny_config()), Err(Error::Config(_))));
    }
}
