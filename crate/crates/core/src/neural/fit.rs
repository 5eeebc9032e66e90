use super::{cross_entropy, Mlp, OptimizerSpec, OptimizerState};
use crate::datagen::{batches, BatchPlan};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Plain supervised cross-entropy fitting with early stopping on
/// validation accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            patience: 10,
            batch_size: 128,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOutcome {
    pub epochs_run: usize,
    pub best_epoch: usize,
    /// Percentage on the validation rows at the restored epoch.
    pub best_val_accuracy: f64,
}

/// Argmax class per row; ties go to the lower index.
pub fn predict_labels<T: Scalar>(net: &Mlp<T>, x: &Matrix<T>) -> Result<Vec<usize>> {
    Ok(net.predict(x)?.argmax_rows())
}

pub fn accuracy_percent(predicted: &[usize], gold: &[usize]) -> f64 {
    let hits = predicted.iter().zip(gold).filter(|(a, b)| a == b).count();
    100.0 * hits as f64 / gold.len().max(1) as f64
}

/// Trains `net` in place and leaves it at the epoch with the best
/// validation accuracy (the earliest such epoch on ties).
pub fn fit_classifier<T: Scalar>(
    net: &mut Mlp<T>,
    optimizer: OptimizerSpec,
    train: (&Matrix<T>, &[usize]),
    val: (&Matrix<T>, &[usize]),
    cfg: &FitConfig,
) -> Result<FitOutcome> {
    let (x, y) = train;
    let (vx, vy) = val;
    if x.rows() != y.len() || vx.rows() != vy.len() {
        return Err(Error::shape("features and labels disagree in length"));
    }
    if x.rows() < 2 || vx.rows() == 0 {
        return Err(Error::data(format!(
            "fitting needs at least 2 training and 1 validation rows, got {} and {}",
            x.rows(),
            vx.rows()
        )));
    }
    if cfg.epochs == 0 {
        return Err(Error::config("epochs must be at least 1"));
    }
    let plan = BatchPlan::new(cfg.batch_size.min(x.rows()), cfg.seed)?;
    let mut opt = OptimizerState::new(optimizer, net)?;
    let mut best = (accuracy_percent(&predict_labels(net, vx)?, vy), net.clone(), 0);
    let mut since_best = 0;
    let mut epochs_run = 0;
    for epoch in 0..cfg.epochs {
        for batch in batches(x.rows(), &plan, epoch as u64) {
            let bx = x.select_rows(&batch);
            let by: Vec<usize> = batch.iter().map(|&i| y[i]).collect();
            let trace = net.forward(&bx)?;
            let (loss, grad) = cross_entropy(trace.logits(), &by)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("cross-entropy diverged at epoch {epoch}")));
            }
            let grads = net.backward(&trace, &grad)?;
            opt.step(net, &grads)?;
        }
        epochs_run = epoch + 1;
        let acc = accuracy_percent(&predict_labels(net, vx)?, vy);
        if acc > best.0 {
            best = (acc, net.clone(), epoch + 1);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let (best_val_accuracy, params, best_epoch) = best;
    *net = params;
    Ok(FitOutcome {
        epochs_run,
        best_epoch,
        best_val_accuracy,
    })
}
