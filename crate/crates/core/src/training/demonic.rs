use super::config::{DemonicConfig, DemonicMode, LayerSelector};
use crate::datagen::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::neural::{accuracy_percent, fit_classifier, predict_labels, Mlp};
use crate::scalar::Scalar;

/// Output of hidden layer `k` (0-based), or the logits.
pub fn extract_representation<T: Scalar>(model: &Mlp<T>, x: &Matrix<T>, selector: LayerSelector) -> Result<Matrix<T>> {
    let trace = model.forward(x)?;
    match hidden_index(model, selector)? {
        Some(k) => Ok(trace.hidden(k).expect("index checked").clone()),
        None => Ok(trace.into_logits()),
    }
}

/// Hidden-layer index addressed by `selector`; `None` means the logits.
pub fn hidden_index<T: Scalar>(model: &Mlp<T>, selector: LayerSelector) -> Result<Option<usize>> {
    let hidden = model.hidden_count();
    match selector {
        LayerSelector::Logits => Ok(None),
        _ if hidden == 0 => Err(Error::config(format!(
            "{selector} requested from a network without hidden layers"
        ))),
        LayerSelector::FirstHidden => Ok(Some(0)),
        LayerSelector::LastHidden => Ok(Some(hidden - 1)),
    }
}

pub fn representation_dim<T: Scalar>(model: &Mlp<T>, selector: LayerSelector) -> Result<usize> {
    Ok(match hidden_index(model, selector)? {
        Some(k) => model.layer_sizes()[k + 1],
        None => model.output_dim(),
    })
}

/// Row-wise one-hot of the argmax (lower index wins ties).
pub fn one_hot_argmax<T: Scalar>(logits: &Matrix<T>) -> Matrix<T> {
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for (i, j) in logits.argmax_rows().into_iter().enumerate() {
        out[(i, j)] = T::one();
    }
    out
}

/// Frozen sensitive-attribute predictor. Parameters are only reachable
/// through shared references once built.
#[derive(Debug, Clone, PartialEq)]
pub struct DemonicModel<T> {
    params: Mlp<T>,
    layer: LayerSelector,
    heldout_accuracy: f64,
}

impl<T: Scalar> DemonicModel<T> {
    pub fn from_params(params: Mlp<T>, layer: LayerSelector, heldout_accuracy: f64) -> Result<Self> {
        hidden_index(&params, layer)?;
        Ok(Self {
            params,
            layer,
            heldout_accuracy,
        })
    }

    pub fn params(&self) -> &Mlp<T> {
        &self.params
    }

    pub fn layer(&self) -> LayerSelector {
        self.layer
    }

    pub fn with_layer(self, layer: LayerSelector) -> Result<Self> {
        Self::from_params(self.params, layer, self.heldout_accuracy)
    }

    /// Accuracy (percent) on the rows held out during pretraining.
    pub fn heldout_accuracy(&self) -> f64 {
        self.heldout_accuracy
    }

    /// Accuracy (percent) at predicting `s` on another dataset.
    pub fn accuracy_on(&self, ds: &EmbeddingDataset<T>) -> Result<f64> {
        self.check_dataset(ds)?;
        Ok(accuracy_percent(&predict_labels(&self.params, ds.features())?, ds.groups()))
    }

    fn check_dataset(&self, ds: &EmbeddingDataset<T>) -> Result<()> {
        if ds.dim() != self.params.input_dim() || ds.n_groups() != self.params.output_dim() {
            return Err(Error::config(format!(
                "demonic model maps {} -> {} but the dataset has d={} and {} groups",
                self.params.input_dim(),
                self.params.output_dim(),
                ds.dim(),
                ds.n_groups()
            )));
        }
        Ok(())
    }

    pub fn signal_dim(&self, mode: DemonicMode) -> usize {
        match mode {
            DemonicMode::Latent => representation_dim(&self.params, self.layer).expect("layer checked at construction"),
            DemonicMode::HardLabel => self.params.output_dim(),
        }
    }

    /// `z_s` rows for `x`.
    pub fn signal(&self, x: &Matrix<T>, mode: DemonicMode) -> Result<Matrix<T>> {
        match mode {
            DemonicMode::Latent => extract_representation(&self.params, x, self.layer),
            DemonicMode::HardLabel => Ok(one_hot_argmax(&self.params.predict(x)?)),
        }
    }
}

/// Fits a network predicting `s` from the features of `train`, early
/// stopped on `heldout`, and freezes it.
pub fn pretrain_demonic<T: Scalar>(
    train: &EmbeddingDataset<T>,
    heldout: &EmbeddingDataset<T>,
    config: &DemonicConfig,
) -> Result<DemonicModel<T>> {
    config.network.validate("demonic")?;
    let mut seen = vec![false; train.n_groups()];
    train.groups().iter().for_each(|&s| seen[s] = true);
    if seen.iter().filter(|&&b| b).count() < 2 {
        return Err(Error::config(
            "demonic pretraining needs at least two distinct sensitive attribute values",
        ));
    }
    if heldout.dim() != train.dim() || heldout.n_groups() != train.n_groups() {
        return Err(Error::config("demonic held-out data does not match the training data"));
    }
    let sizes = config.network.layer_sizes(train.dim(), train.n_groups());
    let mut net = Mlp::new(&sizes, config.network.activation, config.fit.seed)?;
    let outcome = fit_classifier(
        &mut net,
        config.network.optimizer,
        (train.features(), train.groups()),
        (heldout.features(), heldout.groups()),
        &config.fit,
    )?;
    log::info!(
        "demonic model: held-out accuracy {:.2}% after {} epochs",
        outcome.best_val_accuracy,
        outcome.epochs_run
    );
    DemonicModel::from_params(net, config.layer, outcome.best_val_accuracy)
}
