use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::neural::{Activation, FitConfig, OptimizerSpec};

/// Which representation of a network feeds the critic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerSelector {
    FirstHidden,
    LastHidden,
    Logits,
}

impl LayerSelector {
    pub const ALL: [LayerSelector; 3] = [Self::FirstHidden, Self::LastHidden, Self::Logits];

    pub fn name(self) -> &'static str {
        match self {
            Self::FirstHidden => "first_hidden",
            Self::LastHidden => "last_hidden",
            Self::Logits => "logits",
        }
    }
}

impl fmt::Display for LayerSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LayerSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first_hidden" => Ok(Self::FirstHidden),
            "last_hidden" => Ok(Self::LastHidden),
            "logits" => Ok(Self::Logits),
            other => Err(Error::config(format!(
                "unknown layer `{other}` (expected first_hidden, last_hidden or logits)"
            ))),
        }
    }
}

/// What the demonic model contributes to the critic input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DemonicMode {
    /// A latent representation picked by the demonic layer selector.
    Latent,
    /// One-hot encoding of the predicted sensitive attribute.
    HardLabel,
}

impl DemonicMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Latent => "latent",
            Self::HardLabel => "hard_label",
        }
    }
}

impl fmt::Display for DemonicMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DemonicMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "latent" => Ok(Self::Latent),
            "hard_label" => Ok(Self::HardLabel),
            other => Err(Error::config(format!(
                "unknown demonic mode `{other}` (expected latent or hard_label)"
            ))),
        }
    }
}

/// Hidden widths, activation and optimizer of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub optimizer: OptimizerSpec,
}

impl NetworkSpec {
    /// One tanh hidden layer of 300 units, Adam at 1e-4.
    pub fn classifier_default() -> Self {
        Self {
            hidden: vec![300],
            activation: Activation::Tanh,
            optimizer: OptimizerSpec::adam(1e-4),
        }
    }

    /// One ReLU hidden layer of 512 units, RMSProp at 5e-5.
    pub fn critic_default() -> Self {
        Self {
            hidden: vec![512],
            activation: Activation::Relu,
            optimizer: OptimizerSpec::rmsprop(5e-5),
        }
    }

    /// Classifier architecture with Adam at 1e-3.
    pub fn demonic_default() -> Self {
        Self {
            optimizer: OptimizerSpec::adam(1e-3),
            ..Self::classifier_default()
        }
    }

    pub fn layer_sizes(&self, input: usize, output: usize) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(input);
        sizes.extend(&self.hidden);
        sizes.push(output);
        sizes
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::config(format!("{what}: hidden widths must be positive")));
        }
        self.optimizer.validate()
    }
}

/// Hyperparameters of the alternating training loop.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Upper bound on epochs; early stopping usually ends training sooner.
    pub epochs: usize,
    pub n_critic: usize,
    pub n_classifier: usize,
    pub batch_size: usize,
    pub beta: f64,
    pub clamp: f64,
    pub clamp_biases: bool,
    /// Draw derangements instead of arbitrary permutations when pairing.
    pub derangement: bool,
    /// Epochs without improvement of the selection metric before stopping.
    pub patience: usize,
    pub seed: u64,
    pub classifier: NetworkSpec,
    pub critic: NetworkSpec,
    pub classifier_layer: LayerSelector,
    pub demonic_layer: LayerSelector,
    pub demonic_mode: DemonicMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10_000,
            n_critic: 5,
            n_classifier: 20,
            batch_size: 128,
            beta: 1.0,
            clamp: 0.01,
            clamp_biases: true,
            derangement: false,
            patience: 10,
            seed: 0,
            classifier: NetworkSpec::classifier_default(),
            critic: NetworkSpec::critic_default(),
            classifier_layer: LayerSelector::LastHidden,
            demonic_layer: LayerSelector::LastHidden,
            demonic_mode: DemonicMode::Latent,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.n_critic == 0 || self.n_classifier == 0 {
            return Err(Error::config("epochs, n_critic and n_classifier must be at least 1"));
        }
        if self.batch_size < 2 {
            return Err(Error::config(format!(
                "batch_size must be at least 2, got {}",
                self.batch_size
            )));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::config(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if !(self.clamp > 0.0) || !self.clamp.is_finite() {
            return Err(Error::config(format!("clamp must be positive, got {}", self.clamp)));
        }
        self.classifier.validate("classifier")?;
        self.critic.validate("critic")?;
        Ok(())
    }
}

/// Architecture and fitting schedule of the demonic model.
#[derive(Debug, Clone, PartialEq)]
pub struct DemonicConfig {
    pub network: NetworkSpec,
    pub fit: FitConfig,
    pub layer: LayerSelector,
}

impl Default for DemonicConfig {
    fn default() -> Self {
        Self {
            network: NetworkSpec::demonic_default(),
            fit: FitConfig::default(),
            layer: LayerSelector::LastHidden,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for sel in LayerSelector::ALL {
            assert_eq!(sel.name().parse::<LayerSelector>().unwrap(), sel);
        }
        for mode in [DemonicMode::Latent, DemonicMode::HardLabel] {
            assert_eq!(mode.to_string().parse::<DemonicMode>().unwrap(), mode);
        }
        assert!("last".parse::<LayerSelector>().is_err());
    }

    #[test]
    fn defaults_validate() {
        let cfg = TrainConfig::default();
        cfg.validate().unwrap();
        assert_eq!((cfg.beta, cfg.n_critic, cfg.n_classifier, cfg.clamp), (1.0, 5, 20, 0.01));
        assert_eq!(cfg.critic.hidden, vec![512]);
        for bad in [
            TrainConfig { beta: -1.0, ..cfg.clone() },
            TrainConfig { clamp: 0.0, ..cfg.clone() },
            TrainConfig { batch_size: 1, ..cfg.clone() },
            TrainConfig { n_critic: 0, ..cfg.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }
}
