use std::fmt;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::datagen::SyntheticSpec;
use crate::error::{Error, Result};
use crate::fairmetrics::ProbeConfig;
use crate::neural::{Activation, OptimizerKind, OptimizerSpec};
use crate::training::{DemonicConfig, DemonicMode, LayerSelector, NetworkSpec, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    FairClassification,
    DemonicTransfer,
    LayerAblation,
    HardLabelAblation,
    BetaSweep,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Self::FairClassification => "fair_classification",
            Self::DemonicTransfer => "demonic_transfer",
            Self::LayerAblation => "layer_ablation",
            Self::HardLabelAblation => "hard_label_ablation",
            Self::BetaSweep => "beta_sweep",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Self::FairClassification,
            Self::DemonicTransfer,
            Self::LayerAblation,
            Self::HardLabelAblation,
            Self::BetaSweep,
        ]
        .into_iter()
        .find(|t| t.name() == s)
        .ok_or_else(|| Error::config(format!("unknown task `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Generated per seed; the run seed is added to the spec seed.
    Synthetic(SyntheticSpec),
    File(PathBuf),
}

/// Where the demonic model comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DemonicSource {
    /// Trained on this stratified fraction of the training split.
    Fraction(f64),
    /// Trained on another dataset file sharing the sensitive attribute.
    External(PathBuf),
    /// A saved model file.
    Checkpoint(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub task: Task,
    pub data: DataSource,
    pub split: Vec<f64>,
    pub train: TrainConfig,
    pub demonic: DemonicConfig,
    pub demonic_source: DemonicSource,
    /// Key overrides turning the task's synthetic spec into the demonic
    /// transfer domain.
    pub transfer_overrides: Vec<(String, String)>,
    pub betas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub probe: Option<ProbeConfig>,
}

impl ExperimentSpec {
    /// Defaults for `task`: full-size networks and schedules.
    pub fn new(task: Task) -> Self {
        Self {
            task,
            data: DataSource::Synthetic(SyntheticSpec::default()),
            split: vec![0.8, 0.1, 0.1],
            train: TrainConfig::default(),
            demonic: DemonicConfig::default(),
            demonic_source: DemonicSource::Fraction(0.1),
            transfer_overrides: Vec::new(),
            betas: vec![1.0, 5.0, 10.0, 20.0],
            seeds: vec![0],
            out: None,
            probe: Some(ProbeConfig::default()),
        }
    }

    /// Synthetic spec of the transfer domain: different class directions,
    /// same group directions, no label/attribute coupling, then the
    /// `transfer.*` overrides.
    pub fn transfer_spec(&self) -> Result<SyntheticSpec> {
        let DataSource::Synthetic(base) = &self.data else {
            return Err(Error::config("demonic transfer needs a synthetic task dataset"));
        };
        let mut spec = SyntheticSpec {
            class_direction_seed: base.class_direction_seed.wrapping_add(1000),
            seed: base.seed.wrapping_add(1000),
            correlation: 0.0,
            ..base.clone()
        };
        for (k, v) in &self.transfer_overrides {
            set_synthetic(&mut spec, k, v, "transfer")?;
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.demonic.network.validate("demonic")?;
        if self.seeds.is_empty() {
            return Err(Error::config("`seeds` must list at least one seed"));
        }
        if self.split.len() != 3 {
            return Err(Error::config("`split` needs three fractions (train, validation, test)"));
        }
        let total: f64 = self.split.iter().sum();
        if self.split.iter().any(|&f| !(f > 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("`split` fractions must be positive and sum to 1, got {:?}", self.split)));
        }
        match &self.data {
            DataSource::Synthetic(s) => s.validate()?,
            DataSource::File(p) => require_file(p, "data")?,
        }
        match &self.demonic_source {
            DemonicSource::Fraction(f) if !(*f > 0.0 && *f <= 1.0) => {
                return Err(Error::config(format!("`demonic.fraction` must lie in (0, 1], got {f}")));
            }
            DemonicSource::External(p) | DemonicSource::Checkpoint(p) => require_file(p, "demonic.path")?,
            DemonicSource::Fraction(_) => {}
        }
        if self.task == Task::DemonicTransfer {
            self.transfer_spec()?.validate()?;
        }
        if self.task == Task::BetaSweep && self.betas.is_empty() {
            return Err(Error::config("`sweep.betas` must list at least one value"));
        }
        if self.betas.iter().any(|b| !(*b >= 0.0) || !b.is_finite()) {
            return Err(Error::config("`sweep.betas` must be finite and >= 0"));
        }
        Ok(())
    }

    /// Every setting as `key=value` lines; parsing the text gives back an
    /// equal spec.
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        put("task", self.task.to_string());
        put("seeds", join(&self.seeds));
        if let Some(o) = &self.out {
            put("out", o.display().to_string());
        }
        put("split", join(&self.split));
        match &self.data {
            DataSource::File(p) => put("data", p.display().to_string()),
            DataSource::Synthetic(s) => {
                for (k, v) in synthetic_pairs(s) {
                    put(&format!("synthetic.{k}"), v);
                }
            }
        }
        for (k, v) in &self.transfer_overrides {
            put(&format!("transfer.{k}"), v.clone());
        }
        let t = &self.train;
        put("epochs", t.epochs.to_string());
        put("n_critic", t.n_critic.to_string());
        put("n_classifier", t.n_classifier.to_string());
        put("batch_size", t.batch_size.to_string());
        put("beta", t.beta.to_string());
        put("clamp", t.clamp.to_string());
        put("clamp_biases", t.clamp_biases.to_string());
        put("derangement", t.derangement.to_string());
        put("patience", t.patience.to_string());
        for (prefix, net) in [("classifier", &t.classifier), ("critic", &t.critic), ("demonic", &self.demonic.network)] {
            put(&format!("{prefix}.hidden"), join(&net.hidden));
            put(&format!("{prefix}.activation"), net.activation.to_string());
            put(&format!("{prefix}.optimizer"), net.optimizer.kind.to_string());
            put(&format!("{prefix}.lr"), net.optimizer.lr.to_string());
        }
        put("classifier.layer", t.classifier_layer.to_string());
        put("demonic.layer", t.demonic_layer.to_string());
        put("demonic.mode", t.demonic_mode.to_string());
        put("demonic.epochs", self.demonic.fit.epochs.to_string());
        put("demonic.patience", self.demonic.fit.patience.to_string());
        put("demonic.batch_size", self.demonic.fit.batch_size.to_string());
        match &self.demonic_source {
            DemonicSource::Fraction(f) => {
                put("demonic.source", "fraction".into());
                put("demonic.fraction", f.to_string());
            }
            DemonicSource::External(p) => {
                put("demonic.source", "external".into());
                put("demonic.path", p.display().to_string());
            }
            DemonicSource::Checkpoint(p) => {
                put("demonic.source", "checkpoint".into());
                put("demonic.path", p.display().to_string());
            }
        }
        put("sweep.betas", join(&self.betas));
        match &self.probe {
            None => put("leakage", "false".into()),
            Some(p) => {
                put("leakage", "true".into());
                put("probe.hidden", join(&p.hidden));
                put("probe.activation", p.activation.to_string());
                put("probe.lr", p.optimizer.lr.to_string());
                put("probe.epochs", p.fit.epochs.to_string());
                put("probe.patience", p.fit.patience.to_string());
                put("probe.batch_size", p.fit.batch_size.to_string());
                put("probe.train_fraction", p.train_fraction.to_string());
            }
        }
        out
    }
}

fn require_file(p: &std::path::Path, key: &str) -> Result<()> {
    if !p.is_file() {
        return Err(Error::config(format!("`{key}`: no such file {}", p.display())));
    }
    Ok(())
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn synthetic_pairs(s: &SyntheticSpec) -> Vec<(&'static str, String)> {
    vec![
        ("n_per_cell", s.n_per_cell.to_string()),
        ("d", s.d.to_string()),
        ("classes", s.n_classes.to_string()),
        ("groups", s.n_groups.to_string()),
        ("class_separation", s.class_separation.to_string()),
        ("bias_strength", s.bias_strength.to_string()),
        ("noise_std", s.noise_std.to_string()),
        ("correlation", s.correlation.to_string()),
        ("seed", s.seed.to_string()),
        ("class_direction_seed", s.class_direction_seed.to_string()),
        ("group_direction_seed", s.group_direction_seed.to_string()),
    ]
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(format!("`{key}`: cannot parse `{v}`")))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|item| value(key, item.trim())).collect()
}

fn with_key<T>(key: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config(m) if !m.contains(&format!("`{key}`")) => Error::config(format!("`{key}`: {m}")),
        other => other,
    })
}

fn set_synthetic(s: &mut SyntheticSpec, field: &str, v: &str, prefix: &str) -> Result<()> {
    let key = format!("{prefix}.{field}");
    match field {
        "n_per_cell" => s.n_per_cell = value(&key, v)?,
        "d" => s.d = value(&key, v)?,
        "classes" => s.n_classes = value(&key, v)?,
        "groups" => s.n_groups = value(&key, v)?,
        "class_separation" => s.class_separation = value(&key, v)?,
        "bias_strength" => s.bias_strength = value(&key, v)?,
        "noise_std" => s.noise_std = value(&key, v)?,
        "correlation" => s.correlation = value(&key, v)?,
        "seed" => s.seed = value(&key, v)?,
        "class_direction_seed" => s.class_direction_seed = value(&key, v)?,
        "group_direction_seed" => s.group_direction_seed = value(&key, v)?,
        _ => return Err(Error::config(format!("unknown key `{key}`"))),
    }
    Ok(())
}

fn set_network(net: &mut NetworkSpec, field: &str, v: &str, key: &str) -> Result<bool> {
    match field {
        "hidden" => net.hidden = list(key, v)?,
        "activation" => net.activation = with_key(key, v.parse::<Activation>())?,
        "optimizer" => {
            let kind: OptimizerKind = with_key(key, v.parse())?;
            net.optimizer = OptimizerSpec::with_kind(kind, net.optimizer.lr);
        }
        "lr" => net.optimizer.lr = value(key, v)?,
        _ => return Ok(false),
    }
    Ok(true)
}

#[derive(Default)]
struct PendingDemonic {
    source: Option<String>,
    fraction: Option<f64>,
    path: Option<PathBuf>,
}

fn apply(spec: &mut ExperimentSpec, pending: &mut PendingDemonic, key: &str, v: &str) -> Result<()> {
    let t = &mut spec.train;
    match key {
        "task" => spec.task = with_key(key, v.parse())?,
        "seed" => spec.seeds = vec![value(key, v)?],
        "seeds" => spec.seeds = list(key, v)?,
        "out" => spec.out = Some(PathBuf::from(v)),
        "data" => spec.data = DataSource::File(PathBuf::from(v)),
        "split" => spec.split = list(key, v)?,
        "leakage" => {
            let on: bool = value(key, v)?;
            spec.probe = match (on, spec.probe.take()) {
                (true, Some(p)) => Some(p),
                (true, None) => Some(ProbeConfig::default()),
                (false, _) => None,
            };
        }
        "epochs" => t.epochs = value(key, v)?,
        "n_critic" => t.n_critic = value(key, v)?,
        "n_classifier" => t.n_classifier = value(key, v)?,
        "batch_size" => t.batch_size = value(key, v)?,
        "beta" => t.beta = value(key, v)?,
        "clamp" => t.clamp = value(key, v)?,
        "clamp_biases" => t.clamp_biases = value(key, v)?,
        "derangement" => t.derangement = value(key, v)?,
        "patience" => t.patience = value(key, v)?,
        "layer" => {
            let sel: LayerSelector = with_key(key, v.parse())?;
            t.classifier_layer = sel;
            t.demonic_layer = sel;
            spec.demonic.layer = sel;
        }
        "classifier.layer" => t.classifier_layer = with_key(key, v.parse())?,
        "demonic.layer" => {
            t.demonic_layer = with_key(key, v.parse())?;
            spec.demonic.layer = t.demonic_layer;
        }
        "demonic.mode" => t.demonic_mode = with_key(key, v.parse::<DemonicMode>())?,
        "demonic.epochs" => spec.demonic.fit.epochs = value(key, v)?,
        "demonic.patience" => spec.demonic.fit.patience = value(key, v)?,
        "demonic.batch_size" => spec.demonic.fit.batch_size = value(key, v)?,
        "demonic.source" => pending.source = Some(v.to_owned()),
        "demonic.fraction" => pending.fraction = Some(value(key, v)?),
        "demonic.path" => pending.path = Some(PathBuf::from(v)),
        "sweep.betas" => spec.betas = list(key, v)?,
        _ => {
            let (prefix, field) = key
                .split_once('.')
                .ok_or_else(|| Error::config(format!("unknown key `{key}`")))?;
            let handled = match prefix {
                "classifier" => set_network(&mut t.classifier, field, v, key)?,
                "critic" => set_network(&mut t.critic, field, v, key)?,
                "demonic" => set_network(&mut spec.demonic.network, field, v, key)?,
                "synthetic" => {
                    if !matches!(spec.data, DataSource::Synthetic(_)) {
                        spec.data = DataSource::Synthetic(SyntheticSpec::default());
                    }
                    let DataSource::Synthetic(s) = &mut spec.data else { unreachable!() };
                    set_synthetic(s, field, v, prefix)?;
                    true
                }
                "transfer" => {
                    set_synthetic(&mut SyntheticSpec::default(), field, v, prefix)?;
                    spec.transfer_overrides.retain(|(k, _)| k != field);
                    spec.transfer_overrides.push((field.to_owned(), v.to_owned()));
                    true
                }
                "probe" => {
                    let p = spec.probe.get_or_insert_with(ProbeConfig::default);
                    match field {
                        "hidden" => p.hidden = list(key, v)?,
                        "activation" => p.activation = with_key(key, v.parse())?,
                        "lr" => p.optimizer.lr = value(key, v)?,
                        "epochs" => p.fit.epochs = value(key, v)?,
                        "patience" => p.fit.patience = value(key, v)?,
                        "batch_size" => p.fit.batch_size = value(key, v)?,
                        "train_fraction" => p.train_fraction = value(key, v)?,
                        _ => return Err(Error::config(format!("unknown key `{key}`"))),
                    }
                    true
                }
                _ => false,
            };
            if !handled {
                return Err(Error::config(format!("unknown key `{key}`")));
            }
        }
    }
    Ok(())
}

/// Parses flat `key=value` text (with `#` comments), then applies
/// `overrides` in order. `task` must be set by one of the two.
pub fn parse_config(text: &str, overrides: &[(String, String)]) -> Result<ExperimentSpec> {
    let mut pairs = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}: expected key=value, got `{line}`", no + 1)))?;
        pairs.push((k.trim().to_owned(), v.trim().to_owned()));
    }
    pairs.extend(overrides.iter().cloned());
    if !pairs.iter().any(|(k, _)| k == "task") {
        return Err(Error::config("missing required key `task`"));
    }

    let mut spec = ExperimentSpec::new(Task::FairClassification);
    let mut pending = PendingDemonic::default();
    for (k, v) in &pairs {
        apply(&mut spec, &mut pending, k, v)?;
    }
    spec.demonic_source = match pending.source.as_deref() {
        None | Some("fraction") => DemonicSource::Fraction(pending.fraction.unwrap_or(0.1)),
        Some(kind @ ("external" | "checkpoint")) => {
            let path = pending
                .path
                .ok_or_else(|| Error::config(format!("`demonic.path` is required for demonic.source={kind}")))?;
            if kind == "external" {
                DemonicSource::External(path)
            } else {
                DemonicSource::Checkpoint(path)
            }
        }
        Some(other) => return Err(Error::config(format!("`demonic.source`: unknown source `{other}`"))),
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task_flag() -> Vec<(String, String)> {
        vec![("task".into(), "fair_classification".into())]
    }

    #[test]
    fn empty_config_gives_table_defaults() {
        let spec = parse_config("", &task_flag()).unwrap();
        let t = &spec.train;
        assert_eq!((t.beta, t.n_critic, t.n_classifier, t.clamp), (1.0, 5, 20, 0.01));
        assert_eq!(t.classifier.hidden, vec![300]);
        assert_eq!(t.classifier.activation, Activation::Tanh);
        assert_eq!(t.critic.hidden, vec![512]);
        assert_eq!(t.critic.activation, Activation::Relu);
        assert_eq!(t.critic.optimizer, OptimizerSpec::rmsprop(5e-5));
        assert_eq!(t.classifier.optimizer, OptimizerSpec::adam(1e-4));
        assert_eq!(t.batch_size, 128);
    }

    #[test]
    fn overrides_and_errors() {
        let spec = parse_config("beta=2.5 # stronger\ncritic.lr=1e-3\n", &task_flag()).unwrap();
        assert_eq!(spec.train.beta, 2.5);
        assert_eq!(spec.train.critic.optimizer.lr, 1e-3);
        let flags = vec![("task".into(), "beta_sweep".into()), ("beta".into(), "3".into())];
        assert_eq!(parse_config("beta=2.5", &flags).unwrap().train.beta, 3.0);

        for (text, needle) in [
            ("beta=banana", "beta"),
            ("colour=red", "colour"),
            ("critic.depth=3", "critic.depth"),
            ("synthetic.correlation=2", "correlation"),
            ("classifier.layer=middle", "classifier.layer"),
            ("demonic.source=checkpoint", "demonic.path"),
        ] {
            let err = parse_config(text, &task_flag()).unwrap_err();
            assert!(matches!(&err, Error::Config(m) if m.contains(needle)), "{text}: {err}");
        }
        assert!(matches!(parse_config("beta=1", &[]), Err(Error::Config(m)) if m.contains("task")));
    }

    #[test]
    fn config_text_round_trips() {
        let text = "task=layer_ablation\nseeds=3,4\nbeta=0.5\nclassifier.hidden=16,8\ntransfer.bias_strength=2\n\
                    probe.hidden=12\nsynthetic.d=10\nlayer=first_hidden\ndemonic.mode=hard_label\n";
        let spec = parse_config(text, &[]).unwrap();
        assert_eq!(spec.seeds, vec![3, 4]);
        assert_eq!(spec.train.classifier_layer, LayerSelector::FirstHidden);
        let again = parse_config(&spec.to_config_text(), &[]).unwrap();
        assert_eq!(again, spec);
        assert_eq!(spec.transfer_spec().unwrap().bias_strength, 2.0);
    }
}
