use std::fs;
use std::path::Path;
use std::time::Instant;

use super::config::{DataSource, DemonicSource, ExperimentSpec, Task};
use super::report::{ArmReport, RunReport, SeedResult};
use crate::datagen::{generate_synthetic, load_dataset, split, EmbeddingDataset};
use crate::error::{Error, Result};
use crate::fairmetrics::{leakage, FairnessReport, PredictionSet, ProbeConfig};
use crate::neural::{load_model, predict_labels, save_model, Mlp};
use crate::rng;
use crate::training::{
    extract_representation, pretrain_demonic, train_ce, train_wfc, DemonicConfig, DemonicModel, LayerSelector,
    TrainConfig, TrainOutcome,
};

const STREAM_SPLIT: u64 = 10;
const STREAM_DEMONIC: u64 = 11;
const STREAM_PROBE: u64 = 12;
const STREAM_DEMONIC_SPLIT: u64 = 13;
const STREAM_PROBE_SPLIT: u64 = 14;

/// Share of a demonic training set held back for its early stopping.
const DEMONIC_HELDOUT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArmKind {
    CrossEntropy,
    Wfc,
    /// WFC with the demonic model pretrained on the transfer domain.
    WfcTransferred,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arm {
    pub name: String,
    pub kind: ArmKind,
    pub config: TrainConfig,
}

impl ExperimentSpec {
    /// The configurations compared by the task, all sharing seeds.
    pub fn arms(&self) -> Vec<Arm> {
        let base = &self.train;
        let arm = |name: String, kind, config| Arm { name, kind, config };
        match self.task {
            Task::FairClassification => vec![
                arm("ce".into(), ArmKind::CrossEntropy, base.clone()),
                arm("wfc".into(), ArmKind::Wfc, base.clone()),
            ],
            Task::DemonicTransfer => vec![
                arm("wfc_in_domain".into(), ArmKind::Wfc, base.clone()),
                arm("wfc_transferred".into(), ArmKind::WfcTransferred, base.clone()),
            ],
            Task::LayerAblation => LayerSelector::ALL
                .iter()
                .map(|&sel| {
                    let config = TrainConfig {
                        classifier_layer: sel,
                        demonic_layer: sel,
                        ..base.clone()
                    };
                    arm(sel.to_string(), ArmKind::Wfc, config)
                })
                .collect(),
            Task::HardLabelAblation => [crate::training::DemonicMode::Latent, crate::training::DemonicMode::HardLabel]
                .iter()
                .map(|&mode| {
                    let config = TrainConfig {
                        demonic_mode: mode,
                        ..base.clone()
                    };
                    arm(mode.to_string(), ArmKind::Wfc, config)
                })
                .collect(),
            Task::BetaSweep => self
                .betas
                .iter()
                .map(|&beta| {
                    let config = TrainConfig { beta, ..base.clone() };
                    arm(format!("beta_{beta}"), ArmKind::Wfc, config)
                })
                .collect(),
        }
    }
}

/// Task dataset for one seed. Synthetic data is regenerated with the run
/// seed added to the spec seed.
pub fn task_dataset(spec: &ExperimentSpec, seed: u64) -> Result<EmbeddingDataset<f64>> {
    match &spec.data {
        DataSource::Synthetic(s) => {
            let mut s = s.clone();
            s.seed = s.seed.wrapping_add(seed);
            generate_synthetic(&s)
        }
        DataSource::File(p) => load_dataset(p),
    }
}

/// Pretrains a demonic model on all of `ds`, holding back a stratified
/// tenth for early stopping.
pub fn train_demonic_on(ds: &EmbeddingDataset<f64>, config: &DemonicConfig, seed: u64) -> Result<DemonicModel<f64>> {
    let parts = split(ds, &[1.0 - DEMONIC_HELDOUT, DEMONIC_HELDOUT], rng::derive(seed, STREAM_DEMONIC_SPLIT))?;
    let config = seeded_demonic(config, seed);
    pretrain_demonic(&parts[0], &parts[1], &config)
}

fn seeded_demonic(config: &DemonicConfig, seed: u64) -> DemonicConfig {
    let mut c = config.clone();
    c.fit.seed = rng::derive(seed, STREAM_DEMONIC);
    c
}

struct Prepared {
    train: EmbeddingDataset<f64>,
    val: EmbeddingDataset<f64>,
    test: EmbeddingDataset<f64>,
    demonic: Option<DemonicModel<f64>>,
    transferred: Option<DemonicModel<f64>>,
}

fn prepare(spec: &ExperimentSpec, arms: &[Arm], seed: u64) -> Result<Prepared> {
    let ds = task_dataset(spec, seed)?;
    let mut parts = split(&ds, &spec.split, rng::derive(seed, STREAM_SPLIT))?.into_iter();
    let (train, val, test) = (parts.next().unwrap(), parts.next().unwrap(), parts.next().unwrap());

    let demonic = if arms.iter().any(|a| a.kind == ArmKind::Wfc) {
        Some(match &spec.demonic_source {
            DemonicSource::Fraction(f) => {
                let subset = if *f >= 1.0 {
                    train.clone()
                } else {
                    split(&train, &[*f, 1.0 - f], rng::derive(seed, STREAM_DEMONIC_SPLIT))?.swap_remove(0)
                };
                pretrain_demonic(&subset, &val, &seeded_demonic(&spec.demonic, seed))?
            }
            DemonicSource::External(p) => train_demonic_on(&load_dataset(p)?, &spec.demonic, seed)?,
            DemonicSource::Checkpoint(p) => {
                let net: Mlp<f64> = load_model(p)?;
                DemonicModel::from_params(net, spec.demonic.layer, f64::NAN)?
            }
        })
    } else {
        None
    };
    let transferred = if arms.iter().any(|a| a.kind == ArmKind::WfcTransferred) {
        let mut domain = spec.transfer_spec()?;
        domain.seed = domain.seed.wrapping_add(seed);
        Some(train_demonic_on(&generate_synthetic(&domain)?, &spec.demonic, seed)?)
    } else {
        None
    };
    Ok(Prepared {
        train,
        val,
        test,
        demonic,
        transferred,
    })
}

/// Test-split metrics of a trained classifier. Leakage is probed on its
/// last hidden layer (logits when it has none).
pub fn evaluate_classifier(
    classifier: &Mlp<f64>,
    test: &EmbeddingDataset<f64>,
    probe: Option<&ProbeConfig>,
    seed: u64,
) -> Result<FairnessReport> {
    let pred = predict_labels(classifier, test.features())?;
    let ps = PredictionSet::new(pred, test.labels().to_vec(), test.groups().to_vec(), test.n_classes(), test.n_groups())?;
    let mut report = FairnessReport::evaluate(&ps)?;
    if let Some(p) = probe {
        let sel = if classifier.hidden_count() > 0 {
            LayerSelector::LastHidden
        } else {
            LayerSelector::Logits
        };
        let z = extract_representation(classifier, test.features(), sel)?;
        let mut p = p.clone();
        p.fit.seed = rng::derive(seed, STREAM_PROBE);
        report.leakage = Some(leakage(&z, test.groups(), test.n_groups(), &p, rng::derive(seed, STREAM_PROBE_SPLIT))?);
    }
    Ok(report)
}

fn run_arm(spec: &ExperimentSpec, arm: &Arm, data: &Prepared, seed: u64) -> Result<(SeedResult, TrainOutcome<f64>)> {
    let mut config = arm.config.clone();
    config.seed = seed;
    let demonic = match arm.kind {
        ArmKind::CrossEntropy => None,
        ArmKind::Wfc => data.demonic.clone(),
        ArmKind::WfcTransferred => data.transferred.clone(),
    }
    .map(|d| d.with_layer(config.demonic_layer))
    .transpose()?;
    let outcome = match &demonic {
        None => train_ce(&data.train, &data.val, &config)?,
        Some(d) => train_wfc(&data.train, &data.val, d, &config)?,
    };
    let mut report = evaluate_classifier(&outcome.classifier, &data.test, spec.probe.as_ref(), seed)?;
    if let Some(d) = &demonic {
        report.demonic_accuracy = Some(d.accuracy_on(&data.test)?);
    }
    let result = SeedResult {
        seed,
        report,
        epochs_run: outcome.history.records.len(),
        best_epoch: outcome.history.best_epoch,
    };
    Ok((result, outcome))
}

fn write_arm_files(dir: &Path, seed: u64, outcome: &TrainOutcome<f64>) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(format!("history_{seed}.csv")), outcome.history.to_csv())?;
    save_model(&outcome.classifier, dir.join(format!("model_{seed}.wfc")))
}

/// Runs every arm of the task for every seed. A failing seed is recorded
/// on its arm and the remaining work continues. With `spec.out` set,
/// writes `report.txt`, `report.csv`, `config.txt` and per-arm
/// `history_<seed>.csv` / `model_<seed>.wfc`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunReport> {
    spec.validate()?;
    let start = Instant::now();
    let arms = spec.arms();
    let mut reports: Vec<ArmReport> = arms.iter().map(|a| ArmReport::new(a.name.clone())).collect();
    if let Some(out) = &spec.out {
        fs::create_dir_all(out)?;
    }

    for &seed in &spec.seeds {
        let data = match prepare(spec, &arms, seed) {
            Ok(d) => d,
            Err(e) => {
                log::warn!("seed {seed}: {e}");
                for r in &mut reports {
                    r.failures.push((seed, e.to_string()));
                }
                continue;
            }
        };
        for (arm, report) in arms.iter().zip(&mut reports) {
            log::info!("seed {seed}: arm {}", arm.name);
            let attempt = run_arm(spec, arm, &data, seed).and_then(|(result, outcome)| {
                if let Some(out) = &spec.out {
                    write_arm_files(&out.join(&arm.name), seed, &outcome)?;
                }
                Ok(result)
            });
            match attempt {
                Ok(result) => report.results.push(result),
                Err(e) => {
                    log::warn!("seed {seed}, arm {}: {e}", arm.name);
                    report.failures.push((seed, e.to_string()));
                }
            }
        }
    }

    let mut run = RunReport {
        task: spec.task,
        arms: reports,
        config_echo: spec.to_config_text(),
        wall_clock: start.elapsed(),
    };
    if let Some(u) = run.best_observed_utopia() {
        for arm in &mut run.arms {
            for r in &mut arm.results {
                r.report = r.report.clone().with_dto(&u);
            }
        }
    }
    if let Some(out) = &spec.out {
        fs::write(out.join("report.csv"), run.to_csv())?;
        fs::write(out.join("report.txt"), run.to_text())?;
        fs::write(out.join("config.txt"), &run.config_echo)?;
    }
    Ok(run)
}

/// Reads `report.csv` and `config.txt` from a finished run directory.
pub fn load_run(dir: &Path) -> Result<RunReport> {
    let config_echo = fs::read_to_string(dir.join("config.txt"))?;
    let spec = super::config::parse_config(&config_echo, &[]).or_else(|_| {
        // referenced files may have moved since the run; the task is all we need
        let task = config_echo
            .lines()
            .find_map(|l| l.strip_prefix("task="))
            .ok_or_else(|| Error::data(format!("{}: config.txt has no task", dir.display())))?;
        Ok::<_, Error>(ExperimentSpec::new(task.trim().parse()?))
    })?;
    let mut report = RunReport::from_csv(spec.task, &fs::read_to_string(dir.join("report.csv"))?)?;
    report.config_echo = config_echo;
    Ok(report)
}
