use proptest::prelude::*;
use rand::Rng as _;
use wfc::datagen::{
    batches, generate_synthetic, read_dataset, split, split_indices, write_dataset, BatchPlan, DatasetFormat,
    EmbeddingDataset, SyntheticSpec,
};
use wfc::fairmetrics::{leakage, ProbeConfig};
use wfc::harness::{parse_config, run_experiment, Metric, Summary};
use wfc::neural::{save_model, Activation, FitConfig, Mlp};
use wfc::training::{pretrain_demonic, train_wfc, DemonicConfig, NetworkSpec, TrainConfig};
use wfc::{rng, Matrix};

fn random_dataset(n: usize, seed: u64) -> EmbeddingDataset<f64> {
    let mut r = rng::seeded(seed);
    let x = Matrix::from_vec(n, 3, (0..n * 3).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
    let y = (0..n).map(|_| r.random_range(0..3)).collect();
    let s = (0..n).map(|_| r.random_range(0..2)).collect();
    EmbeddingDataset::new(x, y, s, 3, 2).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn splits_partition_the_rows(n in 1usize..300, seed in any::<u64>(), a in 0.1f64..0.8) {
        let ds = random_dataset(n, seed);
        let parts = split_indices(&ds, &[a, (1.0 - a) / 2.0, (1.0 - a) / 2.0], seed).unwrap();
        let mut all: Vec<usize> = parts.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn batches_cover_every_row_once(n in 2usize..500, bs in 2usize..64, seed in any::<u64>(), epoch in 0u64..5) {
        let plan = BatchPlan::new(bs, seed).unwrap();
        let mut all: Vec<usize> = batches(n, &plan, epoch).concat();
        all.sort_unstable();
        // a trailing single row cannot form a batch
        let expected = if n % bs == 1 && n > 1 { n - 1 } else { n };
        prop_assert_eq!(all.len(), expected);
        all.dedup();
        prop_assert_eq!(all.len(), expected);
    }

    #[test]
    fn dataset_files_round_trip(n in 1usize..40, seed in any::<u64>(), binary in any::<bool>()) {
        let ds = random_dataset(n, seed);
        let format = if binary { DatasetFormat::Binary } else { DatasetFormat::Text };
        let mut bytes = Vec::new();
        write_dataset(&ds, format, &mut bytes).unwrap();
        let back: EmbeddingDataset<f64> = read_dataset(&bytes[..]).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn summaries_match_recomputation(values in prop::collection::vec(-100.0f64..100.0, 1..12)) {
        let s = Summary::of(&values).unwrap();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        prop_assert!((s.mean - mean).abs() <= 1e-12);
        prop_assert!((s.std - var.sqrt()).abs() <= 1e-12);
    }

    #[test]
    fn config_text_round_trips(
        beta in 0.0f64..50.0,
        clamp in 1e-3f64..1.0,
        hidden in prop::collection::vec(1usize..64, 1..3),
        seeds in prop::collection::vec(0u64..100, 1..4),
    ) {
        let seeds_text = seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
        let hidden_text = hidden.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let text = format!(
            "task=beta_sweep\nbeta={beta}\nclamp={clamp}\nclassifier.hidden={hidden_text}\nseeds={seeds_text}\n"
        );
        let spec = parse_config(&text, &[]).unwrap();
        prop_assert_eq!(spec.train.beta, beta);
        prop_assert_eq!(&spec.train.classifier.hidden, &hidden);
        prop_assert_eq!(parse_config(&spec.to_config_text(), &[]).unwrap(), spec);
    }
}

/// Probe accuracy for `s` on the raw features does not fall as the group
/// signal strengthens.
#[test]
fn stronger_bias_leaks_more() {
    let probe = ProbeConfig {
        hidden: vec![16],
        fit: FitConfig {
            epochs: 60,
            ..FitConfig::default()
        },
        ..ProbeConfig::default()
    };
    let mut means = Vec::new();
    for bias in [0.0, 0.5, 1.0, 2.0] {
        let mut total = 0.0;
        for seed in 0..3 {
            let ds = generate_synthetic::<f64>(&SyntheticSpec {
                n_per_cell: 300,
                d: 16,
                bias_strength: bias,
                correlation: 0.0,
                seed,
                ..SyntheticSpec::default()
            })
            .unwrap();
            total += leakage(ds.features(), ds.groups(), 2, &probe, seed).unwrap();
        }
        means.push(total / 3.0);
    }
    assert!(means.windows(2).all(|w| w[0] <= w[1]), "{means:?}");
    assert!(means[0] < 60.0 && means[3] > 90.0, "{means:?}");
}

fn small_setup() -> (Vec<EmbeddingDataset<f64>>, TrainConfig, DemonicConfig) {
    let ds = generate_synthetic::<f64>(&SyntheticSpec {
        n_per_cell: 150,
        d: 8,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let parts = split(&ds, &[0.6, 0.2, 0.2], 9).unwrap();
    let small = |hidden| NetworkSpec {
        hidden: vec![hidden],
        ..NetworkSpec::classifier_default()
    };
    let train = TrainConfig {
        epochs: 8,
        classifier: small(8),
        critic: NetworkSpec {
            hidden: vec![16],
            ..NetworkSpec::critic_default()
        },
        seed: 4,
        ..TrainConfig::default()
    };
    let demonic = DemonicConfig {
        network: NetworkSpec {
            optimizer: wfc::neural::OptimizerSpec::adam(1e-3),
            ..small(8)
        },
        ..DemonicConfig::default()
    };
    (parts, train, demonic)
}

#[test]
fn training_leaves_demonic_untouched_and_repeats_exactly() {
    let (parts, config, demonic_cfg) = small_setup();
    let demonic = pretrain_demonic(&parts[0], &parts[1], &demonic_cfg).unwrap();
    let before = demonic.params().to_flat();
    let a = train_wfc(&parts[0], &parts[1], &demonic, &config).unwrap();
    assert_eq!(demonic.params().to_flat(), before);
    let b = train_wfc(&parts[0], &parts[1], &demonic, &config).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.classifier, b.classifier);
    for r in &a.history.records {
        assert_eq!((r.critic_steps, r.classifier_steps), (config.n_critic, config.n_classifier));
        assert!(r.critic_max_abs <= config.clamp);
    }
}

fn tiny_spec(task: &str, extra: &str) -> String {
    format!(
        "task={task}\nseeds=1,2\nsynthetic.n_per_cell=120\nsynthetic.d=8\nepochs=4\n\
         classifier.hidden=8\ncritic.hidden=16\ndemonic.hidden=8\nprobe.hidden=8\nprobe.epochs=10\n{extra}"
    )
}

#[test]
fn experiment_writes_reports_and_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let text = tiny_spec("beta_sweep", &format!("sweep.betas=0,1,5\nout={}\n", out.display()));
    let report = run_experiment(&parse_config(&text, &[]).unwrap()).unwrap();
    assert_eq!(report.arms.len(), 3);
    for arm in &report.arms {
        assert_eq!(arm.results.len(), 2, "{}: {:?}", arm.name, arm.failures);
        let acc = arm.values(Metric::Accuracy);
        let s = arm.summary(Metric::Accuracy).unwrap();
        assert!((s.mean - acc.iter().sum::<f64>() / 2.0).abs() < 1e-12);
        assert!(arm.results.iter().all(|r| r.report.dto.is_some() && r.report.leakage.is_some()));
        for seed in [1, 2] {
            assert!(out.join(&arm.name).join(format!("history_{seed}.csv")).is_file());
            assert!(out.join(&arm.name).join(format!("model_{seed}.wfc")).is_file());
        }
    }
    for f in ["report.txt", "report.csv", "config.txt"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let loaded = wfc::harness::load_run(&out).unwrap();
    assert_eq!(loaded.arms, report.arms.iter().map(|a| {
        let mut a = a.clone();
        for r in &mut a.results {
            r.report.metadata.clear();
        }
        a
    }).collect::<Vec<_>>());
}

#[test]
fn failing_seeds_are_recorded_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    // a demonic model for 5-dimensional inputs cannot read 8-dimensional rows
    let model = dir.path().join("wrong.wfc");
    save_model(&Mlp::<f64>::new(&[5, 4, 2], Activation::Tanh, 0).unwrap(), &model).unwrap();
    let text = tiny_spec(
        "fair_classification",
        &format!("demonic.source=checkpoint\ndemonic.path={}\n", model.display()),
    );
    let report = run_experiment(&parse_config(&text, &[]).unwrap()).unwrap();
    assert_eq!(report.arm("ce").unwrap().results.len(), 2);
    let wfc = report.arm("wfc").unwrap();
    assert!(wfc.results.is_empty());
    assert_eq!(wfc.failures.iter().map(|f| f.0).collect::<Vec<_>>(), vec![1, 2]);
}

#[test]
fn missing_paths_are_configuration_errors() {
    let err = parse_config("task=fair_classification\ndata=/no/such/file.txt\n", &[]).unwrap_err();
    assert!(err.is_config() && err.to_string().contains("data"), "{err}");
}
