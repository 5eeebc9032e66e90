//! Experiment protocols: configuration, multi-seed runs, reports.

mod config;
mod report;
mod run;
mod selftest;

pub use config::{parse_config, DataSource, DemonicSource, ExperimentSpec, Task};
pub use report::{
    compare_reports, ranks, spearman, ArmReport, Comparison, ComparisonRow, Metric, RunReport, SeedResult, Summary,
    UtopiaPolicy,
};
pub use run::{evaluate_classifier, load_run, run_experiment, task_dataset, train_demonic_on, Arm, ArmKind};
pub use selftest::{
    gradcheck_critic_objective, gradcheck_cross_entropy, gradcheck_full_loss, selftest, SelfTestResult,
};
