use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use wfc::datagen::{save_dataset, DatasetFormat};
use wfc::harness::{
    compare_reports, evaluate_classifier, load_run, parse_config, run_experiment, selftest, task_dataset,
    train_demonic_on, DataSource, ExperimentSpec, RunReport, UtopiaPolicy,
};
use wfc::neural::{load_model, save_model};
use wfc::{Error, Mlp64, Result};

#[derive(Parser)]
#[command(name = "wfc", version, about = "Wasserstein fair classification on fixed embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic embedding dataset.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Destination file.
        #[arg(long = "file")]
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Pretrain a demonic model and save it.
    TrainDemonic {
        #[command(flatten)]
        common: Common,
        /// Destination model file.
        #[arg(long = "model")]
        model: PathBuf,
    },
    /// Run an experiment (the task from the config, fair_classification by default).
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a saved classifier on a dataset.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long = "model")]
        model: PathBuf,
    },
    /// Run the beta sweep.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated beta values.
        #[arg(long)]
        betas: Option<String>,
    },
    /// Compare finished runs by their output directories.
    Compare {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
    /// Run the oracle-backed invariant checks.
    Selftest,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Binary,
}

#[derive(Args, Default)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated seeds.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Saved demonic model to use instead of pretraining one.
    #[arg(long)]
    demonic: Option<PathBuf>,
    /// Dataset file instead of synthetic data.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Layer selector for both the classifier and the demonic model.
    #[arg(long)]
    layer: Option<String>,
    #[arg(long = "demonic-mode")]
    demonic_mode: Option<String>,
    /// Any config key, as KEY=VALUE; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn spec(&self, default_task: Option<&str>, extra: &[(String, String)]) -> Result<ExperimentSpec> {
        let mut text = String::new();
        if let Some(t) = default_task {
            text.push_str(&format!("task={t}\n"));
        }
        if let Some(p) = &self.config {
            text.push_str(&fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?);
        }
        let mut o: Vec<(String, String)> = Vec::new();
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            o.push((k.trim().into(), v.trim().into()));
        }
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                o.push((k.into(), v));
            }
        };
        put("task", self.task.clone());
        put("seed", self.seed.map(|s| s.to_string()));
        put("seeds", self.seeds.clone());
        put("beta", self.beta.clone());
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        put("data", self.data.as_ref().map(|p| p.display().to_string()));
        put("layer", self.layer.clone());
        put("demonic.mode", self.demonic_mode.clone());
        if let Some(p) = &self.demonic {
            put("demonic.source", Some("checkpoint".into()));
            put("demonic.path", Some(p.display().to_string()));
        }
        o.extend_from_slice(extra);
        parse_config(&text, &o)
    }
}

/// Runtime failure status when any seed of any arm failed.
fn report_outcome(report: &RunReport) -> ExitCode {
    print!("{}", report.to_text());
    let failed: usize = report.arms.iter().map(|a| a.failures.len()).sum();
    if failed > 0 {
        eprintln!("error: {failed} arm runs failed; see the report");
        return ExitCode::from(2);
    }
    ExitCode::SUCCESS
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::GenData { common, file, format } => {
            let spec = common.spec(Some("fair_classification"), &[])?;
            if !matches!(spec.data, DataSource::Synthetic(_)) {
                return Err(Error::Config("gen-data needs synthetic.* settings, not `data`".into()));
            }
            let ds = task_dataset(&spec, spec.seeds[0])?;
            let format = match format {
                Format::Text => DatasetFormat::Text,
                Format::Binary => DatasetFormat::Binary,
            };
            save_dataset(&ds, &file, format)?;
            println!("wrote {} rows of dimension {} to {}", ds.len(), ds.dim(), file.display());
        }
        Command::TrainDemonic { common, model } => {
            let spec = common.spec(Some("fair_classification"), &[])?;
            let seed = spec.seeds[0];
            let dm = train_demonic_on(&task_dataset(&spec, seed)?, &spec.demonic, seed)?;
            save_model(dm.params(), &model)?;
            println!("held-out sensitive-attribute accuracy {:.2}%", dm.heldout_accuracy());
        }
        Command::Train { common } => {
            let spec = common.spec(Some("fair_classification"), &[])?;
            return Ok(report_outcome(&run_experiment(&spec)?));
        }
        Command::Sweep { common, betas } => {
            let mut extra = vec![("task".to_string(), "beta_sweep".to_string())];
            if let Some(b) = betas {
                extra.push(("sweep.betas".into(), b));
            }
            let spec = common.spec(None, &extra)?;
            return Ok(report_outcome(&run_experiment(&spec)?));
        }
        Command::Eval { common, model } => {
            let spec = common.spec(Some("fair_classification"), &[])?;
            let seed = spec.seeds[0];
            let net: Mlp64 = load_model(&model)?;
            let report = evaluate_classifier(&net, &task_dataset(&spec, seed)?, spec.probe.as_ref(), seed)?;
            print!("{}", report.to_record());
        }
        Command::Compare { runs } => {
            let reports = runs.iter().map(|d| load_run(d)).collect::<Result<Vec<_>>>()?;
            for (i, d) in runs.iter().enumerate() {
                println!("#{} {}", i + 1, d.display());
            }
            print!("{}", compare_reports(&reports, UtopiaPolicy::BestObserved).render());
        }
        Command::Selftest => {
            let results = selftest();
            for r in &results {
                println!("[{}] {}: {}", if r.passed { "pass" } else { "FAIL" }, r.name, r.detail);
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                eprintln!("error: {failed} self-test checks failed");
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
