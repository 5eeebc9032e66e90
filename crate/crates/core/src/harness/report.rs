use std::fmt::Write as _;
use std::time::Duration;

use super::config::Task;
use crate::error::{Error, Result};
use crate::fairmetrics::{dto, FairnessReport, Utopia};

/// Sample mean and standard deviation (n − 1 denominator; 0 for one value).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Some(Self { mean, std, n })
    }

    fn render(&self, decimals: usize) -> String {
        format!("{:.*} ± {:.*}", decimals, self.mean, decimals, self.std)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Accuracy,
    Fairness,
    Gap,
    Dto,
    Leakage,
    DemonicAccuracy,
}

impl Metric {
    pub fn get(self, r: &FairnessReport) -> Option<f64> {
        match self {
            Self::Accuracy => Some(r.accuracy),
            Self::Fairness => Some(r.fairness),
            Self::Gap => Some(r.gap),
            Self::Dto => r.dto,
            Self::Leakage => r.leakage,
            Self::DemonicAccuracy => r.demonic_accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub report: FairnessReport,
    pub epochs_run: usize,
    pub best_epoch: usize,
}

/// One configuration of an experiment over all seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmReport {
    pub name: String,
    pub results: Vec<SeedResult>,
    pub failures: Vec<(u64, String)>,
}

impl ArmReport {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            results: Vec::new(),
            failures: Vec::new(),
        }
    }

    pub fn values(&self, metric: Metric) -> Vec<f64> {
        self.results.iter().filter_map(|r| metric.get(&r.report)).collect()
    }

    /// `None` when no seed produced the metric.
    pub fn summary(&self, metric: Metric) -> Option<Summary> {
        Summary::of(&self.values(metric))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub task: Task,
    pub arms: Vec<ArmReport>,
    pub config_echo: String,
    pub wall_clock: Duration,
}

const CSV_HEADER: &str = "arm,seed,accuracy,fairness,gap,dto,leakage,demonic_accuracy,epochs_run,best_epoch,eo_per_class";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

fn field<T: std::str::FromStr>(line: usize, name: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::data(format!("report line {line}: bad {name} `{v}`")))
}

fn opt_field(line: usize, name: &str, v: &str) -> Result<Option<f64>> {
    if v.is_empty() {
        Ok(None)
    } else {
        field(line, name, v).map(Some)
    }
}

impl RunReport {
    pub fn arm(&self, name: &str) -> Option<&ArmReport> {
        self.arms.iter().find(|a| a.name == name)
    }

    /// Utopia over the arms' mean accuracy and mean fairness.
    pub fn best_observed_utopia(&self) -> Option<Utopia> {
        best_observed(self.arms.iter())
    }

    /// Per-seed rows only, so the file depends on nothing but the spec
    /// and seeds.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for arm in &self.arms {
            for r in &arm.results {
                let f = &r.report;
                let eo: Vec<String> = f.eo_per_class.iter().map(|e| format!("{e:?}")).collect();
                let _ = writeln!(
                    out,
                    "{},{},{:?},{:?},{:?},{},{},{},{},{},{}",
                    arm.name,
                    r.seed,
                    f.accuracy,
                    f.fairness,
                    f.gap,
                    opt(f.dto),
                    opt(f.leakage),
                    opt(f.demonic_accuracy),
                    r.epochs_run,
                    r.best_epoch,
                    eo.join(";")
                );
            }
        }
        out
    }

    /// Reads the per-seed rows written by [`RunReport::to_csv`].
    pub fn from_csv(task: Task, text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == CSV_HEADER => {}
            _ => return Err(Error::data("report csv: missing or unexpected header")),
        }
        let mut arms: Vec<ArmReport> = Vec::new();
        for (i, line) in lines {
            let no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 11 {
                return Err(Error::data(format!("report line {no}: expected 11 columns, got {}", cols.len())));
            }
            let eo = if cols[10].is_empty() {
                Vec::new()
            } else {
                cols[10]
                    .split(';')
                    .map(|v| field(no, "eo_per_class", v))
                    .collect::<Result<Vec<f64>>>()?
            };
            let report = FairnessReport {
                accuracy: field(no, "accuracy", cols[2])?,
                fairness: field(no, "fairness", cols[3])?,
                gap: field(no, "gap", cols[4])?,
                dto: opt_field(no, "dto", cols[5])?,
                leakage: opt_field(no, "leakage", cols[6])?,
                demonic_accuracy: opt_field(no, "demonic_accuracy", cols[7])?,
                eo_per_class: eo,
                metadata: Vec::new(),
            };
            let result = SeedResult {
                seed: field(no, "seed", cols[1])?,
                report,
                epochs_run: field(no, "epochs_run", cols[8])?,
                best_epoch: field(no, "best_epoch", cols[9])?,
            };
            match arms.iter_mut().find(|a| a.name == cols[0]) {
                Some(a) => a.results.push(result),
                None => {
                    let mut a = ArmReport::new(cols[0]);
                    a.results.push(result);
                    arms.push(a);
                }
            }
        }
        Ok(Self {
            task,
            arms,
            config_echo: String::new(),
            wall_clock: Duration::ZERO,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "task: {}", self.task);
        let _ = writeln!(out, "wall clock: {:.1} s", self.wall_clock.as_secs_f64());
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<22} {:>16} {:>16} {:>16} {:>16} {:>18} {:>18}",
            "arm", "Accuracy", "Fairness", "DTO", "Leakage", "GAP", "Demonic acc"
        );
        for arm in &self.arms {
            let cell = |m: Metric, d: usize| arm.summary(m).map(|s| s.render(d)).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:<22} {:>16} {:>16} {:>16} {:>16} {:>18} {:>18}",
                arm.name,
                cell(Metric::Accuracy, 2),
                cell(Metric::Fairness, 2),
                cell(Metric::Dto, 2),
                cell(Metric::Leakage, 2),
                cell(Metric::Gap, 4),
                cell(Metric::DemonicAccuracy, 2)
            );
        }
        let failures: Vec<_> = self
            .arms
            .iter()
            .flat_map(|a| a.failures.iter().map(move |(s, m)| (a.name.as_str(), s, m)))
            .collect();
        if !failures.is_empty() {
            let _ = writeln!(out, "\nfailures:");
            for (arm, seed, msg) in failures {
                let _ = writeln!(out, "  {arm} seed {seed}: {msg}");
            }
        }
        let _ = writeln!(out, "\nconfiguration:\n{}", self.config_echo);
        out
    }
}

fn best_observed<'a>(arms: impl Iterator<Item = &'a ArmReport>) -> Option<Utopia> {
    let mut best: Option<Utopia> = None;
    for arm in arms {
        let (Some(a), Some(f)) = (arm.summary(Metric::Accuracy), arm.summary(Metric::Fairness)) else {
            continue;
        };
        best = Some(match best {
            None => Utopia {
                accuracy: a.mean,
                fairness: f.mean,
            },
            Some(u) => Utopia {
                accuracy: u.accuracy.max(a.mean),
                fairness: u.fairness.max(f.mean),
            },
        });
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UtopiaPolicy {
    /// Best mean accuracy and best mean fairness over the compared rows.
    BestObserved,
    Fixed(Utopia),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub label: String,
    pub accuracy: Summary,
    pub fairness: Summary,
    /// Distance of the mean point to the utopia.
    pub dto: f64,
    pub leakage: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub utopia: Utopia,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "utopia: accuracy {:.2}, fairness {:.2}\n",
            self.utopia.accuracy, self.utopia.fairness
        );
        let _ = writeln!(out, "{:<28} {:>16} {:>16} {:>8} {:>16}", "model", "Accuracy", "Fairness", "DTO", "Leakage");
        for r in &self.rows {
            let leak = r.leakage.map(|s| s.render(2)).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:<28} {:>16} {:>16} {:>8.2} {:>16}",
                r.label,
                r.accuracy.render(2),
                r.fairness.render(2),
                r.dto,
                leak
            );
        }
        out
    }
}

/// One row per arm of every report, each with its DTO to the utopia.
/// Arms without any successful seed are skipped. Labels gain a `#i `
/// prefix when several reports are compared.
pub fn compare_reports(reports: &[RunReport], policy: UtopiaPolicy) -> Comparison {
    let utopia = match policy {
        UtopiaPolicy::Fixed(u) => u,
        UtopiaPolicy::BestObserved => best_observed(reports.iter().flat_map(|r| r.arms.iter())).unwrap_or(Utopia {
            accuracy: 100.0,
            fairness: 100.0,
        }),
    };
    let mut rows = Vec::new();
    for (i, report) in reports.iter().enumerate() {
        for arm in &report.arms {
            let (Some(accuracy), Some(fairness)) = (arm.summary(Metric::Accuracy), arm.summary(Metric::Fairness)) else {
                continue;
            };
            let label = if reports.len() > 1 {
                format!("#{} {}", i + 1, arm.name)
            } else {
                arm.name.clone()
            };
            rows.push(ComparisonRow {
                label,
                accuracy,
                fairness,
                dto: dto(accuracy.mean, fairness.mean, &utopia),
                leakage: arm.summary(Metric::Leakage),
            });
        }
    }
    Comparison { utopia, rows }
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; 0 when either side is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::shape(format!(
            "spearman needs two equal-length series of at least 2 values, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx).powi(2);
        vy += (b - my).powi(2);
    }
    if vx == 0.0 || vy == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (vx * vy).sqrt())
}
