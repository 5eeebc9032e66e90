//! Group-fairness evaluation: accuracy, Equality of Opportunity per class,
//! the GAP aggregate, distance to a utopia point, and probe-based leakage.
//!
//! Accuracy, fairness (`100·(1 − GAP)`), DTO and leakage all live on the
//! 0–100 scale; EO and GAP stay on the 0–1 scale.

use std::fmt::Write as _;

use crate::datagen::{split_indices, EmbeddingDataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::neural::{accuracy_percent, fit_classifier, predict_labels, Activation, FitConfig, Mlp, OptimizerSpec};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    predicted: Vec<usize>,
    labels: Vec<usize>,
    groups: Vec<usize>,
    n_classes: usize,
    n_groups: usize,
}

impl PredictionSet {
    pub fn new(
        predicted: Vec<usize>,
        labels: Vec<usize>,
        groups: Vec<usize>,
        n_classes: usize,
        n_groups: usize,
    ) -> Result<Self> {
        if predicted.len() != labels.len() || labels.len() != groups.len() {
            return Err(Error::data(format!(
                "prediction set lengths differ: {} predictions, {} labels, {} groups",
                predicted.len(),
                labels.len(),
                groups.len()
            )));
        }
        if let Some(i) = predicted.iter().chain(&labels).position(|&v| v >= n_classes) {
            return Err(Error::data(format!("entry {} outside [0, {n_classes})", i % labels.len().max(1))));
        }
        if let Some(i) = groups.iter().position(|&s| s >= n_groups) {
            return Err(Error::data(format!("record {i}: group {} outside [0, {n_groups})", groups[i])));
        }
        Ok(Self {
            predicted,
            labels,
            groups,
            n_classes,
            n_groups,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn predicted(&self) -> &[usize] {
        &self.predicted
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    /// `(hits, total)` of class `c` among rows whose group satisfies `member`.
    fn recall_counts(&self, c: usize, member: impl Fn(usize) -> bool) -> (usize, usize) {
        let mut hits = 0;
        let mut total = 0;
        for i in 0..self.len() {
            if self.labels[i] == c && member(self.groups[i]) {
                total += 1;
                hits += usize::from(self.predicted[i] == c);
            }
        }
        (hits, total)
    }
}

pub fn accuracy(ps: &PredictionSet) -> Result<f64> {
    if ps.is_empty() {
        return Err(Error::data("accuracy of an empty prediction set"));
    }
    Ok(accuracy_percent(&ps.predicted, &ps.labels))
}

/// Difference of exact recall fractions, formed from integer counts so
/// that e.g. 8/10 − 6/10 yields the double nearest to 0.2.
fn recall_difference(a: (usize, usize), b: (usize, usize)) -> f64 {
    let num = (a.0 * b.1) as f64 - (b.0 * a.1) as f64;
    num / (a.1 * b.1) as f64
}

/// `P(ŷ=c | y=c, s=a) − P(ŷ=c | y=c, s=b)`.
pub fn equal_opportunity(ps: &PredictionSet, c: usize, a: usize, b: usize) -> Result<f64> {
    if c >= ps.n_classes || a >= ps.n_groups || b >= ps.n_groups {
        return Err(Error::config(format!(
            "class {c} or groups ({a}, {b}) outside the declared {} classes / {} groups",
            ps.n_classes, ps.n_groups
        )));
    }
    let ra = ps.recall_counts(c, |s| s == a);
    let rb = ps.recall_counts(c, |s| s == b);
    for (g, r) in [(a, ra), (b, rb)] {
        if r.1 == 0 {
            return Err(Error::UndefinedMetric(format!("EO: cell (y={c}, s={g}) is empty")));
        }
    }
    Ok(recall_difference(ra, rb))
}

/// EO for every class. With two groups this is `EO(c, 0, 1)`. With more
/// groups (an extension) each group is compared with the union of the
/// others and the largest absolute difference is kept.
pub fn eo_per_class(ps: &PredictionSet) -> Result<Vec<f64>> {
    if ps.n_groups < 2 {
        return Err(Error::UndefinedMetric("EO needs at least two groups".into()));
    }
    (0..ps.n_classes)
        .map(|c| {
            if ps.n_groups == 2 {
                return equal_opportunity(ps, c, 0, 1);
            }
            let mut worst = 0.0f64;
            for g in 0..ps.n_groups {
                let inside = ps.recall_counts(c, |s| s == g);
                let rest = ps.recall_counts(c, |s| s != g);
                if inside.1 == 0 || rest.1 == 0 {
                    return Err(Error::UndefinedMetric(format!(
                        "EO: cell (y={c}, s={g}) or its complement is empty"
                    )));
                }
                worst = worst.max(recall_difference(inside, rest).abs());
            }
            Ok(worst)
        })
        .collect()
}

/// Root mean square of per-class EO; NaN for an empty list.
pub fn gap(eo: &[f64]) -> f64 {
    (eo.iter().map(|e| e * e).sum::<f64>() / eo.len() as f64).sqrt()
}

pub fn fairness_score(gap: f64) -> f64 {
    100.0 * (1.0 - gap)
}

/// Reference point for DTO, both coordinates on the 0–100 scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Utopia {
    pub accuracy: f64,
    pub fairness: f64,
}

pub fn dto(accuracy: f64, fairness: f64, utopia: &Utopia) -> f64 {
    (utopia.accuracy - accuracy).hypot(utopia.fairness - fairness)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub optimizer: OptimizerSpec,
    /// Share of rows used to fit the probe; the rest measure leakage.
    pub train_fraction: f64,
    /// Share of the fitting rows held back for early stopping.
    pub stopping_fraction: f64,
    pub fit: FitConfig,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            hidden: vec![300],
            activation: Activation::Tanh,
            optimizer: OptimizerSpec::adam(1e-3),
            train_fraction: 0.8,
            stopping_fraction: 0.125,
            fit: FitConfig::default(),
        }
    }
}

impl ProbeConfig {
    pub fn describe(&self) -> String {
        format!(
            "hidden={:?} activation={} lr={} train_fraction={} epochs={} patience={}",
            self.hidden, self.activation, self.optimizer.lr, self.train_fraction, self.fit.epochs, self.fit.patience
        )
    }
}

/// Held-out accuracy (percent) of a freshly trained probe predicting `s`
/// from the rows of `z`.
pub fn leakage<T: Scalar>(
    z: &Matrix<T>,
    s: &[usize],
    n_groups: usize,
    probe: &ProbeConfig,
    split_seed: u64,
) -> Result<f64> {
    if z.rows() != s.len() {
        return Err(Error::shape(format!("{} representations for {} attributes", z.rows(), s.len())));
    }
    let mut present = vec![false; n_groups];
    for &g in s {
        if g >= n_groups {
            return Err(Error::data(format!("attribute {g} outside [0, {n_groups})")));
        }
        present[g] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::config("leakage needs at least two distinct sensitive attribute values"));
    }
    if !(probe.train_fraction > 0.0 && probe.train_fraction < 1.0)
        || !(probe.stopping_fraction > 0.0 && probe.stopping_fraction < 1.0)
    {
        return Err(Error::config("probe fractions must lie strictly between 0 and 1"));
    }
    // stratify on s alone: s plays the label role, every row in one group
    let ds = EmbeddingDataset::new(z.clone(), s.to_vec(), vec![0; s.len()], n_groups, 1)?;
    let fit_share = probe.train_fraction * (1.0 - probe.stopping_fraction);
    let stop_share = probe.train_fraction * probe.stopping_fraction;
    let parts = split_indices(&ds, &[fit_share, stop_share, 1.0 - probe.train_fraction], split_seed)?;
    if parts.iter().any(Vec::is_empty) {
        return Err(Error::data(format!("too few rows ({}) to fit and score a probe", s.len())));
    }
    let take = |idx: &[usize]| (z.select_rows(idx), idx.iter().map(|&i| s[i]).collect::<Vec<_>>());
    let (fx, fy) = take(&parts[0]);
    let (vx, vy) = take(&parts[1]);
    let (tx, ty) = take(&parts[2]);

    let mut sizes = vec![z.cols()];
    sizes.extend(&probe.hidden);
    sizes.push(n_groups);
    let mut net = Mlp::new(&sizes, probe.activation, probe.fit.seed)?;
    fit_classifier(&mut net, probe.optimizer, (&fx, &fy), (&vx, &vy), &probe.fit)?;
    Ok(accuracy_percent(&predict_labels(&net, &tx)?, &ty))
}

/// Everything measured for one trained model on one evaluation split.
#[derive(Debug, Clone, PartialEq)]
pub struct FairnessReport {
    pub accuracy: f64,
    pub eo_per_class: Vec<f64>,
    pub gap: f64,
    pub fairness: f64,
    pub dto: Option<f64>,
    pub leakage: Option<f64>,
    pub demonic_accuracy: Option<f64>,
    pub metadata: Vec<(String, String)>,
}

impl FairnessReport {
    pub fn evaluate(ps: &PredictionSet) -> Result<Self> {
        let eo = eo_per_class(ps)?;
        let g = gap(&eo);
        let mut metadata = Vec::new();
        if ps.n_groups > 2 {
            metadata.push(("eo_mode".into(), "one_vs_rest_max_abs".into()));
        }
        Ok(Self {
            accuracy: accuracy(ps)?,
            eo_per_class: eo,
            gap: g,
            fairness: fairness_score(g),
            dto: None,
            leakage: None,
            demonic_accuracy: None,
            metadata,
        })
    }

    pub fn with_dto(mut self, utopia: &Utopia) -> Self {
        self.dto = Some(dto(self.accuracy, self.fairness, utopia));
        self.metadata.push((
            "utopia".into(),
            format!("{},{}", utopia.accuracy, utopia.fairness),
        ));
        self
    }

    /// Flat `key=value` lines; absent optional metrics are omitted.
    pub fn to_record(&self) -> String {
        let mut out = String::new();
        let eo: Vec<String> = self.eo_per_class.iter().map(|e| format!("{e:?}")).collect();
        let _ = writeln!(out, "accuracy={:?}", self.accuracy);
        let _ = writeln!(out, "eo_per_class={}", eo.join(","));
        let _ = writeln!(out, "gap={:?}", self.gap);
        let _ = writeln!(out, "fairness={:?}", self.fairness);
        for (key, v) in [
            ("dto", self.dto),
            ("leakage", self.leakage),
            ("demonic_accuracy", self.demonic_accuracy),
        ] {
            if let Some(v) = v {
                let _ = writeln!(out, "{key}={v:?}");
            }
        }
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Class 1: group 0 recalls 8 of 10, group 1 recalls 6 of 10.
    fn fixture() -> PredictionSet {
        let mut pred = Vec::new();
        let mut groups = Vec::new();
        for (g, hits) in [(0, 8), (1, 6)] {
            for i in 0..10 {
                pred.push(usize::from(i < hits));
                groups.push(g);
            }
        }
        PredictionSet::new(pred, vec![1; 20], groups, 2, 2).unwrap()
    }

    #[test]
    fn eo_on_hand_counted_fixture() {
        assert_eq!(equal_opportunity(&fixture(), 1, 0, 1).unwrap(), 0.2);
        assert_eq!(equal_opportunity(&fixture(), 1, 1, 0).unwrap(), -0.2);
    }

    #[test]
    fn empty_cell_is_an_error() {
        let err = equal_opportunity(&fixture(), 0, 0, 1).unwrap_err();
        assert!(matches!(&err, Error::UndefinedMetric(m) if m.contains("y=0, s=0")), "{err}");
    }

    #[test]
    fn extreme_and_symmetric_eo() {
        let ps = PredictionSet::new(vec![1, 1, 0, 0], vec![1, 1, 1, 1], vec![0, 0, 1, 1], 2, 2).unwrap();
        assert_eq!(equal_opportunity(&ps, 1, 0, 1).unwrap(), 1.0);
        let ps = PredictionSet::new(vec![1, 0, 1, 0], vec![1, 1, 1, 1], vec![0, 0, 1, 1], 2, 2).unwrap();
        assert_eq!(equal_opportunity(&ps, 1, 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn accuracy_counts() {
        let ps = PredictionSet::new(vec![0, 1, 1, 1], vec![0, 1, 0, 0], vec![0; 4], 2, 2).unwrap();
        assert_eq!(accuracy(&ps).unwrap(), 50.0);
        let ps = PredictionSet::new(vec![], vec![], vec![], 2, 2).unwrap();
        assert!(matches!(accuracy(&ps), Err(Error::Data(_))));
        let seven: Vec<usize> = (0..10).map(|i| usize::from(i >= 7)).collect();
        let ps = PredictionSet::new(seven, vec![0; 10], vec![0; 10], 2, 2).unwrap();
        assert_eq!(accuracy(&ps).unwrap(), 70.0);
    }

    #[test]
    fn gap_arithmetic() {
        assert_eq!(gap(&[0.0, 0.0, 0.0]), 0.0);
        assert!((gap(&[0.2, 0.0]) - 0.141421).abs() < 1e-6);
        let mut eo = vec![0.0; 28];
        eo[3] = 1.0;
        assert!((gap(&eo) - 0.18898).abs() < 1e-5);
        assert_eq!(fairness_score(0.25), 75.0);
    }

    #[test]
    fn dto_arithmetic() {
        let u = Utopia {
            accuracy: 76.2,
            fairness: 91.4,
        };
        assert_eq!(dto(76.2, 91.4, &u), 0.0);
        assert!((dto(75.2, 91.4, &u) - 1.0).abs() < 1e-9);
        let u = Utopia {
            accuracy: 83.7,
            fairness: 90.6,
        };
        assert!((dto(82.3, 85.1, &u) - 5.675).abs() < 0.01);
    }

    #[test]
    fn many_groups_use_one_vs_rest() {
        // class 0 recalled in groups 0 and 1 only; class 1 recalled everywhere
        let ps = PredictionSet::new(
            vec![0, 0, 1, 1, 1, 1],
            vec![0, 0, 0, 1, 1, 1],
            vec![0, 1, 2, 0, 1, 2],
            2,
            3,
        )
        .unwrap();
        assert_eq!(eo_per_class(&ps).unwrap(), vec![1.0, 0.0]);
        let rep = FairnessReport::evaluate(&ps).unwrap();
        assert!(rep.to_record().contains("eo_mode=one_vs_rest_max_abs"));
    }

    #[test]
    fn leakage_of_one_hot_attribute() {
        let s: Vec<usize> = (0..200).map(|i| i % 2).collect();
        let rows: Vec<Vec<f64>> = s.iter().map(|&g| vec![f64::from(g == 0), f64::from(g == 1)]).collect();
        let z = Matrix::from_rows(&rows).unwrap();
        let probe = ProbeConfig {
            hidden: vec![8],
            optimizer: OptimizerSpec::adam(1e-2),
            ..ProbeConfig::default()
        };
        assert_eq!(leakage(&z, &s, 2, &probe, 0).unwrap(), 100.0);
        assert!(matches!(leakage(&z, &vec![1; 200], 2, &probe, 0), Err(Error::Config(_))));
    }

    #[test]
    fn report_record_lists_metrics() {
        let rep = FairnessReport::evaluate(&PredictionSet::new(vec![1, 0], vec![1, 1], vec![0, 1], 2, 2).unwrap());
        // class 0 never occurs, so EO for it is undefined
        assert!(rep.is_err());
        let ps = PredictionSet::new(vec![1, 0, 0, 0], vec![1, 1, 0, 0], vec![0, 1, 0, 1], 2, 2).unwrap();
        let rep = FairnessReport::evaluate(&ps).unwrap().with_dto(&Utopia {
            accuracy: 100.0,
            fairness: 100.0,
        });
        let text = rep.to_record();
        assert!(text.contains("accuracy=75.0\n"), "{text}");
        assert!(text.contains("eo_per_class=0.0,1.0\n"), "{text}");
        assert!(text.contains("dto="));
        assert!(!text.contains("leakage="));
    }
}
