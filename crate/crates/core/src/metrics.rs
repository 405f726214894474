//! False alarm rate, positive precision and positive recall.
//!
//! Ground truth is always binary. An `UNCERTAIN` prediction raises no alarm:
//! it never counts as a false alarm, and on a true positive it counts as a miss.
//! FAR is measured per ground-truth negative.

use serde::{Deserialize, Serialize};

use crate::design::{NEGATIVE, POSITIVE, UNCERTAIN};
use crate::error::{Error, Result};
use crate::manifest::{Manifest, Polarity, Split};
use crate::trainer::TrainedModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Predicted {
    Positive,
    Negative,
    Uncertain,
}

impl Predicted {
    fn column(self) -> usize {
        self as usize
    }

    pub fn from_class_name(name: &str) -> Option<Self> {
        match name {
            POSITIVE => Some(Predicted::Positive),
            NEGATIVE => Some(Predicted::Negative),
            UNCERTAIN => Some(Predicted::Uncertain),
            _ => None,
        }
    }
}

impl From<Polarity> for Predicted {
    fn from(p: Polarity) -> Self {
        match p {
            Polarity::Positive => Predicted::Positive,
            Polarity::Negative => Predicted::Negative,
        }
    }
}

fn row(p: Polarity) -> usize {
    match p {
        Polarity::Positive => 0,
        Polarity::Negative => 1,
    }
}

/// Counts indexed by (true polarity) x (prediction). The uncertain column is
/// always stored; `has_uncertain` says whether the model could emit it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// Rows: true POSITIVE, true NEGATIVE. Columns: POSITIVE, NEGATIVE, UNCERTAIN.
    pub counts: [[usize; 3]; 2],
    pub has_uncertain: bool,
}

impl ConfusionMatrix {
    pub fn get(&self, truth: Polarity, predicted: Predicted) -> usize {
        self.counts[row(truth)][predicted.column()]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn row_total(&self, truth: Polarity) -> usize {
        self.counts[row(truth)].iter().sum()
    }

    pub fn predicted_total(&self, predicted: Predicted) -> usize {
        self.counts.iter().map(|r| r[predicted.column()]).sum()
    }

    /// Negatives predicted positive over all negatives; 0 when there are no negatives.
    pub fn far(&self) -> f64 {
        ratio(
            self.get(Polarity::Negative, Predicted::Positive),
            self.row_total(Polarity::Negative),
        )
        .unwrap_or(0.0)
    }

    /// Positives predicted positive over all positives; 0 when there are no positives.
    pub fn positive_recall(&self) -> f64 {
        ratio(
            self.get(Polarity::Positive, Predicted::Positive),
            self.row_total(Polarity::Positive),
        )
        .unwrap_or(0.0)
    }

    /// `None` when nothing was predicted positive.
    pub fn positive_precision(&self) -> Option<f64> {
        ratio(
            self.get(Polarity::Positive, Predicted::Positive),
            self.predicted_total(Predicted::Positive),
        )
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn confusion(truth: &[Polarity], predictions: &[Predicted]) -> Result<ConfusionMatrix> {
    if truth.len() != predictions.len() {
        return Err(Error::invalid(format!(
            "{} labels but {} predictions",
            truth.len(),
            predictions.len()
        )));
    }
    let mut m = ConfusionMatrix::default();
    for (t, p) in truth.iter().zip(predictions) {
        m.counts[row(*t)][p.column()] += 1;
        m.has_uncertain |= *p == Predicted::Uncertain;
    }
    Ok(m)
}

/// Anything that maps a feature vector to one of its named classes.
pub trait Classifier {
    fn class_names(&self) -> &[String];
    fn feature_dim(&self) -> usize;
    fn predict_class(&self, features: &[f64]) -> Result<usize>;
}

impl Classifier for TrainedModel {
    fn class_names(&self) -> &[String] {
        &self.class_names
    }

    fn feature_dim(&self) -> usize {
        TrainedModel::feature_dim(self)
    }

    fn predict_class(&self, features: &[f64]) -> Result<usize> {
        Ok(self.predict(features)?.class_index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub design_name: Option<String>,
    pub seed: u64,
    pub far: f64,
    /// `null` when the model never predicted positive.
    pub positive_precision: Option<f64>,
    pub positive_recall: f64,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Scores `model` on a clear-only test manifest.
pub fn evaluate_with<C: Classifier + ?Sized>(model: &C, test: &Manifest) -> Result<EvalReport> {
    if test.split != Split::Test {
        return Err(Error::invalid("evaluation requires a test-split manifest"));
    }
    if test.samples.is_empty() {
        return Err(Error::invalid("test manifest is empty"));
    }
    if test.feature_dim != model.feature_dim() {
        return Err(Error::invalid(format!(
            "test feature_dim {} does not match model input {}",
            test.feature_dim,
            model.feature_dim()
        )));
    }
    let classes: Vec<Predicted> = model
        .class_names()
        .iter()
        .map(|n| {
            Predicted::from_class_name(n)
                .ok_or_else(|| Error::invalid(format!("model has unknown class `{n}`")))
        })
        .collect::<Result<_>>()?;

    let mut truth = Vec::with_capacity(test.samples.len());
    let mut predictions = Vec::with_capacity(test.samples.len());
    for s in &test.samples {
        let polarity = test
            .taxonomy
            .get(&s.category)
            .and_then(|c| c.kind.polarity())
            .ok_or_else(|| Error::InvalidSample {
                id: s.id.clone(),
                reason: format!(
                    "test samples must be in a clear category, not `{}`",
                    s.category
                ),
            })?;
        truth.push(polarity);
        predictions.push(classes[model.predict_class(&s.features)?]);
    }
    let mut confusion = confusion(&truth, &predictions)?;
    confusion.has_uncertain = classes.contains(&Predicted::Uncertain);
    Ok(EvalReport {
        design_name: None,
        seed: 0,
        far: confusion.far(),
        positive_precision: confusion.positive_precision(),
        positive_recall: confusion.positive_recall(),
        confusion,
    })
}

pub fn evaluate(model: &TrainedModel, test: &Manifest) -> Result<EvalReport> {
    let mut report = evaluate_with(model, test)?;
    report.design_name = model.design_name.clone();
    report.seed = model.config.seed;
    Ok(report)
}

/// One-decimal percentage, e.g. `0.089` → `8.9%`.
pub fn format_percent(ratio: f64) -> String {
    format!("{:.1}%", ratio * 100.0)
}
