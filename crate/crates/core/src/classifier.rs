//! Binary style classifier behind the post-transfer accuracy metric.
//!
//! Sentences are represented as bags of 1-, 2- and 3-grams over the token
//! sequence padded with one `<s>` and one `</s>`. A two-class multinomial
//! logistic regression is fit with L2-regularized mini-batch SGD and the
//! epoch with the best held-out accuracy is kept.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{Corpus, Sentence, TransferSet};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
const MAX_NGRAM: usize = 3;
const FORMAT_VERSION: u32 = 1;

/// N-gram counts of one sentence, keyed by the space-joined n-gram.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureVector(pub BTreeMap<String, u32>);

impl FeatureVector {
    pub fn get(&self, feature: &str) -> u32 {
        self.0.get(feature).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// All 1/2/3-grams of the padded sentence with multiplicity. N-grams made
/// only of padding are left out, so the empty sentence has no features.
pub fn extract_features(s: &Sentence) -> FeatureVector {
    let mut out = BTreeMap::new();
    for_each_ngram(s, |g| *out.entry(g.join(" ")).or_insert(0) += 1);
    FeatureVector(out)
}

fn for_each_ngram(s: &Sentence, mut f: impl FnMut(&[&str])) {
    let mut padded = Vec::with_capacity(s.len() + 2);
    padded.push(BOS);
    padded.extend(s.tokens().iter().map(String::as_str));
    padded.push(EOS);
    for n in 1..=MAX_NGRAM {
        for g in padded.windows(n) {
            if g.iter().all(|t| *t == BOS || *t == EOS) {
                continue;
            }
            f(g);
        }
    }
}

/// Anything that assigns a sentence a probability for each of two styles.
pub trait StyleClassifier: Send + Sync {
    /// Style names, indexed by class id.
    fn labels(&self) -> &[String; 2];

    /// Class probabilities, summing to 1.
    fn predict_proba(&self, s: &Sentence) -> [f64; 2];

    /// Most probable class; an exact tie goes to class 0.
    fn classify(&self, s: &Sentence) -> Prediction {
        let prob = self.predict_proba(s);
        let label = u8::from(prob[1] > prob[0]);
        Prediction { label, prob }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: u8,
    pub prob: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub l2: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub dev_fraction: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            l2: 1e-5,
            learning_rate: 0.5,
            max_epochs: 10,
            batch_size: 32,
            dev_fraction: 0.1,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    fn validate(&self) -> Result<()> {
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Invalid(format!("l2 must be nonnegative, got {}", self.l2)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Invalid(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::Invalid("max_epochs and batch_size must be positive".into()));
        }
        if !(self.dev_fraction > 0.0 && self.dev_fraction < 1.0) {
            return Err(Error::Invalid(format!("dev_fraction must be in (0, 1), got {}", self.dev_fraction)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub epochs: usize,
    pub best_epoch: usize,
    pub final_dev_accuracy: f64,
    pub train_accuracy: f64,
    pub train_size: usize,
    pub dev_size: usize,
}

/// A sentence encoded against a frozen feature vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<(usize, f64)>,
    pub label: usize,
}

/// Weights and biases of the two-class linear model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub weights: [Vec<f64>; 2],
    pub bias: [f64; 2],
}

impl LinearParams {
    pub fn zeros(n_features: usize) -> Self {
        LinearParams {
            weights: [vec![0.0; n_features], vec![0.0; n_features]],
            bias: [0.0; 2],
        }
    }

    pub fn n_features(&self) -> usize {
        self.weights[0].len()
    }

    fn logits(&self, features: &[(usize, f64)]) -> [f64; 2] {
        let mut z = self.bias;
        for &(f, x) in features {
            z[0] += self.weights[0][f] * x;
            z[1] += self.weights[1][f] * x;
        }
        z
    }

    pub fn proba(&self, features: &[(usize, f64)]) -> [f64; 2] {
        softmax(self.logits(features))
    }

    /// Mean cross-entropy over `batch` plus `l2 / 2 * ||W||^2` (biases are
    /// not penalized).
    pub fn loss(&self, batch: &[Example], l2: f64) -> f64 {
        let data: f64 = batch
            .iter()
            .map(|e| {
                let z = self.logits(&e.features);
                log_sum_exp(z) - z[e.label]
            })
            .sum::<f64>()
            / batch.len() as f64;
        let norm: f64 = self.weights.iter().flatten().map(|w| w * w).sum();
        data + 0.5 * l2 * norm
    }

    /// Analytic gradient of [`LinearParams::loss`].
    pub fn gradient(&self, batch: &[Example], l2: f64) -> LinearParams {
        let mut g = LinearParams::zeros(self.n_features());
        self.accumulate_data_gradient(batch, &mut g);
        for k in 0..2 {
            for (gw, w) in g.weights[k].iter_mut().zip(&self.weights[k]) {
                *gw += l2 * w;
            }
        }
        g
    }

    fn accumulate_data_gradient(&self, batch: &[Example], g: &mut LinearParams) {
        let scale = 1.0 / batch.len() as f64;
        for e in batch {
            let p = self.proba(&e.features);
            for k in 0..2 {
                let residual = (p[k] - f64::from(u8::from(k == e.label))) * scale;
                g.bias[k] += residual;
                for &(f, x) in &e.features {
                    g.weights[k][f] += residual * x;
                }
            }
        }
    }

    /// One SGD step: decay all weights, then apply the sparse data gradient.
    fn sgd_step(&mut self, batch: &[Example], lr: f64, l2: f64) {
        let scale = 1.0 / batch.len() as f64;
        let residuals: Vec<[f64; 2]> = batch
            .iter()
            .map(|e| {
                let p = self.proba(&e.features);
                [
                    (p[0] - f64::from(u8::from(e.label == 0))) * scale,
                    (p[1] - f64::from(u8::from(e.label == 1))) * scale,
                ]
            })
            .collect();
        if l2 > 0.0 {
            let decay = 1.0 - lr * l2;
            for w in self.weights.iter_mut().flatten() {
                *w *= decay;
            }
        }
        for (e, r) in batch.iter().zip(&residuals) {
            for k in 0..2 {
                self.bias[k] -= lr * r[k];
                for &(f, x) in &e.features {
                    self.weights[k][f] -= lr * r[k] * x;
                }
            }
        }
    }
}

fn log_sum_exp(z: [f64; 2]) -> f64 {
    let m = z[0].max(z[1]);
    m + ((z[0] - m).exp() + (z[1] - m).exp()).ln()
}

fn softmax(z: [f64; 2]) -> [f64; 2] {
    let m = z[0].max(z[1]);
    let e0 = (z[0] - m).exp();
    let e1 = (z[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

/// Trained n-gram logistic-regression style classifier.
#[derive(Debug, Clone)]
pub struct ClassifierModel {
    labels: [String; 2],
    features: Vec<String>,
    index: HashMap<String, usize>,
    params: LinearParams,
    config: ClassifierConfig,
    train_meta: TrainMeta,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    labels: [String; 2],
    features: Vec<String>,
    weights: [Vec<f64>; 2],
    bias: [f64; 2],
    config: ClassifierConfig,
    train_meta: TrainMeta,
}

impl ClassifierModel {
    pub fn params(&self) -> &LinearParams {
        &self.params
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn train_meta(&self) -> &TrainMeta {
        &self.train_meta
    }

    pub fn feature_vocab(&self) -> &[String] {
        &self.features
    }

    /// Weight difference (class 1 minus class 0) for one feature, if known.
    pub fn feature_margin(&self, feature: &str) -> Option<f64> {
        let &i = self.index.get(feature)?;
        Some(self.params.weights[1][i] - self.params.weights[0][i])
    }

    /// Encodes a sentence; features outside the vocabulary are dropped.
    pub fn encode(&self, s: &Sentence, label: usize) -> Example {
        encode_with(&self.index, s, label)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format_version: FORMAT_VERSION,
            labels: self.labels.clone(),
            features: self.features.clone(),
            weights: self.params.weights.clone(),
            bias: self.params.bias,
            config: self.config.clone(),
            train_meta: self.train_meta.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::FormatVersion {
                expected: FORMAT_VERSION,
                found: file.format_version,
            });
        }
        let n = file.features.len();
        if file.weights.iter().any(|w| w.len() != n) {
            return Err(Error::Invalid("weight rows do not match the feature vocabulary".into()));
        }
        if file.weights.iter().flatten().chain(&file.bias).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("model has non-finite parameters".into()));
        }
        let index = file
            .features
            .iter()
            .enumerate()
            .map(|(i, f)| (f.clone(), i))
            .collect();
        Ok(ClassifierModel {
            labels: file.labels,
            features: file.features,
            index,
            params: LinearParams {
                weights: file.weights,
                bias: file.bias,
            },
            config: file.config,
            train_meta: file.train_meta,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::parse(path, j.line(), j.to_string()),
            other => other,
        })
    }
}

impl StyleClassifier for ClassifierModel {
    fn labels(&self) -> &[String; 2] {
        &self.labels
    }

    fn predict_proba(&self, s: &Sentence) -> [f64; 2] {
        let mut z = self.params.bias;
        for_each_ngram(s, |g| {
            if let Some(&f) = self.index.get(&g.join(" ")) {
                z[0] += self.params.weights[0][f];
                z[1] += self.params.weights[1][f];
            }
        });
        softmax(z)
    }
}

fn encode_with(index: &HashMap<String, usize>, s: &Sentence, label: usize) -> Example {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for_each_ngram(s, |g| {
        if let Some(&f) = index.get(&g.join(" ")) {
            *counts.entry(f).or_insert(0.0) += 1.0;
        }
    });
    Example {
        features: counts.into_iter().collect(),
        label,
    }
}

fn accuracy(params: &LinearParams, examples: &[Example]) -> f64 {
    let correct = examples
        .iter()
        .filter(|e| {
            let p = params.proba(&e.features);
            usize::from(p[1] > p[0]) == e.label
        })
        .count();
    correct as f64 / examples.len() as f64
}

/// Fits the classifier on `x0` (class 0) and `x1` (class 1).
///
/// All examples are shuffled with `cfg.seed`; the last `dev_fraction` of the
/// shuffle is held out. The feature vocabulary comes from the training part
/// only. Training is deterministic for a given seed.
pub fn train_classifier(x0: &Corpus, x1: &Corpus, cfg: &ClassifierConfig) -> Result<ClassifierModel> {
    cfg.validate()?;
    if x0.is_empty() || x1.is_empty() {
        return Err(Error::Invalid("both style corpora must be non-empty".into()));
    }
    let mut labelled: Vec<(&Sentence, usize)> = x0
        .sentences
        .iter()
        .map(|s| (s, 0))
        .chain(x1.sentences.iter().map(|s| (s, 1)))
        .collect();
    if labelled.len() < 2 {
        return Err(Error::Invalid("need at least two sentences to hold out a dev split".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    labelled.shuffle(&mut rng);
    let dev_size = ((labelled.len() as f64 * cfg.dev_fraction).ceil() as usize).clamp(1, labelled.len() - 1);
    let (train_part, dev_part) = labelled.split_at(labelled.len() - dev_size);

    let mut vocab = BTreeSet::new();
    for (s, _) in train_part {
        for_each_ngram(s, |g| {
            vocab.insert(g.join(" "));
        });
    }
    let features: Vec<String> = vocab.into_iter().collect();
    let index: HashMap<String, usize> = features.iter().enumerate().map(|(i, f)| (f.clone(), i)).collect();

    let train: Vec<Example> = train_part.par_iter().map(|(s, y)| encode_with(&index, s, *y)).collect();
    let dev: Vec<Example> = dev_part.par_iter().map(|(s, y)| encode_with(&index, s, *y)).collect();

    let mut params = LinearParams::zeros(features.len());
    let mut best = (params.clone(), accuracy(&params, &dev), 0usize);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train[i].clone()));
            params.sgd_step(&batch, cfg.learning_rate, cfg.l2);
        }
        let dev_acc = accuracy(&params, &dev);
        log::debug!("epoch {epoch}: dev accuracy {dev_acc:.4}");
        if dev_acc > best.1 {
            best = (params.clone(), dev_acc, epoch);
        }
    }
    let (params, dev_accuracy, best_epoch) = best;
    let train_meta = TrainMeta {
        epochs: cfg.max_epochs,
        best_epoch,
        final_dev_accuracy: dev_accuracy,
        train_accuracy: accuracy(&params, &train),
        train_size: train.len(),
        dev_size: dev.len(),
    };
    Ok(ClassifierModel {
        labels: [x0.style.name.clone(), x1.style.name.clone()],
        features,
        index,
        params,
        config: cfg.clone(),
        train_meta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccRecord {
    /// 1 when the transferred sentence is classified as the target style.
    pub indicator: u8,
    pub target_prob: f64,
    /// Predicted class id in the classifier's label order.
    pub predicted: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccResult {
    pub acc: f64,
    pub per_record: Vec<AccRecord>,
}

/// Fraction of transferred sentences classified as their target style.
pub fn acc_transfer_set(clf: &dyn StyleClassifier, ts: &TransferSet) -> Result<AccResult> {
    let labels = clf.labels();
    let class_of = |name: &str| -> Result<usize> {
        labels.iter().position(|l| l == name).ok_or_else(|| {
            Error::Invalid(format!(
                "style {name:?} is unknown to the classifier (labels {:?}, {:?})",
                labels[0], labels[1]
            ))
        })
    };
    let targets = ts
        .records()
        .iter()
        .map(|r| class_of(&r.target_style.name))
        .collect::<Result<Vec<_>>>()?;
    let per_record: Vec<AccRecord> = ts
        .records()
        .par_iter()
        .zip(&targets)
        .map(|(r, &t)| {
            let p = clf.classify(&r.transferred);
            AccRecord {
                indicator: u8::from(usize::from(p.label) == t),
                target_prob: p.prob[t],
                predicted: p.label,
            }
        })
        .collect();
    let hits: usize = per_record.iter().map(|r| usize::from(r.indicator)).sum();
    Ok(AccResult {
        acc: hits as f64 / per_record.len() as f64,
        per_record,
    })
}
