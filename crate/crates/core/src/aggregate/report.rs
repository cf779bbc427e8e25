use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{gm_score, GmParams, Granularity, MetricTriple};
use crate::classifier::{acc_transfer_set, StyleClassifier};
use crate::error::{Error, Result};
use crate::lm::{perplexity, LanguageModel};
use crate::similarity::{sim_transfer_set, EmbeddingTable, IdfTable};
use crate::text::{CheckpointMeta, Sentence, TransferSet};

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// JSON Schema (draft 2020-12) of a serialized [`MetricReport`].
pub const REPORT_SCHEMA: &str = include_str!("../../schemas/metric_report.schema.json");

/// The frozen models every transfer set of a task is scored with.
pub struct EvaluationSuite<'a> {
    pub classifier: &'a dyn StyleClassifier,
    pub lm: &'a dyn LanguageModel,
    pub embeddings: &'a EmbeddingTable,
    pub idf: &'a IdfTable,
    /// Content hashes of the model files, copied into the report.
    pub fingerprints: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordScore {
    pub id: String,
    pub indicator: u8,
    pub predicted_style: String,
    pub target_prob: f64,
    pub cosine: f64,
    pub degenerate: bool,
    pub sentence_pp: f64,
    pub sentence_gm: f64,
}

impl RecordScore {
    /// Sentence-level triple: the target-class probability stands in for
    /// accuracy.
    pub fn triple(&self) -> MetricTriple {
        MetricTriple {
            acc: self.target_prob,
            sim: self.cosine,
            pp: self.sentence_pp,
            granularity: Granularity::Sentence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricReport {
    pub format_version: u32,
    pub acc: f64,
    pub sim: f64,
    pub pp: f64,
    pub gm: f64,
    pub params: GmParams,
    pub granularity: Granularity,
    pub labels: [String; 2],
    pub record_count: usize,
    pub degenerate_count: usize,
    pub total_tokens: usize,
    pub fingerprints: BTreeMap<String, String>,
    pub checkpoint_meta: Option<CheckpointMeta>,
    /// Filled at sentence granularity, empty at corpus granularity.
    pub per_record: Vec<RecordScore>,
}

impl MetricReport {
    pub fn triple(&self) -> MetricTriple {
        MetricTriple {
            acc: self.acc,
            sim: self.sim,
            pp: self.pp,
            granularity: Granularity::Corpus,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
    }
}

/// Scores a transfer set with all three metrics and their GM.
///
/// Corpus perplexity is taken over the transferred sentences. Per-record
/// GM uses the target-class probability, the pair cosine and the
/// sentence perplexity.
pub fn evaluate(
    ts: &TransferSet,
    suite: &EvaluationSuite<'_>,
    params: &GmParams,
    granularity: Granularity,
) -> Result<MetricReport> {
    params.validate()?;
    let acc = acc_transfer_set(suite.classifier, ts)?;
    let sim = sim_transfer_set(ts, suite.embeddings, suite.idf);
    let transferred: Vec<Sentence> = ts.records().iter().map(|r| r.transferred.clone()).collect();
    let pp = perplexity(suite.lm, &transferred)?;

    let triple = MetricTriple {
        acc: acc.acc,
        sim: sim.sim,
        pp: pp.pp,
        granularity: Granularity::Corpus,
    };
    let labels = suite.classifier.labels().clone();
    let per_record = match granularity {
        Granularity::Corpus => Vec::new(),
        Granularity::Sentence => ts
            .records()
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let a = acc.per_record[i];
                let mut score = RecordScore {
                    id: r.id.clone(),
                    indicator: a.indicator,
                    predicted_style: labels[usize::from(a.predicted)].clone(),
                    target_prob: a.target_prob,
                    cosine: sim.per_pair[i],
                    degenerate: sim.degenerate[i],
                    sentence_pp: pp.per_sentence_pp[i],
                    sentence_gm: 0.0,
                };
                score.sentence_gm = gm_score(&score.triple(), params);
                score
            })
            .collect(),
    };

    Ok(MetricReport {
        format_version: REPORT_FORMAT_VERSION,
        acc: triple.acc,
        sim: triple.sim,
        pp: triple.pp,
        gm: gm_score(&triple, params),
        params: *params,
        granularity,
        labels,
        record_count: ts.len(),
        degenerate_count: sim.degenerate_count,
        total_tokens: pp.total_tokens,
        fingerprints: suite.fingerprints.clone(),
        checkpoint_meta: ts.checkpoint_meta.clone(),
        per_record,
    })
}
