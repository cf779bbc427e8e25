//! Agreement statistics between automatic metrics and human judgments, and
//! corpus BLEU with `multi-bleu.perl` semantics.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggregate::{gm_score, GmParams, PreferencePair};
use crate::error::{Error, Result};
use crate::text::Sentence;

/// Fractional ranks starting at 1; tied values share their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // positions i..=j hold one tie group with ranks i+1..=j+1
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Spearman's rank correlation: Pearson correlation of average ranks.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Invalid(format!("length mismatch: {} vs {}", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(Error::Invalid("Spearman's rho needs at least two observations".into()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Invalid("Spearman's rho needs finite values".into()));
    }
    let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if constant(xs) || constant(ys) {
        return Err(Error::Invalid("Spearman's rho is undefined for a constant sequence".into()));
    }
    Ok(pearson(&average_ranks(xs), &average_ranks(ys)))
}

/// Fraction of positions where the two label sequences agree.
pub fn match_rate<T: PartialEq>(machine: &[T], human: &[T]) -> Result<f64> {
    if machine.len() != human.len() {
        return Err(Error::Invalid(format!(
            "length mismatch: {} vs {}",
            machine.len(),
            human.len()
        )));
    }
    if machine.is_empty() {
        return Err(Error::Invalid("match rate needs at least one label".into()));
    }
    let hits = machine.iter().zip(human).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / machine.len() as f64)
}

/// Fraction of pairs whose winner has the strictly larger GM; exact ties
/// count one half.
pub fn gm_pairwise_agreement(p: &GmParams, pairs: &[PreferencePair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Invalid("GM agreement needs at least one pair".into()));
    }
    let score: f64 = pairs
        .iter()
        .map(|pair| {
            let (w, l) = (gm_score(&pair.winner, p), gm_score(&pair.loser, p));
            if w > l {
                1.0
            } else if w == l {
                0.5
            } else {
                0.0
            }
        })
        .sum();
    Ok(score / pairs.len() as f64)
}

/// Aligned candidate and reference sentences, one reference each.
#[derive(Debug, Clone, PartialEq)]
pub struct BleuInputs {
    candidates: Vec<Sentence>,
    references: Vec<Sentence>,
}

impl BleuInputs {
    pub fn new(candidates: Vec<Sentence>, references: Vec<Sentence>) -> Result<Self> {
        if candidates.len() != references.len() {
            return Err(Error::Invalid(format!(
                "{} candidates but {} references",
                candidates.len(),
                references.len()
            )));
        }
        if candidates.is_empty() {
            return Err(Error::Invalid("BLEU needs at least one sentence pair".into()));
        }
        Ok(BleuInputs {
            candidates,
            references,
        })
    }

    pub fn candidates(&self) -> &[Sentence] {
        &self.candidates
    }

    pub fn references(&self) -> &[Sentence] {
        &self.references
    }
}

pub const BLEU_MAX_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    /// 0 to 100.
    pub bleu: f64,
    pub precisions: [f64; BLEU_MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl fmt::Display for BleuScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.precisions.map(|x| 100.0 * x);
        write!(
            f,
            "BLEU = {:.2}, {:.1}/{:.1}/{:.1}/{:.1} (BP={:.3}, ratio={:.3}, hyp_len={}, ref_len={})",
            self.bleu,
            p[0],
            p[1],
            p[2],
            p[3],
            self.brevity_penalty,
            self.hyp_len as f64 / self.ref_len as f64,
            self.hyp_len,
            self.ref_len
        )
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for g in tokens.windows(n) {
        *counts.entry(g).or_insert(0) += 1;
    }
    counts
}

/// Corpus BLEU: clipped n-gram precisions for n = 1..4 pooled over the
/// corpus, unsmoothed geometric mean, brevity penalty `exp(1 - r/c)` when
/// the candidates are shorter. Any zero precision gives 0.
pub fn bleu(inputs: &BleuInputs) -> Result<BleuScore> {
    let mut correct = [0usize; BLEU_MAX_ORDER];
    let mut total = [0usize; BLEU_MAX_ORDER];
    let (mut hyp_len, mut ref_len) = (0, 0);
    for (cand, reference) in inputs.candidates.iter().zip(&inputs.references) {
        hyp_len += cand.len();
        ref_len += reference.len();
        for n in 1..=BLEU_MAX_ORDER {
            let ref_counts = ngram_counts(reference.tokens(), n);
            for (g, c) in ngram_counts(cand.tokens(), n) {
                total[n - 1] += c;
                correct[n - 1] += c.min(ref_counts.get(g).copied().unwrap_or(0));
            }
        }
    }
    if hyp_len == 0 {
        return Err(Error::Invalid("candidates have zero total length".into()));
    }
    if ref_len == 0 {
        return Err(Error::Invalid("references have zero total length".into()));
    }
    let precisions: [f64; BLEU_MAX_ORDER] = std::array::from_fn(|i| {
        if total[i] == 0 {
            0.0
        } else {
            correct[i] as f64 / total[i] as f64
        }
    });
    let brevity_penalty = if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    let bleu = if precisions.contains(&0.0) {
        0.0
    } else {
        let mean_log = precisions.iter().map(|p| p.ln()).sum::<f64>() / BLEU_MAX_ORDER as f64;
        100.0 * brevity_penalty * mean_log.exp()
    };
    Ok(BleuScore {
        bleu,
        precisions,
        brevity_penalty,
        hyp_len,
        ref_len,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatingAspect {
    Similarity,
    Fluency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rating {
    pub aspect: RatingAspect,
    pub score: u8,
}

/// Two transfer records, referenced by id; `winner` was preferred.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preference {
    pub winner: String,
    pub loser: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Judgment {
    /// Style id chosen by the annotator.
    StyleChoice(u8),
    #[serde(rename = "rating_1_to_4")]
    Rating(Rating),
    PairwisePreference(Preference),
}

/// One human judgment. `item_id` names the transfer record it is about, or
/// the pair for pairwise preferences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanAnnotation {
    pub item_id: String,
    #[serde(flatten)]
    pub judgment: Judgment,
}

impl HumanAnnotation {
    pub fn validate(&self) -> Result<()> {
        match &self.judgment {
            Judgment::StyleChoice(s) if *s > 1 => Err(Error::Invalid(format!(
                "{}: style choice {s} is not 0 or 1",
                self.item_id
            ))),
            Judgment::Rating(r) if !(1..=4).contains(&r.score) => Err(Error::Invalid(format!(
                "{}: rating {} is outside 1..=4",
                self.item_id, r.score
            ))),
            _ => Ok(()),
        }
    }
}

/// Reads JSON-lines annotations, skipping blank lines.
pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<HumanAnnotation>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let a: HumanAnnotation =
            serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        a.validate().map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        out.push(a);
    }
    Ok(out)
}
