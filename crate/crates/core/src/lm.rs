//! Interpolated Kneser-Ney n-gram language model and perplexity.
//!
//! Each sentence is padded with `order - 1` start symbols and one end
//! symbol. The highest order uses raw counts; every lower order uses
//! continuation counts (the number of distinct words seen to the left).
//! One absolute discount per order is estimated from count-of-counts as
//! `n1 / (n1 + 2 n2)`. The unigram level interpolates with the uniform
//! distribution over the predictable vocabulary, so every word has mass.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::Sentence;

pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";

const UNK_ID: u32 = 0;
const BOS_ID: u32 = 1;
const EOS_ID: u32 = 2;
const FORMAT_VERSION: u32 = 1;

/// Upper bound on estimated discounts; reached only when an order has no
/// n-gram seen exactly twice.
pub const MAX_DISCOUNT: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SentenceNll {
    pub nll: f64,
    pub tokens: usize,
}

/// A frozen model that scores sentences.
pub trait LanguageModel: Send + Sync {
    /// Negative natural-log likelihood of the sentence including its end
    /// symbol; `tokens` is `len + 1`.
    fn sentence_nll(&self, s: &Sentence) -> SentenceNll;
}

/// Uniform distribution over a fixed number of outcomes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformLm {
    pub vocab_size: usize,
}

impl LanguageModel for UniformLm {
    fn sentence_nll(&self, s: &Sentence) -> SentenceNll {
        let tokens = s.len() + 1;
        SentenceNll {
            nll: tokens as f64 * (self.vocab_size as f64).ln(),
            tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    pub order: usize,
    /// Words seen fewer times are mapped to `<unk>`.
    pub min_count: u64,
    /// Fixed per-order discounts (index 0 = unigrams) instead of estimates.
    pub discounts: Option<Vec<f64>>,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            order: 3,
            min_count: 2,
            discounts: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct ContextStats {
    total: u64,
    types: u64,
}

#[derive(Debug, Clone)]
pub struct NGramLm {
    order: usize,
    min_count: u64,
    vocab: Vec<String>,
    ids: HashMap<String, u32>,
    /// `counts[k - 1]` holds the (adjusted) counts of k-grams.
    counts: Vec<HashMap<Vec<u32>, u64>>,
    /// `contexts[k - 1]` holds totals for the (k - 1)-gram contexts of k-grams.
    contexts: Vec<HashMap<Vec<u32>, ContextStats>>,
    discounts: Vec<f64>,
}

fn is_reserved(w: &str) -> bool {
    w == UNK || w == BOS || w == EOS
}

fn estimate_discount(counts: &HashMap<Vec<u32>, u64>, order: usize) -> f64 {
    let n1 = counts.values().filter(|&&c| c == 1).count() as f64;
    let n2 = counts.values().filter(|&&c| c == 2).count() as f64;
    if n1 + 2.0 * n2 == 0.0 {
        log::warn!("order {order}: no n-gram seen once or twice, discount set to 0");
        return 0.0;
    }
    let d = n1 / (n1 + 2.0 * n2);
    if d > MAX_DISCOUNT {
        log::warn!("order {order}: no n-gram seen twice, discount capped at {MAX_DISCOUNT}");
        MAX_DISCOUNT
    } else {
        d
    }
}

/// Trains an interpolated Kneser-Ney model on the given sentences.
pub fn train_lm<'a, I>(sentences: I, cfg: &LmConfig) -> Result<NGramLm>
where
    I: IntoIterator<Item = &'a Sentence>,
{
    let order = cfg.order;
    if order == 0 {
        return Err(Error::Invalid("language model order must be at least 1".into()));
    }
    if let Some(d) = &cfg.discounts {
        if d.len() != order || d.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::Invalid(format!(
                "expected {order} discounts in [0, 1], got {d:?}"
            )));
        }
    }
    let sentences: Vec<&Sentence> = sentences.into_iter().filter(|s| !s.is_empty()).collect();
    if sentences.is_empty() {
        return Err(Error::Invalid("language model training corpus is empty".into()));
    }

    let mut word_counts: HashMap<&str, u64> = HashMap::new();
    for s in &sentences {
        for w in s.tokens() {
            *word_counts.entry(w.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<&str> = word_counts
        .iter()
        .filter(|(w, &c)| c >= cfg.min_count && !is_reserved(w))
        .map(|(w, _)| *w)
        .collect();
    kept.sort_unstable();
    let vocab: Vec<String> = [UNK, BOS, EOS]
        .into_iter()
        .chain(kept)
        .map(str::to_owned)
        .collect();
    let ids: HashMap<String, u32> = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();

    let mut lm = NGramLm {
        order,
        min_count: cfg.min_count,
        vocab,
        ids,
        counts: vec![HashMap::new(); order],
        contexts: Vec::new(),
        discounts: Vec::new(),
    };

    let top = &mut lm.counts[order - 1];
    let mut padded = Vec::new();
    for s in &sentences {
        lm_pad(&lm.ids, s, order, &mut padded);
        for g in padded.windows(order) {
            *top.entry(g.to_vec()).or_default() += 1;
        }
    }
    // continuation counts: one per distinct left extension
    for k in (1..order).rev() {
        let (lower, upper) = lm.counts.split_at_mut(k);
        let lower = &mut lower[k - 1];
        for g in upper[0].keys() {
            *lower.entry(g[1..].to_vec()).or_default() += 1;
        }
    }

    lm.discounts = match &cfg.discounts {
        Some(d) => d.clone(),
        None => lm
            .counts
            .iter()
            .enumerate()
            .map(|(k, c)| estimate_discount(c, k + 1))
            .collect(),
    };
    if lm.discounts[0] == 0.0 && !lm.counts[0].contains_key(&[UNK_ID][..]) {
        log::warn!("unigram discount is 0 and <unk> was never seen: out-of-vocabulary words get probability 0");
    }
    lm.rebuild_contexts();
    Ok(lm)
}

fn lm_pad(ids: &HashMap<String, u32>, s: &Sentence, order: usize, out: &mut Vec<u32>) {
    out.clear();
    out.extend(std::iter::repeat_n(BOS_ID, order - 1));
    out.extend(s.tokens().iter().map(|w| word_id(ids, w)));
    out.push(EOS_ID);
}

fn word_id(ids: &HashMap<String, u32>, w: &str) -> u32 {
    match ids.get(w) {
        Some(&id) if id != BOS_ID && id != EOS_ID => id,
        _ => UNK_ID,
    }
}

impl NGramLm {
    fn rebuild_contexts(&mut self) {
        self.contexts = self
            .counts
            .iter()
            .map(|level| {
                let mut ctx: HashMap<Vec<u32>, ContextStats> = HashMap::new();
                for (g, &c) in level {
                    let e = ctx.entry(g[..g.len() - 1].to_vec()).or_default();
                    e.total += c;
                    e.types += 1;
                }
                ctx
            })
            .collect();
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn discounts(&self) -> &[f64] {
        &self.discounts
    }

    /// Full vocabulary including `<unk>`, `<s>` and `</s>`.
    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    /// Words the model can emit: the vocabulary without `<s>`.
    pub fn predictable_vocab(&self) -> impl Iterator<Item = &str> {
        self.vocab
            .iter()
            .enumerate()
            .filter(|&(i, _)| i as u32 != BOS_ID)
            .map(|(_, w)| w.as_str())
    }

    fn predictable_size(&self) -> usize {
        self.vocab.len() - 1
    }

    /// Probability of the last id of `gram` given the rest, evaluated at
    /// level `gram.len()`.
    fn prob_ids(&self, gram: &[u32]) -> f64 {
        let mut p = 1.0 / self.predictable_size() as f64;
        for k in 1..=gram.len() {
            let g = &gram[gram.len() - k..];
            if let Some(st) = self.contexts[k - 1].get(&g[..k - 1]) {
                let c = self.counts[k - 1].get(g).copied().unwrap_or(0) as f64;
                let d = self.discounts[k - 1];
                p = ((c - d).max(0.0) + d * st.types as f64 * p) / st.total as f64;
            }
        }
        p
    }

    fn context_ids(&self, context: &[&str]) -> Vec<u32> {
        let keep = context.len().min(self.order - 1);
        context[context.len() - keep..]
            .iter()
            .map(|w| if *w == BOS { BOS_ID } else { word_id(&self.ids, w) })
            .collect()
    }

    /// `p(word | context)`. Only the last `order - 1` context tokens are
    /// used; shorter contexts are scored with the lower-order distribution.
    /// Unknown words score as `<unk>`.
    pub fn prob(&self, context: &[&str], word: &str) -> f64 {
        let mut gram = self.context_ids(context);
        gram.push(if word == EOS { EOS_ID } else { word_id(&self.ids, word) });
        self.prob_ids(&gram)
    }

    /// The distribution over [`NGramLm::predictable_vocab`] after `context`.
    pub fn next_token_dist(&self, context: &[&str]) -> Vec<(&str, f64)> {
        let mut gram = self.context_ids(context);
        gram.push(0);
        let last = gram.len() - 1;
        self.vocab
            .iter()
            .enumerate()
            .filter(|&(i, _)| i as u32 != BOS_ID)
            .map(|(i, w)| {
                gram[last] = i as u32;
                (w.as_str(), self.prob_ids(&gram))
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let counts = self
            .counts
            .iter()
            .map(|level| {
                let mut rows: Vec<Vec<u64>> = level
                    .iter()
                    .map(|(g, &c)| g.iter().map(|&i| u64::from(i)).chain([c]).collect())
                    .collect();
                rows.sort_unstable();
                rows
            })
            .collect();
        let file = LmFile {
            format_version: FORMAT_VERSION,
            order: self.order,
            min_count: self.min_count,
            vocab: self.vocab.clone(),
            discounts: self.discounts.clone(),
            counts,
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: LmFile = serde_json::from_str(text)?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::FormatVersion {
                expected: FORMAT_VERSION,
                found: file.format_version,
            });
        }
        let order = file.order;
        if order == 0 || file.discounts.len() != order || file.counts.len() != order {
            return Err(Error::Invalid("inconsistent order in language model file".into()));
        }
        if file.vocab.len() < 3 || file.vocab[..3] != [UNK, BOS, EOS] {
            return Err(Error::Invalid("vocabulary must start with <unk>, <s>, </s>".into()));
        }
        let vocab_len = file.vocab.len() as u64;
        let mut counts = Vec::with_capacity(order);
        for (k, rows) in file.counts.into_iter().enumerate() {
            let mut level = HashMap::with_capacity(rows.len());
            for row in rows {
                let (count, gram) = match row.split_last() {
                    Some((c, g)) if g.len() == k + 1 && g.iter().all(|&i| i < vocab_len) => (*c, g),
                    _ => return Err(Error::Invalid(format!("malformed order-{} count row", k + 1))),
                };
                level.insert(gram.iter().map(|&i| i as u32).collect::<Vec<u32>>(), count);
            }
            counts.push(level);
        }
        let ids = file.vocab.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        let mut lm = NGramLm {
            order,
            min_count: file.min_count,
            vocab: file.vocab,
            ids,
            counts,
            contexts: Vec::new(),
            discounts: file.discounts,
        };
        lm.rebuild_contexts();
        Ok(lm)
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

impl LanguageModel for NGramLm {
    fn sentence_nll(&self, s: &Sentence) -> SentenceNll {
        let mut padded = Vec::with_capacity(s.len() + self.order);
        lm_pad(&self.ids, s, self.order, &mut padded);
        let nll = padded.windows(self.order).map(|g| -self.prob_ids(g).ln()).sum();
        SentenceNll {
            nll,
            tokens: s.len() + 1,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct LmFile {
    format_version: u32,
    order: usize,
    min_count: u64,
    vocab: Vec<String>,
    discounts: Vec<f64>,
    /// Per order, rows of `[id_1, ..., id_k, count]`.
    counts: Vec<Vec<Vec<u64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexityReport {
    pub pp: f64,
    pub total_tokens: usize,
    pub total_nll: f64,
    pub per_sentence_pp: Vec<f64>,
}

/// Corpus perplexity `exp(sum nll / sum tokens)` and per-sentence values.
pub fn perplexity(lm: &dyn LanguageModel, sentences: &[Sentence]) -> Result<PerplexityReport> {
    if sentences.is_empty() {
        return Err(Error::Invalid("perplexity needs at least one sentence".into()));
    }
    let scores: Vec<SentenceNll> = sentences.par_iter().map(|s| lm.sentence_nll(s)).collect();
    let total_nll: f64 = scores.iter().map(|s| s.nll).sum();
    let total_tokens: usize = scores.iter().map(|s| s.tokens).sum();
    let per_sentence_pp = scores.iter().map(|s| (s.nll / s.tokens as f64).exp()).collect();
    Ok(PerplexityReport {
        pp: (total_nll / total_tokens as f64).exp(),
        total_tokens,
        total_nll,
        per_sentence_pp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::tokenize;
    use approx::assert_abs_diff_eq;

    fn sents(lines: &[&str]) -> Vec<Sentence> {
        lines.iter().map(|l| tokenize(l, true)).collect()
    }

    #[test]
    fn unigram_without_discount_is_mle() {
        let c = sents(&["a a b"]);
        let cfg = LmConfig {
            order: 1,
            min_count: 1,
            discounts: Some(vec![0.0]),
        };
        let lm = train_lm(&c, &cfg).unwrap();
        // a:2 b:1 </s>:1
        assert_eq!(lm.prob(&[], "a"), 0.5);
        assert_eq!(lm.prob(&[], "b"), 0.25);
        assert_eq!(lm.prob(&[], EOS), 0.25);
        let (pa, pb) = (lm.prob(&[], "a"), lm.prob(&[], "b"));
        assert_abs_diff_eq!(pa / (pa + pb), 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(pb / (pa + pb), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn hand_computed_bigram() {
        // "a b" and "a c", min_count 1, bigram.
        // padded: <s> a b </s> / <s> a c </s>
        // bigram counts: (<s>,a)=2 (a,b)=1 (b,</s>)=1 (a,c)=1 (c,</s>)=1
        //   n1=4 n2=1 -> D2 = 4/6
        // unigram continuation counts: a=1 b=1 c=1 </s>=2
        //   n1=3 n2=1 -> D1 = 3/5, total 5, types 4
        // predictable vocab: <unk> </s> a b c -> uniform 1/5
        // p1(b) = (1 - 3/5 + 3/5 * 4 * 1/5) / 5 = (2/5 + 12/25) / 5 = 22/125
        // p(b | a) = (1 - 2/3 + 2/3 * 2 * 22/125) / 2
        let lm = train_lm(
            &sents(&["a b", "a c"]),
            &LmConfig {
                order: 2,
                min_count: 1,
                discounts: None,
            },
        )
        .unwrap();
        assert_abs_diff_eq!(lm.discounts()[1], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(lm.discounts()[0], 3.0 / 5.0, epsilon = 1e-15);
        let p1b = 22.0 / 125.0;
        let expected = (1.0 - 2.0 / 3.0 + 2.0 / 3.0 * 2.0 * p1b) / 2.0;
        assert_abs_diff_eq!(lm.prob(&["a"], "b"), expected, epsilon = 1e-12);
        // context c only ever precedes </s>
        assert_abs_diff_eq!(lm.prob(&["c"], "b"), 2.0 / 3.0 * p1b, epsilon = 1e-12);
        // unseen context backs off fully
        assert_abs_diff_eq!(lm.prob(&["zzz"], "b"), p1b, epsilon = 1e-12);
        assert_abs_diff_eq!(lm.prob(&[], "b"), p1b, epsilon = 1e-12);
    }

    #[test]
    fn distributions_normalize_and_are_positive() {
        let c = sents(&["the food was good", "the food was bad", "the staff was rude", "good food"]);
        let lm = train_lm(&c, &LmConfig { min_count: 1, ..Default::default() }).unwrap();
        for ctx in [vec![], vec!["the"], vec!["the", "food"], vec!["zzz", "was"], vec![BOS, BOS], vec!["a", "b", "c"]] {
            let d = lm.next_token_dist(&ctx);
            let sum: f64 = d.iter().map(|(_, p)| p).sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-9);
            assert!(d.iter().all(|(_, p)| *p > 0.0), "{ctx:?}");
        }
    }

    #[test]
    fn unseen_trigram_context_matches_backoff() {
        let c = sents(&["a b c", "b c d", "c d a"]);
        let lm = train_lm(&c, &LmConfig { min_count: 1, ..Default::default() }).unwrap();
        // (d, b) never occurs as a trigram context; the bigram context b does
        let full = lm.next_token_dist(&["d", "b"]);
        let backoff = lm.next_token_dist(&["b"]);
        assert_eq!(full, backoff);
    }

    #[test]
    fn rare_words_map_to_unk() {
        let c = sents(&["a a b", "a c"]);
        let lm = train_lm(&c, &LmConfig::default()).unwrap();
        assert_eq!(lm.vocab(), [UNK, BOS, EOS, "a"]);
        assert_eq!(lm.prob(&["a"], "b"), lm.prob(&["a"], "never-seen"));
        assert_eq!(lm.prob(&["a"], "b"), lm.prob(&["a"], UNK));
    }

    #[test]
    fn empty_inputs() {
        assert!(train_lm(&sents(&[""]), &LmConfig::default()).is_err());
        assert!(train_lm(&sents(&["a"]), &LmConfig { order: 0, ..Default::default() }).is_err());
        let lm = train_lm(&sents(&["a b"]), &LmConfig { min_count: 1, ..Default::default() }).unwrap();
        let e = lm.sentence_nll(&Sentence::default());
        assert_eq!(e.tokens, 1);
        assert_abs_diff_eq!(e.nll, -lm.prob(&[BOS, BOS], EOS).ln(), epsilon = 1e-15);
        assert!(perplexity(&lm, &[]).is_err());
    }

    #[test]
    fn uniform_model_perplexity() {
        let u = UniformLm { vocab_size: 10 };
        let r = perplexity(&u, &sents(&["a b c", "d", "e f g h i j k"])).unwrap();
        assert_abs_diff_eq!(r.pp, 10.0, epsilon = 1e-12);
        assert_eq!(r.total_tokens, 14);
        let s = u.sentence_nll(&tokenize("a b", true));
        assert_abs_diff_eq!(s.nll, 3.0 * 10f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn deterministic_corpus_has_unit_perplexity() {
        let c: Vec<Sentence> = (0..10).map(|_| tokenize("a b", true)).collect();
        let lm = train_lm(&c, &LmConfig::default()).unwrap();
        let r = perplexity(&lm, &c).unwrap();
        assert_eq!(r.pp, 1.0);
    }

    #[test]
    fn repeated_sentence_beats_random_tokens() {
        let mut c = sents(&["x y z w", "w z y x", "y x w z"]);
        for _ in 0..20 {
            c.push(tokenize("the food was good", true));
        }
        let lm = train_lm(&c, &LmConfig { min_count: 1, ..Default::default() }).unwrap();
        let seen = lm.sentence_nll(&tokenize("the food was good", true));
        let random = lm.sentence_nll(&tokenize("z good x the", true));
        assert!(seen.nll / (seen.tokens as f64) < random.nll / (random.tokens as f64));
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let c = sents(&["the food was good", "the food was bad", "the staff was rude", "good food"]);
        let lm = train_lm(&c, &LmConfig { min_count: 1, ..Default::default() }).unwrap();
        let back = NGramLm::from_json(&lm.to_json().unwrap()).unwrap();
        assert_eq!(back.to_json().unwrap(), lm.to_json().unwrap());
        for s in &c {
            assert_eq!(lm.sentence_nll(s), back.sentence_nll(s));
        }
        let probe = tokenize("the staff was good food", true);
        assert_eq!(lm.sentence_nll(&probe).nll.to_bits(), back.sentence_nll(&probe).nll.to_bits());
    }
}
