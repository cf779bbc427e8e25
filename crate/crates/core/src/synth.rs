//! Seeded synthetic fixtures: two-style corpora, matching embeddings,
//! transfer outputs and preference pairs.
//!
//! Every sentence is neutral filler with a fixed number of style markers
//! at random positions. Each marker comes from the sentence's own style
//! with probability `own_style_prob` and from the other style otherwise.
//! Markers are paired across styles (`great` / `terrible`, ...) and a
//! transfer swaps a marker for its partner. Some sentences also carry a
//! one-off rare word, so a language model trained on the corpora sees
//! `<unk>`.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::aggregate::{gm_score, GmParams, Granularity, MetricTriple, PreferencePair};
use crate::similarity::EmbeddingTable;
use crate::text::{CheckpointMeta, Corpus, Sentence, StyleLabel, TransferRecord, TransferSet};

pub const NEGATIVE_MARKERS: [&str; 10] = [
    "terrible", "rude", "bland", "worst", "awful", "slow", "dirty", "horrible", "cold", "overpriced",
];
pub const POSITIVE_MARKERS: [&str; 10] = [
    "great", "friendly", "delicious", "best", "amazing", "quick", "clean", "excellent", "warm", "cheap",
];
pub const NEUTRAL_WORDS: [&str; 24] = [
    "the", "food", "service", "was", "and", "staff", "place", "we", "our", "table", "waiter", "menu",
    "order", "pizza", "coffee", "here", "it", "is", "very", "really", "with", "for", "a", ".",
];

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusRecipe {
    pub sentences_per_style: usize,
    pub markers_per_sentence: usize,
    pub own_style_prob: f64,
    pub min_neutral: usize,
    pub max_neutral: usize,
    /// Probability that a sentence gets one rare word (seen once overall).
    pub rare_word_prob: f64,
}

impl Default for CorpusRecipe {
    fn default() -> Self {
        CorpusRecipe {
            sentences_per_style: 1000,
            markers_per_sentence: 3,
            own_style_prob: 0.9,
            min_neutral: 4,
            max_neutral: 8,
            rare_word_prob: 0.1,
        }
    }
}

pub fn style_labels() -> [StyleLabel; 2] {
    [StyleLabel::new(0, "negative"), StyleLabel::new(1, "positive")]
}

fn markers(style: usize) -> &'static [&'static str; 10] {
    if style == 0 {
        &NEGATIVE_MARKERS
    } else {
        &POSITIVE_MARKERS
    }
}

/// Style of a marker word, if it is one.
pub fn marker_style(word: &str) -> Option<usize> {
    if NEGATIVE_MARKERS.contains(&word) {
        Some(0)
    } else if POSITIVE_MARKERS.contains(&word) {
        Some(1)
    } else {
        None
    }
}

fn partner(word: &str) -> Option<&'static str> {
    if let Some(i) = NEGATIVE_MARKERS.iter().position(|w| *w == word) {
        return Some(POSITIVE_MARKERS[i]);
    }
    POSITIVE_MARKERS
        .iter()
        .position(|w| *w == word)
        .map(|i| NEGATIVE_MARKERS[i])
}

fn sentence<R: Rng>(rng: &mut R, style: usize, recipe: &CorpusRecipe, serial: usize) -> Vec<String> {
    let n = rng.random_range(recipe.min_neutral..=recipe.max_neutral);
    let mut words: Vec<String> = (0..n).map(|_| (*NEUTRAL_WORDS.choose(rng).unwrap()).to_owned()).collect();
    for _ in 0..recipe.markers_per_sentence {
        let from = if rng.random_bool(recipe.own_style_prob) { style } else { 1 - style };
        let m = *markers(from).choose(rng).unwrap();
        let at = rng.random_range(0..=words.len());
        words.insert(at, m.to_owned());
    }
    if rng.random_bool(recipe.rare_word_prob) {
        let at = rng.random_range(0..=words.len());
        words.insert(at, format!("rare{style}x{serial}"));
    }
    words
}

/// Generates one corpus per style.
pub fn style_corpora(recipe: &CorpusRecipe, seed: u64) -> (Corpus, Corpus) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = style_labels();
    let mut make = |style: usize| {
        let sentences = (0..recipe.sentences_per_style)
            .map(|i| Sentence::from_tokens(sentence(&mut rng, style, recipe, i)).expect("fixture tokens"))
            .collect();
        Corpus {
            style: labels[style].clone(),
            sentences,
            source_path: format!("synthetic:{}", labels[style].name),
        }
    };
    let x0 = make(0);
    let x1 = make(1);
    (x0, x1)
}

/// Random vectors for every fixture word. Paired markers share most of
/// their vector, as antonyms do in real embedding spaces.
pub fn embeddings(dim: usize, seed: u64) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = EmbeddingTable::new(dim);
    let random = |rng: &mut ChaCha8Rng, scale: f32| -> Vec<f32> {
        (0..dim).map(|_| rng.random_range(-1.0f32..1.0) * scale).collect()
    };
    for w in NEUTRAL_WORDS {
        let v = random(&mut rng, 1.0);
        table.insert(w, &v).expect("dimension");
    }
    for (neg, pos) in NEGATIVE_MARKERS.iter().zip(POSITIVE_MARKERS) {
        let base = random(&mut rng, 1.0);
        for w in [*neg, pos] {
            let noise = random(&mut rng, 0.35);
            let v: Vec<f32> = base.iter().zip(&noise).map(|(b, n)| b + n).collect();
            table.insert(w, &v).expect("dimension");
        }
    }
    table
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferRecipe {
    pub records: usize,
    /// Probability that each source-style marker is swapped for its partner.
    pub flip_prob: f64,
    /// Probability that each neutral word is replaced by a random one.
    pub noise_prob: f64,
}

/// Fake system outputs for sentences drawn alternately from both corpora.
pub fn transfer_set(
    x0: &Corpus,
    x1: &Corpus,
    recipe: &TransferRecipe,
    meta: Option<CheckpointMeta>,
    seed: u64,
) -> TransferSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = style_labels();
    let records = (0..recipe.records)
        .map(|i| {
            let source = i % 2;
            let corpus = if source == 0 { x0 } else { x1 };
            let original = corpus.sentences.choose(&mut rng).expect("non-empty corpus").clone();
            let transferred: Vec<String> = original
                .tokens()
                .iter()
                .map(|w| match (marker_style(w), partner(w)) {
                    (Some(s), Some(p)) if s == source && rng.random_bool(recipe.flip_prob) => p.to_owned(),
                    (Some(_), _) => w.clone(),
                    _ if rng.random_bool(recipe.noise_prob) => (*NEUTRAL_WORDS.choose(&mut rng).unwrap()).to_owned(),
                    _ => w.clone(),
                })
                .collect();
            TransferRecord {
                id: format!("r{i:05}"),
                original,
                transferred: Sentence::from_tokens(transferred).expect("fixture tokens"),
                source_style: labels[source].clone(),
                target_style: labels[1 - source].clone(),
            }
        })
        .collect();
    TransferSet::new(records, meta).expect("valid fixture transfer set")
}

/// Random sentence-level triples in a range where every threshold of the
/// default GM is active.
pub fn random_triple<R: Rng>(rng: &mut R) -> MetricTriple {
    MetricTriple {
        acc: rng.random_range(0.5..1.0),
        sim: rng.random_range(0.6..1.0),
        pp: rng.random_range(5.0..120.0),
        granularity: Granularity::Sentence,
    }
}

/// Preference pairs labelled by GM under `hidden`: the side with the higher
/// score wins. Pairs that tie under `hidden` are redrawn.
pub fn preference_pairs(n: usize, hidden: &GmParams, seed: u64) -> Vec<PreferencePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let a = random_triple(&mut rng);
        let b = random_triple(&mut rng);
        let (ga, gb) = (gm_score(&a, hidden), gm_score(&b, hidden));
        if ga == gb {
            continue;
        }
        let (winner, loser) = if ga > gb { (a, b) } else { (b, a) };
        out.push(PreferencePair {
            winner,
            loser,
            annotation_id: format!("pair{:04}", out.len()),
        });
    }
    out
}
