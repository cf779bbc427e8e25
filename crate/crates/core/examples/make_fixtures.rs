//! Writes a small synthetic evaluation suite.
//!
//! ```text
//! cargo run -p styleval --example make_fixtures -- fixtures [seed]
//! ```
//!
//! Produces two style corpora, text embeddings, three per-epoch transfer
//! sets with checkpoint sidecars, human-style annotations, preference pairs
//! and aligned BLEU files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use styleval::aggregate::GmParams;
use styleval::synth::{self, CorpusRecipe, TransferRecipe, NEGATIVE_MARKERS, NEUTRAL_WORDS, POSITIVE_MARKERS};
use styleval::text::{CheckpointMeta, Corpus, TransferSet};
use styleval::validation::{HumanAnnotation, Judgment, Preference, Rating, RatingAspect};

const DIM: usize = 16;

fn write(path: PathBuf, text: &str) {
    fs::write(&path, text).unwrap_or_else(|e| panic!("cannot write {}: {e}", path.display()));
}

fn corpus_text(c: &Corpus) -> String {
    c.sentences.iter().map(|s| format!("{s}\n")).collect()
}

fn jsonl<T: serde::Serialize>(items: &[T]) -> String {
    items
        .iter()
        .map(|x| serde_json::to_string(x).unwrap() + "\n")
        .collect()
}

fn annotations(ts: &TransferSet, rng: &mut ChaCha8Rng) -> Vec<HumanAnnotation> {
    let mut out = Vec::new();
    for r in ts.records().iter().take(60) {
        let votes = r
            .transferred
            .tokens()
            .iter()
            .filter_map(|w| synth::marker_style(w))
            .fold([0, 0], |mut v, s| {
                v[s] += 1;
                v
            });
        let choice = if votes[1] > votes[0] { 1 } else { 0 };
        out.push(HumanAnnotation {
            item_id: r.id.clone(),
            judgment: Judgment::StyleChoice(choice),
        });
        let changed = r
            .original
            .tokens()
            .iter()
            .zip(r.transferred.tokens())
            .filter(|(a, b)| a != b)
            .count();
        out.push(HumanAnnotation {
            item_id: r.id.clone(),
            judgment: Judgment::Rating(Rating {
                aspect: RatingAspect::Similarity,
                score: 4 - changed.min(3) as u8,
            }),
        });
        out.push(HumanAnnotation {
            item_id: r.id.clone(),
            judgment: Judgment::Rating(Rating {
                aspect: RatingAspect::Fluency,
                score: rng.random_range(1..=4),
            }),
        });
    }
    let ids: Vec<&str> = ts.records().iter().map(|r| r.id.as_str()).collect();
    for k in 0..30 {
        let (a, b) = (ids[2 * k], ids[2 * k + 1]);
        let (winner, loser) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
        out.push(HumanAnnotation {
            item_id: format!("pair{k:03}"),
            judgment: Judgment::PairwisePreference(Preference {
                winner: winner.to_owned(),
                loser: loser.to_owned(),
            }),
        });
    }
    out
}

pub fn main() {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "fixtures".into()));
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed must be an integer"));
    fs::create_dir_all(&dir).expect("create output directory");
    let path = |name: &str| -> PathBuf { Path::new(&dir).join(name) };

    let recipe = CorpusRecipe {
        sentences_per_style: 500,
        ..Default::default()
    };
    let (x0, x1) = synth::style_corpora(&recipe, seed);
    write(path("negative.txt"), &corpus_text(&x0));
    write(path("positive.txt"), &corpus_text(&x1));

    let emb = synth::embeddings(DIM, seed + 1);
    let mut text = String::new();
    for w in NEUTRAL_WORDS.iter().chain(&NEGATIVE_MARKERS).chain(&POSITIVE_MARKERS) {
        let v = emb.get(w).expect("fixture word");
        text.push_str(w);
        for x in v {
            write!(text, " {x:.5}").unwrap();
        }
        text.push('\n');
    }
    write(path("embeddings.txt"), &text);

    let epochs = [(1.0, 0.3, 0.05), (2.0, 0.9, 0.05), (3.0, 0.7, 0.35)];
    let mut middle = None;
    for (epoch, flip_prob, noise_prob) in epochs {
        let meta = CheckpointMeta {
            model_name: "fixture".into(),
            epoch,
        };
        let ts = synth::transfer_set(
            &x0,
            &x1,
            &TransferRecipe {
                records: 200,
                flip_prob,
                noise_prob,
            },
            Some(meta),
            seed + 10 + epoch as u64,
        );
        ts.write(path(&format!("transfer_epoch{epoch}.jsonl"))).expect("write transfer set");
        if epoch == 2.0 {
            middle = Some(ts);
        }
    }
    let ts = middle.expect("epoch 2");

    let mut rng = ChaCha8Rng::seed_from_u64(seed + 20);
    write(path("annotations.jsonl"), &jsonl(&annotations(&ts, &mut rng)));
    write(
        path("pairs.jsonl"),
        &jsonl(&synth::preference_pairs(300, &GmParams::default(), seed + 30)),
    );
    let lines = |f: fn(&styleval::text::TransferRecord) -> String| -> String {
        ts.records().iter().map(|r| f(r) + "\n").collect()
    };
    write(path("bleu_candidates.txt"), &lines(|r| r.transferred.to_string()));
    write(path("bleu_references.txt"), &lines(|r| r.original.to_string()));
    println!("wrote fixtures to {}", dir.display());
}
