use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use styleval::classifier::{train_classifier, ClassifierConfig, Example, LinearParams, StyleClassifier};
use styleval::synth::{style_corpora, CorpusRecipe};

fn random_problem(seed: u64, n_features: usize, batch: usize) -> (LinearParams, Vec<Example>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = LinearParams::zeros(n_features);
    for w in p.weights.iter_mut().flatten() {
        *w = rng.random_range(-1.0..1.0);
    }
    p.bias = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
    let examples = (0..batch)
        .map(|_| {
            let k = rng.random_range(1..6);
            let features = (0..k)
                .map(|_| (rng.random_range(0..n_features), f64::from(rng.random_range(1u8..3))))
                .collect();
            Example {
                features,
                label: rng.random_range(0..2),
            }
        })
        .collect();
    (p, examples)
}

fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-8 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

#[test]
fn gradient_matches_central_differences() {
    let h = 1e-5;
    for seed in 0..5 {
        let (p, batch) = random_problem(seed, 12, 9);
        let l2 = 0.01 * seed as f64;
        let g = p.gradient(&batch, l2);
        let mut worst: f64 = 0.0;
        for k in 0..2 {
            for f in 0..p.n_features() {
                let (mut plus, mut minus) = (p.clone(), p.clone());
                plus.weights[k][f] += h;
                minus.weights[k][f] -= h;
                let fd = (plus.loss(&batch, l2) - minus.loss(&batch, l2)) / (2.0 * h);
                worst = worst.max(relative_error(g.weights[k][f], fd));
            }
            let (mut plus, mut minus) = (p.clone(), p.clone());
            plus.bias[k] += h;
            minus.bias[k] -= h;
            let fd = (plus.loss(&batch, l2) - minus.loss(&batch, l2)) / (2.0 * h);
            worst = worst.max(relative_error(g.bias[k], fd));
        }
        assert!(worst <= 1e-4, "seed {seed}: relative error {worst}");
    }
}

proptest! {
    #[test]
    fn probabilities_form_a_distribution(seed in any::<u64>()) {
        let (p, batch) = random_problem(seed, 8, 4);
        for e in &batch {
            let q = p.proba(&e.features);
            prop_assert!(q.iter().all(|&x| (0.0..=1.0).contains(&x)));
            prop_assert!((q[0] + q[1] - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn held_out_accuracy_on_marker_corpora() {
    let recipe = CorpusRecipe {
        sentences_per_style: 5000,
        ..Default::default()
    };
    let (x0, x1) = style_corpora(&recipe, 100);
    let model = train_classifier(&x0, &x1, &ClassifierConfig::default()).unwrap();
    let test_recipe = CorpusRecipe {
        sentences_per_style: 1000,
        ..Default::default()
    };
    let (t0, t1) = style_corpora(&test_recipe, 200);
    let hits = t0
        .sentences
        .iter()
        .map(|s| model.classify(s).label == 0)
        .chain(t1.sentences.iter().map(|s| model.classify(s).label == 1))
        .filter(|&ok| ok)
        .count();
    let acc = hits as f64 / 2000.0;
    assert!(acc >= 0.95, "held-out accuracy {acc}");
    for s in t0.sentences.iter().take(50) {
        let p = model.predict_proba(s);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
    }
}
