use proptest::prelude::*;
use styleval::aggregate::{fit_gm_params, gm_score, FitConfig, GmParams, Granularity, MetricTriple};
use styleval::synth::preference_pairs;
use styleval::validation::gm_pairwise_agreement;

fn t(acc: f64, sim: f64, pp: f64) -> MetricTriple {
    MetricTriple {
        acc,
        sim,
        pp,
        granularity: Granularity::Corpus,
    }
}

#[test]
fn monotone_in_acc_and_sim() {
    let p = GmParams::default();
    let grid: Vec<f64> = (0..50).map(|i| f64::from(i) / 49.0).collect();
    for pp in [5.0, 30.0, 60.0, 96.0] {
        for (i, &a) in grid.iter().enumerate() {
            for (j, &s) in grid.iter().enumerate() {
                let g = gm_score(&t(a, s, pp), &p);
                if i + 1 < grid.len() {
                    assert!(gm_score(&t(grid[i + 1], s, pp), &p) >= g);
                }
                if j + 1 < grid.len() {
                    assert!(gm_score(&t(a, grid[j + 1], pp), &p) >= g);
                }
            }
        }
    }
}

#[test]
fn unimodal_in_pp_with_peak_at_thirty() {
    let p = GmParams::default();
    let pps: Vec<f64> = (0..=2000).map(|i| 1.0 + f64::from(i) * 0.05).collect();
    let scores: Vec<f64> = pps.iter().map(|&pp| gm_score(&t(0.9, 0.9, pp), &p)).collect();
    let peak = scores
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| pps[i])
        .unwrap();
    assert!((peak - 30.0).abs() < 1e-9, "peak at {peak}");
    let k = pps.iter().position(|&x| (x - 30.0).abs() < 1e-9).unwrap();
    assert!(scores[..=k].windows(2).all(|w| w[1] >= w[0]));
    assert!(scores[k..].windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(gm_score(&t(0.9, 0.9, 97.0), &p), 0.0);
    assert!(gm_score(&t(0.9, 0.9, 96.9), &p) > 0.0);
}

proptest! {
    #[test]
    fn zero_iff_a_factor_is_clamped(acc in 0.0f64..=1.0, sim in 0.0f64..=1.0, pp in 1.0f64..200.0) {
        let p = GmParams::default();
        let clamped = 100.0 * acc <= p.t1 || 100.0 * sim <= p.t2 || pp >= p.t3 || pp <= p.t4;
        prop_assert_eq!(gm_score(&t(acc, sim, pp), &p) == 0.0, clamped);
    }

    #[test]
    fn pp_factor_symmetric_about_midpoint(d in 0.0f64..60.0) {
        let p = GmParams::default();
        let lo = gm_score(&t(0.9, 0.9, 30.0 - d.min(29.0)), &p);
        let hi = gm_score(&t(0.9, 0.9, 30.0 + d.min(29.0)), &p);
        prop_assert!((lo - hi).abs() < 1e-9);
    }
}

#[test]
fn fit_recovers_hidden_ranking() {
    let hidden = GmParams::default();
    let pairs = preference_pairs(500, &hidden, 17);
    let fit = fit_gm_params(&pairs, &FitConfig::default()).unwrap();
    assert_eq!(fit.holdout_size, 100);
    assert!(fit.holdout_agreement >= 0.95, "holdout agreement {}", fit.holdout_agreement);
    assert!(fit.params.t3 > fit.params.t4);
    // agreement over all pairs should be close as well
    assert!(gm_pairwise_agreement(&fit.params, &pairs).unwrap() >= 0.9);
}

#[test]
fn zero_learning_rate_returns_initialization() {
    let pairs = preference_pairs(500, &GmParams::default(), 17);
    let cfg = FitConfig {
        learning_rate: 0.0,
        ..Default::default()
    };
    let fit = fit_gm_params(&pairs, &cfg).unwrap();
    assert_eq!(fit.params.as_array().map(f64::to_bits), fit.initial.as_array().map(f64::to_bits));
    assert_eq!(fit.best_epoch, 0);
}

#[test]
fn fit_is_seed_deterministic() {
    let pairs = preference_pairs(200, &GmParams::default(), 5);
    let cfg = FitConfig {
        max_epochs: 300,
        seed: 9,
        ..Default::default()
    };
    assert_eq!(fit_gm_params(&pairs, &cfg).unwrap(), fit_gm_params(&pairs, &cfg).unwrap());
}
