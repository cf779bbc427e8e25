use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{gm_factors, gm_score, GmParams, MetricTriple, PreferencePair};
use crate::error::{Error, Result};
use crate::validation::gm_pairwise_agreement;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub holdout_fraction: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            learning_rate: 1.0,
            max_epochs: 2000,
            seed: 0,
            holdout_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: GmParams,
    pub holdout_agreement: f64,
    pub initial: GmParams,
    /// Epoch of the returned iterate; 0 means the initialization.
    pub best_epoch: usize,
    pub train_size: usize,
    pub holdout_size: usize,
}

/// Subgradient of `gm_score` with respect to `(t1, t2, t3, t4)`.
///
/// Zero when any factor is clamped. For the perplexity factor only the
/// branch selected by the `min` gets a gradient; a tie selects `t3`.
pub fn gm_gradient(m: &MetricTriple, p: &GmParams) -> [f64; 4] {
    let [a, s, f] = gm_factors(m, p);
    if a == 0.0 || s == 0.0 || f == 0.0 {
        return [0.0; 4];
    }
    let g = (a * s * f).cbrt() / 3.0;
    let mut grad = [-g / a, -g / s, 0.0, 0.0];
    if p.t3 - m.pp <= m.pp - p.t4 {
        grad[2] = g / f;
    } else {
        grad[3] = -g / f;
    }
    grad
}

/// Keeps `t3 > t4 + 1` by re-centring the pair with a gap of 2.
fn project(p: &mut GmParams) {
    if p.t3 <= p.t4 + 1.0 {
        let mid = 0.5 * (p.t3 + p.t4);
        p.t3 = mid + 1.0;
        p.t4 = mid - 1.0;
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Nearest-rank percentile of sorted values.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Starting thresholds: `t1 = t2 = 50`, `t3` the 90th percentile of the
/// observed perplexities and `t4` minus their median.
fn initial_params(pairs: &[&PreferencePair]) -> GmParams {
    let mut pps: Vec<f64> = pairs.iter().flat_map(|p| [p.winner.pp, p.loser.pp]).collect();
    pps.sort_by(f64::total_cmp);
    let mut p = GmParams {
        t1: 50.0,
        t2: 50.0,
        t3: percentile(&pps, 0.9),
        t4: -median(&pps),
    };
    project(&mut p);
    p
}

fn any_positive(pairs: &[PreferencePair], p: &GmParams) -> bool {
    pairs
        .iter()
        .any(|x| gm_score(&x.winner, p) > 0.0 || gm_score(&x.loser, p) > 0.0)
}

/// Fits GM thresholds to pairwise preferences by full-batch subgradient
/// descent on the mean hinge loss.
///
/// Pairs are split with a seeded shuffle; the last `holdout_fraction` is
/// held out, and the iterate (initialization included) with the best
/// held-out agreement is returned, earliest first on ties.
pub fn fit_gm_params(pairs: &[PreferencePair], cfg: &FitConfig) -> Result<FitResult> {
    if pairs.len() < 2 {
        return Err(Error::Invalid("threshold fitting needs at least two preference pairs".into()));
    }
    if !(cfg.learning_rate >= 0.0 && cfg.learning_rate.is_finite()) {
        return Err(Error::Invalid(format!("learning rate must be nonnegative, got {}", cfg.learning_rate)));
    }
    if !(cfg.holdout_fraction > 0.0 && cfg.holdout_fraction < 1.0) {
        return Err(Error::Invalid(format!(
            "holdout fraction must be in (0, 1), got {}",
            cfg.holdout_fraction
        )));
    }
    if let Some(bad) = pairs.iter().find(|p| p.winner.granularity != p.loser.granularity) {
        return Err(Error::Invalid(format!(
            "pair {}: winner and loser have different granularities",
            bad.annotation_id
        )));
    }

    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let holdout_size = ((pairs.len() as f64 * cfg.holdout_fraction).round() as usize).clamp(1, pairs.len() - 1);
    let (train_idx, holdout_idx) = order.split_at(pairs.len() - holdout_size);
    let train: Vec<&PreferencePair> = train_idx.iter().map(|&i| &pairs[i]).collect();
    let holdout: Vec<PreferencePair> = holdout_idx.iter().map(|&i| pairs[i].clone()).collect();

    let initial = initial_params(&train);
    let mut params = initial;
    let mut best = (params, gm_pairwise_agreement(&params, &holdout)?, 0usize);
    let mut seen_positive = any_positive(pairs, &params);

    let scale = 1.0 / train.len() as f64;
    for epoch in 1..=cfg.max_epochs {
        let mut grad = [0.0; 4];
        for pair in &train {
            let margin = 1.0 - gm_score(&pair.winner, &params) + gm_score(&pair.loser, &params);
            if margin <= 0.0 {
                continue;
            }
            let gw = gm_gradient(&pair.winner, &params);
            let gl = gm_gradient(&pair.loser, &params);
            for k in 0..4 {
                grad[k] += scale * (gl[k] - gw[k]);
            }
        }
        if grad.iter().all(|&g| g == 0.0) {
            log::debug!("threshold fit: zero subgradient at epoch {epoch}");
            break;
        }
        let mut t = params.as_array();
        for k in 0..4 {
            t[k] -= cfg.learning_rate * grad[k];
        }
        params = GmParams::from_array(t);
        project(&mut params);
        seen_positive |= any_positive(pairs, &params);

        let agreement = gm_pairwise_agreement(&params, &holdout)?;
        if agreement > best.1 {
            best = (params, agreement, epoch);
        }
    }
    if !seen_positive {
        return Err(Error::FitFailure(
            "every pair scores GM = 0 under every visited threshold setting".into(),
        ));
    }
    let (params, holdout_agreement, best_epoch) = best;
    Ok(FitResult {
        params,
        holdout_agreement,
        initial,
        best_epoch,
        train_size: train.len(),
        holdout_size,
    })
}
