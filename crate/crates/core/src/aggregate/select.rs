use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::MetricTriple;
use crate::error::{Error, Result};

/// Corpus-level scores of one training checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub epoch: f64,
    pub triple: MetricTriple,
    pub gm: f64,
    pub source_path: String,
}

/// Ranking used for checkpoint selection: higher GM, then higher sim,
/// then lower perplexity, then the earlier epoch.
fn rank(a: &TrajectoryPoint, b: &TrajectoryPoint) -> Ordering {
    b.gm.total_cmp(&a.gm)
        .then_with(|| b.triple.sim.total_cmp(&a.triple.sim))
        .then_with(|| a.triple.pp.total_cmp(&b.triple.pp))
        .then_with(|| a.epoch.total_cmp(&b.epoch))
}

/// Index of the best checkpoint. Epochs must be distinct, which makes the
/// choice independent of input order.
pub fn select_checkpoint(points: &[TrajectoryPoint]) -> Result<usize> {
    if points.is_empty() {
        return Err(Error::Invalid("no checkpoints to select from".into()));
    }
    let mut epochs: Vec<f64> = points.iter().map(|p| p.epoch).collect();
    epochs.sort_by(f64::total_cmp);
    if let Some(w) = epochs.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Invalid(format!("epoch {} appears twice in the trajectory", w[0])));
    }
    let best = (0..points.len())
        .min_by(|&i, &j| rank(&points[i], &points[j]))
        .expect("non-empty");
    Ok(best)
}

/// Writes `epoch,acc,sim,pp,gm,selected` rows in epoch order.
pub fn write_trajectory_csv<W: Write>(points: &[TrajectoryPoint], selected: Option<usize>, out: W) -> Result<()> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| points[i].epoch.total_cmp(&points[j].epoch));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "acc", "sim", "pp", "gm", "selected"])?;
    for i in order {
        let p = &points[i];
        w.write_record([
            p.epoch.to_string(),
            p.triple.acc.to_string(),
            p.triple.sim.to_string(),
            p.triple.pp.to_string(),
            p.gm.to_string(),
            u8::from(Some(i) == selected).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Invalid(format!("writing trajectory: {e}")))?;
    Ok(())
}
