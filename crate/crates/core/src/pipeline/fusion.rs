//! Late fusion of RGB and depth final-layer activations.

use crate::backbone::{argmax, LogitBatch};
use crate::error::{Error, Result};

/// `argmax(alpha·rgb + (1 − alpha)·depth)`, first index on ties.
pub fn fuse_predictions(rgb: &[f64], depth: &[f64], alpha: f64) -> Result<usize> {
    if rgb.len() != depth.len() || rgb.is_empty() {
        return Err(Error::Data(format!(
            "cannot fuse logits of lengths {} and {}",
            rgb.len(),
            depth.len()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    // The endpoints return the unmixed argmax so that a single-modality
    // prediction is reproduced exactly.
    if alpha == 1.0 {
        return Ok(argmax(rgb));
    }
    if alpha == 0.0 {
        return Ok(argmax(depth));
    }
    let fused: Vec<f64> = rgb.iter().zip(depth).map(|(r, d)| alpha * r + (1.0 - alpha) * d).collect();
    Ok(argmax(&fused))
}

pub fn fuse_batch(rgb: &LogitBatch, depth: &LogitBatch, alpha: f64) -> Result<Vec<usize>> {
    if rgb.classes != depth.classes {
        return Err(Error::Data("RGB and depth logits cover different class lists".into()));
    }
    if rgb.rows() != depth.rows() {
        return Err(Error::Data("RGB and depth logits cover different sample counts".into()));
    }
    (0..rgb.rows()).map(|i| fuse_predictions(rgb.row(i), depth.row(i), alpha)).collect()
}

/// Grid value with the highest validation accuracy; the smallest value wins
/// ties.
pub fn cross_validate_alpha(rgb: &LogitBatch, depth: &LogitBatch, labels: &[usize], grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Config("alpha grid is empty".into()));
    }
    if labels.is_empty() || labels.len() != rgb.rows() {
        return Err(Error::Data("validation labels must be non-empty and match the logits".into()));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best = (sorted[0], -1i64);
    for &a in &sorted {
        let preds = fuse_batch(rgb, depth, a)?;
        let correct = preds.iter().zip(labels).filter(|(p, l)| p == l).count() as i64;
        if correct > best.1 {
            best = (a, correct);
        }
    }
    Ok(best.0)
}
