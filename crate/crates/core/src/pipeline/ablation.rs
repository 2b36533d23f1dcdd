//! Width × depth grid over the colorizer: phase 1 then phase 2 per cell.

use std::fmt::Write as _;

use super::config::{Phase, TrainConfig};
use super::dataset::{colorize_set, PreparedSplits};
use super::report::EvalReport;
use super::train::{train_deco_phase1_prepared, train_head_prepared};
use crate::backbone::Backbone;
use crate::deco::{build_deco, DecoConfig};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct AblationCell {
    pub blocks: usize,
    pub filters: usize,
    pub phase1_val_accuracy: Option<f64>,
    pub report: EvalReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub blocks: Vec<usize>,
    pub filters: Vec<usize>,
    /// Row-major over `blocks × filters`.
    pub cells: Vec<AblationCell>,
}

impl AblationTable {
    /// Blocks as rows, filters as columns, test accuracy in percent.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("blocks");
        for f in &self.filters {
            write!(out, ",{f} filters").unwrap();
        }
        out.push('\n');
        for (r, b) in self.blocks.iter().enumerate() {
            write!(out, "{b} blocks").unwrap();
            for c in 0..self.filters.len() {
                let acc = self.cells[r * self.filters.len() + c].report.accuracy;
                write!(out, ",{:.2}", 100.0 * acc).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Seed of one cell, independent of which other cells run.
pub fn cell_seed(seed: u64, blocks: usize, filters: usize) -> u64 {
    seed ^ ((blocks as u64) << 32) ^ (filters as u64).wrapping_mul(0x9e37_79b9)
}

pub struct AblationInputs<'a> {
    pub backbone: &'a Backbone,
    pub deco: &'a DecoConfig,
    /// Single-channel reference data for phase 1.
    pub reference: &'a PreparedSplits,
    /// Single-channel testbed data for phase 2.
    pub testbed: &'a PreparedSplits,
    pub phase1: &'a TrainConfig,
    pub phase2: &'a TrainConfig,
    pub snapshot: &'a str,
}

pub fn ablation_cell(inp: &AblationInputs, blocks: usize, filters: usize) -> Result<AblationCell> {
    let wrap = |e: Error| Error::Training(format!("ablation cell {blocks} blocks x {filters} filters: {e}"));
    let seed = cell_seed(inp.phase1.seed, blocks, filters);
    let cfg = DecoConfig {
        num_blocks: blocks,
        num_filters: filters,
        ..inp.deco.clone()
    };
    let deco = build_deco(&cfg, seed).map_err(wrap)?;
    let mut backbone = inp.backbone.duplicate().map_err(wrap)?;
    backbone.freeze_trunk();
    let p1 = TrainConfig { seed, ..inp.phase1.clone() };
    let p2 = TrainConfig { seed, ..inp.phase2.clone() };
    debug_assert_eq!((p1.phase, p2.phase), (Phase::Phase1, Phase::Phase2));
    let phase1 = train_deco_phase1_prepared(&deco, &mut backbone, inp.reference, &p1).map_err(wrap)?;
    deco.set_frozen(true);
    let colored = PreparedSplits {
        classes: inp.testbed.classes.clone(),
        train: colorize_set(&deco, &inp.testbed.train).map_err(wrap)?,
        val: colorize_set(&deco, &inp.testbed.val).map_err(wrap)?,
        test: colorize_set(&deco, &inp.testbed.test).map_err(wrap)?,
    };
    let out = train_head_prepared("deco", &mut backbone, &colored, &p2, inp.snapshot).map_err(wrap)?;
    Ok(AblationCell {
        blocks,
        filters,
        phase1_val_accuracy: phase1.val_accuracy,
        report: out.report,
    })
}

pub fn ablation_grid(inp: &AblationInputs, blocks: &[usize], filters: &[usize]) -> Result<AblationTable> {
    if blocks.is_empty() || filters.is_empty() {
        return Err(Error::Config("ablation grid needs at least one block count and one filter count".into()));
    }
    let mut cells = Vec::with_capacity(blocks.len() * filters.len());
    for &b in blocks {
        for &f in filters {
            cells.push(ablation_cell(inp, b, f)?);
        }
    }
    Ok(AblationTable {
        blocks: blocks.to_vec(),
        filters: filters.to_vec(),
        cells,
    })
}
