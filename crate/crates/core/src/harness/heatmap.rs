use crate::adaptive::{bm_decision, incta_decision, TrialPath};
use crate::pipeline::FittedTest;
use crate::scenario::{Summary, Truth};
use crate::stats::draw_binomial;
use crate::{Error, RandomStream, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapCell {
    /// Stage-1 responders on treatment.
    pub x_t1: u32,
    /// Stage-1 responders on placebo.
    pub x_p1: u32,
    pub n2: u32,
    pub dnn: f64,
    pub incta: f64,
    pub bm: Option<f64>,
}

/// Conditional rejection probabilities over every stage-1 outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub n1: u32,
    pub truth: Truth,
    pub reps: usize,
    /// Row-major over `x_t1`, then `x_p1`.
    pub cells: Vec<HeatmapCell>,
}

impl Heatmap {
    pub fn cell(&self, x_t1: u32, x_p1: u32) -> &HeatmapCell {
        &self.cells[(x_t1 * (self.n1 + 1) + x_p1) as usize]
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for c in &self.cells {
            w.serialize(c)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Estimates P(reject | x_t1, x_p1) for each of the (n1 + 1)² stage-1
/// cells by simulating `reps` second stages under `truth`. BM is included
/// when a level is given.
pub fn heatmap_export(test: &FittedTest, truth: Truth, reps: usize, bm_level: Option<f64>, stream: &RandomStream) -> Result<Heatmap> {
    let sim = test.simulator();
    let design = sim.design().ok_or_else(|| Error::Usage("heatmaps need an adaptive scenario".into()))?;
    let Truth::Binary { pi_p, pi_t } = truth else {
        return Err(Error::Usage("heatmaps need a binary law".into()));
    };
    truth.validate()?;
    if reps == 0 {
        return Err(Error::Usage("heatmaps need at least one replicate per cell".into()));
    }
    let n1 = design.params().n1;
    let alpha = sim.spec().alpha;
    let side = n1 + 1;
    let cells = (0..side * side)
        .into_par_iter()
        .map(|idx| {
            let (x_t1, x_p1) = (idx / side, idx % side);
            let n2 = design.n2_for(x_p1, x_t1);
            let mut rng = stream.substream(idx as u64).rng();
            let paths: Vec<TrialPath> = (0..reps)
                .map(|_| {
                    let x_p2 = draw_binomial(&mut rng, n2, pi_p);
                    let x_t2 = draw_binomial(&mut rng, n2, pi_t);
                    TrialPath { x_p1, x_t1, n2, x_p2, x_t2 }
                })
                .collect();
            let summaries: Vec<Summary> = paths.iter().map(|p| Summary::Trial(*p)).collect();
            let dnn = test.decide_batch(&summaries)?.iter().filter(|d| d.reject).count();
            let mut incta = 0;
            let mut bm = 0;
            for p in &paths {
                incta += incta_decision(p, n1, alpha)? as usize;
                if let Some(level) = bm_level {
                    bm += bm_decision(p, n1, level)? as usize;
                }
            }
            let r = reps as f64;
            Ok(HeatmapCell { x_t1, x_p1, n2, dnn: dnn as f64 / r, incta: incta as f64 / r, bm: bm_level.map(|_| bm as f64 / r) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Heatmap { n1, truth, reps, cells })
}
